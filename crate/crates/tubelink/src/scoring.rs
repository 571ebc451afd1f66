//! Linear per-class scoring of fused appearance/flow features, and the
//! overlap-based partitioning of proposals into training examples.

use crate::error::{Error, Result};
use crate::geom::region_overlap;
use crate::types::{Extent, RegionProposal, ScoreVector};

/// Dense feature vector; appearance and flow halves after fusion.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("feature vector contains non-finite value".into()));
        }
        Ok(Self(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Scales a vector to unit Euclidean norm; the zero vector passes through
/// unchanged.
pub fn l2_normalize(v: &FeatureVector) -> FeatureVector {
    let norm = v.0.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return v.clone();
    }
    FeatureVector(v.0.iter().map(|x| x / norm).collect())
}

/// Concatenates the L2-normalised appearance and flow halves, each scaled by
/// its weight. Output dimension is the sum of the input dimensions.
pub fn fuse_features(
    appearance: &FeatureVector,
    flow: &FeatureVector,
    w_appearance: f64,
    w_flow: f64,
) -> FeatureVector {
    let mut out = Vec::with_capacity(appearance.len() + flow.len());
    out.extend(l2_normalize(appearance).0.iter().map(|x| x * w_appearance));
    out.extend(l2_normalize(flow).0.iter().map(|x| x * w_flow));
    FeatureVector(out)
}

/// One hyperplane and bias per class over a shared feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    class_names: Vec<String>,
    feature_dim: usize,
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
}

impl LinearModel {
    pub fn new(
        class_names: Vec<String>,
        feature_dim: usize,
        weights: Vec<Vec<f64>>,
        biases: Vec<f64>,
    ) -> Result<Self> {
        let class_count = class_names.len();
        if weights.len() != class_count {
            return Err(Error::Dimension {
                expected: class_count,
                actual: weights.len(),
            });
        }
        if biases.len() != class_count {
            return Err(Error::Dimension {
                expected: class_count,
                actual: biases.len(),
            });
        }
        for w in &weights {
            if w.len() != feature_dim {
                return Err(Error::Dimension {
                    expected: feature_dim,
                    actual: w.len(),
                });
            }
            if w.iter().any(|x| !x.is_finite()) {
                return Err(Error::Invalid("weights contain non-finite value".into()));
            }
        }
        if biases.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("biases contain non-finite value".into()));
        }
        Ok(Self {
            class_names,
            feature_dim,
            weights,
            biases,
        })
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }
}

/// Scores a feature vector against every class: `w_c . x + b_c`.
pub fn linear_score(x: &FeatureVector, model: &LinearModel) -> Result<ScoreVector> {
    if x.len() != model.feature_dim {
        return Err(Error::Dimension {
            expected: model.feature_dim,
            actual: x.len(),
        });
    }
    let values = model
        .weights
        .iter()
        .zip(&model.biases)
        .map(|(w, b)| w.iter().zip(x.as_slice()).map(|(wi, xi)| wi * xi).sum::<f64>() + b)
        .collect();
    ScoreVector::new(values)
}

/// Result of splitting one frame's proposals into classifier examples.
///
/// `positives`, `negatives` and `ignored` index into the input proposal list
/// and are pairwise disjoint; together they cover it. `gt_positives` carries
/// the ground-truth extents themselves, which always train as positives.
#[derive(Debug, Clone, PartialEq)]
pub struct ExamplePartition {
    /// `(proposal index, class id of the best-overlapping ground truth)`.
    pub positives: Vec<(usize, usize)>,
    pub gt_positives: Vec<(Extent, usize)>,
    pub negatives: Vec<usize>,
    pub ignored: Vec<usize>,
}

/// Buckets proposals by their best overlap against the frame's ground truth:
/// strictly above `pos_iou` is a positive (labelled with the arg-max ground
/// truth's class), strictly below `neg_iou` a negative, anything between is
/// ignored.
pub fn partition_examples(
    proposals: &[RegionProposal],
    ground_truth: &[(Extent, usize)],
    pos_iou: f64,
    neg_iou: f64,
) -> Result<ExamplePartition> {
    if pos_iou <= neg_iou {
        return Err(Error::Invalid(format!(
            "pos_iou {pos_iou} must exceed neg_iou {neg_iou}"
        )));
    }
    let mut partition = ExamplePartition {
        positives: Vec::new(),
        gt_positives: ground_truth.to_vec(),
        negatives: Vec::new(),
        ignored: Vec::new(),
    };
    for (i, p) in proposals.iter().enumerate() {
        let mut best = 0.0;
        let mut best_class = None;
        for (extent, class_id) in ground_truth {
            let ov = region_overlap(p, extent);
            if ov > best || best_class.is_none() {
                best = ov;
                best_class = Some(*class_id);
            }
        }
        match best_class {
            Some(class_id) if best > pos_iou => partition.positives.push((i, class_id)),
            _ if best < neg_iou => partition.negatives.push(i),
            _ => partition.ignored.push(i),
        }
    }
    Ok(partition)
}
