//! Domain types shared by the ingest, linking and evaluation stages.
//!
//! Frame indices are 1-based throughout. Class ids are 0-based indices into a
//! video's `class_names` list.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{BoundingBox, PixelMask, SpatialRegion};

/// One score per class; classifier margins, so unbounded but finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("score vector contains non-finite value".into()));
        }
        Ok(Self(values))
    }

    pub fn zeros(class_count: usize) -> Self {
        Self(vec![0.0; class_count])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, class_id: usize) -> f64 {
        self.0[class_id]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Index of the largest score; ties go to the smaller class id.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.0.iter().enumerate().skip(1) {
            if *v > self.0[best] {
                best = i;
            }
        }
        best
    }
}

/// One frame-level detection hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionProposal {
    /// 1-based frame ordinal.
    pub frame_index: usize,
    pub bbox: BoundingBox,
    pub mask: Option<PixelMask>,
    pub scores: ScoreVector,
    /// Fraction of the frame's flow magnitude inside the region, once known.
    pub actionness: Option<f64>,
}

impl RegionProposal {
    pub fn new(
        frame_index: usize,
        bbox: BoundingBox,
        mask: Option<PixelMask>,
        scores: ScoreVector,
        actionness: Option<f64>,
    ) -> Result<Self> {
        if frame_index == 0 {
            return Err(Error::Invalid("frame indices are 1-based".into()));
        }
        if let Some(m) = &mask {
            if m.bounding_box() != bbox {
                return Err(Error::Invalid(
                    "box must equal the mask's minimum bounding box".into(),
                ));
            }
        }
        if let Some(a) = actionness {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Invalid(format!("actionness {a} outside [0,1]")));
            }
        }
        Ok(Self {
            frame_index,
            bbox,
            mask,
            scores,
            actionness,
        })
    }

    pub fn score(&self, class_id: usize) -> f64 {
        self.scores.get(class_id)
    }
}

impl SpatialRegion for RegionProposal {
    fn bounds(&self) -> BoundingBox {
        self.bbox
    }

    fn mask(&self) -> Option<&PixelMask> {
        self.mask.as_ref()
    }
}

/// All proposals of one video, one (possibly empty) list per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoProposals {
    pub video_id: String,
    pub frame_width: u32,
    pub frame_height: u32,
    pub class_names: Vec<String>,
    frames: Vec<Vec<RegionProposal>>,
}

impl VideoProposals {
    pub fn new(
        video_id: String,
        frame_width: u32,
        frame_height: u32,
        class_names: Vec<String>,
        frames: Vec<Vec<RegionProposal>>,
    ) -> Result<Self> {
        let class_count = class_names.len();
        for (t, frame) in frames.iter().enumerate() {
            for p in frame {
                if p.frame_index != t + 1 {
                    return Err(Error::Invalid(format!(
                        "proposal declares frame {} but sits in frame {}",
                        p.frame_index,
                        t + 1
                    )));
                }
                if p.scores.len() != class_count {
                    return Err(Error::Dimension {
                        expected: class_count,
                        actual: p.scores.len(),
                    });
                }
                if !p.bbox.fits_within(frame_width, frame_height) {
                    return Err(Error::Geometry(format!(
                        "frame {}: box exceeds {}x{} frame",
                        t + 1,
                        frame_width,
                        frame_height
                    )));
                }
                if let Some(m) = &p.mask {
                    if m.width() != frame_width || m.height() != frame_height {
                        return Err(Error::MaskDimensions(
                            frame_width,
                            frame_height,
                            m.width(),
                            m.height(),
                        ));
                    }
                }
            }
        }
        Ok(Self {
            video_id,
            frame_width,
            frame_height,
            class_names,
            frames,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn frames(&self) -> &[Vec<RegionProposal>] {
        &self.frames
    }

    /// Proposals of a 1-based frame index.
    pub fn frame(&self, frame_index: usize) -> &[RegionProposal] {
        &self.frames[frame_index - 1]
    }

    pub fn into_frames(self) -> Vec<Vec<RegionProposal>> {
        self.frames
    }
}

/// Full-length chain of members for one class, one per frame, before
/// temporal trimming. Frames the pool could not fill carry placeholder
/// members flagged in `placeholder_flags`.
#[derive(Debug, Clone)]
pub struct ActionPath {
    pub class_id: usize,
    pub members: Vec<RegionProposal>,
    pub placeholder_flags: Vec<bool>,
    /// Optimised objective value, scaled by 1/T.
    pub energy: f64,
}

impl ActionPath {
    pub fn frame_count(&self) -> usize {
        self.members.len()
    }
}

/// Per-frame class labels assigned to a path, 0-based class ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSequence(pub Vec<usize>);

impl LabelSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of positions where the label differs from its predecessor.
    pub fn change_count(&self) -> usize {
        self.0.windows(2).filter(|w| w[0] != w[1]).count()
    }
}

/// One frame of a finished tube.
#[derive(Debug, Clone, PartialEq)]
pub struct TubeRegion {
    pub bbox: BoundingBox,
    pub mask: Option<PixelMask>,
    /// Score of the tube's class on this member; 0 for tubes read back from
    /// disk, where only the global score survives.
    pub class_score: f64,
}

impl SpatialRegion for TubeRegion {
    fn bounds(&self) -> BoundingBox {
        self.bbox
    }

    fn mask(&self) -> Option<&PixelMask> {
        self.mask.as_ref()
    }
}

/// A temporally contiguous, class-labelled detection spanning
/// `[t_start, t_end]` (1-based, inclusive).
#[derive(Debug, Clone, PartialEq)]
pub struct ActionTube {
    pub class_id: usize,
    pub t_start: usize,
    pub t_end: usize,
    pub members: Vec<TubeRegion>,
    pub global_score: f64,
}

impl ActionTube {
    pub fn new(
        class_id: usize,
        t_start: usize,
        t_end: usize,
        members: Vec<TubeRegion>,
        global_score: f64,
    ) -> Result<Self> {
        if t_start == 0 || t_start > t_end {
            return Err(Error::Invalid(format!(
                "bad tube interval [{t_start}, {t_end}]"
            )));
        }
        if members.len() != t_end - t_start + 1 {
            return Err(Error::Dimension {
                expected: t_end - t_start + 1,
                actual: members.len(),
            });
        }
        Ok(Self {
            class_id,
            t_start,
            t_end,
            members,
            global_score,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.t_end - self.t_start + 1
    }

    /// Member covering a 1-based frame index, if the tube spans it.
    pub fn member_at(&self, frame_index: usize) -> Option<&TubeRegion> {
        if frame_index < self.t_start || frame_index > self.t_end {
            return None;
        }
        Some(&self.members[frame_index - self.t_start])
    }
}

/// Per-frame annotated extent: a box, or a pixel mask for instance
/// segmentation ground truth.
#[derive(Debug, Clone, PartialEq)]
pub enum Extent {
    Box(BoundingBox),
    Mask(PixelMask),
}

impl SpatialRegion for Extent {
    fn bounds(&self) -> BoundingBox {
        match self {
            Extent::Box(b) => *b,
            Extent::Mask(m) => m.bounding_box(),
        }
    }

    fn mask(&self) -> Option<&PixelMask> {
        match self {
            Extent::Box(_) => None,
            Extent::Mask(m) => Some(m),
        }
    }
}

/// Annotated action instance: class plus per-frame spatial extents over
/// `[t_start, t_end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthTube {
    pub class_id: usize,
    pub t_start: usize,
    pub t_end: usize,
    pub extents: Vec<Extent>,
}

impl GroundTruthTube {
    pub fn new(class_id: usize, t_start: usize, t_end: usize, extents: Vec<Extent>) -> Result<Self> {
        if t_start == 0 || t_start > t_end {
            return Err(Error::Invalid(format!(
                "bad ground-truth interval [{t_start}, {t_end}]"
            )));
        }
        if extents.len() != t_end - t_start + 1 {
            return Err(Error::Dimension {
                expected: t_end - t_start + 1,
                actual: extents.len(),
            });
        }
        Ok(Self {
            class_id,
            t_start,
            t_end,
            extents,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.t_end - self.t_start + 1
    }

    pub fn extent_at(&self, frame_index: usize) -> Option<&Extent> {
        if frame_index < self.t_start || frame_index > self.t_end {
            return None;
        }
        Some(&self.extents[frame_index - self.t_start])
    }
}

/// Tunables of the linking pipeline. Defaults follow the values the pipeline
/// was validated with; every field is exposed through the CLI config.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkerConfig {
    /// Weight of the overlap term when chaining consecutive proposals.
    pub lambda: f64,
    /// Cost of a label change between consecutive frames.
    pub alpha: f64,
    /// Maximum number of paths extracted per class.
    pub max_paths: usize,
    /// Minimum tube duration in frames.
    pub delta: usize,
    /// Divisor applied to the per-class mean area when filtering small tubes.
    pub tau: f64,
    /// Per-class mean area in pixels squared; classes without an entry skip
    /// the area filter.
    pub class_areas: BTreeMap<usize, f64>,
    /// Per-class non-maximum suppression overlap threshold.
    pub nms_iou: f64,
    /// Minimum actionness ratio kept when flow data is available.
    pub actionness_threshold: f64,
    /// Tube score is the mean of this many top member scores.
    pub top_k_score: usize,
    /// Score assigned to placeholder members on empty frames.
    pub placeholder_score: f64,
}

impl Default for LinkerConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            alpha: 3.0,
            max_paths: 3,
            delta: 20,
            tau: 2.2,
            class_areas: BTreeMap::new(),
            nms_iou: 0.3,
            actionness_threshold: 0.003,
            top_k_score: 10,
            placeholder_score: 0.0,
        }
    }
}

impl LinkerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(Error::Invalid("lambda must be >= 0".into()));
        }
        if self.alpha < 0.0 || !self.alpha.is_finite() {
            return Err(Error::Invalid("alpha must be >= 0".into()));
        }
        if self.max_paths < 1 {
            return Err(Error::Invalid("max_paths must be >= 1".into()));
        }
        if self.delta < 1 {
            return Err(Error::Invalid("delta must be >= 1".into()));
        }
        if self.tau <= 0.0 || !self.tau.is_finite() {
            return Err(Error::Invalid("tau must be > 0".into()));
        }
        if !(self.nms_iou > 0.0 && self.nms_iou < 1.0) {
            return Err(Error::Invalid("nms_iou must lie in (0,1)".into()));
        }
        if !(0.0..=1.0).contains(&self.actionness_threshold) {
            return Err(Error::Invalid("actionness_threshold must lie in [0,1]".into()));
        }
        if self.top_k_score < 1 {
            return Err(Error::Invalid("top_k_score must be >= 1".into()));
        }
        if !self.placeholder_score.is_finite() {
            return Err(Error::Invalid("placeholder_score must be finite".into()));
        }
        Ok(())
    }
}
