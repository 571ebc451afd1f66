//! Detection evaluation: tube-to-ground-truth assignment, four-threshold
//! acceptance, precision/recall/F1, threshold sweeps and integrated scores.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::region_pixel_stats;
use crate::types::{ActionTube, GroundTruthTube};

/// Acceptance thresholds for a matched pair, plus the sweep parameters used
/// by the integrated scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalThresholds {
    /// Spatial pixel-wise recall threshold.
    pub t_sr: f64,
    /// Temporal frame-wise recall threshold.
    pub t_tr: f64,
    /// Spatial pixel-wise precision threshold.
    pub t_sp: f64,
    /// Temporal frame-wise precision threshold.
    pub t_tp: f64,
    /// Value pinning the non-swept thresholds during integration.
    pub eta: f64,
    /// Sweep resolution; must divide 1 evenly.
    pub grid_step: f64,
}

impl Default for EvalThresholds {
    fn default() -> Self {
        Self {
            t_sr: 0.1,
            t_tr: 0.1,
            t_sp: 0.1,
            t_tp: 0.1,
            eta: 0.1,
            grid_step: 0.1,
        }
    }
}

impl EvalThresholds {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("t_sr", self.t_sr),
            ("t_tr", self.t_tr),
            ("t_sp", self.t_sp),
            ("t_tp", self.t_tp),
            ("eta", self.eta),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Invalid(format!("{name} = {v} outside [0,1]")));
            }
        }
        sweep_points(self.grid_step).map(|_| ())
    }

    /// All four acceptance thresholds set to the same value.
    pub fn uniform(value: f64) -> Self {
        Self {
            t_sr: value,
            t_tr: value,
            t_sp: value,
            t_tp: value,
            ..Self::default()
        }
    }

    /// One axis at `value`, the other three pinned at `eta`.
    pub fn swept(axis: SweepAxis, value: f64, eta: f64) -> Self {
        let mut th = Self {
            t_sr: eta,
            t_tr: eta,
            t_sp: eta,
            t_tp: eta,
            ..Self::default()
        };
        match axis {
            SweepAxis::SpatialRecall => th.t_sr = value,
            SweepAxis::TemporalRecall => th.t_tr = value,
            SweepAxis::SpatialPrecision => th.t_sp = value,
            SweepAxis::TemporalPrecision => th.t_tp = value,
        }
        th
    }
}

/// The threshold varied during a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepAxis {
    SpatialRecall,
    SpatialPrecision,
    TemporalRecall,
    TemporalPrecision,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 4] = [
        SweepAxis::SpatialRecall,
        SweepAxis::SpatialPrecision,
        SweepAxis::TemporalRecall,
        SweepAxis::TemporalPrecision,
    ];

    /// Short column label used in emitted CSV files.
    pub fn tag(&self) -> &'static str {
        match self {
            SweepAxis::SpatialRecall => "sr",
            SweepAxis::SpatialPrecision => "sp",
            SweepAxis::TemporalRecall => "tr",
            SweepAxis::TemporalPrecision => "tp",
        }
    }

    pub fn parse(s: &str) -> Option<SweepAxis> {
        match s {
            "sr" => Some(SweepAxis::SpatialRecall),
            "sp" => Some(SweepAxis::SpatialPrecision),
            "tr" => Some(SweepAxis::TemporalRecall),
            "tp" => Some(SweepAxis::TemporalPrecision),
            _ => None,
        }
    }
}

/// Per-pair overlap quantities. All four are zero when the tubes share no
/// frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverlapProfile {
    pub spatial_recall: f64,
    pub spatial_precision: f64,
    pub temporal_recall: f64,
    pub temporal_precision: f64,
}

impl OverlapProfile {
    pub const ZERO: OverlapProfile = OverlapProfile {
        spatial_recall: 0.0,
        spatial_precision: 0.0,
        temporal_recall: 0.0,
        temporal_precision: 0.0,
    };
}

/// Overlap profile of a detection against a ground-truth tube.
///
/// Temporal terms are the shared-frame count over each side's length; spatial
/// terms average, over the shared frames, the fraction of ground-truth
/// (respectively detection) pixels covered by the intersection. Pixels come
/// from masks when both sides carry them on a frame, from boxes otherwise.
pub fn overlap_profile(det: &ActionTube, gt: &GroundTruthTube) -> OverlapProfile {
    let lo = det.t_start.max(gt.t_start);
    let hi = det.t_end.min(gt.t_end);
    if lo > hi {
        return OverlapProfile::ZERO;
    }
    let shared = (hi - lo + 1) as f64;
    let mut recall_sum = 0.0;
    let mut precision_sum = 0.0;
    for t in lo..=hi {
        let d = det.member_at(t).expect("t within det span");
        let g = gt.extent_at(t).expect("t within gt span");
        let (inter, d_area, g_area) = region_pixel_stats(d, g);
        if g_area > 0 {
            recall_sum += inter as f64 / g_area as f64;
        }
        if d_area > 0 {
            precision_sum += inter as f64 / d_area as f64;
        }
    }
    OverlapProfile {
        spatial_recall: recall_sum / shared,
        spatial_precision: precision_sum / shared,
        temporal_recall: shared / gt.frame_count() as f64,
        temporal_precision: shared / det.frame_count() as f64,
    }
}

/// Normalised spatio-temporal overlap: summed per-frame intersection pixels
/// over summed per-frame union pixels, across the union of the frame spans.
pub fn spatio_temporal_iou(det: &ActionTube, gt: &GroundTruthTube) -> f64 {
    let lo = det.t_start.min(gt.t_start);
    let hi = det.t_end.max(gt.t_end);
    let mut inter_total = 0u64;
    let mut union_total = 0u64;
    for t in lo..=hi {
        match (det.member_at(t), gt.extent_at(t)) {
            (Some(d), Some(g)) => {
                let (inter, d_area, g_area) = region_pixel_stats(d, g);
                inter_total += inter;
                union_total += d_area + g_area - inter;
            }
            (Some(d), None) => {
                let (_, d_area, _) = region_pixel_stats(d, d);
                union_total += d_area;
            }
            (None, Some(g)) => {
                let (_, g_area, _) = region_pixel_stats(g, g);
                union_total += g_area;
            }
            (None, None) => {}
        }
    }
    if union_total == 0 {
        return 0.0;
    }
    inter_total as f64 / union_total as f64
}

/// One detection assigned to one ground-truth tube.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchedPair {
    pub det_index: usize,
    pub gt_index: usize,
    pub det_class: usize,
    pub gt_class: usize,
    pub det_score: f64,
    pub st_iou: f64,
    pub profile: OverlapProfile,
}

/// Matching outcome for one video.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TubeMatches {
    pub pairs: Vec<MatchedPair>,
    pub det_count: usize,
    pub gt_count: usize,
}

/// Greedy one-to-one assignment: detections in order of descending global
/// score (ties by input index) each claim their highest-overlap unassigned
/// ground-truth tube, provided the spatio-temporal overlap is positive.
pub fn match_tubes(dets: &[ActionTube], gts: &[GroundTruthTube]) -> TubeMatches {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .global_score
            .partial_cmp(&dets[a].global_score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut taken = vec![false; gts.len()];
    let mut pairs = Vec::new();
    for det_index in order {
        let det = &dets[det_index];
        let mut best_gt = None;
        let mut best_iou = 0.0;
        for (gt_index, gt) in gts.iter().enumerate() {
            if taken[gt_index] {
                continue;
            }
            let iou = spatio_temporal_iou(det, gt);
            if iou > best_iou {
                best_iou = iou;
                best_gt = Some(gt_index);
            }
        }
        if let Some(gt_index) = best_gt {
            taken[gt_index] = true;
            pairs.push(MatchedPair {
                det_index,
                gt_index,
                det_class: det.class_id,
                gt_class: gts[gt_index].class_id,
                det_score: det.global_score,
                st_iou: best_iou,
                profile: overlap_profile(det, &gts[gt_index]),
            });
        }
    }
    pairs.sort_by_key(|p| p.det_index);
    TubeMatches {
        pairs,
        det_count: dets.len(),
        gt_count: gts.len(),
    }
}

/// A matched pair counts as a true positive when the classes agree and every
/// profile component reaches its threshold.
pub fn accept(pair: &MatchedPair, th: &EvalThresholds) -> bool {
    pair.det_class == pair.gt_class
        && pair.profile.spatial_recall >= th.t_sr
        && pair.profile.temporal_recall >= th.t_tr
        && pair.profile.spatial_precision >= th.t_sp
        && pair.profile.temporal_precision >= th.t_tp
}

/// Harmonic mean of recall and precision; 0 when both are 0.
pub fn f1(recall: f64, precision: f64) -> f64 {
    if recall + precision == 0.0 {
        return 0.0;
    }
    2.0 * recall * precision / (recall + precision)
}

/// Counts plus the derived ratios for one threshold setting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchReport {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    /// The matched pairs behind the counts; indices are per source video.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub assignments: Vec<MatchedPair>,
}

impl MatchReport {
    fn from_counts(tp: usize, fp: usize, fn_: usize, assignments: Vec<MatchedPair>) -> Self {
        let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        Self {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            recall,
            precision,
            f1: f1(recall, precision),
            assignments,
        }
    }
}

/// Applies thresholds to an existing matching.
pub fn report_from_matches(matches: &TubeMatches, th: &EvalThresholds) -> MatchReport {
    let tp = matches.pairs.iter().filter(|p| accept(p, th)).count();
    MatchReport::from_counts(
        tp,
        matches.det_count - tp,
        matches.gt_count - tp,
        matches.pairs.clone(),
    )
}

/// Matches and scores one video's detections in one step.
pub fn detection_metrics(
    dets: &[ActionTube],
    gts: &[GroundTruthTube],
    th: &EvalThresholds,
) -> MatchReport {
    report_from_matches(&match_tubes(dets, gts), th)
}

/// Combines per-video reports by summing counts and recomputing ratios.
pub fn merge_reports<'a>(reports: impl IntoIterator<Item = &'a MatchReport>) -> MatchReport {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    let mut assignments = Vec::new();
    for r in reports {
        tp += r.true_positives;
        fp += r.false_positives;
        fn_ += r.false_negatives;
        assignments.extend(r.assignments.iter().cloned());
    }
    MatchReport::from_counts(tp, fp, fn_, assignments)
}

/// One video's detections and annotations, the unit of corpus evaluation.
#[derive(Debug, Clone)]
pub struct VideoSet {
    pub video_id: String,
    pub detections: Vec<ActionTube>,
    pub ground_truth: Vec<GroundTruthTube>,
}

/// Matches every video once; the result can be rescored under any thresholds.
pub fn corpus_matches(videos: &[VideoSet]) -> Vec<TubeMatches> {
    videos
        .iter()
        .map(|v| match_tubes(&v.detections, &v.ground_truth))
        .collect()
}

/// Corpus-level counts from precomputed matches.
pub fn metrics_from_corpus(matches: &[TubeMatches], th: &EvalThresholds) -> MatchReport {
    let reports: Vec<MatchReport> = matches.iter().map(|m| report_from_matches(m, th)).collect();
    merge_reports(&reports)
}

/// Matches and scores a whole corpus at one threshold setting.
pub fn corpus_metrics(videos: &[VideoSet], th: &EvalThresholds) -> MatchReport {
    metrics_from_corpus(&corpus_matches(videos), th)
}

/// Label-only scoring: per video, the multiset of detected class labels is
/// compared against the annotated multiset; localisation is ignored.
pub fn no_localisation_metrics(videos: &[VideoSet]) -> MatchReport {
    let (mut tp, mut det_total, mut gt_total) = (0usize, 0usize, 0usize);
    for v in videos {
        det_total += v.detections.len();
        gt_total += v.ground_truth.len();
        let mut det_counts = std::collections::BTreeMap::new();
        let mut gt_counts = std::collections::BTreeMap::new();
        for d in &v.detections {
            *det_counts.entry(d.class_id).or_insert(0usize) += 1;
        }
        for g in &v.ground_truth {
            *gt_counts.entry(g.class_id).or_insert(0usize) += 1;
        }
        for (class_id, n) in det_counts {
            tp += n.min(gt_counts.get(&class_id).copied().unwrap_or(0));
        }
    }
    MatchReport::from_counts(tp, det_total - tp, gt_total - tp, Vec::new())
}

/// The four axis-swept mean F1 values and their average.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegratedScores {
    pub i_sr: f64,
    pub i_sp: f64,
    pub i_tr: f64,
    pub i_tp: f64,
    pub overall: f64,
}

impl IntegratedScores {
    pub fn new(i_sr: f64, i_sp: f64, i_tr: f64, i_tp: f64) -> Self {
        Self {
            i_sr,
            i_sp,
            i_tr,
            i_tp,
            overall: (i_sr + i_sp + i_tr + i_tp) / 4.0,
        }
    }
}

fn sweep_points(grid_step: f64) -> Result<Vec<f64>> {
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(Error::Invalid(format!("grid_step {grid_step} outside (0,1]")));
    }
    let n = (1.0 / grid_step).round();
    if (n * grid_step - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid(format!(
            "grid_step {grid_step} does not divide 1 evenly"
        )));
    }
    Ok((0..=n as usize)
        .map(|i| (i as f64 * grid_step).min(1.0))
        .collect())
}

/// Mean F1 along one swept axis with the other thresholds pinned at `eta`.
fn integrate_axis(matches: &[TubeMatches], axis: SweepAxis, eta: f64, grid_step: f64) -> Result<f64> {
    let points = sweep_points(grid_step)?;
    let total: f64 = points
        .iter()
        .map(|&v| metrics_from_corpus(matches, &EvalThresholds::swept(axis, v, eta)).f1)
        .sum();
    Ok(total / points.len() as f64)
}

/// Sweeps each threshold axis in turn and averages the four mean F1 values.
pub fn integrated_scores(videos: &[VideoSet], eta: f64, grid_step: f64) -> Result<IntegratedScores> {
    let matches = corpus_matches(videos);
    Ok(IntegratedScores::new(
        integrate_axis(&matches, SweepAxis::SpatialRecall, eta, grid_step)?,
        integrate_axis(&matches, SweepAxis::SpatialPrecision, eta, grid_step)?,
        integrate_axis(&matches, SweepAxis::TemporalRecall, eta, grid_step)?,
        integrate_axis(&matches, SweepAxis::TemporalPrecision, eta, grid_step)?,
    ))
}

/// One row of a performance-versus-threshold curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

/// Recall, precision and F1 along one swept axis, others pinned at `eta`.
pub fn metric_curves(
    videos: &[VideoSet],
    axis: SweepAxis,
    eta: f64,
    grid_step: f64,
) -> Result<Vec<CurvePoint>> {
    let matches = corpus_matches(videos);
    let points = sweep_points(grid_step)?;
    Ok(points
        .into_iter()
        .map(|threshold| {
            let r = metrics_from_corpus(&matches, &EvalThresholds::swept(axis, threshold, eta));
            CurvePoint {
                threshold,
                recall: r.recall,
                precision: r.precision,
                f1: r.f1,
            }
        })
        .collect())
}

/// Per-class counts at one threshold setting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassReport {
    pub class_id: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

/// Splits corpus counts by class: accepted pairs count for their class;
/// rejected or unmatched detections are false positives of the detection's
/// class, missed ground truth false negatives of its class.
pub fn per_class_metrics(
    videos: &[VideoSet],
    th: &EvalThresholds,
    class_count: usize,
) -> Vec<ClassReport> {
    let mut tp = vec![0usize; class_count];
    let mut fp = vec![0usize; class_count];
    let mut fn_ = vec![0usize; class_count];
    for v in videos {
        let matches = match_tubes(&v.detections, &v.ground_truth);
        let mut det_matched = vec![false; v.detections.len()];
        let mut gt_matched = vec![false; v.ground_truth.len()];
        for pair in &matches.pairs {
            if accept(pair, th) {
                tp[pair.det_class] += 1;
                det_matched[pair.det_index] = true;
                gt_matched[pair.gt_index] = true;
            }
        }
        for (i, d) in v.detections.iter().enumerate() {
            if !det_matched[i] {
                fp[d.class_id] += 1;
            }
        }
        for (i, g) in v.ground_truth.iter().enumerate() {
            if !gt_matched[i] {
                fn_[g.class_id] += 1;
            }
        }
    }
    (0..class_count)
        .map(|c| {
            let recall = if tp[c] + fn_[c] == 0 {
                0.0
            } else {
                tp[c] as f64 / (tp[c] + fn_[c]) as f64
            };
            let precision = if tp[c] + fp[c] == 0 {
                0.0
            } else {
                tp[c] as f64 / (tp[c] + fp[c]) as f64
            };
            ClassReport {
                class_id: c,
                true_positives: tp[c],
                false_positives: fp[c],
                false_negatives: fn_[c],
                recall,
                precision,
                f1: f1(recall, precision),
            }
        })
        .collect()
}

/// Confusion counts over matched pairs, localisation ignored:
/// `counts[gt_class][det_class]`.
pub fn confusion_matrix(videos: &[VideoSet], class_count: usize) -> Vec<Vec<u64>> {
    let mut counts = vec![vec![0u64; class_count]; class_count];
    for v in videos {
        for pair in match_tubes(&v.detections, &v.ground_truth).pairs {
            counts[pair.gt_class][pair.det_class] += 1;
        }
    }
    counts
}
