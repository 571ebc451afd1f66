//! Tube construction: a first dynamic-programming pass chains per-frame
//! proposals into full-length class-specific paths, a second pass assigns a
//! smoothed per-frame label sequence, and contiguous runs matching the path
//! class become scored, filtered action tubes.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::geom::region_overlap;
use crate::ingest::nms;
use crate::types::{
    ActionPath, ActionTube, LabelSequence, LinkerConfig, RegionProposal, ScoreVector, TubeRegion,
    VideoProposals,
};

/// A pool entry during path search: either a real proposal or the synthetic
/// member standing in for an empty frame.
#[derive(Clone, Copy)]
pub(crate) struct Candidate<'a> {
    pub prop: &'a RegionProposal,
    pub placeholder: bool,
}

/// Association energy of two consecutive members: both class scores plus the
/// weighted overlap. Placeholders overlap nothing, so the pairwise term
/// vanishes when either side is one.
///
/// Summed over a whole path this counts every interior member's score twice,
/// once per transition it takes part in; the objective is used exactly in
/// that form.
pub(crate) fn transition_energy(
    a: &Candidate<'_>,
    b: &Candidate<'_>,
    class_id: usize,
    lambda: f64,
) -> f64 {
    let overlap = if a.placeholder || b.placeholder {
        0.0
    } else {
        region_overlap(a.prop, b.prop)
    };
    a.prop.score(class_id) + b.prop.score(class_id) + lambda * overlap
}

/// Association energy of two real consecutive-frame proposals.
pub fn pair_energy(
    a: &RegionProposal,
    b: &RegionProposal,
    class_id: usize,
    lambda: f64,
) -> Result<f64> {
    if b.frame_index != a.frame_index + 1 {
        return Err(Error::NonConsecutiveFrames(a.frame_index, b.frame_index));
    }
    Ok(a.score(class_id) + b.score(class_id) + lambda * region_overlap(a, b))
}

pub(crate) fn make_placeholders(
    frame_count: usize,
    class_count: usize,
    placeholder_score: f64,
) -> Vec<RegionProposal> {
    (1..=frame_count)
        .map(|t| {
            RegionProposal::new(
                t,
                crate::geom::BoundingBox::new(0, 0, 1, 1).expect("unit box"),
                None,
                ScoreVector::new(vec![placeholder_score; class_count]).expect("finite"),
                None,
            )
            .expect("placeholder is valid")
        })
        .collect()
}

pub(crate) fn candidate_frames<'a>(
    pool: &'a [Vec<RegionProposal>],
    placeholders: &'a [RegionProposal],
) -> Vec<Vec<Candidate<'a>>> {
    pool.iter()
        .enumerate()
        .map(|(t, frame)| {
            if frame.is_empty() {
                vec![Candidate { prop: &placeholders[t], placeholder: true }]
            } else {
                frame
                    .iter()
                    .map(|p| Candidate { prop: p, placeholder: false })
                    .collect()
            }
        })
        .collect()
}

/// Maximises the summed transition energy over one member per frame.
///
/// Returns the per-frame candidate indices and the optimum scaled by `1/T`.
/// Ties resolve to the earliest candidate index frame by frame, scanning
/// frames first to last.
fn best_path_on_frames(
    frames: &[Vec<Candidate<'_>>],
    class_id: usize,
    lambda: f64,
) -> Result<(Vec<usize>, f64)> {
    let t_count = frames.len();
    if t_count == 0 {
        return Err(Error::EmptyVideo);
    }
    if t_count == 1 {
        let frame = &frames[0];
        let mut best = 0;
        for j in 1..frame.len() {
            if frame[j].prop.score(class_id) > frame[best].prop.score(class_id) {
                best = j;
            }
        }
        // A single frame has no transitions; the objective degenerates to the
        // member's own score.
        return Ok((vec![best], frame[best].prop.score(class_id)));
    }

    // suffix[t][j] holds the best energy attainable from member j of frame t
    // through the end of the video.
    let mut suffix: Vec<Vec<f64>> = frames.iter().map(|f| vec![0.0; f.len()]).collect();
    for t in (0..t_count - 1).rev() {
        for j in 0..frames[t].len() {
            let mut best = f64::NEG_INFINITY;
            for k in 0..frames[t + 1].len() {
                let v = transition_energy(&frames[t][j], &frames[t + 1][k], class_id, lambda)
                    + suffix[t + 1][k];
                if v > best {
                    best = v;
                }
            }
            suffix[t][j] = best;
        }
    }

    let mut indices = Vec::with_capacity(t_count);
    let mut first = 0;
    for j in 1..frames[0].len() {
        if suffix[0][j] > suffix[0][first] {
            first = j;
        }
    }
    let total = suffix[0][first];
    indices.push(first);
    for t in 0..t_count - 1 {
        let cur = indices[t];
        let mut arg = 0;
        let mut best = f64::NEG_INFINITY;
        for k in 0..frames[t + 1].len() {
            let v = transition_energy(&frames[t][cur], &frames[t + 1][k], class_id, lambda)
                + suffix[t + 1][k];
            if v > best {
                best = v;
                arg = k;
            }
        }
        indices.push(arg);
    }
    Ok((indices, total / t_count as f64))
}

fn path_from_selection(
    frames: &[Vec<Candidate<'_>>],
    indices: &[usize],
    class_id: usize,
    energy: f64,
) -> ActionPath {
    let members: Vec<RegionProposal> = indices
        .iter()
        .enumerate()
        .map(|(t, &j)| frames[t][j].prop.clone())
        .collect();
    let placeholder_flags: Vec<bool> = indices
        .iter()
        .enumerate()
        .map(|(t, &j)| frames[t][j].placeholder)
        .collect();
    ActionPath {
        class_id,
        members,
        placeholder_flags,
        energy,
    }
}

/// Best full-length path for one class. Frames with no proposals are padded
/// with a zero-score placeholder member so the chain stays hole-free.
pub fn best_path(video: &VideoProposals, class_id: usize, lambda: f64) -> Result<ActionPath> {
    let placeholders = make_placeholders(video.frame_count(), video.class_count(), 0.0);
    let frames = candidate_frames(video.frames(), &placeholders);
    let (indices, energy) = best_path_on_frames(&frames, class_id, lambda)?;
    Ok(path_from_selection(&frames, &indices, class_id, energy))
}

pub(crate) fn extract_paths_from_pool(
    mut pool: Vec<Vec<RegionProposal>>,
    class_count: usize,
    class_id: usize,
    lambda: f64,
    max_paths: usize,
    placeholder_score: f64,
) -> Result<Vec<ActionPath>> {
    let t_count = pool.len();
    let mut out = Vec::new();
    if t_count == 0 || pool.iter().all(Vec::is_empty) {
        return Ok(out);
    }
    let placeholders = make_placeholders(t_count, class_count, placeholder_score);
    loop {
        let (path, indices) = {
            let frames = candidate_frames(&pool, &placeholders);
            let (indices, energy) = best_path_on_frames(&frames, class_id, lambda)?;
            (path_from_selection(&frames, &indices, class_id, energy), indices)
        };
        out.push(path);
        for (t, &j) in indices.iter().enumerate() {
            if !pool[t].is_empty() {
                pool[t].remove(j);
            }
        }
        if out.len() >= max_paths || pool.iter().any(Vec::is_empty) {
            return Ok(out);
        }
    }
}

/// Repeatedly extracts the best path, deleting its real members from the pool
/// each round, until `max_paths` paths exist or some frame runs out of real
/// proposals. Returned energies are non-increasing.
pub fn extract_paths(
    video: &VideoProposals,
    class_id: usize,
    lambda: f64,
    max_paths: usize,
) -> Result<Vec<ActionPath>> {
    if max_paths < 1 {
        return Err(Error::Invalid("max_paths must be >= 1".into()));
    }
    extract_paths_from_pool(
        video.frames().to_vec(),
        video.class_count(),
        class_id,
        lambda,
        max_paths,
        0.0,
    )
}

/// Label-transition cost: free to stay, `alpha` to switch.
pub fn smoothness_potential(c1: usize, c2: usize, alpha: f64) -> f64 {
    if c1 == c2 {
        0.0
    } else {
        alpha
    }
}

/// The labelling recursion table: `class_count x (frame_count + 1)` values
/// with column 0 all zero, plus the arg-max predecessor class per cell.
#[derive(Debug, Clone)]
pub struct LabelDPMatrix {
    class_count: usize,
    frame_count: usize,
    values: Vec<f64>,
    backpointers: Vec<usize>,
}

impl LabelDPMatrix {
    /// Fills the table for one path. Ties prefer keeping the current label,
    /// then the smaller class id.
    pub fn build(path: &ActionPath, class_count: usize, alpha: f64) -> Self {
        let frame_count = path.members.len();
        let columns = frame_count + 1;
        let mut values = vec![0.0; class_count * columns];
        let mut backpointers = vec![0usize; class_count * frame_count];
        for t in 1..=frame_count {
            let member = &path.members[t - 1];
            for c in 0..class_count {
                let mut best_prev = c;
                let mut best_val = values[c * columns + (t - 1)];
                for cp in 0..class_count {
                    if cp == c {
                        continue;
                    }
                    let v = values[cp * columns + (t - 1)] - smoothness_potential(cp, c, alpha);
                    if v > best_val {
                        best_val = v;
                        best_prev = cp;
                    }
                }
                values[c * columns + t] = member.score(c) + best_val;
                backpointers[c * frame_count + (t - 1)] = best_prev;
            }
        }
        Self {
            class_count,
            frame_count,
            values,
            backpointers,
        }
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    /// Table value at `(class_id, column)`; column 0 is the initialisation.
    pub fn value(&self, class_id: usize, column: usize) -> f64 {
        self.values[class_id * (self.frame_count + 1) + column]
    }

    /// Arg-max predecessor class feeding `(class_id, frame)`; frame is 1-based.
    pub fn backpointer(&self, class_id: usize, frame: usize) -> usize {
        self.backpointers[class_id * self.frame_count + (frame - 1)]
    }

    /// Recovers the optimal labelling from the maximum of the last column,
    /// breaking final-column ties toward the smaller class id.
    pub fn backtrack(&self) -> LabelSequence {
        if self.frame_count == 0 {
            return LabelSequence(Vec::new());
        }
        let mut cur = 0;
        for c in 1..self.class_count {
            if self.value(c, self.frame_count) > self.value(cur, self.frame_count) {
                cur = c;
            }
        }
        let mut labels = vec![0usize; self.frame_count];
        labels[self.frame_count - 1] = cur;
        for t in (2..=self.frame_count).rev() {
            cur = self.backpointer(cur, t);
            labels[t - 2] = cur;
        }
        LabelSequence(labels)
    }
}

/// Optimal smoothed label sequence for a path: maximises the summed member
/// scores of the chosen labels minus `alpha` per label change.
pub fn temporal_label(path: &ActionPath, video: &VideoProposals, alpha: f64) -> LabelSequence {
    LabelDPMatrix::build(path, video.class_count(), alpha).backtrack()
}

/// Objective value a label sequence attains on a path: data term minus
/// smoothness term.
pub fn label_objective(path: &ActionPath, labels: &LabelSequence, alpha: f64) -> f64 {
    let data: f64 = path
        .members
        .iter()
        .zip(&labels.0)
        .map(|(m, &c)| m.score(c))
        .sum();
    let smooth: f64 = labels
        .0
        .windows(2)
        .map(|w| smoothness_potential(w[0], w[1], alpha))
        .sum();
    data - smooth
}

/// Cuts a labelled path into tubes: maximal runs of frames labelled with the
/// path's own class, split additionally at placeholder frames. Two or more
/// runs become distinct tube instances.
pub fn extract_tubes(path: &ActionPath, labels: &LabelSequence) -> Result<Vec<ActionTube>> {
    if labels.len() != path.members.len() {
        return Err(Error::Dimension {
            expected: path.members.len(),
            actual: labels.len(),
        });
    }
    let mut tubes = Vec::new();
    let mut run_start: Option<usize> = None;
    for t in 0..=path.members.len() {
        let in_run = t < path.members.len()
            && labels.0[t] == path.class_id
            && !path.placeholder_flags[t];
        match (run_start, in_run) {
            (None, true) => run_start = Some(t),
            (Some(start), false) => {
                let members: Vec<TubeRegion> = path.members[start..t]
                    .iter()
                    .map(|m| TubeRegion {
                        bbox: m.bbox,
                        mask: m.mask.clone(),
                        class_score: m.score(path.class_id),
                    })
                    .collect();
                tubes.push(ActionTube::new(path.class_id, start + 1, t, members, 0.0)?);
                run_start = None;
            }
            _ => {}
        }
    }
    Ok(tubes)
}

/// Global tube score: mean of the `top_k` largest member scores (all of them
/// when the tube is shorter).
pub fn tube_score(tube: &ActionTube, top_k: usize) -> f64 {
    let mut scores: Vec<f64> = tube.members.iter().map(|m| m.class_score).collect();
    scores.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let k = top_k.max(1).min(scores.len());
    scores[..k].iter().sum::<f64>() / k as f64
}

/// Drops tubes with a negative global score, shorter than `delta` frames, or
/// with average area below the class threshold `class_areas[c] / tau`.
/// Average area is mean member width times mean member height. Classes with
/// no area entry skip the area test.
pub fn filter_tubes(tubes: Vec<ActionTube>, config: &LinkerConfig) -> Vec<ActionTube> {
    let mut warned: BTreeSet<usize> = BTreeSet::new();
    tubes
        .into_iter()
        .filter(|tube| {
            if tube.global_score < 0.0 {
                return false;
            }
            if tube.frame_count() < config.delta {
                return false;
            }
            match config.class_areas.get(&tube.class_id) {
                Some(&gamma) => {
                    let n = tube.members.len() as f64;
                    let mean_w: f64 =
                        tube.members.iter().map(|m| f64::from(m.bbox.width())).sum::<f64>() / n;
                    let mean_h: f64 =
                        tube.members.iter().map(|m| f64::from(m.bbox.height())).sum::<f64>() / n;
                    mean_w * mean_h >= gamma / config.tau
                }
                None => {
                    if !config.class_areas.is_empty() && warned.insert(tube.class_id) {
                        log::warn!(
                            "class {} has no mean-area entry; skipping area filter",
                            tube.class_id
                        );
                    }
                    true
                }
            }
        })
        .collect()
}

/// Full per-video pipeline: for every class, suppress overlapping proposals,
/// extract paths, label them, cut and score tubes, and filter. The combined
/// result is sorted by descending global score.
pub fn link_video(video: &VideoProposals, config: &LinkerConfig) -> Result<Vec<ActionTube>> {
    config.validate()?;
    let mut out = Vec::new();
    for class_id in 0..video.class_count() {
        let pool: Vec<Vec<RegionProposal>> = video
            .frames()
            .iter()
            .map(|frame| nms(frame, class_id, config.nms_iou))
            .collect();
        let paths = extract_paths_from_pool(
            pool,
            video.class_count(),
            class_id,
            config.lambda,
            config.max_paths,
            config.placeholder_score,
        )?;
        for path in paths {
            let labels = temporal_label(&path, video, config.alpha);
            let mut tubes = extract_tubes(&path, &labels)?;
            for tube in &mut tubes {
                tube.global_score = tube_score(tube, config.top_k_score);
            }
            out.extend(filter_tubes(tubes, config));
        }
    }
    out.sort_by(|a, b| {
        b.global_score
            .partial_cmp(&a.global_score)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(out)
}
