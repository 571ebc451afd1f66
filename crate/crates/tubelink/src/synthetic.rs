//! Deterministic scenario generation and brute-force search oracles.
//!
//! Scenarios plant ground-truth tubes with dominant class scores inside a
//! field of low-scoring distractor proposals, so the linking and evaluation
//! stages can be exercised end to end without any trained model. All
//! randomness flows through a self-contained xoshiro256** generator seeded
//! via SplitMix64, so fixtures are bit-reproducible across platforms and
//! easily ported to other languages.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::BoundingBox;
use crate::linker::{candidate_frames, make_placeholders, transition_energy};
use crate::types::{
    ActionPath, Extent, GroundTruthTube, LabelSequence, RegionProposal, ScoreVector,
    VideoProposals,
};

const ORACLE_STATE_LIMIT: u128 = 1_000_000;

/// xoshiro256** with SplitMix64 seeding.
///
/// SplitMix64: state advances by `0x9E3779B97F4A7C15`; each output is mixed
/// with `0xBF58476D1CE4E5B9` and `0x94D049BB133111EB` shifts 30/27/31.
/// xoshiro256**: output is `rotl(s1 * 5, 7) * 9`; the state update xors the
/// lanes, shifts lane 1 left by 17 and rotates lane 3 by 45.
#[derive(Debug, Clone)]
pub struct SeededRng {
    state: [u64; 4],
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let mut next_sm = || {
            sm = sm.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = sm;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^ (z >> 31)
        };
        let state = [next_sm(), next_sm(), next_sm(), next_sm()];
        Self { state }
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `[lo, hi]` (inclusive).
    pub fn uniform_u64(&mut self, lo: u64, hi: u64) -> u64 {
        debug_assert!(lo <= hi);
        lo + self.next_u64() % (hi - lo + 1)
    }

    /// Uniform integer in `[lo, hi]` (inclusive).
    pub fn uniform_i64(&mut self, lo: i64, hi: i64) -> i64 {
        lo + self.uniform_u64(0, (hi - lo) as u64) as i64
    }
}

/// One action instance to plant: a box drifting at `velocity` pixels per
/// frame over `[t_start, t_end]`, whose proposals score `margin` above the
/// noise floor on `class_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTube {
    pub class_id: usize,
    pub t_start: usize,
    pub t_end: usize,
    /// `[x_min, y_min, x_max, y_max]`.
    pub start_box: [u32; 4],
    #[serde(default)]
    pub velocity: (f64, f64),
    pub margin: f64,
}

/// Deterministic scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub video_id: String,
    pub frame_width: u32,
    pub frame_height: u32,
    pub frame_count: usize,
    pub class_count: usize,
    pub tubes: Vec<PlantedTube>,
    /// Low-scoring clutter proposals added to every frame.
    #[serde(default)]
    pub distractors_per_frame: usize,
    /// Amplitude of the uniform score noise on planted proposals.
    #[serde(default)]
    pub score_noise: f64,
    /// Maximum per-axis translation of planted boxes, in pixels.
    #[serde(default)]
    pub box_jitter: u32,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.frame_width == 0 || self.frame_height == 0 {
            return Err(Error::Invalid("frame dimensions must be positive".into()));
        }
        if self.frame_count == 0 {
            return Err(Error::Invalid("frame_count must be >= 1".into()));
        }
        if self.class_count == 0 {
            return Err(Error::Invalid("class_count must be >= 1".into()));
        }
        if self.score_noise < 0.0 || !self.score_noise.is_finite() {
            return Err(Error::Invalid("score_noise must be >= 0".into()));
        }
        for (i, t) in self.tubes.iter().enumerate() {
            if t.class_id >= self.class_count {
                return Err(Error::Invalid(format!("tube {i}: class {} out of range", t.class_id)));
            }
            if t.t_start == 0 || t.t_start > t.t_end || t.t_end > self.frame_count {
                return Err(Error::Invalid(format!(
                    "tube {i}: interval [{}, {}] outside 1..={}",
                    t.t_start, t.t_end, self.frame_count
                )));
            }
            let b = BoundingBox::new(t.start_box[0], t.start_box[1], t.start_box[2], t.start_box[3])
                .map_err(|e| Error::Invalid(format!("tube {i}: {e}")))?;
            if !b.fits_within(self.frame_width, self.frame_height) {
                return Err(Error::Invalid(format!("tube {i}: start box exceeds frame")));
            }
            if !(t.margin > 0.0) || !t.margin.is_finite() {
                return Err(Error::Invalid(format!("tube {i}: margin must be > 0")));
            }
            if !t.velocity.0.is_finite() || !t.velocity.1.is_finite() {
                return Err(Error::Invalid(format!("tube {i}: velocity must be finite")));
            }
        }
        Ok(())
    }

    /// Zero-padded class names, `class_00` onward.
    pub fn class_names(&self) -> Vec<String> {
        (0..self.class_count).map(|c| format!("class_{c:02}")).collect()
    }
}

fn shift_box_clamped(b: &BoundingBox, dx: i64, dy: i64, width: u32, height: u32) -> BoundingBox {
    let bw = i64::from(b.width());
    let bh = i64::from(b.height());
    let nx = (i64::from(b.x_min) + dx).clamp(0, i64::from(width) - bw);
    let ny = (i64::from(b.y_min) + dy).clamp(0, i64::from(height) - bh);
    BoundingBox {
        x_min: nx as u32,
        y_min: ny as u32,
        x_max: (nx + bw) as u32,
        y_max: (ny + bh) as u32,
    }
}

fn plant_box_at(tube: &PlantedTube, frame: usize, width: u32, height: u32) -> BoundingBox {
    let base = BoundingBox {
        x_min: tube.start_box[0],
        y_min: tube.start_box[1],
        x_max: tube.start_box[2],
        y_max: tube.start_box[3],
    };
    let dt = (frame - tube.t_start) as f64;
    let dx = (tube.velocity.0 * dt).round() as i64;
    let dy = (tube.velocity.1 * dt).round() as i64;
    shift_box_clamped(&base, dx, dy, width, height)
}

/// Builds the proposals and the mirroring ground truth for a scenario.
///
/// Planted proposals carry `margin + noise` on their class and plain noise on
/// the others, translated by up to `box_jitter` pixels; distractors score in
/// `[-1, -0.5]` on every class so noise-free scenarios are unambiguous. The
/// ground-truth tubes use the exact unjittered trajectories. Output is fully
/// determined by the spec, including its seed.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<(VideoProposals, Vec<GroundTruthTube>)> {
    spec.validate()?;
    let mut rng = SeededRng::new(spec.seed);
    let (width, height) = (spec.frame_width, spec.frame_height);

    // Distractor side lengths scale with the frame, staying small relative to
    // typical planted boxes.
    let side_range = |dim: u32| {
        let lo = (dim / 60).max(2).min(dim);
        let hi = (dim / 25).max(lo);
        (u64::from(lo), u64::from(hi))
    };
    let (wx_lo, wx_hi) = side_range(width);
    let (wy_lo, wy_hi) = side_range(height);

    let mut frames: Vec<Vec<RegionProposal>> = Vec::with_capacity(spec.frame_count);
    for frame in 1..=spec.frame_count {
        let mut props = Vec::new();
        for tube in &spec.tubes {
            if frame < tube.t_start || frame > tube.t_end {
                continue;
            }
            let mut scores = vec![0.0; spec.class_count];
            if spec.score_noise > 0.0 {
                for s in scores.iter_mut() {
                    *s = rng.uniform(-spec.score_noise, spec.score_noise);
                }
            }
            scores[tube.class_id] += tube.margin;
            let exact = plant_box_at(tube, frame, width, height);
            let bbox = if spec.box_jitter > 0 {
                let j = i64::from(spec.box_jitter);
                let dx = rng.uniform_i64(-j, j);
                let dy = rng.uniform_i64(-j, j);
                shift_box_clamped(&exact, dx, dy, width, height)
            } else {
                exact
            };
            props.push(RegionProposal::new(
                frame,
                bbox,
                None,
                ScoreVector::new(scores)?,
                None,
            )?);
        }
        for _ in 0..spec.distractors_per_frame {
            let bw = rng.uniform_u64(wx_lo, wx_hi) as u32;
            let bh = rng.uniform_u64(wy_lo, wy_hi) as u32;
            let x = rng.uniform_u64(0, u64::from(width - bw)) as u32;
            let y = rng.uniform_u64(0, u64::from(height - bh)) as u32;
            let scores: Vec<f64> = (0..spec.class_count).map(|_| rng.uniform(-1.0, -0.5)).collect();
            props.push(RegionProposal::new(
                frame,
                BoundingBox::new(x, y, x + bw, y + bh)?,
                None,
                ScoreVector::new(scores)?,
                None,
            )?);
        }
        frames.push(props);
    }
    let video = VideoProposals::new(
        spec.video_id.clone(),
        width,
        height,
        spec.class_names(),
        frames,
    )?;

    let ground_truth = spec
        .tubes
        .iter()
        .map(|tube| {
            let extents = (tube.t_start..=tube.t_end)
                .map(|t| Extent::Box(plant_box_at(tube, t, width, height)))
                .collect();
            GroundTruthTube::new(tube.class_id, tube.t_start, tube.t_end, extents)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok((video, ground_truth))
}

/// Exhaustive path search: enumerates every cross-frame member combination in
/// lexicographic index order, keeping the first strict maximum of the summed
/// transition energy. Matches the tie rule of the dynamic program.
///
/// Guarded against blow-up: errors when the combination count exceeds 10^6.
pub fn oracle_best_path(
    video: &VideoProposals,
    class_id: usize,
    lambda: f64,
) -> Result<(ActionPath, f64)> {
    let t_count = video.frame_count();
    if t_count == 0 {
        return Err(Error::EmptyVideo);
    }
    let placeholders = make_placeholders(t_count, video.class_count(), 0.0);
    let frames = candidate_frames(video.frames(), &placeholders);

    let mut states: u128 = 1;
    for f in &frames {
        states = states.saturating_mul(f.len() as u128);
        if states > ORACLE_STATE_LIMIT {
            return Err(Error::TooLarge { size: states, limit: ORACLE_STATE_LIMIT });
        }
    }

    let mut indices = vec![0usize; t_count];
    let mut best_indices = indices.clone();
    let mut best_energy = f64::NEG_INFINITY;
    loop {
        let energy = if t_count == 1 {
            frames[0][indices[0]].prop.score(class_id)
        } else {
            (0..t_count - 1)
                .map(|t| {
                    transition_energy(
                        &frames[t][indices[t]],
                        &frames[t + 1][indices[t + 1]],
                        class_id,
                        lambda,
                    )
                })
                .sum()
        };
        if energy > best_energy {
            best_energy = energy;
            best_indices.copy_from_slice(&indices);
        }
        // Advance the odometer, last frame fastest, so enumeration is
        // lexicographic over index tuples.
        let mut pos = t_count;
        loop {
            if pos == 0 {
                let scaled = best_energy / t_count as f64;
                let members: Vec<RegionProposal> = best_indices
                    .iter()
                    .enumerate()
                    .map(|(t, &j)| frames[t][j].prop.clone())
                    .collect();
                let flags: Vec<bool> = best_indices
                    .iter()
                    .enumerate()
                    .map(|(t, &j)| frames[t][j].placeholder)
                    .collect();
                let path = ActionPath {
                    class_id,
                    members,
                    placeholder_flags: flags,
                    energy: scaled,
                };
                return Ok((path, scaled));
            }
            pos -= 1;
            indices[pos] += 1;
            if indices[pos] < frames[pos].len() {
                break;
            }
            indices[pos] = 0;
        }
    }
}

/// Exhaustive labelling search: enumerates every label sequence in
/// lexicographic order and keeps the first strict maximum of the labelling
/// objective (data term minus switch costs).
///
/// Guarded against blow-up: errors when `class_count ^ frame_count` exceeds
/// 10^6.
pub fn oracle_best_labels(
    path: &ActionPath,
    video: &VideoProposals,
    alpha: f64,
) -> Result<(LabelSequence, f64)> {
    let class_count = video.class_count();
    let t_count = path.members.len();
    if class_count == 0 {
        return Err(Error::Invalid("labelling needs at least one class".into()));
    }
    if t_count == 0 {
        return Ok((LabelSequence(Vec::new()), 0.0));
    }
    let states = (class_count as u128)
        .checked_pow(t_count as u32)
        .unwrap_or(u128::MAX);
    if states > ORACLE_STATE_LIMIT {
        return Err(Error::TooLarge { size: states, limit: ORACLE_STATE_LIMIT });
    }

    let mut labels = vec![0usize; t_count];
    let mut best_labels = labels.clone();
    let mut best_obj = f64::NEG_INFINITY;
    loop {
        let seq = LabelSequence(labels.clone());
        let obj = crate::linker::label_objective(path, &seq, alpha);
        if obj > best_obj {
            best_obj = obj;
            best_labels.clone_from(&labels);
        }
        let mut pos = t_count;
        loop {
            if pos == 0 {
                return Ok((LabelSequence(best_labels), best_obj));
            }
            pos -= 1;
            labels[pos] += 1;
            if labels[pos] < class_count {
                break;
            }
            labels[pos] = 0;
        }
    }
}
