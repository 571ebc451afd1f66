//! Proposal preparation: motion-based pruning, per-class non-maximum
//! suppression, and proposal synthesis from binary motion segmentations.

use crate::error::{Error, Result};
use crate::geom::{region_overlap, PixelMask, PixelRun};
use crate::types::{RegionProposal, ScoreVector};

/// Per-pixel normalised optical-flow magnitude for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMagnitudeMap {
    width: u32,
    height: u32,
    magnitudes: Vec<f64>,
    total: f64,
}

impl FlowMagnitudeMap {
    /// Wraps a row-major magnitude grid; all values must be finite and >= 0.
    pub fn new(width: u32, height: u32, magnitudes: Vec<f64>) -> Result<Self> {
        let expected = width as usize * height as usize;
        if magnitudes.len() != expected {
            return Err(Error::Dimension {
                expected,
                actual: magnitudes.len(),
            });
        }
        if magnitudes.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::Invalid(
                "flow magnitudes must be finite and non-negative".into(),
            ));
        }
        let total = magnitudes.iter().sum();
        Ok(Self {
            width,
            height,
            magnitudes,
            total,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.magnitudes[y as usize * self.width as usize + x as usize]
    }

    /// Sum of magnitudes over the whole frame.
    pub fn total(&self) -> f64 {
        self.total
    }
}

/// Binary foreground map for one frame; `None` means no foreground at all.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySegmentation {
    pub width: u32,
    pub height: u32,
    pub foreground: Option<PixelMask>,
}

impl BinarySegmentation {
    pub fn new(width: u32, height: u32, foreground: Option<PixelMask>) -> Result<Self> {
        if let Some(m) = &foreground {
            if m.width() != width || m.height() != height {
                return Err(Error::MaskDimensions(width, height, m.width(), m.height()));
            }
        }
        Ok(Self {
            width,
            height,
            foreground,
        })
    }
}

/// Fraction of the frame's flow magnitude inside the region: mask pixels when
/// the proposal carries a mask, box pixels otherwise. A frame with zero total
/// flow yields 0.
pub fn actionness(region: &RegionProposal, flow: &FlowMagnitudeMap) -> Result<f64> {
    if flow.total() == 0.0 {
        return Ok(0.0);
    }
    let inside: f64 = match &region.mask {
        Some(mask) => {
            if mask.width() != flow.width() || mask.height() != flow.height() {
                return Err(Error::MaskDimensions(
                    flow.width(),
                    flow.height(),
                    mask.width(),
                    mask.height(),
                ));
            }
            mask.pixels().map(|(x, y)| flow.get(x, y)).sum()
        }
        None => {
            if !region.bbox.fits_within(flow.width(), flow.height()) {
                return Err(Error::Geometry(format!(
                    "box exceeds {}x{} flow map",
                    flow.width(),
                    flow.height()
                )));
            }
            let mut s = 0.0;
            for y in region.bbox.y_min..region.bbox.y_max {
                for x in region.bbox.x_min..region.bbox.x_max {
                    s += flow.get(x, y);
                }
            }
            s
        }
    };
    Ok((inside / flow.total()).clamp(0.0, 1.0))
}

/// Keeps exactly the proposals whose actionness reaches `threshold`, each
/// annotated with its ratio; input order is preserved.
pub fn prune_by_actionness(
    proposals: &[RegionProposal],
    flow: &FlowMagnitudeMap,
    threshold: f64,
) -> Result<Vec<RegionProposal>> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Invalid(format!("threshold {threshold} outside [0,1]")));
    }
    let mut kept = Vec::new();
    for p in proposals {
        let mu = actionness(p, flow)?;
        if mu >= threshold {
            let mut annotated = p.clone();
            annotated.actionness = Some(mu);
            kept.push(annotated);
        }
    }
    Ok(kept)
}

/// Greedy per-class non-maximum suppression over one frame's proposals.
///
/// Candidates are visited in order of decreasing `scores[class_id]` (ties by
/// smaller input index); a candidate survives when its overlap with every
/// already-kept proposal stays below `iou_threshold`. The kept proposals are
/// returned in their original input order.
pub fn nms(
    proposals: &[RegionProposal],
    class_id: usize,
    iou_threshold: f64,
) -> Vec<RegionProposal> {
    let mut order: Vec<usize> = (0..proposals.len()).collect();
    order.sort_by(|&a, &b| {
        proposals[b]
            .score(class_id)
            .partial_cmp(&proposals[a].score(class_id))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut kept_idx: Vec<usize> = Vec::new();
    for &i in &order {
        let survives = kept_idx
            .iter()
            .all(|&k| region_overlap(&proposals[i], &proposals[k]) < iou_threshold);
        if survives {
            kept_idx.push(i);
        }
    }
    kept_idx.sort_unstable();
    kept_idx.into_iter().map(|i| proposals[i].clone()).collect()
}

/// Maximal 8-connected foreground components, ordered by their top-left-most
/// pixel in row-major order.
pub fn connected_components(seg: &BinarySegmentation) -> Vec<PixelMask> {
    let Some(mask) = &seg.foreground else {
        return Vec::new();
    };
    let width = u64::from(mask.width());

    // Split the flat runs at row boundaries into (row, col_start, col_end).
    let mut segments: Vec<(u64, u64, u64)> = Vec::new();
    for run in mask.runs() {
        let mut start = run.start;
        let end = run.start + run.len;
        while start < end {
            let row = start / width;
            let row_end = (row + 1) * width;
            let seg_end = end.min(row_end);
            segments.push((row, start % width, (seg_end - 1) % width + 1));
            start = seg_end;
        }
    }

    // Union-find over segment indices, linking 8-adjacent segments on
    // consecutive rows (column intervals within one pixel of each other).
    let mut parent: Vec<usize> = (0..segments.len()).collect();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mut prev_row_range = 0..0;
    let mut cur_row_start = 0;
    let mut cur_row = segments.first().map(|s| s.0).unwrap_or(0);
    for i in 0..segments.len() {
        if segments[i].0 != cur_row {
            prev_row_range = if segments[i].0 == cur_row + 1 {
                cur_row_start..i
            } else {
                0..0
            };
            cur_row = segments[i].0;
            cur_row_start = i;
        }
        let (_, c0, c1) = segments[i];
        for j in prev_row_range.clone() {
            let (_, p0, p1) = segments[j];
            if c0 <= p1 && p0 <= c1 {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }

    // Group segments per root, re-encode each group as a maximal-run mask.
    let mut groups: std::collections::BTreeMap<usize, Vec<PixelRun>> = Default::default();
    for i in 0..segments.len() {
        let root = find(&mut parent, i);
        let (row, c0, c1) = segments[i];
        groups
            .entry(root)
            .or_default()
            .push(PixelRun { start: row * width + c0, len: c1 - c0 });
    }
    let mut components: Vec<PixelMask> = groups
        .into_values()
        .map(|mut runs| {
            runs.sort_unstable_by_key(|r| r.start);
            let mut merged: Vec<PixelRun> = Vec::with_capacity(runs.len());
            for run in runs {
                match merged.last_mut() {
                    Some(last) if last.start + last.len == run.start => last.len += run.len,
                    _ => merged.push(run),
                }
            }
            PixelMask::from_runs(mask.width(), mask.height(), merged)
                .expect("component runs are valid by construction")
        })
        .collect();
    components.sort_by_key(|m| m.runs()[0].start);
    components
}

/// One mask-bearing proposal per non-empty subset of the components, with the
/// subset union as mask and its minimum bounding box as box. Scores stay at
/// zero pending classification.
///
/// When more than `cap` components are given, only the `cap` largest by pixel
/// count (ties keep the earlier component) enter the power set, bounding the
/// output at `2^cap - 1` proposals.
pub fn powerset_proposals(
    components: &[PixelMask],
    frame_index: usize,
    cap: usize,
    class_count: usize,
) -> Result<Vec<RegionProposal>> {
    if components.is_empty() || cap == 0 {
        return Ok(Vec::new());
    }
    let mut picked: Vec<usize> = (0..components.len()).collect();
    if components.len() > cap {
        picked.sort_by(|&a, &b| {
            components[b]
                .pixel_count()
                .cmp(&components[a].pixel_count())
                .then(a.cmp(&b))
        });
        picked.truncate(cap);
        picked.sort_unstable();
    }
    let n = picked.len();
    let mut out = Vec::with_capacity((1usize << n) - 1);
    for bits in 1u64..(1u64 << n) {
        let subset: Vec<&PixelMask> = (0..n)
            .filter(|i| bits & (1 << i) != 0)
            .map(|i| &components[picked[i]])
            .collect();
        let merged = PixelMask::union(&subset)?;
        let bbox = merged.bounding_box();
        out.push(RegionProposal::new(
            frame_index,
            bbox,
            Some(merged),
            ScoreVector::zeros(class_count),
            None,
        )?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::BoundingBox;

    fn boxed(frame: usize, b: [u32; 4], scores: Vec<f64>) -> RegionProposal {
        RegionProposal::new(
            frame,
            BoundingBox::new(b[0], b[1], b[2], b[3]).unwrap(),
            None,
            ScoreVector::new(scores).unwrap(),
            None,
        )
        .unwrap()
    }

    fn uniform_flow(w: u32, h: u32, v: f64) -> FlowMagnitudeMap {
        FlowMagnitudeMap::new(w, h, vec![v; (w * h) as usize]).unwrap()
    }

    #[test]
    fn actionness_whole_image_is_one() {
        let flow = uniform_flow(4, 4, 0.5);
        let p = boxed(1, [0, 0, 4, 4], vec![0.0]);
        assert_eq!(actionness(&p, &flow).unwrap(), 1.0);
    }

    #[test]
    fn actionness_zero_inside() {
        let mut mags = vec![0.0; 16];
        // All motion outside the region [0,0,2,2).
        mags[15] = 3.0;
        let flow = FlowMagnitudeMap::new(4, 4, mags).unwrap();
        let p = boxed(1, [0, 0, 2, 2], vec![0.0]);
        assert_eq!(actionness(&p, &flow).unwrap(), 0.0);
    }

    #[test]
    fn actionness_quarter_region() {
        let flow = uniform_flow(4, 4, 1.0);
        let p = boxed(1, [0, 0, 2, 2], vec![0.0]);
        assert!((actionness(&p, &flow).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn actionness_zero_total_flow() {
        let flow = uniform_flow(4, 4, 0.0);
        let p = boxed(1, [0, 0, 2, 2], vec![0.0]);
        assert_eq!(actionness(&p, &flow).unwrap(), 0.0);
    }

    #[test]
    fn actionness_uses_mask_when_present() {
        let flow = uniform_flow(4, 4, 1.0);
        let mask = PixelMask::from_pixels(4, 4, [(1, 1), (2, 1)]).unwrap();
        let p = RegionProposal::new(
            1,
            mask.bounding_box(),
            Some(mask),
            ScoreVector::zeros(1),
            None,
        )
        .unwrap();
        assert!((actionness(&p, &flow).unwrap() - 2.0 / 16.0).abs() < 1e-12);
    }

    #[test]
    fn actionness_partition_sums_to_one() {
        let mags: Vec<f64> = (0..64).map(|i| (i % 7) as f64 * 0.25 + 0.01).collect();
        let flow = FlowMagnitudeMap::new(8, 8, mags).unwrap();
        let quadrants = [[0, 0, 4, 4], [4, 0, 8, 4], [0, 4, 4, 8], [4, 4, 8, 8]];
        let total: f64 = quadrants
            .iter()
            .map(|q| actionness(&boxed(1, *q, vec![0.0]), &flow).unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-12, "got {total}");
    }

    #[test]
    fn prune_keeps_all_at_zero_threshold() {
        let flow = uniform_flow(4, 4, 1.0);
        let ps = vec![boxed(1, [0, 0, 2, 2], vec![0.0]), boxed(1, [2, 2, 4, 4], vec![0.0])];
        let kept = prune_by_actionness(&ps, &flow, 0.0).unwrap();
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].actionness, Some(0.25));
    }

    #[test]
    fn prune_drops_below_threshold() {
        let flow = uniform_flow(4, 4, 1.0);
        let ps = vec![boxed(1, [0, 0, 2, 2], vec![0.0])]; // mu = 0.25
        assert!(prune_by_actionness(&ps, &flow, 0.3).unwrap().is_empty());
        // Only a region capturing all motion survives a threshold of 1.
        let full = vec![boxed(1, [0, 0, 4, 4], vec![0.0])];
        assert_eq!(prune_by_actionness(&full, &flow, 1.0).unwrap().len(), 1);
    }

    #[test]
    fn prune_is_monotone_in_threshold() {
        let mags: Vec<f64> = (0..64).map(|i| ((i * 37) % 11) as f64).collect();
        let flow = FlowMagnitudeMap::new(8, 8, mags).unwrap();
        let ps: Vec<RegionProposal> = (0..6)
            .map(|i| boxed(1, [i, 0, i + 2, 4], vec![0.0]))
            .collect();
        let mut prev = prune_by_actionness(&ps, &flow, 0.0).unwrap().len();
        for th in [0.05, 0.1, 0.2, 0.4, 0.8, 1.0] {
            let n = prune_by_actionness(&ps, &flow, th).unwrap().len();
            assert!(n <= prev);
            prev = n;
        }
    }

    #[test]
    fn nms_single_proposal_kept() {
        let ps = vec![boxed(1, [0, 0, 4, 4], vec![1.0])];
        assert_eq!(nms(&ps, 0, 0.5).len(), 1);
    }

    #[test]
    fn nms_identical_boxes_keep_highest() {
        let ps = vec![
            boxed(1, [0, 0, 4, 4], vec![1.0]),
            boxed(1, [0, 0, 4, 4], vec![2.0]),
        ];
        let kept = nms(&ps, 0, 0.5);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].score(0), 2.0);
    }

    #[test]
    fn nms_matches_greedy_oracle() {
        // Boxes with pairwise IoUs {a,b} = 0.6, {a,c} = {b,c} ~= 0.2.
        let ps = vec![
            boxed(1, [0, 0, 10, 10], vec![0.9]),
            boxed(1, [0, 2, 10, 12], vec![1.4]),
            boxed(1, [8, 8, 18, 18], vec![1.1]),
        ];
        // Oracle: exhaustive greedy simulation.
        let mut order: Vec<usize> = (0..ps.len()).collect();
        order.sort_by(|&a, &b| ps[b].score(0).partial_cmp(&ps[a].score(0)).unwrap());
        let mut oracle: Vec<usize> = Vec::new();
        for &i in &order {
            if oracle
                .iter()
                .all(|&k| region_overlap(&ps[i], &ps[k]) < 0.5)
            {
                oracle.push(i);
            }
        }
        oracle.sort_unstable();
        let kept = nms(&ps, 0, 0.5);
        let kept_idx: Vec<usize> = kept
            .iter()
            .map(|p| ps.iter().position(|q| q == p).unwrap())
            .collect();
        assert_eq!(kept_idx, oracle);
        assert_eq!(kept_idx, vec![1, 2]);
    }

    #[test]
    fn nms_output_is_antichain() {
        let ps: Vec<RegionProposal> = (0..8)
            .map(|i| boxed(1, [i * 3, 0, i * 3 + 10, 10], vec![(i as f64 * 7.0) % 3.0]))
            .collect();
        for th in [0.2, 0.3, 0.5, 0.8] {
            let kept = nms(&ps, 0, th);
            for a in &kept {
                for b in &kept {
                    if a != b {
                        assert!(region_overlap(a, b) < th);
                    }
                }
            }
        }
    }

    #[test]
    fn nms_depends_only_on_score_ranks() {
        let ps: Vec<RegionProposal> = (0..6)
            .map(|i| boxed(1, [i * 2, 0, i * 2 + 8, 8], vec![((i * 13) % 5) as f64]))
            .collect();
        let rescaled: Vec<RegionProposal> = ps
            .iter()
            .map(|p| {
                let mut q = p.clone();
                q.scores = ScoreVector::new(vec![p.score(0) * 4.5 + 11.0]).unwrap();
                q
            })
            .collect();
        let kept_a: Vec<BoundingBox> = nms(&ps, 0, 0.4).iter().map(|p| p.bbox).collect();
        let kept_b: Vec<BoundingBox> = nms(&rescaled, 0, 0.4).iter().map(|p| p.bbox).collect();
        assert_eq!(kept_a, kept_b);
    }

    #[test]
    fn components_empty_foreground() {
        let seg = BinarySegmentation::new(4, 4, None).unwrap();
        assert!(connected_components(&seg).is_empty());
    }

    #[test]
    fn components_single_blob_identity() {
        let blob = PixelMask::from_pixels(6, 6, [(1, 1), (2, 1), (1, 2), (2, 2)]).unwrap();
        let seg = BinarySegmentation::new(6, 6, Some(blob.clone())).unwrap();
        let comps = connected_components(&seg);
        assert_eq!(comps, vec![blob]);
    }

    #[test]
    fn components_diagonal_touch_merges() {
        // Two blobs touching only at a corner join under 8-connectivity.
        let fg = PixelMask::from_pixels(6, 6, [(1, 1), (2, 2)]).unwrap();
        let seg = BinarySegmentation::new(6, 6, Some(fg)).unwrap();
        assert_eq!(connected_components(&seg).len(), 1);
    }

    #[test]
    fn components_match_flood_fill_oracle() {
        // Independent oracle: BFS flood fill over a dense grid.
        let w = 9u32;
        let h = 7u32;
        let cells: Vec<(u32, u32)> = (0..w * h)
            .filter(|i| (i * 31 + 7) % 5 < 2)
            .map(|i| (i % w, i / w))
            .collect();
        let fg = PixelMask::from_pixels(w, h, cells.iter().copied()).unwrap();
        let seg = BinarySegmentation::new(w, h, Some(fg)).unwrap();
        let comps = connected_components(&seg);

        let set: std::collections::HashSet<(u32, u32)> = cells.iter().copied().collect();
        let mut seen: std::collections::HashSet<(u32, u32)> = Default::default();
        let mut oracle_count = 0;
        let mut oracle_sizes: Vec<u64> = Vec::new();
        for &(x, y) in &cells {
            if seen.contains(&(x, y)) {
                continue;
            }
            oracle_count += 1;
            let mut queue = vec![(x, y)];
            seen.insert((x, y));
            let mut size = 0u64;
            while let Some((cx, cy)) = queue.pop() {
                size += 1;
                for dx in -1i64..=1 {
                    for dy in -1i64..=1 {
                        let nx = cx as i64 + dx;
                        let ny = cy as i64 + dy;
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let n = (nx as u32, ny as u32);
                        if set.contains(&n) && seen.insert(n) {
                            queue.push(n);
                        }
                    }
                }
            }
            oracle_sizes.push(size);
        }
        assert_eq!(comps.len(), oracle_count);
        let mut sizes: Vec<u64> = comps.iter().map(|c| c.pixel_count()).collect();
        sizes.sort_unstable();
        oracle_sizes.sort_unstable();
        assert_eq!(sizes, oracle_sizes);
        assert_eq!(
            comps.iter().map(|c| c.pixel_count()).sum::<u64>(),
            cells.len() as u64
        );
    }

    #[test]
    fn powerset_counts() {
        let c1 = PixelMask::from_pixels(8, 8, [(0, 0)]).unwrap();
        let c2 = PixelMask::from_pixels(8, 8, [(4, 0), (5, 0)]).unwrap();
        let c3 = PixelMask::from_pixels(8, 8, [(0, 4), (0, 5), (1, 4)]).unwrap();
        assert_eq!(powerset_proposals(&[c1.clone()], 1, 12, 2).unwrap().len(), 1);
        assert_eq!(
            powerset_proposals(&[c1.clone(), c2.clone(), c3.clone()], 1, 12, 2)
                .unwrap()
                .len(),
            7
        );
        // Cap limits the expansion to the largest components.
        let capped = powerset_proposals(&[c1, c2, c3], 1, 2, 2).unwrap();
        assert_eq!(capped.len(), 3);
        let sizes: Vec<u64> = capped
            .iter()
            .map(|p| p.mask.as_ref().unwrap().pixel_count())
            .collect();
        assert_eq!(sizes, vec![2, 3, 5]);
    }

    #[test]
    fn powerset_pair_enumerates_subsets() {
        let a = PixelMask::from_pixels(8, 8, [(1, 1)]).unwrap();
        let b = PixelMask::from_pixels(8, 8, [(6, 6)]).unwrap();
        let out = powerset_proposals(&[a.clone(), b.clone()], 3, 12, 1).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[0].mask.as_ref().unwrap(), &a);
        assert_eq!(out[1].mask.as_ref().unwrap(), &b);
        let union = out[2].mask.as_ref().unwrap();
        assert_eq!(union.pixel_count(), 2);
        // The union's box spans both components.
        assert_eq!(out[2].bbox, BoundingBox::new(1, 1, 7, 7).unwrap());
        assert!(out.iter().all(|p| p.frame_index == 3));
        assert!(out.iter().all(|p| p.scores.as_slice() == [0.0]));
    }

    #[test]
    fn powerset_masks_are_exact_unions() {
        let comps = [
            PixelMask::from_pixels(8, 8, [(0, 0), (1, 0)]).unwrap(),
            PixelMask::from_pixels(8, 8, [(4, 4)]).unwrap(),
            PixelMask::from_pixels(8, 8, [(7, 7), (7, 6)]).unwrap(),
        ];
        let out = powerset_proposals(&comps, 1, 12, 1).unwrap();
        assert_eq!(out.len(), 7);
        for (i, p) in out.iter().enumerate() {
            let bits = i + 1;
            let expect: std::collections::BTreeSet<(u32, u32)> = comps
                .iter()
                .enumerate()
                .filter(|(k, _)| bits & (1 << k) != 0)
                .flat_map(|(_, m)| m.pixels())
                .collect();
            let got: std::collections::BTreeSet<(u32, u32)> =
                p.mask.as_ref().unwrap().pixels().collect();
            assert_eq!(got, expect);
        }
    }
}
