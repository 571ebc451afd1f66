//! Spatial primitives: axis-aligned pixel boxes, run-length encoded pixel
//! masks, and the overlap measures built on them.
//!
//! Boxes use half-open coordinates `[x_min, x_max) x [y_min, y_max)` on an
//! integer pixel grid, so `area = (x_max - x_min) * (y_max - y_min)` and box
//! areas agree exactly with mask pixel counts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box on the pixel grid, half-open in both dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl BoundingBox {
    /// Builds a box, rejecting empty or inverted extents.
    pub fn new(x_min: u32, y_min: u32, x_max: u32, y_max: u32) -> Result<Self> {
        if x_min >= x_max || y_min >= y_max {
            return Err(Error::Geometry(format!(
                "box [{x_min},{y_min},{x_max},{y_max}] has no area"
            )));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn width(&self) -> u32 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> u32 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> u64 {
        u64::from(self.width()) * u64::from(self.height())
    }

    /// Number of pixels shared with `other`; 0 for disjoint boxes.
    pub fn intersection_area(&self, other: &BoundingBox) -> u64 {
        let w = self.x_max.min(other.x_max).saturating_sub(self.x_min.max(other.x_min));
        let h = self.y_max.min(other.y_max).saturating_sub(self.y_min.max(other.y_min));
        u64::from(w) * u64::from(h)
    }

    /// True when the box lies inside a `width` x `height` frame.
    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        self.x_max <= width && self.y_max <= height
    }
}

/// Intersection-over-union of two boxes under half-open pixel-area semantics.
///
/// Disjoint boxes yield 0; identical boxes yield 1.
pub fn box_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

/// One maximal run of foreground pixels in row-major order.
///
/// `start` is a flat pixel index (`y * width + x`); the run covers
/// `[start, start + len)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelRun {
    pub start: u64,
    pub len: u64,
}

/// Sparse binary mask stored as sorted, maximal row-major runs.
///
/// Invariants enforced at construction: at least one run, every run inside
/// `[0, width * height)`, runs strictly ordered with at least one background
/// pixel between consecutive runs (maximality).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMask {
    width: u32,
    height: u32,
    runs: Vec<PixelRun>,
}

impl PixelMask {
    /// Validates and wraps a run list.
    pub fn from_runs(width: u32, height: u32, runs: Vec<PixelRun>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Geometry("mask dimensions must be positive".into()));
        }
        if runs.is_empty() {
            return Err(Error::Geometry("mask has no foreground pixels".into()));
        }
        let total = u64::from(width) * u64::from(height);
        let mut prev_end: Option<u64> = None;
        for run in &runs {
            if run.len == 0 {
                return Err(Error::Geometry("zero-length run".into()));
            }
            let end = run
                .start
                .checked_add(run.len)
                .ok_or_else(|| Error::Geometry("run overflows".into()))?;
            if end > total {
                return Err(Error::Geometry(format!(
                    "run [{}, {}) exceeds {}x{} grid",
                    run.start, end, width, height
                )));
            }
            if let Some(pe) = prev_end {
                if run.start < pe {
                    return Err(Error::Geometry("runs unsorted or overlapping".into()));
                }
                if run.start == pe {
                    return Err(Error::Geometry("adjacent runs must be merged".into()));
                }
            }
            prev_end = Some(end);
        }
        Ok(Self { width, height, runs })
    }

    /// Parses the on-disk `[start, len, start, len, ...]` form.
    pub fn from_flat_runs(width: u32, height: u32, flat: &[u64]) -> Result<Self> {
        if flat.len() % 2 != 0 {
            return Err(Error::Geometry(
                "run list must hold (start, len) pairs".into(),
            ));
        }
        let runs = flat
            .chunks_exact(2)
            .map(|c| PixelRun { start: c[0], len: c[1] })
            .collect();
        Self::from_runs(width, height, runs)
    }

    /// Encodes an arbitrary pixel set into maximal runs.
    pub fn from_pixels<I>(width: u32, height: u32, pixels: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u32, u32)>,
    {
        let mut idx: Vec<u64> = pixels
            .into_iter()
            .map(|(x, y)| u64::from(y) * u64::from(width) + u64::from(x))
            .collect();
        idx.sort_unstable();
        idx.dedup();
        let mut runs = Vec::new();
        for i in idx {
            match runs.last_mut() {
                Some(PixelRun { start, len }) if *start + *len == i => *len += 1,
                _ => runs.push(PixelRun { start: i, len: 1 }),
            }
        }
        Self::from_runs(width, height, runs)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn runs(&self) -> &[PixelRun] {
        &self.runs
    }

    pub fn to_flat_runs(&self) -> Vec<u64> {
        self.runs
            .iter()
            .flat_map(|r| [r.start, r.len])
            .collect()
    }

    pub fn pixel_count(&self) -> u64 {
        self.runs.iter().map(|r| r.len).sum()
    }

    /// Iterates foreground pixels as `(x, y)` in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = u64::from(self.width);
        self.runs.iter().flat_map(move |r| {
            (r.start..r.start + r.len).map(move |i| ((i % w) as u32, (i / w) as u32))
        })
    }

    /// Minimum box around the foreground.
    pub fn bounding_box(&self) -> BoundingBox {
        let w = u64::from(self.width);
        let mut x_min = u32::MAX;
        let mut x_max = 0u32;
        let mut y_min = u32::MAX;
        let mut y_max = 0u32;
        for run in &self.runs {
            let end = run.start + run.len - 1;
            let (r0, c0) = ((run.start / w) as u32, (run.start % w) as u32);
            let (r1, c1) = ((end / w) as u32, (end % w) as u32);
            y_min = y_min.min(r0);
            y_max = y_max.max(r1);
            if r0 == r1 {
                x_min = x_min.min(c0);
                x_max = x_max.max(c1);
            } else {
                // A run crossing a row boundary touches both grid edges.
                x_min = 0;
                x_max = x_max.max(self.width - 1);
            }
        }
        BoundingBox {
            x_min,
            y_min,
            x_max: x_max + 1,
            y_max: y_max + 1,
        }
    }

    /// Number of pixels shared with `other` (same dimensions assumed).
    pub fn intersection_count(&self, other: &PixelMask) -> u64 {
        let mut count = 0u64;
        let (mut i, mut j) = (0usize, 0usize);
        while i < self.runs.len() && j < other.runs.len() {
            let a = &self.runs[i];
            let b = &other.runs[j];
            let lo = a.start.max(b.start);
            let hi = (a.start + a.len).min(b.start + b.len);
            if hi > lo {
                count += hi - lo;
            }
            if a.start + a.len <= b.start + b.len {
                i += 1;
            } else {
                j += 1;
            }
        }
        count
    }

    /// Union of several same-sized masks as a new maximal-run mask.
    pub fn union(masks: &[&PixelMask]) -> Result<PixelMask> {
        let first = masks
            .first()
            .ok_or_else(|| Error::Invalid("union of zero masks".into()))?;
        for m in masks {
            if m.width != first.width || m.height != first.height {
                return Err(Error::MaskDimensions(
                    first.width,
                    first.height,
                    m.width,
                    m.height,
                ));
            }
        }
        let mut all: Vec<PixelRun> = masks.iter().flat_map(|m| m.runs.iter().copied()).collect();
        all.sort_unstable_by_key(|r| r.start);
        let mut merged: Vec<PixelRun> = Vec::with_capacity(all.len());
        for run in all {
            match merged.last_mut() {
                Some(last) if run.start <= last.start + last.len => {
                    let end = (run.start + run.len).max(last.start + last.len);
                    last.len = end - last.start;
                }
                _ => merged.push(run),
            }
        }
        PixelMask::from_runs(first.width, first.height, merged)
    }
}

/// Pixel-level intersection-over-union. Errors when dimensions differ.
pub fn mask_iou(a: &PixelMask, b: &PixelMask) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::MaskDimensions(a.width, a.height, b.width, b.height));
    }
    let inter = a.intersection_count(b);
    let union = a.pixel_count() + b.pixel_count() - inter;
    if union == 0 {
        return Ok(0.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Anything with a box extent and an optional pixel mask.
pub trait SpatialRegion {
    fn bounds(&self) -> BoundingBox;

    fn mask(&self) -> Option<&PixelMask> {
        None
    }
}

impl SpatialRegion for BoundingBox {
    fn bounds(&self) -> BoundingBox {
        *self
    }
}

impl SpatialRegion for PixelMask {
    fn bounds(&self) -> BoundingBox {
        self.bounding_box()
    }

    fn mask(&self) -> Option<&PixelMask> {
        Some(self)
    }
}

/// Overlap ratio of two regions: pixel-level IoU when both carry masks of
/// matching dimensions, box IoU otherwise.
pub fn region_overlap<A: SpatialRegion + ?Sized, B: SpatialRegion + ?Sized>(a: &A, b: &B) -> f64 {
    if let (Some(ma), Some(mb)) = (a.mask(), b.mask()) {
        if ma.width() == mb.width() && ma.height() == mb.height() {
            return mask_iou(ma, mb).expect("dimensions checked");
        }
    }
    box_iou(&a.bounds(), &b.bounds())
}

/// Intersection pixel count plus the two region areas, under the same
/// dispatch rule as [`region_overlap`]. Used by the tube-overlap metrics.
pub fn region_pixel_stats<A: SpatialRegion + ?Sized, B: SpatialRegion + ?Sized>(
    a: &A,
    b: &B,
) -> (u64, u64, u64) {
    if let (Some(ma), Some(mb)) = (a.mask(), b.mask()) {
        if ma.width() == mb.width() && ma.height() == mb.height() {
            return (
                ma.intersection_count(mb),
                ma.pixel_count(),
                mb.pixel_count(),
            );
        }
    }
    let (ba, bb) = (a.bounds(), b.bounds());
    (ba.intersection_area(&bb), ba.area(), bb.area())
}
