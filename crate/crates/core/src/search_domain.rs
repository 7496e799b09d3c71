//! Refracted epipolar loci and the search domains built around them.
//!
//! Behind a flat port the set of possible matches for a pixel is no longer a
//! straight epipolar line. It is the image of the pixel's water ray in the
//! other camera, a curve. We sample that curve between a near and a far depth,
//! rasterize it and dilate it by a small radius to absorb calibration error.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::optics::{CameraId, Pixel, StereoRig};
use crate::projection::{back_project, forward_project, point_on_ray_at_depth, ProjectionError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error("invalid depth range [{z_min}, {z_max}]")]
    InvalidRange { z_min: f64, z_max: f64 },
    #[error("need at least two locus samples, got {0}")]
    TooFewSamples(usize),
    #[error("no locus sample falls inside the target image")]
    EmptyLocus,
    #[error("search domain is empty after clipping")]
    EmptyDomain,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocusSample {
    pub depth_z: f64,
    /// NaN when the point could not be imaged at all (e.g. behind the target camera).
    pub pixel: Pixel,
    pub in_bounds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpipolarLocus {
    pub source_camera: CameraId,
    pub source_pixel: Pixel,
    pub samples: Vec<LocusSample>,
    pub depth_range: (f64, f64),
    pub target_width: usize,
    pub target_height: usize,
}

impl EpipolarLocus {
    pub fn in_bounds_samples(&self) -> impl Iterator<Item = &LocusSample> {
        self.samples.iter().filter(|s| s.in_bounds)
    }

    /// Largest distance of an in-bounds sample from the chord joining the
    /// first and last in-bounds samples, in pixels.
    pub fn chord_deviation(&self) -> f64 {
        let pts: Vec<Pixel> = self.in_bounds_samples().map(|s| s.pixel).collect();
        let (Some(a), Some(b)) = (pts.first(), pts.last()) else {
            return 0.0;
        };
        let chord = b - a;
        let len = chord.norm();
        if len == 0.0 {
            return pts.iter().map(|p| (p - a).norm()).fold(0.0, f64::max);
        }
        pts.iter()
            .map(|p| {
                let d = p - a;
                (d.x * chord.y - d.y * chord.x).abs() / len
            })
            .fold(0.0, f64::max)
    }
}

/// Depths spaced uniformly in inverse depth, endpoints exact.
pub fn inverse_depth_samples(z_min: f64, z_max: f64, count: usize) -> Vec<f64> {
    let (a, b) = (1.0 / z_min, 1.0 / z_max);
    (0..count)
        .map(|k| {
            if k == 0 {
                z_min
            } else if k + 1 == count {
                z_max
            } else {
                1.0 / (a + (b - a) * k as f64 / (count - 1) as f64)
            }
        })
        .collect()
}

/// Traces the image, in the other camera, of `pixel`'s water ray between
/// `z_min` and `z_max` (depths along the source camera's optical axis).
pub fn epipolar_locus(
    rig: &StereoRig,
    source: CameraId,
    pixel: &Pixel,
    z_min: f64,
    z_max: f64,
    sample_count: usize,
) -> Result<EpipolarLocus, DomainError> {
    if !(z_min > 0.0 && z_max > z_min && z_max.is_finite()) {
        return Err(DomainError::InvalidRange { z_min, z_max });
    }
    if sample_count < 2 {
        return Err(DomainError::TooFewSamples(sample_count));
    }
    let water = back_project(rig, source, pixel)?;
    let target = source.other();
    let target_intr = rig.camera(target).intrinsics;
    let mut samples = Vec::with_capacity(sample_count);
    for depth_z in inverse_depth_samples(z_min, z_max, sample_count) {
        let point = point_on_ray_at_depth(rig, source, &water.ray, depth_z)?;
        let sample = match forward_project(rig, target, &point) {
            Ok(p) => LocusSample {
                depth_z,
                pixel: p.pixel,
                in_bounds: p.in_image,
            },
            Err(ProjectionError::ConvergenceFailure) => return Err(ProjectionError::ConvergenceFailure.into()),
            Err(_) => LocusSample {
                depth_z,
                pixel: Pixel::new(f64::NAN, f64::NAN),
                in_bounds: false,
            },
        };
        samples.push(sample);
    }
    let locus = EpipolarLocus {
        source_camera: source,
        source_pixel: *pixel,
        samples,
        depth_range: (z_min, z_max),
        target_width: target_intr.width,
        target_height: target_intr.height,
    };
    if locus.in_bounds_samples().next().is_none() {
        return Err(DomainError::EmptyLocus);
    }
    Ok(locus)
}

/// Half-open run of columns `[col_start, col_end)` on one image row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct RowInterval {
    pub row: usize,
    pub col_start: usize,
    pub col_end: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchDomain {
    pub rows: Vec<RowInterval>,
    pub dilation_radius: usize,
    pub source_pixel: Pixel,
}

impl SearchDomain {
    pub fn area(&self) -> usize {
        self.rows.iter().map(|r| r.col_end - r.col_start).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn contains(&self, col: usize, row: usize) -> bool {
        self.rows
            .iter()
            .any(|r| r.row == row && (r.col_start..r.col_end).contains(&col))
    }

    /// Pixels as `(col, row)`, row-major: rows ascending, then columns ascending.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows
            .iter()
            .flat_map(|r| (r.col_start..r.col_end).map(move |c| (c, r.row)))
    }
}

fn pixel_index(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

/// Every pixel whose square `[c-0.5, c+0.5] x [r-0.5, r+0.5]` meets the segment.
fn rasterize_segment(a: &Pixel, b: &Pixel, out: &mut Vec<(i64, i64)>) {
    let (a, b) = if a.x <= b.x { (a, b) } else { (b, a) };
    let c0 = pixel_index(a.x);
    let c1 = pixel_index(b.x);
    let dx = b.x - a.x;
    for col in c0..=c1 {
        let (x_lo, x_hi) = ((col as f64 - 0.5).max(a.x), (col as f64 + 0.5).min(b.x));
        let y_at = |x: f64| {
            if dx == 0.0 {
                None
            } else {
                Some(a.y + (b.y - a.y) * ((x - a.x) / dx))
            }
        };
        let (y0, y1) = match (y_at(x_lo), y_at(x_hi)) {
            (Some(y0), Some(y1)) => (y0, y1),
            _ => (a.y, b.y),
        };
        let (r0, r1) = (pixel_index(y0.min(y1)), pixel_index(y0.max(y1)));
        for row in r0..=r1 {
            out.push((col, row));
        }
    }
}

/// Liang-Barsky clip of segment `ab` to the box `[lo.x, hi.x] x [lo.y, hi.y]`.
fn clip_segment(a: &Pixel, b: &Pixel, lo: &Pixel, hi: &Pixel) -> Option<(Pixel, Pixel)> {
    let d = b - a;
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (p, q) in [
        (-d.x, a.x - lo.x),
        (d.x, hi.x - a.x),
        (-d.y, a.y - lo.y),
        (d.y, hi.y - a.y),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let t = q / p;
            if p < 0.0 {
                t0 = t0.max(t);
            } else {
                t1 = t1.min(t);
            }
        }
    }
    (t0 <= t1).then(|| (a + d * t0, a + d * t1))
}

/// Rasterizes the locus polyline, dilates it by a Chebyshev radius and clips
/// to the target image. Segments that cross the image border contribute
/// their visible part, so the domain covers the locus right up to the edge.
pub fn build_search_domain(locus: &EpipolarLocus, dilation_radius: usize) -> Result<SearchDomain, DomainError> {
    let pts: Vec<Pixel> = locus.in_bounds_samples().map(|s| s.pixel).collect();
    if pts.is_empty() {
        return Err(DomainError::EmptyLocus);
    }
    let mut marked = Vec::new();
    if pts.len() == 1 {
        marked.push((pixel_index(pts[0].x), pixel_index(pts[0].y)));
    }
    let margin = dilation_radius as f64 + 0.5;
    let lo = Pixel::new(-margin, -margin);
    let hi = Pixel::new(
        locus.target_width as f64 - 1.0 + margin,
        locus.target_height as f64 - 1.0 + margin,
    );
    for w in locus.samples.windows(2) {
        let (a, b) = (&w[0].pixel, &w[1].pixel);
        if !(a.x.is_finite() && a.y.is_finite() && b.x.is_finite() && b.y.is_finite()) {
            continue;
        }
        if let Some((a, b)) = clip_segment(a, b, &lo, &hi) {
            rasterize_segment(&a, &b, &mut marked);
        }
    }

    let (w, h) = (locus.target_width as i64, locus.target_height as i64);
    let r = dilation_radius as i64;
    let mut per_row: BTreeMap<i64, Vec<(i64, i64)>> = BTreeMap::new();
    for (col, row) in marked {
        let (c0, c1) = ((col - r).max(0), (col + r + 1).min(w));
        if c0 >= c1 {
            continue;
        }
        for rr in (row - r).max(0)..=(row + r).min(h - 1) {
            per_row.entry(rr).or_default().push((c0, c1));
        }
    }

    let mut rows = Vec::new();
    for (row, mut spans) in per_row {
        spans.sort_unstable();
        let mut cur = spans[0];
        for &(s, e) in &spans[1..] {
            if s <= cur.1 {
                cur.1 = cur.1.max(e);
            } else {
                rows.push(RowInterval {
                    row: row as usize,
                    col_start: cur.0 as usize,
                    col_end: cur.1 as usize,
                });
                cur = (s, e);
            }
        }
        rows.push(RowInterval {
            row: row as usize,
            col_start: cur.0 as usize,
            col_end: cur.1 as usize,
        });
    }
    if rows.is_empty() {
        return Err(DomainError::EmptyDomain);
    }
    Ok(SearchDomain {
        rows,
        dilation_radius,
        source_pixel: locus.source_pixel,
    })
}
