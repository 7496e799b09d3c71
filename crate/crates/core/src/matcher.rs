//! Block matching restricted to refracted search domains, refracted-ray
//! triangulation and dense reconstruction.

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{closest_point_pair, GeometryError, Vec3};
use crate::image::{DepthMap, GrayImage};
use crate::optics::{CameraId, Pixel, StereoRig};
use crate::projection::{back_project, depth_of, point_at_depth, ProjectionError};
use crate::search_domain::{build_search_domain, epipolar_locus, SearchDomain};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatchError {
    #[error("window of size {window} at ({col}, {row}) does not fit in the image")]
    WindowOutOfBounds { col: usize, row: usize, window: usize },
    #[error("window size must be odd and at least 3, got {0}")]
    BadWindow(usize),
    #[error("image sizes do not match the rig: {0}")]
    ImageSizeMismatch(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error("triangulated point is not in the water")]
    NotInWater,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostMetric {
    /// Zero-mean normalized cross-correlation, higher is better.
    Zncc,
    /// Mean absolute difference, lower is better.
    Sad,
}

impl CostMetric {
    fn better(self, a: f64, b: f64) -> bool {
        match self {
            CostMetric::Zncc => a > b,
            CostMetric::Sad => a < b,
        }
    }

    fn accepts(self, score: f64, threshold: f64) -> bool {
        match self {
            CostMetric::Zncc => score >= threshold,
            CostMetric::Sad => score <= threshold,
        }
    }

    /// Score oriented so that larger is better.
    fn gain(self, score: f64) -> f64 {
        match self {
            CostMetric::Zncc => score,
            CostMetric::Sad => -score,
        }
    }
}

fn window_fits(img: &GrayImage, col: usize, row: usize, half: usize) -> bool {
    col >= half && row >= half && col + half < img.width() && row + half < img.height()
}

fn check_window(window: usize) -> Result<usize, MatchError> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(MatchError::BadWindow(window));
    }
    Ok(window / 2)
}

/// Mean and centered sum of squares of one window; evaluated the same way
/// whether cached or computed on demand, so costs are bit-identical.
#[derive(Debug, Clone, Copy)]
struct WindowStats {
    mean: f64,
    centered_sq: f64,
}

/// Per-pixel variance below which a window counts as constant.
const FLAT_VARIANCE: f64 = 1e-12;

fn window_stats(img: &GrayImage, col: usize, row: usize, half: usize) -> WindowStats {
    let mut sum = 0.0;
    for r in row - half..=row + half {
        for c in col - half..=col + half {
            sum += img.get(c, r);
        }
    }
    let n = ((2 * half + 1) * (2 * half + 1)) as f64;
    let mean = sum / n;
    let mut sq = 0.0;
    for r in row - half..=row + half {
        for c in col - half..=col + half {
            let d = img.get(c, r) - mean;
            sq += d * d;
        }
    }
    WindowStats { mean, centered_sq: sq }
}

#[allow(clippy::too_many_arguments)]
fn cost_with_stats(
    a: &GrayImage,
    b: &GrayImage,
    pa: (usize, usize),
    pb: (usize, usize),
    half: usize,
    metric: CostMetric,
    sa: &WindowStats,
    sb: &WindowStats,
) -> f64 {
    let w = 2 * half + 1;
    let (ca, ra) = (pa.0 - half, pa.1 - half);
    let (cb, rb) = (pb.0 - half, pb.1 - half);
    match metric {
        CostMetric::Zncc => {
            // rounding leaves a constant window with a tiny nonzero spread
            let floor = FLAT_VARIANCE * (w * w) as f64;
            if !(sa.centered_sq > floor && sb.centered_sq > floor) {
                return 0.0;
            }
            let denom = (sa.centered_sq * sb.centered_sq).sqrt();
            let mut cross = 0.0;
            for dr in 0..w {
                for dc in 0..w {
                    cross += (a.get(ca + dc, ra + dr) - sa.mean) * (b.get(cb + dc, rb + dr) - sb.mean);
                }
            }
            (cross / denom).clamp(-1.0, 1.0)
        }
        CostMetric::Sad => {
            let mut sad = 0.0;
            for dr in 0..w {
                for dc in 0..w {
                    sad += (a.get(ca + dc, ra + dr) - b.get(cb + dc, rb + dr)).abs();
                }
            }
            sad / (w * w) as f64
        }
    }
}

/// Window cost between `p_left` in `left` and `p_right` in `right`
/// (pixels given as `(col, row)`).
///
/// ZNCC lies in `[-1, 1]` and scores 0 when either window has no variance.
/// SAD is the mean absolute difference.
pub fn patch_cost(
    left: &GrayImage,
    right: &GrayImage,
    p_left: (usize, usize),
    p_right: (usize, usize),
    window: usize,
    metric: CostMetric,
) -> Result<f64, MatchError> {
    let half = check_window(window)?;
    for (img, p) in [(left, p_left), (right, p_right)] {
        if !window_fits(img, p.0, p.1, half) {
            return Err(MatchError::WindowOutOfBounds {
                col: p.0,
                row: p.1,
                window,
            });
        }
    }
    let sa = window_stats(left, p_left.0, p_left.1, half);
    let sb = window_stats(right, p_right.0, p_right.1, half);
    Ok(cost_with_stats(left, right, p_left, p_right, half, metric, &sa, &sb))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchStatus {
    Ok,
    NoDomain,
    LowScore,
    Inconsistent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchResult {
    pub source_pixel: (usize, usize),
    /// Integer winner in the target image, `(col, row)`.
    pub best_pixel: (usize, usize),
    /// Winner after separable parabola refinement.
    pub matched_pixel: Pixel,
    pub score: f64,
    pub status: MatchStatus,
}

impl MatchResult {
    fn no_domain(source_pixel: (usize, usize)) -> Self {
        Self {
            source_pixel,
            best_pixel: (0, 0),
            matched_pixel: Pixel::new(f64::NAN, f64::NAN),
            score: f64::NAN,
            status: MatchStatus::NoDomain,
        }
    }
}

/// Vertex offset of the parabola through `(-1, minus)`, `(0, center)`,
/// `(1, plus)`, clamped to half a pixel; zero unless the center is a peak.
pub fn parabola_offset(minus: f64, center: f64, plus: f64) -> f64 {
    let curvature = minus - 2.0 * center + plus;
    if !(curvature < 0.0) {
        return 0.0;
    }
    (0.5 * (minus - plus) / curvature).clamp(-0.5, 0.5)
}

/// Precomputed window statistics for every pixel of an image whose window fits.
struct StatsCache {
    width: usize,
    half: usize,
    stats: Vec<Option<WindowStats>>,
}

impl StatsCache {
    fn new(img: &GrayImage, half: usize) -> Self {
        let stats = (0..img.height())
            .into_par_iter()
            .flat_map_iter(|r| {
                (0..img.width()).map(move |c| window_fits(img, c, r, half).then(|| window_stats(img, c, r, half)))
            })
            .collect();
        Self {
            width: img.width(),
            half,
            stats,
        }
    }

    fn get(&self, col: usize, row: usize) -> Option<&WindowStats> {
        self.stats[row * self.width + col].as_ref()
    }
}

struct MatchContext<'a> {
    source: &'a GrayImage,
    target: &'a GrayImage,
    source_stats: Option<&'a StatsCache>,
    target_stats: Option<&'a StatsCache>,
    half: usize,
    metric: CostMetric,
    accept_threshold: f64,
}

impl MatchContext<'_> {
    fn stats(&self, source: bool, col: usize, row: usize) -> Option<WindowStats> {
        let (img, cache) = if source {
            (self.source, self.source_stats)
        } else {
            (self.target, self.target_stats)
        };
        match cache {
            Some(c) => {
                debug_assert_eq!(c.half, self.half);
                c.get(col, row).copied()
            }
            None => window_fits(img, col, row, self.half).then(|| window_stats(img, col, row, self.half)),
        }
    }

    fn run(&self, p: (usize, usize), domain: &SearchDomain) -> MatchResult {
        let Some(ss) = self.stats(true, p.0, p.1) else {
            return MatchResult::no_domain(p);
        };
        let cost = |c: usize, r: usize| -> Option<f64> {
            let ts = self.stats(false, c, r)?;
            Some(cost_with_stats(self.source, self.target, p, (c, r), self.half, self.metric, &ss, &ts))
        };

        // rows ascending then columns ascending; strict improvement keeps the first
        let mut best: Option<((usize, usize), f64)> = None;
        for (c, r) in domain.pixels() {
            if let Some(s) = cost(c, r) {
                if best.is_none_or(|(_, b)| self.metric.better(s, b)) {
                    best = Some(((c, r), s));
                }
            }
        }
        let Some(((bc, br), score)) = best else {
            return MatchResult::no_domain(p);
        };

        let g = |s: f64| self.metric.gain(s);
        let refine = |minus: Option<f64>, plus: Option<f64>| match (minus, plus) {
            (Some(m), Some(pl)) => parabola_offset(g(m), g(score), g(pl)),
            _ => 0.0,
        };
        let du = refine(bc.checked_sub(1).and_then(|c| cost(c, br)), cost(bc + 1, br));
        let dv = refine(br.checked_sub(1).and_then(|r| cost(bc, r)), cost(bc, br + 1));

        let status = if self.metric.accepts(score, self.accept_threshold) {
            MatchStatus::Ok
        } else {
            MatchStatus::LowScore
        };
        MatchResult {
            source_pixel: p,
            best_pixel: (bc, br),
            matched_pixel: Pixel::new(bc as f64 + du, br as f64 + dv),
            score,
            status,
        }
    }
}

/// Finds the best match of `p_source`'s window among the domain pixels of
/// `target`. Ties go to the smallest row, then the smallest column.
pub fn match_pixel(
    source: &GrayImage,
    target: &GrayImage,
    p_source: (usize, usize),
    domain: &SearchDomain,
    window: usize,
    metric: CostMetric,
    accept_threshold: f64,
) -> Result<MatchResult, MatchError> {
    let half = check_window(window)?;
    if !window_fits(source, p_source.0, p_source.1, half) {
        return Err(MatchError::WindowOutOfBounds {
            col: p_source.0,
            row: p_source.1,
            window,
        });
    }
    let ctx = MatchContext {
        source,
        target,
        source_stats: None,
        target_stats: None,
        half,
        metric,
        accept_threshold,
    };
    Ok(ctx.run(p_source, domain))
}

/// Intersects the water rays of a left/right pixel pair; returns the
/// midpoint of their common perpendicular and its length.
pub fn triangulate_match(rig: &StereoRig, p_left: &Pixel, p_right: &Pixel) -> Result<(Vec3, f64), MatchError> {
    let a = back_project(rig, CameraId::Left, p_left)?;
    let b = back_project(rig, CameraId::Right, p_right)?;
    let c = closest_point_pair(&a.ray, &b.ray)?;
    if !(rig.port.water_depth_of(&c.midpoint) > 0.0) {
        return Err(MatchError::NotInWater);
    }
    Ok((c.midpoint, c.gap))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchParams {
    pub window: usize,
    pub metric: CostMetric,
    pub samples: usize,
    pub dilation: usize,
    pub accept_threshold: f64,
    /// Maximum distance between a pixel and its left-right round trip.
    pub lr_max_px: f64,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            window: 11,
            metric: CostMetric::Zncc,
            samples: 32,
            dilation: 2,
            accept_threshold: 0.7,
            lr_max_px: 1.0,
        }
    }
}

/// Search domain of `pixel` in the other camera, or `None` when the locus
/// never enters that image.
pub fn domain_for(
    rig: &StereoRig,
    source: CameraId,
    pixel: (usize, usize),
    z_min: f64,
    z_max: f64,
    params: &MatchParams,
) -> Result<Option<SearchDomain>, MatchError> {
    let px = Pixel::new(pixel.0 as f64, pixel.1 as f64);
    match epipolar_locus(rig, source, &px, z_min, z_max, params.samples) {
        Ok(locus) => Ok(build_search_domain(&locus, params.dilation).ok()),
        Err(crate::search_domain::DomainError::Projection(ProjectionError::ConvergenceFailure)) => {
            Err(ProjectionError::ConvergenceFailure.into())
        }
        Err(_) => Ok(None),
    }
}

/// Dense reconstruction of every left pixel whose window fits.
///
/// Each pixel is matched inside its refracted search domain, re-matched from
/// the right winner back into the left image, and, when the round trip lands
/// within `lr_max_px`, triangulated. Depths outside `[z_min, z_max]` are
/// invalidated. The output does not depend on thread scheduling.
pub fn match_dense(
    rig: &StereoRig,
    left: &GrayImage,
    right: &GrayImage,
    z_min: f64,
    z_max: f64,
    params: &MatchParams,
) -> Result<(DepthMap, Vec<MatchResult>), MatchError> {
    for (id, img) in [(CameraId::Left, left), (CameraId::Right, right)] {
        let intr = rig.camera(id).intrinsics;
        if img.width() != intr.width || img.height() != intr.height {
            return Err(MatchError::ImageSizeMismatch(format!(
                "{id:?} image is {}x{}, camera is {}x{}",
                img.width(),
                img.height(),
                intr.width,
                intr.height
            )));
        }
    }
    let half = check_window(params.window)?;
    let left_stats = StatsCache::new(left, half);
    let right_stats = StatsCache::new(right, half);
    let forward = MatchContext {
        source: left,
        target: right,
        source_stats: Some(&left_stats),
        target_stats: Some(&right_stats),
        half,
        metric: params.metric,
        accept_threshold: params.accept_threshold,
    };
    let backward = MatchContext {
        source: right,
        target: left,
        source_stats: Some(&right_stats),
        target_stats: Some(&left_stats),
        half,
        metric: params.metric,
        accept_threshold: params.accept_threshold,
    };

    let (w, h) = (left.width(), left.height());
    let rows: Vec<usize> = (half..h.saturating_sub(half)).collect();
    // each pixel's forward match and, when it survives, its depth and gap
    type Row = Vec<(MatchResult, Option<(f64, f64)>)>;
    let per_row: Result<Vec<Row>, MatchError> = rows
        .par_iter()
        .map(|&row| {
            (half..w.saturating_sub(half))
                .map(|col| {
                    let p = (col, row);
                    let Some(domain) = domain_for(rig, CameraId::Left, p, z_min, z_max, params)? else {
                        return Ok((MatchResult::no_domain(p), None));
                    };
                    let mut m = forward.run(p, &domain);
                    if m.status != MatchStatus::Ok {
                        return Ok((m, None));
                    }
                    let back_ok = match domain_for(rig, CameraId::Right, m.best_pixel, z_min, z_max, params)? {
                        Some(back_domain) => {
                            let back = backward.run(m.best_pixel, &back_domain);
                            let dc = back.best_pixel.0 as f64 - col as f64;
                            let dr = back.best_pixel.1 as f64 - row as f64;
                            back.status != MatchStatus::NoDomain && (dc * dc + dr * dr).sqrt() <= params.lr_max_px
                        }
                        None => false,
                    };
                    if !back_ok {
                        m.status = MatchStatus::Inconsistent;
                        return Ok((m, None));
                    }
                    let depth = triangulate_match(rig, &Pixel::new(col as f64, row as f64), &m.matched_pixel)
                        .ok()
                        .map(|(x, gap)| (depth_of(rig, CameraId::Left, &x), gap))
                        .filter(|(z, _)| *z >= z_min && *z <= z_max);
                    Ok((m, depth))
                })
                .collect()
        })
        .collect();

    let mut depth_map = DepthMap::invalid(w, h);
    let mut results = Vec::new();
    for row_results in per_row? {
        for (m, depth) in row_results {
            if let Some((z, gap)) = depth {
                let i = m.source_pixel.1 * w + m.source_pixel.0;
                depth_map.depth[i] = z;
                depth_map.residual[i] = gap;
            }
            results.push(m);
        }
    }
    Ok((depth_map, results))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudPoint {
    pub position: Vec3,
    pub intensity: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<CloudPoint>,
}

/// One point per valid depth pixel, placed on the left pixel's water ray.
pub fn to_point_cloud(rig: &StereoRig, depth_map: &DepthMap, left: &GrayImage) -> Result<PointCloud, MatchError> {
    if depth_map.width != left.width() || depth_map.height != left.height() {
        return Err(MatchError::ImageSizeMismatch(format!(
            "depth map is {}x{}, image is {}x{}",
            depth_map.width,
            depth_map.height,
            left.width(),
            left.height()
        )));
    }
    let mut points = Vec::with_capacity(depth_map.valid_count());
    for row in 0..depth_map.height {
        for col in 0..depth_map.width {
            let z = depth_map.get(col, row);
            if z > 0.0 {
                let position = point_at_depth(rig, CameraId::Left, &Pixel::new(col as f64, row as f64), z)?;
                points.push(CloudPoint {
                    position,
                    intensity: left.get(col, row),
                    gap: depth_map.residual[row * depth_map.width + col],
                });
            }
        }
    }
    Ok(PointCloud { points })
}
