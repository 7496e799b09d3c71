//! Synthetic ground truth through the exact refractive forward model.
//!
//! Images are rendered per output pixel: back-project, hit the target plane,
//! sample the procedural texture there. Correspondences come from
//! [`forward_project`] of the hit point, the same code path the rest of the
//! crate uses, so the simulator can serve as an oracle.

mod noise;
mod texture;

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{intersect_ray_plane, RigidTransform, Vec3};
use crate::image::{DepthMap, GrayImage};
use crate::optics::{CameraId, Pixel, StereoRig};
use crate::projection::{back_project, depth_of, forward_project};

pub use noise::{noise_stream, splitmix64, NoiseStream};
pub use texture::{checker, ValueNoise};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SceneError {
    #[error("target is not entirely on the water side of the port")]
    TargetNotInWater,
    #[error("invalid scene: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    TexturedPlane(ValueNoise),
    Checkerboard { square: f64 },
    PointGrid { rows: usize, cols: usize, spacing: f64 },
}

impl Target {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Target::TexturedPlane(_) => "textured_plane",
            Target::Checkerboard { .. } => "checkerboard",
            Target::PointGrid { .. } => "point_grid",
        }
    }
}

/// A planar target. Its local frame has the plane at z = 0; `plane_pose`
/// maps it to the world. The target covers the square `|x|, |y| <= extent / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneSpec {
    pub target: Target,
    pub plane_pose: RigidTransform,
    pub extent: f64,
}

impl SceneSpec {
    /// Default textured plane: fronto-parallel to the left camera at 2.0 m.
    pub fn textured_plane_at(depth: f64) -> Self {
        Self {
            target: Target::TexturedPlane(ValueNoise::default()),
            plane_pose: RigidTransform::new(nalgebra::Matrix3::identity(), Vec3::new(0.0, 0.0, depth)),
            extent: 3.0,
        }
    }

    pub fn validate(&self, rig: &StereoRig) -> Result<(), SceneError> {
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return Err(SceneError::Invalid("extent must be positive".into()));
        }
        match self.target {
            Target::Checkerboard { square } if !(square > 0.0) => {
                return Err(SceneError::Invalid("checker square must be positive".into()))
            }
            Target::TexturedPlane(t) if !(t.cell > 0.0) => {
                return Err(SceneError::Invalid("texture cell must be positive".into()))
            }
            Target::PointGrid { rows, cols, spacing } if rows == 0 || cols == 0 || !(spacing > 0.0) => {
                return Err(SceneError::Invalid("point grid needs rows, cols and a positive spacing".into()))
            }
            _ => {}
        }
        let h = self.extent / 2.0;
        let corners = [(-h, -h), (h, -h), (-h, h), (h, h)];
        let mut pts: Vec<Vec3> = corners.iter().map(|&(x, y)| Vec3::new(x, y, 0.0)).collect();
        pts.extend(self.grid_points_local());
        if pts
            .iter()
            .any(|p| !(rig.port.water_depth_of(&self.plane_pose.apply(p)) > 0.0))
        {
            return Err(SceneError::TargetNotInWater);
        }
        Ok(())
    }

    fn grid_points_local(&self) -> Vec<Vec3> {
        match self.target {
            Target::PointGrid { rows, cols, spacing } => grid_points(rows, cols, spacing),
            _ => Vec::new(),
        }
    }

    /// Texture value at local plane coordinates, or `None` outside the target.
    pub fn intensity_at(&self, x: f64, y: f64) -> Option<f64> {
        let h = self.extent / 2.0;
        if x.abs() > h || y.abs() > h {
            return None;
        }
        Some(match self.target {
            Target::TexturedPlane(t) => t.sample(x, y),
            Target::Checkerboard { square } => checker(square, x, y),
            Target::PointGrid { .. } => 0.5,
        })
    }
}

/// Centered `rows x cols` grid on the local z = 0 plane.
pub fn grid_points(rows: usize, cols: usize, spacing: f64) -> Vec<Vec3> {
    let x0 = -(cols as f64 - 1.0) * spacing / 2.0;
    let y0 = -(rows as f64 - 1.0) * spacing / 2.0;
    (0..rows)
        .flat_map(|r| (0..cols).map(move |c| Vec3::new(x0 + c as f64 * spacing, y0 + r as f64 * spacing, 0.0)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub pixel_sigma: f64,
    pub intensity_sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            pixel_sigma: 0.0,
            intensity_sigma: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderedPoint {
    pub point_world: Vec3,
    /// NaN when the point cannot be imaged by that camera.
    pub pixel_left: Pixel,
    pub pixel_right: Pixel,
    pub visible_left: bool,
    pub visible_right: bool,
}

fn image_point(rig: &StereoRig, camera: CameraId, p: &Vec3) -> (Pixel, bool) {
    match forward_project(rig, camera, p) {
        Ok(proj) => (proj.pixel, proj.in_image),
        Err(_) => (Pixel::new(f64::NAN, f64::NAN), false),
    }
}

/// Images every point of a point-grid scene in both cameras.
pub fn render_points(rig: &StereoRig, scene: &SceneSpec) -> Result<Vec<RenderedPoint>, SceneError> {
    scene.validate(rig)?;
    Ok(scene
        .grid_points_local()
        .iter()
        .map(|p| {
            let point_world = scene.plane_pose.apply(p);
            let (pixel_left, visible_left) = image_point(rig, CameraId::Left, &point_world);
            let (pixel_right, visible_right) = image_point(rig, CameraId::Right, &point_world);
            RenderedPoint {
                point_world,
                pixel_left,
                pixel_right,
                visible_left,
                visible_right,
            }
        })
        .collect())
}

/// Rendered stereo pair with per-left-pixel ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct StereoPair {
    pub left: GrayImage,
    pub right: GrayImage,
    pub truth: DepthMap,
    /// True right-image position of each left pixel's scene point, row-major;
    /// `None` on background or when the point leaves the right image.
    pub truth_match: Vec<Option<Pixel>>,
    /// Scene point seen by each left pixel.
    pub truth_points: Vec<Option<Vec3>>,
}

struct PixelSample {
    intensity: f64,
    point: Option<Vec3>,
}

fn render_pixel(rig: &StereoRig, camera: CameraId, scene: &SceneSpec, col: usize, row: usize) -> PixelSample {
    let background = PixelSample {
        intensity: 0.0,
        point: None,
    };
    let Ok(water) = back_project(rig, camera, &Pixel::new(col as f64, row as f64)) else {
        return background;
    };
    let normal = scene.plane_pose.normal();
    let offset = normal.dot(&scene.plane_pose.translation);
    let Ok(hit) = intersect_ray_plane(&water.ray, &normal, offset) else {
        return background;
    };
    let local = scene.plane_pose.inverse_apply(&hit);
    match scene.intensity_at(local.x, local.y) {
        Some(intensity) => PixelSample {
            intensity,
            point: Some(hit),
        },
        None => background,
    }
}

fn render_view(rig: &StereoRig, camera: CameraId, scene: &SceneSpec) -> Vec<PixelSample> {
    let intr = rig.camera(camera).intrinsics;
    (0..intr.height)
        .into_par_iter()
        .flat_map_iter(|row| (0..intr.width).map(move |col| render_pixel(rig, camera, scene, col, row)))
        .collect()
}

/// Renders both views of a textured plane or checkerboard scene, then adds
/// seeded Gaussian intensity noise (left image first, row-major).
pub fn render_stereo_pair(rig: &StereoRig, scene: &SceneSpec, noise: &NoiseSpec) -> Result<StereoPair, SceneError> {
    scene.validate(rig)?;
    if matches!(scene.target, Target::PointGrid { .. }) {
        return Err(SceneError::Invalid("point grids cannot be rendered as images".into()));
    }
    let li = rig.left.intrinsics;
    let ri = rig.right.intrinsics;
    let left_samples = render_view(rig, CameraId::Left, scene);
    let right_samples = render_view(rig, CameraId::Right, scene);

    let mut truth = DepthMap::invalid(li.width, li.height);
    let truth_points: Vec<Option<Vec3>> = left_samples.iter().map(|s| s.point).collect();
    for (i, p) in truth_points.iter().enumerate() {
        if let Some(p) = p {
            truth.depth[i] = depth_of(rig, CameraId::Left, p);
        }
    }
    let truth_match: Vec<Option<Pixel>> = truth_points
        .par_iter()
        .map(|p| {
            p.and_then(|p| match forward_project(rig, CameraId::Right, &p) {
                Ok(proj) if proj.in_image => Some(proj.pixel),
                _ => None,
            })
        })
        .collect();

    let mut left = GrayImage::from_fn(li.width, li.height, |c, r| left_samples[r * li.width + c].intensity);
    let mut right = GrayImage::from_fn(ri.width, ri.height, |c, r| right_samples[r * ri.width + c].intensity);
    if noise.intensity_sigma > 0.0 {
        let mut stream = noise_stream(noise.seed);
        for img in [&mut left, &mut right] {
            for v in img.values_mut() {
                *v = (*v + noise.intensity_sigma * stream.next_normal()).clamp(0.0, 1.0);
            }
        }
    }
    Ok(StereoPair {
        left,
        right,
        truth,
        truth_match,
        truth_points,
    })
}

/// Corner observation of a calibration board.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerObservation {
    pub view_id: usize,
    pub camera: CameraId,
    /// Board frame, z = 0.
    pub board_point: Vec3,
    pub pixel: Pixel,
}

/// Observes `board_points` from every pose in both cameras, keeping the
/// corners that land in the image and adding seeded pixel noise.
pub fn observe_board(
    rig: &StereoRig,
    board_points: &[Vec3],
    board_poses: &[RigidTransform],
    noise: &NoiseSpec,
) -> Vec<CornerObservation> {
    let mut stream = noise_stream(noise.seed);
    let mut out = Vec::new();
    for (view_id, pose) in board_poses.iter().enumerate() {
        for camera in [CameraId::Left, CameraId::Right] {
            for bp in board_points {
                let world = pose.apply(bp);
                let Ok(proj) = forward_project(rig, camera, &world) else {
                    continue;
                };
                let mut pixel = proj.pixel;
                if noise.pixel_sigma > 0.0 {
                    pixel.x += noise.pixel_sigma * stream.next_normal();
                    pixel.y += noise.pixel_sigma * stream.next_normal();
                }
                if rig.camera(camera).intrinsics.contains(&pixel) {
                    out.push(CornerObservation {
                        view_id,
                        camera,
                        board_point: *bp,
                        pixel,
                    });
                }
            }
        }
    }
    out
}
