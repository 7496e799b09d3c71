//! Refractive projection through the port.
//!
//! Backward: pixel -> air ray -> two refractions -> water ray.
//! Forward: a water point is imaged along the path of least optical length
//! from the camera center. With the two refraction points restricted to the
//! inner and outer glass planes the objective is a sum of weighted norms of
//! affine maps, hence convex, and Newton's method finds its unique minimum.

use nalgebra::{Matrix2x3, Matrix3, Matrix4, Vector4};
use thiserror::Error;

use crate::geometry::{trace_through_port, GeometryError, Ray, Vec3};
use crate::optics::{project_pinhole, unproject_pinhole, CameraId, OpticsError, Pixel, StereoRig};

const MAX_NEWTON_STEPS: usize = 100;
const GRADIENT_TOL: f64 = 1e-12;
/// Newton steps shorter than this, relative to the crossing coordinates, are rounding.
const STEP_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProjectionError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error("water ray never reaches depth {0} m")]
    DepthNotReachable(f64),
    #[error("point is not on the water side of the port")]
    PointNotInWater,
    #[error("optical path minimization did not converge")]
    ConvergenceFailure,
}

/// A ray leaving the outer port surface, with the pixel it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaterRay {
    pub ray: Ray,
    pub camera: CameraId,
    pub pixel: Pixel,
}

pub fn back_project(rig: &StereoRig, camera: CameraId, pixel: &Pixel) -> Result<WaterRay, ProjectionError> {
    let cam = rig.camera(camera);
    let air = unproject_pinhole(&cam.intrinsics, &cam.pose, pixel)?;
    let ray = trace_through_port(&air, &rig.port, &rig.media)?;
    Ok(WaterRay {
        ray,
        camera,
        pixel: *pixel,
    })
}

/// Depth of a world point for `camera`: its coordinate along the optical
/// axis, measured from the camera center.
pub fn depth_of(rig: &StereoRig, camera: CameraId, point: &Vec3) -> f64 {
    let pose = &rig.camera(camera).pose;
    pose.axis().dot(&(point - pose.center()))
}

/// Point on the pixel's water ray at the requested depth.
pub fn point_at_depth(
    rig: &StereoRig,
    camera: CameraId,
    pixel: &Pixel,
    depth_z: f64,
) -> Result<Vec3, ProjectionError> {
    let water = back_project(rig, camera, pixel)?;
    point_on_ray_at_depth(rig, camera, &water.ray, depth_z)
}

pub(crate) fn point_on_ray_at_depth(
    rig: &StereoRig,
    camera: CameraId,
    ray: &Ray,
    depth_z: f64,
) -> Result<Vec3, ProjectionError> {
    let pose = &rig.camera(camera).pose;
    let axis = pose.axis();
    let rate = axis.dot(&ray.direction);
    if !(rate > 0.0) {
        return Err(ProjectionError::DepthNotReachable(depth_z));
    }
    let s = (depth_z - axis.dot(&(ray.origin - pose.center()))) / rate;
    if !(s >= 0.0) {
        return Err(ProjectionError::DepthNotReachable(depth_z));
    }
    Ok(ray.at(s))
}

/// Stationary light path from a camera center to a water point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FermatPath {
    pub center: Vec3,
    /// Crossing of the inner (air/glass) surface.
    pub inner: Vec3,
    /// Crossing of the outer (glass/water) surface.
    pub outer: Vec3,
    pub target: Vec3,
    pub optical_length: f64,
    pub newton_steps: usize,
}

/// Pixel of a forward projection; `in_image` is false when the pixel falls
/// outside the sensor, in which case the coordinates are still meaningful.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub pixel: Pixel,
    pub in_image: bool,
}

/// Orthonormal tangent basis of the port planes, stored as rows.
fn plane_basis(normal: &Vec3) -> Matrix2x3<f64> {
    let helper = if normal.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = (helper - normal * normal.dot(&helper)).normalize();
    let e2 = normal.cross(&e1);
    Matrix2x3::from_rows(&[e1.transpose(), e2.transpose()])
}

/// Optical path length through the given surface crossings.
pub fn optical_length(rig: &StereoRig, center: &Vec3, inner: &Vec3, outer: &Vec3, target: &Vec3) -> f64 {
    let m = &rig.media;
    m.n_air * (inner - center).norm() + m.n_glass * (outer - inner).norm() + m.n_water * (target - outer).norm()
}

/// Minimizes the optical path length from the camera center to `point` over
/// the two surface crossings with damped Newton steps.
pub fn fermat_path(rig: &StereoRig, camera: CameraId, point: &Vec3) -> Result<FermatPath, ProjectionError> {
    let port = &rig.port;
    let normal = port.normal();
    if !(port.water_depth_of(point) > 0.0) {
        return Err(ProjectionError::PointNotInWater);
    }
    let center = rig.camera(camera).pose.center();
    let basis = plane_basis(&normal);
    let inner_origin = normal * port.inner_offset();
    let outer_origin = normal * port.outer_offset();
    let [na, ng, nw] = [rig.media.n_air, rig.media.n_glass, rig.media.n_water];

    // straight chord from the center to the point; exact when indices match
    let chord = Ray {
        origin: center,
        direction: (point - center).normalize(),
        medium_index: rig.media.n_air,
    };
    let start_inner = crate::geometry::intersect_ray_plane(&chord, &normal, port.inner_offset())?;
    let start_outer = crate::geometry::intersect_ray_plane(&chord, &normal, port.outer_offset())?;
    let mut x = Vector4::new(
        basis.row(0).dot(&start_inner.transpose()),
        basis.row(1).dot(&start_inner.transpose()),
        basis.row(0).dot(&start_outer.transpose()),
        basis.row(1).dot(&start_outer.transpose()),
    );

    let crossings = |x: &Vector4<f64>| {
        let inner = inner_origin + basis.transpose() * x.fixed_rows::<2>(0);
        let outer = outer_origin + basis.transpose() * x.fixed_rows::<2>(2);
        (inner, outer)
    };
    let length = |x: &Vector4<f64>| {
        let (inner, outer) = crossings(x);
        optical_length(rig, &center, &inner, &outer, point)
    };

    let mut value = length(&x);
    // set once a full Newton step no longer moves the crossings by more than
    // rounding; a very thin glass segment puts the gradient's noise floor
    // above the relative tolerance
    let mut stalled = false;
    for step in 0..=MAX_NEWTON_STEPS {
        let (inner, outer) = crossings(&x);
        let segs = [inner - center, outer - inner, point - outer];
        let lens = segs.map(|s| s.norm());
        let dirs = [segs[0] / lens[0], segs[1] / lens[1], segs[2] / lens[2]];

        let g_inner = dirs[0] * na - dirs[1] * ng;
        let g_outer = dirs[1] * ng - dirs[2] * nw;
        let g2_inner = basis * g_inner;
        let g2_outer = basis * g_outer;
        let grad = Vector4::new(g2_inner.x, g2_inner.y, g2_outer.x, g2_outer.y);

        let geometric: f64 = lens.iter().sum();
        if grad.norm() < GRADIENT_TOL * geometric || stalled {
            return Ok(FermatPath {
                center,
                inner,
                outer,
                target: *point,
                optical_length: value,
                newton_steps: step,
            });
        }
        if step == MAX_NEWTON_STEPS {
            break;
        }

        let hess_seg = |k: usize, n: f64| -> Matrix3<f64> {
            (Matrix3::identity() - dirs[k] * dirs[k].transpose()) * (n / lens[k])
        };
        let h1 = hess_seg(0, na);
        let h2 = hess_seg(1, ng);
        let h3 = hess_seg(2, nw);
        let bt = basis.transpose();
        let a = basis * (h1 + h2) * bt;
        let b = -(basis * h2 * bt);
        let c = basis * (h2 + h3) * bt;
        let mut hess = Matrix4::zeros();
        hess.fixed_view_mut::<2, 2>(0, 0).copy_from(&a);
        hess.fixed_view_mut::<2, 2>(0, 2).copy_from(&b);
        hess.fixed_view_mut::<2, 2>(2, 0).copy_from(&b.transpose());
        hess.fixed_view_mut::<2, 2>(2, 2).copy_from(&c);

        let delta = match hess.cholesky() {
            Some(ch) => -ch.solve(&grad),
            None => -grad,
        };
        if delta.norm() <= STEP_FLOOR * x.norm().max(geometric) {
            stalled = true;
            continue;
        }
        let mut alpha = 1.0;
        let slack = 4.0 * f64::EPSILON * value;
        loop {
            let trial = x + delta * alpha;
            let trial_value = length(&trial);
            if trial_value <= value + slack {
                x = trial;
                value = trial_value;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-12 {
                return Err(ProjectionError::ConvergenceFailure);
            }
        }
    }
    Err(ProjectionError::ConvergenceFailure)
}

/// Images a water point through the port.
pub fn forward_project(rig: &StereoRig, camera: CameraId, point: &Vec3) -> Result<Projection, ProjectionError> {
    let path = fermat_path(rig, camera, point)?;
    let cam = rig.camera(camera);
    let pixel = project_pinhole(&cam.intrinsics, &cam.pose, &path.inner)?;
    Ok(Projection {
        pixel,
        in_image: cam.intrinsics.contains(&pixel),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{intersect_ray_plane, refract_direction};
    use crate::rigs;
    use approx::assert_relative_eq;

    #[test]
    fn unit_media_back_projection_is_pinhole() {
        let rig = rigs::standard().without_refraction();
        let px = Pixel::new(12.0, 230.0);
        let w = back_project(&rig, CameraId::Right, &px).unwrap();
        let air = rig.right.unproject(&px).unwrap();
        assert_relative_eq!(w.ray.direction, air.direction, epsilon = 1e-12);
        assert_eq!(w.camera, CameraId::Right);
    }

    #[test]
    fn axial_pixel_of_untilted_camera_stays_on_axis() {
        let mut rig = rigs::rectified();
        rig.media = crate::geometry::MediaIndices::new(1.0, 1.49, 1.33).unwrap();
        let c = rig.left.intrinsics;
        let w = back_project(&rig, CameraId::Left, &Pixel::new(c.cx, c.cy)).unwrap();
        assert_relative_eq!(w.ray.direction, Vec3::z(), epsilon = 1e-15);
        let p = point_at_depth(&rig, CameraId::Left, &Pixel::new(c.cx, c.cy), 5.0).unwrap();
        assert_relative_eq!(p, Vec3::new(0.0, 0.0, 5.0), epsilon = 1e-12);
        let back = forward_project(&rig, CameraId::Left, &Vec3::new(0.0, 0.0, 3.0)).unwrap();
        assert_relative_eq!(back.pixel, Pixel::new(c.cx, c.cy), epsilon = 1e-9);
    }

    #[test]
    fn tilted_corner_pixel_matches_hand_trace() {
        let rig = rigs::standard();
        let px = Pixel::new(0.0, 0.0);
        let w = back_project(&rig, CameraId::Left, &px).unwrap();

        // independent chain: undistort by bisection, then refract and intersect by hand
        let i = rig.left.intrinsics;
        let (xd, yd) = ((px.x - i.cx) / i.fx, (px.y - i.cy) / i.fy);
        let rd = (xd * xd + yd * yd).sqrt();
        let (mut lo, mut hi) = (0.0, 2.0 * rd);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * (1.0 + i.k1 * mid * mid + i.k2 * mid.powi(4)) < rd {
                lo = mid
            } else {
                hi = mid
            }
        }
        let s = 0.5 * (lo + hi) / rd;
        let d_air = Vec3::new(xd * s, yd * s, 1.0).normalize();
        let n = rig.port.normal();
        let air = Ray::new(Vec3::zeros(), d_air, 1.0).unwrap();
        let p1 = intersect_ray_plane(&air, &n, 0.05).unwrap();
        let d_glass = refract_direction(&d_air, &n, 1.0, 1.49).unwrap();
        let p2 = intersect_ray_plane(&Ray::new(p1, d_glass, 1.49).unwrap(), &n, 0.06).unwrap();
        let d_water = refract_direction(&d_glass, &n, 1.49, 1.33).unwrap();

        assert_relative_eq!(w.ray.direction, d_water, epsilon = 1e-12);
        assert_relative_eq!(w.ray.origin, p2, epsilon = 1e-12);
        assert!((w.ray.direction - d_air).norm() > 1e-2);
    }

    #[test]
    fn depth_round_trip_on_tilted_rig() {
        let rig = rigs::standard();
        for (u, v, z) in [(3.0, 5.0, 1.5), (160.0, 120.0, 0.4), (318.0, 2.0, 9.0)] {
            let px = Pixel::new(u, v);
            let x = point_at_depth(&rig, CameraId::Left, &px, z).unwrap();
            assert_relative_eq!(depth_of(&rig, CameraId::Left, &x), z, epsilon = 1e-12);
            let back = forward_project(&rig, CameraId::Left, &x).unwrap();
            assert!((back.pixel - px).norm() < 1e-6, "{} vs {}", back.pixel, px);
            assert!(back.in_image);
        }
    }

    #[test]
    fn depth_behind_port_not_reachable() {
        let rig = rigs::standard();
        let e = point_at_depth(&rig, CameraId::Left, &Pixel::new(100.0, 100.0), 0.01);
        assert!(matches!(e, Err(ProjectionError::DepthNotReachable(_))));
    }

    #[test]
    fn glass_points_are_rejected() {
        let rig = rigs::standard();
        let inside = rig.port.normal() * 0.055;
        assert_eq!(
            forward_project(&rig, CameraId::Left, &inside),
            Err(ProjectionError::PointNotInWater)
        );
    }

    #[test]
    fn out_of_image_is_flagged() {
        let rig = rigs::standard();
        let p = forward_project(&rig, CameraId::Left, &Vec3::new(3.0, 0.0, 1.0)).unwrap();
        assert!(!p.in_image);
        assert!(p.pixel.x > 320.0);
    }

    #[test]
    fn fermat_path_obeys_snell() {
        let rig = rigs::standard();
        let x = Vec3::new(0.4, -0.3, 1.7);
        let path = fermat_path(&rig, CameraId::Right, &x).unwrap();
        let n = rig.port.normal();
        let d1 = (path.inner - path.center).normalize();
        let d2 = (path.outer - path.inner).normalize();
        let d3 = (path.target - path.outer).normalize();
        let m = rig.media;
        assert_relative_eq!(refract_direction(&d1, &n, m.n_air, m.n_glass).unwrap(), d2, epsilon = 1e-10);
        assert_relative_eq!(refract_direction(&d2, &n, m.n_glass, m.n_water).unwrap(), d3, epsilon = 1e-10);
    }
}
