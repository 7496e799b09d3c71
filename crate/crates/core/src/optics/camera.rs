use nalgebra::{Matrix3, Vector2};

use super::OpticsError;
use crate::geometry::{Ray, Vec3};

pub type Pixel = Vector2<f64>;

const UNDISTORT_MAX_ITERS: usize = 50;
const UNDISTORT_TOL: f64 = 1e-12;

/// Pinhole intrinsics with two-term radial distortion
/// `r_d = r (1 + k1 r^2 + k2 r^4)` in normalized coordinates.
///
/// Pixel coordinates put integer values at pixel centers: column `u` in
/// `[0, width)`, row `v` in `[0, height)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub k1: f64,
    pub k2: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        k1: f64,
        k2: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, OpticsError> {
        let intr = Self {
            fx,
            fy,
            cx,
            cy,
            k1,
            k2,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<(), OpticsError> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(OpticsError::InvalidIntrinsics("focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(OpticsError::InvalidIntrinsics("image size must be positive".into()));
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy) {
            return Err(OpticsError::InvalidIntrinsics(
                "principal point outside the image".into(),
            ));
        }
        if !(self.k1.is_finite() && self.k2.is_finite()) {
            return Err(OpticsError::InvalidIntrinsics("non-finite distortion".into()));
        }
        self.check_distortion_monotone()
    }

    fn distort_factor(&self, r2: f64) -> f64 {
        1.0 + self.k1 * r2 + self.k2 * r2 * r2
    }

    /// The radial map must be strictly increasing up to the largest distorted
    /// radius found on the image border, otherwise undistortion is ambiguous.
    fn check_distortion_monotone(&self) -> Result<(), OpticsError> {
        let w = self.width as f64 - 0.5;
        let h = self.height as f64 - 0.5;
        let rd_max = [(-0.5, -0.5), (w, -0.5), (-0.5, h), (w, h)]
            .iter()
            .map(|&(u, v)| {
                let x = (u - self.cx) / self.fx;
                let y = (v - self.cy) / self.fy;
                (x * x + y * y).sqrt()
            })
            .fold(0.0, f64::max);
        let step = rd_max / 1000.0;
        let mut r = 0.0;
        for _ in 0..1_000_000 {
            let r2 = r * r;
            if 1.0 + 3.0 * self.k1 * r2 + 5.0 * self.k2 * r2 * r2 <= 0.0 {
                return Err(OpticsError::InvalidIntrinsics(
                    "radial distortion is not invertible over the image".into(),
                ));
            }
            if r * self.distort_factor(r2) >= rd_max {
                return Ok(());
            }
            r += step;
        }
        Err(OpticsError::InvalidIntrinsics(
            "radial distortion never reaches the image border".into(),
        ))
    }

    pub fn contains(&self, pixel: &Pixel) -> bool {
        pixel.x >= -0.5
            && pixel.y >= -0.5
            && pixel.x < self.width as f64 - 0.5
            && pixel.y < self.height as f64 - 0.5
    }

    /// Normalized undistorted camera coordinates to pixels.
    pub fn distort_and_scale(&self, x: f64, y: f64) -> Pixel {
        let f = self.distort_factor(x * x + y * y);
        Pixel::new(self.cx + self.fx * x * f, self.cy + self.fy * y * f)
    }

    /// Pixels to normalized undistorted coordinates, inverting the radial map
    /// with Newton steps on the radius.
    pub fn undistort(&self, pixel: &Pixel) -> Result<(f64, f64), OpticsError> {
        let xd = (pixel.x - self.cx) / self.fx;
        let yd = (pixel.y - self.cy) / self.fy;
        let rd = (xd * xd + yd * yd).sqrt();
        if rd == 0.0 || (self.k1 == 0.0 && self.k2 == 0.0) {
            return Ok((xd, yd));
        }
        let mut r = rd;
        for _ in 0..UNDISTORT_MAX_ITERS {
            let r2 = r * r;
            let residual = r * self.distort_factor(r2) - rd;
            if residual.abs() < UNDISTORT_TOL {
                let s = r / rd;
                return Ok((xd * s, yd * s));
            }
            let slope = 1.0 + 3.0 * self.k1 * r2 + 5.0 * self.k2 * r2 * r2;
            if slope <= 0.0 {
                break;
            }
            r -= residual / slope;
        }
        Err(OpticsError::DistortionInversionFailed)
    }
}

/// World-to-camera transform: `x_cam = rotation * x_world + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl CameraPose {
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self, OpticsError> {
        let pose = Self {
            rotation,
            translation,
        };
        pose.validate()?;
        Ok(pose)
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Camera placed at `center` in the world with the given world-to-camera rotation.
    pub fn from_center(rotation: Matrix3<f64>, center: Vec3) -> Result<Self, OpticsError> {
        Self::new(rotation, -(rotation * center))
    }

    pub fn validate(&self) -> Result<(), OpticsError> {
        let r = &self.rotation;
        let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
        if !(ortho <= 1e-10) || !((r.determinant() - 1.0).abs() <= 1e-10) {
            return Err(OpticsError::InvalidPose);
        }
        if !self.translation.iter().all(|t| t.is_finite()) {
            return Err(OpticsError::InvalidPose);
        }
        Ok(())
    }

    pub fn center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    /// Optical axis as a world-frame unit vector.
    pub fn axis(&self) -> Vec3 {
        self.rotation.row(2).transpose()
    }

    pub fn to_camera(&self, point_world: &Vec3) -> Vec3 {
        self.rotation * point_world + self.translation
    }
}

/// A calibrated camera: intrinsics plus its pose in the world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub intrinsics: CameraIntrinsics,
    pub pose: CameraPose,
}

impl Camera {
    pub fn project(&self, point_world: &Vec3) -> Result<Pixel, OpticsError> {
        project_pinhole(&self.intrinsics, &self.pose, point_world)
    }

    pub fn unproject(&self, pixel: &Pixel) -> Result<Ray, OpticsError> {
        unproject_pinhole(&self.intrinsics, &self.pose, pixel)
    }
}

/// Ordinary in-air projection: pose, perspective division, radial distortion,
/// intrinsics. The result may fall outside the image.
pub fn project_pinhole(
    intr: &CameraIntrinsics,
    pose: &CameraPose,
    point_world: &Vec3,
) -> Result<Pixel, OpticsError> {
    let pc = pose.to_camera(point_world);
    if !(pc.z > 1e-9) {
        return Err(OpticsError::PointBehindCamera);
    }
    Ok(intr.distort_and_scale(pc.x / pc.z, pc.y / pc.z))
}

/// Air ray from the camera center through `pixel`, in world coordinates.
pub fn unproject_pinhole(
    intr: &CameraIntrinsics,
    pose: &CameraPose,
    pixel: &Pixel,
) -> Result<Ray, OpticsError> {
    if !intr.contains(pixel) {
        return Err(OpticsError::PixelOutOfBounds {
            u: pixel.x,
            v: pixel.y,
        });
    }
    let (x, y) = intr.undistort(pixel)?;
    let dir_cam = Vec3::new(x, y, 1.0);
    let dir = pose.rotation.transpose() * dir_cam;
    Ok(Ray {
        origin: pose.center(),
        direction: dir / dir.norm(),
        medium_index: 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Rotation3;

    fn intr(k1: f64, k2: f64) -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 320.0, 320.0, k1, k2, 640, 640).unwrap()
    }

    #[test]
    fn axial_point_hits_principal_point() {
        let i = intr(-0.1, 0.02);
        for z in [0.1, 1.0, 30.0] {
            let p = project_pinhole(&i, &CameraPose::identity(), &Vec3::new(0.0, 0.0, z)).unwrap();
            assert_eq!(p, Pixel::new(320.0, 320.0));
        }
    }

    #[test]
    fn simple_projection() {
        let p = project_pinhole(&intr(0.0, 0.0), &CameraPose::identity(), &Vec3::new(0.1, 0.0, 1.0)).unwrap();
        assert_relative_eq!(p, Pixel::new(370.0, 320.0), epsilon = 1e-12);
    }

    #[test]
    fn point_in_camera_plane_is_behind() {
        let e = project_pinhole(&intr(0.0, 0.0), &CameraPose::identity(), &Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(e, Err(OpticsError::PointBehindCamera));
    }

    #[test]
    fn principal_point_unprojects_to_axis() {
        let pose = CameraPose::from_center(
            *Rotation3::from_euler_angles(0.1, -0.2, 0.05).matrix(),
            Vec3::new(0.3, 0.1, -0.2),
        )
        .unwrap();
        let ray = unproject_pinhole(&intr(-0.2, 0.05), &pose, &Pixel::new(320.0, 320.0)).unwrap();
        assert_relative_eq!(ray.direction, pose.axis(), epsilon = 1e-15);
        assert_relative_eq!(ray.origin, Vec3::new(0.3, 0.1, -0.2), epsilon = 1e-15);
    }

    #[test]
    fn corner_round_trip_with_strong_distortion() {
        let i = intr(-0.2, 0.05);
        let pose = CameraPose::identity();
        for px in [Pixel::new(0.0, 0.0), Pixel::new(639.0, 639.0), Pixel::new(-0.49, 639.4)] {
            let ray = unproject_pinhole(&i, &pose, &px).unwrap();
            let back = project_pinhole(&i, &pose, &ray.at(2.0)).unwrap();
            assert!((back - px).norm() < 1e-9, "{px} -> {back}");
        }
    }

    #[test]
    fn non_invertible_distortion_rejected() {
        // 1 + 3 k1 r^2 turns negative well inside the image
        assert!(CameraIntrinsics::new(500.0, 500.0, 320.0, 320.0, -1.0, 0.0, 640, 640).is_err());
        assert!(CameraIntrinsics::new(500.0, 500.0, 700.0, 320.0, 0.0, 0.0, 640, 640).is_err());
        assert!(CameraIntrinsics::new(-1.0, 500.0, 320.0, 320.0, 0.0, 0.0, 640, 640).is_err());
    }

    #[test]
    fn out_of_bounds_pixel_rejected() {
        let e = unproject_pinhole(&intr(0.0, 0.0), &CameraPose::identity(), &Pixel::new(640.0, 3.0));
        assert!(matches!(e, Err(OpticsError::PixelOutOfBounds { .. })));
    }

    #[test]
    fn reflection_is_not_a_pose() {
        let m = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert_eq!(CameraPose::new(m, Vec3::zeros()), Err(OpticsError::InvalidPose));
    }
}
