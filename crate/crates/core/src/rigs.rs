//! Reference rigs used throughout the tests, the guide and the CLI defaults.

use nalgebra::{Matrix3, Rotation3};

use crate::geometry::{MediaIndices, PortPlane, Vec3};
use crate::optics::{Camera, CameraIntrinsics, CameraPose, IndexCoefficients, StereoRig};

pub const STANDARD_WIDTH: usize = 320;
pub const STANDARD_HEIGHT: usize = 240;
pub const STANDARD_BASELINE: f64 = 0.3;
pub const STANDARD_TILT_DEG: f64 = 10.0;
/// Depth at which the two optical axes cross.
pub const STANDARD_CONVERGENCE: f64 = 2.0;
pub const STANDARD_WATER_INDEX: f64 = 1.33;

/// Port normal tilted away from the camera axes by `tilt_deg` about the x axis.
pub fn tilted_normal(tilt_deg: f64) -> Vec3 {
    Rotation3::from_axis_angle(&Vec3::x_axis(), tilt_deg.to_radians()) * Vec3::z()
}

/// The standard tilted test rig at any image size. Focal length and principal
/// point scale with the width so the field of view stays fixed.
pub fn standard_sized(width: usize, height: usize) -> StereoRig {
    let scale = width as f64 / STANDARD_WIDTH as f64;
    let intr = CameraIntrinsics::new(
        360.0 * scale,
        360.0 * scale,
        (width as f64 - 1.0) / 2.0,
        (height as f64 - 1.0) / 2.0,
        0.0,
        0.0,
        width,
        height,
    )
    .expect("reference intrinsics");
    let left = Camera {
        intrinsics: intr,
        pose: CameraPose::identity(),
    };
    // right camera toed in so both axes meet at the convergence depth once
    // the axis has refracted into water
    let water_angle = (STANDARD_BASELINE / STANDARD_CONVERGENCE).atan();
    let toe_in = (STANDARD_WATER_INDEX * water_angle.sin()).asin();
    let cam_to_world = Rotation3::from_axis_angle(&Vec3::y_axis(), -toe_in);
    let right = Camera {
        intrinsics: intr,
        pose: CameraPose::from_center(*cam_to_world.inverse().matrix(), Vec3::new(STANDARD_BASELINE, 0.0, 0.0))
            .expect("reference pose"),
    };
    let port = PortPlane::new(tilted_normal(STANDARD_TILT_DEG), 0.05, 0.01).expect("reference port");
    let media = MediaIndices::new(1.0, 1.49, STANDARD_WATER_INDEX).expect("reference media");
    StereoRig::new(left, right, port, media, IndexCoefficients::default()).expect("reference rig")
}

/// 320x240 cameras, 0.3 m baseline converging at 2 m, port 0.05 m ahead
/// tilted 10 degrees, 0.01 m glass, indices (1.0, 1.49, 1.33).
pub fn standard() -> StereoRig {
    standard_sized(STANDARD_WIDTH, STANDARD_HEIGHT)
}

/// Rectified in-air rig: identical distortion-free cameras with identity
/// rotations, pure x baseline, untilted port and all indices 1.
pub fn rectified_sized(width: usize, height: usize) -> StereoRig {
    let mut rig = standard_sized(width, height);
    let intr = CameraIntrinsics {
        k1: 0.0,
        k2: 0.0,
        ..rig.left.intrinsics
    };
    rig.left.intrinsics = intr;
    rig.right.intrinsics = intr;
    rig.right.pose = CameraPose::from_center(Matrix3::identity(), Vec3::new(STANDARD_BASELINE, 0.0, 0.0))
        .expect("reference pose");
    rig.port = PortPlane::new(Vec3::z(), 0.05, 0.01).expect("reference port");
    rig.media = MediaIndices::unit();
    rig
}

pub fn rectified() -> StereoRig {
    rectified_sized(STANDARD_WIDTH, STANDARD_HEIGHT)
}
