//! Cameras, the stereo rig and the water index model.

mod camera;
mod index;
mod rig;

use thiserror::Error;

pub use camera::{project_pinhole, unproject_pinhole, Camera, CameraIntrinsics, CameraPose, Pixel};
pub use index::{water_refractive_index, EnvironmentSample, IndexCoefficients};
pub use rig::{apply_environment, CameraId, StereoRig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OpticsError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("rotation is not a proper orthonormal matrix")]
    InvalidPose,
    #[error("invalid rig: {0}")]
    InvalidRig(String),
    #[error("point is behind the camera")]
    PointBehindCamera,
    #[error("pixel ({u}, {v}) is outside the image")]
    PixelOutOfBounds { u: f64, v: f64 },
    #[error("radial distortion inversion did not converge")]
    DistortionInversionFailed,
    #[error("invalid environment sample: {0}")]
    InvalidEnvironment(String),
    #[error("water index {0} outside the physical range (1.30, 1.40)")]
    IndexOutOfPhysicalRange(f64),
}
