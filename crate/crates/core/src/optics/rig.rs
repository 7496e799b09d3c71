use super::{water_refractive_index, Camera, EnvironmentSample, IndexCoefficients, OpticsError};
use crate::geometry::{MediaIndices, PortPlane};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CameraId {
    Left,
    Right,
}

impl CameraId {
    pub fn other(self) -> Self {
        match self {
            CameraId::Left => CameraId::Right,
            CameraId::Right => CameraId::Left,
        }
    }

    pub fn letter(self) -> char {
        match self {
            CameraId::Left => 'L',
            CameraId::Right => 'R',
        }
    }
}

/// Two cameras behind one shared flat port.
///
/// Rigs are plain values; a change of water conditions produces a new rig
/// rather than mutating one in place.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StereoRig {
    pub left: Camera,
    pub right: Camera,
    pub port: PortPlane,
    pub media: MediaIndices,
    pub index_coefficients: IndexCoefficients,
}

impl StereoRig {
    pub fn new(
        left: Camera,
        right: Camera,
        port: PortPlane,
        media: MediaIndices,
        index_coefficients: IndexCoefficients,
    ) -> Result<Self, OpticsError> {
        let rig = Self {
            left,
            right,
            port,
            media,
            index_coefficients,
        };
        rig.validate()?;
        Ok(rig)
    }

    pub fn validate(&self) -> Result<(), OpticsError> {
        let n = self.port.normal();
        for (id, cam) in [(CameraId::Left, &self.left), (CameraId::Right, &self.right)] {
            cam.intrinsics.validate()?;
            cam.pose.validate()?;
            if !(n.dot(&cam.pose.center()) < self.port.inner_offset() - 1e-6) {
                return Err(OpticsError::InvalidRig(format!(
                    "{id:?} camera center is not on the air side of the port"
                )));
            }
            if !(cam.pose.axis().dot(&n) > 0.0) {
                return Err(OpticsError::InvalidRig(format!(
                    "{id:?} camera does not look through the port"
                )));
            }
        }
        MediaIndices::new(self.media.n_air, self.media.n_glass, self.media.n_water)
            .map_err(|e| OpticsError::InvalidRig(e.to_string()))?;
        Ok(())
    }

    pub fn camera(&self, id: CameraId) -> &Camera {
        match id {
            CameraId::Left => &self.left,
            CameraId::Right => &self.right,
        }
    }

    pub fn camera_mut(&mut self, id: CameraId) -> &mut Camera {
        match id {
            CameraId::Left => &mut self.left,
            CameraId::Right => &mut self.right,
        }
    }

    /// Same rig with refraction switched off (all media index 1).
    pub fn without_refraction(&self) -> Self {
        Self {
            media: MediaIndices::unit(),
            ..*self
        }
    }

    pub fn with_water_index(&self, n_water: f64) -> Self {
        let mut rig = *self;
        rig.media.n_water = n_water;
        rig
    }
}

/// Re-derives the water index from the current environment and returns the
/// updated rig. The input rig is untouched.
pub fn apply_environment(rig: &StereoRig, env: &EnvironmentSample) -> Result<StereoRig, OpticsError> {
    let n = water_refractive_index(env, &rig.index_coefficients)?;
    Ok(rig.with_water_index(n))
}
