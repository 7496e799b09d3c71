//! Exact vector geometry for a flat glass port.
//!
//! Everything here works on direction vectors, never on stored angles. Surface
//! normals are re-oriented along the direction of propagation internally, so
//! callers may pass either orientation.

use nalgebra::{Matrix3, Rotation3, Vector3};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

const PARALLEL_EPS: f64 = 1e-14;
const UNIT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeometryError {
    #[error("total internal reflection (n1 sin(theta1) / n2 = {ratio})")]
    TotalInternalReflection { ratio: f64 },
    #[error("ray has no forward intersection with the plane")]
    NoForwardIntersection,
    #[error("rays are parallel")]
    DegenerateRays,
    #[error("closest approach lies behind a ray origin")]
    BehindCamera,
    #[error("invalid port: {0}")]
    InvalidPort(&'static str),
    #[error("invalid media indices: {0}")]
    InvalidMedia(&'static str),
    #[error("invalid ray: {0}")]
    InvalidRay(&'static str),
}

/// A half-line in world coordinates, tagged with the refractive index of the
/// medium it travels in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub medium_index: f64,
}

impl Ray {
    /// Builds a ray, normalizing `direction`.
    pub fn new(origin: Vec3, direction: Vec3, medium_index: f64) -> Result<Self, GeometryError> {
        let norm = direction.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(GeometryError::InvalidRay("zero or non-finite direction"));
        }
        if !(medium_index >= 1.0) {
            return Err(GeometryError::InvalidRay("medium index below 1"));
        }
        Ok(Self {
            origin,
            direction: direction / norm,
            medium_index,
        })
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// Planar glass window. The inner (air side) surface is
/// `{x : normal . x = inner_offset}`, the outer (water side) surface sits
/// `thickness` further along `normal`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortPlane {
    normal: Vec3,
    inner_offset: f64,
    thickness: f64,
}

impl PortPlane {
    pub fn new(normal: Vec3, inner_offset: f64, thickness: f64) -> Result<Self, GeometryError> {
        if (normal.norm() - 1.0).abs() > UNIT_EPS {
            return Err(GeometryError::InvalidPort("normal must be unit length"));
        }
        if !(thickness > 0.0 && thickness.is_finite()) {
            return Err(GeometryError::InvalidPort("thickness must be positive"));
        }
        if !inner_offset.is_finite() {
            return Err(GeometryError::InvalidPort("inner offset must be finite"));
        }
        Ok(Self {
            normal,
            inner_offset,
            thickness,
        })
    }

    pub fn normal(&self) -> Vec3 {
        self.normal
    }

    pub fn inner_offset(&self) -> f64 {
        self.inner_offset
    }

    pub fn thickness(&self) -> f64 {
        self.thickness
    }

    pub fn outer_offset(&self) -> f64 {
        self.inner_offset + self.thickness
    }

    /// Signed distance past the outer surface; positive means water side.
    pub fn water_depth_of(&self, point: &Vec3) -> f64 {
        self.normal.dot(point) - self.outer_offset()
    }
}

/// Refractive indices of the three media a ray crosses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MediaIndices {
    pub n_air: f64,
    pub n_glass: f64,
    pub n_water: f64,
}

impl MediaIndices {
    pub fn new(n_air: f64, n_glass: f64, n_water: f64) -> Result<Self, GeometryError> {
        for n in [n_air, n_glass, n_water] {
            if !(1.0..=2.0).contains(&n) {
                return Err(GeometryError::InvalidMedia("indices must lie in [1, 2]"));
            }
        }
        Ok(Self {
            n_air,
            n_glass,
            n_water,
        })
    }

    /// All three media set to vacuum index; refraction disappears.
    pub fn unit() -> Self {
        Self {
            n_air: 1.0,
            n_glass: 1.0,
            n_water: 1.0,
        }
    }
}

/// Rigid motion `x -> rotation * x + translation`, used for board and
/// target-plane poses (local frame to world).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::new(Matrix3::identity(), Vec3::zeros())
    }

    /// Rotation about `axis` (any length) by `angle_deg`, then translation.
    pub fn from_axis_angle(axis: Vec3, angle_deg: f64, translation: Vec3) -> Self {
        let rot = if axis.norm() == 0.0 || angle_deg == 0.0 {
            Matrix3::identity()
        } else {
            *Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle_deg.to_radians()).matrix()
        };
        Self::new(rot, translation)
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// Local z axis expressed in the world frame.
    pub fn normal(&self) -> Vec3 {
        self.rotation.column(2).into_owned()
    }

    pub fn inverse_apply(&self, p: &Vec3) -> Vec3 {
        self.rotation.transpose() * (p - self.translation)
    }

    /// Composes a small rotation increment (axis-angle vector, world frame)
    /// onto the current rotation.
    pub fn perturbed(&self, rotation_increment: &Vec3, translation_increment: &Vec3) -> Self {
        let delta = Rotation3::new(*rotation_increment);
        Self::new(delta.matrix() * self.rotation, self.translation + translation_increment)
    }
}

/// Refracts a unit direction crossing a surface from index `n1` into `n2`.
///
/// The result satisfies Snell's law, stays in the plane of `incident` and
/// `surface_normal`, and is unit length. Normal incidence and matched indices
/// both return `incident` unchanged.
pub fn refract_direction(
    incident: &Vec3,
    surface_normal: &Vec3,
    n1: f64,
    n2: f64,
) -> Result<Vec3, GeometryError> {
    let mut normal = *surface_normal;
    let mut cos1 = incident.dot(&normal);
    if cos1 < 0.0 {
        normal = -normal;
        cos1 = -cos1;
    }
    if n1 == n2 {
        return Ok(*incident);
    }
    // tangential part of the incident direction; its norm is sin(theta1)
    let tangent = incident - normal * cos1;
    let sin1 = tangent.norm();
    let ratio = n1 * sin1 / n2;
    if ratio > 1.0 {
        return Err(GeometryError::TotalInternalReflection { ratio });
    }
    let cos2 = (1.0 - ratio * ratio).sqrt();
    let refracted = tangent * (n1 / n2) + normal * cos2;
    Ok(refracted / refracted.norm())
}

/// Intersects `ray` with the plane `{x : normal . x = offset}` in front of it.
pub fn intersect_ray_plane(ray: &Ray, normal: &Vec3, offset: f64) -> Result<Vec3, GeometryError> {
    let denom = normal.dot(&ray.direction);
    if denom.abs() < PARALLEL_EPS {
        return Err(GeometryError::NoForwardIntersection);
    }
    let t = (offset - normal.dot(&ray.origin)) / denom;
    if !(t > 0.0) {
        return Err(GeometryError::NoForwardIntersection);
    }
    Ok(ray.at(t))
}

/// Carries an air-side ray through both glass surfaces and returns the ray
/// leaving the outer surface into the water.
pub fn trace_through_port(
    ray_air: &Ray,
    port: &PortPlane,
    media: &MediaIndices,
) -> Result<Ray, GeometryError> {
    let normal = port.normal();
    if normal.dot(&ray_air.origin) >= port.inner_offset() {
        return Err(GeometryError::NoForwardIntersection);
    }
    let p1 = intersect_ray_plane(ray_air, &normal, port.inner_offset())?;
    let d_glass = refract_direction(&ray_air.direction, &normal, media.n_air, media.n_glass)?;
    let in_glass = Ray {
        origin: p1,
        direction: d_glass,
        medium_index: media.n_glass,
    };
    let mut p2 = intersect_ray_plane(&in_glass, &normal, port.outer_offset())?;
    // pin the origin onto the outer plane to the last ulp
    p2 += normal * (port.outer_offset() - normal.dot(&p2));
    let d_water = refract_direction(&d_glass, &normal, media.n_glass, media.n_water)?;
    Ok(Ray {
        origin: p2,
        direction: d_water,
        medium_index: media.n_water,
    })
}

/// Closest points between two forward half-lines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPoints {
    pub point_a: Vec3,
    pub point_b: Vec3,
    pub midpoint: Vec3,
    pub gap: f64,
}

/// Solves the 2x2 normal equations of the common perpendicular of two rays.
///
/// The formulation is symmetric in its arguments: swapping the rays swaps
/// `point_a` and `point_b` and leaves `midpoint` and `gap` bit-identical.
pub fn closest_point_pair(ray_a: &Ray, ray_b: &Ray) -> Result<ClosestPoints, GeometryError> {
    let da = ray_a.direction;
    let db = ray_b.direction;
    if da.cross(&db).norm() <= PARALLEL_EPS {
        return Err(GeometryError::DegenerateRays);
    }
    let w = ray_a.origin - ray_b.origin;
    let b = da.dot(&db);
    let d = da.dot(&w);
    let e = db.dot(&w);
    let denom = 1.0 - b * b;
    if denom <= 0.0 {
        return Err(GeometryError::DegenerateRays);
    }
    let s = (b * e - d) / denom;
    let t = (e - b * d) / denom;
    if s < 0.0 || t < 0.0 {
        return Err(GeometryError::BehindCamera);
    }
    let point_a = ray_a.at(s);
    let point_b = ray_b.at(t);
    Ok(ClosestPoints {
        point_a,
        point_b,
        midpoint: (point_a + point_b) * 0.5,
        gap: (point_a - point_b).norm(),
    })
}
