//! Coordinate frames, vector algebra and the rotation/Euler conversions shared
//! by the steering, scene and isolation modules.
//!
//! Conventions (used everywhere in this crate):
//! - The LiDAR optical center is the world origin.
//! - Right-handed frame: x forward (LiDAR boresight), y left, z up.
//! - Yaw is a rotation about the vertical (z) axis, pitch about the carried
//!   horizontal transverse axis, applied yaw-then-pitch. Positive pitch raises
//!   the direction toward +z; positive yaw turns it toward +y. There is no
//!   roll degree of freedom: a flat mirror is invariant to rotation about its
//!   own normal.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Tolerance below which a unit-vector sum is treated as anti-parallel.
pub const ANTIPARALLEL_TOL: f64 = 1e-9;

/// Angular distance (radians) from the vertical axis below which the
/// yaw/pitch decomposition is degenerate.
pub const GIMBAL_TOL_RAD: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum GeomError {
    /// `u + v` vanishes: the bisecting direction is undefined.
    #[error("bisector undefined for anti-parallel directions")]
    DegenerateBisector,
    /// No unique minimal rotation exists between anti-parallel directions.
    #[error("rotation undefined for anti-parallel directions")]
    DegenerateRotation,
    /// The decomposed normal is too close to the vertical axis for a
    /// well-defined yaw.
    #[error("normal within {GIMBAL_TOL_RAD} rad of the vertical axis")]
    GimbalDegenerate,
    #[error("cannot normalize a near-zero vector")]
    ZeroVector,
}

/// 3D vector in meters (unitless when normalized).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Unit vector in the same direction, or an error for near-zero input.
    pub fn normalized(self) -> Result<Vec3, GeomError> {
        let n = self.norm();
        if n < 1e-12 {
            return Err(GeomError::ZeroVector);
        }
        Ok(self / n)
    }

    pub fn distance(self, other: Vec3) -> f64 {
        (self - other).norm()
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl std::ops::Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl std::ops::Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl std::ops::Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

// Scene and config files spell vectors as `[x, y, z]`.
impl Serialize for Vec3 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        [self.x, self.y, self.z].serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Vec3 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let [x, y, z] = <[f64; 3]>::deserialize(deserializer)?;
        let v = Vec3::new(x, y, z);
        if !v.is_finite() {
            return Err(D::Error::custom("vector components must be finite"));
        }
        Ok(v)
    }
}

/// Fixed placement of the optical rig. The LiDAR origin anchors the world
/// frame; camera and mirror positions are expressed in it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigPose {
    #[serde(default)]
    pub lidar_origin: Vec3,
    pub camera_position: Vec3,
    pub mirror_position: Vec3,
    /// Mirror face direction when the FSM is at rest. Normalized on load.
    pub mirror_default_normal: Vec3,
}

impl Default for RigPose {
    /// Camera 0.25 m to the left of the mirror, looking across it; the rest
    /// normal bisects the camera ray and the forward boresight, so the
    /// default reflected beam runs along +x.
    fn default() -> Self {
        RigPose {
            lidar_origin: Vec3::ZERO,
            camera_position: Vec3::new(0.05, 0.25, 0.0),
            mirror_position: Vec3::new(0.05, 0.0, 0.0),
            mirror_default_normal: Vec3::new(std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2, 0.0),
        }
    }
}

/// Two-axis mirror attitude in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerPair {
    pub pitch_deg: f64,
    pub yaw_deg: f64,
}

/// Minimal-angle rotation, stored as axis-angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation {
    axis: Vec3,
    angle_rad: f64,
}

impl Rotation {
    pub const IDENTITY: Rotation = Rotation { axis: Vec3 { x: 1.0, y: 0.0, z: 0.0 }, angle_rad: 0.0 };

    /// Rotation about a unit axis by `angle_rad`.
    pub fn from_axis_angle(axis: Vec3, angle_rad: f64) -> Rotation {
        Rotation { axis, angle_rad }
    }

    pub fn angle_rad(&self) -> f64 {
        self.angle_rad
    }

    pub fn axis(&self) -> Vec3 {
        self.axis
    }

    /// Rodrigues rotation of `v` about the stored axis.
    pub fn apply(&self, v: Vec3) -> Vec3 {
        let k = self.axis;
        let (s, c) = self.angle_rad.sin_cos();
        v * c + k.cross(v) * s + k * (k.dot(v) * (1.0 - c))
    }

    pub fn inverse(&self) -> Rotation {
        Rotation { axis: -self.axis, angle_rad: self.angle_rad }
    }
}

/// Angle between two vectors in radians; robust near 0 and pi.
pub fn angle_between(u: Vec3, v: Vec3) -> f64 {
    u.cross(v).norm().atan2(u.dot(v))
}

/// Unit vector making equal angles with unit vectors `u` and `v`.
pub fn bisector(u: Vec3, v: Vec3) -> Result<Vec3, GeomError> {
    let sum = u + v;
    if sum.norm() <= ANTIPARALLEL_TOL {
        return Err(GeomError::DegenerateBisector);
    }
    sum.normalized().map_err(|_| GeomError::DegenerateBisector)
}

/// Minimal rotation carrying unit vector `from` onto unit vector `to`.
pub fn rotation_between(from: Vec3, to: Vec3) -> Result<Rotation, GeomError> {
    if (from + to).norm() <= ANTIPARALLEL_TOL {
        return Err(GeomError::DegenerateRotation);
    }
    let cross = from.cross(to);
    let angle = cross.norm().atan2(from.dot(to));
    let axis = match cross.normalized() {
        Ok(a) => a,
        // Parallel inputs: angle is ~0 and any axis will do.
        Err(_) => Vec3::new(1.0, 0.0, 0.0),
    };
    Ok(Rotation { axis, angle_rad: angle })
}

fn azimuth_elevation(v: Vec3) -> Result<(f64, f64), GeomError> {
    let horizontal = v.x.hypot(v.y);
    if horizontal < GIMBAL_TOL_RAD {
        return Err(GeomError::GimbalDegenerate);
    }
    Ok((v.y.atan2(v.x), v.z.atan2(horizontal)))
}

fn wrap_degrees(d: f64) -> f64 {
    let mut w = (d + 180.0).rem_euclid(360.0) - 180.0;
    if w == -180.0 {
        w = 180.0;
    }
    w
}

/// Decompose the attitude reached by applying `r` to `reference_normal` into
/// a yaw-then-pitch pair relative to the reference.
///
/// The caller guarantees `r` was produced by [`rotation_between`] from
/// `reference_normal` (so there is no roll about the normal to lose).
pub fn rotation_to_euler(r: &Rotation, reference_normal: Vec3) -> Result<EulerPair, GeomError> {
    let rotated = r.apply(reference_normal);
    let (az0, el0) = azimuth_elevation(reference_normal)?;
    let (az, el) = azimuth_elevation(rotated)?;
    Ok(EulerPair {
        pitch_deg: (el - el0).to_degrees(),
        yaw_deg: wrap_degrees((az - az0).to_degrees()),
    })
}

/// Rebuild the normal described by `euler` relative to `reference_normal`.
/// Inverse of [`rotation_to_euler`] away from the vertical axis.
pub fn euler_to_normal(euler: &EulerPair, reference_normal: Vec3) -> Result<Vec3, GeomError> {
    let (az0, el0) = azimuth_elevation(reference_normal)?;
    let az = az0 + euler.yaw_deg.to_radians();
    let el = el0 + euler.pitch_deg.to_radians();
    Ok(Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin()))
}

/// Mirror reflection of a propagation direction `incident` about `normal`.
pub fn reflect(incident: Vec3, normal: Vec3) -> Vec3 {
    incident - normal * (2.0 * incident.dot(normal))
}
