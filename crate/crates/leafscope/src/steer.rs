//! Fast-steering-mirror control law.
//!
//! A flat mirror folds the camera's optical axis onto a target exactly when
//! its normal bisects the camera direction and the target direction (both
//! seen from the mirror). The command is that bisector converted to a
//! yaw/pitch pair relative to the mirror's rest normal, with the travel
//! envelope enforced in-band: an out-of-envelope target is reported, not an
//! error, because the pipeline iterates many targets.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{
    angle_between, bisector, euler_to_normal, reflect, rotation_between, rotation_to_euler, GeomError, RigPose,
    Vec3,
};

#[derive(Debug, Error, PartialEq)]
pub enum SteerError {
    /// No usable mirror orientation exists: camera and target sit on
    /// opposite sides through the mirror (undefined bisector), or the
    /// commanded normal points too close to vertical for a yaw/pitch pair.
    #[error("degenerate steering geometry: {0}")]
    DegenerateGeometry(#[from] GeomError),
}

/// Mirror travel limit from the rest normal, degrees (inclusive).
pub const DEFAULT_ENVELOPE_LIMIT_DEG: f64 = 39.0;

// The envelope bound is inclusive; this absorbs round-trip noise when a
// normal was constructed at exactly the limit.
const ENVELOPE_EPS_DEG: f64 = 1e-9;

/// Whether the travel limit constrains the mirror normal itself or the
/// reflected beam (which moves at twice the normal's rate).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeReference {
    #[default]
    Normal,
    Beam,
}

/// Steering configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SteerParams {
    pub envelope_limit_deg: f64,
    pub envelope_reference: EnvelopeReference,
}

impl Default for SteerParams {
    fn default() -> Self {
        SteerParams {
            envelope_limit_deg: DEFAULT_ENVELOPE_LIMIT_DEG,
            envelope_reference: EnvelopeReference::Normal,
        }
    }
}

/// Euler command for the two-axis mirror.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MirrorCommand {
    pub pitch_deg: f64,
    pub yaw_deg: f64,
    pub in_envelope: bool,
    /// Self-check: angular error, in degrees, between the beam reflected off
    /// the normal rebuilt from (pitch, yaw) and the intended beam.
    pub pointing_residual_deg: f64,
}

/// Direction of the camera ray arriving at the mirror center.
fn incident_direction(rig: &RigPose) -> Result<Vec3, SteerError> {
    Ok((rig.mirror_position - rig.camera_position).normalized()?)
}

/// Beam direction leaving the mirror at its rest orientation.
pub fn default_beam(rig: &RigPose) -> Result<Vec3, SteerError> {
    Ok(reflect(incident_direction(rig)?, rig.mirror_default_normal))
}

/// Mirror normal that folds the camera axis onto `target`: the bisector of
/// the camera and target directions seen from the mirror.
pub fn mirror_normal_for_target(rig: &RigPose, target: Vec3) -> Result<Vec3, SteerError> {
    let to_camera = (rig.camera_position - rig.mirror_position).normalized()?;
    let to_target = (target - rig.mirror_position).normalized()?;
    Ok(bisector(to_camera, to_target)?)
}

/// Convert a commanded normal to Euler angles, check the travel envelope and
/// ray-trace the rebuilt normal as a self-check.
pub fn command_from_normal(rig: &RigPose, normal: Vec3, params: &SteerParams) -> Result<MirrorCommand, SteerError> {
    let rest = rig.mirror_default_normal;
    let rotation = rotation_between(rest, normal)?;
    let euler = rotation_to_euler(&rotation, rest)?;

    let normal_deviation_deg = angle_between(rest, normal).to_degrees();
    let deviation_deg = match params.envelope_reference {
        EnvelopeReference::Normal => normal_deviation_deg,
        EnvelopeReference::Beam => {
            let incident = incident_direction(rig)?;
            angle_between(reflect(incident, rest), reflect(incident, normal)).to_degrees()
        }
    };
    let in_envelope = deviation_deg <= params.envelope_limit_deg + ENVELOPE_EPS_DEG;

    let rebuilt = euler_to_normal(&euler, rest)?;
    let incident = incident_direction(rig)?;
    let pointing_residual_deg =
        angle_between(reflect(incident, normal), reflect(incident, rebuilt)).to_degrees();

    Ok(MirrorCommand {
        pitch_deg: euler.pitch_deg,
        yaw_deg: euler.yaw_deg,
        in_envelope,
        pointing_residual_deg,
    })
}

/// Normal computation and Euler conversion in one step.
pub fn command_for_target(rig: &RigPose, target: Vec3, params: &SteerParams) -> Result<MirrorCommand, SteerError> {
    let normal = mirror_normal_for_target(rig, target)?;
    command_from_normal(rig, normal, params)
}

/// Folded optical path camera -> mirror -> target, meters.
pub fn focus_path_length(rig: &RigPose, target: Vec3) -> f64 {
    rig.camera_position.distance(rig.mirror_position) + rig.mirror_position.distance(target)
}
