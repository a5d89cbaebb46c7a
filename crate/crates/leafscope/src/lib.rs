//! Simulated adaptive-optics rig for finding and reading retroreflective
//! leaf-mounted plant sensors.
//!
//! The crate covers the full interrogation chain over a synthetic scene:
//!
//! 1. [`scene`] renders 32-beam LiDAR sweeps with material-dependent
//!    intensity (retro tape, reflective clutter, diffuse background).
//! 2. [`isolate`] band-passes the sweep by intensity, clusters the survivors
//!    with DBSCAN and validates each cluster as a sensor candidate.
//! 3. [`steer`] points a fast-steering mirror at a candidate by the
//!    bisector/law-of-reflection rule and converts it to yaw/pitch commands.
//! 4. [`focus`] maps the candidate's range to a tunable-lens diopter command
//!    through a calibration table.
//! 5. [`spectral`] sweeps a six-position filter wheel over the sensor's
//!    reflectance peak and recovers (peak, amplitude, state score).
//! 6. [`pipeline`] wires the stages together and persists a CSV report.
//!
//! Everything is deterministic for a fixed configuration and seed. The
//! `leafscope` binary exposes each stage as a subcommand.

// Validation comparisons are written negated (`!(x > 0.0)`) so that NaN
// fails them; the lint's suggested rewrite would let NaN through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod focus;
pub mod geom;
pub mod isolate;
pub mod pipeline;
pub mod scene;
pub mod spectral;
pub mod steer;

pub use geom::{EulerPair, RigPose, Vec3};
pub use isolate::{ClusterReport, DbscanParams, IntensityBand, IsolationParams};
pub use pipeline::{run_pipeline, InterrogationRecord, PipelineConfig};
pub use scene::{LidarFrame, LidarModel, PlantSensor, SceneDescription};
pub use spectral::{FilterBand, QeCurve, SpectralSweep};
pub use steer::MirrorCommand;
pub use focus::{FocusCalibration, FocusCommand};
