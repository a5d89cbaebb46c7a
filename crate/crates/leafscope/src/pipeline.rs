//! End-to-end orchestration: frame generation, isolation, then per-target
//! steering, focusing, filter sweep and estimation, accumulated into an
//! ordered record list and a CSV report.
//!
//! Stages exchange immutable values and run in a fixed order per target;
//! per-target geometry or signal failures become skip records with a reason
//! instead of aborting the run. Everything is deterministic for a fixed
//! (config, seed): the frame renderer consumes RNG stream 0 of the run seed
//! and target `i` consumes stream `i + 1`.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::focus::{self, FocusCalibration, FocusError};
use crate::geom::{angle_between, Vec3};
use crate::isolate::{self, IsolationParams};
use crate::scene::{self, PlantSensor, SceneDescription, SceneError};
use crate::spectral::{
    self, FilterBand, PeakFitConfig, QeCurve, SpectralError, Spectrum, StateCoding,
    DEFAULT_EXPOSURE, DEFAULT_FILTER_FWHM_NM, DEFAULT_TRANSMISSION_PEAK, DEFAULT_WHEEL_CENTERS_NM,
};
use crate::steer::{self, EnvelopeReference, SteerParams};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Focus(#[from] FocusError),
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn config_err(msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(msg.into())
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Which distance drives the focus command: the cluster's mean LiDAR range
/// (the rig's native behavior) or the folded camera-mirror-target path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceSource {
    #[default]
    LidarRange,
    FoldedPath,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SteerSection {
    pub envelope_limit_deg: f64,
    pub envelope_reference: EnvelopeReference,
    /// Widest target angle off the default reflected beam the pipeline will
    /// attempt; targets beyond it are skipped as out of envelope.
    pub target_fov_limit_deg: f64,
}

impl Default for SteerSection {
    fn default() -> Self {
        SteerSection {
            envelope_limit_deg: steer::DEFAULT_ENVELOPE_LIMIT_DEG,
            envelope_reference: EnvelopeReference::Normal,
            target_fov_limit_deg: steer::DEFAULT_ENVELOPE_LIMIT_DEG,
        }
    }
}

impl SteerSection {
    pub fn params(&self) -> SteerParams {
        SteerParams {
            envelope_limit_deg: self.envelope_limit_deg,
            envelope_reference: self.envelope_reference,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct FocusSection {
    /// Two-column calibration file; omitted means the ideal-law table.
    calibration: Option<PathBuf>,
    power_at_infinity_d: f64,
    power_limits_d: (f64, f64),
    defocus_tolerance_d: f64,
    distance_source: DistanceSource,
    /// Sample spacing of the synthesized ideal table, meters.
    ideal_step_m: f64,
}

impl Default for FocusSection {
    fn default() -> Self {
        FocusSection {
            calibration: None,
            power_at_infinity_d: 0.0,
            power_limits_d: (-2.0, 3.0),
            defocus_tolerance_d: focus::DEFAULT_DEFOCUS_TOLERANCE_D,
            distance_source: DistanceSource::LidarRange,
            ideal_step_m: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SpectralSection {
    wheel_centers_nm: [f64; 6],
    filter_fwhm_nm: f64,
    transmission_peak: f64,
    qe: QeCurve,
    exposure: f64,
    /// Per-reading Gaussian noise on the normalized [0, 1] scale.
    noise_sd: f64,
    sensor_fwhm_nm: f64,
    coding: StateCoding,
    /// Max centroid-to-sensor distance when looking up a detected target's
    /// ground-truth spectrum, meters.
    association_radius_m: f64,
}

impl Default for SpectralSection {
    fn default() -> Self {
        SpectralSection {
            wheel_centers_nm: DEFAULT_WHEEL_CENTERS_NM,
            filter_fwhm_nm: DEFAULT_FILTER_FWHM_NM,
            transmission_peak: DEFAULT_TRANSMISSION_PEAK,
            qe: QeCurve::default(),
            exposure: DEFAULT_EXPOSURE,
            noise_sd: 0.0,
            sensor_fwhm_nm: 20.0,
            coding: StateCoding::default(),
            association_radius_m: 0.15,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scene: PathBuf,
    #[serde(default)]
    output: Option<PathBuf>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    isolation: IsolationParams,
    #[serde(default)]
    steer: SteerSection,
    #[serde(default)]
    focus: FocusSection,
    #[serde(default)]
    spectral: SpectralSection,
}

/// Fully resolved, validated run configuration.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub scene: SceneDescription,
    pub isolation: IsolationParams,
    pub steer: SteerSection,
    pub focus_calibration: FocusCalibration,
    pub defocus_tolerance_d: f64,
    pub distance_source: DistanceSource,
    pub wheel: [FilterBand; 6],
    pub qe: QeCurve,
    pub exposure: f64,
    pub noise_sd: f64,
    pub sensor_fwhm_nm: f64,
    pub coding: StateCoding,
    pub association_radius_m: f64,
    pub seed: u64,
    pub output: Option<PathBuf>,
}

impl PipelineConfig {
    /// Default configuration over an in-memory scene, seeded from the scene.
    pub fn from_scene(scene: SceneDescription) -> Result<Self, PipelineError> {
        scene.validate()?;
        let focus_section = FocusSection::default();
        let cal = FocusCalibration::ideal(
            focus_section.power_at_infinity_d,
            focus_section.power_limits_d,
            focus_section.ideal_step_m,
        )?;
        let spectral = SpectralSection::default();
        let cfg = PipelineConfig {
            seed: scene.rng_seed,
            scene,
            isolation: IsolationParams::default(),
            steer: SteerSection::default(),
            focus_calibration: cal,
            defocus_tolerance_d: focus_section.defocus_tolerance_d,
            distance_source: focus_section.distance_source,
            wheel: build_wheel(&spectral),
            qe: spectral.qe,
            exposure: spectral.exposure,
            noise_sd: spectral.noise_sd,
            sensor_fwhm_nm: spectral.sensor_fwhm_nm,
            coding: spectral.coding,
            association_radius_m: spectral.association_radius_m,
            output: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load a TOML run configuration; relative paths inside it resolve
    /// against the config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let raw: RawConfig = toml::from_str(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let resolve = |p: &PathBuf| if p.is_relative() { base.join(p) } else { p.clone() };

        let scene = scene::load_scene(resolve(&raw.scene))?;
        let cal = match &raw.focus.calibration {
            Some(p) => focus::load_calibration(resolve(p), raw.focus.power_at_infinity_d, raw.focus.power_limits_d)?,
            None => FocusCalibration::ideal(
                raw.focus.power_at_infinity_d,
                raw.focus.power_limits_d,
                raw.focus.ideal_step_m,
            )?,
        };
        let cfg = PipelineConfig {
            seed: raw.seed.unwrap_or(scene.rng_seed),
            isolation: raw.isolation,
            steer: raw.steer,
            focus_calibration: cal,
            defocus_tolerance_d: raw.focus.defocus_tolerance_d,
            distance_source: raw.focus.distance_source,
            wheel: build_wheel(&raw.spectral),
            qe: raw.spectral.qe,
            exposure: raw.spectral.exposure,
            noise_sd: raw.spectral.noise_sd,
            sensor_fwhm_nm: raw.spectral.sensor_fwhm_nm,
            coding: raw.spectral.coding,
            association_radius_m: raw.spectral.association_radius_m,
            output: raw.output.map(|p| resolve(&p)),
            scene,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.scene.validate()?;
        if !(self.isolation.band.lo >= 0.0 && self.isolation.band.lo <= self.isolation.band.hi && self.isolation.band.hi <= 255.0) {
            return Err(config_err("isolation.band must satisfy 0 <= lo <= hi <= 255"));
        }
        if !(self.isolation.eps_m > 0.0) || self.isolation.min_pts < 1 {
            return Err(config_err("isolation needs eps_m > 0 and min_pts >= 1"));
        }
        if !(self.isolation.max_extent_m > 0.0) {
            return Err(config_err("isolation.max_extent_m must be positive"));
        }
        if !(self.isolation.range_gate_m.0 > 0.0 && self.isolation.range_gate_m.0 < self.isolation.range_gate_m.1) {
            return Err(config_err("isolation.range_gate_m must be an ordered positive interval"));
        }
        if !(self.steer.envelope_limit_deg > 0.0 && self.steer.target_fov_limit_deg > 0.0) {
            return Err(config_err("steer limits must be positive"));
        }
        for i in 0..6 {
            for j in i + 1..6 {
                if self.wheel[i].center_nm == self.wheel[j].center_nm {
                    return Err(config_err("spectral.wheel_centers_nm must be distinct"));
                }
            }
        }
        for b in &self.wheel {
            if !(b.fwhm_nm > 0.0) || !(400.0..=1000.0).contains(&b.center_nm) {
                return Err(config_err("filter bands need fwhm > 0 and centers in [400, 1000] nm"));
            }
            if !(b.transmission_peak > 0.0 && b.transmission_peak <= 1.0) {
                return Err(config_err("filter transmission_peak must be in (0, 1]"));
            }
        }
        if !(self.exposure > 0.0) {
            return Err(config_err("spectral.exposure must be positive"));
        }
        if !(self.noise_sd >= 0.0) {
            return Err(config_err("spectral.noise_sd must be non-negative"));
        }
        if !(self.sensor_fwhm_nm > 0.0) {
            return Err(config_err("spectral.sensor_fwhm_nm must be positive"));
        }
        if !(self.association_radius_m > 0.0) {
            return Err(config_err("spectral.association_radius_m must be positive"));
        }
        if !(0.0..=1.0).contains(&self.qe.qe_lo) || !(0.0..=1.0).contains(&self.qe.qe_hi) {
            return Err(config_err("qe values must be in [0, 1]"));
        }
        match self.coding {
            StateCoding::Amplitude { amplitude_range: (lo, hi), peak_nm } => {
                if !(lo > 0.0 && lo < hi && hi <= 1.0) {
                    return Err(config_err("amplitude coding range must satisfy 0 < lo < hi <= 1"));
                }
                if !(600.0..=700.0).contains(&peak_nm) {
                    return Err(config_err("amplitude coding peak_nm must be in [600, 700]"));
                }
            }
            StateCoding::Shift { peak_range_nm: (lo, hi), amplitude } => {
                if !(lo < hi && lo >= 600.0 && hi <= 700.0) {
                    return Err(config_err("shift coding peak range must be ordered inside [600, 700]"));
                }
                if !(amplitude > 0.0 && amplitude <= 1.0) {
                    return Err(config_err("shift coding amplitude must be in (0, 1]"));
                }
            }
        }
        Ok(())
    }

    fn fit_config(&self) -> PeakFitConfig {
        PeakFitConfig { sensor_fwhm_nm: self.sensor_fwhm_nm, qe: self.qe, exposure: self.exposure }
    }
}

fn build_wheel(s: &SpectralSection) -> [FilterBand; 6] {
    s.wheel_centers_nm.map(|center_nm| FilterBand {
        center_nm,
        fwhm_nm: s.filter_fwhm_nm,
        transmission_peak: s.transmission_peak,
    })
}

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

/// Why a detected target was skipped instead of interrogated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    OutOfRangeGate,
    OversizeCluster,
    OutOfEnvelope,
    DegenerateGeometry,
    InsufficientSignal,
    SaturatedSweep,
}

impl SkipReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            SkipReason::OutOfRangeGate => "out_of_range_gate",
            SkipReason::OversizeCluster => "oversize_cluster",
            SkipReason::OutOfEnvelope => "out_of_envelope",
            SkipReason::DegenerateGeometry => "degenerate_geometry",
            SkipReason::InsufficientSignal => "insufficient_signal",
            SkipReason::SaturatedSweep => "saturated_sweep",
        }
    }
}

/// Full interrogation result for one target.
#[derive(Debug, Clone, PartialEq)]
pub struct Interrogation {
    pub pitch_deg: f64,
    pub yaw_deg: f64,
    pub in_envelope: bool,
    pub focus_power_d: f64,
    /// Self-check of the focus command against the same mean range the
    /// record reports; nonzero only when the lens clamps at its limits.
    pub defocus_error_d: f64,
    pub band_intensities: [f64; 6],
    pub estimated_peak_nm: f64,
    pub state_score: f64,
}

/// One row of the run report: either a full interrogation or a skip reason,
/// never both.
#[derive(Debug, Clone, PartialEq)]
pub struct InterrogationRecord {
    pub target_id: usize,
    pub centroid: Vec3,
    pub mean_range_m: f64,
    pub outcome: Result<Interrogation, SkipReason>,
}

impl InterrogationRecord {
    pub fn skip_reason(&self) -> Option<SkipReason> {
        self.outcome.as_ref().err().copied()
    }

    pub fn interrogation(&self) -> Option<&Interrogation> {
        self.outcome.as_ref().ok()
    }
}

// ---------------------------------------------------------------------------
// Run
// ---------------------------------------------------------------------------

fn associate_sensor(scene: &SceneDescription, centroid: Vec3, radius_m: f64) -> Option<&PlantSensor> {
    scene
        .sensors
        .iter()
        .map(|s| (s, s.position.distance(centroid)))
        .filter(|(_, d)| *d <= radius_m)
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .map(|(s, _)| s)
}

/// Run detection and interrogate every detected target, in target-id order.
/// Deterministic for a fixed config (including its seed).
pub fn run_pipeline(config: &PipelineConfig) -> Vec<InterrogationRecord> {
    let frame = scene::render_frame(&config.scene, config.seed);
    let reports = isolate::detect(&frame, &config.isolation);
    let rig = &config.scene.rig;
    let steer_params = config.steer.params();
    let fit_cfg = config.fit_config();
    let boresight = steer::default_beam(rig).expect("validated rig has distinct camera/mirror");

    let mut records = Vec::with_capacity(reports.len());
    for report in &reports {
        let base = |outcome| InterrogationRecord {
            target_id: report.id,
            centroid: report.centroid,
            mean_range_m: report.mean_range_m,
            outcome,
        };

        if !report.valid {
            let reason = if report.mean_range_m < config.isolation.range_gate_m.0
                || report.mean_range_m > config.isolation.range_gate_m.1
            {
                SkipReason::OutOfRangeGate
            } else {
                SkipReason::OversizeCluster
            };
            records.push(base(Err(reason)));
            continue;
        }

        // Steering stage.
        let normal = match steer::mirror_normal_for_target(rig, report.centroid) {
            Ok(n) => n,
            Err(_) => {
                records.push(base(Err(SkipReason::DegenerateGeometry)));
                continue;
            }
        };
        let command = match steer::command_from_normal(rig, normal, &steer_params) {
            Ok(c) => c,
            Err(_) => {
                records.push(base(Err(SkipReason::DegenerateGeometry)));
                continue;
            }
        };
        let target_dir = report.centroid - rig.mirror_position;
        let target_offset_deg = angle_between(target_dir, boresight).to_degrees();
        if !command.in_envelope || target_offset_deg > config.steer.target_fov_limit_deg {
            records.push(base(Err(SkipReason::OutOfEnvelope)));
            continue;
        }

        // Focus stage.
        let distance_m = match config.distance_source {
            DistanceSource::LidarRange => report.mean_range_m,
            DistanceSource::FoldedPath => steer::focus_path_length(rig, report.centroid),
        };
        let focus_power_d = focus::required_power(&config.focus_calibration, distance_m)
            .expect("cluster ranges are positive");
        let defocus_error_d = focus::defocus_error(&config.focus_calibration, focus_power_d, distance_m)
            .expect("cluster ranges are positive");

        // Spectral stage, on this target's own RNG stream.
        let spectrum = match associate_sensor(&config.scene, report.centroid, config.association_radius_m) {
            Some(sensor) => Spectrum::from_sensor(sensor),
            // A validated cluster with no sensor behind it (e.g. compact
            // clutter) images as darkness through the wheel.
            None => Spectrum { peak_nm: 655.0, amplitude: 0.0, fwhm_nm: 20.0, baseline: 0.0 },
        };
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(report.id as u64 + 1);
        let sweep = spectral::sweep_spectrum_with_rng(
            &spectrum,
            &config.wheel,
            &config.qe,
            config.exposure,
            config.noise_sd,
            &mut rng,
        );
        let estimate = match spectral::estimate_peak(&sweep.readings, &fit_cfg) {
            Ok(e) => e,
            Err(SpectralError::InsufficientSignal) => {
                records.push(base(Err(SkipReason::InsufficientSignal)));
                continue;
            }
            Err(SpectralError::SaturatedSweep) => {
                records.push(base(Err(SkipReason::SaturatedSweep)));
                continue;
            }
        };
        let state_score = spectral::state_score(estimate.peak_nm, estimate.amplitude, &config.coding);

        let mut band_intensities = [0.0; 6];
        for (slot, reading) in band_intensities.iter_mut().zip(&sweep.readings) {
            *slot = reading.intensity;
        }
        records.push(base(Ok(Interrogation {
            pitch_deg: command.pitch_deg,
            yaw_deg: command.yaw_deg,
            in_envelope: command.in_envelope,
            focus_power_d,
            defocus_error_d,
            band_intensities,
            estimated_peak_nm: estimate.peak_nm,
            state_score,
        })));
    }
    records
}

// ---------------------------------------------------------------------------
// Stage graph
// ---------------------------------------------------------------------------

/// A processing stage and its message types, for documentation and test
/// introspection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stage {
    pub name: &'static str,
    pub input: Option<&'static str>,
    pub output: &'static str,
}

/// Directed channel between two stages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Channel {
    pub from: usize,
    pub to: usize,
    pub message: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageGraph {
    pub stages: Vec<Stage>,
    pub channels: Vec<Channel>,
}

/// The fixed five-stage topology of the pipeline.
pub fn stage_graph() -> StageGraph {
    let stages = vec![
        Stage { name: "frame_source", input: None, output: "LidarFrame" },
        Stage { name: "isolation", input: Some("LidarFrame"), output: "ClusterReport" },
        Stage { name: "steering", input: Some("ClusterReport"), output: "MirrorCommand" },
        Stage { name: "focus", input: Some("MirrorCommand"), output: "FocusCommand" },
        Stage { name: "spectral", input: Some("FocusCommand"), output: "SpectralSweep" },
    ];
    let channels = vec![
        Channel { from: 0, to: 1, message: "LidarFrame" },
        Channel { from: 1, to: 2, message: "ClusterReport" },
        Channel { from: 2, to: 3, message: "MirrorCommand" },
        Channel { from: 3, to: 4, message: "FocusCommand" },
    ];
    StageGraph { stages, channels }
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

/// Column layout of the run report.
pub const REPORT_HEADER: &str = "target_id,centroid_x_m,centroid_y_m,centroid_z_m,mean_range_m,\
pitch_deg,yaw_deg,in_envelope,focus_power_d,defocus_error_d,\
band0,band1,band2,band3,band4,band5,estimated_peak_nm,state_score,skip_reason";

/// Decimal formatting at `sig` significant digits, without exponent
/// notation. Deterministic for identical inputs. Magnitudes below a
/// picounit are numeric noise in every quantity this crate reports and
/// print as plain zero.
pub fn fmt_sig(x: f64, sig: usize) -> String {
    if x == 0.0 || x.abs() < 1e-12 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exponent = x.abs().log10().floor() as i32;
    let decimals = (sig as i32 - 1 - exponent).max(0) as usize;
    format!("{x:.decimals$}")
}

fn record_row(r: &InterrogationRecord) -> String {
    let f = |v: f64| fmt_sig(v, 6);
    let head = format!(
        "{},{},{},{},{}",
        r.target_id,
        f(r.centroid.x),
        f(r.centroid.y),
        f(r.centroid.z),
        f(r.mean_range_m)
    );
    match &r.outcome {
        Ok(i) => {
            let bands = i.band_intensities.map(&f).join(",");
            format!(
                "{head},{},{},{},{},{},{bands},{},{},",
                f(i.pitch_deg),
                f(i.yaw_deg),
                i.in_envelope,
                f(i.focus_power_d),
                f(i.defocus_error_d),
                f(i.estimated_peak_nm),
                f(i.state_score),
            )
        }
        Err(reason) => format!("{head},,,,,,,,,,,,,,{}", reason.as_str()),
    }
}

/// Render the report CSV: fixed header, one row per record, floats at six
/// significant digits. Byte-identical for identical inputs.
pub fn report_to_string(records: &[InterrogationRecord]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&record_row(r));
        out.push('\n');
    }
    out
}

/// Write the report CSV to `path`.
pub fn write_report(records: &[InterrogationRecord], path: impl AsRef<Path>) -> Result<(), PipelineError> {
    let path = path.as_ref();
    std::fs::write(path, report_to_string(records)).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })
}
