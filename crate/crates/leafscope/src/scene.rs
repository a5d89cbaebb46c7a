//! Synthetic stand-in for the physical rig's environment.
//!
//! A scene is a small set of axis-aligned planar patches: retroreflective
//! sensor tapes, reflective clutter (glass, metal) and an optional diffuse
//! background (wall and/or floor). `render_frame` ray-casts the 32-beam scan
//! pattern through the scene and produces one sweep of range/intensity
//! returns, deterministically for a given (scene, seed) pair.
//!
//! Intensity is modeled on the scanner's 0-255 count scale. Each material
//! draws from a configurable band, plus Gaussian read noise. Retro tape only
//! returns retro-band intensity while the tape sits inside the detector's
//! usable range gate; outside it the tape drops to diffuse level. Clutter
//! patches return sparsely (per-beam Bernoulli) but at near-retro intensity,
//! which is what makes isolation non-trivial.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{RigPose, Vec3};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scene parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scene: {0}")]
    Validation(String),
}

fn invalid(msg: impl Into<String>) -> SceneError {
    SceneError::Validation(msg.into())
}

/// Closed intensity interval on the 0-255 count scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountBand {
    pub lo: f64,
    pub hi: f64,
}

impl CountBand {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn validate(&self, name: &str) -> Result<(), SceneError> {
        if !(self.lo.is_finite() && self.hi.is_finite()) || self.lo < 0.0 || self.hi > 255.0 || self.lo > self.hi {
            return Err(invalid(format!("{name} band must satisfy 0 <= lo <= hi <= 255, got [{}, {}]", self.lo, self.hi)));
        }
        Ok(())
    }
}

/// Material intensity bands used by the renderer, on the 0-255 scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialBands {
    pub diffuse: CountBand,
    pub retro: CountBand,
}

impl Default for MaterialBands {
    fn default() -> Self {
        MaterialBands { diffuse: CountBand::new(5.0, 80.0), retro: CountBand::new(230.0, 255.0) }
    }
}

/// Default intensity band for glass/metal clutter returns.
pub const DEFAULT_CLUTTER_BAND: CountBand = CountBand::new(200.0, 255.0);

/// A leaf-mounted sensor: a square patch of retroreflective tape plus the
/// spectral peak that encodes its state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSensor {
    /// Tape centroid in the LiDAR frame, meters.
    pub position: Vec3,
    /// Edge length of the square tape patch, meters.
    pub tape_extent_m: f64,
    pub peak_wavelength_nm: f64,
    /// Peak reflectance in (0, 1].
    pub peak_amplitude: f64,
    pub peak_fwhm_nm: f64,
    /// Encoded plant state in [0, 1].
    pub state_score: f64,
}

impl PlantSensor {
    fn validate(&self, idx: usize) -> Result<(), SceneError> {
        let tag = format!("sensors[{idx}]");
        if !self.position.is_finite() {
            return Err(invalid(format!("{tag}: position must be finite")));
        }
        if self.position.norm() < 1e-6 {
            return Err(invalid(format!("{tag}: position must not coincide with the LiDAR origin")));
        }
        if !(self.tape_extent_m > 0.0 && self.tape_extent_m <= 0.2) {
            return Err(invalid(format!("{tag}: tape_extent_m must be in (0, 0.2], got {}", self.tape_extent_m)));
        }
        if !(600.0..=700.0).contains(&self.peak_wavelength_nm) {
            return Err(invalid(format!("{tag}: peak_wavelength_nm must be in [600, 700], got {}", self.peak_wavelength_nm)));
        }
        if !(self.peak_amplitude > 0.0 && self.peak_amplitude <= 1.0) {
            return Err(invalid(format!("{tag}: peak_amplitude must be in (0, 1], got {}", self.peak_amplitude)));
        }
        if !(self.peak_fwhm_nm > 0.0) {
            return Err(invalid(format!("{tag}: peak_fwhm_nm must be positive")));
        }
        if !(0.0..=1.0).contains(&self.state_score) {
            return Err(invalid(format!("{tag}: state_score must be in [0, 1], got {}", self.state_score)));
        }
        Ok(())
    }
}

/// Reflective clutter (glass, metal edges) that sparsely returns near-retro
/// intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClutterPatch {
    pub position: Vec3,
    /// Edge length of the square patch, meters.
    pub extent_m: f64,
    /// Probability that a beam hitting the patch produces a return.
    pub return_density: f64,
    #[serde(default = "default_clutter_band")]
    pub intensity_band: CountBand,
}

fn default_clutter_band() -> CountBand {
    DEFAULT_CLUTTER_BAND
}

impl ClutterPatch {
    fn validate(&self, idx: usize) -> Result<(), SceneError> {
        let tag = format!("clutter[{idx}]");
        if !self.position.is_finite() {
            return Err(invalid(format!("{tag}: position must be finite")));
        }
        if self.position.norm() < 1e-6 {
            return Err(invalid(format!("{tag}: position must not coincide with the LiDAR origin")));
        }
        if !(self.extent_m > 0.0) {
            return Err(invalid(format!("{tag}: extent_m must be positive")));
        }
        if !(self.return_density > 0.0 && self.return_density <= 1.0) {
            return Err(invalid(format!("{tag}: return_density must be in (0, 1], got {}", self.return_density)));
        }
        self.intensity_band.validate(&tag)
    }
}

/// Optional diffuse background planes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Background {
    /// Diffuse wall occupying the plane x = wall_x_m (meters).
    pub wall_x_m: Option<f64>,
    /// Diffuse floor occupying the plane z = floor_z_m (meters).
    pub floor_z_m: Option<f64>,
}

impl Background {
    fn validate(&self) -> Result<(), SceneError> {
        for (name, v) in [("background.wall_x_m", self.wall_x_m), ("background.floor_z_m", self.floor_z_m)] {
            if let Some(v) = v {
                if !v.is_finite() {
                    return Err(invalid(format!("{name} must be finite")));
                }
            }
        }
        Ok(())
    }
}

/// Scan-pattern and detector model of the 32-beam scanner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LidarModel {
    pub n_beams: u32,
    pub vertical_fov_upper_deg: f64,
    pub vertical_fov_lower_deg: f64,
    pub azimuth_step_deg: f64,
    /// Scanned azimuth sector [start, end), degrees CCW from +x.
    pub azimuth_start_deg: f64,
    pub azimuth_end_deg: f64,
    pub max_range_m: f64,
    /// Range gate within which retro tape saturates the detector into the
    /// retro intensity band.
    pub retro_min_range_m: f64,
    pub retro_max_range_m: f64,
    /// Gaussian read noise on the 0-255 count scale.
    pub intensity_noise_sd: f64,
}

impl Default for LidarModel {
    fn default() -> Self {
        LidarModel {
            n_beams: 32,
            vertical_fov_upper_deg: 10.67,
            vertical_fov_lower_deg: -30.67,
            azimuth_step_deg: 0.4,
            azimuth_start_deg: 0.0,
            azimuth_end_deg: 360.0,
            max_range_m: 100.0,
            retro_min_range_m: 0.8,
            retro_max_range_m: 2.0,
            intensity_noise_sd: 2.0,
        }
    }
}

impl LidarModel {
    fn validate(&self) -> Result<(), SceneError> {
        if self.n_beams != 32 {
            return Err(invalid(format!("lidar.n_beams must be 32, got {}", self.n_beams)));
        }
        if !(self.vertical_fov_upper_deg > self.vertical_fov_lower_deg) {
            return Err(invalid("lidar vertical FOV upper bound must exceed lower bound"));
        }
        if !(self.azimuth_step_deg > 0.0) {
            return Err(invalid("lidar.azimuth_step_deg must be positive"));
        }
        if !(self.azimuth_end_deg > self.azimuth_start_deg) {
            return Err(invalid("lidar azimuth sector must be non-empty"));
        }
        if !(self.max_range_m > 0.0) {
            return Err(invalid("lidar.max_range_m must be positive"));
        }
        if !(self.retro_min_range_m > 0.0 && self.retro_min_range_m < self.retro_max_range_m && self.retro_max_range_m <= self.max_range_m) {
            return Err(invalid(format!(
                "lidar retro range gate must satisfy 0 < retro_min_range_m < retro_max_range_m <= max_range_m, got [{}, {}] with max_range_m {}",
                self.retro_min_range_m, self.retro_max_range_m, self.max_range_m
            )));
        }
        if !(self.intensity_noise_sd >= 0.0 && self.intensity_noise_sd <= 255.0) {
            return Err(invalid("lidar.intensity_noise_sd must be within [0, 255]"));
        }
        Ok(())
    }

    /// Beam elevation for a ring index, degrees. Ring 0 is the lowest beam.
    pub fn ring_elevation_deg(&self, ring: u32) -> f64 {
        let span = self.vertical_fov_upper_deg - self.vertical_fov_lower_deg;
        self.vertical_fov_lower_deg + span * ring as f64 / (self.n_beams - 1) as f64
    }

    fn azimuth_count(&self) -> usize {
        ((self.azimuth_end_deg - self.azimuth_start_deg) / self.azimuth_step_deg - 1e-9).floor() as usize + 1
    }
}

/// Full description of a synthetic test environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDescription {
    #[serde(default)]
    pub sensors: Vec<PlantSensor>,
    #[serde(default)]
    pub clutter: Vec<ClutterPatch>,
    #[serde(default)]
    pub background: Background,
    #[serde(default)]
    pub bands: MaterialBands,
    #[serde(default)]
    pub lidar: LidarModel,
    #[serde(default)]
    pub rig: RigPose,
    #[serde(default, rename = "seed")]
    pub rng_seed: u64,
}

impl SceneDescription {
    /// Empty scene with all-default rig, scanner and bands.
    pub fn empty() -> Self {
        SceneDescription {
            sensors: Vec::new(),
            clutter: Vec::new(),
            background: Background::default(),
            bands: MaterialBands::default(),
            lidar: LidarModel::default(),
            rig: RigPose::default(),
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        self.lidar.validate()?;
        self.background.validate()?;
        self.bands.diffuse.validate("bands.diffuse")?;
        self.bands.retro.validate("bands.retro")?;
        for (i, s) in self.sensors.iter().enumerate() {
            s.validate(i)?;
        }
        for (i, c) in self.clutter.iter().enumerate() {
            c.validate(i)?;
        }
        if !(self.rig.camera_position.is_finite()
            && self.rig.mirror_position.is_finite()
            && self.rig.mirror_default_normal.is_finite())
        {
            return Err(invalid("rig positions must be finite"));
        }
        if self.rig.camera_position.distance(self.rig.mirror_position) < 1e-9 {
            return Err(invalid("rig camera and mirror positions must differ"));
        }
        if self.rig.lidar_origin.norm() > 1e-12 {
            return Err(invalid("rig.lidar_origin is the world origin and must be zero"));
        }
        if (self.rig.mirror_default_normal.norm() - 1.0).abs() > 1e-9 {
            return Err(invalid("rig.mirror_default_normal must be unit length"));
        }
        Ok(())
    }
}

/// Load and validate a scene file (TOML; see the repository README for the
/// schema).
pub fn load_scene(path: impl AsRef<Path>) -> Result<SceneDescription, SceneError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SceneError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scene(&text)
}

/// Parse and validate a scene from TOML text.
pub fn parse_scene(text: &str) -> Result<SceneDescription, SceneError> {
    let mut desc: SceneDescription = toml::from_str(text)?;
    // Tolerate hand-written normals that are direction-only.
    if let Ok(n) = desc.rig.mirror_default_normal.normalized() {
        desc.rig.mirror_default_normal = n;
    }
    desc.validate()?;
    Ok(desc)
}

/// Serialize a scene back to the TOML schema accepted by [`load_scene`].
pub fn scene_to_toml(scene: &SceneDescription) -> String {
    toml::to_string(scene).expect("scene serialization cannot fail")
}

pub fn save_scene(scene: &SceneDescription, path: impl AsRef<Path>) -> Result<(), SceneError> {
    let path = path.as_ref();
    std::fs::write(path, scene_to_toml(scene)).map_err(|source| SceneError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// One return of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarReturn {
    pub position: Vec3,
    pub range_m: f64,
    /// Reflectance counts in [0, 255].
    pub intensity: f64,
    /// Beam index, 0 (lowest elevation) to 31.
    pub ring: u8,
    pub azimuth_deg: f64,
}

/// One sweep of the scanner.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LidarFrame {
    pub points: Vec<LidarReturn>,
}

/// Ground-truth provenance of a return, kept outside [`LidarFrame`] so the
/// detection contract never sees it. Used by tests and oracles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceKind {
    Sensor(usize),
    Clutter(usize),
    Background,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn component(self, v: Vec3) -> f64 {
        match self {
            Axis::X => v.x,
            Axis::Y => v.y,
            Axis::Z => v.z,
        }
    }

    /// The two in-plane axes.
    fn transverse(self) -> (Axis, Axis) {
        match self {
            Axis::X => (Axis::Y, Axis::Z),
            Axis::Y => (Axis::X, Axis::Z),
            Axis::Z => (Axis::X, Axis::Y),
        }
    }
}

/// Axis whose component dominates `v`; patches face the scanner this way.
fn dominant_axis(v: Vec3) -> Axis {
    let (ax, ay, az) = (v.x.abs(), v.y.abs(), v.z.abs());
    if ax >= ay && ax >= az {
        Axis::X
    } else if ay >= az {
        Axis::Y
    } else {
        Axis::Z
    }
}

#[derive(Debug, Clone, Copy)]
enum Response {
    /// Always returns; intensity drawn from the band.
    Solid { band: CountBand },
    /// Returns with probability `density`; beams that miss pass through.
    Sparse { band: CountBand, density: f64 },
}

struct Patch {
    axis: Axis,
    center: Vec3,
    half_u: f64,
    half_v: f64,
    response: Response,
    kind: SurfaceKind,
}

impl Patch {
    /// Ray (from origin, unit `dir`) intersection range, if inside the patch.
    fn intersect(&self, dir: Vec3, max_range: f64) -> Option<f64> {
        let d_axis = self.axis.component(dir);
        if d_axis.abs() < 1e-12 {
            return None;
        }
        let t = self.axis.component(self.center) / d_axis;
        if t <= 1e-6 || t > max_range {
            return None;
        }
        let p = dir * t;
        let (u_axis, v_axis) = self.axis.transverse();
        if (u_axis.component(p) - u_axis.component(self.center)).abs() <= self.half_u
            && (v_axis.component(p) - v_axis.component(self.center)).abs() <= self.half_v
        {
            Some(t)
        } else {
            None
        }
    }
}

fn build_patches(scene: &SceneDescription) -> Vec<Patch> {
    let mut patches = Vec::new();
    for (i, s) in scene.sensors.iter().enumerate() {
        let range = s.position.norm();
        // The detector only resolves retro tape inside the range gate; beyond
        // it the tape reads like a diffuse surface.
        let in_gate = range >= scene.lidar.retro_min_range_m && range <= scene.lidar.retro_max_range_m;
        let band = if in_gate { scene.bands.retro } else { scene.bands.diffuse };
        patches.push(Patch {
            axis: dominant_axis(s.position),
            center: s.position,
            half_u: s.tape_extent_m / 2.0,
            half_v: s.tape_extent_m / 2.0,
            response: Response::Solid { band },
            kind: SurfaceKind::Sensor(i),
        });
    }
    for (i, c) in scene.clutter.iter().enumerate() {
        patches.push(Patch {
            axis: dominant_axis(c.position),
            center: c.position,
            half_u: c.extent_m / 2.0,
            half_v: c.extent_m / 2.0,
            response: Response::Sparse { band: c.intensity_band, density: c.return_density },
            kind: SurfaceKind::Clutter(i),
        });
    }
    if let Some(x) = scene.background.wall_x_m {
        patches.push(Patch {
            axis: Axis::X,
            center: Vec3::new(x, 0.0, 0.0),
            half_u: f64::INFINITY,
            half_v: f64::INFINITY,
            response: Response::Solid { band: scene.bands.diffuse },
            kind: SurfaceKind::Background,
        });
    }
    if let Some(z) = scene.background.floor_z_m {
        patches.push(Patch {
            axis: Axis::Z,
            center: Vec3::new(0.0, 0.0, z),
            half_u: f64::INFINITY,
            half_v: f64::INFINITY,
            response: Response::Solid { band: scene.bands.diffuse },
            kind: SurfaceKind::Background,
        });
    }
    patches
}

fn draw_counts(rng: &mut ChaCha8Rng, band: CountBand, noise_sd: f64) -> f64 {
    let base = if band.hi > band.lo { rng.random_range(band.lo..=band.hi) } else { band.lo };
    let noise: f64 = rng.sample::<f64, _>(StandardNormal) * noise_sd;
    (base + noise).clamp(0.0, 255.0)
}

/// Render one sweep. Pure function of (scene, seed).
pub fn render_frame(scene: &SceneDescription, seed: u64) -> LidarFrame {
    render_frame_with_truth(scene, seed).0
}

/// Render one sweep, also returning the per-return ground-truth surface.
/// The truth vector is parallel to `frame.points`.
pub fn render_frame_with_truth(scene: &SceneDescription, seed: u64) -> (LidarFrame, Vec<SurfaceKind>) {
    let patches = build_patches(scene);
    let lidar = &scene.lidar;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::new();
    let mut truth = Vec::new();
    let mut hits: Vec<(f64, usize)> = Vec::new();

    for col in 0..lidar.azimuth_count() {
        let azimuth_deg = lidar.azimuth_start_deg + col as f64 * lidar.azimuth_step_deg;
        let az = azimuth_deg.to_radians();
        for ring in 0..lidar.n_beams {
            let el = lidar.ring_elevation_deg(ring).to_radians();
            let dir = Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());

            hits.clear();
            for (idx, patch) in patches.iter().enumerate() {
                if let Some(t) = patch.intersect(dir, lidar.max_range_m) {
                    hits.push((t, idx));
                }
            }
            // Closest surface first; index breaks exact ties.
            hits.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));

            for &(t, idx) in hits.iter() {
                let patch = &patches[idx];
                let band = match patch.response {
                    Response::Solid { band } => band,
                    Response::Sparse { band, density } => {
                        if rng.random_range(0.0..1.0) < density {
                            band
                        } else {
                            // The beam passes through; try the next surface.
                            continue;
                        }
                    }
                };
                points.push(LidarReturn {
                    position: dir * t,
                    range_m: t,
                    intensity: draw_counts(&mut rng, band, lidar.intensity_noise_sd),
                    ring: ring as u8,
                    azimuth_deg,
                });
                truth.push(patch.kind);
                break;
            }
        }
    }
    (LidarFrame { points }, truth)
}
