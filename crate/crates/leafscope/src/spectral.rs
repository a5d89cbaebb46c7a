//! Filter-wheel sweep radiometry and sensor-state recovery.
//!
//! A sensor's reflectance is modeled as a Gaussian peak over a flat baseline.
//! Each wheel position sees that spectrum through a Gaussian filter profile
//! and the camera's (linear) quantum-efficiency curve; the reading is the
//! exposure-scaled band integral, clamped to [0, 1], plus optional Gaussian
//! read noise. Peak recovery fits the two free parameters (center,
//! amplitude) of the same forward model to the six readings with a damped
//! Gauss-Newton loop, then maps the recovered peak back to the encoded plant
//! state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::PlantSensor;

#[derive(Debug, Error, PartialEq)]
pub enum SpectralError {
    #[error("fewer than 3 usable (non-saturated, non-zero) readings")]
    InsufficientSignal,
    #[error("more than 3 readings saturated; reduce exposure")]
    SaturatedSweep,
}

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// Gaussian sigma for a full width at half maximum.
pub fn fwhm_to_sigma(fwhm: f64) -> f64 {
    fwhm / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt())
}

/// One narrow-band interference filter of the wheel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterBand {
    pub center_nm: f64,
    pub fwhm_nm: f64,
    /// Peak transmission in (0, 1].
    pub transmission_peak: f64,
}

impl FilterBand {
    /// Gaussian transmission profile.
    pub fn transmission(&self, lambda_nm: f64) -> f64 {
        let s = fwhm_to_sigma(self.fwhm_nm);
        let d = (lambda_nm - self.center_nm) / s;
        self.transmission_peak * (-0.5 * d * d).exp()
    }
}

/// Wheel positions used throughout: 630-680 nm in 10 nm steps.
pub const DEFAULT_WHEEL_CENTERS_NM: [f64; 6] = [630.0, 640.0, 650.0, 660.0, 670.0, 680.0];
pub const DEFAULT_FILTER_FWHM_NM: f64 = 10.0;
pub const DEFAULT_TRANSMISSION_PEAK: f64 = 0.9;
pub const DEFAULT_EXPOSURE: f64 = 0.1;

/// Six-position wheel with uniform profile parameters.
pub fn default_wheel() -> [FilterBand; 6] {
    DEFAULT_WHEEL_CENTERS_NM.map(|center_nm| FilterBand {
        center_nm,
        fwhm_nm: DEFAULT_FILTER_FWHM_NM,
        transmission_peak: DEFAULT_TRANSMISSION_PEAK,
    })
}

/// Camera quantum efficiency, linear between two anchor wavelengths and
/// extended with the same slope outside them (clamped to [0, 1]).
///
/// Keeping the curve globally linear makes the band integral of a Gaussian
/// spectrum exactly Gaussian-times-linear, which the peak fit inverts without
/// model bias.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QeCurve {
    pub lambda_lo_nm: f64,
    pub qe_lo: f64,
    pub lambda_hi_nm: f64,
    pub qe_hi: f64,
}

impl Default for QeCurve {
    fn default() -> Self {
        QeCurve { lambda_lo_nm: 630.0, qe_lo: 0.60, lambda_hi_nm: 680.0, qe_hi: 0.50 }
    }
}

impl QeCurve {
    pub fn slope(&self) -> f64 {
        (self.qe_hi - self.qe_lo) / (self.lambda_hi_nm - self.lambda_lo_nm)
    }

    pub fn at(&self, lambda_nm: f64) -> f64 {
        (self.qe_lo + self.slope() * (lambda_nm - self.lambda_lo_nm)).clamp(0.0, 1.0)
    }

    /// Derivative of [`Self::at`]; zero where the curve is clamped.
    pub fn slope_at(&self, lambda_nm: f64) -> f64 {
        let raw = self.qe_lo + self.slope() * (lambda_nm - self.lambda_lo_nm);
        if (0.0..=1.0).contains(&raw) {
            self.slope()
        } else {
            0.0
        }
    }
}

/// Reflectance spectrum: Gaussian peak over a flat baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spectrum {
    pub peak_nm: f64,
    pub amplitude: f64,
    pub fwhm_nm: f64,
    pub baseline: f64,
}

impl Spectrum {
    pub fn from_sensor(sensor: &PlantSensor) -> Self {
        Spectrum {
            peak_nm: sensor.peak_wavelength_nm,
            amplitude: sensor.peak_amplitude,
            fwhm_nm: sensor.peak_fwhm_nm,
            baseline: 0.0,
        }
    }

    pub fn reflectance(&self, lambda_nm: f64) -> f64 {
        let s = fwhm_to_sigma(self.fwhm_nm);
        let d = (lambda_nm - self.peak_nm) / s;
        self.baseline + self.amplitude * (-0.5 * d * d).exp()
    }
}

/// Integration step of the production band integral, nm.
pub const READING_GRID_STEP_NM: f64 = 0.1;

/// Trapezoidal band integral of reflectance x transmission x QE over
/// `band.center +/- 5 fwhm` at the given step.
pub fn band_signal(spectrum: &Spectrum, band: &FilterBand, qe: &QeCurve, step_nm: f64) -> f64 {
    let lo = band.center_nm - 5.0 * band.fwhm_nm;
    let hi = band.center_nm + 5.0 * band.fwhm_nm;
    let n = ((hi - lo) / step_nm).round() as usize;
    let h = (hi - lo) / n as f64;
    let f = |lambda: f64| spectrum.reflectance(lambda) * band.transmission(lambda) * qe.at(lambda);
    let mut acc = 0.5 * (f(lo) + f(hi));
    for k in 1..n {
        acc += f(lo + k as f64 * h);
    }
    acc * h
}

/// One wheel-position measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandReading {
    pub band: FilterBand,
    /// Normalized counts in [0, 1].
    pub intensity: f64,
    /// Set when the reading clipped at full scale. A zero-floored dark
    /// reading is not saturation; it shows up as intensity 0 instead.
    pub saturated: bool,
}

/// Recovered peak parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakEstimate {
    pub peak_nm: f64,
    /// Physical reflectance amplitude (exposure and optics divided out).
    pub amplitude: f64,
}

/// Six band readings plus, once estimated, the recovered peak and state.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSweep {
    pub readings: Vec<BandReading>,
    pub exposure: f64,
    pub estimate: Option<PeakEstimate>,
    pub state_score: Option<f64>,
}

fn reading_with_rng(
    spectrum: &Spectrum,
    band: &FilterBand,
    qe: &QeCurve,
    exposure: f64,
    noise_sd: f64,
    rng: &mut ChaCha8Rng,
) -> BandReading {
    let noise: f64 = rng.sample::<f64, _>(StandardNormal) * noise_sd;
    let raw = exposure * band_signal(spectrum, band, qe, READING_GRID_STEP_NM) + noise;
    BandReading { band: *band, intensity: raw.clamp(0.0, 1.0), saturated: raw > 1.0 }
}

/// Simulate one wheel-position reading of a sensor.
pub fn simulate_reading(
    sensor: &PlantSensor,
    band: &FilterBand,
    qe: &QeCurve,
    exposure: f64,
    noise_sd: f64,
    seed: u64,
) -> BandReading {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    reading_with_rng(&Spectrum::from_sensor(sensor), band, qe, exposure, noise_sd, &mut rng)
}

/// Simulate the whole wheel in order, drawing per-band noise from one stream.
pub fn sweep_spectrum_with_rng(
    spectrum: &Spectrum,
    wheel: &[FilterBand; 6],
    qe: &QeCurve,
    exposure: f64,
    noise_sd: f64,
    rng: &mut ChaCha8Rng,
) -> SpectralSweep {
    debug_assert!(
        (0..6).all(|i| (i + 1..6).all(|j| wheel[i].center_nm != wheel[j].center_nm)),
        "wheel band centers must be distinct"
    );
    let readings = wheel
        .iter()
        .map(|band| reading_with_rng(spectrum, band, qe, exposure, noise_sd, rng))
        .collect();
    SpectralSweep { readings, exposure, estimate: None, state_score: None }
}

/// Simulate a full six-filter sweep of a sensor.
pub fn sweep(
    sensor: &PlantSensor,
    wheel: &[FilterBand; 6],
    qe: &QeCurve,
    exposure: f64,
    noise_sd: f64,
    seed: u64,
) -> SpectralSweep {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sweep_spectrum_with_rng(&Spectrum::from_sensor(sensor), wheel, qe, exposure, noise_sd, &mut rng)
}

/// Configuration of the peak estimator. The sensor peak width is not
/// observable from six samples, so it is fixed here rather than fitted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakFitConfig {
    pub sensor_fwhm_nm: f64,
    pub qe: QeCurve,
    pub exposure: f64,
}

impl Default for PeakFitConfig {
    fn default() -> Self {
        PeakFitConfig { sensor_fwhm_nm: 20.0, qe: QeCurve::default(), exposure: DEFAULT_EXPOSURE }
    }
}

/// Estimator clamp on the recovered center, nm.
pub const PEAK_CLAMP_NM: (f64, f64) = (620.0, 690.0);
const FIT_MAX_ITERATIONS: usize = 100;
const FIT_STEP_TOLERANCE: f64 = 1e-9;

/// Closed form of the band integral for a baseline-free Gaussian spectrum of
/// unit amplitude: exposure and optics folded in, QE applied at the centroid
/// of the spectrum-filter product. Returns (value, d/d_center).
fn model_band(cfg: &PeakFitConfig, band: &FilterBand, center_nm: f64) -> (f64, f64) {
    let sig_s = fwhm_to_sigma(cfg.sensor_fwhm_nm);
    let sig_f = fwhm_to_sigma(band.fwhm_nm);
    let var_tot = sig_s * sig_s + sig_f * sig_f;
    let k = cfg.exposure * band.transmission_peak * SQRT_2PI * sig_s * sig_f / var_tot.sqrt();
    let mu = (band.center_nm * sig_s * sig_s + center_nm * sig_f * sig_f) / var_tot;
    let delta = band.center_nm - center_nm;
    let g = (-0.5 * delta * delta / var_tot).exp();
    let qe = cfg.qe.at(mu);
    let value = k * qe * g;
    let dmu_dc = sig_f * sig_f / var_tot;
    let dvalue = k * g * (cfg.qe.slope_at(mu) * dmu_dc + qe * delta / var_tot);
    (value, dvalue)
}

/// Least-squares Gaussian peak fit over the six band centers.
///
/// Two parameters (center, amplitude), fixed width from the config,
/// initialized at the brightest usable band, solved by damped Gauss-Newton.
pub fn estimate_peak(readings: &[BandReading], cfg: &PeakFitConfig) -> Result<PeakEstimate, SpectralError> {
    let saturated = readings.iter().filter(|r| r.saturated).count();
    if saturated > 3 {
        return Err(SpectralError::SaturatedSweep);
    }
    let usable: Vec<&BandReading> = readings.iter().filter(|r| !r.saturated && r.intensity > 0.0).collect();
    if usable.len() < 3 {
        return Err(SpectralError::InsufficientSignal);
    }

    let brightest = usable
        .iter()
        .max_by(|a, b| a.intensity.partial_cmp(&b.intensity).unwrap())
        .unwrap();
    let mut center = brightest.band.center_nm;
    let (h0, _) = model_band(cfg, &brightest.band, center);
    let mut amplitude = if h0 > 1e-12 { brightest.intensity / h0 } else { 1.0 };

    let sse_at = |c: f64, a: f64| -> f64 {
        usable
            .iter()
            .map(|r| {
                let (h, _) = model_band(cfg, &r.band, c);
                let e = r.intensity - a * h;
                e * e
            })
            .sum()
    };

    let mut sse = sse_at(center, amplitude);
    let mut lambda = 1e-3;
    for _ in 0..FIT_MAX_ITERATIONS {
        // Normal equations for params (center, amplitude).
        let (mut jtj_cc, mut jtj_ca, mut jtj_aa) = (0.0, 0.0, 0.0);
        let (mut jtr_c, mut jtr_a) = (0.0, 0.0);
        for r in &usable {
            let (h, dh) = model_band(cfg, &r.band, center);
            let resid = r.intensity - amplitude * h;
            let jc = amplitude * dh;
            let ja = h;
            jtj_cc += jc * jc;
            jtj_ca += jc * ja;
            jtj_aa += ja * ja;
            jtr_c += jc * resid;
            jtr_a += ja * resid;
        }

        let mut accepted = false;
        for _ in 0..8 {
            let a11 = jtj_cc * (1.0 + lambda);
            let a22 = jtj_aa * (1.0 + lambda);
            let det = a11 * a22 - jtj_ca * jtj_ca;
            if det.abs() < 1e-30 {
                break;
            }
            let dc = (jtr_c * a22 - jtr_a * jtj_ca) / det;
            let da = (jtr_a * a11 - jtr_c * jtj_ca) / det;
            let new_center = (center + dc).clamp(600.0, 710.0);
            let new_amplitude = (amplitude + da).max(0.0);
            let new_sse = sse_at(new_center, new_amplitude);
            if new_sse <= sse {
                let step = (dc * dc + da * da).sqrt();
                center = new_center;
                amplitude = new_amplitude;
                sse = new_sse;
                lambda = (lambda * 0.3).max(1e-12);
                accepted = true;
                if step < FIT_STEP_TOLERANCE {
                    return Ok(finish(center, amplitude));
                }
                break;
            }
            lambda *= 8.0;
        }
        if !accepted {
            break;
        }
    }
    Ok(finish(center, amplitude))
}

fn finish(center: f64, amplitude: f64) -> PeakEstimate {
    PeakEstimate {
        peak_nm: center.clamp(PEAK_CLAMP_NM.0, PEAK_CLAMP_NM.1),
        amplitude: amplitude.max(0.0),
    }
}

/// How a sensor's state variable maps onto its spectral peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateCoding {
    /// State scales the peak amplitude over a fixed-center peak.
    Amplitude { peak_nm: f64, amplitude_range: (f64, f64) },
    /// State shifts the peak center at fixed amplitude.
    Shift { peak_range_nm: (f64, f64), amplitude: f64 },
}

impl Default for StateCoding {
    fn default() -> Self {
        StateCoding::Amplitude { peak_nm: 655.0, amplitude_range: (0.2, 1.0) }
    }
}

/// Spectral peak parameters a sensor in state `state` presents.
pub fn encode_state(state: f64, coding: &StateCoding) -> (f64, f64) {
    match *coding {
        StateCoding::Amplitude { peak_nm, amplitude_range: (lo, hi) } => (peak_nm, lo + state * (hi - lo)),
        StateCoding::Shift { peak_range_nm: (lo, hi), amplitude } => (lo + state * (hi - lo), amplitude),
    }
}

/// Invert the state coding on a recovered (peak, amplitude) pair.
/// Out-of-model inputs clamp to [0, 1].
pub fn state_score(peak_nm: f64, amplitude: f64, coding: &StateCoding) -> f64 {
    let s = match *coding {
        StateCoding::Amplitude { amplitude_range: (lo, hi), .. } => (amplitude - lo) / (hi - lo),
        StateCoding::Shift { peak_range_nm: (lo, hi), .. } => (peak_nm - lo) / (hi - lo),
    };
    s.clamp(0.0, 1.0)
}
