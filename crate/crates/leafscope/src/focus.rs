//! Liquid-lens autofocus: distance-to-diopter mapping over a measured
//! calibration table, plus the perpetual refocus loop over a distance stream.
//!
//! Inside the calibrated span the lens power is interpolated piecewise-
//! linearly in reciprocal distance, the thin-lens conjugate coordinate; an
//! ideal-law table therefore reproduces `power_at_infinity + 1/d` exactly at
//! any sample spacing. Outside the span the ideal law itself takes over,
//! bridged so that the combined curve stays monotone even when a measured
//! table disagrees with the law at its edges, and clamped to the lens's
//! actuation limits.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FocusError {
    #[error("focus distance must be positive, got {distance} (stream element {index})")]
    NonPositiveDistance { distance: f64, index: usize },
    #[error("invalid calibration: {0}")]
    InvalidCalibration(String),
    #[error("failed to read calibration {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("calibration parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Calibrated span every table must cover, meters. Mirrors the bench
/// procedure of focusing targets out to five meters.
pub const REQUIRED_SPAN_M: (f64, f64) = (0.5, 5.0);

/// Distance-to-power calibration for the tunable lens.
#[derive(Debug, Clone, PartialEq)]
pub struct FocusCalibration {
    /// (distance_m, power_d) pairs, strictly increasing in distance and
    /// strictly decreasing in power.
    samples: Vec<(f64, f64)>,
    power_at_infinity_d: f64,
    power_limits_d: (f64, f64),
}

impl FocusCalibration {
    pub fn new(
        samples: Vec<(f64, f64)>,
        power_at_infinity_d: f64,
        power_limits_d: (f64, f64),
    ) -> Result<Self, FocusError> {
        let bad = |msg: String| Err(FocusError::InvalidCalibration(msg));
        if samples.len() < 2 {
            return bad(format!("need at least 2 samples, got {}", samples.len()));
        }
        if !(power_limits_d.0 < power_limits_d.1) {
            return bad(format!("power limits must be ordered, got {power_limits_d:?}"));
        }
        if !power_at_infinity_d.is_finite() {
            return bad("power_at_infinity must be finite".into());
        }
        let (first, last) = (samples[0].0, samples[samples.len() - 1].0);
        if first > REQUIRED_SPAN_M.0 || last < REQUIRED_SPAN_M.1 {
            return bad(format!(
                "samples must span [{}, {}] m, got [{first}, {last}]",
                REQUIRED_SPAN_M.0, REQUIRED_SPAN_M.1
            ));
        }
        for w in samples.windows(2) {
            if !(w[1].0 > w[0].0) {
                return bad(format!("distances must be strictly increasing, got {} then {}", w[0].0, w[1].0));
            }
            if !(w[1].1 < w[0].1) {
                return bad(format!("power must be strictly decreasing with distance, got {} then {}", w[0].1, w[1].1));
            }
        }
        for &(d, p) in &samples {
            if !(d.is_finite() && p.is_finite()) || d <= 0.0 {
                return bad(format!("non-finite or non-positive sample ({d}, {p})"));
            }
            if p < power_limits_d.0 || p > power_limits_d.1 {
                return bad(format!("sample power {p} outside limits {power_limits_d:?}"));
            }
        }
        Ok(FocusCalibration { samples, power_at_infinity_d, power_limits_d })
    }

    /// Synthetic table following the ideal thin-lens law exactly, sampled
    /// every `step_m` across the required span.
    pub fn ideal(power_at_infinity_d: f64, power_limits_d: (f64, f64), step_m: f64) -> Result<Self, FocusError> {
        let mut samples = Vec::new();
        let mut d = REQUIRED_SPAN_M.0;
        while d < REQUIRED_SPAN_M.1 + step_m / 2.0 {
            let dd = d.min(REQUIRED_SPAN_M.1);
            samples.push((dd, power_at_infinity_d + 1.0 / dd));
            d += step_m;
        }
        Self::new(samples, power_at_infinity_d, power_limits_d)
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn power_at_infinity_d(&self) -> f64 {
        self.power_at_infinity_d
    }

    pub fn power_limits_d(&self) -> (f64, f64) {
        self.power_limits_d
    }
}

/// Diopter command for the lens driver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocusCommand {
    pub power_d: f64,
    pub target_distance_m: f64,
    /// Residual power error below which the image counts as in focus.
    pub defocus_tolerance_d: f64,
}

/// Default in-focus predicate width, diopters.
pub const DEFAULT_DEFOCUS_TOLERANCE_D: f64 = 0.05;

/// Lens power that focuses a target at `distance_m`.
///
/// Piecewise-linear in reciprocal distance inside the calibrated span; the
/// thin-lens law outside, bridged against the edge samples so the curve never
/// increases with distance, then clamped to the lens limits.
pub fn required_power(cal: &FocusCalibration, distance_m: f64) -> Result<f64, FocusError> {
    if !(distance_m > 0.0) || !distance_m.is_finite() {
        return Err(FocusError::NonPositiveDistance { distance: distance_m, index: 0 });
    }
    let samples = &cal.samples;
    let law = cal.power_at_infinity_d + 1.0 / distance_m;
    let raw = if distance_m < samples[0].0 {
        law.max(samples[0].1)
    } else if distance_m > samples[samples.len() - 1].0 {
        law.min(samples[samples.len() - 1].1)
    } else {
        // Rightmost bracketing interval; exact at sample distances.
        let k = samples.partition_point(|&(d, _)| d <= distance_m).saturating_sub(1);
        let (d0, p0) = samples[k];
        if d0 == distance_m || k + 1 == samples.len() {
            p0
        } else {
            let (d1, p1) = samples[k + 1];
            // Interpolate over the optical conjugate u = 1/d, where power is
            // linear for an ideal lens.
            let w = (1.0 / distance_m - 1.0 / d0) / (1.0 / d1 - 1.0 / d0);
            p0 + (p1 - p0) * w
        }
    };
    Ok(raw.clamp(cal.power_limits_d.0, cal.power_limits_d.1))
}

/// Absolute diopter mismatch between a commanded power and the power a target
/// at `true_distance_m` actually needs.
pub fn defocus_error(cal: &FocusCalibration, set_power_d: f64, true_distance_m: f64) -> Result<f64, FocusError> {
    Ok((set_power_d - required_power(cal, true_distance_m)?).abs())
}

/// Perpetual refocus over a stream of target distances: one command per
/// input, in input order.
pub fn track_focus(
    cal: &FocusCalibration,
    distances_m: &[f64],
    defocus_tolerance_d: f64,
) -> Result<Vec<FocusCommand>, FocusError> {
    distances_m
        .iter()
        .enumerate()
        .map(|(index, &d)| {
            let power_d = required_power(cal, d).map_err(|e| match e {
                FocusError::NonPositiveDistance { distance, .. } => {
                    FocusError::NonPositiveDistance { distance, index }
                }
                other => other,
            })?;
            Ok(FocusCommand { power_d, target_distance_m: d, defocus_tolerance_d })
        })
        .collect()
}

/// Parse a two-column calibration file: `distance_m power_d` per line, blank
/// lines and `#` comments allowed.
pub fn load_calibration(
    path: impl AsRef<Path>,
    power_at_infinity_d: f64,
    power_limits_d: (f64, f64),
) -> Result<FocusCalibration, FocusError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| FocusError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let mut samples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split_whitespace();
        let parse = |tok: Option<&str>, what: &str| -> Result<f64, FocusError> {
            tok.ok_or_else(|| FocusError::Parse { line: lineno + 1, reason: format!("missing {what}") })?
                .parse::<f64>()
                .map_err(|e| FocusError::Parse { line: lineno + 1, reason: format!("bad {what}: {e}") })
        };
        let d = parse(cols.next(), "distance")?;
        let p = parse(cols.next(), "power")?;
        if cols.next().is_some() {
            return Err(FocusError::Parse { line: lineno + 1, reason: "expected exactly two columns".into() });
        }
        samples.push((d, p));
    }
    FocusCalibration::new(samples, power_at_infinity_d, power_limits_d)
}
