//! `leafscope` command line: run the full pipeline or exercise one stage.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use leafscope::focus::{self, FocusCalibration};
use leafscope::geom::Vec3;
use leafscope::isolate::{self, IntensityBand, IsolationParams};
use leafscope::pipeline::{self, fmt_sig, PipelineConfig};
use leafscope::scene::{self, SceneDescription};
use leafscope::spectral::{self, PeakFitConfig, QeCurve, StateCoding};
use leafscope::steer::{self, SteerParams};

#[derive(Parser)]
#[command(name = "leafscope", version, about = "Detect and interrogate retroreflective leaf sensors in a simulated scene")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline from a run configuration and write the report.
    Run {
        /// Run configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Override the configured report path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render one LiDAR sweep of a scene to CSV.
    Simulate {
        #[arg(long)]
        scene: PathBuf,
        /// Output CSV for the frame.
        #[arg(long)]
        out: PathBuf,
        /// Override the scene's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Detect sensor candidates in a scene and print one line per cluster.
    Detect(DetectArgs),
    /// Compute the mirror command for a target position.
    Steer {
        /// Scene file providing the rig pose.
        #[arg(long)]
        scene: PathBuf,
        /// Target position as "x,y,z" meters.
        #[arg(long, allow_hyphen_values = true)]
        target: String,
        /// Travel limit from the rest normal, degrees.
        #[arg(long, default_value_t = steer::DEFAULT_ENVELOPE_LIMIT_DEG)]
        limit: f64,
    },
    /// Print the lens power focusing a given distance.
    Focus {
        /// Target distance, meters.
        #[arg(long)]
        distance: f64,
        /// Two-column calibration file (distance_m power_d). Defaults to the
        /// ideal thin-lens table.
        #[arg(long)]
        calibration: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        power_at_infinity: f64,
        /// Lens actuation limits as "lo,hi" diopters.
        #[arg(long, default_value = "-2,3", allow_hyphen_values = true)]
        limits: String,
    },
    /// Sweep the filter wheel over one scene sensor and print the readings.
    Interrogate {
        #[arg(long)]
        scene: PathBuf,
        /// Sensor index within the scene file.
        #[arg(long)]
        sensor: usize,
        /// Override the scene's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Per-reading Gaussian noise (normalized scale).
        #[arg(long, default_value_t = 0.0)]
        noise_sd: f64,
        /// Optional CSV output of the six readings.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Intensity pass band as "lo,hi" counts.
    #[arg(long, default_value = "230,255")]
    band: String,
    #[arg(long, default_value_t = 0.10)]
    eps: f64,
    #[arg(long, default_value_t = 5)]
    min_pts: usize,
    #[arg(long, default_value_t = 0.25)]
    max_extent: f64,
    /// Cluster mean-range gate as "lo,hi" meters.
    #[arg(long, default_value = "0.8,2.05")]
    gate: String,
    /// Optional CSV output of the cluster reports.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn parse_pair(text: &str, what: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 2 {
        bail!("{what} must be \"lo,hi\", got {text:?}");
    }
    Ok((
        parts[0].trim().parse().with_context(|| format!("bad {what} low bound"))?,
        parts[1].trim().parse().with_context(|| format!("bad {what} high bound"))?,
    ))
}

fn parse_vec3(text: &str) -> Result<Vec3> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        bail!("target must be \"x,y,z\", got {text:?}");
    }
    let mut v = [0.0; 3];
    for (slot, p) in v.iter_mut().zip(&parts) {
        *slot = p.trim().parse().context("bad target coordinate")?;
    }
    Ok(Vec3::new(v[0], v[1], v[2]))
}

fn load_scene_arg(path: &PathBuf) -> Result<SceneDescription> {
    scene::load_scene(path).map_err(anyhow::Error::from)
}

fn cmd_run(config: PathBuf, out: Option<PathBuf>) -> Result<()> {
    let mut cfg = PipelineConfig::load(&config)?;
    if out.is_some() {
        cfg.output = out;
    }
    let records = pipeline::run_pipeline(&cfg);
    let full = records.iter().filter(|r| r.interrogation().is_some()).count();
    for r in &records {
        match &r.outcome {
            Ok(i) => println!(
                "target {}: centroid=({}, {}, {}) range={} m pitch={} deg yaw={} deg power={} D peak={} nm score={}",
                r.target_id,
                fmt_sig(r.centroid.x, 6),
                fmt_sig(r.centroid.y, 6),
                fmt_sig(r.centroid.z, 6),
                fmt_sig(r.mean_range_m, 6),
                fmt_sig(i.pitch_deg, 6),
                fmt_sig(i.yaw_deg, 6),
                fmt_sig(i.focus_power_d, 6),
                fmt_sig(i.estimated_peak_nm, 6),
                fmt_sig(i.state_score, 6),
            ),
            Err(reason) => println!("target {}: skipped ({})", r.target_id, reason.as_str()),
        }
    }
    println!("{} targets, {} interrogated, {} skipped", records.len(), full, records.len() - full);
    if let Some(path) = &cfg.output {
        pipeline::write_report(&records, path)?;
        println!("report written to {}", path.display());
    }
    Ok(())
}

fn cmd_simulate(scene_path: PathBuf, out: PathBuf, seed: Option<u64>) -> Result<()> {
    let desc = load_scene_arg(&scene_path)?;
    let seed = seed.unwrap_or(desc.rng_seed);
    let frame = scene::render_frame(&desc, seed);
    let mut text = String::from("x_m,y_m,z_m,range_m,intensity,ring,azimuth_deg\n");
    for p in &frame.points {
        text.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fmt_sig(p.position.x, 6),
            fmt_sig(p.position.y, 6),
            fmt_sig(p.position.z, 6),
            fmt_sig(p.range_m, 6),
            fmt_sig(p.intensity, 6),
            p.ring,
            fmt_sig(p.azimuth_deg, 6),
        ));
    }
    std::fs::write(&out, text).with_context(|| format!("writing {}", out.display()))?;
    println!("{} returns written to {}", frame.points.len(), out.display());
    Ok(())
}

fn cmd_detect(args: DetectArgs) -> Result<()> {
    let desc = load_scene_arg(&args.scene)?;
    let (lo, hi) = parse_pair(&args.band, "band")?;
    let gate = parse_pair(&args.gate, "gate")?;
    let params = IsolationParams {
        band: IntensityBand::new(lo, hi),
        eps_m: args.eps,
        min_pts: args.min_pts,
        max_extent_m: args.max_extent,
        range_gate_m: gate,
    };
    let frame = scene::render_frame(&desc, args.seed.unwrap_or(desc.rng_seed));
    let reports = isolate::detect(&frame, &params);
    for r in &reports {
        println!(
            "cluster {}: centroid=({}, {}, {}) mean_range={} m points={} extent={} m valid={}",
            r.id,
            fmt_sig(r.centroid.x, 6),
            fmt_sig(r.centroid.y, 6),
            fmt_sig(r.centroid.z, 6),
            fmt_sig(r.mean_range_m, 6),
            r.point_count,
            fmt_sig(r.extent_m, 6),
            r.valid,
        );
    }
    println!("{} clusters ({} valid)", reports.len(), reports.iter().filter(|r| r.valid).count());
    if let Some(path) = &args.csv {
        let mut text = String::from("id,centroid_x_m,centroid_y_m,centroid_z_m,mean_range_m,point_count,extent_m,valid\n");
        for r in &reports {
            text.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.id,
                fmt_sig(r.centroid.x, 6),
                fmt_sig(r.centroid.y, 6),
                fmt_sig(r.centroid.z, 6),
                fmt_sig(r.mean_range_m, 6),
                r.point_count,
                fmt_sig(r.extent_m, 6),
                r.valid,
            ));
        }
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn cmd_steer(scene_path: PathBuf, target: String, limit: f64) -> Result<()> {
    let desc = load_scene_arg(&scene_path)?;
    let target = parse_vec3(&target)?;
    let params = SteerParams { envelope_limit_deg: limit, ..SteerParams::default() };
    let cmd = steer::command_for_target(&desc.rig, target, &params)?;
    println!("pitch_deg={}", fmt_sig(cmd.pitch_deg, 6));
    println!("yaw_deg={}", fmt_sig(cmd.yaw_deg, 6));
    println!("in_envelope={}", cmd.in_envelope);
    println!("pointing_residual_deg={}", fmt_sig(cmd.pointing_residual_deg, 6));
    Ok(())
}

fn cmd_focus(distance: f64, calibration: Option<PathBuf>, p_inf: f64, limits: String) -> Result<()> {
    let limits = parse_pair(&limits, "limits")?;
    let cal = match calibration {
        Some(path) => focus::load_calibration(path, p_inf, limits)?,
        None => FocusCalibration::ideal(p_inf, limits, 0.25)?,
    };
    let power = focus::required_power(&cal, distance)?;
    println!("power_d={}", fmt_sig(power, 6));
    Ok(())
}

fn cmd_interrogate(
    scene_path: PathBuf,
    sensor_idx: usize,
    seed: Option<u64>,
    noise_sd: f64,
    csv: Option<PathBuf>,
) -> Result<()> {
    let desc = load_scene_arg(&scene_path)?;
    let Some(sensor) = desc.sensors.get(sensor_idx) else {
        bail!("scene has {} sensors; index {} is out of range", desc.sensors.len(), sensor_idx);
    };
    let wheel = spectral::default_wheel();
    let qe = QeCurve::default();
    let exposure = spectral::DEFAULT_EXPOSURE;
    let sweep = spectral::sweep(sensor, &wheel, &qe, exposure, noise_sd, seed.unwrap_or(desc.rng_seed));
    for r in &sweep.readings {
        println!(
            "band {} nm: intensity={}{}",
            fmt_sig(r.band.center_nm, 6),
            fmt_sig(r.intensity, 6),
            if r.saturated { " (saturated)" } else { "" }
        );
    }
    let fit = PeakFitConfig { sensor_fwhm_nm: sensor.peak_fwhm_nm, qe, exposure };
    let est = spectral::estimate_peak(&sweep.readings, &fit)?;
    let coding = StateCoding::default();
    let score = spectral::state_score(est.peak_nm, est.amplitude, &coding);
    println!("estimated_peak_nm={}", fmt_sig(est.peak_nm, 6));
    println!("estimated_amplitude={}", fmt_sig(est.amplitude, 6));
    println!("state_score={}", fmt_sig(score, 6));
    if let Some(path) = &csv {
        let mut text = String::from("band_center_nm,intensity,saturated\n");
        for r in &sweep.readings {
            text.push_str(&format!(
                "{},{},{}\n",
                fmt_sig(r.band.center_nm, 6),
                fmt_sig(r.intensity, 6),
                r.saturated
            ));
        }
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out } => cmd_run(config, out),
        Command::Simulate { scene, out, seed } => cmd_simulate(scene, out, seed),
        Command::Detect(args) => cmd_detect(args),
        Command::Steer { scene, target, limit } => cmd_steer(scene, target, limit),
        Command::Focus { distance, calibration, power_at_infinity, limits } => {
            cmd_focus(distance, calibration, power_at_infinity, limits)
        }
        Command::Interrogate { scene, sensor, seed, noise_sd, csv } => {
            cmd_interrogate(scene, sensor, seed, noise_sd, csv)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
