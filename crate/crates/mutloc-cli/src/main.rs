//! Benchmark CLI: dataset simulation, single-shot estimation, and the
//! tolerance/offset-noise sweeps.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mutloc::estimator::{estimate_baseline, estimate_ito, estimate_nto, SolverConfig};
use mutloc::geometry::geodesic_deg;
use mutloc::harness::{
    make_instance, run_sweep, write_records, ExperimentConfig, Method, SweepManifest,
};
use mutloc::io::{
    load_bearings, load_json, load_trajectory, save_bearings, save_json, save_trajectory,
    EstimateReport, GroundTruth,
};

#[derive(Parser)]
#[command(name = "mutloc", version, about = "Clock offset + relative pose estimation benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset: two odometry files, bearings, and a
    /// ground-truth sidecar.
    Simulate(SimulateArgs),
    /// Run one estimator on a dataset and write a report.
    Estimate(EstimateArgs),
    /// Offset tolerance sweep (NTO vs ITO at zero noise).
    Tolerance(SweepArgs),
    /// Offset x noise grid over all three methods.
    Grid(SweepArgs),
}

/// Flags shared by every experiment-shaped subcommand.
#[derive(Args, Clone)]
struct ConfigArgs {
    /// Key-value config file (one `key = value` per line, `#` comments).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named parameter preset, applied before the config file and flags.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Ground-truth clock offset(s), seconds. Repeatable.
    #[arg(long = "offset", num_args = 1..)]
    offsets: Option<Vec<f64>>,
    /// Bearing noise sigma(s). Repeatable.
    #[arg(long = "sigma", num_args = 1..)]
    sigmas: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<usize>,
    /// Worker thread count (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory for the dataset files.
    #[arg(long, default_value = "dataset")]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    traj_a: PathBuf,
    #[arg(long)]
    traj_b: PathBuf,
    #[arg(long)]
    bearings: PathBuf,
    /// baseline | nto | ito
    #[arg(long, default_value = "ito")]
    method: Method,
    /// Ground-truth sidecar; adds error columns to the report.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Records CSV path; a manifest JSON is written next to it.
    #[arg(long, default_value = "records.csv")]
    out: PathBuf,
}

fn apply_preset(cfg: &mut ExperimentConfig, name: &str) -> Result<()> {
    match name {
        // full sweeps from the result tables: hours of compute
        "paper-tolerance" => {
            cfg.offsets = (0..=70).map(|i| i as f64 * 0.02).collect();
            cfg.sigmas = vec![0.0];
            cfg.trials = 100;
            cfg.methods = vec![Method::Nto, Method::Ito];
        }
        "paper-grid" => {
            cfg.offsets = (0..=10).map(|i| i as f64 * 0.1).collect();
            cfg.sigmas = (0..=10).map(|i| i as f64 * 0.01).collect();
            cfg.trials = 100;
            cfg.methods = Method::ALL.to_vec();
        }
        // scaled-down variants that finish in minutes
        "desk-tolerance" => {
            cfg.offsets = (0..=6).map(|i| i as f64 * 0.2).collect();
            cfg.sigmas = vec![0.0];
            cfg.trials = 10;
            cfg.methods = vec![Method::Nto, Method::Ito];
        }
        "desk-grid" => {
            cfg.offsets = vec![0.0, 0.5, 1.0];
            cfg.sigmas = vec![0.0, 0.05, 0.1];
            cfg.trials = 5;
            cfg.methods = Method::ALL.to_vec();
        }
        other => bail!(
            "unknown preset {other:?} (paper-tolerance | desk-tolerance | paper-grid | desk-grid)"
        ),
    }
    Ok(())
}

fn apply_config_file(cfg: &mut ExperimentConfig, path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let (key, value) = line
            .split_once('=')
            .with_context(|| format!("line {lineno}: expected key = value, got {raw:?}"))?;
        let key = key.trim();
        let value = value.trim();
        let ctx = || format!("line {lineno}: bad value for {key}: {value:?}");
        match key {
            "seed" => cfg.seed = value.parse().with_context(ctx)?,
            "num_control" => cfg.num_control = value.parse().with_context(ctx)?,
            "max_step" => cfg.max_step = value.parse().with_context(ctx)?,
            "knot" => cfg.knot = value.parse().with_context(ctx)?,
            "odom_dt" => cfg.odom_dt = value.parse().with_context(ctx)?,
            "odom_count" => cfg.odom_count = value.parse().with_context(ctx)?,
            "bearing_count" => cfg.bearing_count = value.parse().with_context(ctx)?,
            "bearing_margin" => cfg.bearing_margin = value.parse().with_context(ctx)?,
            "offsets" => cfg.offsets = parse_list(value).with_context(ctx)?,
            "sigmas" => cfg.sigmas = parse_list(value).with_context(ctx)?,
            "trials" => cfg.trials = value.parse().with_context(ctx)?,
            "methods" => {
                cfg.methods = value
                    .split(',')
                    .map(|m| m.trim().parse::<Method>().map_err(anyhow::Error::msg))
                    .collect::<Result<_>>()
                    .with_context(ctx)?
            }
            "ito_max_iterations" => cfg.ito_max_iterations = value.parse().with_context(ctx)?,
            "ito_epsilon" => cfg.ito_epsilon = value.parse().with_context(ctx)?,
            "workers" => cfg.workers = Some(value.parse().with_context(ctx)?),
            other => bail!("line {lineno}: unknown config key {other:?}"),
        }
    }
    Ok(())
}

fn parse_list(value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(Into::into))
        .collect()
}

fn build_config(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(preset) = &args.preset {
        apply_preset(&mut cfg, preset)?;
    }
    if let Some(path) = &args.config {
        apply_config_file(&mut cfg, path)?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(offsets) = &args.offsets {
        cfg.offsets = offsets.clone();
    }
    if let Some(sigmas) = &args.sigmas {
        cfg.sigmas = sigmas.clone();
    }
    if let Some(trials) = args.trials {
        cfg.trials = trials;
    }
    if let Some(workers) = args.workers {
        cfg.workers = Some(workers);
    }
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.offsets.is_empty() {
        bail!("offset grid is empty");
    }
    if cfg.sigmas.is_empty() {
        bail!("noise grid is empty");
    }
    if cfg.trials == 0 {
        bail!("trials must be >= 1");
    }
    if cfg.methods.is_empty() {
        bail!("no methods selected");
    }
    for (name, v) in [
        ("max_step", cfg.max_step),
        ("knot", cfg.knot),
        ("odom_dt", cfg.odom_dt),
        ("ito_epsilon", cfg.ito_epsilon),
    ] {
        if !(v > 0.0) {
            bail!("{name} must be positive, got {v}");
        }
    }
    if cfg.num_control < 4 {
        bail!("num_control must be at least 4");
    }
    if cfg.sigmas.iter().any(|&s| s < 0.0) {
        bail!("sigma must be nonnegative");
    }
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let cfg = build_config(&args.config)?;
    let offset = cfg.offsets[0];
    let sigma = cfg.sigmas[0];
    let instance = make_instance(&cfg, offset, sigma, 0)?;
    std::fs::create_dir_all(&args.out)?;
    save_trajectory(&args.out.join("traj_a.csv"), &instance.traj_a)?;
    save_trajectory(&args.out.join("traj_b.csv"), &instance.traj_b)?;
    save_bearings(&args.out.join("bearings.csv"), &instance.bearings)?;
    let truth = GroundTruth::new(
        &instance.true_rotation,
        &instance.true_translation,
        instance.true_offset,
        instance.seed,
    );
    save_json(&args.out.join("truth.json"), &truth)?;
    println!(
        "wrote {} odometry rows x2, {} bearings, offset {} s, sigma {} -> {}",
        instance.traj_a.len(),
        instance.bearings.len(),
        offset,
        sigma,
        args.out.display()
    );
    Ok(())
}

fn cmd_estimate(args: &EstimateArgs) -> Result<i32> {
    let traj_a = load_trajectory(&args.traj_a)?;
    let traj_b = load_trajectory(&args.traj_b)?;
    let bearings = load_bearings(&args.bearings)?;
    let cfg = build_config(&args.config)?;
    let solver = SolverConfig::default();

    let start = Instant::now();
    let (estimate, offset, iterations, converged) = match args.method {
        Method::Baseline => {
            let e = estimate_baseline(&bearings, &traj_a, &traj_b, &solver)?;
            (e, 0.0, 1, None)
        }
        Method::Nto => {
            let e = estimate_nto(&bearings, &traj_a, &traj_b, &solver)?;
            let dt = e.time_offset;
            (e, dt, 1, None)
        }
        Method::Ito => {
            let r = estimate_ito(&bearings, &traj_a, &traj_b, &solver, &cfg.ito())?;
            (r.estimate, r.total_offset, r.iterations, Some(r.converged))
        }
    };
    let wall = start.elapsed().as_secs_f64();

    let truth: Option<GroundTruth> = match &args.truth {
        Some(path) => Some(load_json(path)?),
        None => None,
    };
    let q = estimate.rotation.quaternion();
    let report = EstimateReport {
        method: args.method.to_string(),
        rotation_quaternion: [q.w, q.i, q.j, q.k],
        translation: [
            estimate.translation.x,
            estimate.translation.y,
            estimate.translation.z,
        ],
        time_offset: offset,
        cost: estimate.cost,
        rank_ratio: estimate.rank_ratio,
        tight: estimate.tight,
        iterations,
        converged,
        wall_time_s: wall,
        rotation_error_deg: truth
            .as_ref()
            .map(|t| geodesic_deg(&estimate.rotation, &t.rotation())),
        translation_error_m: truth
            .as_ref()
            .map(|t| (estimate.translation - t.translation_vec()).norm()),
        offset_error_s: truth.as_ref().map(|t| (offset - t.time_offset).abs()),
    };
    save_json(&args.out, &report)?;
    serde_json::to_writer_pretty(std::io::stdout().lock(), &report)?;
    println!();
    // not_converged still exits 0: the report carries the flag
    Ok(0)
}

fn run_sweep_cmd(args: &SweepArgs, label: &str, force_methods: Option<Vec<Method>>) -> Result<()> {
    let mut cfg = build_config(&args.config)?;
    if let Some(methods) = force_methods {
        // only apply when the user didn't pick methods via preset/config
        if args.config.preset.is_none() && args.config.config.is_none() {
            cfg.methods = methods;
        }
    }
    let solver = SolverConfig::default();
    let total = cfg.offsets.len() * cfg.sigmas.len() * cfg.trials * cfg.methods.len();
    eprintln!("{label}: {total} trials over {} offsets x {} sigmas", cfg.offsets.len(), cfg.sigmas.len());
    let start = Instant::now();
    let records = run_sweep(&cfg, &solver);
    let elapsed = start.elapsed().as_secs_f64();
    write_records(&args.out, &records)?;
    let manifest = SweepManifest::new(&cfg, &records);
    let manifest_path = args.out.with_extension("manifest.json");
    save_json(&manifest_path, &manifest)?;
    eprintln!(
        "{} records in {elapsed:.1}s (ok {}, not_converged {}, degenerate {}, solver_failure {}) -> {}",
        manifest.records,
        manifest.ok,
        manifest.not_converged,
        manifest.degenerate,
        manifest.solver_failure,
        args.out.display()
    );
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => cmd_simulate(args).map(|()| 0),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Tolerance(args) => {
            run_sweep_cmd(args, "tolerance sweep", Some(vec![Method::Nto, Method::Ito])).map(|()| 0)
        }
        Command::Grid(args) => {
            run_sweep_cmd(args, "offset x noise grid", Some(Method::ALL.to_vec())).map(|()| 0)
        }
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(1);
        }
    }
}
