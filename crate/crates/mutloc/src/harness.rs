//! Experiment harness: seeded instance generation, trial execution, and the
//! offset/noise sweeps behind the benchmark CLI.

use std::fmt;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::estimator::{
    estimate_baseline, estimate_ito, estimate_nto, ItoConfig, RelativeEstimate, SolverConfig,
};
use crate::geometry::{geodesic_deg, Rot3, Vec3};
use crate::sim::{synthesize_bearings, generate_spline, BearingObservation, BearingWindow, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Baseline,
    Nto,
    Ito,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Baseline, Method::Nto, Method::Ito];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Baseline => write!(f, "baseline"),
            Method::Nto => write!(f, "nto"),
            Method::Ito => write!(f, "ito"),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Method::Baseline),
            "nto" => Ok(Method::Nto),
            "ito" => Ok(Method::Ito),
            other => Err(format!("unknown method {other:?} (baseline|nto|ito)")),
        }
    }
}

/// Full sweep configuration. Defaults match the simulation protocol used in
/// the result tables: 40 control points, 1 s knot spacing, 20 s of odometry
/// at 200 Hz, 200 bearing measurements.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub num_control: usize,
    pub max_step: f64,
    pub knot: f64,
    pub odom_dt: f64,
    pub odom_count: usize,
    pub bearing_count: usize,
    /// Extra seconds trimmed off each end of the odometry span before
    /// bearings are sampled, so shifted lookups stay in range.
    pub bearing_margin: f64,
    pub offsets: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub trials: usize,
    pub methods: Vec<Method>,
    pub ito_max_iterations: usize,
    pub ito_epsilon: f64,
    pub workers: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            num_control: 40,
            max_step: 0.5,
            knot: 1.0,
            odom_dt: 0.005,
            odom_count: 4000,
            bearing_count: 200,
            bearing_margin: 2.0,
            offsets: vec![0.0],
            sigmas: vec![0.0],
            trials: 1,
            methods: vec![Method::Nto],
            ito_max_iterations: 10,
            ito_epsilon: 0.01,
            workers: None,
        }
    }
}

impl ExperimentConfig {
    /// Stable hex digest of the canonical JSON encoding, recorded with every
    /// trial row so result files are traceable to their configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config is serializable");
        let digest = Sha256::digest(json.as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        hex[..16].to_string()
    }

    pub fn ito(&self) -> ItoConfig {
        ItoConfig {
            max_iterations: self.ito_max_iterations,
            epsilon: self.ito_epsilon,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Ok,
    NotConverged,
    Degenerate,
    SolverFailure,
}

impl fmt::Display for TrialStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrialStatus::Ok => write!(f, "ok"),
            TrialStatus::NotConverged => write!(f, "not_converged"),
            TrialStatus::Degenerate => write!(f, "degenerate"),
            TrialStatus::SolverFailure => write!(f, "solver_failure"),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub true_offset: f64,
    pub sigma: f64,
    pub method: Method,
    pub offset_error: f64,
    pub rotation_error_deg: f64,
    pub translation_error_m: f64,
    pub cost: f64,
    pub rank_ratio: f64,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub status: TrialStatus,
    pub config_hash: String,
}

/// One synthetic problem: two odometry streams in their own frames, a set
/// of bearings, and the ground-truth relative transform and clock offset.
pub struct Instance {
    pub traj_a: Trajectory,
    pub traj_b: Trajectory,
    pub bearings: Vec<BearingObservation>,
    pub true_rotation: Rot3,
    pub true_translation: Vec3,
    pub true_offset: f64,
    pub seed: u64,
}

/// Derives a per-trial seed from the sweep seed and the trial coordinates.
/// Independent of method, so all methods see identical data.
fn trial_seed(base: u64, offset: f64, sigma: f64, trial: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update(offset.to_bits().to_le_bytes());
    h.update(sigma.to_bits().to_le_bytes());
    h.update((trial as u64).to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

pub fn make_instance(
    config: &ExperimentConfig,
    true_offset: f64,
    sigma: f64,
    trial: usize,
) -> Result<Instance> {
    let seed = trial_seed(config.seed, true_offset, sigma, trial);
    let spline_a = generate_spline(config.num_control, config.max_step, config.knot, seed)?;
    let spline_b = generate_spline(
        config.num_control,
        config.max_step,
        config.knot,
        seed ^ 0x9e37_79b9_7f4a_7c15,
    )?;
    let (lo, _) = spline_a.support();
    let t0 = lo + 0.5 * config.knot;
    let traj_a = spline_a.sample_trajectory(t0, config.odom_dt, config.odom_count)?;
    let traj_b_world = spline_b.sample_trajectory(t0, config.odom_dt, config.odom_count)?;

    // bearings must stay interpolable after every re-timing round,
    // including overshoot
    let margin_eff = config.bearing_margin.max(true_offset.abs() * 1.5 + 0.2);
    let window = BearingWindow {
        start: traj_a.start_time() + margin_eff,
        end: traj_a.end_time() - margin_eff,
    };
    let bearings = synthesize_bearings(
        &spline_a,
        &spline_b,
        config.bearing_count,
        true_offset,
        sigma,
        window,
        seed.wrapping_add(1),
    )?;

    // express robot B's odometry in a random local frame; the estimator
    // should recover the inverse gauge
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
    let gauge_r = crate::testutil::random_rotation(&mut rng);
    let gauge_t = Vector3::new(
        rng.gen_range(-3.0..3.0),
        rng.gen_range(-3.0..3.0),
        rng.gen_range(-3.0..3.0),
    );
    let traj_b = traj_b_world.transformed(&gauge_r, &gauge_t);

    let true_rotation = gauge_r.transpose();
    let true_translation = -true_rotation.apply(&gauge_t);
    Ok(Instance {
        traj_a,
        traj_b,
        bearings,
        true_rotation,
        true_translation,
        true_offset,
        seed,
    })
}

fn errors(
    instance: &Instance,
    estimate: &RelativeEstimate,
    total_offset: f64,
) -> (f64, f64, f64) {
    let rot = geodesic_deg(&estimate.rotation, &instance.true_rotation);
    let trans = (estimate.translation - instance.true_translation).norm();
    let off = (total_offset - instance.true_offset).abs();
    (off, rot, trans)
}

/// Runs one method on one instance and converts the outcome (including
/// failures) into a flat record.
pub fn run_trial(
    config: &ExperimentConfig,
    instance: &Instance,
    method: Method,
    trial: usize,
    sigma: f64,
    solver: &SolverConfig,
) -> TrialRecord {
    let hash = config.hash();
    let start = Instant::now();
    let outcome = match method {
        Method::Baseline => {
            estimate_baseline(&instance.bearings, &instance.traj_a, &instance.traj_b, solver)
                .map(|e| (e, 0.0, 0, true))
        }
        Method::Nto => {
            estimate_nto(&instance.bearings, &instance.traj_a, &instance.traj_b, solver)
                .map(|e| {
                    let dt = e.time_offset;
                    (e, dt, 1, true)
                })
        }
        Method::Ito => estimate_ito(
            &instance.bearings,
            &instance.traj_a,
            &instance.traj_b,
            solver,
            &config.ito(),
        )
        .map(|r| (r.estimate, r.total_offset, r.iterations, r.converged)),
    };
    let wall = start.elapsed().as_secs_f64();

    match outcome {
        Ok((est, total_offset, iterations, converged)) => {
            let (off, rot, trans) = errors(instance, &est, total_offset);
            let status = if converged {
                TrialStatus::Ok
            } else {
                TrialStatus::NotConverged
            };
            TrialRecord {
                trial,
                seed: instance.seed,
                true_offset: instance.true_offset,
                sigma,
                method,
                offset_error: off,
                rotation_error_deg: rot,
                translation_error_m: trans,
                cost: est.cost,
                rank_ratio: est.rank_ratio,
                iterations,
                wall_time_s: wall,
                status,
                config_hash: hash,
            }
        }
        Err(err) => {
            let status = match err {
                crate::error::Error::DegenerateSolution(_)
                | crate::error::Error::InconsistentLift { .. }
                | crate::error::Error::ZeroSolution => TrialStatus::Degenerate,
                _ => TrialStatus::SolverFailure,
            };
            TrialRecord {
                trial,
                seed: instance.seed,
                true_offset: instance.true_offset,
                sigma,
                method,
                offset_error: f64::NAN,
                rotation_error_deg: f64::NAN,
                translation_error_m: f64::NAN,
                cost: f64::NAN,
                rank_ratio: f64::NAN,
                iterations: 0,
                wall_time_s: wall,
                status,
                config_hash: hash,
            }
        }
    }
}

fn sweep_tasks(config: &ExperimentConfig) -> Vec<(f64, f64, usize)> {
    let mut tasks = Vec::new();
    for &offset in &config.offsets {
        for &sigma in &config.sigmas {
            for trial in 0..config.trials {
                tasks.push((offset, sigma, trial));
            }
        }
    }
    tasks
}

fn run_task(config: &ExperimentConfig, solver: &SolverConfig, task: (f64, f64, usize)) -> Vec<TrialRecord> {
    let (offset, sigma, trial) = task;
    match make_instance(config, offset, sigma, trial) {
        Ok(instance) => config
            .methods
            .iter()
            .map(|&m| run_trial(config, &instance, m, trial, sigma, solver))
            .collect(),
        Err(_) => config
            .methods
            .iter()
            .map(|&m| TrialRecord {
                trial,
                seed: trial_seed(config.seed, offset, sigma, trial),
                true_offset: offset,
                sigma,
                method: m,
                offset_error: f64::NAN,
                rotation_error_deg: f64::NAN,
                translation_error_m: f64::NAN,
                cost: f64::NAN,
                rank_ratio: f64::NAN,
                iterations: 0,
                wall_time_s: 0.0,
                status: TrialStatus::SolverFailure,
                config_hash: config.hash(),
            })
            .collect(),
    }
}

fn sort_records(records: &mut [TrialRecord]) {
    records.sort_by(|a, b| {
        a.true_offset
            .total_cmp(&b.true_offset)
            .then(a.sigma.total_cmp(&b.sigma))
            .then(a.method.cmp(&b.method))
            .then(a.trial.cmp(&b.trial))
    });
}

/// Runs every (offset, sigma, trial, method) combination sequentially.
/// Output order is deterministic: sorted by (offset, sigma, method, trial).
pub fn run_sweep_sequential(config: &ExperimentConfig, solver: &SolverConfig) -> Vec<TrialRecord> {
    let mut records: Vec<TrialRecord> = sweep_tasks(config)
        .into_iter()
        .flat_map(|t| run_task(config, solver, t))
        .collect();
    sort_records(&mut records);
    records
}

/// Parallel sweep over trials. Falls back to the sequential path when the
/// `parallel` feature is disabled.
#[cfg(feature = "parallel")]
pub fn run_sweep(config: &ExperimentConfig, solver: &SolverConfig) -> Vec<TrialRecord> {
    use rayon::prelude::*;
    let run = || {
        let mut records: Vec<TrialRecord> = sweep_tasks(config)
            .into_par_iter()
            .flat_map_iter(|t| run_task(config, solver, t))
            .collect();
        sort_records(&mut records);
        records
    };
    match config.workers {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(run),
        _ => run(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn run_sweep(config: &ExperimentConfig, solver: &SolverConfig) -> Vec<TrialRecord> {
    run_sweep_sequential(config, solver)
}

pub const RECORD_HEADER: &str = "trial,seed,true_offset,sigma,method,offset_error,\
rotation_error_deg,translation_error_m,cost,rank_ratio,iterations,wall_time_s,status,config_hash";

pub fn write_records(path: &Path, records: &[TrialRecord]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{RECORD_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.trial,
            r.seed,
            r.true_offset,
            r.sigma,
            r.method,
            r.offset_error,
            r.rotation_error_deg,
            r.translation_error_m,
            r.cost,
            r.rank_ratio,
            r.iterations,
            r.wall_time_s,
            r.status,
            r.config_hash
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Manifest describing a finished sweep, written alongside the CSV.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepManifest {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub records: usize,
    pub ok: usize,
    pub not_converged: usize,
    pub degenerate: usize,
    pub solver_failure: usize,
    pub total_wall_time_s: f64,
}

impl SweepManifest {
    pub fn new(config: &ExperimentConfig, records: &[TrialRecord]) -> Self {
        let count = |s: TrialStatus| records.iter().filter(|r| r.status == s).count();
        Self {
            config: config.clone(),
            config_hash: config.hash(),
            records: records.len(),
            ok: count(TrialStatus::Ok),
            not_converged: count(TrialStatus::NotConverged),
            degenerate: count(TrialStatus::Degenerate),
            solver_failure: count(TrialStatus::SolverFailure),
            total_wall_time_s: records.iter().map(|r| r.wall_time_s).sum(),
        }
    }
}

/// Median of a slice (ignores NaN by pushing it to the end; returns NaN for
/// an empty slice).
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
