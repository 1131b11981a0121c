//! CSV/JSON persistence for trajectories, bearings, and experiment outputs.
//!
//! Trajectory files are CSV with a mandatory header
//! `t,x,y,z,qw,qx,qy,qz` plus optional `vx,vy,vz` columns; bearing files are
//! `t,bx,by,bz`. Floats are written with `f64`'s shortest round-trip
//! formatting, so timestamps, positions, and velocities reload bit-exact;
//! rotations pass through a quaternion conversion accurate to ~1e-15.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Rot3;
use crate::sim::{BearingObservation, TimedPose, Trajectory};

const TRAJ_HEADER_FULL: &str = "t,x,y,z,qw,qx,qy,qz,vx,vy,vz";
const TRAJ_HEADER_SHORT: &str = "t,x,y,z,qw,qx,qy,qz";
const BEARING_HEADER: &str = "t,bx,by,bz";

fn parse_err(line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        line,
        reason: reason.into(),
    }
}

fn parse_f64(tok: &str, line: usize, what: &str) -> Result<f64> {
    tok.trim()
        .parse::<f64>()
        .map_err(|_| parse_err(line, format!("bad {what}: {tok:?}")))
}

pub fn save_trajectory(path: &Path, trajectory: &Trajectory) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{TRAJ_HEADER_FULL}")?;
    for pose in trajectory.samples() {
        let q = pose.rotation.quaternion();
        let p = pose.translation;
        let v = pose.velocity;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            pose.t, p.x, p.y, p.z, q.w, q.i, q.j, q.k, v.x, v.y, v.z
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Loads a trajectory. Files without velocity columns get velocities from
/// central finite differences.
pub fn load_trajectory(path: &Path) -> Result<Trajectory> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file"))?;
    let header = header?;
    let header_norm = header.trim().to_ascii_lowercase().replace(' ', "");
    let has_velocity = match header_norm.as_str() {
        TRAJ_HEADER_FULL => true,
        TRAJ_HEADER_SHORT => false,
        _ => {
            return Err(parse_err(
                1,
                format!("expected header {TRAJ_HEADER_SHORT}[,vx,vy,vz], got {header:?}"),
            ))
        }
    };
    let want = if has_velocity { 11 } else { 8 };
    let mut poses = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split(',').collect();
        if toks.len() != want {
            return Err(parse_err(
                lineno,
                format!("expected {want} fields, got {}", toks.len()),
            ));
        }
        let t = parse_f64(toks[0], lineno, "timestamp")?;
        if let Some(prev) = poses.last() {
            let prev: &TimedPose = prev;
            if t <= prev.t {
                return Err(parse_err(
                    lineno,
                    format!("timestamps must strictly increase ({} after {})", t, prev.t),
                ));
            }
        }
        let p = Vector3::new(
            parse_f64(toks[1], lineno, "x")?,
            parse_f64(toks[2], lineno, "y")?,
            parse_f64(toks[3], lineno, "z")?,
        );
        let q = nalgebra::Quaternion::new(
            parse_f64(toks[4], lineno, "qw")?,
            parse_f64(toks[5], lineno, "qx")?,
            parse_f64(toks[6], lineno, "qy")?,
            parse_f64(toks[7], lineno, "qz")?,
        );
        let qnorm = q.norm();
        if qnorm < 1e-9 {
            return Err(parse_err(lineno, "zero quaternion"));
        }
        // preserve bit-exact round trips for already-normalized input
        let uq = if (qnorm - 1.0).abs() < 1e-12 {
            UnitQuaternion::new_unchecked(q)
        } else {
            UnitQuaternion::from_quaternion(q)
        };
        let rotation = Rot3::from_quaternion(&uq);
        let velocity = if has_velocity {
            Vector3::new(
                parse_f64(toks[8], lineno, "vx")?,
                parse_f64(toks[9], lineno, "vy")?,
                parse_f64(toks[10], lineno, "vz")?,
            )
        } else {
            Vector3::zeros()
        };
        poses.push(TimedPose {
            t,
            rotation,
            translation: p,
            velocity,
        });
    }
    let traj = Trajectory::new(poses)?;
    if has_velocity {
        Ok(traj)
    } else {
        traj.with_finite_difference_velocities()
    }
}

pub fn save_bearings(path: &Path, bearings: &[BearingObservation]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{BEARING_HEADER}")?;
    for b in bearings {
        let d = b.direction;
        writeln!(w, "{},{},{},{}", b.t, d.x, d.y, d.z)?;
    }
    w.flush()?;
    Ok(())
}

/// Loads bearing observations, renormalizing each direction. Prints a
/// warning to stderr when a direction is off unit norm by more than 1e-6.
pub fn load_bearings(path: &Path) -> Result<Vec<BearingObservation>> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file"))?;
    let header = header?;
    if header.trim().to_ascii_lowercase().replace(' ', "") != BEARING_HEADER {
        return Err(parse_err(
            1,
            format!("expected header {BEARING_HEADER}, got {header:?}"),
        ));
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split(',').collect();
        if toks.len() != 4 {
            return Err(parse_err(
                lineno,
                format!("expected 4 fields, got {}", toks.len()),
            ));
        }
        let t = parse_f64(toks[0], lineno, "timestamp")?;
        let d = Vector3::new(
            parse_f64(toks[1], lineno, "bx")?,
            parse_f64(toks[2], lineno, "by")?,
            parse_f64(toks[3], lineno, "bz")?,
        );
        let norm = d.norm();
        if norm < 1e-9 {
            return Err(parse_err(lineno, "zero bearing direction"));
        }
        if (norm - 1.0).abs() > 1e-6 {
            eprintln!("warning: line {lineno}: bearing norm {norm} != 1, renormalizing");
        }
        out.push(BearingObservation::new(t, d / norm)?);
    }
    Ok(out)
}

/// Ground-truth sidecar written next to simulated datasets.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Rotation of robot B's frame expressed in robot A's frame (quaternion
    /// w,x,y,z).
    pub rotation_quaternion: [f64; 4],
    pub translation: [f64; 3],
    pub time_offset: f64,
    pub seed: u64,
}

impl GroundTruth {
    pub fn new(rotation: &Rot3, translation: &crate::geometry::Vec3, time_offset: f64, seed: u64) -> Self {
        let q = rotation.quaternion();
        Self {
            rotation_quaternion: [q.w, q.i, q.j, q.k],
            translation: [translation.x, translation.y, translation.z],
            time_offset,
            seed,
        }
    }

    pub fn rotation(&self) -> Rot3 {
        let [w, x, y, z] = self.rotation_quaternion;
        Rot3::from_quaternion(&UnitQuaternion::from_quaternion(
            nalgebra::Quaternion::new(w, x, y, z),
        ))
    }

    pub fn translation_vec(&self) -> crate::geometry::Vec3 {
        Vector3::new(self.translation[0], self.translation[1], self.translation[2])
    }
}

/// Single-shot estimation report written by the CLI.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: String,
    pub rotation_quaternion: [f64; 4],
    pub translation: [f64; 3],
    pub time_offset: f64,
    pub cost: f64,
    pub rank_ratio: f64,
    pub tight: bool,
    pub iterations: usize,
    pub converged: Option<bool>,
    pub wall_time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rotation_error_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub translation_error_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offset_error_s: Option<f64>,
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| Error::SolverFailure(format!("json serialization failed: {e}")))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let reader = BufReader::new(File::open(path)?);
    serde_json::from_reader(reader).map_err(|e| Error::Parse {
        line: 0,
        reason: format!("json: {e}"),
    })
}
