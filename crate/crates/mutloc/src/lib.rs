//! Joint estimation of the clock offset and relative SE(3) transform between
//! two robots, from per-robot odometry and inter-robot bearing measurements.
//!
//! The pipeline: a linearized time-offset measurement model ([`problem`]),
//! Schur marginalization of the per-measurement range variables, lifting to
//! a quadratically constrained program over scaled rotations, a semidefinite
//! relaxation solved by a dense interior-point method ([`sdp`]), and rank-1
//! recovery with tightness certification ([`estimator`]). Large clock
//! offsets are handled by coarse-to-fine re-timing ([`estimator::estimate_ito`]).

pub mod error;
pub mod estimator;
pub mod geometry;
pub mod harness;
pub mod io;
pub mod problem;
pub mod sdp;
pub mod sim;
#[doc(hidden)]
pub mod testutil;

pub use error::{Error, Result};
pub use estimator::{
    decode, estimate_baseline, estimate_ito, estimate_nto, ItoConfig, ItoResult,
    RelativeEstimate, SolverConfig,
};
pub use geometry::{geodesic_deg, project_to_rotation, Rot3};
pub use harness::{
    make_instance, run_sweep, run_sweep_sequential, run_trial, write_records, ExperimentConfig,
    Method, SweepManifest, TrialRecord, TrialStatus,
};
pub use problem::{assemble, assemble_baseline, build_constraints, bundle, StackedProblem};
pub use sdp::{extract_rank1, solve, tightness, InteriorPoint, SdpBackend, SdpConfig,
    SdpProblem, SdpSolution, SdpStatus};
pub use sim::{
    generate_spline, synthesize_bearings, BearingObservation, BearingWindow, ControlSpline,
    TimedPose, Trajectory,
};
