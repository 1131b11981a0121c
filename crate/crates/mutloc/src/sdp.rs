//! A small dense semidefinite program solver with equality constraints,
//! plus tightness diagnostics and rank-1 extraction.
//!
//! Solves `min tr(C Z)  s.t.  tr(Q_i Z) = g_i, Z ⪰ 0` with an infeasible
//! primal-dual path-following method using Nesterov-Todd scaling. The
//! per-iteration Schur complement is solved by a symmetric eigenvalue
//! pseudo-inverse, which tolerates the linearly dependent (but consistent)
//! rows produced by redundant rotation constraints.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct SdpProblem {
    pub cost: DMatrix<f64>,
    pub constraints: Vec<(DMatrix<f64>, f64)>,
}

impl SdpProblem {
    /// Symmetrizes all matrices on construction.
    pub fn new(cost: DMatrix<f64>, constraints: Vec<(DMatrix<f64>, f64)>) -> Self {
        let sym = |m: DMatrix<f64>| {
            let t = m.transpose();
            (m + t) * 0.5
        };
        Self {
            cost: sym(cost),
            constraints: constraints.into_iter().map(|(m, g)| (sym(m), g)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.cost.nrows()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    MaxIterations,
    Infeasible,
}

impl std::fmt::Display for SdpStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SdpStatus::Optimal => write!(f, "optimal"),
            SdpStatus::MaxIterations => write!(f, "max_iterations"),
            SdpStatus::Infeasible => write!(f, "infeasible"),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct IterStats {
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub mu: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    /// Primal matrix iterate (symmetric PSD).
    pub z: DMatrix<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub duality_gap: f64,
    pub iterations: usize,
    /// Eigenvalues of `z`, descending.
    pub eigenvalues: Vec<f64>,
    pub status: SdpStatus,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Per-iteration diagnostics, in order.
    pub trace: Vec<IterStats>,
}

#[derive(Clone, Copy, Debug)]
pub struct SdpConfig {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iters: usize,
}

impl Default for SdpConfig {
    fn default() -> Self {
        Self {
            gap_tol: 1e-8,
            feas_tol: 1e-8,
            max_iters: 100,
        }
    }
}

/// Pluggable backend contract: cost and constraints in, PSD matrix plus
/// diagnostics out. An external conic solver can substitute [`InteriorPoint`].
pub trait SdpBackend {
    fn solve_sdp(&self, problem: &SdpProblem, config: &SdpConfig) -> SdpSolution;
}

/// The built-in dense interior-point engine.
#[derive(Clone, Copy, Debug, Default)]
pub struct InteriorPoint;

impl SdpBackend for InteriorPoint {
    fn solve_sdp(&self, problem: &SdpProblem, config: &SdpConfig) -> SdpSolution {
        solve(problem, config)
    }
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn frob_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Symmetric square root and inverse square root via eigendecomposition.
fn sqrt_and_inv_sqrt(m: &DMatrix<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return None;
    }
    let v = &eig.eigenvectors;
    let s = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.sqrt()));
    let si = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Some((v * s * v.transpose(), v * si * v.transpose()))
}

/// Largest step `α ∈ (0, 1]` keeping `x + α dx` positive definite, with a
/// 0.98 fraction-to-boundary backoff.
fn step_length(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    let chol = match Cholesky::new(x.clone()) {
        Some(c) => c,
        None => return 0.0,
    };
    let l = chol.l();
    let t = l.solve_lower_triangular(dx).unwrap();
    let y = l.solve_lower_triangular(&t.transpose()).unwrap();
    let lam_min = sym(&y).symmetric_eigenvalues().min();
    if lam_min >= -1e-14 {
        1.0
    } else {
        (0.98 * (-1.0 / lam_min)).min(1.0)
    }
}

/// Solves the Schur system by eigenvalue pseudo-inverse. Redundant
/// constraints make the system singular but consistent; two rounds of
/// iterative refinement keep the residual near machine precision.
fn pinv_solve(m: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let eig = SymmetricEigen::new(sym(m));
    let lam_max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let thresh = lam_max.max(1e-300) * 1e-12;
    let apply = |r: &DVector<f64>| {
        let vt_r = eig.eigenvectors.transpose() * r;
        let scaled = DVector::from_fn(vt_r.len(), |i, _| {
            if eig.eigenvalues[i] > thresh {
                vt_r[i] / eig.eigenvalues[i]
            } else {
                0.0
            }
        });
        &eig.eigenvectors * scaled
    };
    let mut x = apply(rhs);
    for _ in 0..2 {
        let residual = rhs - m * &x;
        x += apply(&residual);
    }
    x
}

/// Primal-dual interior-point solve. Deterministic: identical inputs produce
/// identical iterate sequences.
pub fn solve(problem: &SdpProblem, config: &SdpConfig) -> SdpSolution {
    let n = problem.dim();
    let m = problem.constraints.len();
    let c = &problem.cost;
    let a: Vec<&DMatrix<f64>> = problem.constraints.iter().map(|(q, _)| q).collect();
    let b = DVector::from_fn(m, |i, _| problem.constraints[i].1);

    let b_scale = 1.0 + b.amax();
    let c_scale = 1.0 + c.amax();

    // strictly interior start, trace-scaled
    let rho = 1.0 + b.amax();
    let sig0 = 1.0 + c.norm() / (n as f64).sqrt();
    let mut x = DMatrix::identity(n, n) * rho;
    let mut s = DMatrix::identity(n, n) * sig0;
    let mut y = DVector::zeros(m);

    let centering = 0.1;
    let mut trace = Vec::with_capacity(config.max_iters);
    let mut status = SdpStatus::MaxIterations;
    let mut iterations = 0;
    let mut pres_history: Vec<f64> = Vec::new();

    for iter in 0..config.max_iters {
        iterations = iter;
        let mu = frob_dot(&x, &s) / n as f64;
        let rp = DVector::from_fn(m, |i, _| b[i] - frob_dot(a[i], &x));
        let mut rd = c - &s;
        for i in 0..m {
            rd -= a[i] * y[i];
        }
        let pobj = frob_dot(c, &x);
        let dobj = b.dot(&y);
        let rel_gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        let pres = rp.amax() / b_scale;
        let dres = rd.amax() / c_scale;
        trace.push(IterStats {
            primal_objective: pobj,
            dual_objective: dobj,
            mu,
            primal_residual: pres,
            dual_residual: dres,
        });
        pres_history.push(pres);

        if rel_gap <= config.gap_tol && pres <= config.feas_tol && dres <= config.feas_tol {
            status = SdpStatus::Optimal;
            break;
        }
        // primal residual stalls at a macroscopic level while
        // complementarity keeps shrinking: the equality system is
        // inconsistent
        if iter >= 20 && pres > (100.0 * config.feas_tol).max(1e-4) {
            let old = pres_history[iter - 10];
            if pres > 0.9 * old {
                status = SdpStatus::Infeasible;
                break;
            }
        }

        // Nesterov-Todd scaling point W with W S W = X
        let (s_half, s_inv_half) = match sqrt_and_inv_sqrt(&s) {
            Some(v) => v,
            None => break,
        };
        let t_mat = &s_half * &x * &s_half;
        let (t_half, _) = match sqrt_and_inv_sqrt(&sym(&t_mat)) {
            Some(v) => v,
            None => break,
        };
        let w = &s_inv_half * t_half * &s_inv_half;

        let s_inv = &s_inv_half * &s_inv_half;
        let target = centering * mu;
        // ΔX + W ΔS W = σμ S⁻¹ - X, with ΔS = Rd - Σ Δy_i A_i
        let e0 = &s_inv * target - &x;
        let e = &e0 - sym(&(&w * &rd * &w));

        let wa: Vec<DMatrix<f64>> = a.iter().map(|ai| sym(&(&w * *ai * &w))).collect();
        let mut schur = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let v = frob_dot(a[i], &wa[j]);
                schur[(i, j)] = v;
                schur[(j, i)] = v;
            }
        }
        let rhs = DVector::from_fn(m, |i, _| rp[i] - frob_dot(a[i], &e));
        let dy = pinv_solve(&schur, &rhs);

        let mut ds = rd.clone();
        for i in 0..m {
            ds -= a[i] * dy[i];
        }
        let ds = sym(&ds);
        let dx = sym(&(&e0 - &(&w * &ds * &w)));

        let ap = step_length(&x, &dx);
        let ad = step_length(&s, &ds);
        if ap <= 1e-14 && ad <= 1e-14 {
            break;
        }
        x += &dx * ap;
        s += &ds * ad;
        y += &dy * ad;
    }

    let last = trace.last().copied().unwrap_or(IterStats {
        primal_objective: frob_dot(c, &x),
        dual_objective: b.dot(&y),
        mu: 0.0,
        primal_residual: f64::INFINITY,
        dual_residual: f64::INFINITY,
    });
    let mut eigenvalues: Vec<f64> = sym(&x).symmetric_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(|a, b| b.partial_cmp(a).unwrap());
    SdpSolution {
        z: sym(&x),
        primal_objective: last.primal_objective,
        dual_objective: last.dual_objective,
        duality_gap: last.primal_objective - last.dual_objective,
        iterations,
        eigenvalues,
        status,
        primal_residual: last.primal_residual,
        dual_residual: last.dual_residual,
        trace,
    }
}

/// Rank ratio λ₂/λ₁ of the solution matrix, in [0, 1]. A small ratio
/// certifies that the relaxation is tight.
pub fn tightness(solution: &SdpSolution) -> f64 {
    let l1 = solution.eigenvalues.first().copied().unwrap_or(0.0);
    if l1 <= 0.0 {
        return 1.0;
    }
    let l2 = solution.eigenvalues.get(1).copied().unwrap_or(0.0).max(0.0);
    (l2 / l1).clamp(0.0, 1.0)
}

/// `z = √λ₁ u₁` from the top eigenpair, with the sign flipped so the entry
/// at `sign_index` is nonnegative.
pub fn extract_rank1_signed(solution: &SdpSolution, sign_index: usize) -> Result<DVector<f64>> {
    let eig = SymmetricEigen::new(solution.z.clone());
    let mut best = 0;
    for i in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    let l1 = eig.eigenvalues[best];
    if l1 < 1e-12 {
        return Err(Error::ZeroSolution);
    }
    let mut z = eig.eigenvectors.column(best).into_owned() * l1.sqrt();
    if z[sign_index] < 0.0 {
        z = -z;
    }
    Ok(z)
}

/// Extraction for the 20-dimensional lifted layout: the homogenizing entry
/// (index 18, second to last) is made nonnegative.
pub fn extract_rank1(solution: &SdpSolution) -> Result<DVector<f64>> {
    let n = solution.z.nrows();
    extract_rank1_signed(solution, n - 2)
}

/// Debug dump of (C, Q_i, g_i) in a whitespace-separated text format with a
/// dimension header, for cross-checking against external solvers.
pub fn dump_problem(problem: &SdpProblem, out: &mut dyn Write) -> std::io::Result<()> {
    let n = problem.dim();
    writeln!(out, "{} {}", n, problem.constraints.len())?;
    let write_mat = |out: &mut dyn Write, m: &DMatrix<f64>| -> std::io::Result<()> {
        for r in 0..n {
            let row: Vec<String> = (0..n).map(|c| format!("{}", m[(r, c)])).collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        Ok(())
    };
    write_mat(out, &problem.cost)?;
    for (q, g) in &problem.constraints {
        writeln!(out, "{g}")?;
        write_mat(out, q)?;
    }
    Ok(())
}
