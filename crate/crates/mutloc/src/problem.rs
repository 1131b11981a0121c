//! Assembles the least-squares data matrix from time-aligned measurements,
//! marginalizes distances and relative translation by Schur complement,
//! lifts the cost, and generates the quadratic constraint set.
//!
//! Variable layout of the full problem, x in R^(22+N):
//! `[r_s(9), r_p(9), y, t(3), D_1..D_N]` with `r_p = vec(R)` and
//! `r_s = vec(Δτ R)`. The lifted variable is `z = [r_s, r_p, y, Δτ]` in
//! R^20. The baseline (no-offset) problem drops `r_s` and `Δτ`:
//! x = `[r_p(9), y, t(3), D]`, lifted `z = [r_p, y]` in R^10.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::geometry::{kron_row, skew, tables, Mat3, Vec3};
use crate::sim::{BearingObservation, Trajectory};

/// Minimum measurement count: 3N >= 22+N gives N >= 11, plus one of margin.
pub const MIN_MEASUREMENTS: usize = 12;

/// Condition-number ceiling on the marginalized block before the geometry
/// is declared degenerate. No regularization is applied; assembly fails.
pub const MAX_MARGINAL_CONDITION: f64 = 1e12;

/// Per-bearing data aligned to a common observer timestamp:
/// `g = R_A(τ) b` (bearing rotated into A's odometry frame), A's translation,
/// B's translation and velocity at the same clock value, and a symmetric
/// positive-definite weight.
#[derive(Clone, Debug)]
pub struct MeasurementBundle {
    pub g: Vec<Vec3>,
    pub t1: Vec<Vec3>,
    pub t2: Vec<Vec3>,
    pub v2: Vec<Vec3>,
    pub weights: Vec<Mat3>,
}

impl MeasurementBundle {
    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }
}

/// Time-aligns each bearing with A's pose and B's pose/velocity at the same
/// local clock value. Default weights are identity.
pub fn bundle(
    bearings: &[BearingObservation],
    traj_a: &Trajectory,
    traj_b: &Trajectory,
    weights: Option<Vec<Mat3>>,
) -> Result<MeasurementBundle> {
    let n = bearings.len();
    if n < MIN_MEASUREMENTS {
        return Err(Error::TooFewMeasurements {
            got: n,
            min: MIN_MEASUREMENTS,
        });
    }
    let weights = match weights {
        Some(w) => {
            if w.len() != n {
                return Err(Error::InvalidConfig(format!(
                    "{} weights for {} bearings",
                    w.len(),
                    n
                )));
            }
            for m in &w {
                if (m - m.transpose()).amax() > 1e-12 {
                    return Err(Error::InvalidConfig("weight matrix not symmetric".into()));
                }
            }
            w
        }
        None => vec![Mat3::identity(); n],
    };
    let mut g = Vec::with_capacity(n);
    let mut t1 = Vec::with_capacity(n);
    let mut t2 = Vec::with_capacity(n);
    let mut v2 = Vec::with_capacity(n);
    for obs in bearings {
        let pa = traj_a.interpolate(obs.t)?;
        let pb = traj_b.interpolate(obs.t)?;
        g.push(pa.rotation.apply(&obs.direction));
        t1.push(pa.translation);
        t2.push(pb.translation);
        v2.push(pb.velocity);
    }
    Ok(MeasurementBundle {
        g,
        t1,
        t2,
        v2,
        weights,
    })
}

/// The assembled quadratic cost with its Schur-marginalized reduction.
#[derive(Clone, Debug)]
pub struct StackedProblem {
    /// Full (head+3+N)-dimensional data matrix `Q = Σ A_kᵀ W_k A_k`.
    pub q: DMatrix<f64>,
    /// Marginalized cost over the head block: `Q̄ = A - B C⁻¹ Bᵀ`.
    pub q_bar: DMatrix<f64>,
    /// Lifted cost. For the full problem this is `Q̄` padded with a zero
    /// 20th row/column; the baseline head is already the lifted variable.
    pub q0: DMatrix<f64>,
    /// Head dimension: 19 for the full problem, 10 for the baseline.
    pub head_dim: usize,
    pub n: usize,
    /// Condition number of the marginalized block.
    pub c_condition: f64,
    b_block: DMatrix<f64>,
    c_chol: Cholesky<f64, Dyn>,
}

/// Row block of the residual for measurement `k`, 3 x (head+3+N).
/// With velocity columns the layout matches the full x; without them the
/// baseline x. Exposed for the symbolic residual oracle in tests.
pub fn measurement_matrix(bundle: &MeasurementBundle, k: usize, with_velocity: bool) -> DMatrix<f64> {
    let n = bundle.len();
    let head = if with_velocity { 19 } else { 10 };
    let dim = head + 3 + n;
    let mut a = DMatrix::zeros(3, dim);
    let mut col = 0;
    if with_velocity {
        let kv = kron_row(&bundle.v2[k]);
        for r in 0..3 {
            for c in 0..9 {
                a[(r, c)] = -kv[(r, c)];
            }
        }
        col = 9;
    }
    let kt = kron_row(&bundle.t2[k]);
    for r in 0..3 {
        for c in 0..9 {
            a[(r, col + c)] = -kt[(r, c)];
        }
    }
    for r in 0..3 {
        a[(r, head - 1)] = bundle.t1[k][r];
        a[(r, head + r)] = -1.0;
        a[(r, head + 3 + k)] = bundle.g[k][r];
    }
    a
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

fn assemble_impl(bundle: &MeasurementBundle, with_velocity: bool) -> Result<StackedProblem> {
    let n = bundle.len();
    if n < MIN_MEASUREMENTS {
        return Err(Error::TooFewMeasurements {
            got: n,
            min: MIN_MEASUREMENTS,
        });
    }
    let head = if with_velocity { 19 } else { 10 };
    let dim = head + 3 + n;
    let mut q = DMatrix::zeros(dim, dim);
    for k in 0..n {
        let a_k = measurement_matrix(bundle, k, with_velocity);
        q += a_k.transpose() * bundle.weights[k] * a_k;
    }
    symmetrize(&mut q);

    let a = q.view((0, 0), (head, head)).into_owned();
    let b = q.view((0, head), (head, 3 + n)).into_owned();
    let c = q.view((head, head), (3 + n, 3 + n)).into_owned();

    let eig = c.clone().symmetric_eigenvalues();
    let lam_max = eig.max();
    let lam_min = eig.min();
    let cond = if lam_min > 0.0 {
        lam_max / lam_min
    } else {
        f64::INFINITY
    };
    if !(cond <= MAX_MARGINAL_CONDITION) {
        return Err(Error::SingularMarginalization(cond));
    }
    let c_chol =
        Cholesky::new(c).ok_or(Error::SingularMarginalization(cond))?;

    let x = c_chol.solve(&b.transpose());
    let mut q_bar = a - &b * x;
    symmetrize(&mut q_bar);

    let q0 = if with_velocity {
        let mut q0 = DMatrix::zeros(head + 1, head + 1);
        q0.view_mut((0, 0), (head, head)).copy_from(&q_bar);
        q0
    } else {
        q_bar.clone()
    };

    Ok(StackedProblem {
        q,
        q_bar,
        q0,
        head_dim: head,
        n,
        c_condition: cond,
        b_block: b,
        c_chol,
    })
}

/// Assembles the full problem (head `[r_s, r_p, y]`, lifted dimension 20).
pub fn assemble(bundle: &MeasurementBundle) -> Result<StackedProblem> {
    assemble_impl(bundle, true)
}

/// Assembles the no-offset baseline (head `[r_p, y]`, lifted dimension 10).
pub fn assemble_baseline(bundle: &MeasurementBundle) -> Result<StackedProblem> {
    assemble_impl(bundle, false)
}

impl StackedProblem {
    /// Leading head x head block of Q.
    pub fn a_block(&self) -> DMatrix<f64> {
        self.q.view((0, 0), (self.head_dim, self.head_dim)).into_owned()
    }

    /// Off-diagonal head x (3+N) block of Q.
    pub fn b_block(&self) -> &DMatrix<f64> {
        &self.b_block
    }

    /// Back-substitutes the marginalized variables at a fixed head vector:
    /// `w* = -C⁻¹ Bᵀ x̃`, split into relative translation and distances.
    pub fn recover_marginalized(&self, x_head: &DVector<f64>) -> Result<(Vec3, Vec<f64>)> {
        if x_head.len() != self.head_dim {
            return Err(Error::InvalidConfig(format!(
                "head vector length {} != {}",
                x_head.len(),
                self.head_dim
            )));
        }
        let w = -self.c_chol.solve(&(self.b_block.transpose() * x_head));
        let t = Vec3::new(w[0], w[1], w[2]);
        let d = w.as_slice()[3..].to_vec();
        Ok((t, d))
    }
}

/// One symmetric quadratic constraint `zᵀ Q_i z = g_i`.
#[derive(Clone, Debug)]
pub struct QuadraticConstraint {
    pub qi: DMatrix<f64>,
    pub gi: f64,
    pub label: String,
}

fn sym_add(m: &mut DMatrix<f64>, r: usize, c: usize, v: f64) {
    m[(r, c)] += v;
    m[(c, r)] += v;
}

/// The 21 generalized scaled-rotation constraints for a matrix block whose
/// vectorization sits at `r_off` and whose scale variable sits at
/// `scalar_idx`: 6 column-orthonormality, 6 row-orthonormality, and 9
/// cross-column constraints.
fn scaled_rotation_family(
    dim: usize,
    r_off: usize,
    scalar_idx: usize,
    tag: &str,
) -> Vec<QuadraticConstraint> {
    let mut out = Vec::with_capacity(21);
    // col_i . col_j = n^2 δ_ij
    for i in 0..3 {
        for j in i..3 {
            let mut m = DMatrix::zeros(dim, dim);
            for a in 0..3 {
                sym_add(&mut m, r_off + 3 * i + a, r_off + 3 * j + a, 0.5);
            }
            if i == j {
                m[(scalar_idx, scalar_idx)] -= 1.0;
            }
            out.push(QuadraticConstraint {
                qi: m,
                gi: 0.0,
                label: format!("{tag}:col:{i}{j}"),
            });
        }
    }
    // row_i . row_j = n^2 δ_ij
    for i in 0..3 {
        for j in i..3 {
            let mut m = DMatrix::zeros(dim, dim);
            for a in 0..3 {
                sym_add(&mut m, r_off + 3 * a + i, r_off + 3 * a + j, 0.5);
            }
            if i == j {
                m[(scalar_idx, scalar_idx)] -= 1.0;
            }
            out.push(QuadraticConstraint {
                qi: m,
                gi: 0.0,
                label: format!("{tag}:row:{i}{j}"),
            });
        }
    }
    // col_i x col_j = n col_k for cyclic (i,j,k), one scalar row per axis m:
    // (col_i x col_j)_m = -col_iᵀ [e_m]_x col_j
    for &(i, j, k) in &[(0usize, 1usize, 2usize), (1, 2, 0), (2, 0, 1)] {
        for m_idx in 0..3 {
            let sk = skew(&tables::coord_vector(m_idx));
            let mut m = DMatrix::zeros(dim, dim);
            for a in 0..3 {
                for b in 0..3 {
                    let v = -sk[(a, b)];
                    if v != 0.0 {
                        sym_add(&mut m, r_off + 3 * i + a, r_off + 3 * j + b, 0.5 * v);
                    }
                }
            }
            sym_add(&mut m, r_off + 3 * k + m_idx, scalar_idx, -0.5);
            out.push(QuadraticConstraint {
                qi: m,
                gi: 0.0,
                label: format!("{tag}:cross:{i}{j}{k}:{m_idx}"),
            });
        }
    }
    out
}

/// Selection of constraint families for the 20-dimensional lifted problem.
#[derive(Clone, Copy, Debug)]
pub struct ConstraintOptions {
    /// Emit the 21 scaled-rotation constraints on the `Δτ R` block.
    pub include_offset_family: bool,
}

impl Default for ConstraintOptions {
    fn default() -> Self {
        Self {
            include_offset_family: true,
        }
    }
}

/// Full constraint set of the lifted problem, z = [r_s, r_p, y, Δτ]:
/// 21 scaled-rotation constraints with n = y on r_p, 21 with n = Δτ on r_s,
/// homogenization y² = 1, and 9 linking constraints Δτ r_p - y r_s = 0.
/// 52 constraints in total; every right-hand side is 0 except y² = 1.
pub fn build_constraints() -> Vec<QuadraticConstraint> {
    build_constraints_with(ConstraintOptions::default())
}

pub fn build_constraints_with(opts: ConstraintOptions) -> Vec<QuadraticConstraint> {
    const DIM: usize = 20;
    const RS: usize = 0;
    const RP: usize = 9;
    const Y: usize = 18;
    const DT: usize = 19;
    let mut out = scaled_rotation_family(DIM, RP, Y, "y");
    if opts.include_offset_family {
        out.extend(scaled_rotation_family(DIM, RS, DT, "dt"));
    }
    let mut hom = DMatrix::zeros(DIM, DIM);
    hom[(Y, Y)] = 1.0;
    out.push(QuadraticConstraint {
        qi: hom,
        gi: 1.0,
        label: "homogenization".into(),
    });
    for idx in 0..9 {
        let mut m = DMatrix::zeros(DIM, DIM);
        sym_add(&mut m, RP + idx, DT, 0.5);
        sym_add(&mut m, RS + idx, Y, -0.5);
        out.push(QuadraticConstraint {
            qi: m,
            gi: 0.0,
            label: format!("link:{idx}"),
        });
    }
    out
}

/// Constraint set of the baseline lifted problem, z = [r_p, y] in R^10:
/// the 21 n = y rotation constraints plus homogenization (22 total).
pub fn baseline_constraints() -> Vec<QuadraticConstraint> {
    const DIM: usize = 10;
    let mut out = scaled_rotation_family(DIM, 0, 9, "y");
    let mut hom = DMatrix::zeros(DIM, DIM);
    hom[(9, 9)] = 1.0;
    out.push(QuadraticConstraint {
        qi: hom,
        gi: 1.0,
        label: "homogenization".into(),
    });
    out
}

/// Residual `zᵀ Q_i z - g_i` of one constraint.
pub fn constraint_residual(c: &QuadraticConstraint, z: &DVector<f64>) -> f64 {
    (z.transpose() * &c.qi * z)[(0, 0)] - c.gi
}
