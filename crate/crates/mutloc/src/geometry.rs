//! Rotation and vector utilities plus the constant matrices used by the
//! constraint builder.
//!
//! Vectorization is column-major throughout: `vec(R)` stacks the columns of
//! `R`, so the Kronecker identity reads `R x = (xᵀ ⊗ I₃) vec(R)`.

use nalgebra::{Matrix3, SMatrix, SVector, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Vec9 = SVector<f64, 9>;

/// Tolerance on orthonormality and determinant when validating a rotation.
pub const ROTATION_TOL: f64 = 1e-9;

/// A validated 3x3 rotation matrix (orthonormal columns, determinant +1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rot3(Mat3);

impl Rot3 {
    /// Validates orthonormality and determinant within [`ROTATION_TOL`].
    /// Inputs outside the tolerance are rejected, not repaired.
    pub fn new(m: Mat3) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotARotation("non-finite entries".into()));
        }
        let defect = (m.transpose() * m - Mat3::identity()).amax();
        if defect > ROTATION_TOL {
            return Err(Error::NotARotation(format!(
                "orthonormality defect {defect:.3e}"
            )));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > ROTATION_TOL {
            return Err(Error::NotARotation(format!("determinant {det:.12}")));
        }
        Ok(Self(m))
    }

    pub fn identity() -> Self {
        Self(Mat3::identity())
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    /// Column-major stacking of the matrix entries.
    pub fn vectorize(&self) -> Vec9 {
        Vec9::from_column_slice(self.0.as_slice())
    }

    pub fn from_quaternion(q: &UnitQuaternion<f64>) -> Self {
        Self(q.to_rotation_matrix().into_inner())
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        let r = nalgebra::Rotation3::from_matrix_unchecked(self.0);
        UnitQuaternion::from_rotation_matrix(&r)
    }

    pub fn from_scaled_axis(w: Vec3) -> Self {
        Self::from_quaternion(&UnitQuaternion::from_scaled_axis(w))
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }
}

impl std::ops::Mul for Rot3 {
    type Output = Rot3;
    fn mul(self, rhs: Rot3) -> Rot3 {
        Rot3(self.0 * rhs.0)
    }
}

/// The 3x9 matrix `xᵀ ⊗ I₃`, satisfying `M vec(R) = R x` for every 3x3 `R`.
pub fn kron_row(x: &Vec3) -> SMatrix<f64, 3, 9> {
    let mut m = SMatrix::<f64, 3, 9>::zeros();
    for j in 0..3 {
        for a in 0..3 {
            m[(a, 3 * j + a)] = x[j];
        }
    }
    m
}

/// Skew-symmetric matrix of `v`, so that `skew(v) * w == v × w`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Orthogonal-Procrustes projection onto SO(3) via SVD, with sign correction
/// on the smallest singular direction so the determinant is +1.
pub fn project_to_rotation(m: &Mat3) -> Result<Rot3> {
    let svd = m.svd(true, true);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if sv[2] < 1e-12 {
        return Err(Error::DegenerateMatrix(sv[2]));
    }
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let det = (u * vt).determinant();
    // flip the column of U paired with the smallest singular value
    let mut smallest = 0;
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s < svd.singular_values[smallest] {
            smallest = i;
        }
    }
    let mut u = u;
    if det < 0.0 {
        for r in 0..3 {
            u[(r, smallest)] = -u[(r, smallest)];
        }
    }
    Rot3::new(u * vt)
}

/// Geodesic distance between two rotations in degrees, in [0, 180].
pub fn geodesic_deg(ra: &Rot3, rb: &Rot3) -> f64 {
    let c = ((ra.matrix().transpose() * rb.matrix()).trace() - 1.0) / 2.0;
    c.clamp(-1.0, 1.0).acos().to_degrees()
}

/// Constant integer matrices referenced by the constraint builder.
pub mod tables {
    use super::{Mat3, Vec3};

    /// 3x3 matrix of all ones.
    pub fn ones_matrix() -> Mat3 {
        Mat3::repeat(1.0)
    }

    /// 3-vector of all ones.
    pub fn ones_vector() -> Vec3 {
        Vec3::repeat(1.0)
    }

    /// Coordinate matrix E_ij (1 at (i, j), zero elsewhere).
    pub fn coord_matrix(i: usize, j: usize) -> Mat3 {
        let mut m = Mat3::zeros();
        m[(i, j)] = 1.0;
        m
    }

    /// Coordinate vector e_k.
    pub fn coord_vector(k: usize) -> Vec3 {
        let mut v = Vec3::zeros();
        v[k] = 1.0;
        v
    }
}
