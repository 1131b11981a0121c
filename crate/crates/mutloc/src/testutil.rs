//! Shared helpers for unit and integration tests.

use nalgebra::DVector;
use rand::Rng;

use crate::geometry::{Rot3, Vec3};

pub fn random_rotation(rng: &mut impl Rng) -> Rot3 {
    let axis = Vec3::new(
        rng.gen::<f64>() - 0.5,
        rng.gen::<f64>() - 0.5,
        rng.gen::<f64>() - 0.5,
    );
    let axis = if axis.norm() < 1e-9 {
        Vec3::x()
    } else {
        axis.normalize()
    };
    let angle = rng.gen_range(0.0..std::f64::consts::PI);
    Rot3::from_scaled_axis(axis * angle)
}

/// A feasible lifted vector `z = s [vec(Δτ R), vec(R), 1, Δτ]` with s = y.
pub fn feasible_z(r: &Rot3, dt: f64, y: f64) -> DVector<f64> {
    let mut z = DVector::zeros(20);
    let rp = r.vectorize();
    for i in 0..9 {
        z[i] = y * dt * rp[i];
        z[9 + i] = y * rp[i];
    }
    z[18] = y;
    z[19] = y * dt;
    z
}
