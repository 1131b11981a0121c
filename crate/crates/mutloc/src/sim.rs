//! Smooth random SE(3) trajectory generation, odometry sampling,
//! bearing synthesis, and the time-shift/interpolation operations used by
//! the iterative estimator.
//!
//! The spline is a cumulative third-order B-spline with uniform knots:
//! translation is blended through the cumulative basis directly, and
//! orientation through the same basis applied to incremental rotation
//! vectors between control poses. Velocity is the analytic derivative of
//! the translation component.

use nalgebra::UnitQuaternion;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::{Rot3, Vec3};

/// One odometry sample.
#[derive(Clone, Copy, Debug)]
pub struct TimedPose {
    /// Timestamp in seconds, on the owning robot's local clock.
    pub t: f64,
    pub rotation: Rot3,
    pub translation: Vec3,
    pub velocity: Vec3,
}

/// A unit direction to the observed robot at an observer timestamp.
#[derive(Clone, Copy, Debug)]
pub struct BearingObservation {
    pub t: f64,
    pub direction: Vec3,
}

impl BearingObservation {
    pub fn new(t: f64, direction: Vec3) -> Result<Self> {
        if !t.is_finite() || direction.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite bearing".into()));
        }
        if (direction.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "bearing norm {} not unit",
                direction.norm()
            )));
        }
        Ok(Self { t, direction })
    }
}

/// An ordered odometry sequence with strictly increasing timestamps.
#[derive(Clone, Debug)]
pub struct Trajectory {
    samples: Vec<TimedPose>,
}

impl Trajectory {
    pub fn new(samples: Vec<TimedPose>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::TooShort(samples.len()));
        }
        for w in samples.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(Error::InvalidConfig(format!(
                    "timestamps not strictly increasing at t={}",
                    w[1].t
                )));
            }
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[TimedPose] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn start_time(&self) -> f64 {
        self.samples[0].t
    }

    pub fn end_time(&self) -> f64 {
        self.samples[self.samples.len() - 1].t
    }

    /// Time-aligns the trajectory to `t`: linear interpolation of translation
    /// and velocity, spherical-linear interpolation of rotation. A timestamp
    /// matching a sample exactly returns that sample.
    pub fn interpolate(&self, t: f64) -> Result<TimedPose> {
        let (lo, hi) = (self.start_time(), self.end_time());
        if t < lo || t > hi {
            return Err(Error::OutOfRange { t, lo, hi });
        }
        let idx = self.samples.partition_point(|p| p.t < t);
        if idx < self.samples.len() && self.samples[idx].t == t {
            return Ok(self.samples[idx]);
        }
        let a = &self.samples[idx - 1];
        let b = &self.samples[idx];
        let alpha = (t - a.t) / (b.t - a.t);
        let qa = a.rotation.quaternion();
        let qb = b.rotation.quaternion();
        let q = qa.try_slerp(&qb, alpha, 1e-12).unwrap_or(qa);
        // slerp between nearby quaternions drifts off unit norm by ~1e-9
        let q = UnitQuaternion::new_normalize(q.into_inner());
        Ok(TimedPose {
            t,
            rotation: Rot3::from_quaternion(&q),
            translation: a.translation.lerp(&b.translation, alpha),
            velocity: a.velocity.lerp(&b.velocity, alpha),
        })
    }

    /// Replaces every timestamp by `timestamp - delta`; poses unchanged.
    pub fn shifted(&self, delta: f64) -> Trajectory {
        let samples = self
            .samples
            .iter()
            .map(|p| TimedPose { t: p.t - delta, ..*p })
            .collect();
        Trajectory { samples }
    }

    /// Overwrites velocities with finite differences of translation:
    /// central in the interior, one-sided at the ends.
    pub fn with_finite_difference_velocities(&self) -> Result<Trajectory> {
        let n = self.samples.len();
        if n < 3 {
            return Err(Error::TooShort(n));
        }
        let s = &self.samples;
        let mut out = self.samples.clone();
        out[0].velocity = (s[1].translation - s[0].translation) / (s[1].t - s[0].t);
        out[n - 1].velocity =
            (s[n - 1].translation - s[n - 2].translation) / (s[n - 1].t - s[n - 2].t);
        for i in 1..n - 1 {
            out[i].velocity =
                (s[i + 1].translation - s[i - 1].translation) / (s[i + 1].t - s[i - 1].t);
        }
        Ok(Trajectory { samples: out })
    }

    /// Rigidly re-expresses every pose in a new frame: translations map to
    /// `R p + t`, rotations to `R R_i`, velocities to `R v`.
    pub fn transformed(&self, r: &Rot3, t: &Vec3) -> Trajectory {
        let samples = self
            .samples
            .iter()
            .map(|p| TimedPose {
                t: p.t,
                rotation: *r * p.rotation,
                translation: r.apply(&p.translation) + t,
                velocity: r.apply(&p.velocity),
            })
            .collect();
        Trajectory { samples }
    }
}

/// Control poses for a cumulative third-order B-spline with uniform knots.
#[derive(Clone, Debug)]
pub struct ControlSpline {
    translations: Vec<Vec3>,
    rotations: Vec<UnitQuaternion<f64>>,
    knot: f64,
}

/// Cumulative cubic basis at local coordinate `u` in [0, 1].
fn cumulative_basis(u: f64) -> (f64, f64, f64) {
    let u2 = u * u;
    let u3 = u2 * u;
    (
        (5.0 + 3.0 * u - 3.0 * u2 + u3) / 6.0,
        (1.0 + 3.0 * u + 3.0 * u2 - 2.0 * u3) / 6.0,
        u3 / 6.0,
    )
}

fn cumulative_basis_deriv(u: f64) -> (f64, f64, f64) {
    let u2 = u * u;
    (
        (3.0 - 6.0 * u + 3.0 * u2) / 6.0,
        (3.0 + 6.0 * u - 6.0 * u2) / 6.0,
        u2 / 2.0,
    )
}

impl ControlSpline {
    pub fn new(control: Vec<(Rot3, Vec3)>, knot: f64) -> Result<Self> {
        if control.len() < 4 {
            return Err(Error::InvalidConfig(format!(
                "need at least 4 control poses, got {}",
                control.len()
            )));
        }
        if !(knot > 0.0) {
            return Err(Error::InvalidConfig("knot interval must be positive".into()));
        }
        Ok(Self {
            rotations: control.iter().map(|(r, _)| r.quaternion()).collect(),
            translations: control.into_iter().map(|(_, t)| t).collect(),
            knot,
        })
    }

    pub fn num_control(&self) -> usize {
        self.translations.len()
    }

    pub fn knot(&self) -> f64 {
        self.knot
    }

    pub fn control_translations(&self) -> &[Vec3] {
        &self.translations
    }

    /// Valid sampling interval `[knot, (K-2)*knot]` for K control poses.
    pub fn support(&self) -> (f64, f64) {
        let k = self.num_control() as f64;
        (self.knot, (k - 2.0) * self.knot)
    }

    /// Continuous pose and analytic translational velocity at `t`.
    pub fn sample(&self, t: f64) -> Result<TimedPose> {
        let (lo, hi) = self.support();
        if t < lo - 1e-9 || t > hi + 1e-9 {
            return Err(Error::OutOfSupport { t, lo, hi });
        }
        let k = self.num_control();
        let s = t / self.knot;
        let mut i = s.floor() as i64;
        let max_seg = (k - 3) as i64;
        i = i.clamp(1, max_seg);
        let i = i as usize;
        let u = (s - i as f64).clamp(0.0, 1.0);

        let (b1, b2, b3) = cumulative_basis(u);
        let (db1, db2, db3) = cumulative_basis_deriv(u);
        let p = &self.translations;
        let d1 = p[i] - p[i - 1];
        let d2 = p[i + 1] - p[i];
        let d3 = p[i + 2] - p[i + 1];
        let translation = p[i - 1] + b1 * d1 + b2 * d2 + b3 * d3;
        let velocity = (db1 * d1 + db2 * d2 + db3 * d3) / self.knot;

        let q = &self.rotations;
        let w1 = (q[i - 1].inverse() * q[i]).scaled_axis();
        let w2 = (q[i].inverse() * q[i + 1]).scaled_axis();
        let w3 = (q[i + 1].inverse() * q[i + 2]).scaled_axis();
        let rot = q[i - 1]
            * UnitQuaternion::from_scaled_axis(b1 * w1)
            * UnitQuaternion::from_scaled_axis(b2 * w2)
            * UnitQuaternion::from_scaled_axis(b3 * w3);

        Ok(TimedPose {
            t,
            rotation: Rot3::from_quaternion(&rot),
            translation,
            velocity,
        })
    }

    /// `n` uniformly spaced poses starting at `t0`.
    pub fn sample_trajectory(&self, t0: f64, dt: f64, n: usize) -> Result<Trajectory> {
        if n < 2 || !(dt > 0.0) {
            return Err(Error::InvalidConfig(format!("n={n}, dt={dt}")));
        }
        let mut samples = Vec::with_capacity(n);
        for k in 0..n {
            samples.push(self.sample(t0 + k as f64 * dt)?);
        }
        Trajectory::new(samples)
    }
}

fn random_unit(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        let n = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
}

/// Random-walk control poses: per-step displacement bounded by `max_step`,
/// per-step rotation bounded by 0.4 rad. Deterministic given `seed`.
pub fn generate_spline(num_control: usize, max_step: f64, knot: f64, seed: u64) -> Result<ControlSpline> {
    if num_control < 4 {
        return Err(Error::InvalidConfig(format!(
            "need at least 4 control poses, got {num_control}"
        )));
    }
    if !(max_step > 0.0) || !(knot > 0.0) {
        return Err(Error::InvalidConfig("max_step and knot must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut translations = Vec::with_capacity(num_control);
    let mut rotations = Vec::with_capacity(num_control);
    let mut p = Vec3::new(
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    );
    let mut q = UnitQuaternion::from_scaled_axis(
        random_unit(&mut rng) * rng.gen_range(0.0..std::f64::consts::PI),
    );
    for _ in 0..num_control {
        translations.push(p);
        rotations.push(q);
        let step = random_unit(&mut rng) * (rng.gen_range(0.5..1.0) * max_step);
        p += step;
        let dq = UnitQuaternion::from_scaled_axis(random_unit(&mut rng) * rng.gen_range(0.0..0.4));
        q *= dq;
    }
    Ok(ControlSpline {
        translations,
        rotations,
        knot,
    })
}

/// Observer timestamp window for bearing synthesis.
#[derive(Clone, Copy, Debug)]
pub struct BearingWindow {
    pub start: f64,
    pub end: f64,
}

impl BearingWindow {
    /// Overlap of both spline supports shrunk by `margin` on each side.
    /// `margin` should cover the largest time offset to be exercised.
    pub fn from_supports(a: &ControlSpline, b: &ControlSpline, margin: f64) -> Result<Self> {
        let (alo, ahi) = a.support();
        let (blo, bhi) = b.support();
        let start = alo.max(blo) + margin;
        let end = ahi.min(bhi) - margin;
        if !(end > start) {
            return Err(Error::InvalidConfig(format!(
                "empty bearing window [{start}, {end}] for margin {margin}"
            )));
        }
        Ok(Self { start, end })
    }
}

/// Synthesizes `n` bearings at uniform observer timestamps over `window`.
/// The noiseless bearing at τ is the unit direction from A's position at τ
/// to B's position at τ + `true_offset`, expressed in A's body frame.
/// Per-component Gaussian noise of std `sigma` is added, then the vector is
/// renormalized. Deterministic given `seed`.
pub fn synthesize_bearings(
    spline_a: &ControlSpline,
    spline_b: &ControlSpline,
    n: usize,
    true_offset: f64,
    sigma: f64,
    window: BearingWindow,
    seed: u64,
) -> Result<Vec<BearingObservation>> {
    if n == 0 || sigma < 0.0 {
        return Err(Error::InvalidConfig(format!("n={n}, sigma={sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let tau = if n == 1 {
            0.5 * (window.start + window.end)
        } else {
            window.start + k as f64 * (window.end - window.start) / (n - 1) as f64
        };
        let pa = spline_a.sample(tau)?;
        let pb = spline_b.sample(tau + true_offset)?;
        let d = pb.translation - pa.translation;
        let dist = d.norm();
        if dist < 1e-6 {
            return Err(Error::CoincidentRobots { t: tau, dist });
        }
        let mut b = pa.rotation.transpose().apply(&(d / dist));
        if sigma > 0.0 {
            b += Vec3::new(
                sigma * rng.sample::<f64, _>(StandardNormal),
                sigma * rng.sample::<f64, _>(StandardNormal),
                sigma * rng.sample::<f64, _>(StandardNormal),
            );
        }
        out.push(BearingObservation::new(tau, b.normalize())?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::geodesic_deg;

    fn spline(seed: u64) -> ControlSpline {
        generate_spline(40, 0.5, 1.0, seed).unwrap()
    }

    #[test]
    fn generate_defaults_and_step_bound() {
        let s = spline(1);
        assert_eq!(s.num_control(), 40);
        for w in s.control_translations().windows(2) {
            assert!((w[1] - w[0]).norm() <= 0.5 + 1e-12);
        }
    }

    #[test]
    fn generate_rejects_small_and_is_deterministic() {
        assert!(matches!(
            generate_spline(3, 0.5, 1.0, 0),
            Err(Error::InvalidConfig(_))
        ));
        let a = spline(42);
        let b = spline(42);
        assert_eq!(a.control_translations(), b.control_translations());
        let pa = a.sample(5.3).unwrap();
        let pb = b.sample(5.3).unwrap();
        assert_eq!(pa.translation, pb.translation);
        assert_eq!(pa.rotation.matrix(), pb.rotation.matrix());
    }

    #[test]
    fn constant_spline_is_constant() {
        let r = Rot3::from_scaled_axis(Vec3::new(0.1, -0.3, 0.2));
        let p = Vec3::new(1.0, 2.0, 3.0);
        let s = ControlSpline::new(vec![(r, p); 6], 1.0).unwrap();
        let sample = s.sample(2.2).unwrap();
        assert!((sample.translation - p).norm() < 1e-12);
        assert!(sample.velocity.norm() < 1e-12);
        // acos-based distance bottoms out near 1e-6 deg at identity
        assert!(geodesic_deg(&sample.rotation, &r) < 1e-5);
    }

    #[test]
    fn sample_out_of_support() {
        let s = spline(2);
        let (lo, hi) = s.support();
        assert!(matches!(s.sample(lo - 0.5), Err(Error::OutOfSupport { .. })));
        assert!(matches!(s.sample(hi + 0.5), Err(Error::OutOfSupport { .. })));
    }

    #[test]
    fn velocity_matches_finite_difference() {
        let s = spline(3);
        let (lo, hi) = s.support();
        let h = 1e-4;
        for k in 0..100 {
            let t = lo + h + (hi - lo - 2.0 * h) * (k as f64 / 99.0);
            let v = s.sample(t).unwrap().velocity;
            let fd = (s.sample(t + h).unwrap().translation - s.sample(t - h).unwrap().translation)
                / (2.0 * h);
            assert!((v - fd).norm() < 1e-5, "t={t}: {}", (v - fd).norm());
        }
    }

    #[test]
    fn sample_trajectory_spacing() {
        let s = spline(4);
        let traj = s.sample_trajectory(1.0, 0.005, 4000).unwrap();
        assert_eq!(traj.len(), 4000);
        for w in traj.samples().windows(2) {
            assert!((w[1].t - w[0].t - 0.005).abs() < 1e-12);
        }
        let two = s.sample_trajectory(2.0, 0.25, 2).unwrap();
        assert_eq!(two.samples()[0].t, 2.0);
        assert_eq!(two.samples()[1].t, 2.25);
    }

    #[test]
    fn noiseless_bearings_point_at_target() {
        let a = spline(5);
        let b = spline(6);
        let w = BearingWindow::from_supports(&a, &b, 1.0).unwrap();
        let bearings = synthesize_bearings(&a, &b, 50, 0.0, 0.0, w, 9).unwrap();
        for obs in &bearings {
            let pa = a.sample(obs.t).unwrap();
            let pb = b.sample(obs.t).unwrap();
            let world = pa.rotation.apply(&obs.direction);
            let d = (pb.translation - pa.translation).normalize();
            assert!((world - d).norm() < 1e-12);
        }
    }

    #[test]
    fn offset_bearings_match_spline_oracle() {
        let a = spline(7);
        let b = spline(8);
        let w = BearingWindow::from_supports(&a, &b, 1.0).unwrap();
        let bearings = synthesize_bearings(&a, &b, 40, 0.5, 0.0, w, 10).unwrap();
        for obs in &bearings {
            let pa = a.sample(obs.t).unwrap();
            let pb = b.sample(obs.t + 0.5).unwrap();
            let world = pa.rotation.apply(&obs.direction);
            let d = (pb.translation - pa.translation).normalize();
            assert!((world - d).norm() < 1e-12);
        }
    }

    #[test]
    fn noisy_bearings_stay_unit() {
        let a = spline(12);
        let b = spline(13);
        let w = BearingWindow::from_supports(&a, &b, 0.5).unwrap();
        for sigma in [0.0, 0.01, 0.05, 0.1] {
            let bearings = synthesize_bearings(&a, &b, 200, 0.0, sigma, w, 11).unwrap();
            assert_eq!(bearings.len(), 200);
            for obs in &bearings {
                assert!((obs.direction.norm() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn coincident_robots_detected() {
        let s = spline(14);
        let w = BearingWindow::from_supports(&s, &s, 0.5).unwrap();
        assert!(matches!(
            synthesize_bearings(&s, &s, 10, 0.0, 0.0, w, 1),
            Err(Error::CoincidentRobots { .. })
        ));
    }

    #[test]
    fn shift_and_unshift_roundtrip() {
        let traj = spline(15).sample_trajectory(2.0, 0.01, 100).unwrap();
        let same = traj.shifted(0.0);
        assert_eq!(traj.samples()[7].t, same.samples()[7].t);
        let back = traj.shifted(0.37).shifted(-0.37);
        for (a, b) in traj.samples().iter().zip(back.samples()) {
            assert!((a.t - b.t).abs() < 1e-15);
            assert_eq!(a.translation, b.translation);
        }
    }

    #[test]
    fn interpolate_exact_and_midpoint() {
        let r = Rot3::identity();
        let mk = |t: f64, x: f64| TimedPose {
            t,
            rotation: r,
            translation: Vec3::new(x, 0.0, 0.0),
            velocity: Vec3::zeros(),
        };
        let traj = Trajectory::new(vec![mk(0.0, 0.0), mk(1.0, 2.0)]).unwrap();
        let exact = traj.interpolate(1.0).unwrap();
        assert_eq!(exact.translation, Vec3::new(2.0, 0.0, 0.0));
        let mid = traj.interpolate(0.5).unwrap();
        assert_eq!(mid.translation, Vec3::new(1.0, 0.0, 0.0));
        assert!(matches!(traj.interpolate(1.5), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn interpolation_close_to_spline() {
        let s = spline(16);
        let traj = s.sample_trajectory(1.0, 0.005, 2000).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let t = rng.gen_range(traj.start_time()..traj.end_time());
            let interp = traj.interpolate(t).unwrap();
            let truth = s.sample(t).unwrap();
            assert!((interp.translation - truth.translation).norm() < 1e-4);
        }
    }

    #[test]
    fn finite_difference_velocities_linear_and_spline() {
        let r = Rot3::identity();
        let mk = |t: f64| TimedPose {
            t,
            rotation: r,
            translation: Vec3::new(2.0 * t, -t, 0.5 * t),
            velocity: Vec3::zeros(),
        };
        let traj = Trajectory::new((0..10).map(|i| mk(i as f64 * 0.1)).collect()).unwrap();
        let fd = traj.with_finite_difference_velocities().unwrap();
        for p in &fd.samples()[1..9] {
            assert!((p.velocity - Vec3::new(2.0, -1.0, 0.5)).norm() < 1e-10);
        }
        let two = Trajectory::new(vec![mk(0.0), mk(1.0)]).unwrap();
        assert!(matches!(
            two.with_finite_difference_velocities(),
            Err(Error::TooShort(2))
        ));

        let s = spline(17);
        let traj = s.sample_trajectory(1.0, 0.005, 1000).unwrap();
        let fd = traj.with_finite_difference_velocities().unwrap();
        for (p, q) in traj.samples().iter().zip(fd.samples()).skip(1).take(997) {
            assert!((p.velocity - q.velocity).norm() < 1e-3);
        }
    }

    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
}
