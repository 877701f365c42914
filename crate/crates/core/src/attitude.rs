//! Desired attitude, body rate and thrust from a desired force and heading.
//!
//! The desired `k` axis is `-f/‖f‖` so the rotors push along `f`; the `j`
//! axis is `k × s / ‖k × s‖` with `s = (cos ψ, sin ψ, 0)`, and `i = j × k`.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::so3::{vee_skew_part, Rotation};

/// Force magnitude (N) below which no thrust direction is defined.
pub const MIN_FORCE: f64 = 1e-3;
/// Minimum `‖k_d × s_d‖` for the heading to constrain the frame.
pub const MIN_HEADING_CROSS: f64 = 1e-6;
/// Step (s) of the central difference used for the desired angular acceleration.
pub const RATE_DIFF_STEP: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttitudeError {
    #[error("desired force magnitude {0:e} N too small to define a thrust axis")]
    DegenerateForce(f64),
    #[error("desired thrust axis is parallel to the heading direction")]
    HeadingParallel,
}

/// Desired rotation (desired→inertial), body rate and its derivative in the
/// desired frame, and collective thrust.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AttitudeRef {
    pub rotation: Rotation,
    pub rate: Vector3<f64>,
    pub rate_derivative: Vector3<f64>,
    pub thrust: f64,
}

fn heading_vector(psi: f64) -> Vector3<f64> {
    let (s, c) = psi.sin_cos();
    Vector3::new(c, s, 0.0)
}

struct Frame {
    i: Vector3<f64>,
    j: Vector3<f64>,
    k: Vector3<f64>,
    force_norm: f64,
    cross: Vector3<f64>,
    cross_norm: f64,
}

fn frame(f: &Vector3<f64>, psi: f64) -> Result<Frame, AttitudeError> {
    let force_norm = f.norm();
    if !(force_norm > MIN_FORCE) {
        return Err(AttitudeError::DegenerateForce(force_norm));
    }
    let k = -f / force_norm;
    let cross = k.cross(&heading_vector(psi));
    let cross_norm = cross.norm();
    if !(cross_norm > MIN_HEADING_CROSS) {
        return Err(AttitudeError::HeadingParallel);
    }
    let j = cross / cross_norm;
    let i = j.cross(&k);
    Ok(Frame {
        i,
        j,
        k,
        force_norm,
        cross,
        cross_norm,
    })
}

/// `R_d = [i_d j_d k_d]`.
pub fn desired_rotation(f: &Vector3<f64>, psi: f64) -> Result<Rotation, AttitudeError> {
    let fr = frame(f, psi)?;
    Ok(Rotation::from_matrix_unchecked(Matrix3::from_columns(&[fr.i, fr.j, fr.k])))
}

/// Time derivative of the desired axes `[i̇ j̇ k̇]`, differentiating the
/// normalizations and cross products term by term.
pub fn desired_rotation_derivative(
    f: &Vector3<f64>,
    f_dot: &Vector3<f64>,
    psi: f64,
    psi_dot: f64,
) -> Result<(Rotation, Matrix3<f64>), AttitudeError> {
    let fr = frame(f, psi)?;
    // d/dt(x/‖x‖) = (ẋ − x̂ (x̂·ẋ)) / ‖x‖
    let unit_rate = |unit: &Vector3<f64>, norm: f64, rate: &Vector3<f64>| (rate - unit * unit.dot(rate)) / norm;
    let k_dot = -unit_rate(&(-fr.k), fr.force_norm, f_dot);
    let (s, c) = psi.sin_cos();
    let s_vec = Vector3::new(c, s, 0.0);
    let s_dot = Vector3::new(-s, c, 0.0) * psi_dot;
    let cross_dot = k_dot.cross(&s_vec) + fr.k.cross(&s_dot);
    let j_dot = unit_rate(&(fr.cross / fr.cross_norm), fr.cross_norm, &cross_dot);
    let i_dot = j_dot.cross(&fr.k) + fr.j.cross(&k_dot);
    let rotation = Rotation::from_matrix_unchecked(Matrix3::from_columns(&[fr.i, fr.j, fr.k]));
    Ok((rotation, Matrix3::from_columns(&[i_dot, j_dot, k_dot])))
}

/// `ω_d = (R_dᵀ Ṙ_d)∨`, expressed in the desired frame.
pub fn desired_rates(f: &Vector3<f64>, f_dot: &Vector3<f64>, psi: f64, psi_dot: f64) -> Result<Vector3<f64>, AttitudeError> {
    let (r, r_dot) = desired_rotation_derivative(f, f_dot, psi, psi_dot)?;
    Ok(vee_skew_part(&(r.matrix().transpose() * r_dot)))
}

/// Central difference of a desired-rate sampler around `t`.
pub fn desired_rate_derivative<F>(mut rate_at: F, t: f64, h: f64) -> Result<Vector3<f64>, AttitudeError>
where
    F: FnMut(f64) -> Result<Vector3<f64>, AttitudeError>,
{
    let plus = rate_at(t + h)?;
    let minus = rate_at(t - h)?;
    Ok((plus - minus) / (2.0 * h))
}

/// Collective thrust `‖f‖`.
pub fn thrust_magnitude(f: &Vector3<f64>) -> f64 {
    f.norm()
}

/// Builds attitude references and holds the last valid one for the
/// free-fall and heading-parallel singularities.
#[derive(Debug, Clone, Default)]
pub struct AttitudeReferenceTracker {
    last: Option<Rotation>,
}

impl AttitudeReferenceTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn last(&self) -> Option<Rotation> {
        self.last
    }

    /// Reference for force `f` with rate `f_dot`, heading `psi` and its rate.
    /// `rate_at` samples the desired rate at nearby times for the angular
    /// acceleration; on a degenerate sample the derivative is taken as zero.
    pub fn update<F>(
        &mut self,
        f: &Vector3<f64>,
        f_dot: &Vector3<f64>,
        psi: f64,
        psi_dot: f64,
        t: f64,
        rate_at: F,
    ) -> AttitudeRef
    where
        F: FnMut(f64) -> Result<Vector3<f64>, AttitudeError>,
    {
        let thrust = thrust_magnitude(f);
        match desired_rotation_derivative(f, f_dot, psi, psi_dot) {
            Ok((rotation, r_dot)) => {
                self.last = Some(rotation);
                let rate = vee_skew_part(&(rotation.matrix().transpose() * r_dot));
                let rate_derivative = desired_rate_derivative(rate_at, t, RATE_DIFF_STEP).unwrap_or_else(|_| Vector3::zeros());
                AttitudeRef {
                    rotation,
                    rate,
                    rate_derivative,
                    thrust,
                }
            }
            Err(AttitudeError::DegenerateForce(_)) => AttitudeRef {
                rotation: self.last.unwrap_or_default(),
                rate: Vector3::zeros(),
                rate_derivative: Vector3::zeros(),
                thrust,
            },
            Err(AttitudeError::HeadingParallel) => {
                let k = -f / f.norm();
                let hint = match self.last {
                    Some(r) => r.matrix().column(1).into_owned(),
                    None => heading_vector(psi + std::f64::consts::FRAC_PI_2),
                };
                let mut j = hint - k * k.dot(&hint);
                if j.norm() < MIN_HEADING_CROSS {
                    j = k.cross(&Vector3::z());
                    if j.norm() < MIN_HEADING_CROSS {
                        j = Vector3::y();
                    }
                }
                let j = j.normalize();
                let rotation = Rotation::from_matrix_unchecked(Matrix3::from_columns(&[j.cross(&k), j, k]));
                self.last = Some(rotation);
                AttitudeRef {
                    rotation,
                    rate: Vector3::zeros(),
                    rate_derivative: Vector3::zeros(),
                    thrust,
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lqr::{force_command, force_derivative, position_gain, ErrorState, LqrWeights};
    use crate::rigid_body::VehicleParams;
    use crate::so3::exp_map;
    use crate::trajectory::TrajectorySpec;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const HOVER: Vector3<f64> = Vector3::new(0.0, 0.0, -9.81);

    #[test]
    fn hover_is_identity() {
        let r = desired_rotation(&HOVER, 0.0).unwrap();
        assert!((r.matrix() - Matrix3::identity()).norm() < 1e-15);
    }

    #[test]
    fn pure_yaw() {
        let r = desired_rotation(&HOVER, PI / 2.0).unwrap();
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((r.matrix() - expected).norm() < 1e-15);
    }

    #[test]
    fn singular_inputs_rejected() {
        assert!(matches!(desired_rotation(&Vector3::zeros(), 0.0), Err(AttitudeError::DegenerateForce(_))));
        assert!(matches!(desired_rotation(&Vector3::new(-3.0, 0.0, 0.0), 0.0), Err(AttitudeError::HeadingParallel)));
    }

    #[test]
    fn hover_rates() {
        assert!(desired_rates(&HOVER, &Vector3::zeros(), 0.3, 0.0).unwrap().norm() < 1e-15);
        let w = desired_rates(&HOVER, &Vector3::zeros(), 0.3, 0.8).unwrap();
        assert!((w - Vector3::new(0.0, 0.0, 0.8)).norm() < 1e-14);
    }

    #[test]
    fn thrust_examples() {
        assert!((thrust_magnitude(&HOVER) - 9.81).abs() < 1e-15);
        assert_eq!(thrust_magnitude(&Vector3::zeros()), 0.0);
        let f = Vector3::new(1.0, -2.0, 3.0);
        let rotated = exp_map(&crate::so3::TangentVector::new(0.3, 1.0, -0.2)).act(&f);
        assert!((thrust_magnitude(&rotated) - thrust_magnitude(&f)).abs() < 1e-14);
    }

    // Force along the ideal closed loop on the circle: f(t) and ḟ(t) from the
    // trajectory with zero tracking error.
    fn circle_force(t: f64) -> (Vector3<f64>, Vector3<f64>, f64, f64) {
        let params = VehicleParams::reference_airframe();
        let gain = position_gain(1.0, &LqrWeights::simulation()).unwrap();
        let pt = TrajectorySpec::fast_circles().sample(t);
        let e = ErrorState::default();
        let f = force_command(&e, &pt, &gain, &params);
        let fd = force_derivative(&e, &f, &pt, &gain, &params);
        (f, fd, pt.heading, pt.heading_rate)
    }

    #[test]
    fn rates_match_finite_difference_on_circle() {
        let h = 1e-5;
        for i in 0..40 {
            let t = 0.05 + i as f64 * 0.06;
            let (f, fd, psi, psi_dot) = circle_force(t);
            let w = desired_rates(&f, &fd, psi, psi_dot).unwrap();
            let rot = |t: f64| {
                let (f, _, psi, _) = circle_force(t);
                desired_rotation(&f, psi).unwrap().into_inner()
            };
            let r = rot(t);
            let r_dot = (rot(t + h) - rot(t - h)) / (2.0 * h);
            let w_fd = vee_skew_part(&(r.transpose() * r_dot));
            assert!((w - w_fd).norm() < 1e-5, "t={t}: {w:?} vs {w_fd:?}");
            // RᵀṘ is skew
            let omega = r.transpose() * desired_rotation_derivative(&f, &fd, psi, psi_dot).unwrap().1;
            assert!((omega + omega.transpose()).norm() < 1e-9);
        }
    }

    #[test]
    fn rate_derivative_examples() {
        let hover = |_t: f64| desired_rates(&HOVER, &Vector3::zeros(), 0.0, 0.0);
        assert_eq!(desired_rate_derivative(hover, 1.0, RATE_DIFF_STEP).unwrap(), Vector3::zeros());
        let spin = |t: f64| desired_rates(&HOVER, &Vector3::zeros(), 0.7 * t, 0.7);
        assert!(desired_rate_derivative(spin, 2.0, RATE_DIFF_STEP).unwrap().norm() < 1e-9);
    }

    #[test]
    fn rate_derivative_matches_second_difference_on_circle() {
        // ω̇_d from differencing ω_d versus differencing R_d twice.
        let rate_at = |t: f64| {
            let (f, fd, psi, psi_dot) = circle_force(t);
            desired_rates(&f, &fd, psi, psi_dot)
        };
        let rot = |t: f64| {
            let (f, _, psi, _) = circle_force(t);
            desired_rotation(&f, psi).unwrap().into_inner()
        };
        let h = 1e-3;
        for t in [0.3, 1.0, 1.7] {
            let wd = desired_rate_derivative(rate_at, t, RATE_DIFF_STEP).unwrap();
            // (RᵀṘ)˙ = ṘᵀṘ + RᵀR̈; its skew part is ω̇^
            let r = rot(t);
            let r_dot = (rot(t + h) - rot(t - h)) / (2.0 * h);
            let r_ddot = (rot(t + h) - r * 2.0 + rot(t - h)) / (h * h);
            let wd_fd = vee_skew_part(&(r_dot.transpose() * r_dot + r.transpose() * r_ddot));
            assert!((wd - wd_fd).norm() < 1e-3 * (1.0 + wd.norm()), "t={t}: {wd:?} vs {wd_fd:?}");
        }
    }

    #[test]
    fn tracker_holds_last_rotation_in_free_fall() {
        let mut tracker = AttitudeReferenceTracker::new();
        let f = Vector3::new(1.0, 0.0, -9.0);
        let first = tracker.update(&f, &Vector3::zeros(), 0.0, 0.0, 0.0, |_| Ok(Vector3::zeros()));
        let held = tracker.update(&Vector3::zeros(), &Vector3::zeros(), 0.0, 0.0, 0.001, |_| Ok(Vector3::zeros()));
        assert_eq!(held.rotation, first.rotation);
        assert_eq!(held.thrust, 0.0);
        assert_eq!(held.rate, Vector3::zeros());
    }

    #[test]
    fn tracker_resolves_heading_parallel() {
        let mut tracker = AttitudeReferenceTracker::new();
        let _ = tracker.update(&Vector3::new(-1.0, 0.0, -1.0), &Vector3::zeros(), 0.0, 0.0, 0.0, |_| Ok(Vector3::zeros()));
        let f = Vector3::new(-5.0, 0.0, 0.0);
        let out = tracker.update(&f, &Vector3::zeros(), 0.0, 0.0, 0.001, |_| Ok(Vector3::zeros()));
        assert!(Rotation::from_matrix(*out.rotation.matrix()).is_ok());
        assert!((out.rotation.matrix().column(2) - (-f / 5.0)).norm() < 1e-12);
    }

    fn force_strategy() -> impl Strategy<Value = Vector3<f64>> {
        (-20.0..20.0f64, -20.0..20.0f64, -20.0..20.0f64).prop_map(|(x, y, z)| Vector3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn construction_is_orthonormal(f in force_strategy(), psi in -PI..PI) {
            prop_assume!(f.norm() > 0.1);
            let k = -f / f.norm();
            prop_assume!(k.cross(&heading_vector(psi)).norm() > 1e-3);
            let r = desired_rotation(&f, psi).unwrap();
            let m = r.matrix();
            prop_assert!((m.transpose() * m - Matrix3::identity()).norm() < 1e-12);
            prop_assert!((m.determinant() - 1.0).abs() < 1e-12);
            prop_assert!((m.column(2) - k).norm() < 1e-12);
        }

        #[test]
        fn rates_match_fd_for_smooth_inputs(
            f0 in force_strategy(), f1 in force_strategy(), psi0 in -PI..PI, psi1 in -2.0..2.0f64
        ) {
            let f_at = |t: f64| f0 + f1 * t.sin();
            let psi_at = |t: f64| psi0 + psi1 * t;
            let t = 0.4;
            let f = f_at(t);
            prop_assume!(f.norm() > 1.0);
            prop_assume!((-f / f.norm()).cross(&heading_vector(psi_at(t))).norm() > 0.1);
            let w = desired_rates(&f, &(f1 * t.cos()), psi_at(t), psi1).unwrap();
            let h = 1e-5;
            let r = |t: f64| desired_rotation(&f_at(t), psi_at(t)).unwrap().into_inner();
            let r_dot = (r(t + h) - r(t - h)) / (2.0 * h);
            let w_fd = vee_skew_part(&(r(t).transpose() * r_dot));
            prop_assert!((w - w_fd).norm() < 1e-5 * (1.0 + w.norm()));
        }
    }
}
