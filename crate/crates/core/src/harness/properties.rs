//! Attitude-only simulations and trace checks for the controller's
//! convergence properties: error kinematics along a flight log, Lyapunov
//! dissipation under the torque law, exponential decay under the rate law,
//! and escape from a half-turn error.
//!
//! The attitude-only runs evaluate the control law at every RK4 stage, so
//! the integrated trajectory is that of the continuous closed loop.

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};

use super::telemetry::TelemetryLog;
use crate::control::{
    error_rotation, lyapunov_value, rate_error, rate_from_error, rotation_error_log, torque_from_errors, AttitudeGains,
    LogErrorTracker, RotationalError,
};
use crate::so3::{exp_map, left_jacobian_inv, vee_skew_part, Rotation, TangentVector};

/// Steps whose error angle is within this distance of π are skipped by the
/// error-kinematics check, because the logarithm may switch branch there.
pub const BRANCH_MARGIN: f64 = 1e-3;
/// Distance below π that counts as having left the half-turn set.
pub const ESCAPE_MARGIN: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttitudeLaw {
    Torque { gains: AttitudeGains, inertia: Matrix3<f64> },
    Rate { k_r: Matrix3<f64> },
}

/// Sampled errors of an attitude-only regulation run toward a fixed attitude.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AttitudeTrace {
    pub t: Vec<f64>,
    pub r_tilde: Vec<Vector3<f64>>,
    pub w_tilde: Vec<Vector3<f64>>,
    pub lyapunov: Vec<f64>,
}

/// Regulates from `(initial, rate0)` to the fixed attitude `desired` with zero
/// desired rate. Under the rate law the body rate equals the command at every
/// instant and `rate0` is ignored.
pub fn simulate_regulation(
    initial: Rotation,
    rate0: Vector3<f64>,
    desired: Rotation,
    law: &AttitudeLaw,
    dt: f64,
    duration: f64,
) -> AttitudeTrace {
    let zero = Vector3::zeros();
    // body rate and its derivative for a given attitude and (state) rate
    let dynamics = |r: &Rotation, w: &Vector3<f64>| -> (Vector3<f64>, Vector3<f64>) {
        let r_db = error_rotation(r, &desired);
        let r_tilde = rotation_error_log(&r_db);
        match law {
            AttitudeLaw::Torque { gains, inertia } => {
                let err = RotationalError {
                    r_tilde,
                    w_tilde: rate_error(&r_db, &zero, w),
                };
                let tau = torque_from_errors(w, &err, &zero, gains, inertia);
                let w_dot = inertia.try_inverse().expect("inertia is invertible") * (tau - w.cross(&(inertia * w)));
                (*w, w_dot)
            }
            AttitudeLaw::Rate { k_r } => (rate_from_error(&r_db, &r_tilde, &zero, k_r), zero),
        }
    };
    let record = |trace: &mut AttitudeTrace, tracker: &mut LogErrorTracker, t: f64, r: &Rotation, w: &Vector3<f64>| {
        let r_db = error_rotation(r, &desired);
        let r_tilde = tracker.update(&r_db);
        let body_rate = match law {
            AttitudeLaw::Torque { .. } => *w,
            AttitudeLaw::Rate { k_r } => rate_from_error(&r_db, &r_tilde, &zero, k_r),
        };
        let err = RotationalError {
            r_tilde,
            w_tilde: rate_error(&r_db, &zero, &body_rate),
        };
        let (k_r, inertia) = match law {
            AttitudeLaw::Torque { gains, inertia } => (gains.k_r, *inertia),
            AttitudeLaw::Rate { k_r } => (*k_r, Matrix3::zeros()),
        };
        trace.t.push(t);
        trace.r_tilde.push(err.r_tilde.0);
        trace.w_tilde.push(err.w_tilde);
        trace.lyapunov.push(lyapunov_value(&err, &k_r, &inertia));
    };

    let n = (duration / dt).round() as usize;
    let mut trace = AttitudeTrace::default();
    let mut tracker = LogErrorTracker::new();
    let mut r = initial;
    let mut w = rate0;
    record(&mut trace, &mut tracker, 0.0, &r, &w);
    for k in 1..=n {
        let r0 = r;
        // (θ, ω) with R = R₀ Exp(θ); θ̇ = J_l(−θ)⁻¹ ω_body
        let f = |theta: &Vector3<f64>, w: &Vector3<f64>| {
            let rk = r0 * exp_map(&TangentVector(*theta));
            let (body, w_dot) = dynamics(&rk, w);
            (left_jacobian_inv(&TangentVector(-theta)) * body, w_dot)
        };
        let th0 = Vector3::zeros();
        let (a1, b1) = f(&th0, &w);
        let (a2, b2) = f(&(th0 + a1 * (dt / 2.0)), &(w + b1 * (dt / 2.0)));
        let (a3, b3) = f(&(th0 + a2 * (dt / 2.0)), &(w + b2 * (dt / 2.0)));
        let (a4, b4) = f(&(th0 + a3 * dt), &(w + b3 * dt));
        let theta = (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (dt / 6.0);
        w += (b1 + b2 * 2.0 + b3 * 2.0 + b4) * (dt / 6.0);
        r = r0 * exp_map(&TangentVector(theta));
        record(&mut trace, &mut tracker, k as f64 * dt, &r, &w);
    }
    trace
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipationReport {
    /// Largest `|dV/dt + ω̃ᵀK_ω ω̃| / max(1, V)` over interior samples.
    pub max_rate_error: f64,
    /// Largest step-to-step increase of `V`, relative to `max(1, V)`.
    pub max_increase: f64,
}

/// Compares the five-point central difference of `V` with the predicted
/// dissipation `−ω̃ᵀK_ω ω̃`.
pub fn dissipation_report(trace: &AttitudeTrace, k_w: &Matrix3<f64>) -> DissipationReport {
    let v = &trace.lyapunov;
    let mut max_rate_error: f64 = 0.0;
    let mut max_increase: f64 = 0.0;
    for k in 1..v.len() {
        max_increase = max_increase.max((v[k] - v[k - 1]) / v[k - 1].max(1.0));
        if k >= 2 && k + 2 < v.len() {
            let h = trace.t[k + 1] - trace.t[k];
            let dv = (v[k - 2] - 8.0 * v[k - 1] + 8.0 * v[k + 1] - v[k + 2]) / (12.0 * h);
            let w = trace.w_tilde[k];
            let predicted = -w.dot(&(k_w * w));
            max_rate_error = max_rate_error.max((dv - predicted).abs() / v[k].max(1.0));
        }
    }
    DissipationReport {
        max_rate_error,
        max_increase,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayReport {
    /// First time with `‖r̃‖ < π − ESCAPE_MARGIN`.
    pub escape_time: Option<f64>,
    /// Largest `‖r̃(t)‖ / (‖r̃(0)‖ e^{−0.9 λ t})` for `t > settle`.
    pub max_bound_ratio: f64,
    /// Largest `|d/dt(½‖r̃‖²) + r̃ᵀK_r r̃| / max(1, ½‖r̃‖²)` over interior samples.
    pub max_rate_error: f64,
}

/// Checks exponential decay of `‖r̃‖` at rate `0.9 λ_min(K_r)` after `settle`.
pub fn decay_report(trace: &AttitudeTrace, k_r: &Matrix3<f64>, settle: f64) -> DecayReport {
    let lambda = k_r.symmetric_eigenvalues().min();
    let norms: Vec<f64> = trace.r_tilde.iter().map(|r| r.norm()).collect();
    let r0 = norms[0];
    let escape_time = trace
        .t
        .iter()
        .zip(&norms)
        .find(|(_, &n)| n < std::f64::consts::PI - ESCAPE_MARGIN)
        .map(|(&t, _)| t);
    let max_bound_ratio = trace
        .t
        .iter()
        .zip(&norms)
        .filter(|(&t, _)| t > settle)
        .map(|(&t, &n)| n / (r0 * (-0.9 * lambda * t).exp()))
        .fold(0.0, f64::max);
    let half_sq: Vec<f64> = norms.iter().map(|n| 0.5 * n * n).collect();
    let mut max_rate_error: f64 = 0.0;
    for k in 1..half_sq.len().saturating_sub(1) {
        let d = (half_sq[k + 1] - half_sq[k - 1]) / (trace.t[k + 1] - trace.t[k - 1]);
        let r = trace.r_tilde[k];
        max_rate_error = max_rate_error.max((d + r.dot(&(k_r * r))).abs() / half_sq[k].max(1.0));
    }
    DecayReport {
        escape_time,
        max_bound_ratio,
        max_rate_error,
    }
}

/// `n` unit vectors drawn uniformly from the sphere.
pub fn random_axes(n: usize, seed: u64) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let [x, y, z]: [f64; 3] = UnitSphere.sample(&mut rng);
            Vector3::new(x, y, z)
        })
        .collect()
}

/// Body attitude whose error to the identity is a half-turn about `axis`.
pub fn half_turn_attitude(axis: &Vector3<f64>) -> Rotation {
    exp_map(&TangentVector(axis.normalize() * std::f64::consts::PI))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicsReport {
    pub max_error: f64,
    pub checked: usize,
    pub excluded: usize,
}

/// Compares the central difference of the logged `r̃` with `J_l(r̃)⁻¹ ω̃`
/// along a flight log. The desired rate is taken from the central difference
/// of the logged desired attitudes, so the check uses the rate of the
/// reference the vehicle actually saw.
pub fn error_kinematics_report(log: &TelemetryLog) -> KinematicsReport {
    let recs = &log.records;
    let ctx = &log.context;
    let mut max_error: f64 = 0.0;
    let mut checked = 0;
    let mut excluded = 0;
    let near_branch = |r: &Vector3<f64>| r.norm() > std::f64::consts::PI - BRANCH_MARGIN;
    for k in 1..recs.len().saturating_sub(1) {
        let (rm, r, rp) = (recs[k - 1].r_tilde, recs[k].r_tilde, recs[k + 1].r_tilde);
        if near_branch(&rm) || near_branch(&r) || near_branch(&rp) {
            excluded += 1;
            continue;
        }
        let h = recs[k + 1].t - recs[k - 1].t;
        let fd = (rp - rm) / h;
        let rd_dot = (ctx[k + 1].desired.matrix() - ctx[k - 1].desired.matrix()) / h;
        let w_d = vee_skew_part(&(ctx[k].desired.matrix().transpose() * rd_dot));
        let r_db = error_rotation(&ctx[k].attitude, &ctx[k].desired);
        let w_tilde = rate_error(&r_db, &w_d, &recs[k].angular_velocity);
        let predicted = left_jacobian_inv(&TangentVector(r)) * w_tilde;
        max_error = max_error.max((fd - predicted).norm());
        checked += 1;
    }
    KinematicsReport {
        max_error,
        checked,
        excluded,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn inertia() -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::new(0.07, 0.07, 0.12))
    }

    #[test]
    fn rate_law_decays_at_gain_rate() {
        let k = Matrix3::identity() * 5.0;
        let start = exp_map(&TangentVector::new(0.0, 1.0, 0.0)).transpose();
        let trace = simulate_regulation(start, Vector3::zeros(), Rotation::identity(), &AttitudeLaw::Rate { k_r: k }, 1e-3, 1.0);
        // single-axis error decays exactly as e^{-5t}
        assert_relative_eq!(trace.r_tilde.last().unwrap().norm(), (-5.0f64).exp(), epsilon = 1e-9);
    }

    #[test]
    fn torque_law_dissipates() {
        let gains = AttitudeGains::simulation();
        let law = AttitudeLaw::Torque { gains, inertia: inertia() };
        let start = exp_map(&TangentVector::new(1.5, -1.0, 0.5));
        let trace = simulate_regulation(start, Vector3::new(0.5, 0.2, -1.0), Rotation::identity(), &law, 1e-3, 3.0);
        let rep = dissipation_report(&trace, &gains.k_w);
        assert!(rep.max_rate_error < 1e-5, "{rep:?}");
        assert!(rep.max_increase <= 0.0, "{rep:?}");
    }

    #[test]
    fn random_axes_are_unit_and_seeded() {
        let a = random_axes(10, 3);
        assert_eq!(a, random_axes(10, 3));
        assert!(a.iter().all(|u| (u.norm() - 1.0).abs() < 1e-12));
        assert_ne!(a, random_axes(10, 4));
    }
}
