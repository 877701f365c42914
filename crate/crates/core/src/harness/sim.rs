//! The closed-loop flight simulation.

use nalgebra::Vector3;

use super::config::RunConfig;
use super::metrics::{compute_metrics, RunMetrics};
use super::telemetry::{quaternion, EulerUnwrapper, StepContext, TelemetryLog, TelemetryRecord};
use super::HarnessError;
use crate::attitude::{desired_rates, AttitudeReferenceTracker};
use crate::control::{
    error_rotation, lee2010_baseline, lyapunov_value, omega_d_dot_body, rate_error, rate_from_error, torque_from_errors,
    ControllerMode, LogErrorTracker, RotationalError,
};
use crate::lqr::{error_rate, force_command, force_derivative, position_gain, update_integral, ErrorState};
use crate::rigid_body::{step_with, AngularModel, DynamicsError, ThrottleNoise, WrenchCommand};

/// Position magnitude (m) treated as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Runs the closed loop for `config.duration` seconds and returns one record
/// per control step (including `t = 0` and the final time).
///
/// Each step samples the trajectory, forms the integrator-augmented error,
/// computes the LQR force and its rate, builds the attitude reference,
/// evaluates the selected attitude controller, unmixes through the
/// controller's mixer estimate with saturation, and advances the plant
/// through the true mixer with throttle noise.
pub fn run(config: &RunConfig) -> Result<(TelemetryLog, RunMetrics), HarnessError> {
    config.validate()?;
    let params = config.vehicle()?;
    let weights = config.weights()?;
    let gain = position_gain(params.mass, &weights).map_err(|e| HarnessError::ConfigInvalid(e.to_string()))?;
    let gains = config.attitude_gains()?;
    let spec = config.trajectory.spec()?;
    let inertia = params.inertia;
    let dt = config.dt;
    let n = config.steps();

    let mut noise = if config.noise_sigma > 0.0 {
        Some(ThrottleNoise::new(config.noise_sigma, config.seed).map_err(|e| HarnessError::ConfigInvalid(e.to_string()))?)
    } else {
        None
    };
    let mut x = config.initial_state();
    let mut integral = Vector3::zeros();
    let mut previous_ep: Option<Vector3<f64>> = None;
    let mut reference_tracker = AttitudeReferenceTracker::new();
    let mut log_tracker = LogErrorTracker::new();
    let mut unwrapper = EulerUnwrapper::default();
    let mut log = TelemetryLog::default();
    log.records.reserve(n + 1);
    log.context.reserve(n + 1);

    for k in 0..=n {
        let t = k as f64 * dt;
        let pt = spec.sample(t);
        let ep = x.position - pt.position;
        if let Some(prev) = previous_ep {
            integral = update_integral(&integral, &prev, &ep, dt, config.integral_limit);
        }
        previous_ep = Some(ep);
        let e = ErrorState {
            position: ep,
            velocity: x.velocity - pt.velocity,
            integral,
        };
        let force = force_command(&e, &pt, &gain, &params);
        let force_dot = force_derivative(&e, &force, &pt, &gain, &params);

        // Second-order extrapolation of the error state for sampling ω_d
        // slightly off the current time.
        let e1 = error_rate(&e, &force, &pt, &params);
        let e2 = ErrorState {
            position: e1.velocity,
            velocity: force_dot / params.mass - pt.jerk,
            integral: e.velocity,
        };
        let rate_at = |tau: f64| {
            let s = tau - t;
            let h = 0.5 * s * s;
            let ek = ErrorState {
                position: e.position + e1.position * s + e2.position * h,
                velocity: e.velocity + e1.velocity * s + e2.velocity * h,
                integral: e.integral + e1.integral * s + e2.integral * h,
            };
            let ptk = spec.sample(tau);
            let fk = force_command(&ek, &ptk, &gain, &params);
            let fdk = force_derivative(&ek, &fk, &ptk, &gain, &params);
            desired_rates(&fk, &fdk, ptk.heading, ptk.heading_rate)
        };
        let reference = reference_tracker.update(&force, &force_dot, pt.heading, pt.heading_rate, t, rate_at);

        let r_db = error_rotation(&x.attitude, &reference.rotation);
        let err = RotationalError {
            r_tilde: log_tracker.update(&r_db),
            w_tilde: rate_error(&r_db, &reference.rate, &x.angular_velocity),
        };
        let (wrench, angular) = match config.controller {
            ControllerMode::Torque => {
                let ff = omega_d_dot_body(&r_db, &reference.rate, &reference.rate_derivative, &x.angular_velocity);
                let torque = torque_from_errors(&x.angular_velocity, &err, &ff, &gains, &inertia);
                (WrenchCommand::new(reference.thrust, torque), AngularModel::Dynamic)
            }
            ControllerMode::Rate => {
                let rate = rate_from_error(&r_db, &err.r_tilde, &reference.rate, &gains.k_r);
                (WrenchCommand::new(reference.thrust, Vector3::zeros()), AngularModel::RateTracking(rate))
            }
            ControllerMode::Baseline => (
                lee2010_baseline(&x, &reference, &config.baseline, &inertia, &force),
                AngularModel::Dynamic,
            ),
        };
        let delta = params.controller_mixer.unmix_and_saturate(&wrench);

        let (roll, pitch, yaw) = unwrapper.update(&x.attitude);
        log.push(
            TelemetryRecord {
                t,
                position: x.position,
                velocity: x.velocity,
                quaternion: quaternion(&x.attitude),
                roll,
                pitch,
                yaw,
                angular_velocity: x.angular_velocity,
                r_tilde: err.r_tilde.0,
                w_tilde: err.w_tilde,
                force,
                thrust: wrench.thrust,
                torque: wrench.torque,
                throttle: [delta.0[0], delta.0[1], delta.0[2], delta.0[3]],
                lyapunov: lyapunov_value(&err, &gains.k_r, &inertia),
            },
            StepContext {
                reference: pt,
                attitude: x.attitude,
                desired: reference.rotation,
                desired_rate: reference.rate,
            },
        );
        if k == n {
            break;
        }
        x = match step_with(&x, &delta, angular, dt, &params, noise.as_mut()) {
            Ok((next, _)) => next,
            Err(DynamicsError::NonFiniteState) => {
                return Err(HarnessError::BlowUp {
                    t: t + dt,
                    reason: "non-finite state".into(),
                })
            }
            Err(e) => return Err(HarnessError::ConfigInvalid(e.to_string())),
        };
        if x.position.norm() > DIVERGENCE_LIMIT {
            return Err(HarnessError::BlowUp {
                t: t + dt,
                reason: format!("position magnitude {:.3e} m", x.position.norm()),
            });
        }
    }
    let metrics = compute_metrics(&log, &spec);
    Ok((log, metrics))
}
