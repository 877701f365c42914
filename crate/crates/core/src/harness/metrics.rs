//! Summary metrics computed from a telemetry log.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::telemetry::{euler_zyx, TelemetryLog};
use super::HarnessError;
use crate::trajectory::TrajectorySpec;

/// Half-width of the altitude band used for the convergence time (m).
pub const ALTITUDE_BAND: f64 = 0.25;
/// Position and velocity error bound for the recovered flag (m, m/s).
pub const RECOVERY_TOL: f64 = 0.5;
/// How long the recovery bounds must hold (s).
pub const RECOVERY_HOLD: f64 = 1.0;
/// Fraction of the run, counted from the end, treated as steady state.
pub const STEADY_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub duration: f64,
    /// Earliest time after which altitude stays within the band; `None` if it never settles.
    pub convergence_time: Option<f64>,
    pub rms_position_error: f64,
    pub mean_abs_roll: f64,
    pub max_abs_roll: f64,
    pub max_unwrapped_roll: f64,
    /// Largest descent below the starting altitude (m, positive down).
    pub max_altitude_drop: f64,
    /// RMS of horizontal radius minus nominal radius, circles only.
    pub radius_error: Option<f64>,
    pub recovered: bool,
    /// Start of the first window in which the recovery bounds held long enough.
    pub recovery_time: Option<f64>,
    pub final_lyapunov: f64,
}

/// Computes the metrics for a run of `spec`.
pub fn compute_metrics(log: &TelemetryLog, spec: &TrajectorySpec) -> RunMetrics {
    let recs = &log.records;
    let ctx = &log.context;
    let n = recs.len();
    if n == 0 {
        return RunMetrics {
            duration: 0.0,
            convergence_time: None,
            rms_position_error: f64::NAN,
            mean_abs_roll: f64::NAN,
            max_abs_roll: f64::NAN,
            max_unwrapped_roll: f64::NAN,
            max_altitude_drop: f64::NAN,
            radius_error: None,
            recovered: false,
            recovery_time: None,
            final_lyapunov: f64::NAN,
        };
    }
    let t0 = recs[0].t;
    let duration = recs[n - 1].t - t0;
    let steady_start = t0 + duration * (1.0 - STEADY_FRACTION);
    let steady: Vec<usize> = (0..n).filter(|&i| recs[i].t >= steady_start - 1e-12).collect();

    let mut convergence_time = Some(t0);
    for i in (0..n).rev() {
        if (recs[i].position.z - ctx[i].reference.position.z).abs() > ALTITUDE_BAND {
            convergence_time = recs.get(i + 1).map(|r| r.t);
            break;
        }
    }

    let mean = |f: &dyn Fn(usize) -> f64| steady.iter().map(|&i| f(i)).sum::<f64>() / steady.len() as f64;
    let rms_position_error = mean(&|i| (recs[i].position - ctx[i].reference.position).norm_squared()).sqrt();
    let wrapped_roll = |i: usize| euler_zyx(&ctx[i].attitude).0.abs();
    let mean_abs_roll = mean(&wrapped_roll);
    let max_abs_roll = steady.iter().map(|&i| wrapped_roll(i)).fold(0.0, f64::max);
    let max_unwrapped_roll = recs.iter().map(|r| r.roll.abs()).fold(0.0, f64::max);
    let z0 = recs[0].position.z;
    let max_altitude_drop = recs.iter().map(|r| r.position.z - z0).fold(0.0, f64::max);

    let radius_error = match *spec {
        TrajectorySpec::Circle { center, diameter, .. } => Some(
            mean(&|i| {
                let d = recs[i].position - center;
                (d.x.hypot(d.y) - diameter / 2.0).powi(2)
            })
            .sqrt(),
        ),
        _ => None,
    };

    let mut recovery_time = None;
    let mut window_start: Option<f64> = None;
    for i in 0..n {
        let ok = (recs[i].position - ctx[i].reference.position).norm() < RECOVERY_TOL
            && (recs[i].velocity - ctx[i].reference.velocity).norm() < RECOVERY_TOL;
        if ok {
            let start = *window_start.get_or_insert(recs[i].t);
            if recs[i].t - start >= RECOVERY_HOLD - 1e-9 {
                recovery_time = Some(start);
                break;
            }
        } else {
            window_start = None;
        }
    }

    RunMetrics {
        duration,
        convergence_time,
        rms_position_error,
        mean_abs_roll,
        max_abs_roll,
        max_unwrapped_roll,
        max_altitude_drop,
        radius_error,
        recovered: recovery_time.is_some(),
        recovery_time,
        final_lyapunov: recs[n - 1].lyapunov,
    }
}

impl RunMetrics {
    /// Flat `key=value` lines. Absent values are written as `none`.
    pub fn to_text(&self) -> String {
        let opt = |x: Option<f64>| x.map_or_else(|| "none".to_string(), |v| v.to_string());
        let mut s = String::new();
        let _ = writeln!(s, "duration={}", self.duration);
        let _ = writeln!(s, "convergence_time={}", opt(self.convergence_time));
        let _ = writeln!(s, "rms_position_error={}", self.rms_position_error);
        let _ = writeln!(s, "mean_abs_roll={}", self.mean_abs_roll);
        let _ = writeln!(s, "max_abs_roll={}", self.max_abs_roll);
        let _ = writeln!(s, "max_unwrapped_roll={}", self.max_unwrapped_roll);
        let _ = writeln!(s, "max_altitude_drop={}", self.max_altitude_drop);
        let _ = writeln!(s, "radius_error={}", opt(self.radius_error));
        let _ = writeln!(s, "recovered={}", self.recovered);
        let _ = writeln!(s, "recovery_time={}", opt(self.recovery_time));
        let _ = writeln!(s, "final_lyapunov={}", self.final_lyapunov);
        s
    }
}

pub fn write_metrics(metrics: &RunMetrics, path: &Path) -> Result<(), HarnessError> {
    fs::write(path, metrics.to_text()).map_err(|e| HarnessError::io(path, e))
}
