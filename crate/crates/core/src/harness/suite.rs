//! Named experiments with their artifacts and pass/fail checks.

use std::f64::consts::PI;
use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use super::config::{ExperimentKind, RunConfig};
use super::metrics::{write_metrics, RunMetrics};
use super::properties::{decay_report, half_turn_attitude, random_axes, simulate_regulation, AttitudeLaw, DecayReport};
use super::sim::run;
use super::telemetry::write_csv;
use super::HarnessError;
use crate::control::{rotation_error_lee2010, rotation_error_lee2012, rotation_error_log, ControllerMode};
use crate::so3::{exp_map, Rotation, TangentVector};

pub const SWEEP_POINTS: usize = 1001;
pub const SWEEP_TOL: f64 = 1e-9;
pub const CIRCLE_CONVERGENCE_TIME: f64 = 3.0;
pub const CIRCLE_ROLL_BAND_DEG: (f64, f64) = (60.0, 80.0);
pub const CIRCLE_RADIUS_TOL: f64 = 1.0;
pub const LOOP_RMS_TOL: f64 = 0.5;
pub const DROP_BAND: (f64, f64) = (4.5, 8.5);
pub const HOVER_RMS_TOL: f64 = 1e-3;
pub const ESCAPE_DEADLINE: f64 = 0.1;
pub const DECAY_SETTLE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CriterionResult {
    pub fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

/// Circle checks: altitude settles by 3 s, steady-state mean |roll| in the
/// band, and radius error bounded.
pub fn circle_criteria(m: &RunMetrics) -> Vec<CriterionResult> {
    let roll_deg = m.mean_abs_roll.to_degrees();
    let radius = m.radius_error.unwrap_or(f64::NAN);
    vec![
        CriterionResult::new(
            "fast_circles.altitude_convergence",
            m.convergence_time.is_some_and(|t| t <= CIRCLE_CONVERGENCE_TIME),
            format!("convergence time {:?} s (limit {CIRCLE_CONVERGENCE_TIME} s)", m.convergence_time),
        ),
        CriterionResult::new(
            "fast_circles.mean_roll",
            (CIRCLE_ROLL_BAND_DEG.0..=CIRCLE_ROLL_BAND_DEG.1).contains(&roll_deg),
            format!("steady-state mean |roll| {roll_deg:.2} deg (band {CIRCLE_ROLL_BAND_DEG:?})"),
        ),
        CriterionResult::new(
            "fast_circles.radius_error",
            radius < CIRCLE_RADIUS_TOL,
            format!("steady-state radius RMS error {radius:.4} m (limit {CIRCLE_RADIUS_TOL} m)"),
        ),
    ]
}

pub fn loop_criteria(m: &RunMetrics) -> Vec<CriterionResult> {
    vec![
        CriterionResult::new(
            "flipping_loops.rms_position_error",
            m.rms_position_error < LOOP_RMS_TOL,
            format!("steady-state RMS position error {:.4} m (limit {LOOP_RMS_TOL} m)", m.rms_position_error),
        ),
        CriterionResult::new(
            "flipping_loops.roll_exceeds_half_turn",
            m.max_unwrapped_roll > PI,
            format!("max unwrapped |roll| {:.1} deg (must exceed 180)", m.max_unwrapped_roll.to_degrees()),
        ),
    ]
}

/// Outcome of the baseline run: metrics, or the time it diverged.
pub type BaselineOutcome = Result<RunMetrics, f64>;

pub fn upside_down_criteria(ours: &RunMetrics, baseline: &BaselineOutcome) -> Vec<CriterionResult> {
    let drop_ok = (DROP_BAND.0..=DROP_BAND.1).contains(&ours.max_altitude_drop);
    let baseline_recovered = matches!(baseline, Ok(m) if m.recovered);
    vec![
        CriterionResult::new(
            "upside_down.recovers",
            ours.recovered && drop_ok,
            format!(
                "recovered={} at {:?} s, max altitude drop {:.3} m (band {DROP_BAND:?})",
                ours.recovered, ours.recovery_time, ours.max_altitude_drop
            ),
        ),
        CriterionResult::new(
            "upside_down.baseline_fails",
            !baseline_recovered,
            match baseline {
                Ok(m) => format!(
                    "baseline recovered={} (recovery time {:?} s, max drop {:.1} m)",
                    m.recovered, m.recovery_time, m.max_altitude_drop
                ),
                Err(t) => format!("baseline diverged at t = {t:.3} s"),
            },
        ),
    ]
}

/// `(φ, |r̃◎|, |r̃⊛|, |r̃∘|)` for `R = Exp(φ e₁)` on an even grid over `[0, π]`.
/// The trace-normalized error is undefined at π and reported as NaN there.
pub fn error_sweep_table(points: usize) -> Vec<[f64; 4]> {
    (0..points)
        .map(|i| {
            let phi = if i + 1 == points { PI } else { PI * i as f64 / (points - 1) as f64 };
            let r = exp_map(&TangentVector::new(phi, 0.0, 0.0));
            let lee2012 = rotation_error_lee2012(&r).map_or(f64::NAN, |v| v.norm());
            [phi, rotation_error_lee2010(&r).norm(), lee2012, rotation_error_log(&r).angle()]
        })
        .collect()
}

/// Largest deviations of each column from `sin φ`, `sin(φ/2)` and `φ`.
pub fn error_sweep_deviation(table: &[[f64; 4]]) -> [f64; 3] {
    let mut dev = [0.0f64; 3];
    for (i, row) in table.iter().enumerate() {
        let phi = row[0];
        dev[0] = dev[0].max((row[1] - phi.sin()).abs());
        if i + 1 < table.len() {
            dev[1] = dev[1].max((row[2] - (phi / 2.0).sin()).abs());
        }
        dev[2] = dev[2].max((row[3] - phi).abs());
    }
    dev
}

pub fn error_sweep_csv(table: &[[f64; 4]]) -> String {
    let mut s = String::from("phi,lee2010,lee2012,log\n");
    for row in table {
        let _ = writeln!(s, "{:.16e},{:.16e},{:.16e},{:.16e}", row[0], row[1], row[2], row[3]);
    }
    s
}

/// Rate-law recovery from a half-turn error about each of `config.trials`
/// random axes.
pub fn rate_mode_reports(config: &RunConfig) -> Vec<(Vector3<f64>, DecayReport)> {
    let k_r = Matrix3::from_diagonal(&config.k_r);
    let law = AttitudeLaw::Rate { k_r };
    random_axes(config.trials, config.seed)
        .into_iter()
        .map(|u| {
            let trace = simulate_regulation(
                half_turn_attitude(&u),
                Vector3::zeros(),
                Rotation::identity(),
                &law,
                config.dt,
                config.duration,
            );
            (u, decay_report(&trace, &k_r, DECAY_SETTLE))
        })
        .collect()
}

fn write_file(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

fn write_run(dir: &Path, prefix: &str, config: &RunConfig) -> Result<RunMetrics, HarnessError> {
    let (log, metrics) = run(config)?;
    write_csv(&log, &dir.join(format!("{prefix}telemetry.csv")))?;
    write_metrics(&metrics, &dir.join(format!("{prefix}metrics.txt")))?;
    Ok(metrics)
}

/// Runs the experiment selected by `config.experiment`, writes its artifacts
/// into `out` (created if needed), and returns one result per check. The
/// results are also written to `criteria.txt`.
pub fn experiment_suite(config: &RunConfig, out: &Path) -> Result<Vec<CriterionResult>, HarnessError> {
    config.validate()?;
    fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    write_file(&out.join("config.txt"), &config.to_text())?;
    let results = match config.experiment {
        ExperimentKind::Hover => {
            let m = write_run(out, "", config)?;
            vec![CriterionResult::new(
                "hover.rms_position_error",
                m.rms_position_error < HOVER_RMS_TOL,
                format!("RMS position error {:.3e} m (limit {HOVER_RMS_TOL:e} m)", m.rms_position_error),
            )]
        }
        ExperimentKind::FastCircles => circle_criteria(&write_run(out, "", config)?),
        ExperimentKind::FlippingLoops => loop_criteria(&write_run(out, "", config)?),
        ExperimentKind::UpsideDown => {
            let ours = write_run(out, "", config)?;
            let baseline_config = RunConfig {
                controller: ControllerMode::Baseline,
                ..config.clone()
            };
            let baseline = match write_run(out, "baseline_", &baseline_config) {
                Ok(m) => Ok(m),
                Err(HarnessError::BlowUp { t, .. }) => Err(t),
                Err(e) => return Err(e),
            };
            upside_down_criteria(&ours, &baseline)
        }
        ExperimentKind::ErrorSweep => {
            let table = error_sweep_table(SWEEP_POINTS);
            write_file(&out.join("error_sweep.csv"), &error_sweep_csv(&table))?;
            let dev = error_sweep_deviation(&table);
            ["lee2010_is_sin", "lee2012_is_half_sin", "log_is_angle"]
                .iter()
                .zip(dev)
                .map(|(name, d)| {
                    CriterionResult::new(
                        &format!("error_sweep.{name}"),
                        d < SWEEP_TOL,
                        format!("max deviation {d:.3e} (limit {SWEEP_TOL:e})"),
                    )
                })
                .collect()
        }
        ExperimentKind::RateModeRecovery => {
            let reports = rate_mode_reports(config);
            let mut csv = String::from("ux,uy,uz,escape_time,max_bound_ratio,max_rate_error\n");
            for (u, r) in &reports {
                let _ = writeln!(
                    csv,
                    "{:.16e},{:.16e},{:.16e},{},{:.16e},{:.16e}",
                    u.x,
                    u.y,
                    u.z,
                    r.escape_time.map_or("none".to_string(), |t| format!("{t:.16e}")),
                    r.max_bound_ratio,
                    r.max_rate_error
                );
            }
            write_file(&out.join("rate_mode.csv"), &csv)?;
            let worst_escape = reports
                .iter()
                .map(|(_, r)| r.escape_time.unwrap_or(f64::INFINITY))
                .fold(0.0, f64::max);
            let worst_ratio = reports.iter().map(|(_, r)| r.max_bound_ratio).fold(0.0, f64::max);
            vec![
                CriterionResult::new(
                    "rate_mode.escape",
                    worst_escape <= ESCAPE_DEADLINE,
                    format!("slowest exit from the half-turn set {worst_escape:.4} s over {} axes", reports.len()),
                ),
                CriterionResult::new(
                    "rate_mode.exponential_decay",
                    worst_ratio <= 1.0,
                    format!("max ||r(t)|| / (||r(0)|| exp(-0.9 lambda t)) = {worst_ratio:.4} for t > {DECAY_SETTLE} s"),
                ),
            ]
        }
    };
    let text: String = results.iter().map(|r| format!("{r}\n")).collect();
    write_file(&out.join("criteria.txt"), &text)?;
    Ok(results)
}
