use std::f64::consts::PI;

use approx::assert_relative_eq;
use nalgebra::{Matrix3, Vector3};

use quadsim_core::control::{error_rotation, lyapunov_value, ControllerMode, RotationalError};
use quadsim_core::trajectory::HeadingMode;
use quadsim_core::harness::{run, write_csv, ExperimentKind, HarnessError, RunConfig, CSV_HEADER};
use quadsim_core::rigid_body::{integrate, AngularModel, QuadState, VehicleParams, WrenchCommand};
use quadsim_core::so3::{exp_map, TangentVector};

fn short(kind: ExperimentKind, duration: f64) -> RunConfig {
    RunConfig {
        duration,
        ..RunConfig::preset(kind)
    }
}

#[test]
fn hover_stays_on_the_setpoint() {
    let cfg = RunConfig::preset(ExperimentKind::Hover);
    let (log, metrics) = run(&cfg).unwrap();
    assert_eq!(log.len(), 10_001);
    assert!(metrics.rms_position_error < 1e-3, "{metrics:?}");
    assert_eq!(metrics.convergence_time, Some(0.0));
}

#[test]
fn telemetry_file_has_schema_and_one_row_per_step() {
    let cfg = short(ExperimentKind::FlippingLoops, 0.5);
    let (log, _) = run(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("telemetry.csv");
    write_csv(&log, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 501);
    assert!(rows.iter().all(|r| r.split(',').count() == 35));
    let last_t: f64 = rows[500].split(',').next().unwrap().parse().unwrap();
    assert_relative_eq!(last_t, 0.5, epsilon = 1e-12);
}

#[test]
fn identical_seeds_give_identical_runs() {
    let cfg = RunConfig {
        seed: 3,
        ..short(ExperimentKind::FastCircles, 1.0)
    };
    let (a, ma) = run(&cfg).unwrap();
    let (b, mb) = run(&cfg).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(ma.to_text(), mb.to_text());

    let other = RunConfig { seed: 4, ..cfg };
    let (c, _) = run(&other).unwrap();
    assert_ne!(a.to_csv(), c.to_csv());
}

#[test]
fn logged_quantities_are_mutually_consistent() {
    let cfg = short(ExperimentKind::FlippingLoops, 4.0);
    let (log, _) = run(&cfg).unwrap();
    let inertia = Matrix3::from_diagonal(&cfg.inertia);
    let gains = cfg.attitude_gains().unwrap();
    for (rec, ctx) in log.records.iter().zip(&log.context) {
        let r_db = error_rotation(&ctx.attitude, &ctx.desired);
        let rebuilt = exp_map(&TangentVector(rec.r_tilde));
        assert!((rebuilt.matrix() - r_db.matrix()).norm() < 1e-9, "t = {}", rec.t);
        let err = RotationalError {
            r_tilde: TangentVector(rec.r_tilde),
            w_tilde: rec.w_tilde,
        };
        assert_relative_eq!(rec.lyapunov, lyapunov_value(&err, &gains.k_r, &inertia), max_relative = 1e-12);
        let q = rec.quaternion;
        assert_relative_eq!(q.iter().map(|x| x * x).sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(q[0] >= 0.0);
        assert!(rec.throttle.iter().all(|d| (0.0..=1.0).contains(d)));
    }
}

#[test]
fn unwrapped_roll_is_continuous_through_flips() {
    let (log, metrics) = run(&short(ExperimentKind::FlippingLoops, 6.0)).unwrap();
    for pair in log.records.windows(2) {
        assert!((pair[1].roll - pair[0].roll).abs() < 0.5, "jump at t = {}", pair[1].t);
    }
    assert!(metrics.max_unwrapped_roll > 2.0 * PI);
}

#[test]
fn upside_down_start_recovers_with_log_map_controller() {
    let (log, metrics) = run(&RunConfig::preset(ExperimentKind::UpsideDown)).unwrap();
    assert_relative_eq!(log.records[0].roll.abs(), PI, epsilon = 1e-12);
    assert!(metrics.recovered, "{metrics:?}");
    assert!(metrics.max_altitude_drop > 1.0);
}

#[test]
fn baseline_controller_stays_inverted() {
    let cfg = RunConfig {
        controller: ControllerMode::Baseline,
        duration: 5.0,
        ..RunConfig::preset(ExperimentKind::UpsideDown)
    };
    match run(&cfg) {
        Ok((_, m)) => assert!(!m.recovered, "{m:?}"),
        Err(HarnessError::BlowUp { .. }) => {}
        Err(e) => panic!("unexpected error {e}"),
    }
}

#[test]
fn heading_mode_sets_yaw_on_a_slow_circle() {
    let mut cfg = short(ExperimentKind::FastCircles, 20.0);
    cfg.noise_sigma = 0.0;
    cfg.trajectory.period = 10.0;
    let (along, m_along) = run(&cfg).unwrap();
    cfg.trajectory.heading = HeadingMode::Fixed(0.0);
    let (fixed, m_fixed) = run(&cfg).unwrap();
    let late_yaw = |log: &quadsim_core::harness::TelemetryLog| -> Vec<f64> {
        log.records.iter().filter(|r| r.t >= 10.0).map(|r| r.yaw).collect()
    };
    let (a, f) = (late_yaw(&along), late_yaw(&fixed));
    // one revolution of heading per period
    assert!((a.last().unwrap() - a[0]).abs() > 1.9 * PI);
    assert!(f.iter().all(|y| y.abs() < 0.1));
    assert!(m_along.rms_position_error < 0.2);
    assert!((m_along.rms_position_error - m_fixed.rms_position_error).abs() < 1e-2);
}

#[test]
fn config_errors_are_reported() {
    let unknown = RunConfig::from_text(ExperimentKind::Hover, "wobble = 3\n");
    assert!(matches!(unknown, Err(HarnessError::ConfigInvalid(_))));
    let bad_step = RunConfig {
        dt: 0.0,
        ..RunConfig::preset(ExperimentKind::Hover)
    };
    assert!(matches!(run(&bad_step), Err(HarnessError::ConfigInvalid(_))));
    assert!(matches!(ExperimentKind::parse("barrel_roll"), Err(HarnessError::UnknownExperiment(_))));
}

#[test]
fn attitude_stays_on_the_group_over_a_million_steps() {
    let params = VehicleParams::reference_airframe();
    let torque = WrenchCommand::new(0.0, Vector3::new(0.01, -0.02, 0.005));
    let mut x = QuadState {
        angular_velocity: Vector3::new(3.0, -1.0, 2.0),
        ..Default::default()
    };
    for _ in 0..1_000_000 {
        x = integrate(&x, &torque, AngularModel::Dynamic, 1e-3, &params).unwrap();
    }
    let r = x.attitude.matrix();
    assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-6);
    assert_relative_eq!(r.determinant(), 1.0, epsilon = 1e-6);
}
