//! Run configuration: per-experiment presets plus a flat `key = value`
//! override file.
//!
//! Vectors are comma separated (`inertia = 0.07, 0.07, 0.12`); `#` starts a
//! comment. Unknown keys are rejected.

use std::fmt::Write as _;
use std::path::PathBuf;

use nalgebra::{Matrix3, Vector3};

use super::HarnessError;
use crate::control::{AttitudeGains, BaselineGains, ControllerMode};
use crate::lqr::{LqrWeights, DEFAULT_INTEGRAL_LIMIT};
use crate::rigid_body::{QuadState, RotorGeometry, RotorLayout, VehicleParams};
use crate::so3::{exp_map, TangentVector};
use crate::trajectory::{HeadingMode, TrajectorySpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    Hover,
    FastCircles,
    FlippingLoops,
    UpsideDown,
    ErrorSweep,
    RateModeRecovery,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::Hover,
        ExperimentKind::FastCircles,
        ExperimentKind::FlippingLoops,
        ExperimentKind::UpsideDown,
        ExperimentKind::ErrorSweep,
        ExperimentKind::RateModeRecovery,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Hover => "hover",
            ExperimentKind::FastCircles => "fast_circles",
            ExperimentKind::FlippingLoops => "flipping_loops",
            ExperimentKind::UpsideDown => "upside_down",
            ExperimentKind::ErrorSweep => "error_sweep",
            ExperimentKind::RateModeRecovery => "rate_mode_recovery",
        }
    }

    pub fn parse(s: &str) -> Result<Self, HarnessError> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| HarnessError::UnknownExperiment(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryKind {
    Hover,
    Circle,
    Loop,
}

impl TrajectoryKind {
    fn name(&self) -> &'static str {
        match self {
            TrajectoryKind::Hover => "hover",
            TrajectoryKind::Circle => "circle",
            TrajectoryKind::Loop => "loop",
        }
    }
}

/// Trajectory parameters as they appear in the config file. `center` doubles
/// as the hover point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryParams {
    pub kind: TrajectoryKind,
    pub center: Vector3<f64>,
    pub diameter: f64,
    pub period: f64,
    pub heading: HeadingMode,
    pub y_amplitude: f64,
    pub z_amplitude: f64,
}

impl TrajectoryParams {
    pub fn hover(position: Vector3<f64>) -> Self {
        Self {
            kind: TrajectoryKind::Hover,
            center: position,
            diameter: 0.0,
            period: 1.0,
            heading: HeadingMode::Fixed(0.0),
            y_amplitude: 0.0,
            z_amplitude: 0.0,
        }
    }

    pub fn spec(&self) -> Result<TrajectorySpec, HarnessError> {
        let heading_value = match self.heading {
            HeadingMode::Fixed(h) => Some(h),
            HeadingMode::AlongVelocity => None,
        };
        let spec = match self.kind {
            TrajectoryKind::Hover => TrajectorySpec::Hover {
                position: self.center,
                heading: heading_value.ok_or_else(|| invalid("hover needs a fixed heading"))?,
            },
            TrajectoryKind::Circle => TrajectorySpec::Circle {
                center: self.center,
                diameter: self.diameter,
                period: self.period,
                heading: self.heading,
            },
            TrajectoryKind::Loop => TrajectorySpec::FlippingLoop {
                center: self.center,
                y_amplitude: self.y_amplitude,
                z_amplitude: self.z_amplitude,
                period: self.period,
                heading: heading_value.ok_or_else(|| invalid("loop needs a fixed heading"))?,
            },
        };
        spec.validate().map_err(|e| invalid(&e.to_string()))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentKind,
    pub controller: ControllerMode,
    pub mass: f64,
    pub gravity: f64,
    /// Diagonal of the inertia matrix (kg·m²).
    pub inertia: Vector3<f64>,
    pub arm_length: f64,
    pub max_thrust: f64,
    pub max_torque: f64,
    pub rotor_layout: RotorLayout,
    /// Rotor thrust multiplier assumed by the controller's mixer.
    pub thrust_estimate_factor: f64,
    /// Diagonal of the LQR state weight, ordered (e_p, e_v, e_i).
    pub state_weights: [f64; 9],
    pub control_weights: [f64; 3],
    pub k_r: Vector3<f64>,
    pub k_w: Vector3<f64>,
    /// Replace `k_w` with the inertia matrix.
    pub k_w_equals_inertia: bool,
    pub baseline: BaselineGains,
    pub integral_limit: f64,
    pub dt: f64,
    pub duration: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub trajectory: TrajectoryParams,
    pub initial_position: Vector3<f64>,
    pub initial_velocity: Vector3<f64>,
    /// Initial attitude as a rotation vector.
    pub initial_rotation: Vector3<f64>,
    pub initial_rate: Vector3<f64>,
    /// Random axes for the rate-mode recovery sweep.
    pub trials: usize,
    pub out_dir: Option<PathBuf>,
}

fn invalid(msg: &str) -> HarnessError {
    HarnessError::ConfigInvalid(msg.to_string())
}

impl RunConfig {
    fn base(experiment: ExperimentKind) -> Self {
        let gains = AttitudeGains::simulation();
        Self {
            experiment,
            controller: ControllerMode::Torque,
            mass: 1.0,
            gravity: 9.81,
            inertia: Vector3::new(0.07, 0.07, 0.12),
            arm_length: 0.25,
            max_thrust: 9.81,
            max_torque: 5.0,
            rotor_layout: RotorLayout::X,
            thrust_estimate_factor: 1.1,
            state_weights: [2.0, 2.0, 2.0, 1.0, 1.0, 1.0, 1e-3, 1e-3, 0.1],
            control_weights: [0.1, 0.1, 1.0],
            k_r: gains.k_r.diagonal(),
            k_w: gains.k_w.diagonal(),
            k_w_equals_inertia: false,
            baseline: BaselineGains::default(),
            integral_limit: DEFAULT_INTEGRAL_LIMIT,
            dt: 1e-3,
            duration: 20.0,
            noise_sigma: 0.04,
            seed: 0,
            trajectory: TrajectoryParams::hover(Vector3::zeros()),
            initial_position: Vector3::zeros(),
            initial_velocity: Vector3::zeros(),
            initial_rotation: Vector3::zeros(),
            initial_rate: Vector3::zeros(),
            trials: 100,
            out_dir: None,
        }
    }

    /// Defaults for each experiment.
    pub fn preset(experiment: ExperimentKind) -> Self {
        let mut c = Self::base(experiment);
        match experiment {
            ExperimentKind::Hover => {
                let p = Vector3::new(0.0, 0.0, -1.0);
                c.trajectory = TrajectoryParams::hover(p);
                c.initial_position = p;
                c.noise_sigma = 0.0;
                c.thrust_estimate_factor = 1.0;
                c.duration = 10.0;
            }
            ExperimentKind::FastCircles => {
                c.trajectory = TrajectoryParams {
                    kind: TrajectoryKind::Circle,
                    center: Vector3::new(0.0, 0.0, -5.0),
                    diameter: 10.0,
                    period: 2.5,
                    heading: HeadingMode::AlongVelocity,
                    y_amplitude: 0.0,
                    z_amplitude: 0.0,
                };
            }
            ExperimentKind::FlippingLoops => {
                c.trajectory = TrajectoryParams {
                    kind: TrajectoryKind::Loop,
                    center: Vector3::new(0.0, 0.0, -1.5),
                    diameter: 0.0,
                    period: 1.4,
                    heading: HeadingMode::Fixed(0.0),
                    y_amplitude: 1.0,
                    z_amplitude: 1.5,
                };
                c.initial_position = Vector3::new(0.0, 0.0, -1.5);
            }
            ExperimentKind::UpsideDown => {
                c.initial_rotation = Vector3::new(std::f64::consts::PI, 0.0, 0.0);
                c.duration = 15.0;
            }
            ExperimentKind::ErrorSweep => {
                c.noise_sigma = 0.0;
            }
            ExperimentKind::RateModeRecovery => {
                c.controller = ControllerMode::Rate;
                c.k_r = Vector3::repeat(5.0);
                c.noise_sigma = 0.0;
                c.thrust_estimate_factor = 1.0;
                c.duration = 1.0;
            }
        }
        c
    }

    /// Preset for `experiment` with the overrides in `text` applied. A
    /// contradicting `experiment` key in the text is an error.
    pub fn from_text(experiment: ExperimentKind, text: &str) -> Result<Self, HarnessError> {
        let mut c = Self::preset(experiment);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| invalid(&format!("line {}: expected key = value", lineno + 1)))?;
            c.set(key.trim(), value.trim())
                .map_err(|e| invalid(&format!("line {}: {}", lineno + 1, message(&e))))?;
        }
        c.validate()?;
        Ok(c)
    }

    /// Parses a full file whose `experiment` key selects the preset.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let kind = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter_map(|l| l.split_once('='))
            .find(|(k, _)| k.trim() == "experiment")
            .map(|(_, v)| ExperimentKind::parse(v.trim()))
            .transpose()?
            .ok_or_else(|| invalid("missing experiment key"))?;
        Self::from_text(kind, text)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        match key {
            "experiment" => {
                let kind = ExperimentKind::parse(value)?;
                if kind != self.experiment {
                    return Err(invalid(&format!(
                        "config is for {} but experiment {} was requested",
                        kind.name(),
                        self.experiment.name()
                    )));
                }
            }
            "controller" => {
                self.controller = ControllerMode::parse(value).ok_or_else(|| invalid(&format!("unknown controller {value:?}")))?
            }
            "mass" => self.mass = num(value)?,
            "gravity" => self.gravity = num(value)?,
            "inertia" => self.inertia = vec3(value)?,
            "arm_length" => self.arm_length = num(value)?,
            "max_thrust" => self.max_thrust = num(value)?,
            "max_torque" => self.max_torque = num(value)?,
            "rotor_layout" => {
                self.rotor_layout = RotorLayout::parse(value).ok_or_else(|| invalid(&format!("unknown rotor layout {value:?}")))?
            }
            "thrust_estimate_factor" => self.thrust_estimate_factor = num(value)?,
            "state_weights" => self.state_weights = array(value)?,
            "control_weights" => self.control_weights = array(value)?,
            "k_r" => self.k_r = vec3(value)?,
            "k_w" => self.k_w = vec3(value)?,
            "k_w_equals_inertia" => self.k_w_equals_inertia = boolean(value)?,
            "baseline_k_r" => self.baseline.k_r = num(value)?,
            "baseline_k_w" => self.baseline.k_w = num(value)?,
            "integral_limit" => self.integral_limit = num(value)?,
            "dt" => self.dt = num(value)?,
            "duration" => self.duration = num(value)?,
            "noise_sigma" => self.noise_sigma = num(value)?,
            "seed" => self.seed = value.parse().map_err(|_| invalid(&format!("bad seed {value:?}")))?,
            "trajectory" => {
                self.trajectory.kind = match value {
                    "hover" => TrajectoryKind::Hover,
                    "circle" => TrajectoryKind::Circle,
                    "loop" => TrajectoryKind::Loop,
                    _ => return Err(invalid(&format!("unknown trajectory {value:?}"))),
                }
            }
            "center" => self.trajectory.center = vec3(value)?,
            "diameter" => self.trajectory.diameter = num(value)?,
            "period" => self.trajectory.period = num(value)?,
            "heading" => {
                self.trajectory.heading = if value == "along_velocity" {
                    HeadingMode::AlongVelocity
                } else {
                    HeadingMode::Fixed(num(value)?)
                }
            }
            "y_amplitude" => self.trajectory.y_amplitude = num(value)?,
            "z_amplitude" => self.trajectory.z_amplitude = num(value)?,
            "initial_position" => self.initial_position = vec3(value)?,
            "initial_velocity" => self.initial_velocity = vec3(value)?,
            "initial_rotation" => self.initial_rotation = vec3(value)?,
            "initial_rate" => self.initial_rate = vec3(value)?,
            "trials" => self.trials = value.parse().map_err(|_| invalid(&format!("bad trial count {value:?}")))?,
            "out_dir" => self.out_dir = Some(PathBuf::from(value)),
            _ => return Err(invalid(&format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid(&format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(invalid(&format!("duration must be positive, got {}", self.duration)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(invalid(&format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if !(self.integral_limit > 0.0) {
            return Err(invalid("integral_limit must be positive"));
        }
        if !(self.baseline.k_r > 0.0 && self.baseline.k_w > 0.0) {
            return Err(invalid("baseline gains must be positive"));
        }
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        self.vehicle()?;
        self.weights()?;
        self.attitude_gains()?;
        self.trajectory.spec()?;
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn vehicle(&self) -> Result<VehicleParams, HarnessError> {
        VehicleParams::new(
            self.mass,
            self.gravity,
            Matrix3::from_diagonal(&self.inertia),
            RotorGeometry {
                arm_length: self.arm_length,
                max_thrust: self.max_thrust,
                max_torque: self.max_torque,
                layout: self.rotor_layout,
            },
            self.thrust_estimate_factor,
        )
        .map_err(|e| invalid(&e.to_string()))
    }

    pub fn weights(&self) -> Result<LqrWeights, HarnessError> {
        LqrWeights::diagonal(self.state_weights, self.control_weights).map_err(|e| invalid(&e.to_string()))
    }

    pub fn attitude_gains(&self) -> Result<AttitudeGains, HarnessError> {
        let inertia = Matrix3::from_diagonal(&self.inertia);
        let k_w = if self.k_w_equals_inertia {
            inertia
        } else {
            Matrix3::from_diagonal(&self.k_w)
        };
        AttitudeGains::new(Matrix3::from_diagonal(&self.k_r), k_w).map_err(|e| invalid(&e.to_string()))
    }

    pub fn initial_state(&self) -> QuadState {
        QuadState {
            position: self.initial_position,
            velocity: self.initial_velocity,
            attitude: exp_map(&TangentVector(self.initial_rotation)),
            angular_velocity: self.initial_rate,
        }
    }

    /// Serializes every key so that `from_text` reproduces this config.
    pub fn to_text(&self) -> String {
        let v = |x: &Vector3<f64>| format!("{}, {}, {}", x.x, x.y, x.z);
        let list = |xs: &[f64]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let mut s = String::new();
        let mut put = |k: &str, val: String| {
            let _ = writeln!(s, "{k} = {val}");
        };
        put("experiment", self.experiment.name().into());
        put("controller", self.controller.name().into());
        put("mass", self.mass.to_string());
        put("gravity", self.gravity.to_string());
        put("inertia", v(&self.inertia));
        put("arm_length", self.arm_length.to_string());
        put("max_thrust", self.max_thrust.to_string());
        put("max_torque", self.max_torque.to_string());
        put("rotor_layout", self.rotor_layout.name().into());
        put("thrust_estimate_factor", self.thrust_estimate_factor.to_string());
        put("state_weights", list(&self.state_weights));
        put("control_weights", list(&self.control_weights));
        put("k_r", v(&self.k_r));
        put("k_w", v(&self.k_w));
        put("k_w_equals_inertia", self.k_w_equals_inertia.to_string());
        put("baseline_k_r", self.baseline.k_r.to_string());
        put("baseline_k_w", self.baseline.k_w.to_string());
        put("integral_limit", self.integral_limit.to_string());
        put("dt", self.dt.to_string());
        put("duration", self.duration.to_string());
        put("noise_sigma", self.noise_sigma.to_string());
        put("seed", self.seed.to_string());
        put("trajectory", self.trajectory.kind.name().into());
        put("center", v(&self.trajectory.center));
        put("diameter", self.trajectory.diameter.to_string());
        put("period", self.trajectory.period.to_string());
        put(
            "heading",
            match self.trajectory.heading {
                HeadingMode::AlongVelocity => "along_velocity".into(),
                HeadingMode::Fixed(h) => h.to_string(),
            },
        );
        put("y_amplitude", self.trajectory.y_amplitude.to_string());
        put("z_amplitude", self.trajectory.z_amplitude.to_string());
        put("initial_position", v(&self.initial_position));
        put("initial_velocity", v(&self.initial_velocity));
        put("initial_rotation", v(&self.initial_rotation));
        put("initial_rate", v(&self.initial_rate));
        put("trials", self.trials.to_string());
        if let Some(dir) = &self.out_dir {
            put("out_dir", dir.display().to_string());
        }
        s
    }
}

fn message(e: &HarnessError) -> String {
    match e {
        HarnessError::ConfigInvalid(m) => m.clone(),
        other => other.to_string(),
    }
}

fn num(s: &str) -> Result<f64, HarnessError> {
    let x: f64 = s.parse().map_err(|_| invalid(&format!("expected a number, got {s:?}")))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(invalid(&format!("value must be finite, got {s:?}")))
    }
}

fn array<const N: usize>(s: &str) -> Result<[f64; N], HarnessError> {
    let parts: Vec<f64> = s.split(',').map(|p| num(p.trim())).collect::<Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|p: Vec<f64>| invalid(&format!("expected {N} comma-separated values, got {}", p.len())))
}

fn vec3(s: &str) -> Result<Vector3<f64>, HarnessError> {
    array::<3>(s).map(Vector3::from)
}

fn boolean(s: &str) -> Result<bool, HarnessError> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(invalid(&format!("expected true or false, got {s:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for kind in ExperimentKind::ALL {
            RunConfig::preset(kind).validate().unwrap();
            assert_eq!(ExperimentKind::parse(kind.name()).unwrap(), kind);
        }
    }

    #[test]
    fn text_round_trip() {
        for kind in ExperimentKind::ALL {
            let mut c = RunConfig::preset(kind);
            c.seed = 42;
            c.out_dir = Some("out/x".into());
            let back = RunConfig::parse(&c.to_text()).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn overrides_apply() {
        let text = "# comment\nseed = 7\nnoise_sigma = 0  # inline\nk_r = 1, 2, 3\nheading = along_velocity\n";
        let c = RunConfig::from_text(ExperimentKind::FastCircles, text).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.noise_sigma, 0.0);
        assert_eq!(c.k_r, Vector3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn rejects_bad_input() {
        let k = ExperimentKind::Hover;
        assert!(matches!(RunConfig::from_text(k, "bogus = 1"), Err(HarnessError::ConfigInvalid(_))));
        assert!(RunConfig::from_text(k, "dt = 0").is_err());
        assert!(RunConfig::from_text(k, "dt = -1e-3").is_err());
        assert!(RunConfig::from_text(k, "duration = 0").is_err());
        assert!(RunConfig::from_text(k, "noise_sigma = -0.1").is_err());
        assert!(RunConfig::from_text(k, "k_r = 1, 2").is_err());
        assert!(RunConfig::from_text(k, "k_w = -1, 1, 1").is_err());
        assert!(RunConfig::from_text(k, "mass").is_err());
        assert!(RunConfig::from_text(k, "experiment = fast_circles").is_err());
        assert!(RunConfig::from_text(k, "controller = pid").is_err());
        assert!(RunConfig::from_text(k, "rotor_layout = h").is_err());
        assert!(RunConfig::parse("seed = 1").is_err());
        assert!(matches!(RunConfig::parse("experiment = nope"), Err(HarnessError::UnknownExperiment(_))));
    }

    #[test]
    fn inertia_damping_toggle() {
        let c = RunConfig::from_text(ExperimentKind::UpsideDown, "k_w_equals_inertia = true").unwrap();
        assert_eq!(c.attitude_gains().unwrap().k_w, Matrix3::from_diagonal(&c.inertia));
    }
}
