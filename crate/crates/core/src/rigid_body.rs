//! Rigid-body quadrotor plant: X-configuration mixer, throttle saturation and
//! noise, and a Lie-group RK4 integrator.
//!
//! Frames are north-east-down. The body `k` axis points out of the underside,
//! so rotor thrust acts along `-R e₃`.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::so3::{exp_map, hat, left_jacobian_inv, Rotation, TangentVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("rotor geometry must be positive (arm {arm_length}, thrust {max_thrust}, torque {max_torque})")]
    DegenerateGeometry {
        arm_length: f64,
        max_thrust: f64,
        max_torque: f64,
    },
    #[error("invalid vehicle parameter: {0}")]
    InvalidParams(String),
    #[error("state became non-finite")]
    NonFiniteState,
    #[error("time step must be positive, got {0}")]
    InvalidStep(f64),
}

/// Rotor placement and actuator limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotorGeometry {
    /// Distance from the centre of mass to each rotor (m).
    pub arm_length: f64,
    /// Thrust of one rotor at full throttle (N).
    pub max_thrust: f64,
    /// Reaction torque of one rotor at full throttle (N·m).
    pub max_torque: f64,
    pub layout: RotorLayout,
}

/// Arrangement of the four rotors around the centre of mass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RotorLayout {
    /// Rotors on the diagonals, 45° from the body axes.
    #[default]
    X,
    /// Rotors on the body axes.
    Plus,
}

impl RotorLayout {
    pub fn name(&self) -> &'static str {
        match self {
            RotorLayout::X => "x",
            RotorLayout::Plus => "plus",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "x" => Some(RotorLayout::X),
            "plus" => Some(RotorLayout::Plus),
            _ => None,
        }
    }

    /// Unit-arm rotor positions `(x, y)` and spin signs.
    pub fn rotors(&self) -> [(f64, f64, f64); 4] {
        match self {
            RotorLayout::X => {
                let c = std::f64::consts::FRAC_1_SQRT_2;
                ROTOR_LAYOUT.map(|(sx, sy, spin)| (sx * c, sy * c, spin))
            }
            RotorLayout::Plus => PLUS_LAYOUT,
        }
    }
}

/// Rotor positions in the body frame (x forward, y right), and spin signs.
///
/// Rotors 1/2 sit on the front-right/back-left diagonal and share a spin
/// direction; rotors 3/4 sit on the front-left/back-right diagonal and spin
/// the other way.
pub const ROTOR_LAYOUT: [(f64, f64, f64); 4] = [
    (1.0, 1.0, 1.0),
    (-1.0, -1.0, 1.0),
    (1.0, -1.0, -1.0),
    (-1.0, 1.0, -1.0),
];

/// Rotors front/back share a spin direction; right/left spin the other way.
pub const PLUS_LAYOUT: [(f64, f64, f64); 4] = [
    (1.0, 0.0, 1.0),
    (-1.0, 0.0, 1.0),
    (0.0, 1.0, -1.0),
    (0.0, -1.0, -1.0),
];

/// Mixing matrix mapping throttles δ to `(T, τx, τy, τz)`.
///
/// A rotor at body position `(x, y, 0)` pushing along `-e₃` with force `F`
/// produces torque `(-y F, x F, 0)`; the yaw term is the rotor's reaction
/// torque with its spin sign.
pub fn build_mixing_matrix(g: &RotorGeometry) -> Result<Matrix4<f64>, DynamicsError> {
    if !(g.arm_length > 0.0 && g.max_thrust > 0.0 && g.max_torque > 0.0) {
        return Err(DynamicsError::DegenerateGeometry {
            arm_length: g.arm_length,
            max_thrust: g.max_thrust,
            max_torque: g.max_torque,
        });
    }
    let mut m = Matrix4::zeros();
    for (i, (ux, uy, spin)) in g.layout.rotors().iter().enumerate() {
        let (x, y) = (ux * g.arm_length, uy * g.arm_length);
        m[(0, i)] = g.max_thrust;
        m[(1, i)] = -y * g.max_thrust;
        m[(2, i)] = x * g.max_thrust;
        m[(3, i)] = spin * g.max_torque;
    }
    Ok(m)
}

/// Total thrust (N) and body torque (N·m).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WrenchCommand {
    pub thrust: f64,
    pub torque: Vector3<f64>,
}

impl WrenchCommand {
    pub fn new(thrust: f64, torque: Vector3<f64>) -> Self {
        Self { thrust, torque }
    }

    pub fn as_vector(&self) -> Vector4<f64> {
        Vector4::new(self.thrust, self.torque.x, self.torque.y, self.torque.z)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self {
            thrust: v[0],
            torque: Vector3::new(v[1], v[2], v[3]),
        }
    }
}

/// Per-rotor throttle in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MotorCommand(pub Vector4<f64>);

impl MotorCommand {
    pub fn uniform(level: f64) -> Self {
        MotorCommand(Vector4::repeat(level))
    }

    /// Componentwise clamp into `[0, 1]`.
    pub fn saturated(v: Vector4<f64>) -> Self {
        MotorCommand(v.map(|d| d.clamp(0.0, 1.0)))
    }
}

/// An invertible mixing matrix with its cached inverse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mixer {
    matrix: Matrix4<f64>,
    inverse: Matrix4<f64>,
}

impl Mixer {
    pub fn new(matrix: Matrix4<f64>) -> Result<Self, DynamicsError> {
        let inverse = matrix
            .try_inverse()
            .filter(|inv| inv.iter().all(|x| x.is_finite()))
            .ok_or_else(|| DynamicsError::InvalidParams("mixing matrix is singular".into()))?;
        Ok(Self { matrix, inverse })
    }

    pub fn from_geometry(g: &RotorGeometry) -> Result<Self, DynamicsError> {
        Self::new(build_mixing_matrix(g)?)
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.matrix
    }

    pub fn inverse(&self) -> &Matrix4<f64> {
        &self.inverse
    }

    /// `(T, τ) = M δ`.
    pub fn mix(&self, delta: &MotorCommand) -> WrenchCommand {
        WrenchCommand::from_vector(&(self.matrix * delta.0))
    }

    /// `M⁻¹ (T, τ)` before saturation.
    pub fn unmix(&self, w: &WrenchCommand) -> Vector4<f64> {
        self.inverse * w.as_vector()
    }

    /// `clamp(M⁻¹ (T, τ), 0, 1)`.
    pub fn unmix_and_saturate(&self, w: &WrenchCommand) -> MotorCommand {
        MotorCommand::saturated(self.unmix(w))
    }
}

pub fn mix(delta: &MotorCommand, mixer: &Mixer) -> WrenchCommand {
    mixer.mix(delta)
}

pub fn unmix_and_saturate(w: &WrenchCommand, mixer: &Mixer) -> MotorCommand {
    mixer.unmix_and_saturate(w)
}

/// Mass properties, rotor geometry, and the two mixers: the true one driving
/// the plant and the controller's estimate with scaled rotor thrust.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleParams {
    pub mass: f64,
    pub gravity: f64,
    pub inertia: Matrix3<f64>,
    inertia_inv: Matrix3<f64>,
    pub geometry: RotorGeometry,
    /// Multiplier on rotor thrust assumed by the controller's mixer.
    pub thrust_estimate_factor: f64,
    pub mixer: Mixer,
    pub controller_mixer: Mixer,
}

impl VehicleParams {
    pub fn new(
        mass: f64,
        gravity: f64,
        inertia: Matrix3<f64>,
        geometry: RotorGeometry,
        thrust_estimate_factor: f64,
    ) -> Result<Self, DynamicsError> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(DynamicsError::InvalidParams(format!("mass must be positive, got {mass}")));
        }
        if !(gravity > 0.0 && gravity.is_finite()) {
            return Err(DynamicsError::InvalidParams(format!("gravity must be positive, got {gravity}")));
        }
        if (inertia - inertia.transpose()).norm() > 1e-12 * inertia.norm() {
            return Err(DynamicsError::InvalidParams("inertia must be symmetric".into()));
        }
        if inertia.symmetric_eigenvalues().min() <= 0.0 {
            return Err(DynamicsError::InvalidParams("inertia must be positive definite".into()));
        }
        if !(thrust_estimate_factor > 0.0) {
            return Err(DynamicsError::InvalidParams(format!(
                "thrust estimate factor must be positive, got {thrust_estimate_factor}"
            )));
        }
        let mixer = Mixer::from_geometry(&geometry)?;
        let controller_mixer = Mixer::from_geometry(&RotorGeometry {
            max_thrust: geometry.max_thrust * thrust_estimate_factor,
            ..geometry
        })?;
        let inertia_inv = inertia.try_inverse().ok_or_else(|| DynamicsError::InvalidParams("inertia is singular".into()))?;
        Ok(Self {
            mass,
            gravity,
            inertia,
            inertia_inv,
            geometry,
            thrust_estimate_factor,
            mixer,
            controller_mixer,
        })
    }

    /// 1 kg airframe with J = diag(0.07, 0.07, 0.12), 0.25 m arms, 9.81 N and
    /// 5 N·m per rotor. The controller mixer is exact.
    pub fn reference_airframe() -> Self {
        Self::new(
            1.0,
            9.81,
            Matrix3::from_diagonal(&Vector3::new(0.07, 0.07, 0.12)),
            RotorGeometry {
                arm_length: 0.25,
                max_thrust: 9.81,
                max_torque: 5.0,
                layout: RotorLayout::X,
            },
            1.0,
        )
        .expect("reference airframe is valid")
    }

    pub fn inertia_inv(&self) -> &Matrix3<f64> {
        &self.inertia_inv
    }

    /// Equal throttle that balances gravity through the true mixer.
    pub fn hover_throttle(&self) -> MotorCommand {
        MotorCommand::uniform(self.mass * self.gravity / (4.0 * self.geometry.max_thrust))
    }
}

/// Position (m, inertial), velocity (m/s, inertial), body-to-inertial
/// attitude, body angular rate (rad/s, body).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QuadState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub attitude: Rotation,
    pub angular_velocity: Vector3<f64>,
}

impl QuadState {
    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self {
            position,
            ..Default::default()
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|x| x.is_finite())
            && self.velocity.iter().all(|x| x.is_finite())
            && self.attitude.matrix().iter().all(|x| x.is_finite())
            && self.angular_velocity.iter().all(|x| x.is_finite())
    }

    /// Angular momentum expressed in the inertial frame, `R J ω`.
    pub fn angular_momentum(&self, inertia: &Matrix3<f64>) -> Vector3<f64> {
        self.attitude.act(&(inertia * self.angular_velocity))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub position_rate: Vector3<f64>,
    pub velocity_rate: Vector3<f64>,
    /// Body rate driving `Ṙ = R ω∧`.
    pub body_rate: Vector3<f64>,
    pub angular_acceleration: Vector3<f64>,
}

/// Translational and rotational dynamics under a constant wrench.
pub fn state_derivative(x: &QuadState, w: &WrenchCommand, params: &VehicleParams) -> StateDerivative {
    let e3 = Vector3::z();
    let omega = x.angular_velocity;
    let j = &params.inertia;
    StateDerivative {
        position_rate: x.velocity,
        velocity_rate: e3 * params.gravity - x.attitude.act(&e3) * (w.thrust / params.mass),
        body_rate: omega,
        angular_acceleration: params.inertia_inv * (w.torque - omega.cross(&(j * omega))),
    }
}

/// How the body rate evolves during a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AngularModel {
    /// Euler's equations driven by the wrench torque.
    Dynamic,
    /// The rate loop holds the commanded body rate exactly; torque is ignored.
    RateTracking(Vector3<f64>),
}

/// Gaussian throttle perturbation applied after the controller.
#[derive(Debug, Clone)]
pub struct ThrottleNoise {
    sigma: f64,
    dist: Option<Normal<f64>>,
    rng: ChaCha8Rng,
}

impl ThrottleNoise {
    pub fn new(sigma: f64, seed: u64) -> Result<Self, DynamicsError> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(DynamicsError::InvalidParams(format!("noise sigma must be >= 0, got {sigma}")));
        }
        let dist = if sigma > 0.0 {
            Some(Normal::new(0.0, sigma).map_err(|e| DynamicsError::InvalidParams(e.to_string()))?)
        } else {
            None
        };
        Ok(Self {
            sigma,
            dist,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `δᵢ ← clamp(δᵢ + N(0, σ), 0, 1)`; a no-op when σ = 0.
    pub fn apply(&mut self, delta: &MotorCommand) -> MotorCommand {
        match &self.dist {
            None => *delta,
            Some(dist) => {
                let mut out = delta.0;
                for d in out.iter_mut() {
                    *d += dist.sample(&mut self.rng);
                }
                MotorCommand::saturated(out)
            }
        }
    }
}

// Integration state: translational part plus rotation increment θ with
// R = R₀ Exp(θ).
#[derive(Clone, Copy)]
struct Stage {
    p: Vector3<f64>,
    v: Vector3<f64>,
    theta: Vector3<f64>,
    w: Vector3<f64>,
}

impl Stage {
    fn axpy(&self, h: f64, k: &Stage) -> Stage {
        Stage {
            p: self.p + k.p * h,
            v: self.v + k.v * h,
            theta: self.theta + k.theta * h,
            w: self.w + k.w * h,
        }
    }
}

/// One RK4 step of the rigid-body equations with the wrench held constant.
///
/// The attitude is advanced on the group (Munthe-Kaas form): the increment θ
/// in `R = R₀ Exp(θ)` obeys `θ̇ = J_r(θ)⁻¹ ω`, is integrated with the classic
/// RK4 tableau, and mapped back through the exponential, so `R` never leaves
/// SO(3) beyond rounding.
pub fn integrate(
    x: &QuadState,
    w: &WrenchCommand,
    angular: AngularModel,
    dt: f64,
    params: &VehicleParams,
) -> Result<QuadState, DynamicsError> {
    if !(dt > 0.0) {
        return Err(DynamicsError::InvalidStep(dt));
    }
    let r0 = x.attitude;
    let w0 = match angular {
        AngularModel::Dynamic => x.angular_velocity,
        AngularModel::RateTracking(rate) => rate,
    };
    let deriv = |s: &Stage| -> Stage {
        let attitude = r0 * exp_map(&TangentVector(s.theta));
        let state = QuadState {
            position: s.p,
            velocity: s.v,
            attitude,
            angular_velocity: s.w,
        };
        let d = state_derivative(&state, w, params);
        // J_r(θ)⁻¹ = J_l(−θ)⁻¹
        let theta_rate = left_jacobian_inv(&TangentVector(-s.theta)) * s.w;
        Stage {
            p: d.position_rate,
            v: d.velocity_rate,
            theta: theta_rate,
            w: match angular {
                AngularModel::Dynamic => d.angular_acceleration,
                AngularModel::RateTracking(_) => Vector3::zeros(),
            },
        }
    };
    let y0 = Stage {
        p: x.position,
        v: x.velocity,
        theta: Vector3::zeros(),
        w: w0,
    };
    let k1 = deriv(&y0);
    let k2 = deriv(&y0.axpy(dt / 2.0, &k1));
    let k3 = deriv(&y0.axpy(dt / 2.0, &k2));
    let k4 = deriv(&y0.axpy(dt, &k3));
    let y1 = Stage {
        p: y0.p + (k1.p + k2.p * 2.0 + k3.p * 2.0 + k4.p) * (dt / 6.0),
        v: y0.v + (k1.v + k2.v * 2.0 + k3.v * 2.0 + k4.v) * (dt / 6.0),
        theta: (k1.theta + k2.theta * 2.0 + k3.theta * 2.0 + k4.theta) * (dt / 6.0),
        w: y0.w + (k1.w + k2.w * 2.0 + k3.w * 2.0 + k4.w) * (dt / 6.0),
    };
    let next = QuadState {
        position: y1.p,
        velocity: y1.v,
        attitude: r0 * exp_map(&TangentVector(y1.theta)),
        angular_velocity: y1.w,
    };
    if next.is_finite() {
        Ok(next)
    } else {
        Err(DynamicsError::NonFiniteState)
    }
}

/// Applies throttle noise (if any), mixes through the true mixer and
/// integrates one step. Returns the next state and the throttles that reached
/// the motors.
pub fn step(
    x: &QuadState,
    delta: &MotorCommand,
    dt: f64,
    params: &VehicleParams,
    noise: Option<&mut ThrottleNoise>,
) -> Result<(QuadState, MotorCommand), DynamicsError> {
    step_with(x, delta, AngularModel::Dynamic, dt, params, noise)
}

pub fn step_with(
    x: &QuadState,
    delta: &MotorCommand,
    angular: AngularModel,
    dt: f64,
    params: &VehicleParams,
    noise: Option<&mut ThrottleNoise>,
) -> Result<(QuadState, MotorCommand), DynamicsError> {
    let applied = match noise {
        Some(n) => n.apply(delta),
        None => *delta,
    };
    let wrench = params.mixer.mix(&applied);
    let mut next = integrate(x, &wrench, angular, dt, params)?;
    if let AngularModel::RateTracking(rate) = angular {
        next.angular_velocity = rate;
    }
    Ok((next, applied))
}

/// Rotational kinetic energy `½ ωᵀ J ω`.
pub fn rotational_energy(x: &QuadState, inertia: &Matrix3<f64>) -> f64 {
    0.5 * x.angular_velocity.dot(&(inertia * x.angular_velocity))
}

/// Skew-symmetric rate matrix `ω∧`, re-exported for callers composing `Ṙ`.
pub fn rate_matrix(omega: &Vector3<f64>) -> Matrix3<f64> {
    hat(omega)
}
