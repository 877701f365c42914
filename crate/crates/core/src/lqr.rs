//! Integrator-augmented LQR on the translational error dynamics.
//!
//! The error state is `e_a = (e_p, e_v, e_i)` with `ė_p = e_v`,
//! `ė_v = f̃ / m`, `ė_i = e_p`, where `f̃ = f − f_eq` and
//! `f_eq = m(−g e₃ + p̈_d)`. The gain comes from the continuous algebraic
//! Riccati equation, solved by Kleinman–Newton iteration.

use nalgebra::{DMatrix, DVector, SMatrix, Vector3};
use thiserror::Error;

use crate::rigid_body::VehicleParams;
use crate::trajectory::TrajectoryPoint;

pub type Matrix9 = SMatrix<f64, 9, 9>;
pub type Matrix9x3 = SMatrix<f64, 9, 3>;
pub type Matrix3x9 = SMatrix<f64, 3, 9>;
pub type Vector9 = SMatrix<f64, 9, 1>;

/// Default per-axis clamp on the integral state (m·s).
pub const DEFAULT_INTEGRAL_LIMIT: f64 = 5.0;
/// Riccati residual accepted as converged.
pub const CARE_TOL: f64 = 1e-10;
/// Residual above which a finished iteration is reported as a failure.
pub const CARE_ACCEPT: f64 = 1e-8;
pub const CARE_MAX_ITER: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LqrError {
    #[error("Riccati iteration did not converge (residual {residual:e} after {iterations} iterations)")]
    NoConvergence { residual: f64, iterations: usize },
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Position, velocity and integrated position error.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub integral: Vector3<f64>,
}

impl ErrorState {
    pub fn as_vector(&self) -> Vector9 {
        let mut v = Vector9::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.position);
        v.fixed_rows_mut::<3>(3).copy_from(&self.velocity);
        v.fixed_rows_mut::<3>(6).copy_from(&self.integral);
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LqrWeights {
    /// State weight, ordered (e_p, e_v, e_i).
    pub state: Matrix9,
    /// Control weight on `f̃`.
    pub control: SMatrix<f64, 3, 3>,
}

impl LqrWeights {
    pub fn new(state: Matrix9, control: SMatrix<f64, 3, 3>) -> Result<Self, LqrError> {
        check_spd(&DMatrix::from_column_slice(9, 9, state.as_slice()), "state weight")?;
        check_spd(&DMatrix::from_column_slice(3, 3, control.as_slice()), "control weight")?;
        Ok(Self { state, control })
    }

    pub fn diagonal(state: [f64; 9], control: [f64; 3]) -> Result<Self, LqrError> {
        Self::new(
            Matrix9::from_diagonal(&Vector9::from_row_slice(&state)),
            SMatrix::<f64, 3, 3>::from_diagonal(&Vector3::from_row_slice(&control)),
        )
    }

    /// Weights used for the simulated experiments.
    pub fn simulation() -> Self {
        Self::diagonal([2.0, 2.0, 2.0, 1.0, 1.0, 1.0, 1e-3, 1e-3, 0.1], [0.1, 0.1, 1.0]).expect("weights are SPD")
    }
}

fn check_spd(m: &DMatrix<f64>, what: &str) -> Result<(), LqrError> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(LqrError::InvalidWeights(format!("{what} has non-finite entries")));
    }
    if (m - m.transpose()).amax() > 1e-12 {
        return Err(LqrError::InvalidWeights(format!("{what} is not symmetric")));
    }
    let min = m.clone().symmetric_eigenvalues().min();
    if !(min > 0.0) {
        return Err(LqrError::InvalidWeights(format!("{what} is not positive definite (min eigenvalue {min:e})")));
    }
    Ok(())
}

/// Solution of the CARE with its optimal gain.
#[derive(Debug, Clone, PartialEq)]
pub struct CareSolution {
    pub p: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// `AᵀP + PA − PBR⁻¹BᵀP + Q`.
pub fn care_residual(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> DMatrix<f64> {
    let r_inv = r.clone().try_inverse().expect("R invertible");
    a.transpose() * p + p * a - p * b * r_inv * b.transpose() * p + q
}

/// Solves `AᵀX + XA + C = 0` by vectorizing into an n²×n² linear system.
pub fn solve_lyapunov(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let at = a.transpose();
    // vec(AᵀX) = (I ⊗ Aᵀ) vec X,  vec(XA) = (Aᵀ ⊗ I) vec X
    let op = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = DVector::from_column_slice((-c).as_slice());
    let x = op.lu().solve(&rhs)?;
    let x = DMatrix::from_column_slice(n, n, x.as_slice());
    Some((&x + x.transpose()) * 0.5)
}

/// Largest real part among the eigenvalues of `m`.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

pub fn is_hurwitz(m: &DMatrix<f64>) -> bool {
    spectral_abscissa(m) < 0.0
}

/// Stabilizing gain `BᵀW⁻¹` where `(A + βI)W + W(A + βI)ᵀ = 2BBᵀ` and β
/// exceeds the norm of `A`. Works for any controllable pair.
pub fn bass_stabilizing_gain(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let beta = a.norm() + 1.0;
    let shifted = a + DMatrix::<f64>::identity(n, n) * beta;
    // The transposed form of solve_lyapunov: Aₛ W + W Aₛᵀ − 2BBᵀ = 0.
    let w = solve_lyapunov(&shifted.transpose(), &(-(b * b.transpose()) * 2.0))?;
    Some(b.transpose() * w.try_inverse()?)
}

/// Kleinman–Newton iteration for the CARE, starting from a stabilizing gain.
///
/// Each iteration solves the Lyapunov equation of the current closed loop and
/// updates `K = R⁻¹BᵀP`. Stops when the Riccati residual drops below
/// [`CARE_TOL`], when `P` stops changing, or after [`CARE_MAX_ITER`] steps.
pub fn solve_care(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    initial_gain: Option<DMatrix<f64>>,
) -> Result<CareSolution, LqrError> {
    let (n, m) = (a.nrows(), b.ncols());
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(LqrError::Dimension(format!(
            "A {:?}, B {:?}, Q {:?}, R {:?}",
            a.shape(),
            b.shape(),
            q.shape(),
            r.shape()
        )));
    }
    check_spd(r, "control weight")?;
    let r_inv = r.clone().try_inverse().ok_or_else(|| LqrError::InvalidWeights("control weight is singular".into()))?;
    let mut k = match initial_gain {
        Some(k) => k,
        None if is_hurwitz(a) => DMatrix::zeros(m, n),
        None => bass_stabilizing_gain(a, b).ok_or(LqrError::NoConvergence {
            residual: f64::INFINITY,
            iterations: 0,
        })?,
    };
    let mut p = DMatrix::<f64>::zeros(n, n);
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < CARE_MAX_ITER {
        iterations += 1;
        let closed = a - b * &k;
        let c = q + k.transpose() * r * &k;
        let next = solve_lyapunov(&closed, &c).ok_or(LqrError::NoConvergence { residual, iterations })?;
        let change = (&next - &p).norm();
        p = next;
        k = &r_inv * b.transpose() * &p;
        residual = care_residual(a, b, q, r, &p).norm();
        if residual < CARE_TOL || change <= 1e-15 * p.norm() {
            break;
        }
    }
    if !(residual < CARE_ACCEPT) || !is_hurwitz(&(a - b * &k)) {
        return Err(LqrError::NoConvergence { residual, iterations });
    }
    Ok(CareSolution { p, k, residual, iterations })
}

/// Augmented error dynamics `(A_a, B_a)` for a vehicle of mass `m`.
pub fn augmented_matrices(mass: f64) -> (Matrix9, Matrix9x3) {
    let mut a = Matrix9::zeros();
    let mut b = Matrix9x3::zeros();
    for i in 0..3 {
        a[(i, 3 + i)] = 1.0; // ė_p = e_v
        a[(6 + i, i)] = 1.0; // ė_i = e_p
        b[(3 + i, i)] = 1.0 / mass; // ė_v = f̃ / m
    }
    (a, b)
}

/// `[B, AB, …, A⁸B]`.
pub fn controllability_matrix(a: &Matrix9, b: &Matrix9x3) -> SMatrix<f64, 9, 27> {
    let mut out = SMatrix::<f64, 9, 27>::zeros();
    let mut blk = *b;
    for i in 0..9 {
        out.fixed_columns_mut::<3>(3 * i).copy_from(&blk);
        blk = a * blk;
    }
    out
}

/// Places every closed-loop pole of each axis chain `e_i → e_p → e_v` at −1:
/// `ė_v = −(3 e_p + 3 e_v + e_i)`, characteristic polynomial `(s + 1)³`.
pub fn chain_stabilizing_gain(mass: f64) -> Matrix3x9 {
    let mut k = Matrix3x9::zeros();
    for i in 0..3 {
        k[(i, i)] = 3.0 * mass;
        k[(i, 3 + i)] = 3.0 * mass;
        k[(i, 6 + i)] = mass;
    }
    k
}

/// CARE solution for the augmented position dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrGain {
    pub k: Matrix3x9,
    pub p: Matrix9,
    pub residual: f64,
}

impl LqrGain {
    pub fn closed_loop(&self, mass: f64) -> Matrix9 {
        let (a, b) = augmented_matrices(mass);
        a - b * self.k
    }
}

/// Solves for the position gain, seeding Kleinman–Newton with the chain
/// pole-placement gain.
pub fn position_gain(mass: f64, weights: &LqrWeights) -> Result<LqrGain, LqrError> {
    let (a, b) = augmented_matrices(mass);
    let sol = solve_care(
        &to_dyn(&a),
        &to_dyn(&b),
        &to_dyn(&weights.state),
        &to_dyn(&weights.control),
        Some(to_dyn(&chain_stabilizing_gain(mass))),
    )?;
    Ok(LqrGain {
        k: Matrix3x9::from_column_slice(sol.k.as_slice()),
        p: Matrix9::from_column_slice(sol.p.as_slice()),
        residual: sol.residual,
    })
}

fn to_dyn<const R: usize, const C: usize>(m: &SMatrix<f64, R, C>) -> DMatrix<f64> {
    DMatrix::from_column_slice(R, C, m.as_slice())
}

/// Equilibrium force `m(−g e₃ + p̈_d)`.
pub fn equilibrium_force(reference: &TrajectoryPoint, params: &VehicleParams) -> Vector3<f64> {
    (reference.acceleration - Vector3::z() * params.gravity) * params.mass
}

/// Desired force `f = −K e_a + f_eq`.
pub fn force_command(e: &ErrorState, reference: &TrajectoryPoint, gain: &LqrGain, params: &VehicleParams) -> Vector3<f64> {
    -(gain.k * e.as_vector()) + equilibrium_force(reference, params)
}

/// Time derivative of the error state assuming the vehicle produces `force`.
pub fn error_rate(e: &ErrorState, force: &Vector3<f64>, reference: &TrajectoryPoint, params: &VehicleParams) -> ErrorState {
    ErrorState {
        position: e.velocity,
        velocity: Vector3::z() * params.gravity + force / params.mass - reference.acceleration,
        integral: e.position,
    }
}

/// `ḟ = −K ė_a + m p⃛_d`.
pub fn force_derivative(
    e: &ErrorState,
    force: &Vector3<f64>,
    reference: &TrajectoryPoint,
    gain: &LqrGain,
    params: &VehicleParams,
) -> Vector3<f64> {
    let rate = error_rate(e, force, reference, params);
    -(gain.k * rate.as_vector()) + reference.jerk * params.mass
}

/// Trapezoidal update of the integral state, clamped to `±limit` per axis.
pub fn update_integral(
    integral: &Vector3<f64>,
    previous: &Vector3<f64>,
    current: &Vector3<f64>,
    dt: f64,
    limit: f64,
) -> Vector3<f64> {
    let next = integral + (previous + current) * (0.5 * dt);
    next.map(|x| x.clamp(-limit, limit))
}
