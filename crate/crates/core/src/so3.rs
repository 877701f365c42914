//! Rotation group operations on 3×3 matrices.
//!
//! Everything here works on plain rotation matrices: hat/vee, the exponential
//! and logarithmic maps, and the left Jacobian with its inverse. The closed
//! forms are singular at φ = 0 (all of them) and φ = π (log and the inverse
//! Jacobian), so each function switches to a series or a limit form near
//! those angles.
//!
//! Small-angle branches use 4th-order Taylor series of the trigonometric
//! ratios below [`SMALL_ANGLE`]. Near a half-turn the logarithm extracts the
//! axis from a symmetric eigendecomposition, and within [`NEAR_PI`] of π the
//! axis sign is canonicalized (first significant component positive), since
//! `Exp(πu) = Exp(-πu)`.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use thiserror::Error;

/// Below this angle (rad) the closed forms are replaced by Taylor series.
pub const SMALL_ANGLE: f64 = 1e-6;
/// Within this distance (rad) of π the half-turn limits apply.
pub const NEAR_PI: f64 = 1e-6;
/// Tolerance on `mᵀm = I` and `det m = 1` for a matrix to count as a rotation.
pub const ROTATION_TOL: f64 = 1e-9;
/// Tolerance on `S + Sᵀ = 0` accepted by [`vee`].
pub const SKEW_TOL: f64 = 1e-9;

// Below this distance from π the axis from (R - Rᵀ) loses digits; switch to the
// eigenvector of the symmetric part.
const EIGEN_AXIS_SWITCH: f64 = 1e-3;
// Components smaller than this are skipped when picking the canonical sign.
const SIGN_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum So3Error {
    #[error("matrix is not skew-symmetric (|S + Sᵀ| = {0:e})")]
    NonSkewInput(f64),
    #[error("matrix is not a rotation (orthogonality error {orthogonality:e}, det {det})")]
    NotARotation { orthogonality: f64, det: f64 },
}

/// Skew-symmetric matrix of `v`, so that `hat(a) * b = a × b`.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`]. Rejects matrices whose symmetric part exceeds [`SKEW_TOL`].
pub fn vee(s: &Matrix3<f64>) -> Result<Vector3<f64>, So3Error> {
    let asym = (s + s.transpose()).norm();
    if !(asym <= SKEW_TOL * s.norm().max(1.0)) {
        return Err(So3Error::NonSkewInput(asym));
    }
    Ok(Vector3::new(s[(2, 1)], s[(0, 2)], s[(1, 0)]))
}

/// `((m - mᵀ) / 2)∨`, the vee of the skew part of an arbitrary matrix.
pub fn vee_skew_part(m: &Matrix3<f64>) -> Vector3<f64> {
    0.5 * Vector3::new(
        m[(2, 1)] - m[(1, 2)],
        m[(0, 2)] - m[(2, 0)],
        m[(1, 0)] - m[(0, 1)],
    )
}

/// An element of SO(3) stored as its 3×3 matrix.
#[derive(Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl fmt::Debug for Rotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Rotation({:?})", self.0.as_slice())
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Validates orthonormality and orientation before wrapping `m`.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, So3Error> {
        let orthogonality = (m.transpose() * m - Matrix3::identity()).norm();
        let det = m.determinant();
        if orthogonality <= ROTATION_TOL && (det - 1.0).abs() <= ROTATION_TOL {
            Ok(Rotation(m))
        } else {
            Err(So3Error::NotARotation { orthogonality, det })
        }
    }

    /// Wraps `m` without checking. Callers guarantee `m ∈ SO(3)`.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Rotation(m)
    }

    /// Builds the rotation whose columns are the given frame axes.
    pub fn from_columns(i: Vector3<f64>, j: Vector3<f64>, k: Vector3<f64>) -> Result<Self, So3Error> {
        Self::from_matrix(Matrix3::from_columns(&[i, j, k]))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Matrix3<f64> {
        self.0
    }

    pub fn transpose(&self) -> Rotation {
        Rotation(self.0.transpose())
    }

    pub fn inverse(&self) -> Rotation {
        self.transpose()
    }

    pub fn act(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    pub fn exp(v: &Vector3<f64>) -> Rotation {
        exp_map(&TangentVector(*v))
    }

    pub fn log(&self) -> TangentVector {
        log_map(self)
    }

    /// `‖RᵀR − I‖_F`.
    pub fn orthogonality_error(&self) -> f64 {
        (self.0.transpose() * self.0 - Matrix3::identity()).norm()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// Projects back onto SO(3) through the polar decomposition.
    pub fn renormalized(&self) -> Rotation {
        let svd = self.0.svd(true, true);
        let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut m = u * v_t;
        if m.determinant() < 0.0 {
            let mut u = u;
            u.column_mut(2).neg_mut();
            m = u * v_t;
        }
        Rotation(m)
    }
}

impl Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Mul<&Rotation> for &Rotation {
    type Output = Rotation;
    fn mul(self, rhs: &Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Mul<Vector3<f64>> for Rotation {
    type Output = Vector3<f64>;
    fn mul(self, rhs: Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

/// Rotation vector `φu` in the Lie algebra, in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TangentVector(pub Vector3<f64>);

impl TangentVector {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        TangentVector(Vector3::new(x, y, z))
    }

    pub fn zero() -> Self {
        TangentVector(Vector3::zeros())
    }

    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        TangentVector(axis.normalize() * angle)
    }

    pub fn vector(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn angle(&self) -> f64 {
        self.0.norm()
    }

    /// Unit axis, `None` for the zero vector.
    pub fn axis(&self) -> Option<Vector3<f64>> {
        let phi = self.angle();
        (phi > 0.0).then(|| self.0 / phi)
    }

    pub fn hat(&self) -> Matrix3<f64> {
        hat(&self.0)
    }
}

impl From<Vector3<f64>> for TangentVector {
    fn from(v: Vector3<f64>) -> Self {
        TangentVector(v)
    }
}

/// Flips `u` so its first component with magnitude above 1e-9 is positive.
pub fn canonical_axis(u: Vector3<f64>) -> Vector3<f64> {
    match u.iter().find(|c| c.abs() > SIGN_EPS) {
        Some(c) if *c < 0.0 => -u,
        _ => u,
    }
}

/// `Exp(φu) = I + sin φ u∧ + (1 − cos φ) u∧u∧`, valid for any finite input.
pub fn exp_map(t: &TangentVector) -> Rotation {
    let v = t.0;
    let phi2 = v.norm_squared();
    let phi = phi2.sqrt();
    let (a, b) = if phi < SMALL_ANGLE {
        (
            1.0 - phi2 / 6.0 + phi2 * phi2 / 120.0,
            0.5 - phi2 / 24.0 + phi2 * phi2 / 720.0,
        )
    } else {
        (phi.sin() / phi, 2.0 * (0.5 * phi).sin().powi(2) / phi2)
    };
    let k = hat(&v);
    Rotation(Matrix3::identity() + k * a + k * k * b)
}

/// Logarithm with angle in `[0, π]`.
pub fn log_map(r: &Rotation) -> TangentVector {
    let m = r.matrix();
    // w = sin φ · u
    let w = vee_skew_part(m);
    let s = w.norm();
    let c = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let phi = s.atan2(c);

    if phi < SMALL_ANGLE {
        let phi2 = phi * phi;
        return TangentVector(w * (1.0 + phi2 / 6.0 + 7.0 * phi2 * phi2 / 360.0));
    }
    if PI - phi < EIGEN_AXIS_SWITCH {
        let u = half_turn_axis(m);
        let u = if PI - phi < NEAR_PI {
            canonical_axis(u)
        } else if u.dot(&w) < 0.0 {
            -u
        } else {
            u
        };
        return TangentVector(u * phi);
    }
    TangentVector(w * (phi / s))
}

/// Checked logarithm of a raw matrix.
pub fn try_log_map(m: &Matrix3<f64>) -> Result<TangentVector, So3Error> {
    Rotation::from_matrix(*m).map(|r| log_map(&r))
}

// Rotation axis as the eigenvector of the symmetric part (R + Rᵀ)/2 with the
// largest eigenvalue (1); the remaining pair sits at cos φ ≈ −1 near a half-turn.
fn half_turn_axis(m: &Matrix3<f64>) -> Vector3<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let idx = eig.eigenvalues.imax();
    eig.eigenvectors.column(idx).normalize()
}

/// Left Jacobian `J_l(φ) = I + (1 − cos φ)/φ u∧ + (φ − sin φ)/φ u∧u∧`.
pub fn left_jacobian(t: &TangentVector) -> Matrix3<f64> {
    let v = t.0;
    let phi2 = v.norm_squared();
    let phi = phi2.sqrt();
    let (a, b) = if phi < SMALL_ANGLE {
        (
            0.5 - phi2 / 24.0 + phi2 * phi2 / 720.0,
            1.0 / 6.0 - phi2 / 120.0 + phi2 * phi2 / 5040.0,
        )
    } else {
        (
            2.0 * (0.5 * phi).sin().powi(2) / phi2,
            (phi - phi.sin()) / (phi2 * phi),
        )
    };
    let k = hat(&v);
    Matrix3::identity() + k * a + k * k * b
}

/// Inverse left Jacobian, `I − φ/2 u∧ + (1 − φ(1 + cos φ)/(2 sin φ)) u∧u∧`.
///
/// Near a half-turn the quadratic coefficient is written through
/// `(1 + cos φ)/sin φ = tan((π − φ)/2)`, which is finite at φ = π and gives
/// `I − (π/2) u∧ + u∧u∧` there.
pub fn left_jacobian_inv(t: &TangentVector) -> Matrix3<f64> {
    let v = t.0;
    let phi2 = v.norm_squared();
    let phi = phi2.sqrt();
    if phi < SMALL_ANGLE {
        let k = hat(&v);
        let b = 1.0 / 12.0 + phi2 / 720.0 + phi2 * phi2 / 30240.0;
        return Matrix3::identity() - k * 0.5 + k * k * b;
    }
    let u = hat(&(v / phi));
    let quad = if PI - phi < NEAR_PI {
        1.0 - 0.5 * phi * (0.5 * (PI - phi)).tan()
    } else {
        // (1 + cos φ) / (2 sin φ) = cot(φ/2) / 2
        let half = 0.5 * phi;
        1.0 - half * half.cos() / half.sin()
    };
    Matrix3::identity() - u * (0.5 * phi) + u * u * quad
}
