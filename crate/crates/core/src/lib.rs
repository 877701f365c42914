//! Quadrotor flight simulation with a geometric attitude controller whose
//! rotational error is the logarithm of the attitude mismatch.
//!
//! The control pipeline runs trajectory sample → integrator-augmented LQR
//! force → desired attitude → SO(3) controller → mixer → rigid-body plant.

pub mod attitude;
pub mod control;
pub mod harness;
pub mod lqr;
pub mod rigid_body;
pub mod so3;
pub mod trajectory;

pub use so3::{exp_map, hat, left_jacobian, left_jacobian_inv, log_map, vee, Rotation, TangentVector};
