//! Analytic reference trajectories with exact derivatives through jerk.

use std::f64::consts::PI;

use nalgebra::Vector3;
use thiserror::Error;

/// Horizontal speed (m/s) below which the travel direction is undefined.
pub const HEADING_MIN_SPEED: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("horizontal speed {0:e} m/s too small to define a heading")]
    DegenerateHeading(f64),
    #[error("invalid trajectory: {0}")]
    InvalidSpec(String),
}

/// Desired position and its first three derivatives, heading and heading rate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrajectoryPoint {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    pub jerk: Vector3<f64>,
    pub heading: f64,
    pub heading_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HeadingMode {
    Fixed(f64),
    /// Body `i` axis along the horizontal direction of travel.
    AlongVelocity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrajectorySpec {
    Hover {
        position: Vector3<f64>,
        heading: f64,
    },
    /// Horizontal circle `c + r (cos ωt, sin ωt, 0)`.
    Circle {
        center: Vector3<f64>,
        diameter: f64,
        period: f64,
        heading: HeadingMode,
    },
    /// Vertical loop in the y–z plane, `c + (0, a_y sin ωt, a_z cos ωt)`.
    ///
    /// With a positive `z_amplitude` the loop starts at its lowest point
    /// (largest NED z) moving toward +y.
    FlippingLoop {
        center: Vector3<f64>,
        y_amplitude: f64,
        z_amplitude: f64,
        period: f64,
        heading: f64,
    },
}

impl TrajectorySpec {
    /// 10 m diameter circle, 2.5 s period, 5 m up, facing the direction of travel.
    pub fn fast_circles() -> Self {
        TrajectorySpec::Circle {
            center: Vector3::new(0.0, 0.0, -5.0),
            diameter: 10.0,
            period: 2.5,
            heading: HeadingMode::AlongVelocity,
        }
    }

    /// 1 m by 1.5 m loop 1.5 m up with a 1.4 s period and zero heading.
    pub fn flipping_loops() -> Self {
        TrajectorySpec::FlippingLoop {
            center: Vector3::new(0.0, 0.0, -1.5),
            y_amplitude: 1.0,
            z_amplitude: 1.5,
            period: 1.4,
            heading: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        let finite = |v: &Vector3<f64>| v.iter().all(|x| x.is_finite());
        match *self {
            TrajectorySpec::Hover { position, heading } => {
                if !finite(&position) || !heading.is_finite() {
                    return Err(TrajectoryError::InvalidSpec("hover point must be finite".into()));
                }
            }
            TrajectorySpec::Circle {
                center,
                diameter,
                period,
                heading,
            } => {
                if !finite(&center) {
                    return Err(TrajectoryError::InvalidSpec("circle center must be finite".into()));
                }
                if !(period > 0.0 && period.is_finite()) {
                    return Err(TrajectoryError::InvalidSpec(format!("period must be positive, got {period}")));
                }
                if !(diameter > 0.0 && diameter.is_finite()) {
                    return Err(TrajectoryError::InvalidSpec(format!("diameter must be positive, got {diameter}")));
                }
                if let HeadingMode::Fixed(h) = heading {
                    if !h.is_finite() {
                        return Err(TrajectoryError::InvalidSpec("heading must be finite".into()));
                    }
                }
            }
            TrajectorySpec::FlippingLoop {
                center,
                y_amplitude,
                z_amplitude,
                period,
                heading,
            } => {
                if !finite(&center) || !y_amplitude.is_finite() || !z_amplitude.is_finite() || !heading.is_finite() {
                    return Err(TrajectoryError::InvalidSpec("loop parameters must be finite".into()));
                }
                if !(period > 0.0 && period.is_finite()) {
                    return Err(TrajectoryError::InvalidSpec(format!("period must be positive, got {period}")));
                }
            }
        }
        Ok(())
    }

    pub fn period(&self) -> Option<f64> {
        match *self {
            TrajectorySpec::Hover { .. } => None,
            TrajectorySpec::Circle { period, .. } | TrajectorySpec::FlippingLoop { period, .. } => Some(period),
        }
    }

    pub fn sample(&self, t: f64) -> TrajectoryPoint {
        sample(self, t)
    }
}

/// Evaluates the trajectory and its derivatives at time `t`.
pub fn sample(spec: &TrajectorySpec, t: f64) -> TrajectoryPoint {
    match *spec {
        TrajectorySpec::Hover { position, heading } => TrajectoryPoint {
            position,
            heading,
            ..Default::default()
        },
        TrajectorySpec::Circle {
            center,
            diameter,
            period,
            heading,
        } => {
            let r = 0.5 * diameter;
            let w = 2.0 * PI / period;
            let (s, c) = (w * t).sin_cos();
            let mut pt = TrajectoryPoint {
                position: center + Vector3::new(r * c, r * s, 0.0),
                velocity: Vector3::new(-r * w * s, r * w * c, 0.0),
                acceleration: Vector3::new(-r * w * w * c, -r * w * w * s, 0.0),
                jerk: Vector3::new(r * w * w * w * s, -r * w * w * w * c, 0.0),
                heading: 0.0,
                heading_rate: 0.0,
            };
            match heading {
                HeadingMode::Fixed(h) => pt.heading = h,
                HeadingMode::AlongVelocity => {
                    if let Ok((h, hr)) = heading_from_velocity(&pt.velocity, &pt.acceleration) {
                        pt.heading = h;
                        pt.heading_rate = hr;
                    }
                }
            }
            pt
        }
        TrajectorySpec::FlippingLoop {
            center,
            y_amplitude: ay,
            z_amplitude: az,
            period,
            heading,
        } => {
            let w = 2.0 * PI / period;
            let (s, c) = (w * t).sin_cos();
            let (w2, w3) = (w * w, w * w * w);
            TrajectoryPoint {
                position: center + Vector3::new(0.0, ay * s, az * c),
                velocity: Vector3::new(0.0, ay * w * c, -az * w * s),
                acceleration: Vector3::new(0.0, -ay * w2 * s, -az * w2 * c),
                jerk: Vector3::new(0.0, -ay * w3 * c, az * w3 * s),
                heading,
                heading_rate: 0.0,
            }
        }
    }
}

/// Heading `atan2(ẏ, ẋ)` of the horizontal velocity and its rate
/// `(ẋÿ − ẏẍ) / (ẋ² + ẏ²)`.
pub fn heading_from_velocity(velocity: &Vector3<f64>, acceleration: &Vector3<f64>) -> Result<(f64, f64), TrajectoryError> {
    let speed2 = velocity.x * velocity.x + velocity.y * velocity.y;
    let speed = speed2.sqrt();
    if !(speed > HEADING_MIN_SPEED) {
        return Err(TrajectoryError::DegenerateHeading(speed));
    }
    let heading = velocity.y.atan2(velocity.x);
    let rate = (velocity.x * acceleration.y - velocity.y * acceleration.x) / speed2;
    Ok((heading, rate))
}
