//! Per-step telemetry, attitude angle extraction and CSV output.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Rotation3, UnitQuaternion, Vector3};

use super::HarnessError;
use crate::so3::Rotation;
use crate::trajectory::TrajectoryPoint;

pub const CSV_HEADER: &str = "t,px,py,pz,vx,vy,vz,qw,qx,qy,qz,roll,pitch,yaw,wx,wy,wz,\
rx,ry,rz,wtx,wty,wtz,fx,fy,fz,thrust,taux,tauy,tauz,d1,d2,d3,d4,V";

/// One control step. Angles in radians; roll and yaw are unwrapped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TelemetryRecord {
    pub t: f64,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// Unit quaternion (w, x, y, z) with `w ≥ 0`.
    pub quaternion: [f64; 4],
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub angular_velocity: Vector3<f64>,
    pub r_tilde: Vector3<f64>,
    pub w_tilde: Vector3<f64>,
    pub force: Vector3<f64>,
    pub thrust: f64,
    pub torque: Vector3<f64>,
    pub throttle: [f64; 4],
    pub lyapunov: f64,
}

/// Values kept alongside each record for metrics and consistency checks but
/// not written to the CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepContext {
    pub reference: TrajectoryPoint,
    pub attitude: Rotation,
    pub desired: Rotation,
    pub desired_rate: Vector3<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TelemetryLog {
    pub records: Vec<TelemetryRecord>,
    pub context: Vec<StepContext>,
}

impl TelemetryLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, record: TelemetryRecord, context: StepContext) {
        self.records.push(record);
        self.context.push(context);
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 + self.records.len() * 36 * 24);
        s.push_str(CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            let angles = [r.roll, r.pitch, r.yaw];
            let fields = r
                .position
                .iter()
                .chain(r.velocity.iter())
                .chain(r.quaternion.iter())
                .chain(angles.iter())
                .chain(r.angular_velocity.iter())
                .chain(r.r_tilde.iter())
                .chain(r.w_tilde.iter())
                .chain(r.force.iter())
                .chain(std::iter::once(&r.thrust))
                .chain(r.torque.iter())
                .chain(r.throttle.iter())
                .chain(std::iter::once(&r.lyapunov));
            let _ = write!(s, "{:.16e}", r.t);
            for x in fields {
                let _ = write!(s, ",{x:.16e}");
            }
            s.push('\n');
        }
        s
    }
}

pub fn write_csv(log: &TelemetryLog, path: &Path) -> Result<(), HarnessError> {
    fs::write(path, log.to_csv()).map_err(|e| HarnessError::io(path, e))
}

/// Unit quaternion (w, x, y, z) of a rotation, sign fixed by `w ≥ 0`.
pub fn quaternion(r: &Rotation) -> [f64; 4] {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r.matrix()));
    let s = if q.w < 0.0 { -1.0 } else { 1.0 };
    [s * q.w, s * q.i, s * q.j, s * q.k]
}

/// Z-Y-X (yaw, pitch, roll) Euler angles, each wrapped to (−π, π].
pub fn euler_zyx(r: &Rotation) -> (f64, f64, f64) {
    let m = r.matrix();
    let roll = m[(2, 1)].atan2(m[(2, 2)]);
    let pitch = (-m[(2, 0)]).clamp(-1.0, 1.0).asin();
    let yaw = m[(1, 0)].atan2(m[(0, 0)]);
    (roll, pitch, yaw)
}

/// Continues a wrapped angle from the previous unwrapped value.
pub fn unwrap_angle(previous: f64, wrapped: f64) -> f64 {
    let delta = (wrapped - previous + PI).rem_euclid(2.0 * PI) - PI;
    previous + delta
}

/// Running unwrapper for roll, pitch and yaw.
#[derive(Debug, Clone, Default)]
pub struct EulerUnwrapper {
    last: Option<(f64, f64, f64)>,
}

impl EulerUnwrapper {
    pub fn update(&mut self, r: &Rotation) -> (f64, f64, f64) {
        let (roll, pitch, yaw) = euler_zyx(r);
        let out = match self.last {
            None => (roll, pitch, yaw),
            Some((r0, p0, y0)) => (unwrap_angle(r0, roll), unwrap_angle(p0, pitch), unwrap_angle(y0, yaw)),
        };
        self.last = Some(out);
        out
    }
}
