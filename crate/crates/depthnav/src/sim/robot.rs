//! Kinematic unicycle robot: forward/vertical velocity plus yaw rate.

use crate::control::ControlCommand;
use nalgebra::Vector3;

/// Robot pose in the fixed z-up world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotState {
    pub position: Vector3<f64>,
    /// Heading, wrapped to (-pi, pi].
    pub yaw: f64,
    pub time: f64,
}

impl RobotState {
    pub fn new(position: Vector3<f64>, yaw: f64) -> Self {
        Self {
            position,
            yaw: wrap_angle(yaw),
            time: 0.0,
        }
    }

    /// Rotate a world-frame vector into the body frame (yaw only).
    pub fn world_to_body(&self, v: &Vector3<f64>) -> Vector3<f64> {
        let (s, c) = self.yaw.sin_cos();
        Vector3::new(c * v.x + s * v.y, -s * v.x + c * v.y, v.z)
    }
}

/// Wrap an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    PI - (PI - a).rem_euclid(2.0 * PI)
}

/// Unicycle integration over one step of `dt` seconds; the translation uses
/// the heading at the start of the step.
pub fn step_robot(r: &RobotState, cmd: &ControlCommand, dt: f64) -> RobotState {
    debug_assert!(dt > 0.0);
    let (s, c) = r.yaw.sin_cos();
    RobotState {
        position: r.position + Vector3::new(cmd.v_x * c * dt, cmd.v_x * s * dt, cmd.v_z * dt),
        yaw: wrap_angle(r.yaw + cmd.v_psi * dt),
        time: r.time + dt,
    }
}
