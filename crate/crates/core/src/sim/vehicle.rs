use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::{Pose, Scene};
use crate::nav::DriveCommand;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleLimits {
    /// Speed at full throttle, m/s.
    pub v_max: f64,
    /// Turn rate at full steering, rad/s.
    pub omega_max: f64,
    /// Collision disc radius, meters.
    pub radius: f64,
}

impl Default for VehicleLimits {
    fn default() -> Self {
        Self {
            v_max: 0.5,
            omega_max: 0.5,
            radius: 0.4,
        }
    }
}

/// Angle wrapped into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

/// One explicit unicycle step: move along the current heading, then turn.
pub fn step_vehicle(pose: &Pose, cmd: &DriveCommand, dt: f64, limits: &VehicleLimits) -> Pose {
    assert!(dt > 0.0, "dt must be positive");
    let v = cmd.throttle * limits.v_max;
    let omega = cmd.steering * limits.omega_max;
    let (s, c) = pose.theta.sin_cos();
    Pose {
        x: pose.x + v * c * dt,
        y: pose.y + v * s * dt,
        theta: wrap_angle(pose.theta + omega * dt),
    }
}

/// Whether the vehicle disc overlaps any obstacle.
pub fn collides(scene: &Scene, pose: &Pose, radius: f64) -> bool {
    scene
        .obstacles
        .iter()
        .any(|o| (o.x - pose.x).hypot(o.y - pose.y) < o.radius + radius)
}
