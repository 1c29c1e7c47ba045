use serde::{Deserialize, Serialize};

use super::berry::Point3;
use crate::perception::FRAME_PERIOD_MS;

/// Arm and servo state of the simulated plant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    /// Gripper origin (centre of the finger-joint circle) in the world frame.
    pub arm_position: Point3,
    /// Position the arm servo loop is tracking.
    pub arm_command: Point3,
    pub servo_phi: f64,
    /// First-order lag of the arm, s.
    pub arm_time_constant: f64,
    /// mm/s
    pub max_arm_speed: f64,
    pub clock_ms: u64,
}

impl PlantState {
    pub fn at(position: Point3, arm_time_constant: f64, max_arm_speed: f64) -> Self {
        PlantState {
            arm_position: position,
            arm_command: position,
            servo_phi: 0.0,
            arm_time_constant,
            max_arm_speed,
            clock_ms: 0,
        }
    }

    /// Drops any pending motion: the arm holds where it is.
    pub fn hold(&mut self) {
        self.arm_command = self.arm_position;
    }

    /// Point-to-point move handled by the arm's own trajectory controller:
    /// arrives exactly at `target` at constant `speed`. Returns the elapsed
    /// time, rounded up to whole frames.
    pub fn move_to(&mut self, target: Point3, speed: f64) -> u64 {
        let dist = distance(self.arm_position, target);
        let frames = (dist / speed * 1000.0 / FRAME_PERIOD_MS as f64).ceil() as u64;
        self.arm_position = target;
        self.arm_command = target;
        let dt = frames * FRAME_PERIOD_MS;
        self.clock_ms += dt;
        dt
    }

    pub fn wait(&mut self, ms: u64) {
        self.clock_ms += ms;
    }
}

fn distance(a: Point3, b: Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Adds `arm_cmd` to the tracked position and advances the first-order,
/// speed-limited arm response by `dt` seconds.
pub fn step_plant(plant: &PlantState, arm_cmd: Point3, dt: f64) -> PlantState {
    debug_assert!(dt > 0.0);
    let mut next = *plant;
    for k in 0..3 {
        next.arm_command[k] += arm_cmd[k];
    }
    let gain = 1.0 - (-dt / plant.arm_time_constant).exp();
    let mut delta = [0.0; 3];
    for k in 0..3 {
        delta[k] = (next.arm_command[k] - plant.arm_position[k]) * gain;
    }
    let norm = (delta[0].powi(2) + delta[1].powi(2) + delta[2].powi(2)).sqrt();
    let cap = plant.max_arm_speed * dt;
    if norm > cap {
        let s = cap / norm;
        delta.iter_mut().for_each(|d| *d *= s);
    }
    for k in 0..3 {
        next.arm_position[k] += delta[k];
    }
    next.clock_ms += (dt * 1000.0).round() as u64;
    next
}
