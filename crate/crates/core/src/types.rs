//! Shared state of ground users and relays.

use serde::{Deserialize, Serialize};

use crate::channel::FadingDraw;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundUser {
    pub id: usize,
    /// Horizontal position; ground users sit at z = 0.
    pub position: [f64; 2],
    /// Constant within a slot.
    pub speed: f64,
    pub heading: f64,
    /// Distance left to the current waypoint along `heading`.
    pub leg_remaining: f64,
    pub arrival_rate: f64,
    /// Time the current image became ready for transmission.
    pub ready_time: f64,
    /// Payload of the most recent task in bits.
    pub data_size: f64,
    /// Completion time of the last delivered task, if any.
    pub last_completion: Option<f64>,
}

impl GroundUser {
    pub fn velocity(&self) -> [f64; 2] {
        [self.speed * self.heading.cos(), self.speed * self.heading.sin()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    pub id: usize,
    pub position: [f64; 3],
    /// Budget left; may go negative, which is reported as a violation.
    pub energy_remaining: f64,
    /// Relocation time spent in the current slot.
    pub relocation_time: f64,
}

impl UavState {
    pub fn altitude(&self) -> f64 {
        self.position[2]
    }

    pub fn horizontal(&self) -> [f64; 2] {
        [self.position[0], self.position[1]]
    }
}

/// Everything the environment knows at a slot boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    /// Slots completed so far.
    pub slot: usize,
    pub gus: Vec<GroundUser>,
    pub uavs: Vec<UavState>,
    pub fading: FadingDraw,
    /// UAV positions at the start, relocation midpoint and end of the last slot.
    pub uav_path_samples: Vec<[[f64; 3]; 3]>,
}

pub(crate) fn distance3(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

pub(crate) fn distance2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}
