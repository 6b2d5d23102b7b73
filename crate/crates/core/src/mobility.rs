//! Ground-user random waypoint motion, relay relocation and coverage.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::scalar::Scalar;
use crate::types::{distance2, GroundUser, UavState};

/// One slot's flight command for a relay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct RelocationCommand {
    /// Angle from the +z axis, in `[0, pi]`.
    pub elevation: f64,
    /// Angle in the horizontal plane, in `[0, 2pi)`.
    pub azimuth: f64,
    pub distance: f64,
}

impl RelocationCommand {
    /// Clamps every field into its declared box; azimuth wraps.
    pub fn sanitized(self) -> Self {
        Self {
            elevation: self.elevation.clamp(0.0, PI),
            azimuth: self.azimuth.rem_euclid(TAU),
            distance: self.distance.max(0.0),
        }
    }

    /// The command flying straight from `from` toward `to`, truncated to `max_distance`.
    pub fn toward(from: [f64; 3], to: [f64; 3], max_distance: f64) -> Self {
        let d = [to[0] - from[0], to[1] - from[1], to[2] - from[2]];
        let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        if len == 0.0 {
            return Self::default();
        }
        Self {
            elevation: (d[2] / len).clamp(-1.0, 1.0).acos(),
            azimuth: d[1].atan2(d[0]).rem_euclid(TAU),
            distance: len.min(max_distance),
        }
    }

    pub fn direction(&self) -> [f64; 3] {
        let (se, ce) = self.elevation.sin_cos();
        let (sa, ca) = self.azimuth.sin_cos();
        [se * ca, se * sa, ce]
    }
}

/// Distance from `p` to the square boundary along `heading`.
fn distance_to_boundary(p: [f64; 2], heading: f64, half_width: f64) -> f64 {
    let (s, c) = heading.sin_cos();
    let axis = |x: f64, dir: f64| {
        if dir > 1e-15 {
            (half_width - x) / dir
        } else if dir < -1e-15 {
            (-half_width - x) / dir
        } else {
            f64::INFINITY
        }
    };
    axis(p[0], c).min(axis(p[1], s)).max(0.0)
}

/// Advances a ground user by one slot of random waypoint motion.
///
/// The user keeps its speed for the whole slot. When it reaches its waypoint
/// (or the area boundary) it picks a new waypoint uniformly in the area and
/// continues; a fresh speed from `speed_range` takes effect next slot.
pub fn step_gu<R: Rng + ?Sized>(
    gu: &GroundUser,
    tau: f64,
    half_width: f64,
    speed_range: [f64; 2],
    rng: &mut R,
) -> GroundUser {
    let mut next = gu.clone();
    let mut remaining = (gu.speed * tau).max(0.0);
    let mut reached = false;
    // Bounded so a pathological waypoint sequence cannot spin forever.
    for _ in 0..10_000 {
        let leg = next
            .leg_remaining
            .min(distance_to_boundary(next.position, next.heading, half_width));
        let step = remaining.min(leg);
        next.position[0] += step * next.heading.cos();
        next.position[1] += step * next.heading.sin();
        next.leg_remaining -= step;
        remaining -= step;
        if remaining <= 0.0 {
            break;
        }
        let wp = [
            rng.random_range(-half_width..=half_width),
            rng.random_range(-half_width..=half_width),
        ];
        next.heading = (wp[1] - next.position[1]).atan2(wp[0] - next.position[0]);
        next.leg_remaining = distance2(wp, next.position);
        reached = true;
    }
    next.position[0] = next.position[0].clamp(-half_width, half_width);
    next.position[1] = next.position[1].clamp(-half_width, half_width);
    if reached {
        next.speed = sample_speed(speed_range, rng);
    }
    next
}

pub(crate) fn sample_speed<R: Rng + ?Sized>(range: [f64; 2], rng: &mut R) -> f64 {
    if range[1] > range[0] {
        rng.random_range(range[0]..=range[1])
    } else {
        range[0]
    }
}

/// Executes one relocation command at maximum speed.
///
/// The flight is truncated to `v_max * tau`; the end point is clamped to the
/// altitude band and the operating area, and the travel time is computed
/// from the distance actually flown.
pub fn relocate_uav(uav: &UavState, cmd: &RelocationCommand, cfg: &ScenarioConfig) -> (UavState, f64) {
    let cmd = cmd.sanitized();
    let tau = cfg.slot_duration;
    let v_max = cfg.uav_speed_max;
    let travel = cmd.distance.min(v_max * tau);
    let dir = cmd.direction();
    let [z_min, z_max] = cfg.uav_altitude_range;
    let a = cfg.area_half_width;
    let p = uav.position;
    let end = [
        (p[0] + travel * dir[0]).clamp(-a, a),
        (p[1] + travel * dir[1]).clamp(-a, a),
        (p[2] + travel * dir[2]).clamp(z_min, z_max),
    ];
    let flown = crate::types::distance3(p, end);
    let tau_move = (flown / v_max).min(tau);
    let next = UavState {
        position: end,
        relocation_time: tau_move,
        ..uav.clone()
    };
    (next, tau_move)
}

/// Horizontal radius of a relay's receiving disk, `z * tan(alpha)`.
pub fn coverage_radius<T: Scalar>(altitude: T, coverage_angle: T) -> T {
    altitude * coverage_angle.tan()
}

/// Whether the disk a ground user can reach during the slot lies inside the
/// relay's receiving disk. Closed on the boundary.
pub fn is_served(gu: &GroundUser, uav: &UavState, tau: f64, coverage_angle: f64) -> bool {
    let r = coverage_radius(uav.altitude(), coverage_angle);
    distance2(gu.position, uav.horizontal()) + gu.speed * tau <= r
}
