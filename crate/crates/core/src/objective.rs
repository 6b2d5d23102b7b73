//! Age-of-information bookkeeping, the scalarized mission objective and the
//! separation / energy / freshness constraints.

use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::energy::EnergyLedger;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::types::{distance3, WorldState};

/// Fate of one ground user's task in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TaskOutcome {
    Completed { ready: f64, done: f64, aoi: f64 },
    /// Not finished before the slot deadline (or never scheduled).
    Dropped { ready: f64 },
}

impl TaskOutcome {
    pub fn aoi(&self) -> Option<f64> {
        match self {
            TaskOutcome::Completed { aoi, .. } => Some(*aoi),
            TaskOutcome::Dropped { .. } => None,
        }
    }

    pub fn is_dropped(&self) -> bool {
        matches!(self, TaskOutcome::Dropped { .. })
    }
}

/// Classifies a transmission of slot `k` (1-based) that finished at `done`.
/// A task completes only strictly before the deadline `k * tau`.
pub fn record_completion(k: usize, ready: f64, done: f64, tau: f64) -> Result<TaskOutcome> {
    if done < ready {
        return Err(Error::Protocol(format!(
            "completion {done} precedes ready time {ready}"
        )));
    }
    if done < k as f64 * tau {
        Ok(TaskOutcome::Completed {
            ready,
            done,
            aoi: done - ready,
        })
    } else {
        Ok(TaskOutcome::Dropped { ready })
    }
}

/// Per-slot, per-user task outcomes for a mission.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AoiTracker {
    slots: Vec<Vec<TaskOutcome>>,
}

impl AoiTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends the outcomes of one slot, one per ground user.
    pub fn push_slot(&mut self, outcomes: Vec<TaskOutcome>) {
        self.slots.push(outcomes);
    }

    pub fn slots(&self) -> &[Vec<TaskOutcome>] {
        &self.slots
    }

    pub fn last_slot(&self) -> Option<&[TaskOutcome]> {
        self.slots.last().map(Vec::as_slice)
    }

    pub fn num_drops(&self) -> usize {
        self.slots.iter().flatten().filter(|o| o.is_dropped()).count()
    }

    pub fn num_tasks(&self) -> usize {
        self.slots.iter().map(Vec::len).sum()
    }
}

/// Mean over one slot's users; `None` when nothing counts.
pub fn slot_average_aoi(outcomes: &[TaskOutcome], drop_substitute: Option<f64>) -> Option<f64> {
    let vals: Vec<f64> = outcomes
        .iter()
        .filter_map(|o| o.aoi().or(drop_substitute))
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Average AoI over users, then over slots. Dropped tasks contribute
/// `drop_substitute`, or are skipped when it is `None`.
pub fn mission_average_aoi(tracker: &AoiTracker, drop_substitute: Option<f64>) -> f64 {
    let per_slot: Vec<f64> = tracker
        .slots()
        .iter()
        .filter_map(|s| slot_average_aoi(s, drop_substitute))
        .collect();
    if per_slot.is_empty() {
        0.0
    } else {
        per_slot.iter().sum::<f64>() / per_slot.len() as f64
    }
}

/// Mission objective to minimize: `avg_aoi - beta * min_sss`.
pub fn objective_value<T: Scalar>(avg_aoi: T, min_sss: T, beta: T) -> T {
    avg_aoi - beta * min_sss
}

/// Constraint violations in the most recent slot.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConstraintReport {
    /// Relay pairs closer than the minimum separation.
    pub c1_violations: Vec<(usize, usize)>,
    /// Relays over the energy budget.
    pub c2_violations: Vec<usize>,
    /// Ground users whose task aged past `1 / lambda` or was dropped.
    pub c3_violations: Vec<usize>,
}

impl ConstraintReport {
    pub fn collision(&self) -> bool {
        !self.c1_violations.is_empty()
    }

    pub fn energy(&self) -> bool {
        !self.c2_violations.is_empty()
    }
}

/// Pairs of relays that came closer than `min_sep` at any sampled instant.
pub fn separation_violations(samples: &[[[f64; 3]; 3]], min_sep: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for a in 0..samples.len() {
        for b in a + 1..samples.len() {
            if (0..3).any(|i| distance3(samples[a][i], samples[b][i]) < min_sep) {
                out.push((a, b));
            }
        }
    }
    out
}

/// Users whose outcome breaks the freshness bound.
pub fn freshness_violations(outcomes: &[TaskOutcome], arrival_rates: &[f64]) -> Vec<usize> {
    outcomes
        .iter()
        .zip(arrival_rates)
        .enumerate()
        .filter(|(_, (o, &lambda))| match o.aoi() {
            Some(aoi) => aoi > 1.0 / lambda,
            None => true,
        })
        .map(|(m, _)| m)
        .collect()
}

pub fn check_constraints(
    world: &WorldState,
    ledger: &EnergyLedger,
    tracker: &AoiTracker,
    cfg: &ScenarioConfig,
) -> ConstraintReport {
    let rates: Vec<f64> = world.gus.iter().map(|g| g.arrival_rate).collect();
    ConstraintReport {
        c1_violations: separation_violations(&world.uav_path_samples, cfg.min_separation),
        c2_violations: ledger.over_budget(cfg.energy_budget),
        c3_violations: tracker
            .last_slot()
            .map(|s| freshness_violations(s, &rates))
            .unwrap_or_default(),
    }
}
