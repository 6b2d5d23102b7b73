//! Experiment orchestration: policies, evaluation, sweeps and trace export.
//!
//! Every table row carries the scenario hash and the seed that produced it.
//! Grid points run in parallel; results are collected in grid order, so
//! re-running a sweep reproduces the same bytes.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::env::{raw_compression, EpisodeSummary, JointAction, SlotOutcome, UavEnv};
use crate::error::{Error, Result};
use crate::mobility::{self, RelocationCommand};
use crate::objective::TaskOutcome;
use crate::scalar::Scalar;
use crate::semantics::{self, CalibrationTable, SemanticCodec, Surrogate};
use crate::tqc::{AgentCheckpoint, StochasticActor, TqcConfig};
use crate::types::distance2;

/// Chooses the joint action for the environment's current state.
pub trait Policy: Send {
    fn act(&mut self, env: &UavEnv) -> Result<JointAction>;
}

/// How the heuristic picks the compression factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "d")]
pub enum CompressionRule {
    Fixed(u32),
    /// Smallest factor whose payload fits the transmission window at the
    /// modulation-limited rate of the busiest relay.
    Adaptive,
}

/// Scripted baseline: each user is assigned to its nearest relay and every
/// relay flies toward the centroid of its users at the top of the altitude
/// band. Shares are uniform over each serving set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentroidHeuristic {
    pub compression: CompressionRule,
    /// Fraction of the slot a relay may spend flying.
    pub move_fraction: f64,
    /// Spectral efficiency (bit/s/Hz) assumed when sizing payloads.
    pub planning_efficiency: f64,
}

impl Default for CentroidHeuristic {
    fn default() -> Self {
        Self {
            compression: CompressionRule::Adaptive,
            move_fraction: 0.4,
            planning_efficiency: 2.0,
        }
    }
}

impl CentroidHeuristic {
    pub fn fixed(d: u32) -> Self {
        Self {
            compression: CompressionRule::Fixed(d),
            ..Self::default()
        }
    }

    fn adaptive_d(&self, cfg: &ScenarioConfig, streams: usize) -> u32 {
        let [d_lo, d_hi] = cfg.compression_range;
        let m = streams.max(1) as f64;
        let eff = self.planning_efficiency.min(f64::from(cfg.modulation_order).log2());
        let cap = cfg.uplink_bandwidth / m * eff;
        // Worst-case start: after relocation and the latest ready time.
        let window = cfg.slot_duration * (1.0 - self.move_fraction.max(cfg.ready_window_fraction));
        (d_lo..=d_hi)
            .find(|&d| semantics::data_size(cfg.image_dims, d) as f64 / cap <= window)
            .unwrap_or(d_hi)
    }
}

impl Policy for CentroidHeuristic {
    fn act(&mut self, env: &UavEnv) -> Result<JointAction> {
        let cfg = env.config();
        let world = env.world();
        let [_, z_max] = cfg.uav_altitude_range;
        let reach = cfg.uav_speed_max * cfg.slot_duration * self.move_fraction.clamp(0.0, 1.0);
        let mut members = vec![Vec::new(); cfg.num_uavs];
        for g in &world.gus {
            let nearest = world
                .uavs
                .iter()
                .enumerate()
                .min_by(|a, b| {
                    distance2(g.position, a.1.horizontal())
                        .partial_cmp(&distance2(g.position, b.1.horizontal()))
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .map(|(n, _)| n)
                .expect("at least one relay");
            members[nearest].push(g.position);
        }
        let relocation: Vec<RelocationCommand> = world
            .uavs
            .iter()
            .zip(&members)
            .map(|(u, pts)| {
                let target = if pts.is_empty() {
                    [u.position[0], u.position[1], z_max]
                } else {
                    let k = pts.len() as f64;
                    [pts.iter().map(|p| p[0]).sum::<f64>() / k, pts.iter().map(|p| p[1]).sum::<f64>() / k, z_max]
                };
                RelocationCommand::toward(u.position, target, reach)
            })
            .collect();

        let d = match self.compression {
            CompressionRule::Fixed(d) => d,
            CompressionRule::Adaptive => {
                // Predict serving counts at the commanded end points.
                let streams = world
                    .uavs
                    .iter()
                    .zip(&relocation)
                    .map(|(u, cmd)| {
                        let (next, _) = mobility::relocate_uav(u, cmd, cfg);
                        world
                            .gus
                            .iter()
                            .filter(|g| mobility::is_served(g, &next, cfg.slot_duration, cfg.coverage_angle))
                            .count()
                    })
                    .max()
                    .unwrap_or(1);
                self.adaptive_d(cfg, streams)
            }
        };
        let raw = raw_compression(d, cfg.compression_range);
        Ok(JointAction {
            relocation,
            proportions: vec![vec![1.0; cfg.num_gus]; cfg.num_uavs],
            compression: vec![raw; if cfg.per_gu_compression { cfg.num_gus } else { 1 }],
        })
    }
}

/// Deterministic (mean-action) policy from a trained actor.
#[derive(Debug, Clone)]
pub struct ActorPolicy<T> {
    pub actor: StochasticActor<T>,
}

impl<T: Scalar + Send> Policy for ActorPolicy<T> {
    fn act(&mut self, env: &UavEnv) -> Result<JointAction> {
        let obs: Vec<T> = env.observation().iter().map(|&x| T::lit(x)).collect();
        let squashed = self.actor.deterministic(&obs)?;
        JointAction::from_flat(env.config(), &self.actor.to_env(&squashed))
    }
}

/// Which policy drives evaluations and sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", content = "path")]
pub enum PolicyChoice {
    #[default]
    Heuristic,
    Checkpoint(PathBuf),
}

impl PolicyChoice {
    fn build(&self, heuristic: CentroidHeuristic) -> Result<Box<dyn Policy>> {
        match self {
            PolicyChoice::Heuristic => Ok(Box::new(heuristic)),
            PolicyChoice::Checkpoint(path) => Ok(Box::new(ActorPolicy::<f32> {
                actor: AgentCheckpoint::load(path)?.actor()?,
            })),
        }
    }
}

pub fn build_policy(choice: &PolicyChoice, heuristic: CentroidHeuristic) -> Result<Box<dyn Policy>> {
    choice.build(heuristic)
}

/// Mission metrics of one evaluated episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub summary: EpisodeSummary,
    pub mean_sss: f64,
    pub drop_rate: f64,
    pub total_reward: f64,
}

/// Runs one mission from `seed` to completion under `policy`.
pub fn evaluate(env: &mut UavEnv, policy: &mut dyn Policy, seed: u64) -> Result<Evaluation> {
    env.reset(seed);
    let mut total_reward = 0.0;
    while !env.is_done() {
        let action = policy.act(env)?;
        let (_, r, _, _) = env.step(&action)?;
        total_reward += r;
    }
    let summary = env.summary();
    let sss: Vec<f64> = env.history().iter().flat_map(|s| s.gus.iter().filter_map(|g| g.sss)).collect();
    Ok(Evaluation {
        summary,
        mean_sss: if sss.is_empty() { 0.0 } else { sss.iter().sum::<f64>() / sss.len() as f64 },
        drop_rate: if summary.tasks == 0 { 0.0 } else { summary.drops as f64 / summary.tasks as f64 },
        total_reward,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    #[default]
    Eval,
    Sweep,
}

/// What to do when a slot length exceeds the shortest inter-arrival time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TauFeasibility {
    /// Lower the arrival-rate range to `1/tau` so the point stays valid.
    #[default]
    ClipArrivalRates,
    /// Drop the point with a logged notice.
    Skip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub scenario: ScenarioConfig,
    pub mode: Mode,
    pub policy: PolicyChoice,
    pub heuristic: CentroidHeuristic,
    pub tqc: TqcConfig,
    /// Fidelity table replacing the analytic surrogate.
    pub calibration: Option<PathBuf>,
    pub tau_grid: Vec<f64>,
    pub tau_feasibility: TauFeasibility,
    pub snr_grid: Vec<f64>,
    pub compression_grid: Vec<u32>,
    pub order_grid: Vec<u32>,
    /// Nominal SNR for the heatmap; `None` keeps the scenario noise.
    pub heatmap_snr_db: Option<f64>,
    pub output_dir: PathBuf,
    pub repetitions: usize,
    /// One seed per repetition.
    pub seeds: Vec<u64>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            mode: Mode::Sweep,
            policy: PolicyChoice::Heuristic,
            heuristic: CentroidHeuristic::default(),
            tqc: TqcConfig::default(),
            calibration: None,
            tau_grid: vec![2.0, 5.0, 10.0, 15.0],
            tau_feasibility: TauFeasibility::ClipArrivalRates,
            snr_grid: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            compression_grid: vec![1, 2, 3, 4],
            order_grid: vec![4, 16, 64, 256],
            heatmap_snr_db: Some(10.0),
            output_dir: PathBuf::from("out"),
            repetitions: 1,
            seeds: vec![0],
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.scenario.clone().validated()?;
        self.tqc.validate()?;
        for (name, empty) in [
            ("tau_grid", self.tau_grid.is_empty()),
            ("snr_grid", self.snr_grid.is_empty()),
            ("compression_grid", self.compression_grid.is_empty()),
            ("order_grid", self.order_grid.is_empty()),
        ] {
            if empty {
                return Err(Error::param(name, "grid is empty"));
            }
        }
        if self.repetitions == 0 || self.seeds.len() != self.repetitions {
            return Err(Error::param(
                "seeds",
                format!("{} seeds for {} repetitions", self.seeds.len(), self.repetitions),
            ));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::param("seeds", "seeds must be distinct"));
        }
        Ok(())
    }

    /// Seeds `base, base+1, ..` for `repetitions` runs.
    pub fn with_seeds(mut self, base: u64, repetitions: usize) -> Self {
        self.repetitions = repetitions;
        self.seeds = (0..repetitions as u64).map(|i| base + i).collect();
        self
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// The analytic surrogate, or the calibration table when one is set.
    pub fn codec(&self) -> Result<Arc<dyn SemanticCodec>> {
        Ok(match &self.calibration {
            Some(path) => Arc::new(Surrogate::with_table(CalibrationTable::load(path)?)),
            None => Arc::new(Surrogate::analytic()),
        })
    }
}

/// One evaluated mission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub config_hash: String,
    pub seed: u64,
    pub avg_aoi: f64,
    pub min_sss: f64,
    pub mean_sss: f64,
    pub drops: usize,
    pub deadline_drops: usize,
    pub tasks: usize,
    pub drop_rate: f64,
    pub collisions: usize,
    pub energy_violations: usize,
    pub objective: f64,
    pub total_reward: f64,
}

impl EvalRow {
    pub fn new(cfg: &ScenarioConfig, seed: u64, e: &Evaluation) -> Self {
        Self {
            config_hash: cfg.config_hash(),
            seed,
            avg_aoi: e.summary.avg_aoi,
            min_sss: e.summary.min_sss,
            mean_sss: e.mean_sss,
            drops: e.summary.drops,
            deadline_drops: e.summary.deadline_drops,
            tasks: e.summary.tasks,
            drop_rate: e.drop_rate,
            collisions: e.summary.collisions,
            energy_violations: e.summary.energy_violations,
            objective: e.summary.objective,
            total_reward: e.total_reward,
        }
    }
}

pub fn spec_to_toml(spec: &ExperimentSpec) -> Result<String> {
    toml::to_string(spec).map_err(|e| Error::Config(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauRow {
    pub config_hash: String,
    pub seed: u64,
    pub tau: f64,
    pub avg_aoi: f64,
    pub min_sss: f64,
    pub mean_sss: f64,
    pub drops: usize,
    pub deadline_drops: usize,
    pub tasks: usize,
    pub drop_rate: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrRow {
    pub config_hash: String,
    pub seed: u64,
    pub snr_db: f64,
    pub avg_aoi: f64,
    pub min_sss: f64,
    pub mean_sss: f64,
    pub drops: usize,
    pub tasks: usize,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapRow {
    pub config_hash: String,
    pub seed: u64,
    pub compression: u32,
    pub feature_len: f64,
    pub mod_order: u32,
    pub avg_aoi: f64,
    pub min_sss: f64,
    pub mean_sss: f64,
    pub drops: usize,
    pub tasks: usize,
}

fn run_grid<P: Sync, R: Send>(
    points: &[P],
    seeds: &[u64],
    job: impl Fn(&P, u64) -> Result<Option<R>> + Sync,
) -> Result<Vec<R>> {
    let cells: Vec<(usize, u64)> = (0..points.len())
        .flat_map(|i| seeds.iter().map(move |&s| (i, s)))
        .collect();
    let results = cells
        .par_iter()
        .map(|&(i, seed)| job(&points[i], seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(results.into_iter().flatten().collect())
}

fn evaluate_point(
    cfg: ScenarioConfig,
    codec: Arc<dyn SemanticCodec>,
    policy: &PolicyChoice,
    heuristic: CentroidHeuristic,
    seed: u64,
) -> Result<Evaluation> {
    let cfg = ScenarioConfig { rng_seed: seed, ..cfg };
    let mut env = UavEnv::with_codec(cfg, codec)?;
    let mut p = policy.build(heuristic)?;
    evaluate(&mut env, p.as_mut(), seed)
}

/// Applies `tau` to `cfg`, clipping arrival rates if asked. `None` means the
/// point is infeasible and skipped.
pub fn scenario_for_tau(cfg: &ScenarioConfig, tau: f64, rule: TauFeasibility) -> Option<ScenarioConfig> {
    let mut c = cfg.clone();
    c.slot_duration = tau;
    let limit = 1.0 / tau;
    if c.arrival_rate_range[1] > limit {
        match rule {
            TauFeasibility::Skip => {
                log::warn!("skipping tau = {tau}: exceeds 1/lambda_max = {}", 1.0 / c.arrival_rate_range[1]);
                return None;
            }
            TauFeasibility::ClipArrivalRates => {
                c.arrival_rate_range[1] = limit;
                c.arrival_rate_range[0] = c.arrival_rate_range[0].min(limit);
                log::info!("tau = {tau}: arrival rates clipped to {:?}", c.arrival_rate_range);
            }
        }
    }
    Some(c)
}

pub fn run_tau_sweep(spec: &ExperimentSpec) -> Result<Vec<TauRow>> {
    run_tau_sweep_with(spec, Arc::new(Surrogate::analytic()))
}

pub fn run_tau_sweep_with(spec: &ExperimentSpec, codec: Arc<dyn SemanticCodec>) -> Result<Vec<TauRow>> {
    spec.validate()?;
    run_grid(&spec.tau_grid, &spec.seeds, |&tau, seed| {
        let Some(cfg) = scenario_for_tau(&spec.scenario, tau, spec.tau_feasibility) else {
            return Ok(None);
        };
        let hash = cfg.config_hash();
        let e = evaluate_point(cfg, codec.clone(), &spec.policy, spec.heuristic, seed)?;
        Ok(Some(TauRow {
            config_hash: hash,
            seed,
            tau,
            avg_aoi: e.summary.avg_aoi,
            min_sss: e.summary.min_sss,
            mean_sss: e.mean_sss,
            drops: e.summary.drops,
            deadline_drops: e.summary.deadline_drops,
            tasks: e.summary.tasks,
            drop_rate: e.drop_rate,
            objective: e.summary.objective,
        }))
    })
}

pub fn run_snr_sweep(spec: &ExperimentSpec) -> Result<Vec<SnrRow>> {
    run_snr_sweep_with(spec, Arc::new(Surrogate::analytic()))
}

/// Scales both noise powers so the mean ground-to-relay SNR at the edge of
/// coverage, relay at top altitude, equals each grid value.
pub fn run_snr_sweep_with(spec: &ExperimentSpec, codec: Arc<dyn SemanticCodec>) -> Result<Vec<SnrRow>> {
    spec.validate()?;
    run_grid(&spec.snr_grid, &spec.seeds, |&snr_db, seed| {
        let cfg = spec.scenario.clone().with_nominal_snr_db(snr_db);
        let hash = cfg.config_hash();
        let e = evaluate_point(cfg, codec.clone(), &spec.policy, spec.heuristic, seed)?;
        Ok(Some(SnrRow {
            config_hash: hash,
            seed,
            snr_db,
            avg_aoi: e.summary.avg_aoi,
            min_sss: e.summary.min_sss,
            mean_sss: e.mean_sss,
            drops: e.summary.drops,
            tasks: e.summary.tasks,
            objective: e.summary.objective,
        }))
    })
}

pub fn run_heatmap(spec: &ExperimentSpec) -> Result<Vec<HeatmapRow>> {
    run_heatmap_with(spec, Arc::new(Surrogate::analytic()))
}

/// Evaluates every (compression, modulation order) pair with the
/// compression held fixed.
pub fn run_heatmap_with(spec: &ExperimentSpec, codec: Arc<dyn SemanticCodec>) -> Result<Vec<HeatmapRow>> {
    spec.validate()?;
    let points: Vec<(u32, u32)> = spec
        .compression_grid
        .iter()
        .flat_map(|&d| spec.order_grid.iter().map(move |&o| (d, o)))
        .collect();
    run_grid(&points, &spec.seeds, |&(d, order), seed| {
        let mut cfg = spec.scenario.clone();
        if let Some(snr) = spec.heatmap_snr_db {
            cfg = cfg.with_nominal_snr_db(snr);
        }
        cfg.modulation_order = order;
        cfg.compression_range = [cfg.compression_range[0].min(d), cfg.compression_range[1].max(d)];
        let hash = cfg.config_hash();
        let heuristic = CentroidHeuristic {
            compression: CompressionRule::Fixed(d),
            ..spec.heuristic
        };
        let e = evaluate_point(cfg.clone(), codec.clone(), &spec.policy, heuristic, seed)?;
        Ok(Some(HeatmapRow {
            config_hash: hash,
            seed,
            compression: d,
            feature_len: semantics::feature_len(cfg.image_dims, d),
            mod_order: order,
            avg_aoi: e.summary.avg_aoi,
            min_sss: e.summary.min_sss,
            mean_sss: e.mean_sss,
            drops: e.summary.drops,
            tasks: e.summary.tasks,
        }))
    })
}

/// Comma-separated table with a header row.
pub fn to_csv<R: Serialize>(rows: &[R]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Per-(slot, user) trace row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuTraceRow {
    pub slot: usize,
    pub gu: usize,
    /// Serving relays joined by `;`.
    pub served_by: String,
    pub compression: u32,
    pub data_bits: f64,
    pub ready_time: f64,
    pub start_time: Option<f64>,
    pub finish_time: Option<f64>,
    pub dropped: bool,
    pub aoi: Option<f64>,
    pub sss: Option<f64>,
    pub min_snr_db: Option<f64>,
    pub freshness_violation: bool,
}

/// Per-(slot, relay) trace row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavTraceRow {
    pub slot: usize,
    pub uav: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub relocation_time: f64,
    pub streams: usize,
    pub state_energy: f64,
    pub comm_energy: f64,
    pub energy_remaining: f64,
    pub collision: bool,
    pub energy_violation: bool,
    pub reward: f64,
}

pub fn gu_trace(history: &[SlotOutcome]) -> Vec<GuTraceRow> {
    history
        .iter()
        .flat_map(|s| {
            s.gus.iter().enumerate().map(move |(m, g)| GuTraceRow {
                slot: s.slot,
                gu: m,
                served_by: g.served_by.iter().map(usize::to_string).collect::<Vec<_>>().join(";"),
                compression: g.compression,
                data_bits: g.data_bits,
                ready_time: g.ready_time,
                start_time: g.start_time,
                finish_time: g.finish_time,
                dropped: matches!(g.outcome, TaskOutcome::Dropped { .. }),
                aoi: g.outcome.aoi(),
                sss: g.sss,
                min_snr_db: g.min_snr_db,
                freshness_violation: g.freshness_violation,
            })
        })
        .collect()
}

pub fn uav_trace(history: &[SlotOutcome]) -> Vec<UavTraceRow> {
    history
        .iter()
        .flat_map(|s| {
            s.uavs.iter().enumerate().map(move |(n, u)| UavTraceRow {
                slot: s.slot,
                uav: n,
                x: u.position[0],
                y: u.position[1],
                z: u.position[2],
                relocation_time: u.relocation_time,
                streams: u.streams,
                state_energy: u.state_energy,
                comm_energy: u.comm_energy,
                energy_remaining: u.energy_remaining,
                collision: s.collision,
                energy_violation: s.energy_violation,
                reward: s.reward.total(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> ExperimentSpec {
        ExperimentSpec {
            scenario: ScenarioConfig {
                num_gus: 6,
                mission_duration: 100.0,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn spec_validation() {
        assert!(quick().validate().is_ok());
        let mut s = quick().with_seeds(3, 2);
        assert_eq!(s.seeds, vec![3, 4]);
        s.seeds = vec![1, 1];
        assert!(s.validate().is_err());
        let s = ExperimentSpec { tau_grid: vec![], ..quick() };
        assert!(s.validate().is_err());
    }

    #[test]
    fn tau_clipping() {
        let cfg = ScenarioConfig::default();
        let c = scenario_for_tau(&cfg, 10.0, TauFeasibility::ClipArrivalRates).unwrap();
        assert_eq!(c.arrival_rate_range, [0.05, 0.1]);
        assert!(c.clone().validated().is_ok());
        let c = scenario_for_tau(&cfg, 40.0, TauFeasibility::ClipArrivalRates).unwrap();
        assert_eq!(c.arrival_rate_range, [0.025, 0.025]);
        assert!(scenario_for_tau(&cfg, 10.0, TauFeasibility::Skip).is_none());
        assert!(scenario_for_tau(&cfg, 5.0, TauFeasibility::Skip).is_some());
    }

    #[test]
    fn row_counts() {
        let spec = quick().with_seeds(0, 2);
        assert_eq!(run_tau_sweep(&spec).unwrap().len(), 8);
        assert_eq!(run_snr_sweep(&spec).unwrap().len(), 10);
        let skip = ExperimentSpec {
            tau_feasibility: TauFeasibility::Skip,
            ..quick()
        };
        assert_eq!(run_tau_sweep(&skip).unwrap().len(), 2);
    }

    #[test]
    fn tables_are_reproducible() {
        let spec = quick();
        let a = to_csv(&run_snr_sweep(&spec).unwrap()).unwrap();
        let b = to_csv(&run_snr_sweep(&spec).unwrap()).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("config_hash,seed,snr_db,"));
    }

    #[test]
    fn trace_has_one_row_per_slot_and_entity() {
        let cfg = quick().scenario;
        let mut env = UavEnv::new(cfg.clone()).unwrap();
        evaluate(&mut env, &mut CentroidHeuristic::default(), 1).unwrap();
        assert_eq!(gu_trace(env.history()).len(), cfg.num_slots() * cfg.num_gus);
        assert_eq!(uav_trace(env.history()).len(), cfg.num_slots() * cfg.num_uavs);
        let csv = to_csv(&gu_trace(env.history())).unwrap();
        assert_eq!(csv.lines().count(), cfg.num_slots() * cfg.num_gus + 1);
    }
}
