//! The slotted relay environment as a Markov decision process.
//!
//! Each call to [`UavEnv::step`] runs one slot: ground users report ready
//! times, relays relocate, serving sets are fixed from coverage, payload
//! shares are normalized over each user's serving set, data is relayed,
//! ages and fidelities are recorded, energy is charged, the reward is
//! computed and fading is redrawn for the next slot.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{self, FadingDraw, LinkBudget};
use crate::config::{DropAoi, RewardMode, ScenarioConfig};
use crate::energy::{self, CommLink, EnergyLedger};
use crate::error::{Error, Result};
use crate::mobility::{self, RelocationCommand};
use crate::objective::{self, AoiTracker, TaskOutcome};
use crate::semantics::{self, SemanticCodec, Surrogate};
use crate::types::{distance3, GroundUser, UavState, WorldState};

/// Interface the learner drives. Observations and actions are flat vectors;
/// actions live in the box given by [`Environment::action_bounds`].
pub trait Environment {
    fn observation_dim(&self) -> usize;
    fn action_bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> Result<EnvStep>;

    /// Mission-level numbers for logging once an episode is done.
    fn episode_summary(&self) -> EpisodeSummary {
        EpisodeSummary::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub avg_aoi: f64,
    pub min_sss: f64,
    pub drops: usize,
    /// Drops among tasks that had a serving relay.
    pub deadline_drops: usize,
    pub tasks: usize,
    /// Slots with a separation violation.
    pub collisions: usize,
    /// Slots in which some relay was over budget.
    pub energy_violations: usize,
    pub objective: f64,
}

/// Joint control for one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointAction {
    pub relocation: Vec<RelocationCommand>,
    /// Raw payload shares, indexed `[uav][gu]`, each in `[0, 1]`.
    pub proportions: Vec<Vec<f64>>,
    /// Raw compression in `[0, 1]`; one global value or one per ground user.
    pub compression: Vec<f64>,
}

impl JointAction {
    fn compression_dim(cfg: &ScenarioConfig) -> usize {
        if cfg.per_gu_compression {
            cfg.num_gus
        } else {
            1
        }
    }

    /// `3N + N*M + 1` (or `+ M` with per-user compression).
    pub fn dim(cfg: &ScenarioConfig) -> usize {
        3 * cfg.num_uavs + cfg.num_uavs * cfg.num_gus + Self::compression_dim(cfg)
    }

    pub fn bounds(cfg: &ScenarioConfig) -> (Vec<f64>, Vec<f64>) {
        let mut lo = Vec::with_capacity(Self::dim(cfg));
        let mut hi = Vec::with_capacity(Self::dim(cfg));
        for _ in 0..cfg.num_uavs {
            lo.extend([0.0, 0.0, 0.0]);
            hi.extend([
                std::f64::consts::PI,
                std::f64::consts::TAU,
                cfg.uav_speed_max * cfg.slot_duration,
            ]);
        }
        let rest = Self::dim(cfg) - 3 * cfg.num_uavs;
        lo.extend(std::iter::repeat_n(0.0, rest));
        hi.extend(std::iter::repeat_n(1.0, rest));
        (lo, hi)
    }

    pub fn from_flat(cfg: &ScenarioConfig, flat: &[f64]) -> Result<Self> {
        let dim = Self::dim(cfg);
        if flat.len() != dim {
            return Err(Error::Shape {
                expected: dim,
                got: flat.len(),
            });
        }
        let (n, m) = (cfg.num_uavs, cfg.num_gus);
        let relocation = flat[..3 * n]
            .chunks(3)
            .map(|c| RelocationCommand {
                elevation: c[0],
                azimuth: c[1],
                distance: c[2],
            })
            .collect();
        let proportions = flat[3 * n..3 * n + n * m].chunks(m).map(<[f64]>::to_vec).collect();
        let compression = flat[3 * n + n * m..].to_vec();
        Ok(Self {
            relocation,
            proportions,
            compression,
        })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for r in &self.relocation {
            out.extend([r.elevation, r.azimuth, r.distance]);
        }
        for row in &self.proportions {
            out.extend(row);
        }
        out.extend(&self.compression);
        out
    }

    fn check(&self, cfg: &ScenarioConfig) -> Result<()> {
        let shape_ok = self.relocation.len() == cfg.num_uavs
            && self.proportions.len() == cfg.num_uavs
            && self.proportions.iter().all(|r| r.len() == cfg.num_gus)
            && self.compression.len() == Self::compression_dim(cfg);
        if shape_ok {
            Ok(())
        } else {
            Err(Error::Shape {
                expected: Self::dim(cfg),
                got: self.to_flat().len(),
            })
        }
    }
}

/// Maps a raw compression value in `[0, 1]` to an integer factor.
pub fn compression_factor(raw: f64, range: [u32; 2]) -> u32 {
    let [lo, hi] = range;
    let raw = if raw.is_nan() { 0.0 } else { raw.clamp(0.0, 1.0) };
    (f64::from(lo) + raw * f64::from(hi - lo)).round() as u32
}

/// Inverse of [`compression_factor`] at the centre of each bucket.
pub fn raw_compression(d: u32, range: [u32; 2]) -> f64 {
    let [lo, hi] = range;
    if hi == lo {
        0.0
    } else {
        (f64::from(d.clamp(lo, hi) - lo) / f64::from(hi - lo)).clamp(0.0, 1.0)
    }
}

/// Reward terms of one slot; the reward is exactly their sum.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub sss: f64,
    pub aoi: f64,
    pub collision: f64,
    pub energy: f64,
    pub freshness: f64,
    pub terminal: f64,
}

impl RewardBreakdown {
    pub fn total(&self) -> f64 {
        self.sss + self.aoi + self.collision + self.energy + self.freshness + self.terminal
    }

    /// Per-slot shaping: `beta * min_sss - avg_aoi / tau`.
    pub fn shaping(min_sss: f64, avg_aoi: f64, tau: f64, beta: f64) -> Self {
        Self {
            sss: beta * min_sss,
            aoi: -avg_aoi / tau,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuSlotRecord {
    pub served_by: Vec<usize>,
    /// Normalized share per relay (zero for relays not serving this user).
    pub proportions: Vec<f64>,
    pub compression: u32,
    pub data_bits: f64,
    pub ready_time: f64,
    /// `None` when no relay serves the user.
    pub start_time: Option<f64>,
    /// Time the last share arrives; infinite if some share has zero rate.
    pub finish_time: Option<f64>,
    pub outcome: TaskOutcome,
    /// AoI entering the averages (the drop substitute for dropped tasks).
    pub counted_aoi: Option<f64>,
    pub sss: Option<f64>,
    pub min_snr_db: Option<f64>,
    pub links: Vec<(usize, LinkBudget)>,
    pub freshness_violation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavSlotRecord {
    pub position: [f64; 3],
    pub relocation_time: f64,
    pub streams: usize,
    pub state_energy: f64,
    pub comm_energy: f64,
    pub energy_remaining: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotOutcome {
    /// 1-based slot index.
    pub slot: usize,
    /// Earliest transmission time: slot start plus the longest relocation.
    pub relocation_end: f64,
    pub gus: Vec<GuSlotRecord>,
    pub uavs: Vec<UavSlotRecord>,
    pub collision: bool,
    pub energy_violation: bool,
    pub min_sss: f64,
    pub reward: RewardBreakdown,
}

impl SlotOutcome {
    pub fn drops(&self) -> usize {
        self.gus.iter().filter(|g| g.outcome.is_dropped()).count()
    }
}

#[derive(Debug, Clone, Copy)]
enum Stream {
    Init = 1,
    Ready = 2,
    Mobility = 3,
    Fading = 4,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for one `(stream, slot, index)` cell of a run.
fn stream_rng(seed: u64, stream: Stream, slot: usize, index: usize) -> ChaCha8Rng {
    let mut h = splitmix(seed);
    for part in [stream as u64, slot as u64, index as u64] {
        h = splitmix(h ^ part);
    }
    ChaCha8Rng::seed_from_u64(h)
}

pub struct UavEnv {
    cfg: ScenarioConfig,
    codec: Arc<dyn SemanticCodec>,
    seed: u64,
    world: WorldState,
    ledger: EnergyLedger,
    tracker: AoiTracker,
    history: Vec<SlotOutcome>,
    mission_min_sss: Option<f64>,
    collision_slots: usize,
    energy_slots: usize,
    done: bool,
}

impl UavEnv {
    /// Builds an environment using the analytic fidelity surrogate.
    pub fn new(cfg: ScenarioConfig) -> Result<Self> {
        Self::with_codec(cfg, Arc::new(Surrogate::analytic()))
    }

    pub fn with_codec(cfg: ScenarioConfig, codec: Arc<dyn SemanticCodec>) -> Result<Self> {
        let cfg = cfg.validated()?;
        let seed = cfg.rng_seed;
        let mut env = Self {
            ledger: EnergyLedger::new(cfg.num_uavs),
            world: WorldState {
                slot: 0,
                gus: Vec::new(),
                uavs: Vec::new(),
                fading: FadingDraw::default(),
                uav_path_samples: Vec::new(),
            },
            cfg,
            codec,
            seed,
            tracker: AoiTracker::new(),
            history: Vec::new(),
            mission_min_sss: None,
            collision_slots: 0,
            energy_slots: 0,
            done: false,
        };
        env.reset_world(seed);
        Ok(env)
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn ledger(&self) -> &EnergyLedger {
        &self.ledger
    }

    pub fn tracker(&self) -> &AoiTracker {
        &self.tracker
    }

    pub fn history(&self) -> &[SlotOutcome] {
        &self.history
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn codec(&self) -> &Arc<dyn SemanticCodec> {
        &self.codec
    }

    /// Length of [`UavEnv::observation`]: `3N + 5M + N + N*M + N`.
    pub fn observation_len(cfg: &ScenarioConfig) -> usize {
        let (n, m) = (cfg.num_uavs, cfg.num_gus);
        3 * n + 5 * m + n + n * m + n
    }

    fn drop_substitute(&self) -> Option<f64> {
        match self.cfg.drop_aoi {
            DropAoi::SlotLength => Some(self.cfg.slot_duration),
            DropAoi::Exclude => None,
        }
    }

    fn draw_fading(&self, slot: usize) -> FadingDraw {
        let (m, n) = (self.cfg.num_gus, self.cfg.num_uavs);
        let draw = |index: usize| {
            let mut rng = stream_rng(self.seed, Stream::Fading, slot, index);
            channel::sample_nakagami(self.cfg.nakagami_shape, self.cfg.nakagami_spread, &mut rng)
                .expect("validated fading parameters")
        };
        FadingDraw {
            h_gu: (0..m).map(|g| (0..n).map(|u| draw(g * n + u)).collect()).collect(),
            h_cs: (0..n).map(|u| draw(m * n + u)).collect(),
        }
    }

    fn reset_world(&mut self, seed: u64) {
        self.seed = seed;
        let cfg = &self.cfg;
        let a = cfg.area_half_width;
        let mut rng = stream_rng(seed, Stream::Init, 0, 0);
        let initial_bits = semantics::data_size(cfg.image_dims, cfg.compression_range[0]) as f64;
        let gus = (0..cfg.num_gus)
            .map(|id| {
                let position = [rng.random_range(-a..=a), rng.random_range(-a..=a)];
                let wp = [rng.random_range(-a..=a), rng.random_range(-a..=a)];
                let speed = mobility::sample_speed(cfg.gu_speed_range, &mut rng);
                let [l_lo, l_hi] = cfg.arrival_rate_range;
                let arrival_rate = if l_hi > l_lo { rng.random_range(l_lo..=l_hi) } else { l_lo };
                GroundUser {
                    id,
                    position,
                    speed,
                    heading: (wp[1] - position[1]).atan2(wp[0] - position[0]),
                    leg_remaining: crate::types::distance2(wp, position),
                    arrival_rate,
                    ready_time: 0.0,
                    data_size: initial_bits,
                    last_completion: None,
                }
            })
            .collect();
        let [z_lo, z_hi] = cfg.uav_altitude_range;
        let uavs: Vec<UavState> = (0..cfg.num_uavs)
            .map(|id| UavState {
                id,
                position: [
                    rng.random_range(-a..=a),
                    rng.random_range(-a..=a),
                    if z_hi > z_lo { rng.random_range(z_lo..=z_hi) } else { z_lo },
                ],
                energy_remaining: cfg.energy_budget,
                relocation_time: 0.0,
            })
            .collect();
        let samples = uavs.iter().map(|u| [u.position; 3]).collect();
        self.world = WorldState {
            slot: 0,
            gus,
            uavs,
            fading: FadingDraw::default(),
            uav_path_samples: samples,
        };
        self.world.fading = self.draw_fading(1);
        self.ledger = EnergyLedger::new(self.cfg.num_uavs);
        self.tracker = AoiTracker::new();
        self.history.clear();
        self.mission_min_sss = None;
        self.collision_slots = 0;
        self.energy_slots = 0;
        self.done = false;
    }

    /// Restarts the mission with `seed` and returns the first observation.
    pub fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.reset_world(seed);
        self.observation()
    }

    /// Normalized flat state: relay positions, user position/speed/payload/
    /// arrival rate, relay energy fractions, `|h_gu|` per (user, relay) and
    /// `|h_cs|` per relay.
    pub fn observation(&self) -> Vec<f64> {
        let cfg = &self.cfg;
        let a = cfg.area_half_width;
        let z_max = cfg.uav_altitude_range[1];
        let v_max = cfg.gu_speed_range[1].max(1e-9);
        let l_max = cfg.arrival_rate_range[1];
        let d_orig = cfg.original_bits() as f64;
        let mut obs = Vec::with_capacity(Self::observation_len(cfg));
        for u in &self.world.uavs {
            obs.extend([u.position[0] / a, u.position[1] / a, u.position[2] / z_max]);
        }
        for g in &self.world.gus {
            obs.extend([
                g.position[0] / a,
                g.position[1] / a,
                g.speed / v_max,
                g.data_size / d_orig,
                g.arrival_rate / l_max,
            ]);
        }
        for n in 0..cfg.num_uavs {
            obs.push(self.ledger.remaining(n, cfg.energy_budget) / cfg.energy_budget);
        }
        for row in &self.world.fading.h_gu {
            obs.extend(row.iter().map(|h| h.norm()));
        }
        obs.extend(self.world.fading.h_cs.iter().map(|h| h.norm()));
        obs
    }

    pub fn step_flat(&mut self, flat: &[f64]) -> Result<(Vec<f64>, f64, bool, SlotOutcome)> {
        let action = JointAction::from_flat(&self.cfg, flat)?;
        self.step(&action)
    }

    /// Runs one slot.
    pub fn step(&mut self, action: &JointAction) -> Result<(Vec<f64>, f64, bool, SlotOutcome)> {
        if self.done {
            return Err(Error::Protocol("step after mission end".into()));
        }
        action.check(&self.cfg)?;
        let cfg = self.cfg.clone();
        let (num_gus, num_uavs) = (cfg.num_gus, cfg.num_uavs);
        let tau = cfg.slot_duration;
        let k = self.world.slot + 1;
        let slot_start = (k - 1) as f64 * tau;

        // (1) ready times
        let ready: Vec<f64> = (0..num_gus)
            .map(|m| {
                let mut rng = stream_rng(self.seed, Stream::Ready, k, m);
                slot_start + rng.random::<f64>() * cfg.ready_window_fraction * tau
            })
            .collect();

        // (2) relocation
        let mut samples = Vec::with_capacity(num_uavs);
        let mut moved = Vec::with_capacity(num_uavs);
        for (uav, cmd) in self.world.uavs.iter().zip(&action.relocation) {
            let (next, t_move) = mobility::relocate_uav(uav, cmd, &cfg);
            let s = uav.position;
            let e = next.position;
            let mid = [(s[0] + e[0]) / 2.0, (s[1] + e[1]) / 2.0, (s[2] + e[2]) / 2.0];
            samples.push([s, mid, e]);
            moved.push((next, t_move));
        }
        let max_move = moved.iter().map(|(_, t)| *t).fold(0.0, f64::max);
        let relocation_end = slot_start + max_move;

        // (3) serving sets
        let served: Vec<Vec<bool>> = self
            .world
            .gus
            .iter()
            .map(|g| {
                moved
                    .iter()
                    .map(|(u, _)| mobility::is_served(g, u, tau, cfg.coverage_angle))
                    .collect()
            })
            .collect();
        let streams: Vec<usize> = (0..num_uavs)
            .map(|n| served.iter().filter(|row| row[n]).count())
            .collect();

        // (4) shares
        let shares: Vec<Vec<f64>> = (0..num_gus)
            .map(|m| {
                let raw: Vec<f64> = (0..num_uavs)
                    .map(|n| {
                        if served[m][n] {
                            let r = action.proportions[n][m];
                            if r.is_finite() { r.clamp(0.0, 1.0) } else { 0.0 }
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let count = served[m].iter().filter(|&&s| s).count();
                let total: f64 = raw.iter().sum();
                (0..num_uavs)
                    .map(|n| {
                        if !served[m][n] {
                            0.0
                        } else if total > 0.0 {
                            raw[n] / total
                        } else {
                            1.0 / count as f64
                        }
                    })
                    .collect()
            })
            .collect();

        // (5) compression
        let compression: Vec<u32> = (0..num_gus)
            .map(|m| {
                let raw = if cfg.per_gu_compression { action.compression[m] } else { action.compression[0] };
                compression_factor(raw, cfg.compression_range)
            })
            .collect();

        // (6)-(7) transmission, ages, fidelity
        let substitute = self.drop_substitute();
        let mut comm = vec![0.0; num_uavs];
        let mut records = Vec::with_capacity(num_gus);
        for m in 0..num_gus {
            let gu = &self.world.gus[m];
            let d = compression[m];
            let bits = semantics::data_size(cfg.image_dims, d) as f64;
            let serving: Vec<usize> = (0..num_uavs).filter(|&n| served[m][n]).collect();
            let mut links = Vec::new();
            let mut longest: f64 = 0.0;
            for &n in &serving {
                let uav = &moved[n].0;
                let gu3 = [gu.position[0], gu.position[1], 0.0];
                let dist = distance3(gu3, uav.position);
                let h_gu = self.world.fading.h_gu[m][n];
                let h_cs = self.world.fading.h_cs[n];
                let gain = channel::af_gain(h_gu, dist, cfg.path_loss_exp, cfg.uav_tx_power, streams[n], cfg.noise_power_uav)?;
                let snr = channel::end_to_end_snr(h_gu, h_cs, gain, dist, cfg.path_loss_exp, cfg.noise_power_uav, cfg.noise_power_cs);
                let shannon = channel::shannon_rate(snr, cfg.uplink_bandwidth, streams[n]);
                let rate = channel::modulation_limited_rate(shannon, cfg.uplink_bandwidth, streams[n], cfg.modulation_order);
                let theta = channel::doppler_angle(gu.velocity(), gu.position, uav.position);
                let doppler = channel::doppler_shift(gu.speed, cfg.carrier_freq, theta);
                let share = shares[m][n];
                if share > 0.0 {
                    let t = if rate > 0.0 { share * bits / rate } else { f64::INFINITY };
                    longest = longest.max(t);
                }
                let link = CommLink {
                    h_gu,
                    distance: dist,
                    path_loss_exp: cfg.path_loss_exp,
                    bandwidth: cfg.uplink_bandwidth,
                    streams: streams[n],
                    tx_power: cfg.uav_tx_power,
                    noise_uav: cfg.noise_power_uav,
                };
                // A zero-rate share never completes; its energy is not charged.
                if let Ok(e) = energy::comm_energy(&link, share, bits) {
                    comm[n] += e.total();
                }
                links.push((
                    n,
                    LinkBudget {
                        distance: dist,
                        doppler,
                        af_gain: gain,
                        rate,
                        end_to_end_snr: snr,
                    },
                ));
            }

            let ready_m = ready[m];
            let (start, finish, outcome) = if serving.is_empty() {
                (None, None, TaskOutcome::Dropped { ready: ready_m })
            } else {
                let start = relocation_end.max(ready_m);
                let finish = start + longest;
                (Some(start), Some(finish), objective::record_completion(k, ready_m, finish, tau)?)
            };
            debug_assert!(start.is_none_or(|s| s >= relocation_end && s >= ready_m));

            let min_snr_db = links
                .iter()
                .filter(|(n, _)| shares[m][*n] > 0.0)
                .map(|(_, l)| 10.0 * l.end_to_end_snr.log10())
                .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.min(x))));
            // Scored on every delivered task, late or not.
            let delivered = finish.is_some_and(f64::is_finite);
            let sss = match (delivered, min_snr_db) {
                (true, Some(snr_db)) => {
                    let len = semantics::feature_len(cfg.image_dims, d);
                    Some(self.codec.predict(d, snr_db, cfg.modulation_order, len).sss(cfg.sss_weight))
                }
                _ => None,
            };
            let freshness_violation = match outcome.aoi() {
                Some(aoi) => aoi > 1.0 / gu.arrival_rate,
                None => true,
            };
            records.push(GuSlotRecord {
                served_by: serving,
                proportions: shares[m].clone(),
                compression: d,
                data_bits: bits,
                ready_time: ready_m,
                start_time: start,
                finish_time: finish,
                outcome,
                counted_aoi: outcome.aoi().or(substitute),
                sss,
                min_snr_db,
                links,
                freshness_violation,
            });
        }

        // (8) energy
        let mut uav_records = Vec::with_capacity(num_uavs);
        for (n, (next, t_move)) in moved.iter().enumerate() {
            let v = if *t_move > 0.0 { cfg.uav_speed_max } else { 0.0 };
            let state = energy::slot_state_energy(*t_move, tau, v, &cfg.rotor);
            self.ledger.charge(n, state, comm[n]);
            uav_records.push(UavSlotRecord {
                position: next.position,
                relocation_time: *t_move,
                streams: streams[n],
                state_energy: state,
                comm_energy: comm[n],
                energy_remaining: self.ledger.remaining(n, cfg.energy_budget),
            });
        }
        self.world.uavs = moved
            .into_iter()
            .enumerate()
            .map(|(n, (mut u, _))| {
                u.energy_remaining = self.ledger.remaining(n, cfg.energy_budget);
                u
            })
            .collect();
        self.world.uav_path_samples = samples;

        // (9) constraints and reward
        let outcomes: Vec<TaskOutcome> = records.iter().map(|r| r.outcome).collect();
        self.tracker.push_slot(outcomes.clone());
        let report = objective::check_constraints(&self.world, &self.ledger, &self.tracker, &cfg);
        let collision = report.collision();
        let energy_violation = report.energy();
        self.collision_slots += usize::from(collision);
        self.energy_slots += usize::from(energy_violation);

        let slot_min_sss = records.iter().filter_map(|r| r.sss).fold(None, |acc: Option<f64>, x| {
            Some(acc.map_or(x, |a| a.min(x)))
        });
        if let Some(s) = slot_min_sss {
            self.mission_min_sss = Some(self.mission_min_sss.map_or(s, |a| a.min(s)));
        }
        let slot_aoi = objective::slot_average_aoi(&outcomes, substitute).unwrap_or(0.0);
        let [eta1, eta2, eta3] = cfg.penalties;
        let beta = cfg.objective_weight;
        let mut reward = RewardBreakdown {
            collision: if collision { -eta1 } else { 0.0 },
            energy: if energy_violation { -eta2 } else { 0.0 },
            freshness: -eta3
                * report
                    .c3_violations
                    .iter()
                    .map(|&m| 1.0 / self.world.gus[m].arrival_rate)
                    .sum::<f64>(),
            ..Default::default()
        };
        if cfg.reward_mode == RewardMode::Dense {
            let shaping = RewardBreakdown::shaping(slot_min_sss.unwrap_or(0.0), slot_aoi, tau, beta);
            reward.sss = shaping.sss;
            reward.aoi = shaping.aoi;
        }
        let last = k >= cfg.num_slots();
        if last {
            reward.terminal = beta * self.mission_min_sss.unwrap_or(0.0)
                - objective::mission_average_aoi(&self.tracker, substitute);
        }

        // (10) advance users and fading
        for (m, gu) in self.world.gus.iter_mut().enumerate() {
            gu.ready_time = ready[m];
            gu.data_size = records[m].data_bits;
            if let TaskOutcome::Completed { done, .. } = records[m].outcome {
                gu.last_completion = Some(done);
            }
            let mut rng = stream_rng(self.seed, Stream::Mobility, k, m);
            *gu = mobility::step_gu(gu, tau, cfg.area_half_width, cfg.gu_speed_range, &mut rng);
        }
        self.world.slot = k;
        self.world.fading = self.draw_fading(k + 1);
        self.done = last;

        let outcome = SlotOutcome {
            slot: k,
            relocation_end,
            gus: records,
            uavs: uav_records,
            collision,
            energy_violation,
            min_sss: slot_min_sss.unwrap_or(0.0),
            reward,
        };
        self.history.push(outcome.clone());
        Ok((self.observation(), reward.total(), self.done, outcome))
    }

    /// Mission-level metrics so far.
    pub fn summary(&self) -> EpisodeSummary {
        let avg_aoi = objective::mission_average_aoi(&self.tracker, self.drop_substitute());
        let min_sss = self.mission_min_sss.unwrap_or(0.0);
        EpisodeSummary {
            avg_aoi,
            min_sss,
            drops: self.tracker.num_drops(),
            deadline_drops: self
                .history
                .iter()
                .flat_map(|o| &o.gus)
                .filter(|g| !g.served_by.is_empty() && g.outcome.aoi().is_none())
                .count(),
            tasks: self.tracker.num_tasks(),
            collisions: self.collision_slots,
            energy_violations: self.energy_slots,
            objective: objective::objective_value(avg_aoi, min_sss, self.cfg.objective_weight),
        }
    }
}

impl Environment for UavEnv {
    fn observation_dim(&self) -> usize {
        Self::observation_len(&self.cfg)
    }

    fn action_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        JointAction::bounds(&self.cfg)
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        UavEnv::reset(self, seed)
    }

    fn step(&mut self, action: &[f64]) -> Result<EnvStep> {
        let (observation, reward, done, _) = self.step_flat(action)?;
        Ok(EnvStep {
            observation,
            reward,
            done,
        })
    }

    fn episode_summary(&self) -> EpisodeSummary {
        self.summary()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ScenarioConfig {
        ScenarioConfig {
            num_gus: 4,
            num_uavs: 2,
            mission_duration: 50.0,
            rng_seed: 11,
            ..Default::default()
        }
    }

    fn hover(cfg: &ScenarioConfig) -> JointAction {
        JointAction {
            relocation: vec![RelocationCommand::default(); cfg.num_uavs],
            proportions: vec![vec![1.0; cfg.num_gus]; cfg.num_uavs],
            compression: vec![0.0],
        }
    }

    #[test]
    fn observation_length() {
        let cfg = ScenarioConfig::default();
        assert_eq!(UavEnv::observation_len(&cfg), 150);
        let env = UavEnv::new(cfg).unwrap();
        assert_eq!(env.observation().len(), 150);
        assert_eq!(JointAction::dim(env.config()), 47);
    }

    #[test]
    fn reset_is_deterministic_and_in_area() {
        let mut env = UavEnv::new(ScenarioConfig::default()).unwrap();
        let a = env.reset(5);
        let b = env.reset(5);
        assert_eq!(a, b);
        assert_ne!(a, env.reset(6));
        for g in &env.world().gus {
            assert!(g.position.iter().all(|c| c.abs() <= 1000.0));
        }
        for u in &env.world().uavs {
            assert!((100.0..=150.0).contains(&u.position[2]));
        }
    }

    #[test]
    fn flat_round_trip() {
        let cfg = small_cfg();
        let flat: Vec<f64> = (0..JointAction::dim(&cfg)).map(|i| i as f64 * 0.01).collect();
        let a = JointAction::from_flat(&cfg, &flat).unwrap();
        assert_eq!(a.to_flat(), flat);
        assert!(matches!(JointAction::from_flat(&cfg, &flat[1..]), Err(Error::Shape { .. })));
    }

    #[test]
    fn compression_mapping() {
        assert_eq!(compression_factor(0.0, [1, 4]), 1);
        assert_eq!(compression_factor(1.0, [1, 4]), 4);
        assert_eq!(compression_factor(0.5, [1, 4]), 3);
        for d in 1..=4 {
            assert_eq!(compression_factor(raw_compression(d, [1, 4]), [1, 4]), d);
        }
    }

    #[test]
    fn mission_runs_to_completion() {
        let cfg = small_cfg();
        let mut env = UavEnv::new(cfg.clone()).unwrap();
        let mut steps = 0;
        loop {
            let (obs, r, done, out) = env.step(&hover(&cfg)).unwrap();
            assert!(r.is_finite());
            assert_eq!(obs.len(), UavEnv::observation_len(&cfg));
            assert_eq!(r, out.reward.total());
            steps += 1;
            if done {
                break;
            }
        }
        assert_eq!(steps, 10);
        assert!(env.step(&hover(&cfg)).is_err());
    }

    #[test]
    fn wrong_shape_is_rejected() {
        let cfg = small_cfg();
        let mut env = UavEnv::new(cfg.clone()).unwrap();
        let mut a = hover(&cfg);
        a.compression = vec![0.0, 0.0];
        assert!(matches!(env.step(&a), Err(Error::Shape { .. })));
    }
}
