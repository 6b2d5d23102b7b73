//! Scenario configuration and its consistency checks.
//!
//! The on-disk form is TOML whose keys are exactly the field names of
//! [`ScenarioConfig`]. Units: meters, seconds, watts, hertz, joules, radians.
//! Missing keys fall back to [`ScenarioConfig::default`], which holds the
//! reference scenario (20 ground users, 2 relays, 2 km x 2 km area).

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Rotary-wing propulsion constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotorConstants {
    /// Blade profile power coefficient (W).
    pub c1: f64,
    /// Induced power coefficient (W).
    pub c2: f64,
    /// Parasite drag coefficient (kg/m).
    pub c3: f64,
    /// Rotor blade tip speed (m/s).
    pub v_tip: f64,
    /// Mean induced velocity in hover (m/s).
    pub v0: f64,
}

impl Default for RotorConstants {
    fn default() -> Self {
        Self {
            c1: 70.0,
            c2: 50.0,
            c3: 0.009,
            v_tip: 120.0,
            v0: 4.03,
        }
    }
}

/// Per-slot reward shaping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Shaped reward every slot plus the mission reward at the end.
    #[default]
    Dense,
    /// Penalties every slot, mission reward only at the end.
    Sparse,
}

/// What a dropped task contributes to the mission-average AoI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DropAoi {
    /// Dropped tasks count as one full slot of age.
    #[default]
    SlotLength,
    /// Dropped tasks are left out of the average.
    Exclude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// The operating area is `[-a, a] x [-a, a]`.
    pub area_half_width: f64,
    pub num_gus: usize,
    pub num_uavs: usize,
    pub uav_altitude_range: [f64; 2],
    pub gu_speed_range: [f64; 2],
    pub uav_speed_max: f64,
    /// Image arrival rate per ground user (images/s).
    pub arrival_rate_range: [f64; 2],
    pub compression_range: [u32; 2],
    pub mission_duration: f64,
    pub slot_duration: f64,
    pub hover_power: f64,
    pub nakagami_shape: f64,
    pub nakagami_spread: f64,
    pub carrier_freq: f64,
    pub path_loss_exp: f64,
    pub uav_tx_power: f64,
    pub noise_power_uav: f64,
    pub noise_power_cs: f64,
    pub uplink_bandwidth: f64,
    /// Channels, height, width.
    pub image_dims: [usize; 3],
    pub coverage_angle: f64,
    pub min_separation: f64,
    pub energy_budget: f64,
    pub sss_weight: f64,
    pub objective_weight: f64,
    /// Collision, energy and AoI-violation penalty weights.
    pub penalties: [f64; 3],
    pub rotor: RotorConstants,
    pub modulation_order: u32,
    pub rng_seed: u64,
    /// Ready times are drawn uniformly in the first `fraction * tau` of a slot.
    pub ready_window_fraction: f64,
    pub reward_mode: RewardMode,
    pub drop_aoi: DropAoi,
    /// One compression factor per ground user instead of a global one.
    pub per_gu_compression: bool,
}

pub const MODULATION_ORDERS: [u32; 4] = [4, 16, 64, 256];

/// Converts a power in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            area_half_width: 1000.0,
            num_gus: 20,
            num_uavs: 2,
            uav_altitude_range: [100.0, 150.0],
            gu_speed_range: [0.3, 1.5],
            uav_speed_max: 15.0,
            arrival_rate_range: [0.05, 0.2],
            compression_range: [1, 4],
            mission_duration: 1000.0,
            slot_duration: 5.0,
            hover_power: 120.0,
            nakagami_shape: 2.0,
            nakagami_spread: 1.0,
            carrier_freq: 2.4e9,
            path_loss_exp: 2.7,
            uav_tx_power: 0.2,
            noise_power_uav: dbm_to_watts(-105.0),
            noise_power_cs: dbm_to_watts(-105.0),
            uplink_bandwidth: 10e6,
            image_dims: [3, 375, 1242],
            coverage_angle: std::f64::consts::FRAC_PI_3,
            min_separation: 10.0,
            energy_budget: 2.0e5,
            sss_weight: 0.5,
            objective_weight: 5.0,
            penalties: [10.0, 10.0, 1.0],
            rotor: RotorConstants::default(),
            modulation_order: 16,
            rng_seed: 0,
            ready_window_fraction: 0.2,
            reward_mode: RewardMode::Dense,
            drop_aoi: DropAoi::SlotLength,
            per_gu_compression: false,
        }
    }
}

/// One failed consistency rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

/// Checks every scenario invariant and returns the violated ones.
///
/// Total over finite inputs: problems are reported, never raised.
pub fn validate_config(cfg: &ScenarioConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut check = |ok: bool, field: &'static str, rule: &str| {
        if !ok {
            out.push(Violation {
                field,
                rule: rule.to_string(),
            });
        }
    };

    check(cfg.area_half_width > 0.0, "area_half_width", "must be positive");
    check(cfg.num_gus >= 1, "num_gus", "need at least one ground user");
    check(cfg.num_uavs >= 1, "num_uavs", "need at least one UAV");

    let [z_min, z_max] = cfg.uav_altitude_range;
    check(z_min > 0.0, "uav_altitude_range", "z_min must be positive");
    check(z_min <= z_max, "uav_altitude_range", "z_min must not exceed z_max");

    let [v_lo, v_hi] = cfg.gu_speed_range;
    check(v_lo >= 0.0, "gu_speed_range", "speeds must be nonnegative");
    check(v_lo <= v_hi, "gu_speed_range", "lower bound exceeds upper bound");
    check(cfg.uav_speed_max > 0.0, "uav_speed_max", "must be positive");

    let [l_lo, l_hi] = cfg.arrival_rate_range;
    check(l_lo > 0.0, "arrival_rate_range", "rates must be positive");
    check(l_lo <= l_hi, "arrival_rate_range", "lower bound exceeds upper bound");
    check(
        l_hi <= 0.0 || cfg.slot_duration <= 1.0 / l_hi,
        "slot_duration",
        "slot exceeds min inter-arrival",
    );

    let [d_min, d_max] = cfg.compression_range;
    check(d_min >= 1, "compression_range", "d_min must be at least 1");
    check(d_min <= d_max, "compression_range", "d_min exceeds d_max");
    // 2^(2d) must stay representable.
    check(d_max <= 15, "compression_range", "d_max must be at most 15");

    check(cfg.slot_duration > 0.0, "slot_duration", "must be positive");
    check(
        cfg.mission_duration >= cfg.slot_duration,
        "mission_duration",
        "must cover at least one slot",
    );
    check(cfg.hover_power > 0.0, "hover_power", "must be positive");
    check(cfg.nakagami_shape >= 0.5, "nakagami_shape", "must be at least 0.5");
    check(cfg.nakagami_spread > 0.0, "nakagami_spread", "must be positive");
    check(cfg.carrier_freq > 0.0, "carrier_freq", "must be positive");
    check(cfg.path_loss_exp > 0.0, "path_loss_exp", "must be positive");
    check(cfg.uav_tx_power > 0.0, "uav_tx_power", "must be positive");
    check(cfg.noise_power_uav > 0.0, "noise_power_uav", "must be positive");
    check(cfg.noise_power_cs > 0.0, "noise_power_cs", "must be positive");
    check(cfg.uplink_bandwidth > 0.0, "uplink_bandwidth", "must be positive");
    check(
        cfg.image_dims.iter().all(|&x| x > 0),
        "image_dims",
        "all dimensions must be positive",
    );
    check(
        cfg.coverage_angle > 0.0 && cfg.coverage_angle < std::f64::consts::FRAC_PI_2,
        "coverage_angle",
        "must lie in (0, pi/2)",
    );
    check(cfg.min_separation >= 0.0, "min_separation", "must be nonnegative");
    check(cfg.energy_budget > 0.0, "energy_budget", "must be positive");
    check(
        (0.0..=1.0).contains(&cfg.sss_weight),
        "sss_weight",
        "must lie in [0, 1]",
    );
    check(cfg.objective_weight > 0.0, "objective_weight", "must be positive");
    check(
        cfg.penalties.iter().all(|&p| p >= 0.0),
        "penalties",
        "must be nonnegative",
    );

    let r = &cfg.rotor;
    check(
        r.c1 > 0.0 && r.c2 > 0.0 && r.c3 >= 0.0 && r.v_tip > 0.0 && r.v0 > 0.0,
        "rotor",
        "rotor constants must be positive",
    );
    check(
        (r.c1 + r.c2 - cfg.hover_power).abs() <= 1e-9 * cfg.hover_power.abs().max(1.0),
        "rotor",
        "c1+c2 != hover power",
    );
    check(
        MODULATION_ORDERS.contains(&cfg.modulation_order),
        "modulation_order",
        "must be one of 4, 16, 64, 256",
    );
    check(
        (0.0..=1.0).contains(&cfg.ready_window_fraction),
        "ready_window_fraction",
        "must lie in [0, 1]",
    );
    out
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config always serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml_string())?;
        Ok(())
    }

    /// Fails with every violation joined into one message.
    pub fn validated(self) -> Result<Self> {
        let v = validate_config(&self);
        if v.is_empty() {
            Ok(self)
        } else {
            let msg = v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ");
            Err(Error::Config(msg))
        }
    }

    /// Number of slots `K = floor(T / tau)`.
    pub fn num_slots(&self) -> usize {
        // Guard against 1000/5 landing a hair below 200.
        ((self.mission_duration / self.slot_duration) + 1e-9).floor() as usize
    }

    /// Uncompressed image size `8*C*H*W` in bits.
    pub fn original_bits(&self) -> u64 {
        let [c, h, w] = self.image_dims;
        8 * (c as u64) * (h as u64) * (w as u64)
    }

    /// Propulsion power at zero speed.
    pub fn rotor_hover_power(&self) -> f64 {
        self.rotor.c1 + self.rotor.c2
    }

    /// Sets both receiver noise powers so that a ground user on the edge of
    /// the coverage disk of a relay at the top of the altitude band has mean
    /// G2A SNR `snr_db`. Every served link is at least this strong on average.
    pub fn with_nominal_snr_db(mut self, snr_db: f64) -> Self {
        let noise = self.reference_signal_power() / 10f64.powf(snr_db / 10.0);
        self.noise_power_uav = noise;
        self.noise_power_cs = noise;
        self
    }

    /// Slant range from a relay at `z_max` to the edge of its coverage disk.
    pub fn reference_distance(&self) -> f64 {
        self.uav_altitude_range[1] / self.coverage_angle.cos()
    }

    /// Mean received G2A power at [`ScenarioConfig::reference_distance`].
    pub fn reference_signal_power(&self) -> f64 {
        self.nakagami_spread * self.reference_distance().powf(-2.0 * self.path_loss_exp)
    }

    pub fn nominal_snr_db(&self) -> f64 {
        10.0 * (self.reference_signal_power() / self.noise_power_uav).log10()
    }

    /// Short stable digest of the serialized configuration.
    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_scenario_is_valid() {
        let v = validate_config(&ScenarioConfig::default());
        assert!(v.is_empty(), "{v:?}");
    }

    #[test]
    fn long_slot_is_flagged() {
        let cfg = ScenarioConfig {
            slot_duration: 25.0,
            mission_duration: 1000.0,
            ..Default::default()
        };
        let v = validate_config(&cfg);
        assert!(v.iter().any(|x| x.rule == "slot exceeds min inter-arrival"), "{v:?}");
    }

    #[test]
    fn rotor_sum_must_match_hover_power() {
        let mut cfg = ScenarioConfig::default();
        cfg.rotor.c1 = 70.0;
        cfg.rotor.c2 = 40.0;
        let v = validate_config(&cfg);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "rotor");
        assert_eq!(v[0].rule, "c1+c2 != hover power");
    }

    #[test]
    fn altitude_and_compression_rules() {
        let cfg = ScenarioConfig {
            uav_altitude_range: [150.0, 100.0],
            compression_range: [0, 4],
            modulation_order: 8,
            ..Default::default()
        };
        let fields: Vec<_> = validate_config(&cfg).iter().map(|v| v.field).collect();
        assert!(fields.contains(&"uav_altitude_range"));
        assert!(fields.contains(&"compression_range"));
        assert!(fields.contains(&"modulation_order"));
    }

    #[test]
    fn reference_noise_is_minus_105_dbm() {
        let cfg = ScenarioConfig::default();
        assert!((cfg.noise_power_uav - 10f64.powf(-13.5)).abs() < 1e-27);
        assert_eq!(cfg.num_slots(), 200);
        assert_eq!(cfg.original_bits(), 11_178_000);
    }

    #[test]
    fn nominal_snr_round_trips() {
        let cfg = ScenarioConfig::default().with_nominal_snr_db(7.5);
        assert!((cfg.nominal_snr_db() - 7.5).abs() < 1e-9);
        // Independent: 300 m slant range, 2p = 5.4.
        assert!((cfg.reference_distance() - 300.0).abs() < 1e-9);
        let expected = 300f64.powf(-5.4) / 10f64.powf(0.75);
        assert!((cfg.noise_power_uav / expected - 1.0).abs() < 1e-12);
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let cfg = ScenarioConfig::from_toml_str("num_gus = 3\nnum_uavs = 1\n").unwrap();
        assert_eq!(cfg.num_gus, 3);
        assert_eq!(cfg.slot_duration, 5.0);
        assert!(ScenarioConfig::from_toml_str("bogus_key = 1").is_err());
    }

    fn arb_config() -> impl Strategy<Value = ScenarioConfig> {
        (
            (1.0..5000.0f64, 1usize..64, 1usize..8, 1.0..200.0f64, 0.0..100.0f64),
            (0.01..1.0f64, 0.1..30.0f64, 1e-16..1e-3f64, 0.5..5.0f64, -1e6..1e6f64),
            (0..i64::MAX as u64, 0u32..6, 0u32..6, 0.0..1.0f64),
        )
            .prop_map(|(a, b, c)| {
                let (half, m, n, z, dz) = a;
                let (lam, tau, noise, shape, junk) = b;
                let (seed, d_lo, d_hi, w) = c;
                ScenarioConfig {
                    area_half_width: half,
                    num_gus: m,
                    num_uavs: n,
                    uav_altitude_range: [z, z + dz],
                    arrival_rate_range: [lam / 2.0, lam],
                    slot_duration: tau,
                    noise_power_uav: noise,
                    noise_power_cs: noise * 3.0,
                    nakagami_shape: shape,
                    hover_power: junk,
                    compression_range: [d_lo, d_hi],
                    sss_weight: w,
                    rng_seed: seed,
                    ..Default::default()
                }
            })
    }

    proptest! {
        #[test]
        fn toml_round_trip_is_field_identical(cfg in arb_config()) {
            let back = ScenarioConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
            prop_assert_eq!(back, cfg);
        }

        #[test]
        fn validation_is_total(cfg in arb_config()) {
            let _ = validate_config(&cfg);
        }
    }
}
