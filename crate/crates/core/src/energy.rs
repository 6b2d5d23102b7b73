//! Propulsion and communication energy of the relays.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::config::RotorConstants;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Rotary-wing propulsion power at forward speed `v`:
///
/// `c1 (1 + 3v^2/v_tip^2) + c2 sqrt(sqrt(1 + v^4/(4 v0^4)) - v^2/(2 v0^2)) + c3 v^3 / 2`
pub fn propulsion_power<T: Scalar>(v: T, rotor: &RotorConstants) -> T {
    let c1 = T::lit(rotor.c1);
    let c2 = T::lit(rotor.c2);
    let c3 = T::lit(rotor.c3);
    let v_tip = T::lit(rotor.v_tip);
    let v0 = T::lit(rotor.v0);
    let two = T::lit(2.0);
    let v2 = v * v;
    let blade = c1 * (T::one() + T::lit(3.0) * v2 / (v_tip * v_tip));
    let inner = (T::one() + v2 * v2 / (T::lit(4.0) * v0.powi(4))).sqrt() - v2 / (two * v0 * v0);
    // The radicand is positive analytically; cancellation can push it a hair below zero.
    let induced = c2 * inner.max(T::zero()).sqrt();
    let parasite = c3 * v2 * v / two;
    blade + induced + parasite
}

/// Propulsion energy of one slot: flying for `tau_move` at `v_move`, hovering otherwise.
pub fn slot_state_energy<T: Scalar>(tau_move: T, tau: T, v_move: T, rotor: &RotorConstants) -> T {
    propulsion_power(v_move, rotor) * tau_move + propulsion_power(T::zero(), rotor) * (tau - tau_move)
}

/// Receive and transmit energy a relay spends on one ground user's share.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CommEnergy {
    pub rx: f64,
    pub tx: f64,
}

impl CommEnergy {
    pub fn total(&self) -> f64 {
        self.rx + self.tx
    }
}

/// Inputs of the per-link communication energy.
#[derive(Debug, Clone, Copy)]
pub struct CommLink {
    pub h_gu: Complex<f64>,
    pub distance: f64,
    pub path_loss_exp: f64,
    pub bandwidth: f64,
    pub streams: usize,
    pub tx_power: f64,
    pub noise_uav: f64,
}

/// Energy to receive `share * bits` over the G2A hop and forward them over
/// the A2G hop, each timed at its single-hop Shannon rate.
pub fn comm_energy(link: &CommLink, share: f64, bits: f64) -> Result<CommEnergy> {
    let payload = share * bits;
    if payload <= 0.0 {
        return Ok(CommEnergy::default());
    }
    let m = link.streams.max(1) as f64;
    let band = link.bandwidth / m;
    let received = link.h_gu.norm_sqr() * link.distance.powf(-2.0 * link.path_loss_exp);
    let rx_rate = band * (1.0 + received / link.noise_uav).log2();
    let per_stream = link.tx_power / m;
    let tx_rate = band * (1.0 + per_stream / link.noise_uav).log2();
    if !(rx_rate > 0.0) || !(tx_rate > 0.0) {
        return Err(Error::Infeasible(format!(
            "{payload} bits over zero-rate link (rx {rx_rate}, tx {tx_rate})"
        )));
    }
    Ok(CommEnergy {
        rx: received * payload / rx_rate,
        tx: per_stream * payload / tx_rate,
    })
}

/// Per-relay record of energy spent slot by slot.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyLedger {
    /// `slots[n]` holds `(propulsion, communication)` per slot for relay `n`.
    slots: Vec<Vec<(f64, f64)>>,
    state_total: Vec<f64>,
    comm_total: Vec<f64>,
}

impl EnergyLedger {
    pub fn new(num_uavs: usize) -> Self {
        Self {
            slots: vec![Vec::new(); num_uavs],
            state_total: vec![0.0; num_uavs],
            comm_total: vec![0.0; num_uavs],
        }
    }

    pub fn num_uavs(&self) -> usize {
        self.slots.len()
    }

    /// Appends one slot's energy for relay `n`. Energies are nonnegative.
    pub fn charge(&mut self, n: usize, state: f64, comm: f64) {
        debug_assert!(state >= 0.0 && comm >= 0.0);
        self.slots[n].push((state, comm));
        self.state_total[n] += state;
        self.comm_total[n] += comm;
    }

    pub fn state_total(&self, n: usize) -> f64 {
        self.state_total[n]
    }

    pub fn comm_total(&self, n: usize) -> f64 {
        self.comm_total[n]
    }

    pub fn total(&self, n: usize) -> f64 {
        self.state_total[n] + self.comm_total[n]
    }

    pub fn remaining(&self, n: usize, budget: f64) -> f64 {
        budget - self.total(n)
    }

    pub fn history(&self, n: usize) -> &[(f64, f64)] {
        &self.slots[n]
    }

    /// Relays whose cumulative energy exceeds the budget.
    pub fn over_budget(&self, budget: f64) -> Vec<usize> {
        (0..self.num_uavs()).filter(|&n| self.total(n) > budget).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rotor() -> RotorConstants {
        RotorConstants::default()
    }

    #[test]
    fn hover_power_is_c1_plus_c2() {
        assert_eq!(propulsion_power(0.0, &rotor()), 120.0);
        assert_eq!(propulsion_power(0.0f32, &rotor()), 120.0);
    }

    #[test]
    fn power_at_max_speed() {
        // Term-by-term reference evaluation at v = 15 m/s.
        let v: f64 = 15.0;
        let blade = 70.0 * (1.0 + 3.0 * 225.0 / 14400.0);
        let v0: f64 = 4.03;
        let induced = 50.0 * ((1.0 + v.powi(4) / (4.0 * v0.powi(4))).sqrt() - v * v / (2.0 * v0 * v0)).sqrt();
        let parasite = 0.5 * 0.009 * v.powi(3);
        let expected = blade + induced + parasite;
        assert!((propulsion_power(v, &rotor()) - expected).abs() < 1e-10);
        assert!((expected - 101.87).abs() < 0.05, "{expected}");
    }

    #[test]
    fn parasite_term_dominates_at_high_speed() {
        let v: f64 = 10.0 * 120.0;
        let p = propulsion_power(v, &rotor());
        let asym = 0.5 * 0.009 * v * v * v;
        assert!((p - asym).abs() / asym < 0.05);
    }

    #[test]
    fn propulsion_is_continuous() {
        let r = rotor();
        let mut prev = propulsion_power(0.0, &r);
        for i in 1..=3000 {
            let v = i as f64 * 0.01;
            let p = propulsion_power(v, &r);
            assert!((p - prev).abs() < 0.5, "jump at {v}");
            prev = p;
        }
    }

    #[test]
    fn slot_energy_examples() {
        let r = rotor();
        assert_eq!(slot_state_energy(0.0, 5.0, 15.0, &r), 600.0);
        assert_eq!(slot_state_energy(5.0, 5.0, 15.0, &r), propulsion_power(15.0, &r) * 5.0);
        let mid: f64 = slot_state_energy(2.5, 5.0, 15.0, &r);
        let blend = 0.5 * (slot_state_energy(0.0, 5.0, 15.0, &r) + slot_state_energy(5.0, 5.0, 15.0, &r));
        assert!((mid - blend).abs() < 1e-10);
    }

    fn link() -> CommLink {
        CommLink {
            h_gu: Complex::new(1.0, 0.0),
            distance: 100.0,
            path_loss_exp: 2.7,
            bandwidth: 10e6,
            streams: 1,
            tx_power: 0.2,
            // A2G single-hop SNR of exactly 10 (10 dB).
            noise_uav: 0.02,
        }
    }

    #[test]
    fn tx_energy_example() {
        let e = comm_energy(&link(), 1.0, 2.7945e6).unwrap();
        let expected = 0.2 * 2.7945e6 / (10e6 * 11f64.log2());
        assert!((e.tx - expected).abs() < 1e-12);
        assert!((e.tx - 0.01616).abs() < 1e-5);
    }

    #[test]
    fn zero_share_costs_nothing() {
        assert_eq!(comm_energy(&link(), 0.0, 1e6).unwrap(), CommEnergy::default());
    }

    #[test]
    fn energy_is_linear_in_payload() {
        let a = comm_energy(&link(), 0.3, 1e6).unwrap();
        let b = comm_energy(&link(), 0.6, 1e6).unwrap();
        assert!((b.rx - 2.0 * a.rx).abs() <= 1e-15 * b.rx.max(1e-300));
        assert!((b.tx - 2.0 * a.tx).abs() < 1e-15);
    }

    #[test]
    fn zero_rate_is_infeasible() {
        let l = CommLink { h_gu: Complex::new(0.0, 0.0), ..link() };
        assert!(matches!(comm_energy(&l, 1.0, 1e6), Err(Error::Infeasible(_))));
    }

    #[test]
    fn ledger_conservation() {
        let mut ledger = EnergyLedger::new(2);
        let mut resum = [0.0, 0.0];
        for k in 0..50 {
            for (n, total) in resum.iter_mut().enumerate() {
                let s = 600.0 + (k * (n + 1)) as f64 * 0.25;
                let c = 0.01 * k as f64;
                ledger.charge(n, s, c);
                *total += s + c;
            }
        }
        for (n, total) in resum.iter().enumerate() {
            let state: f64 = ledger.history(n).iter().map(|(s, _)| s).sum();
            let comm: f64 = ledger.history(n).iter().map(|(_, c)| c).sum();
            assert_eq!(state, ledger.state_total(n));
            assert_eq!(comm, ledger.comm_total(n));
            assert_eq!(state + comm, ledger.total(n));
            assert!((total - ledger.total(n)).abs() < 1e-9);
        }
        assert!(ledger.over_budget(1e9).is_empty());
        assert_eq!(ledger.over_budget(10.0), vec![0, 1]);
    }
}
