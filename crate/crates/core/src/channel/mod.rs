//! Ground-to-air and air-to-ground signal chain through an amplify-and-forward
//! relay: Nakagami-m fading, path loss, Doppler phase, relay gain, end-to-end
//! SNR and rate, plus a symbol-level pipeline with MMSE equalization.
//!
//! Noise parameters are always powers (watts). Amplitude path loss is
//! `d^-p`, power path loss `d^-2p`.

mod qam;

pub use qam::Qam;

use num_complex::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const SPEED_OF_LIGHT: f64 = 2.998e8;

/// Small-scale fading for one slot: one coefficient per (ground user, relay)
/// pair and one per relay toward the server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct FadingDraw {
    /// Indexed `[gu][uav]`.
    pub h_gu: Vec<Vec<Complex<f64>>>,
    pub h_cs: Vec<Complex<f64>>,
}

impl FadingDraw {
    pub fn sample<R: Rng + ?Sized>(
        num_gus: usize,
        num_uavs: usize,
        shape: f64,
        spread: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut h_gu = Vec::with_capacity(num_gus);
        for _ in 0..num_gus {
            let row = (0..num_uavs)
                .map(|_| sample_nakagami(shape, spread, rng))
                .collect::<Result<Vec<_>>>()?;
            h_gu.push(row);
        }
        let h_cs = (0..num_uavs)
            .map(|_| sample_nakagami(shape, spread, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { h_gu, h_cs })
    }
}

/// Draws a complex coefficient with Nakagami(m, spread) magnitude and
/// uniform phase: `|h|^2 ~ Gamma(m, spread/m)`.
pub fn sample_nakagami<T: Scalar, R: Rng + ?Sized>(shape: T, spread: T, rng: &mut R) -> Result<Complex<T>> {
    if !(shape >= T::lit(0.5)) {
        return Err(Error::param("nakagami_shape", format!("{shape:?} < 0.5")));
    }
    if !(spread > T::zero()) || !spread.is_finite() {
        return Err(Error::param("nakagami_spread", format!("{spread:?} must be positive")));
    }
    let power = T::sample_gamma(shape, spread / shape, rng)
        .ok_or_else(|| Error::param("nakagami_shape", "gamma parameters rejected"))?;
    let phase = T::lit(std::f64::consts::TAU) * T::sample_unit(rng);
    Ok(Complex::from_polar(power.sqrt(), phase))
}

/// Doppler shift `v * f_c * cos(theta) / c`.
pub fn doppler_shift<T: Scalar>(speed: T, carrier_freq: T, theta: T) -> T {
    speed * carrier_freq * theta.cos() / T::lit(SPEED_OF_LIGHT)
}

/// Angle between a horizontal ground velocity and the line from the ground
/// user to the relay. Zero speed or coincident points give `pi/2` (no shift).
pub fn doppler_angle(velocity: [f64; 2], gu: [f64; 2], uav: [f64; 3]) -> f64 {
    let los = [uav[0] - gu[0], uav[1] - gu[1], uav[2]];
    let vn = velocity[0].hypot(velocity[1]);
    let ln = (los[0] * los[0] + los[1] * los[1] + los[2] * los[2]).sqrt();
    if vn == 0.0 || ln == 0.0 {
        return std::f64::consts::FRAC_PI_2;
    }
    let cos = (velocity[0] * los[0] + velocity[1] * los[1]) / (vn * ln);
    cos.clamp(-1.0, 1.0).acos()
}

/// Amplify-and-forward gain meeting the per-stream power `P / M_n`.
pub fn af_gain<T: Scalar>(
    h_gu: Complex<T>,
    distance: T,
    path_loss_exp: T,
    tx_power: T,
    streams: usize,
    noise_uav: T,
) -> Result<T> {
    if !(distance > T::zero()) {
        return Err(Error::Geometry(format!("relay distance {distance:?} must be positive")));
    }
    if streams == 0 {
        return Err(Error::param("streams", "relay must serve at least one stream"));
    }
    let per_stream = tx_power / T::from_usize(streams).unwrap();
    let received = h_gu.norm_sqr() * distance.powf(-T::lit(2.0) * path_loss_exp);
    Ok((per_stream / (received + noise_uav)).sqrt())
}

/// End-to-end SNR at the server for a relayed stream.
pub fn end_to_end_snr<T: Scalar>(
    h_gu: Complex<T>,
    h_cs: Complex<T>,
    gain: T,
    distance: T,
    path_loss_exp: T,
    noise_uav: T,
    noise_cs: T,
) -> T {
    let signal = h_cs.norm_sqr() * (h_gu * gain).norm_sqr() * distance.powf(-T::lit(2.0) * path_loss_exp);
    let sigma_uav = noise_uav.sqrt();
    let relayed_noise = (gain * h_cs.norm() * sigma_uav).powi(2);
    let denom = relayed_noise + noise_cs;
    if denom > T::zero() {
        signal / denom
    } else if signal > T::zero() {
        T::infinity()
    } else {
        T::zero()
    }
}

/// Shannon rate of a relayed stream over its `B / M_n` share of bandwidth.
#[allow(clippy::too_many_arguments)]
pub fn link_rate<T: Scalar>(
    h_gu: Complex<T>,
    h_cs: Complex<T>,
    gain: T,
    distance: T,
    path_loss_exp: T,
    bandwidth: T,
    streams: usize,
    noise_uav: T,
    noise_cs: T,
) -> T {
    let snr = end_to_end_snr(h_gu, h_cs, gain, distance, path_loss_exp, noise_uav, noise_cs);
    shannon_rate(snr, bandwidth, streams)
}

pub fn shannon_rate<T: Scalar>(snr: T, bandwidth: T, streams: usize) -> T {
    bandwidth / T::from_usize(streams.max(1)).unwrap() * (T::one() + snr).log2()
}

/// Shannon rate capped by what square QAM of `order` can carry at one
/// symbol per second per hertz.
pub fn modulation_limited_rate<T: Scalar>(shannon: T, bandwidth: T, streams: usize, order: u32) -> T {
    let cap = bandwidth / T::from_usize(streams.max(1)).unwrap() * T::lit(f64::from(order).log2());
    shannon.min(cap)
}

/// Summary of one ground-user/relay link in a slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub distance: f64,
    pub doppler: f64,
    pub af_gain: f64,
    /// Throughput used for scheduling (Shannon rate capped by the modulation).
    pub rate: f64,
    pub end_to_end_snr: f64,
}

/// Everything needed to push symbols through the two-hop chain.
#[derive(Debug, Clone, Copy)]
pub struct CompositeChannel<T> {
    pub h_gu: Complex<T>,
    pub h_cs: Complex<T>,
    pub gain: T,
    pub distance: T,
    pub path_loss_exp: T,
    pub doppler: T,
    pub tau: T,
    pub noise_uav: T,
    pub noise_cs: T,
}

impl<T: Scalar> CompositeChannel<T> {
    /// Coefficient multiplying the transmitted symbol at the server.
    pub fn coefficient(&self) -> Complex<T> {
        let rotation = Complex::from_polar(T::one(), T::lit(std::f64::consts::TAU) * self.doppler * self.tau);
        self.h_cs * self.gain * self.h_gu * self.distance.powf(-self.path_loss_exp) * rotation
    }

    /// Power of the noise reaching the server: relayed UAV noise plus server noise.
    pub fn effective_noise(&self) -> T {
        (self.h_cs * self.gain).norm_sqr() * self.noise_uav + self.noise_cs
    }
}

fn complex_noise<T: Scalar, R: Rng + ?Sized>(power: T, rng: &mut R) -> Complex<T> {
    if power <= T::zero() {
        return Complex::new(T::zero(), T::zero());
    }
    let s = (power / T::lit(2.0)).sqrt();
    Complex::new(s * T::sample_standard_normal(rng), s * T::sample_standard_normal(rng))
}

/// Sends unit-power symbols over the relay and equalizes at the server
/// with MMSE using the known composite coefficient.
pub fn symbol_pipeline<T: Scalar, R: Rng + ?Sized>(
    symbols: &[Complex<T>],
    ch: &CompositeChannel<T>,
    rng: &mut R,
) -> Vec<Complex<T>> {
    let rotation = Complex::from_polar(T::one(), T::lit(std::f64::consts::TAU) * ch.doppler * ch.tau);
    let g2a = ch.h_gu * ch.distance.powf(-ch.path_loss_exp) * rotation;
    let a2g = ch.h_cs * ch.gain;
    let h = ch.coefficient();
    let denom = h.norm_sqr() + ch.effective_noise();
    let eq = h.conj() / denom;
    symbols
        .iter()
        .map(|&x| {
            let at_uav = g2a * x + complex_noise(ch.noise_uav, rng);
            let at_cs = a2g * at_uav + complex_noise(ch.noise_cs, rng);
            eq * at_cs
        })
        .collect()
}
