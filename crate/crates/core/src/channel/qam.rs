use num_complex::Complex64;

use crate::error::{Error, Result};

/// Gray-mapped square QAM with unit average symbol energy.
///
/// The first half of each symbol's bits selects the in-phase level and the
/// second half the quadrature level; adjacent levels differ in one bit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Qam {
    order: u32,
    bits_per_axis: u32,
    side: u32,
    scale: f64,
}

fn gray(i: u32) -> u32 {
    i ^ (i >> 1)
}

fn gray_inverse(mut g: u32) -> u32 {
    let mut i = g;
    while g > 1 {
        g >>= 1;
        i ^= g;
    }
    i
}

impl Qam {
    pub fn new(order: u32) -> Result<Self> {
        if !crate::config::MODULATION_ORDERS.contains(&order) {
            return Err(Error::param("modulation_order", format!("{order} is not 4, 16, 64 or 256")));
        }
        let bits = order.trailing_zeros();
        let side = 1u32 << (bits / 2);
        // Mean energy of the unnormalized grid {+-1, +-3, ...}^2 is 2(M-1)/3.
        let scale = (2.0 * (f64::from(order) - 1.0) / 3.0).sqrt();
        Ok(Self {
            order,
            bits_per_axis: bits / 2,
            side,
            scale,
        })
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        (2 * self.bits_per_axis) as usize
    }

    fn level(&self, code: u32) -> f64 {
        let idx = gray_inverse(code);
        (2.0 * f64::from(idx) - f64::from(self.side - 1)) / self.scale
    }

    fn decide(&self, x: f64) -> u32 {
        let raw = ((x * self.scale + f64::from(self.side - 1)) / 2.0).round();
        let idx = raw.clamp(0.0, f64::from(self.side - 1)) as u32;
        gray(idx)
    }

    fn read(bits: &[bool]) -> u32 {
        bits.iter().fold(0, |acc, &b| (acc << 1) | u32::from(b))
    }

    fn write(code: u32, width: u32, out: &mut Vec<bool>) {
        for k in (0..width).rev() {
            out.push((code >> k) & 1 == 1);
        }
    }

    pub fn modulate(&self, bits: &[bool]) -> Result<Vec<Complex64>> {
        let bps = self.bits_per_symbol();
        if !bits.len().is_multiple_of(bps) {
            return Err(Error::Framing {
                bits: bits.len(),
                bits_per_symbol: bps,
            });
        }
        let half = self.bits_per_axis as usize;
        Ok(bits
            .chunks(bps)
            .map(|c| Complex64::new(self.level(Self::read(&c[..half])), self.level(Self::read(&c[half..]))))
            .collect())
    }

    /// Hard-decision nearest-neighbour demodulation.
    pub fn demodulate(&self, symbols: &[Complex64]) -> Vec<bool> {
        let mut out = Vec::with_capacity(symbols.len() * self.bits_per_symbol());
        for s in symbols {
            Self::write(self.decide(s.re), self.bits_per_axis, &mut out);
            Self::write(self.decide(s.im), self.bits_per_axis, &mut out);
        }
        out
    }

    /// Every constellation point, indexed by its bit label.
    pub fn constellation(&self) -> Vec<Complex64> {
        let bps = self.bits_per_symbol() as u32;
        (0..self.order)
            .map(|label| {
                let bits: Vec<bool> = (0..bps).rev().map(|k| (label >> k) & 1 == 1).collect();
                self.modulate(&bits).expect("one full symbol")[0]
            })
            .collect()
    }
}
