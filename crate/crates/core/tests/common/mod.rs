#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Gamma};
use uavsem::channel::sample_nakagami;
use uavsem::nn::DenseNet;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Sort, drop the top `d`, average the rest.
pub fn truncated_mean_oracle(values: &[f64], d: usize) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let keep = &v[..v.len() - d];
    keep.iter().sum::<f64>() / keep.len() as f64
}

/// Gaussian tail probability.
pub fn q_function(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(x / std::f64::consts::SQRT_2)
}

/// Symbol error rate of Gray QPSK at symbol SNR `es_n0`.
pub fn qpsk_ser(es_n0: f64) -> f64 {
    let p = q_function(es_n0.sqrt());
    1.0 - (1.0 - p) * (1.0 - p)
}

/// |h|^2 samples of Nakagami fading.
pub fn nakagami_power(m: f64, omega: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n).map(|_| sample_nakagami(m, omega, &mut r).unwrap().norm_sqr()).collect()
}

/// Kolmogorov-Smirnov distance of `samples` from Gamma(shape, scale).
pub fn ks_gamma(samples: &[f64], shape: f64, scale: f64) -> f64 {
    let g = Gamma::new(shape, 1.0 / scale).unwrap();
    let mut v = samples.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = g.cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value at the 1% level.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

/// Kendall rank correlation against the index; ties contribute zero.
pub fn kendall_tau(xs: &[f64]) -> f64 {
    let n = xs.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let d = xs[j] - xs[i];
            if d > 0.0 {
                s += 1.0;
            } else if d < 0.0 {
                s -= 1.0;
            }
        }
    }
    s / (n * (n - 1) / 2) as f64
}

pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    xs.windows(window).map(|w| w.iter().sum::<f64>() / window as f64).collect()
}

pub fn random_matrix(rows: usize, cols: usize, scale: f64, r: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| r.random_range(-scale..scale))
}

pub fn random_vector(n: usize, scale: f64, r: &mut impl Rng) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| r.random_range(-scale..scale))
}

/// Largest relative error between `analytic` and central differences of
/// `loss` over every parameter of `net`.
pub fn max_rel_error(
    net: &DenseNet<f64>,
    analytic: &[f64],
    h: f64,
    mut loss: impl FnMut(&DenseNet<f64>) -> f64,
) -> f64 {
    let base = net.params_flat();
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for (i, &g) in analytic.iter().enumerate() {
        let mut p = base.clone();
        p[i] = base[i] + h;
        probe.set_params_flat(&p).unwrap();
        let up = loss(&probe);
        p[i] = base[i] - h;
        probe.set_params_flat(&p).unwrap();
        let down = loss(&probe);
        let fd = (up - down) / (2.0 * h);
        let err = (fd - g).abs() / fd.abs().max(g.abs()).max(1e-6);
        worst = worst.max(err);
    }
    worst
}
