//! Semantic codec abstraction: payload sizing under compression, the
//! semantic-structural similarity score and a fidelity model mapping channel
//! conditions to (feature cosine similarity, MS-SSIM).
//!
//! The fidelity model is either the built-in analytic surrogate or a
//! calibration table measured on a trained codec. The table is a CSV file
//! with header `d,snr_db,mod_order,feature_len,cos_sim,ms_ssim`, one row per
//! grid point; lookups interpolate bilinearly in `(snr_db, feature_len)` at
//! exact `(d, mod_order)` keys.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Payload in bits of a `C x H x W` 8-bit image at compression factor `d`:
/// `ceil(8 C H W / 2^(2d))`.
pub fn data_size(dims: [usize; 3], d: u32) -> u64 {
    let orig = 8 * dims.iter().map(|&x| x as u64).product::<u64>();
    let div = 1u64 << (2 * d);
    orig.div_ceil(div)
}

/// Number of complex semantic features, `C H W / 2^(2d)`.
pub fn feature_len(dims: [usize; 3], d: u32) -> f64 {
    dims.iter().map(|&x| x as f64).product::<f64>() / (1u64 << (2 * d)) as f64
}

/// Semantic-structural similarity: `alpha * cos + (1 - alpha) * ms_ssim`.
pub fn sss<T: Scalar>(cos_sim: T, ms_ssim: T, alpha: T) -> T {
    alpha * cos_sim + (T::one() - alpha) * ms_ssim
}

/// Predicted reconstruction quality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fidelity {
    pub cos_sim: f64,
    pub ms_ssim: f64,
}

impl Fidelity {
    pub fn sss(&self, alpha: f64) -> f64 {
        sss(self.cos_sim, self.ms_ssim, alpha)
    }
}

/// Maps compression, post-equalization SNR, modulation order and feature
/// length to reconstruction quality.
pub trait SemanticCodec: Send + Sync {
    fn predict(&self, d: u32, snr_db: f64, mod_order: u32, feature_len: f64) -> Fidelity;
}

/// Closed-form fidelity model.
///
/// Each output is `floor + (ceiling - floor) * logistic(ebn0_db)` where
/// `ebn0_db = snr_db - 10 log10(log2 M)` is the per-bit SNR. The ceiling is
/// `(1 - a 2^(-2d)) * L / (L + L_half)` (quantizer fidelity times feature
/// richness) and the logistic midpoint moves up for short feature vectors,
/// which carry less redundancy. Constants are part of the model version.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticSurrogate {
    pub quant_loss: f64,
    pub width_db: f64,
    pub redundancy_len: f64,
    pub redundancy_db: f64,
    pub cos: SurrogateHead,
    pub ms: SurrogateHead,
}

/// Per-output constants of [`AnalyticSurrogate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateHead {
    pub floor: f64,
    pub peak: f64,
    pub half_len: f64,
    pub midpoint_db: f64,
}

impl AnalyticSurrogate {
    pub const VERSION: u32 = 1;
}

impl Default for AnalyticSurrogate {
    fn default() -> Self {
        Self {
            quant_loss: 0.08,
            width_db: 2.5,
            redundancy_len: 20_000.0,
            redundancy_db: 1.5,
            cos: SurrogateHead {
                floor: 0.0,
                peak: 1.0,
                half_len: 1_000.0,
                midpoint_db: -2.0,
            },
            ms: SurrogateHead {
                floor: 0.05,
                peak: 0.97,
                half_len: 4_000.0,
                midpoint_db: 0.0,
            },
        }
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl AnalyticSurrogate {
    fn head(&self, h: &SurrogateHead, d: u32, ebn0_db: f64, len: f64) -> f64 {
        let len = len.max(0.0);
        let quant = 1.0 - self.quant_loss * 0.25f64.powi(d as i32);
        let ceiling = (h.peak * quant * len / (len + h.half_len)).max(h.floor);
        let shift = self.redundancy_db * (1.0 + self.redundancy_len / len.max(1e-9)).ln();
        let q = logistic((ebn0_db - h.midpoint_db - shift) / self.width_db);
        h.floor + (ceiling - h.floor) * q
    }
}

pub fn per_bit_snr_db(snr_db: f64, mod_order: u32) -> f64 {
    snr_db - 10.0 * f64::from(mod_order.max(2)).log2().log10()
}

impl SemanticCodec for AnalyticSurrogate {
    fn predict(&self, d: u32, snr_db: f64, mod_order: u32, feature_len: f64) -> Fidelity {
        let e = per_bit_snr_db(snr_db, mod_order);
        // Treat NaN as a dead link rather than propagating it.
        let e = if e.is_nan() { f64::NEG_INFINITY } else { e };
        Fidelity {
            cos_sim: self.head(&self.cos, d, e, feature_len).clamp(-1.0, 1.0),
            ms_ssim: self.head(&self.ms, d, e, feature_len).clamp(0.0, 1.0),
        }
    }
}

/// One measured grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub d: u32,
    pub snr_db: f64,
    pub mod_order: u32,
    pub feature_len: f64,
    pub cos_sim: f64,
    pub ms_ssim: f64,
}

pub const CALIBRATION_HEADER: [&str; 6] = ["d", "snr_db", "mod_order", "feature_len", "cos_sim", "ms_ssim"];

/// Rectangular `(snr_db, feature_len)` grid for one `(d, mod_order)` key.
#[derive(Debug, Clone, PartialEq)]
struct Slice {
    snr: Vec<f64>,
    len: Vec<f64>,
    /// Row-major over `(snr, len)`; `None` where the grid has a hole.
    values: Vec<Option<Fidelity>>,
}

impl Slice {
    fn at(&self, i: usize, j: usize) -> Option<Fidelity> {
        self.values[i * self.len.len() + j]
    }

    fn bracket(axis: &[f64], x: f64) -> Option<(usize, usize, f64)> {
        let first = *axis.first()?;
        let last = *axis.last()?;
        if !(x >= first && x <= last) {
            return None;
        }
        if axis.len() == 1 {
            return Some((0, 0, 0.0));
        }
        let hi = axis.partition_point(|&a| a < x).clamp(1, axis.len() - 1);
        let lo = hi - 1;
        let w = (x - axis[lo]) / (axis[hi] - axis[lo]);
        Some((lo, hi, w))
    }

    fn interpolate(&self, snr_db: f64, len: f64) -> Option<Fidelity> {
        let (i0, i1, wi) = Self::bracket(&self.snr, snr_db)?;
        let (j0, j1, wj) = Self::bracket(&self.len, len)?;
        let c = [self.at(i0, j0)?, self.at(i0, j1)?, self.at(i1, j0)?, self.at(i1, j1)?];
        let blend = |f: fn(&Fidelity) -> f64| {
            let a = f(&c[0]) * (1.0 - wj) + f(&c[1]) * wj;
            let b = f(&c[2]) * (1.0 - wj) + f(&c[3]) * wj;
            a * (1.0 - wi) + b * wi
        };
        Some(Fidelity {
            cos_sim: blend(|x| x.cos_sim),
            ms_ssim: blend(|x| x.ms_ssim),
        })
    }
}

/// Fidelity measurements loaded from a calibration file.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTable {
    rows: Vec<CalibrationRow>,
    slices: BTreeMap<(u32, u32), Slice>,
    warnings: Vec<String>,
}

impl CalibrationTable {
    pub fn from_rows(rows: Vec<CalibrationRow>) -> Result<Self> {
        let mut keyed: BTreeMap<(u32, u32), Vec<CalibrationRow>> = BTreeMap::new();
        for r in &rows {
            let finite = [r.snr_db, r.feature_len, r.cos_sim, r.ms_ssim].iter().all(|x| x.is_finite());
            if !finite {
                return Err(Error::Calibration(format!("non-finite value in {r:?}")));
            }
            if !(-1.0..=1.0).contains(&r.cos_sim) || !(0.0..=1.0).contains(&r.ms_ssim) {
                return Err(Error::Calibration(format!("value out of range in {r:?}")));
            }
            keyed.entry((r.d, r.mod_order)).or_default().push(*r);
        }
        let mut slices = BTreeMap::new();
        let mut warnings = Vec::new();
        for (key, group) in keyed {
            let mut snr: Vec<f64> = group.iter().map(|r| r.snr_db).collect();
            let mut len: Vec<f64> = group.iter().map(|r| r.feature_len).collect();
            snr.sort_by(f64::total_cmp);
            snr.dedup();
            len.sort_by(f64::total_cmp);
            len.dedup();
            let mut values = vec![None; snr.len() * len.len()];
            for r in &group {
                let i = snr.partition_point(|&s| s < r.snr_db);
                let j = len.partition_point(|&l| l < r.feature_len);
                let slot = &mut values[i * len.len() + j];
                if slot.is_some() {
                    return Err(Error::Calibration(format!(
                        "duplicate key d={} snr_db={} mod_order={} feature_len={}",
                        r.d, r.snr_db, r.mod_order, r.feature_len
                    )));
                }
                *slot = Some(Fidelity {
                    cos_sim: r.cos_sim,
                    ms_ssim: r.ms_ssim,
                });
            }
            let slice = Slice { snr, len, values };
            for j in 0..slice.len.len() {
                let column: Vec<_> = (0..slice.snr.len()).filter_map(|i| slice.at(i, j)).collect();
                let monotone = column
                    .windows(2)
                    .all(|w| w[1].cos_sim >= w[0].cos_sim && w[1].ms_ssim >= w[0].ms_ssim);
                if !monotone {
                    warnings.push(format!(
                        "d={} mod_order={} feature_len={}: not monotone in snr_db",
                        key.0, key.1, slice.len[j]
                    ));
                }
            }
            slices.insert(key, slice);
        }
        for w in &warnings {
            log::warn!("calibration table: {w}");
        }
        Ok(Self { rows, slices, warnings })
    }

    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers().map_err(|e| Error::Calibration(e.to_string()))?;
        if header.iter().collect::<Vec<_>>() != CALIBRATION_HEADER {
            return Err(Error::Calibration(format!(
                "expected header {}, got {}",
                CALIBRATION_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let rows = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<CalibrationRow>, _>>()
            .map_err(|e| Error::Calibration(e.to_string()))?;
        Self::from_rows(rows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(CALIBRATION_HEADER).expect("in-memory csv write");
        for r in &self.rows {
            w.serialize(r).expect("in-memory csv write");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
    }

    pub fn rows(&self) -> &[CalibrationRow] {
        &self.rows
    }

    /// Non-fatal problems found while loading.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Interpolated lookup; `None` outside the table's hull.
    pub fn lookup(&self, d: u32, snr_db: f64, mod_order: u32, feature_len: f64) -> Option<Fidelity> {
        self.slices.get(&(d, mod_order))?.interpolate(snr_db, feature_len)
    }
}

/// The fidelity model used by the environment: a calibration table when one
/// is loaded, the analytic surrogate otherwise and for out-of-hull queries.
#[derive(Debug, Clone, Default)]
pub struct Surrogate {
    analytic: AnalyticSurrogate,
    table: Option<CalibrationTable>,
}

impl Surrogate {
    pub fn analytic() -> Self {
        Self::default()
    }

    pub fn with_table(table: CalibrationTable) -> Self {
        Self {
            analytic: AnalyticSurrogate::default(),
            table: Some(table),
        }
    }

    pub fn table(&self) -> Option<&CalibrationTable> {
        self.table.as_ref()
    }
}

impl SemanticCodec for Surrogate {
    fn predict(&self, d: u32, snr_db: f64, mod_order: u32, feature_len: f64) -> Fidelity {
        if let Some(t) = &self.table {
            if let Some(f) = t.lookup(d, snr_db, mod_order, feature_len) {
                return f;
            }
            log::debug!(
                "calibration query outside table (d={d}, snr_db={snr_db:.2}, mod_order={mod_order}, \
                 feature_len={feature_len}); using analytic surrogate"
            );
        }
        self.analytic.predict(d, snr_db, mod_order, feature_len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const DIMS: [usize; 3] = [3, 375, 1242];

    #[test]
    fn data_size_examples() {
        assert_eq!(data_size(DIMS, 1), 2_794_500);
        assert_eq!(data_size(DIMS, 4), 43_665);
        assert_eq!(data_size(DIMS, 0), 11_178_000);
        for d in 1..8 {
            assert!(data_size(DIMS, d + 1) < data_size(DIMS, d));
        }
    }

    #[test]
    fn sss_examples() {
        assert!((sss(0.9, 0.9, 0.5) - 0.9f64).abs() < 1e-15);
        assert_eq!(sss(0.37, 0.8, 1.0), 0.37);
        assert!((sss(1.0, 0.82, 0.5) - 0.91f64).abs() < 1e-12);
        assert!((sss(-1.0f32, 0.0, 0.5) + 0.5).abs() < 1e-7);
    }

    #[test]
    fn surrogate_saturates_below_one() {
        let s = AnalyticSurrogate::default();
        let len = feature_len(DIMS, 1);
        let f = s.predict(1, 200.0, 4, len);
        assert!(f.cos_sim <= 1.0 && f.ms_ssim <= 1.0);
        let g = s.predict(1, 60.0, 4, len);
        assert!((f.ms_ssim - g.ms_ssim).abs() < 1e-6);
    }

    #[test]
    fn surrogate_grid_monotonicity() {
        let s = AnalyticSurrogate::default();
        let snrs: Vec<f64> = (-20..=40).map(|x| x as f64).collect();
        let lens = [12.0, 48.0, 192.0, 768.0, 5_458.0, 21_832.0, 87_328.0, 349_312.0];
        for d in 1..=4 {
            for &len in &lens {
                for order in [4, 16, 64, 256] {
                    for w in snrs.windows(2) {
                        let a = s.predict(d, w[0], order, len);
                        let b = s.predict(d, w[1], order, len);
                        assert!(b.cos_sim >= a.cos_sim && b.ms_ssim >= a.ms_ssim);
                    }
                }
                for &snr in &snrs {
                    for w in [4u32, 16, 64, 256].windows(2) {
                        let a = s.predict(d, snr, w[0], len);
                        let b = s.predict(d, snr, w[1], len);
                        assert!(b.cos_sim <= a.cos_sim && b.ms_ssim <= a.ms_ssim);
                    }
                }
            }
            for &snr in &snrs {
                for w in lens.windows(2) {
                    let a = s.predict(d, snr, 4, w[0]);
                    let b = s.predict(d, snr, 4, w[1]);
                    assert!(b.ms_ssim >= a.ms_ssim);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn surrogate_outputs_bounded(d in 1u32..=4, snr in -60.0..80.0f64, oi in 0usize..4, len in 0.0..1e6f64) {
            let f = AnalyticSurrogate::default().predict(d, snr, [4, 16, 64, 256][oi], len);
            prop_assert!((-1.0..=1.0).contains(&f.cos_sim));
            prop_assert!((0.0..=1.0).contains(&f.ms_ssim));
        }

        #[test]
        fn sss_is_bounded(c in -1.0..=1.0f64, m in 0.0..=1.0f64, a in 0.0..=1.0f64) {
            let v = sss(c, m, a);
            prop_assert!(v >= -a - 1e-12 && v <= 1.0 + 1e-12);
        }
    }

    fn grid_rows() -> Vec<CalibrationRow> {
        let mut rows = Vec::new();
        for (i, snr) in [0.0, 10.0, 20.0].iter().enumerate() {
            for (j, len) in [48.0, 192.0].iter().enumerate() {
                rows.push(CalibrationRow {
                    d: 2,
                    snr_db: *snr,
                    mod_order: 16,
                    feature_len: *len,
                    cos_sim: 0.5 + 0.1 * i as f64 + 0.05 * j as f64,
                    ms_ssim: 0.4 + 0.2 * i as f64,
                });
            }
        }
        rows
    }

    #[test]
    fn table_bilinear_lookup() {
        let t = CalibrationTable::from_rows(grid_rows()).unwrap();
        assert!(t.warnings().is_empty());
        let f = t.lookup(2, 5.0, 16, 120.0).unwrap();
        assert!((f.cos_sim - (0.5 + 0.05 + 0.025)).abs() < 1e-12);
        assert!((f.ms_ssim - 0.5).abs() < 1e-12);
        let corner = t.lookup(2, 20.0, 16, 192.0).unwrap();
        assert!((corner.cos_sim - 0.75).abs() < 1e-12);
        assert!(t.lookup(2, 25.0, 16, 120.0).is_none());
        assert!(t.lookup(3, 5.0, 16, 120.0).is_none());
    }

    #[test]
    fn table_csv_round_trip_and_fallback() {
        let t = CalibrationTable::from_rows(grid_rows()).unwrap();
        let text = t.to_csv_string();
        assert!(text.starts_with("d,snr_db,mod_order,feature_len,cos_sim,ms_ssim\n"));
        let back = CalibrationTable::from_csv_reader(text.as_bytes()).unwrap();
        assert_eq!(back.rows(), t.rows());

        let s = Surrogate::with_table(back);
        let outside = s.predict(2, 30.0, 16, 120.0);
        assert_eq!(outside, AnalyticSurrogate::default().predict(2, 30.0, 16, 120.0));
    }

    #[test]
    fn table_rejects_bad_input() {
        let mut rows = grid_rows();
        rows.push(rows[0]);
        assert!(CalibrationTable::from_rows(rows).is_err());
        let mut rows = grid_rows();
        rows[0].ms_ssim = 1.5;
        assert!(CalibrationTable::from_rows(rows).is_err());
        assert!(CalibrationTable::from_csv_reader("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn non_monotone_table_warns() {
        let mut rows = grid_rows();
        rows[4].cos_sim = 0.1;
        let t = CalibrationTable::from_rows(rows).unwrap();
        assert_eq!(t.warnings().len(), 1);
    }
}
