//! Seeded synthetic classification data with a controllable group
//! disparity, for demos and tests.
//!
//! Each row draws `S ~ Bernoulli(0.5)` and features `x_j ~ N(0, 1)`, except
//! `x0 = proxy * S + N(0, 1)`, which leaks group membership. The label is
//! `Y ~ Bernoulli(sigmoid(w . x + disparity * (2S - 1)))` with fixed
//! decreasing weights `w_j = 1.5 / (j + 1)` (alternating sign), so the two
//! groups have different base rates whenever `disparity != 0`.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{DataError, Dataset, FeatureMatrix, Provenance};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_rows: usize,
    pub n_features: usize,
    /// Shift of the label logit between groups.
    pub disparity: f64,
    /// Strength of the group signal carried by `x0`.
    pub proxy: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_rows: 2000,
            n_features: 4,
            disparity: 1.0,
            proxy: 1.0,
            seed: 0,
        }
    }
}

/// Feature rows, labels and groups.
pub fn generate(spec: &SyntheticSpec) -> (Vec<Vec<f64>>, Vec<u8>, Vec<u8>) {
    let mut rng = seed::rng(spec.seed);
    let p = spec.n_features.max(1);
    let mut rows = Vec::with_capacity(spec.n_rows);
    let mut y = Vec::with_capacity(spec.n_rows);
    let mut s = Vec::with_capacity(spec.n_rows);
    for _ in 0..spec.n_rows {
        let g: u8 = u8::from(rng.random_bool(0.5));
        let mut x: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
        x[0] += spec.proxy * f64::from(g);
        let mut z = spec.disparity * (2.0 * f64::from(g) - 1.0);
        for (j, v) in x.iter().enumerate() {
            let w = 1.5 / (j + 1) as f64;
            z += if j % 2 == 0 { w * v } else { -w * v };
        }
        let prob = 1.0 / (1.0 + (-z).exp());
        y.push(u8::from(rng.random::<f64>() < prob));
        s.push(g);
        rows.push(x);
    }
    (rows, y, s)
}

pub fn synthetic_dataset(spec: &SyntheticSpec) -> Result<Dataset, DataError> {
    let (rows, y, s) = generate(spec);
    let names = (0..spec.n_features.max(1)).map(|j| format!("x{j}")).collect();
    Dataset::new(
        names,
        FeatureMatrix::from_rows(&rows),
        y,
        s,
        Provenance {
            source: format!("synthetic(seed={})", spec.seed),
            steps: Vec::new(),
        },
    )
}

/// The same data as a CSV with columns `x0..`, `target`, `sensitive`.
pub fn synthetic_csv(spec: &SyntheticSpec) -> String {
    let (rows, y, s) = generate(spec);
    let p = spec.n_features.max(1);
    let mut out: String = (0..p).map(|j| format!("x{j},")).collect();
    out.push_str("target,sensitive\n");
    for ((r, yi), si) in rows.iter().zip(&y).zip(&s) {
        for v in r {
            out.push_str(&format!("{v},"));
        }
        out.push_str(&format!("{yi},{si}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disparity_shifts_group_base_rates() {
        let spec = SyntheticSpec {
            n_rows: 4000,
            disparity: 1.5,
            ..Default::default()
        };
        let (_, y, s) = generate(&spec);
        let rate = |g: u8| {
            let n = s.iter().filter(|&&v| v == g).count() as f64;
            y.iter().zip(&s).filter(|&(&yi, &si)| si == g && yi == 1).count() as f64 / n
        };
        assert!(rate(1) - rate(0) > 0.3);
    }

    #[test]
    fn generation_is_seeded() {
        let spec = SyntheticSpec::default();
        assert_eq!(generate(&spec), generate(&spec));
        assert_ne!(generate(&spec).1, generate(&SyntheticSpec { seed: 1, ..spec }).1);
    }
}
