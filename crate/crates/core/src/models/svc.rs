use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Kernel, SvcParams};
use crate::data::FeatureMatrix;
use crate::seed;

const POLY_DEGREE: i32 = 3;
/// Above this many training rows kernel rows are recomputed instead of cached.
const CACHE_LIMIT: usize = 6000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelFn {
    pub kind: Kernel,
    pub gamma: f64,
}

impl KernelFn {
    /// `gamma = 1 / (p * var(X))` over all training entries, 1 when degenerate.
    pub fn fit(kind: Kernel, x: &FeatureMatrix) -> KernelFn {
        let vals = x.values();
        let p = x.n_cols();
        let gamma = if vals.is_empty() || p == 0 {
            1.0
        } else {
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            if var > 0.0 {
                1.0 / (p as f64 * var)
            } else {
                1.0
            }
        };
        KernelFn { kind, gamma }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kind {
            Kernel::Linear => dot(a, b),
            Kernel::Poly => (self.gamma * dot(a, b)).powi(POLY_DEGREE),
            Kernel::Rbf => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-self.gamma * d2).exp()
            }
            Kernel::Sigmoid => (self.gamma * dot(a, b)).tanh(),
        }
    }

    /// Kernel with a constant feature appended, which absorbs the bias.
    fn eval_biased(&self, a: &[f64], b: &[f64]) -> f64 {
        self.eval(a, b) + 1.0
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Kernel SVC trained by seeded stochastic sub-gradient descent on the
/// hinge loss (Pegasos), with `lambda = 1 / (C * n)` so the objective
/// matches `0.5 * ||w||^2 + C * sum_i hinge_i` up to scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvcModel {
    kernel: KernelFn,
    support: Vec<Vec<f64>>,
    coef: Vec<f64>,
    n_features: usize,
}

impl SvcModel {
    pub fn fit(x: &FeatureMatrix, y: &[u8], params: &SvcParams, seed: u64) -> SvcModel {
        let n = x.n_rows();
        let kernel = KernelFn::fit(params.kernel, x);
        let sign: Vec<f64> = y.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
        let lambda = 1.0 / (params.c * n as f64);
        let steps = params.epochs * n;

        let mut rng = seed::rng(seed);
        let mut alpha = vec![0u64; n];
        // g[j] = sum_i alpha_i y_i K(x_i, x_j)
        let mut g = vec![0.0; n];
        let mut cache: Vec<Option<Vec<f64>>> = if n <= CACHE_LIMIT {
            vec![None; n]
        } else {
            Vec::new()
        };
        let mut scratch = vec![0.0; n];

        for t in 1..=steps {
            let i = rng.random_range(0..n);
            let margin = sign[i] * g[i] / (lambda * t as f64);
            if margin < 1.0 {
                alpha[i] += 1;
                let row: &[f64] = if cache.is_empty() {
                    for (j, s) in scratch.iter_mut().enumerate() {
                        *s = kernel.eval_biased(x.row(i), x.row(j));
                    }
                    &scratch
                } else {
                    cache[i].get_or_insert_with(|| {
                        (0..n).map(|j| kernel.eval_biased(x.row(i), x.row(j))).collect()
                    })
                };
                for (gj, k) in g.iter_mut().zip(row) {
                    *gj += sign[i] * k;
                }
            }
        }

        let scale = 1.0 / (lambda * steps as f64);
        let mut support = Vec::new();
        let mut coef = Vec::new();
        for i in 0..n {
            if alpha[i] > 0 {
                support.push(x.row(i).to_vec());
                coef.push(alpha[i] as f64 * sign[i] * scale);
            }
        }
        SvcModel {
            kernel,
            support,
            coef,
            n_features: x.n_cols(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_support(&self) -> usize {
        self.support.len()
    }

    pub fn kernel(&self) -> &KernelFn {
        &self.kernel
    }

    pub fn decision(&self, row: &[f64]) -> f64 {
        self.support
            .iter()
            .zip(&self.coef)
            .map(|(s, c)| c * self.kernel.eval_biased(s, row))
            .sum()
    }

    pub fn predict_row(&self, row: &[f64]) -> u8 {
        u8::from(self.decision(row) > 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> (FeatureMatrix, Vec<u8>) {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..30 {
            let t = i as f64 / 30.0;
            rows.push(vec![-1.0 - t, -0.5 + t]);
            y.push(0);
            rows.push(vec![1.0 + t, 0.5 - t]);
            y.push(1);
        }
        (FeatureMatrix::from_rows(&rows), y)
    }

    fn accuracy(m: &SvcModel, x: &FeatureMatrix, y: &[u8]) -> f64 {
        let hits = (0..x.n_rows())
            .filter(|&i| m.predict_row(x.row(i)) == y[i])
            .count();
        hits as f64 / y.len() as f64
    }

    #[test]
    fn separable_blobs_are_learned_by_every_kernel() {
        let (x, y) = blobs();
        for kernel in [Kernel::Linear, Kernel::Rbf, Kernel::Poly] {
            let m = SvcModel::fit(
                &x,
                &y,
                &SvcParams {
                    c: 10.0,
                    kernel,
                    epochs: 20,
                },
                5,
            );
            assert!(accuracy(&m, &x, &y) >= 0.95, "{kernel:?}");
        }
    }

    #[test]
    fn gamma_uses_feature_variance() {
        let x = FeatureMatrix::from_rows(&[vec![0.0, 2.0], vec![2.0, 0.0]]);
        // entries {0,2,2,0}: var = 1, p = 2
        assert_eq!(KernelFn::fit(Kernel::Rbf, &x).gamma, 0.5);
        let flat = FeatureMatrix::from_rows(&[vec![1.0], vec![1.0]]);
        assert_eq!(KernelFn::fit(Kernel::Rbf, &flat).gamma, 1.0);
    }

    #[test]
    fn training_is_seeded() {
        let (x, y) = blobs();
        let p = SvcParams {
            c: 1.0,
            kernel: Kernel::Sigmoid,
            epochs: 5,
        };
        assert_eq!(SvcModel::fit(&x, &y, &p, 3), SvcModel::fit(&x, &y, &p, 3));
    }
}
