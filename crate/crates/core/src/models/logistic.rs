use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{LogisticParams, Penalty};
use crate::data::FeatureMatrix;

/// Binary logistic regression with an unpenalized intercept.
///
/// Minimizes `(1/n) * [sum_i logloss_i + (1/C) * ||w||^2]` (the penalty
/// term is dropped when `penalty = none`) with L-BFGS and Armijo
/// backtracking. Stops when the gradient's max-norm falls below `tol` or
/// after `max_iter` iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    weights: Vec<f64>,
    intercept: f64,
    iterations: usize,
    converged: bool,
}

const HISTORY: usize = 10;

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Objective<'a> {
    x: &'a FeatureMatrix,
    y: &'a [u8],
    l2: f64,
}

impl Objective<'_> {
    /// Value and gradient at `theta = [w..., b]`.
    fn eval(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let p = self.x.n_cols();
        let n = self.x.n_rows() as f64;
        let (w, b) = (&theta[..p], theta[p]);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for i in 0..self.x.n_rows() {
            let row = self.x.row(i);
            let z = dot(w, row) + b;
            let yi = f64::from(self.y[i]);
            loss += softplus(z) - yi * z;
            let r = sigmoid(z) - yi;
            for (g, &xv) in grad[..p].iter_mut().zip(row) {
                *g += r * xv;
            }
            grad[p] += r;
        }
        let reg: f64 = w.iter().map(|v| v * v).sum::<f64>() * self.l2;
        for (g, &wv) in grad[..p].iter_mut().zip(w) {
            *g += 2.0 * self.l2 * wv;
        }
        grad.iter_mut().for_each(|g| *g /= n);
        (loss + reg) / n
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

impl LogisticModel {
    pub fn fit(x: &FeatureMatrix, y: &[u8], params: &LogisticParams) -> LogisticModel {
        let p = x.n_cols();
        let obj = Objective {
            x,
            y,
            l2: match params.penalty {
                Penalty::L2 => 1.0 / params.c,
                Penalty::None => 0.0,
            },
        };
        let dim = p + 1;
        let mut theta = vec![0.0; dim];
        let mut grad = vec![0.0; dim];
        let mut f = obj.eval(&theta, &mut grad);
        let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(HISTORY);
        let mut iterations = 0;
        let mut converged = max_abs(&grad) < params.tol;

        let mut next = vec![0.0; dim];
        let mut next_grad = vec![0.0; dim];
        while !converged && iterations < params.max_iter {
            iterations += 1;
            // two-loop recursion
            let mut dir: Vec<f64> = grad.iter().map(|g| -g).collect();
            let mut alphas = Vec::with_capacity(history.len());
            for (s, yv, rho) in history.iter().rev() {
                let a = rho * dot(s, &dir);
                dir.iter_mut().zip(yv).for_each(|(d, yk)| *d -= a * yk);
                alphas.push(a);
            }
            let scale = history
                .back()
                .map_or(1.0 / max_abs(&grad).max(1.0), |(s, yv, _)| {
                    dot(s, yv) / dot(yv, yv)
                });
            dir.iter_mut().for_each(|d| *d *= scale);
            for ((s, yv, rho), a) in history.iter().zip(alphas.iter().rev()) {
                let bta = rho * dot(yv, &dir);
                dir.iter_mut().zip(s).for_each(|(d, sk)| *d += (a - bta) * sk);
            }
            let mut slope = dot(&grad, &dir);
            if slope >= 0.0 {
                // not a descent direction; restart from steepest descent
                history.clear();
                dir = grad.iter().map(|g| -g / max_abs(&grad).max(1.0)).collect();
                slope = dot(&grad, &dir);
            }

            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                for k in 0..dim {
                    next[k] = theta[k] + step * dir[k];
                }
                let f_next = obj.eval(&next, &mut next_grad);
                if f_next.is_finite() && f_next <= f + 1e-4 * step * slope {
                    let s: Vec<f64> = next.iter().zip(&theta).map(|(a, b)| a - b).collect();
                    let yv: Vec<f64> = next_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
                    let sy = dot(&s, &yv);
                    if sy > 1e-12 * dot(&yv, &yv).max(f64::MIN_POSITIVE) {
                        if history.len() == HISTORY {
                            history.pop_front();
                        }
                        history.push_back((s, yv, 1.0 / sy));
                    }
                    theta.copy_from_slice(&next);
                    grad.copy_from_slice(&next_grad);
                    f = f_next;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
            converged = max_abs(&grad) < params.tol;
        }

        LogisticModel {
            intercept: theta[p],
            weights: theta[..p].to_vec(),
            iterations,
            converged,
        }
    }

    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn decision(&self, row: &[f64]) -> f64 {
        dot(&self.weights, row) + self.intercept
    }

    pub fn predict_row(&self, row: &[f64]) -> u8 {
        u8::from(self.decision(row) > 0.0)
    }
}
