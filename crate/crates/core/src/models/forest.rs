use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::tree::DecisionTree;
use super::ForestParams;
use crate::data::FeatureMatrix;
use crate::seed;

/// Bagged ensemble of decision trees with majority vote.
///
/// Tree `i` draws from the stream seeded with `seed + i`, so a one-tree
/// forest without bootstrap reproduces a lone tree trained with `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    trees: Vec<DecisionTree>,
    n_features: usize,
}

impl RandomForest {
    pub fn fit(x: &FeatureMatrix, y: &[u8], params: &ForestParams, seed: u64) -> RandomForest {
        let n = x.n_rows();
        let trees = (0..params.n_trees)
            .map(|i| {
                let mut rng = seed::rng(seed.wrapping_add(i as u64));
                let rows: Vec<usize> = if params.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                DecisionTree::fit_rows(x, y, &rows, &params.tree, &mut rng)
            })
            .collect();
        RandomForest {
            trees,
            n_features: x.n_cols(),
        }
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Majority vote; ties go to 0.
    pub fn predict_row(&self, row: &[f64]) -> u8 {
        let ones = self
            .trees
            .iter()
            .filter(|t| t.predict_row(row) == 1)
            .count();
        u8::from(2 * ones > self.trees.len())
    }
}
