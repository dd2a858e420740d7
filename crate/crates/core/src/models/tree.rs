//! Greedy CART decision tree for binary targets.
//!
//! Samples are presorted once per feature; each split stably partitions the
//! sorted orders of its node, so a level of the tree costs `O(n * p)`.
//! Ties between candidate splits resolve to the lowest feature index, then
//! the lowest threshold. Thresholds are midpoints between consecutive
//! distinct values and a row goes left when `value <= threshold`.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{ClassWeight, Criterion, TreeParams};
use crate::data::FeatureMatrix;
use crate::seed::{self, Rng};

/// Gini impurity of weighted class totals.
pub fn gini(w: [f64; 2]) -> f64 {
    let total = w[0] + w[1];
    if total <= 0.0 {
        return 0.0;
    }
    let p0 = w[0] / total;
    let p1 = w[1] / total;
    1.0 - p0 * p0 - p1 * p1
}

/// Shannon entropy (base 2) of weighted class totals.
pub fn entropy(w: [f64; 2]) -> f64 {
    let total = w[0] + w[1];
    if total <= 0.0 {
        return 0.0;
    }
    w.iter()
        .map(|&c| {
            let p = c / total;
            if p > 0.0 {
                -p * p.log2()
            } else {
                0.0
            }
        })
        .sum()
}

fn impurity(c: Criterion, w: [f64; 2]) -> f64 {
    match c {
        Criterion::Gini => gini(w),
        Criterion::Entropy => entropy(w),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        label: u8,
        n_samples: usize,
        counts: [usize; 2],
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        n_samples: usize,
    },
}

impl Node {
    pub fn n_samples(&self) -> usize {
        match *self {
            Node::Leaf { n_samples, .. } | Node::Split { n_samples, .. } => n_samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    n_features: usize,
    params: TreeParams,
}

/// Per-class weights: `n / (2 * n_class)` when balanced, 1 otherwise.
pub fn class_weights(mode: ClassWeight, labels: impl Iterator<Item = u8>) -> [f64; 2] {
    match mode {
        ClassWeight::None => [1.0, 1.0],
        ClassWeight::Balanced => {
            let mut n = [0usize; 2];
            for l in labels {
                n[l as usize] += 1;
            }
            let total = (n[0] + n[1]) as f64;
            let w = |c: usize| {
                if n[c] == 0 {
                    1.0
                } else {
                    total / (2.0 * n[c] as f64)
                }
            };
            [w(0), w(1)]
        }
    }
}

struct Builder<'a> {
    params: &'a TreeParams,
    n_features: usize,
    labels: Vec<u8>,
    weight: [f64; 2],
    /// values[f][i]: feature f of sample i
    values: Vec<Vec<f64>>,
    /// order[f]: sample ids sorted by feature f; node segments are aligned across features
    order: Vec<Vec<u32>>,
    scratch: Vec<u32>,
    goes_left: Vec<bool>,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    n_left: usize,
    decrease: f64,
}

impl<'a> Builder<'a> {
    fn new(x: &FeatureMatrix, y: &[u8], rows: &[usize], params: &'a TreeParams) -> Self {
        let p = x.n_cols();
        let labels: Vec<u8> = rows.iter().map(|&r| y[r]).collect();
        let weight = class_weights(params.class_weight, labels.iter().copied());
        let values: Vec<Vec<f64>> = (0..p)
            .map(|f| rows.iter().map(|&r| x.get(r, f)).collect())
            .collect();
        let order = values
            .iter()
            .map(|v| {
                let mut o: Vec<u32> = (0..rows.len() as u32).collect();
                o.sort_by(|&a, &b| v[a as usize].total_cmp(&v[b as usize]));
                o
            })
            .collect();
        Builder {
            params,
            n_features: p,
            labels,
            weight,
            values,
            order,
            scratch: Vec::with_capacity(rows.len()),
            goes_left: vec![false; rows.len()],
            nodes: Vec::new(),
        }
    }

    fn counts(&self, lo: usize, hi: usize) -> [usize; 2] {
        let mut c = [0usize; 2];
        // any feature order holds the node's sample set
        let ids: Box<dyn Iterator<Item = usize>> = if self.n_features > 0 {
            Box::new(self.order[0][lo..hi].iter().map(|&i| i as usize))
        } else {
            Box::new(lo..hi)
        };
        for i in ids {
            c[self.labels[i] as usize] += 1;
        }
        c
    }

    fn weighted(&self, c: [usize; 2]) -> [f64; 2] {
        [c[0] as f64 * self.weight[0], c[1] as f64 * self.weight[1]]
    }

    fn leaf(&self, lo: usize, hi: usize) -> Node {
        let counts = self.counts(lo, hi);
        let w = self.weighted(counts);
        Node::Leaf {
            label: u8::from(w[1] > w[0]),
            n_samples: hi - lo,
            counts,
        }
    }

    fn best_split(&self, lo: usize, hi: usize, features: &[usize]) -> Option<BestSplit> {
        let n = hi - lo;
        let min_leaf = self.params.min_samples_leaf;
        let counts = self.counts(lo, hi);
        let w_parent = self.weighted(counts);
        let w_total = w_parent[0] + w_parent[1];
        let parent = impurity(self.params.criterion, w_parent) * w_total;

        let mut best: Option<BestSplit> = None;
        let mut best_decrease = 1e-12 * w_total.max(1.0);
        for &f in features {
            let seg = &self.order[f][lo..hi];
            let vals = &self.values[f];
            let mut left = [0usize; 2];
            for k in 0..n - 1 {
                let i = seg[k] as usize;
                left[self.labels[i] as usize] += 1;
                let n_left = k + 1;
                let v = vals[i];
                let v_next = vals[seg[k + 1] as usize];
                if v >= v_next || n_left < min_leaf {
                    continue;
                }
                if n - n_left < min_leaf {
                    break;
                }
                let right = [counts[0] - left[0], counts[1] - left[1]];
                let wl = self.weighted(left);
                let wr = self.weighted(right);
                let child = impurity(self.params.criterion, wl) * (wl[0] + wl[1])
                    + impurity(self.params.criterion, wr) * (wr[0] + wr[1]);
                let decrease = parent - child;
                if decrease > best_decrease {
                    let mut threshold = v + (v_next - v) / 2.0;
                    if threshold >= v_next {
                        threshold = v;
                    }
                    best_decrease = decrease;
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        n_left,
                        decrease,
                    });
                }
            }
        }
        best
    }

    fn partition(&mut self, lo: usize, hi: usize, split: &BestSplit) {
        for &i in &self.order[split.feature][lo..lo + split.n_left] {
            self.goes_left[i as usize] = true;
        }
        for f in 0..self.n_features {
            self.scratch.clear();
            let seg = &mut self.order[f][lo..hi];
            let mut w = 0;
            for k in 0..seg.len() {
                let i = seg[k];
                if self.goes_left[i as usize] {
                    seg[w] = i;
                    w += 1;
                } else {
                    self.scratch.push(i);
                }
            }
            seg[w..].copy_from_slice(&self.scratch);
        }
        for &i in &self.order[split.feature][lo..lo + split.n_left] {
            self.goes_left[i as usize] = false;
        }
    }

    fn build(mut self, rng: &mut Rng) -> Vec<Node> {
        let m = self.labels.len();
        let p = self.n_features;
        let k = self.params.max_features.count(p);
        self.nodes.push(self.leaf(0, m));
        // (node index, lo, hi)
        let mut stack = vec![(0usize, 0usize, m)];
        while let Some((id, lo, hi)) = stack.pop() {
            let n = hi - lo;
            let counts = self.counts(lo, hi);
            let pure = counts[0] == 0 || counts[1] == 0;
            if pure
                || p == 0
                || n < self.params.min_samples_split
                || n < 2 * self.params.min_samples_leaf
            {
                continue;
            }
            let features: Vec<usize> = if k >= p {
                (0..p).collect()
            } else {
                let mut f = index::sample(rng, p, k).into_vec();
                f.sort_unstable();
                f
            };
            let Some(split) = self.best_split(lo, hi, &features) else {
                continue;
            };
            debug_assert!(split.decrease > 0.0);
            self.partition(lo, hi, &split);
            let mid = lo + split.n_left;
            let left = self.nodes.len();
            self.nodes.push(self.leaf(lo, mid));
            let right = self.nodes.len();
            self.nodes.push(self.leaf(mid, hi));
            self.nodes[id] = Node::Split {
                feature: split.feature,
                threshold: split.threshold,
                left,
                right,
                n_samples: n,
            };
            stack.push((right, mid, hi));
            stack.push((left, lo, mid));
        }
        self.nodes
    }
}

impl DecisionTree {
    pub fn fit(x: &FeatureMatrix, y: &[u8], params: &TreeParams, seed: u64) -> DecisionTree {
        let rows: Vec<usize> = (0..x.n_rows()).collect();
        Self::fit_rows(x, y, &rows, params, &mut seed::rng(seed))
    }

    /// Fits on the sample multiset `rows` (duplicates allowed, as in a bootstrap draw).
    pub fn fit_rows(
        x: &FeatureMatrix,
        y: &[u8],
        rows: &[usize],
        params: &TreeParams,
        rng: &mut Rng,
    ) -> DecisionTree {
        let nodes = Builder::new(x, y, rows, params).build(rng);
        DecisionTree {
            nodes,
            n_features: x.n_cols(),
            params: *params,
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn params(&self) -> &TreeParams {
        &self.params
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Index of the leaf reached by `row`.
    pub fn apply(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> u8 {
        match self.nodes[self.apply(row)] {
            Node::Leaf { label, .. } => label,
            Node::Split { .. } => unreachable!(),
        }
    }
}
