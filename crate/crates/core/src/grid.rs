//! Hyperparameter spaces, full-factorial expansion and the evaluation sweep.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{make_splits, DataError, Dataset, Split, SplitPlan};
use crate::metrics::{evaluate_predictions, GroupRates, MetricId, MetricVector};
use crate::models::{
    train_on_rows, HyperValue, HyperparamAssignment, ModelFamily, ModelSettings, Params,
    TrainedModel,
};
use crate::seed;

pub const DEFAULT_GRID_CAP: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid hyperparameter space: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("grid has {size} assignments, over the cap of {cap}; reduce the hyperparameter ranges")]
    TooLarge { size: u128, cap: usize },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("worker pool: {0}")]
    Pool(String),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Ordered admissible values for each hyperparameter of one family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperparamSpace {
    pub family: ModelFamily,
    pub params: IndexMap<String, Vec<HyperValue>>,
}

fn strs(v: &[&str]) -> Vec<HyperValue> {
    v.iter().map(|&s| HyperValue::from(s)).collect()
}

fn ints(v: &[i64]) -> Vec<HyperValue> {
    v.iter().map(|&i| HyperValue::Int(i)).collect()
}

fn floats(v: &[f64]) -> Vec<HyperValue> {
    v.iter().map(|&x| HyperValue::Float(x)).collect()
}

const C_RANGE: [f64; 7] = [0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0];

/// The default grid for each family.
pub fn default_space(family: ModelFamily) -> HyperparamSpace {
    let mut params: IndexMap<String, Vec<HyperValue>> = IndexMap::new();
    let mut put = |k: &str, v: Vec<HyperValue>| {
        params.insert(k.to_owned(), v);
    };
    match family {
        ModelFamily::DecisionTree | ModelFamily::RandomForest => {
            put("criterion", strs(&["gini", "entropy"]));
            put("max_features", strs(&["none", "sqrt", "log2"]));
            put("min_samples_split", ints(&[2, 4, 8, 12, 16, 20]));
            put("min_samples_leaf", ints(&[1, 4, 8, 12, 16, 20]));
            put("class_weight", strs(&["none", "balanced"]));
            if family == ModelFamily::RandomForest {
                put("bootstrap", vec![false.into(), true.into()]);
            }
        }
        ModelFamily::LogisticRegression => {
            put("C", floats(&C_RANGE));
            put("penalty", strs(&["l2", "none"]));
        }
        ModelFamily::Svc => {
            put("C", floats(&C_RANGE));
            put("kernel", strs(&["linear", "poly", "rbf", "sigmoid"]));
        }
    }
    HyperparamSpace { family, params }
}

/// One feasibility problem found in a user-supplied space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub family: ModelFamily,
    pub hyperparameter: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<HyperValue>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}: {}", self.family, self.hyperparameter, self.message)?;
        if let Some(v) = &self.value {
            write!(f, " (got {v})")?;
        }
        Ok(())
    }
}

enum Kind {
    Levels(&'static [&'static str]),
    PositiveInt,
    PositiveReal,
    Flag,
}

fn kind_of(family: ModelFamily, name: &str) -> Option<Kind> {
    Some(match (family, name) {
        (ModelFamily::DecisionTree | ModelFamily::RandomForest, n) => match n {
            "criterion" => Kind::Levels(&["gini", "entropy"]),
            "max_features" => Kind::Levels(&["none", "sqrt", "log2"]),
            "min_samples_split" | "min_samples_leaf" => Kind::PositiveInt,
            "class_weight" => Kind::Levels(&["none", "balanced"]),
            "bootstrap" if family == ModelFamily::RandomForest => Kind::Flag,
            _ => return None,
        },
        (ModelFamily::LogisticRegression, "C") | (ModelFamily::Svc, "C") => Kind::PositiveReal,
        (ModelFamily::LogisticRegression, "penalty") => Kind::Levels(&["l2", "none"]),
        (ModelFamily::Svc, "kernel") => Kind::Levels(&["linear", "poly", "rbf", "sigmoid"]),
        _ => return None,
    })
}

fn check_value(kind: &Kind, name: &str, v: &HyperValue) -> Option<String> {
    match kind {
        Kind::Levels(levels) => match v.as_str() {
            Some(s) if levels.contains(&s) => None,
            Some(s) => Some(format!(
                "unknown level '{s}'; expected one of {}",
                levels.join(", ")
            )),
            None => Some(format!("{name} must be one of {}", levels.join(", "))),
        },
        Kind::PositiveInt => match v.as_f64() {
            Some(x) if x.fract() == 0.0 && x >= 1.0 => None,
            _ => Some(format!("{name} must be an integer >= 1")),
        },
        Kind::PositiveReal => match v.as_f64() {
            Some(x) if x.is_finite() && x > 0.0 => None,
            _ => Some(format!("{name} must be > 0")),
        },
        Kind::Flag => match v {
            HyperValue::Bool(_) => None,
            _ => Some(format!("{name} must be true or false")),
        },
    }
}

/// Collects every feasibility violation in `space`; `Ok` when there are none.
pub fn validate_space(space: &HyperparamSpace) -> Result<(), Vec<Violation>> {
    let family = space.family;
    let mut out = Vec::new();
    let mut push = |h: &str, value: Option<HyperValue>, message: String| {
        out.push(Violation {
            family,
            hyperparameter: h.to_owned(),
            value,
            message,
        })
    };

    for name in family.hyperparameters() {
        if !space.params.contains_key(*name) {
            push(name, None, "missing hyperparameter".into());
        }
    }
    for (name, values) in &space.params {
        let Some(kind) = kind_of(family, name) else {
            push(name, None, format!("unknown hyperparameter for {family}"));
            continue;
        };
        if values.is_empty() {
            push(name, None, "empty range".into());
            continue;
        }
        for (i, v) in values.iter().enumerate() {
            if let Some(msg) = check_value(&kind, name, v) {
                push(name, Some(v.clone()), msg);
            } else if values[..i].iter().any(|u| same_value(u, v)) {
                push(name, Some(v.clone()), "duplicate value".into());
            }
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

fn same_value(a: &HyperValue, b: &HyperValue) -> bool {
    match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) => x == y,
        _ => a == b,
    }
}

impl HyperparamSpace {
    /// Canonical value types: reals as floats, integer counts as ints, and
    /// hyperparameters in the family's declaration order.
    pub fn normalized(&self) -> HyperparamSpace {
        let mut params = IndexMap::new();
        let order = self.family.hyperparameters();
        let known = order.iter().filter_map(|n| self.params.get_key_value(*n));
        let unknown = self
            .params
            .iter()
            .filter(|(k, _)| !order.contains(&k.as_str()));
        for (name, values) in known.chain(unknown) {
            let kind = kind_of(self.family, name);
            let vals = values
                .iter()
                .map(|v| match (&kind, v) {
                    (Some(Kind::PositiveReal), HyperValue::Int(i)) => HyperValue::Float(*i as f64),
                    (Some(Kind::PositiveInt), HyperValue::Float(x)) if x.fract() == 0.0 => {
                        HyperValue::Int(*x as i64)
                    }
                    _ => v.clone(),
                })
                .collect();
            params.insert(name.clone(), vals);
        }
        HyperparamSpace {
            family: self.family,
            params,
        }
    }

    /// Number of grid points, saturating.
    pub fn size(&self) -> u128 {
        self.params
            .values()
            .map(|v| v.len() as u128)
            .fold(1u128, |a, b| a.saturating_mul(b))
    }
}

/// Cartesian product in lexicographic order: the first hyperparameter
/// varies slowest, values follow list order.
pub fn expand(space: &HyperparamSpace, cap: usize) -> Result<Vec<HyperparamAssignment>, GridError> {
    validate_space(space).map_err(GridError::Invalid)?;
    let size = space.size();
    if size > cap as u128 {
        return Err(GridError::TooLarge { size, cap });
    }
    let lists: Vec<(&String, &Vec<HyperValue>)> = space.params.iter().collect();
    let mut idx = vec![0usize; lists.len()];
    let mut out = Vec::with_capacity(size as usize);
    for _ in 0..size {
        let values: Params = lists
            .iter()
            .zip(&idx)
            .map(|((name, vals), &i)| ((*name).clone(), vals[i].clone()))
            .collect();
        out.push(HyperparamAssignment {
            family: space.family,
            values,
        });
        for k in (0..lists.len()).rev() {
            idx[k] += 1;
            if idx[k] < lists[k].1.len() {
                break;
            }
            idx[k] = 0;
        }
    }
    Ok(out)
}

/// Receives one tick per completed (assignment, split) task, from any worker.
pub trait ProgressSink: Sync {
    fn tick(&self);
}

/// Shared monotone task counter.
#[derive(Debug, Default)]
pub struct Progress {
    completed: AtomicU64,
    total: AtomicU64,
}

impl Progress {
    pub fn new(total: u64) -> Progress {
        Progress {
            completed: AtomicU64::new(0),
            total: AtomicU64::new(total),
        }
    }

    /// A counter resumed at known values, e.g. for a job reloaded from disk.
    pub fn with_counts(completed: u64, total: u64) -> Progress {
        Progress {
            completed: AtomicU64::new(completed),
            total: AtomicU64::new(total),
        }
    }

    pub fn set_total(&self, total: u64) {
        self.total.store(total, Ordering::Release);
    }

    pub fn completed(&self) -> u64 {
        self.completed.load(Ordering::Acquire)
    }

    pub fn total(&self) -> u64 {
        self.total.load(Ordering::Acquire)
    }

    pub fn fraction(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            (self.completed() as f64 / total as f64).min(1.0)
        }
    }
}

impl ProgressSink for Progress {
    fn tick(&self) {
        self.completed.fetch_add(1, Ordering::AcqRel);
    }
}

/// Discards ticks.
pub struct NoProgress;

impl ProgressSink for NoProgress {
    fn tick(&self) {}
}

/// Called with every model trained during a sweep.
pub type Inspector<'a> = &'a (dyn Fn(&TrainedModel) + Sync);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOptions {
    pub metrics: Vec<MetricId>,
    pub seed: u64,
    pub workers: usize,
    pub settings: ModelSettings,
    pub cap: usize,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions {
            metrics: MetricId::CASE_STUDY.to_vec(),
            seed: 0,
            workers: 1,
            settings: ModelSettings::default(),
            cap: DEFAULT_GRID_CAP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub variance: f64,
}

impl Stat {
    /// Mean and population variance.
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Stat { mean, variance })
    }
}

/// Aggregated gap and score of one fairness metric. Both are `None` when
/// the metric was undefined on at least one evaluated split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStat {
    pub gap: Option<Stat>,
    pub score: Option<Stat>,
    pub undefined_splits: usize,
}

/// Per-group rate means over the splits where each rate is defined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RateMeans {
    pub sel: Option<f64>,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub ppv: Option<f64>,
    pub acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitFailure {
    pub split: usize,
    pub error: String,
}

/// Aggregated evaluation of one grid point across all splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub family: ModelFamily,
    /// Position in the family's expand order.
    pub index: usize,
    pub assignment: Params,
    pub n_splits: usize,
    /// False when every split failed; such records never enter a frontier.
    pub usable: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failed_splits: Vec<SplitFailure>,
    pub accuracy: Option<Stat>,
    pub balanced_accuracy: Option<Stat>,
    pub metrics: BTreeMap<MetricId, MetricStat>,
    pub group_rates: [RateMeans; 2],
}

impl EvaluationRecord {
    pub fn accuracy_mean(&self) -> Option<f64> {
        self.accuracy.map(|s| s.mean)
    }

    pub fn score_mean(&self, m: MetricId) -> Option<f64> {
        self.metrics.get(&m).and_then(|s| s.score).map(|s| s.mean)
    }

    pub fn gap_mean(&self, m: MetricId) -> Option<f64> {
        self.metrics.get(&m).and_then(|s| s.gap).map(|s| s.mean)
    }

    pub fn hyperparameter(&self, name: &str) -> Option<&HyperValue> {
        self.assignment.get(name)
    }
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    Stat::of(&v).map(|s| s.mean)
}

fn aggregate(
    family: ModelFamily,
    index: usize,
    assignment: &HyperparamAssignment,
    outcomes: &[Result<MetricVector, String>],
    metrics: &[MetricId],
) -> EvaluationRecord {
    let ok: Vec<&MetricVector> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
    let failed_splits = outcomes
        .iter()
        .enumerate()
        .filter_map(|(split, o)| {
            o.as_ref().err().map(|e| SplitFailure {
                split,
                error: e.clone(),
            })
        })
        .collect();

    let accuracy = Stat::of(&ok.iter().map(|v| v.accuracy).collect::<Vec<_>>());
    let balanced: Option<Vec<f64>> = ok.iter().map(|v| v.balanced_accuracy).collect();
    let balanced_accuracy = balanced.and_then(|b| Stat::of(&b));

    let metric_stats = metrics
        .iter()
        .map(|&m| {
            let gaps: Vec<Option<f64>> = ok.iter().map(|v| v.gap(m)).collect();
            let undefined_splits = gaps.iter().filter(|g| g.is_none()).count();
            let gap = if undefined_splits == 0 {
                Stat::of(&gaps.iter().flatten().copied().collect::<Vec<_>>())
            } else {
                None
            };
            let score = gap.map(|g| Stat {
                mean: 1.0 - g.mean,
                variance: g.variance,
            });
            (
                m,
                MetricStat {
                    gap,
                    score,
                    undefined_splits,
                },
            )
        })
        .collect();

    let rate = |g: usize, f: fn(&GroupRates) -> Option<f64>| {
        mean_defined(ok.iter().map(|v| f(&v.rates[g])))
    };
    let group_rates = [0, 1].map(|g| RateMeans {
        sel: rate(g, |r| r.sel),
        tpr: rate(g, |r| r.tpr),
        fpr: rate(g, |r| r.fpr),
        ppv: rate(g, |r| r.ppv),
        acc: rate(g, |r| r.acc),
    });

    EvaluationRecord {
        family,
        index,
        assignment: assignment.values.clone(),
        n_splits: outcomes.len(),
        usable: !ok.is_empty(),
        failed_splits,
        accuracy,
        balanced_accuracy,
        metrics: metric_stats,
        group_rates,
    }
}

/// Seed of the (assignment, split) task.
pub fn task_seed(base: u64, family: ModelFamily, assignment: usize, split: usize) -> u64 {
    seed::derive(base, &[family as u64, assignment as u64, split as u64])
}

fn evaluate_task(
    d: &Dataset,
    a: &HyperparamAssignment,
    split: &Split,
    task_seed: u64,
    opts: &GridOptions,
    inspect: Option<Inspector<'_>>,
) -> Result<MetricVector, String> {
    let model = train_on_rows(d, &split.train, a, task_seed, &opts.settings)
        .map_err(|e| e.to_string())?;
    if let Some(f) = inspect {
        f(&model);
    }
    let x_test = d.features.select_rows(&split.test);
    let pred = model.predict(&x_test).map_err(|e| e.to_string())?;
    let y_true: Vec<u8> = split.test.iter().map(|&i| d.target[i]).collect();
    let s: Vec<u8> = split.test.iter().map(|&i| d.sensitive[i]).collect();
    evaluate_predictions(&y_true, &pred, &s, &opts.metrics).map_err(|e| e.to_string())
}

/// Evaluates every assignment of `space` on every split and aggregates
/// per assignment, in expand order. Output does not depend on the worker
/// count.
pub fn run_grid_on_splits(
    d: &Dataset,
    space: &HyperparamSpace,
    splits: &[Split],
    opts: &GridOptions,
    sink: &dyn ProgressSink,
    inspect: Option<Inspector<'_>>,
) -> Result<Vec<EvaluationRecord>, GridError> {
    let assignments = expand(space, opts.cap)?;
    let n_splits = splits.len();
    let tasks: Vec<(usize, usize)> = (0..assignments.len())
        .flat_map(|a| (0..n_splits).map(move |s| (a, s)))
        .collect();

    let run = |&(a, s): &(usize, usize)| {
        let out = evaluate_task(
            d,
            &assignments[a],
            &splits[s],
            task_seed(opts.seed, space.family, a, s),
            opts,
            inspect,
        );
        sink.tick();
        out
    };

    let outcomes: Vec<Result<MetricVector, String>> = if opts.workers <= 1 {
        tasks.iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .map_err(|e| GridError::Pool(e.to_string()))?;
        pool.install(|| tasks.par_iter().map(run).collect())
    };

    Ok(assignments
        .iter()
        .enumerate()
        .map(|(i, a)| {
            aggregate(
                space.family,
                i,
                a,
                &outcomes[i * n_splits..(i + 1) * n_splits],
                &opts.metrics,
            )
        })
        .collect())
}

/// Generates the splits from `plan` and runs the sweep.
pub fn run_grid(
    d: &Dataset,
    space: &HyperparamSpace,
    plan: &SplitPlan,
    opts: &GridOptions,
    sink: &dyn ProgressSink,
) -> Result<Vec<EvaluationRecord>, GridError> {
    let splits = make_splits(d, plan)?;
    run_grid_on_splits(d, space, &splits, opts, sink, None)
}
