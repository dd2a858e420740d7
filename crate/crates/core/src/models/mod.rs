//! Classifier families behind a single train/predict contract.
//!
//! A model is configured by a [`HyperparamAssignment`] (one point of a
//! family's grid) plus run-wide [`ModelSettings`] that are not searched
//! over (forest size, optimizer budgets).

mod forest;
mod logistic;
mod svc;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, FeatureMatrix};

pub use forest::RandomForest;
pub use logistic::LogisticModel;
pub use svc::SvcModel;
pub use tree::{DecisionTree, Node};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("training data contains a single class")]
    SingleClass,
    #[error("training data needs at least 2 rows, found {0}")]
    TooFewRows(usize),
    #[error("non-finite feature value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("feature arity mismatch: model expects {expected}, got {found}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("{features} feature rows but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("labels must be 0/1")]
    NotBinary,
    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    DecisionTree,
    RandomForest,
    LogisticRegression,
    Svc,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 4] = [
        ModelFamily::DecisionTree,
        ModelFamily::RandomForest,
        ModelFamily::LogisticRegression,
        ModelFamily::Svc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelFamily::DecisionTree => "decision_tree",
            ModelFamily::RandomForest => "random_forest",
            ModelFamily::LogisticRegression => "logistic_regression",
            ModelFamily::Svc => "svc",
        }
    }

    /// Hyperparameter names in declaration order.
    pub fn hyperparameters(self) -> &'static [&'static str] {
        match self {
            ModelFamily::DecisionTree => &[
                "criterion",
                "max_features",
                "min_samples_split",
                "min_samples_leaf",
                "class_weight",
            ],
            ModelFamily::RandomForest => &[
                "criterion",
                "max_features",
                "min_samples_split",
                "min_samples_leaf",
                "class_weight",
                "bootstrap",
            ],
            ModelFamily::LogisticRegression => &["C", "penalty"],
            ModelFamily::Svc => &["C", "kernel"],
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelFamily {
    type Err = ModelError;

    /// Accepts the canonical ids and the short aliases `dt`, `rf`, `lr`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "decision_tree" | "dt" => Ok(ModelFamily::DecisionTree),
            "random_forest" | "rf" => Ok(ModelFamily::RandomForest),
            "logistic_regression" | "lr" => Ok(ModelFamily::LogisticRegression),
            "svc" | "svm" => Ok(ModelFamily::Svc),
            other => Err(ModelError::InvalidAssignment(format!(
                "unknown model family '{other}'"
            ))),
        }
    }
}

/// One hyperparameter value as it appears in configs and reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HyperValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl HyperValue {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            HyperValue::Int(i) => Some(i as f64),
            HyperValue::Float(f) => Some(f),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            HyperValue::Str(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for HyperValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HyperValue::Bool(b) => write!(f, "{b}"),
            HyperValue::Int(i) => write!(f, "{i}"),
            HyperValue::Float(x) => write!(f, "{x}"),
            HyperValue::Str(s) => f.write_str(s),
        }
    }
}

impl From<&str> for HyperValue {
    fn from(s: &str) -> Self {
        HyperValue::Str(s.to_owned())
    }
}

impl From<i64> for HyperValue {
    fn from(i: i64) -> Self {
        HyperValue::Int(i)
    }
}

impl From<f64> for HyperValue {
    fn from(x: f64) -> Self {
        HyperValue::Float(x)
    }
}

impl From<bool> for HyperValue {
    fn from(b: bool) -> Self {
        HyperValue::Bool(b)
    }
}

/// Flat name → value map; serializes as a plain JSON object.
pub type Params = IndexMap<String, HyperValue>;

/// One point of a family's hyperparameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperparamAssignment {
    pub family: ModelFamily,
    pub values: Params,
}

impl HyperparamAssignment {
    pub fn new<I, K, V>(family: ModelFamily, values: I) -> HyperparamAssignment
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<HyperValue>,
    {
        HyperparamAssignment {
            family,
            values: values
                .into_iter()
                .map(|(k, v)| (k.into(), v.into()))
                .collect(),
        }
    }

    fn get(&self, name: &str) -> Result<&HyperValue, ModelError> {
        self.values
            .get(name)
            .ok_or_else(|| ModelError::InvalidAssignment(format!("missing hyperparameter '{name}'")))
    }

    fn level(&self, name: &str) -> Result<&str, ModelError> {
        let v = self.get(name)?;
        v.as_str()
            .ok_or_else(|| ModelError::InvalidAssignment(format!("{name}: expected a string, got {v}")))
    }

    fn positive_int(&self, name: &str) -> Result<usize, ModelError> {
        let v = self.get(name)?;
        match v.as_f64() {
            Some(x) if x >= 1.0 && x.fract() == 0.0 => Ok(x as usize),
            _ => Err(ModelError::InvalidAssignment(format!(
                "{name} must be a positive integer, got {v}"
            ))),
        }
    }

    fn positive_float(&self, name: &str) -> Result<f64, ModelError> {
        let v = self.get(name)?;
        match v.as_f64() {
            Some(x) if x > 0.0 && x.is_finite() => Ok(x),
            _ => Err(ModelError::InvalidAssignment(format!("{name} must be > 0, got {v}"))),
        }
    }

    fn flag(&self, name: &str) -> Result<bool, ModelError> {
        match self.get(name)? {
            HyperValue::Bool(b) => Ok(*b),
            v => Err(ModelError::InvalidAssignment(format!(
                "{name} must be true or false, got {v}"
            ))),
        }
    }

    fn check_names(&self) -> Result<(), ModelError> {
        let expected = self.family.hyperparameters();
        for k in self.values.keys() {
            if !expected.contains(&k.as_str()) {
                return Err(ModelError::InvalidAssignment(format!(
                    "unknown hyperparameter '{k}' for {}",
                    self.family
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Gini,
    Entropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    Sqrt,
    Log2,
}

impl MaxFeatures {
    /// Number of candidate features per split out of `p`.
    pub fn count(self, p: usize) -> usize {
        match self {
            MaxFeatures::All => p,
            MaxFeatures::Sqrt => ((p as f64).sqrt().floor() as usize).clamp(1, p.max(1)),
            MaxFeatures::Log2 => {
                if p <= 1 {
                    p.max(1)
                } else {
                    ((p as f64).log2().floor() as usize).clamp(1, p)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeight {
    None,
    Balanced,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub criterion: Criterion,
    pub max_features: MaxFeatures,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub class_weight: ClassWeight,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            criterion: Criterion::Gini,
            max_features: MaxFeatures::All,
            min_samples_split: 2,
            min_samples_leaf: 1,
            class_weight: ClassWeight::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub tree: TreeParams,
    pub bootstrap: bool,
    pub n_trees: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    L2,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub c: f64,
    pub penalty: Penalty,
    pub max_iter: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    Linear,
    Poly,
    Rbf,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvcParams {
    pub c: f64,
    pub kernel: Kernel,
    pub epochs: usize,
}

/// Run-wide model settings that are not part of the search grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub forest_trees: usize,
    pub lr_max_iter: usize,
    pub lr_tol: f64,
    pub svc_epochs: usize,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            forest_trees: 100,
            lr_max_iter: 1000,
            lr_tol: 1e-6,
            svc_epochs: 20,
        }
    }
}

/// Typed, validated model configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ModelSpec {
    DecisionTree(TreeParams),
    RandomForest(ForestParams),
    LogisticRegression(LogisticParams),
    Svc(SvcParams),
}

fn tree_params(a: &HyperparamAssignment) -> Result<TreeParams, ModelError> {
    let criterion = match a.level("criterion")? {
        "gini" => Criterion::Gini,
        "entropy" => Criterion::Entropy,
        other => return Err(ModelError::InvalidAssignment(format!("unknown criterion '{other}'"))),
    };
    let max_features = match a.level("max_features")? {
        "none" => MaxFeatures::All,
        "sqrt" => MaxFeatures::Sqrt,
        "log2" => MaxFeatures::Log2,
        other => {
            return Err(ModelError::InvalidAssignment(format!(
                "unknown max_features '{other}'"
            )))
        }
    };
    let class_weight = match a.level("class_weight")? {
        "none" => ClassWeight::None,
        "balanced" => ClassWeight::Balanced,
        other => {
            return Err(ModelError::InvalidAssignment(format!(
                "unknown class_weight '{other}'"
            )))
        }
    };
    Ok(TreeParams {
        criterion,
        max_features,
        min_samples_split: a.positive_int("min_samples_split")?,
        min_samples_leaf: a.positive_int("min_samples_leaf")?,
        class_weight,
    })
}

impl ModelSpec {
    pub fn from_assignment(
        a: &HyperparamAssignment,
        settings: &ModelSettings,
    ) -> Result<ModelSpec, ModelError> {
        a.check_names()?;
        Ok(match a.family {
            ModelFamily::DecisionTree => ModelSpec::DecisionTree(tree_params(a)?),
            ModelFamily::RandomForest => ModelSpec::RandomForest(ForestParams {
                tree: tree_params(a)?,
                bootstrap: a.flag("bootstrap")?,
                n_trees: settings.forest_trees.max(1),
            }),
            ModelFamily::LogisticRegression => {
                let penalty = match a.level("penalty")? {
                    "l2" => Penalty::L2,
                    "none" => Penalty::None,
                    other => {
                        return Err(ModelError::InvalidAssignment(format!(
                            "unknown penalty '{other}'"
                        )))
                    }
                };
                ModelSpec::LogisticRegression(LogisticParams {
                    c: a.positive_float("C")?,
                    penalty,
                    max_iter: settings.lr_max_iter,
                    tol: settings.lr_tol,
                })
            }
            ModelFamily::Svc => {
                let kernel = match a.level("kernel")? {
                    "linear" => Kernel::Linear,
                    "poly" => Kernel::Poly,
                    "rbf" => Kernel::Rbf,
                    "sigmoid" => Kernel::Sigmoid,
                    other => {
                        return Err(ModelError::InvalidAssignment(format!(
                            "unknown kernel '{other}'"
                        )))
                    }
                };
                ModelSpec::Svc(SvcParams {
                    c: a.positive_float("C")?,
                    kernel,
                    epochs: settings.svc_epochs.max(1),
                })
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Model {
    Tree(DecisionTree),
    Forest(RandomForest),
    Logistic(LogisticModel),
    Svc(SvcModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub family: ModelFamily,
    pub assignment: HyperparamAssignment,
    pub seed: u64,
    pub model: Model,
}

fn check_training_data(x: &FeatureMatrix, y: &[u8]) -> Result<(), ModelError> {
    if x.n_rows() != y.len() {
        return Err(ModelError::LengthMismatch {
            features: x.n_rows(),
            labels: y.len(),
        });
    }
    if y.len() < 2 {
        return Err(ModelError::TooFewRows(y.len()));
    }
    if y.iter().any(|&v| v > 1) {
        return Err(ModelError::NotBinary);
    }
    let ones = y.iter().filter(|&&v| v == 1).count();
    if ones == 0 || ones == y.len() {
        return Err(ModelError::SingleClass);
    }
    check_finite(x)
}

fn check_finite(x: &FeatureMatrix) -> Result<(), ModelError> {
    if let Some(pos) = x.values().iter().position(|v| !v.is_finite()) {
        let p = x.n_cols().max(1);
        return Err(ModelError::NonFinite {
            row: pos / p,
            col: pos % p,
        });
    }
    Ok(())
}

/// Trains the model described by `a` on `(x, y)`.
pub fn train(
    x: &FeatureMatrix,
    y: &[u8],
    a: &HyperparamAssignment,
    seed: u64,
    settings: &ModelSettings,
) -> Result<TrainedModel, ModelError> {
    let spec = ModelSpec::from_assignment(a, settings)?;
    check_training_data(x, y)?;
    let model = match spec {
        ModelSpec::DecisionTree(p) => Model::Tree(DecisionTree::fit(x, y, &p, seed)),
        ModelSpec::RandomForest(p) => Model::Forest(RandomForest::fit(x, y, &p, seed)),
        ModelSpec::LogisticRegression(p) => Model::Logistic(LogisticModel::fit(x, y, &p)),
        ModelSpec::Svc(p) => Model::Svc(SvcModel::fit(x, y, &p, seed)),
    };
    Ok(TrainedModel {
        family: a.family,
        assignment: a.clone(),
        seed,
        model,
    })
}

/// Trains on the rows of `d` listed in `rows`.
pub fn train_on_rows(
    d: &Dataset,
    rows: &[usize],
    a: &HyperparamAssignment,
    seed: u64,
    settings: &ModelSettings,
) -> Result<TrainedModel, ModelError> {
    let x = d.features.select_rows(rows);
    let y: Vec<u8> = rows.iter().map(|&r| d.target[r]).collect();
    train(&x, &y, a, seed, settings)
}

impl TrainedModel {
    pub fn n_features(&self) -> usize {
        match &self.model {
            Model::Tree(m) => m.n_features(),
            Model::Forest(m) => m.n_features(),
            Model::Logistic(m) => m.n_features(),
            Model::Svc(m) => m.n_features(),
        }
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<u8>, ModelError> {
        if x.n_rows() == 0 {
            return Ok(Vec::new());
        }
        if x.n_cols() != self.n_features() {
            return Err(ModelError::ArityMismatch {
                expected: self.n_features(),
                found: x.n_cols(),
            });
        }
        check_finite(x)?;
        Ok((0..x.n_rows())
            .map(|i| {
                let row = x.row(i);
                match &self.model {
                    Model::Tree(m) => m.predict_row(row),
                    Model::Forest(m) => m.predict_row(row),
                    Model::Logistic(m) => m.predict_row(row),
                    Model::Svc(m) => m.predict_row(row),
                }
            })
            .collect())
    }

    /// Decision trees that make up this model (empty for non-tree families).
    pub fn trees(&self) -> Vec<&DecisionTree> {
        match &self.model {
            Model::Tree(t) => vec![t],
            Model::Forest(f) => f.trees().iter().collect(),
            _ => Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lr(c: f64, penalty: &str) -> HyperparamAssignment {
        HyperparamAssignment::new(
            ModelFamily::LogisticRegression,
            [("C", HyperValue::Float(c)), ("penalty", penalty.into())],
        )
    }

    fn dt(split: i64, leaf: i64) -> HyperparamAssignment {
        HyperparamAssignment::new(
            ModelFamily::DecisionTree,
            [
                ("criterion", HyperValue::from("gini")),
                ("max_features", "none".into()),
                ("min_samples_split", split.into()),
                ("min_samples_leaf", leaf.into()),
                ("class_weight", "none".into()),
            ],
        )
    }

    fn and_table() -> (FeatureMatrix, Vec<u8>) {
        let x = FeatureMatrix::from_rows(&[
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
        ]);
        (x, vec![0, 0, 0, 1])
    }

    #[test]
    fn family_aliases_parse() {
        assert_eq!("lr".parse::<ModelFamily>().unwrap(), ModelFamily::LogisticRegression);
        assert_eq!("dt".parse::<ModelFamily>().unwrap(), ModelFamily::DecisionTree);
        assert_eq!("random_forest".parse::<ModelFamily>().unwrap(), ModelFamily::RandomForest);
        assert!("nn".parse::<ModelFamily>().is_err());
    }

    #[test]
    fn single_class_is_rejected() {
        let (x, _) = and_table();
        let err = train(&x, &[1, 1, 1, 1], &dt(2, 1), 0, &ModelSettings::default()).unwrap_err();
        assert_eq!(err, ModelError::SingleClass);
    }

    #[test]
    fn non_finite_is_rejected() {
        let x = FeatureMatrix::from_rows(&[vec![0.0], vec![f64::NAN]]);
        let err = train(&x, &[0, 1], &dt(2, 1), 0, &ModelSettings::default()).unwrap_err();
        assert_eq!(err, ModelError::NonFinite { row: 1, col: 0 });
    }

    #[test]
    fn predict_checks_arity_and_handles_empty() {
        let (x, y) = and_table();
        let m = train(&x, &y, &dt(2, 1), 0, &ModelSettings::default()).unwrap();
        assert_eq!(m.predict(&FeatureMatrix::new(0, 2, vec![])).unwrap(), Vec::<u8>::new());
        let bad = FeatureMatrix::from_rows(&[vec![1.0]]);
        assert_eq!(
            m.predict(&bad).unwrap_err(),
            ModelError::ArityMismatch {
                expected: 2,
                found: 1
            }
        );
    }

    #[test]
    fn assignment_values_are_validated() {
        let s = ModelSettings::default();
        assert!(ModelSpec::from_assignment(&lr(0.0, "l2"), &s).is_err());
        assert!(ModelSpec::from_assignment(&lr(1.0, "l1"), &s).is_err());
        assert!(ModelSpec::from_assignment(&dt(0, 1), &s).is_err());
        let mut a = dt(2, 1);
        a.values.insert("max_depth".into(), 3.into());
        assert!(ModelSpec::from_assignment(&a, &s).is_err());
    }

    #[test]
    fn max_features_counts() {
        assert_eq!(MaxFeatures::All.count(10), 10);
        assert_eq!(MaxFeatures::Sqrt.count(10), 3);
        assert_eq!(MaxFeatures::Log2.count(10), 3);
        assert_eq!(MaxFeatures::Log2.count(1), 1);
        assert_eq!(MaxFeatures::Sqrt.count(1), 1);
    }
}
