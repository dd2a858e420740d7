//! The exploration document shared by the CLI and the HTTP service.
//!
//! Every field is optional. A minimal document is `{"dataset": {"path":
//! "data.csv"}}`, which runs all four families on their default grids with
//! the five case-study metrics. `spaces` overrides individual
//! hyperparameter ranges; hyperparameters it does not mention keep their
//! default range.

use std::collections::BTreeMap;
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::data::{PreprocessConfig, SplitPlan, TaskEncoding};
use crate::grid::{default_space, validate_space, GridOptions, HyperparamSpace, DEFAULT_GRID_CAP};
use crate::metrics::MetricId;
use crate::models::{HyperValue, ModelFamily, ModelSettings};
use crate::pareto::DominanceMode;

/// Where the data comes from: a file path (CLI) or an uploaded dataset id
/// (service).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSettings {
    pub n_splits: usize,
    pub test_fraction: f64,
    pub stratified: bool,
}

impl Default for SplitSettings {
    fn default() -> Self {
        let p = SplitPlan::default();
        SplitSettings {
            n_splits: p.n_splits,
            test_fraction: p.test_fraction,
            stratified: p.stratified,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplorationConfig {
    pub dataset: DatasetRef,
    /// Absent: defaults for a file; the upload's settings for a dataset id.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preprocess: Option<PreprocessConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskEncoding>,
    pub families: Vec<ModelFamily>,
    pub spaces: BTreeMap<ModelFamily, IndexMap<String, Vec<HyperValue>>>,
    pub metrics: Vec<MetricId>,
    pub splits: SplitSettings,
    /// Seeds both the splits and every training task.
    pub seed: u64,
    pub mode: DominanceMode,
    pub workers: usize,
    pub settings: ModelSettings,
    pub grid_cap: usize,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        ExplorationConfig {
            dataset: DatasetRef::default(),
            preprocess: None,
            task: None,
            families: ModelFamily::ALL.to_vec(),
            spaces: BTreeMap::new(),
            metrics: MetricId::CASE_STUDY.to_vec(),
            splits: SplitSettings::default(),
            seed: 0,
            mode: DominanceMode::Weak,
            workers: 1,
            settings: ModelSettings::default(),
            grid_cap: DEFAULT_GRID_CAP,
        }
    }
}

/// One problem found in a configuration document. `field` is a dotted
/// path such as `spaces.svc.C` or `splits.n_splits`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigViolation {
    pub field: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<ModelFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hyperparameter: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<HyperValue>,
    pub message: String,
}

impl ConfigViolation {
    fn field(field: &str, message: impl Into<String>) -> ConfigViolation {
        ConfigViolation {
            field: field.to_owned(),
            family: None,
            hyperparameter: None,
            value: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)?;
        if let Some(v) = &self.value {
            write!(f, " (got {v})")?;
        }
        Ok(())
    }
}

impl ExplorationConfig {
    pub fn from_json(text: &str) -> Result<ExplorationConfig, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }

    pub fn preprocess_or_default(&self) -> PreprocessConfig {
        self.preprocess.clone().unwrap_or_default()
    }

    pub fn task_or_default(&self) -> TaskEncoding {
        self.task.clone().unwrap_or_default()
    }

    /// The default space of `family` with this document's overrides.
    pub fn space(&self, family: ModelFamily) -> HyperparamSpace {
        let mut space = default_space(family);
        if let Some(overrides) = self.spaces.get(&family) {
            for (name, values) in overrides {
                space.params.insert(name.clone(), values.clone());
            }
        }
        space.normalized()
    }

    pub fn split_plan(&self) -> SplitPlan {
        SplitPlan {
            n_splits: self.splits.n_splits,
            test_fraction: self.splits.test_fraction,
            stratified: self.splits.stratified,
            seed: self.seed,
        }
    }

    pub fn grid_options(&self) -> GridOptions {
        GridOptions {
            metrics: self.metrics.clone(),
            seed: self.seed,
            workers: self.workers.max(1),
            settings: self.settings.clone(),
            cap: self.grid_cap,
        }
    }

    /// Collects every problem that can be found without reading the data.
    pub fn validate(&self) -> Result<(), Vec<ConfigViolation>> {
        let mut out = Vec::new();
        if self.families.is_empty() {
            out.push(ConfigViolation::field("families", "at least one model family is required"));
        }
        for (i, f) in self.families.iter().enumerate() {
            if self.families[..i].contains(f) {
                out.push(ConfigViolation::field("families", format!("duplicate family {f}")));
            }
        }
        for f in self.spaces.keys() {
            if !self.families.contains(f) {
                out.push(ConfigViolation::field(
                    &format!("spaces.{f}"),
                    format!("space given for {f}, which is not in families"),
                ));
            }
        }
        if self.metrics.is_empty() {
            out.push(ConfigViolation::field("metrics", "at least one fairness metric is required"));
        }
        for (i, m) in self.metrics.iter().enumerate() {
            if self.metrics[..i].contains(m) {
                out.push(ConfigViolation::field("metrics", format!("duplicate metric {m}")));
            }
        }
        if let Err(e) = self.split_plan().validate() {
            out.push(ConfigViolation::field("splits", e.to_string()));
        }
        if let Err(e) = self.preprocess_or_default().validate() {
            out.push(ConfigViolation::field("preprocess", e.to_string()));
        }
        let task = self.task_or_default();
        if task.target == task.sensitive {
            out.push(ConfigViolation::field(
                "task",
                "target and sensitive attribute must be different columns",
            ));
        }
        if task.positive.is_empty() {
            out.push(ConfigViolation::field("task.positive", "at least one positive value is required"));
        }
        if task.group0.is_empty() {
            out.push(ConfigViolation::field("task.group0", "at least one group-0 value is required"));
        }
        if self.settings.forest_trees == 0 {
            out.push(ConfigViolation::field("settings.forest_trees", "must be >= 1"));
        }
        if self.settings.svc_epochs == 0 {
            out.push(ConfigViolation::field("settings.svc_epochs", "must be >= 1"));
        }
        if self.settings.lr_max_iter == 0 {
            out.push(ConfigViolation::field("settings.lr_max_iter", "must be >= 1"));
        }
        if !(self.settings.lr_tol.is_finite() && self.settings.lr_tol > 0.0) {
            out.push(ConfigViolation::field("settings.lr_tol", "must be > 0"));
        }
        for &f in &self.families {
            let space = self.space(f);
            match validate_space(&space) {
                Err(vs) => out.extend(vs.into_iter().map(|v| ConfigViolation {
                    field: format!("spaces.{}.{}", v.family, v.hyperparameter),
                    family: Some(v.family),
                    hyperparameter: Some(v.hyperparameter),
                    value: v.value,
                    message: v.message,
                })),
                Ok(()) if space.size() > self.grid_cap as u128 => out.push(ConfigViolation {
                    family: Some(f),
                    ..ConfigViolation::field(
                        &format!("spaces.{f}"),
                        format!(
                            "grid has {} assignments, over the cap of {}; reduce the hyperparameter ranges",
                            space.size(),
                            self.grid_cap
                        ),
                    )
                }),
                Ok(()) => {}
            }
        }
        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }
}
