//! Fairness-aware hyperparameter exploration.
//!
//! The crate trains four classifier families over a full-factorial
//! hyperparameter grid, scores every configuration on accuracy and a set of
//! group-fairness metrics across repeated train/test splits, and extracts the
//! Pareto frontiers of non-dominated configurations.
//!
//! The pipeline is split into modules that can be used independently:
//!
//! * [`data`]: CSV ingestion, cleaning, task encoding and seeded splits.
//! * [`models`]: decision tree, random forest, logistic regression and a
//!   kernel SVC behind one train/predict contract.
//! * [`metrics`]: per-group confusion counts, accuracy and fairness gaps.
//! * [`grid`]: hyperparameter spaces, grid expansion and the sweep runner.
//! * [`pareto`]: dominance tests and frontier extraction.
//! * [`report`]: Pareto tables (CSV/JSON) and the markdown run report.
//! * [`synth`]: seeded synthetic data with a controllable group disparity.
//! * [`config`] and [`pipeline`]: the exploration document shared by the
//!   CLI and the HTTP service, and the end-to-end driver.

pub mod config;
pub mod data;
pub mod grid;
pub mod metrics;
pub mod models;
pub mod pareto;
pub mod pipeline;
pub mod report;
pub mod seed;
pub mod synth;

pub use config::ExplorationConfig;
pub use data::{Dataset, SplitPlan, Table};
pub use grid::{EvaluationRecord, HyperparamSpace, Progress};
pub use metrics::MetricId;
pub use models::{HyperparamAssignment, ModelFamily, TrainedModel};
pub use pareto::{DominanceMode, Grouping, ParetoSet};
