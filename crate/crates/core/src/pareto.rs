//! Pareto dominance and frontier extraction over evaluation records.
//!
//! Both objectives are maximized: the x objective is mean accuracy (or
//! balanced accuracy) and the y objective is the mean score `1 - gap` of
//! one fairness metric.
//!
//! * weak dominance: `a >= b` on both objectives and `a > b` on at least one
//! * strict dominance: `a > b` on both objectives
//!
//! Extraction sorts once by the x objective and sweeps with a running
//! maximum of the y objective, `O(n log n)`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::EvaluationRecord;
use crate::metrics::MetricId;
use crate::models::ModelFamily;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParetoError {
    #[error("record {index} of {family} has no defined value for {objective}")]
    Undefined {
        family: ModelFamily,
        index: usize,
        objective: String,
    },
    #[error("unknown {what} '{value}'")]
    Unknown { what: &'static str, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DominanceMode {
    #[default]
    Weak,
    Strict,
}

impl FromStr for DominanceMode {
    type Err = ParetoError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "weak" => Ok(DominanceMode::Weak),
            "strict" => Ok(DominanceMode::Strict),
            other => Err(ParetoError::Unknown {
                what: "dominance mode",
                value: other.to_owned(),
            }),
        }
    }
}

impl fmt::Display for DominanceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DominanceMode::Weak => "weak",
            DominanceMode::Strict => "strict",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    #[default]
    PerFamily,
    AllFamilies,
}

impl FromStr for Grouping {
    type Err = ParetoError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "per_family" => Ok(Grouping::PerFamily),
            "all_families" => Ok(Grouping::AllFamilies),
            other => Err(ParetoError::Unknown {
                what: "grouping",
                value: other.to_owned(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccuracyObjective {
    #[default]
    Accuracy,
    BalancedAccuracy,
}

impl AccuracyObjective {
    pub fn as_str(self) -> &'static str {
        match self {
            AccuracyObjective::Accuracy => "accuracy",
            AccuracyObjective::BalancedAccuracy => "balanced_accuracy",
        }
    }
}

/// The two maximized objectives of a frontier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObjectivePair {
    pub x: AccuracyObjective,
    pub y: MetricId,
}

impl ObjectivePair {
    pub fn accuracy_vs(metric: MetricId) -> ObjectivePair {
        ObjectivePair {
            x: AccuracyObjective::Accuracy,
            y: metric,
        }
    }

    pub fn point(&self, r: &EvaluationRecord) -> Option<(f64, f64)> {
        if !r.usable {
            return None;
        }
        let x = match self.x {
            AccuracyObjective::Accuracy => r.accuracy_mean(),
            AccuracyObjective::BalancedAccuracy => r.balanced_accuracy.map(|s| s.mean),
        }?;
        let y = r.score_mean(self.y)?;
        (x.is_finite() && y.is_finite()).then_some((x, y))
    }
}

/// Dominance between two points of maximized objectives.
pub fn dominates_point(a: (f64, f64), b: (f64, f64), mode: DominanceMode) -> bool {
    match mode {
        DominanceMode::Weak => a.0 >= b.0 && a.1 >= b.1 && (a.0 > b.0 || a.1 > b.1),
        DominanceMode::Strict => a.0 > b.0 && a.1 > b.1,
    }
}

pub fn dominates(
    a: &EvaluationRecord,
    b: &EvaluationRecord,
    pair: ObjectivePair,
    mode: DominanceMode,
) -> Result<bool, ParetoError> {
    let pa = pair.point(a).ok_or_else(|| undefined(a, pair))?;
    let pb = pair.point(b).ok_or_else(|| undefined(b, pair))?;
    Ok(dominates_point(pa, pb, mode))
}

fn undefined(r: &EvaluationRecord, pair: ObjectivePair) -> ParetoError {
    ParetoError::Undefined {
        family: r.family,
        index: r.index,
        objective: format!("({}, {})", pair.x.as_str(), pair.y),
    }
}

/// Indices of the non-dominated points, ordered by ascending x, then
/// descending y, then index.
pub fn frontier_indices(points: &[(f64, f64)], mode: DominanceMode) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    // descending x, then descending y
    order.sort_by(|&i, &j| {
        points[j]
            .0
            .total_cmp(&points[i].0)
            .then(points[j].1.total_cmp(&points[i].1))
            .then(i.cmp(&j))
    });

    let mut keep = Vec::new();
    // best y among points with strictly greater x
    let mut best_above = f64::NEG_INFINITY;
    let mut k = 0;
    while k < order.len() {
        let x = points[order[k]].0;
        let mut end = k;
        while end < order.len() && points[order[end]].0 == x {
            end += 1;
        }
        // group sorted by descending y: its first entry holds the max
        let group_max = points[order[k]].1;
        for &i in &order[k..end] {
            let y = points[i].1;
            let dominated = match mode {
                DominanceMode::Weak => best_above >= y || group_max > y,
                DominanceMode::Strict => best_above > y,
            };
            if !dominated {
                keep.push(i);
            }
        }
        best_above = best_above.max(group_max);
        k = end;
    }
    keep.sort_by(|&i, &j| {
        points[i]
            .0
            .total_cmp(&points[j].0)
            .then(points[j].1.total_cmp(&points[i].1))
            .then(i.cmp(&j))
    });
    keep
}

/// Non-dominated records for one objective pair and group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoSet {
    pub x_objective: AccuracyObjective,
    pub y_objective: MetricId,
    pub mode: DominanceMode,
    pub grouping: Grouping,
    /// The family of a per-family set; `None` for a combined set.
    pub family: Option<ModelFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    /// Records left out because the pair was undefined for them.
    pub excluded_undefined: usize,
    /// Records left out because every split failed.
    pub excluded_unusable: usize,
    pub members: Vec<EvaluationRecord>,
}

impl ParetoSet {
    pub fn pair(&self) -> ObjectivePair {
        ObjectivePair {
            x: self.x_objective,
            y: self.y_objective,
        }
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        let pair = self.pair();
        self.members
            .iter()
            .map(|r| pair.point(r).expect("frontier members define both objectives"))
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Member with the highest x (ties: highest y).
    pub fn most_accurate(&self) -> Option<&EvaluationRecord> {
        self.members.last()
    }

    /// Member with the highest y (ties: highest x).
    pub fn fairest(&self) -> Option<&EvaluationRecord> {
        let pts = self.points();
        (0..pts.len())
            .max_by(|&i, &j| {
                pts[i]
                    .1
                    .total_cmp(&pts[j].1)
                    .then(pts[i].0.total_cmp(&pts[j].0))
            })
            .map(|i| &self.members[i])
    }

    /// `(delta accuracy, delta score)` from the most-accurate member to the
    /// fairest one.
    pub fn endpoint_delta(&self) -> Option<(f64, f64)> {
        let pair = self.pair();
        let a = pair.point(self.most_accurate()?)?;
        let f = pair.point(self.fairest()?)?;
        Some((f.0 - a.0, f.1 - a.1))
    }
}

fn extract_one(
    records: &[&EvaluationRecord],
    pair: ObjectivePair,
    mode: DominanceMode,
    grouping: Grouping,
    family: Option<ModelFamily>,
) -> ParetoSet {
    let mut points = Vec::with_capacity(records.len());
    let mut defined = Vec::with_capacity(records.len());
    let mut excluded_undefined = 0;
    let mut excluded_unusable = 0;
    for r in records {
        match pair.point(r) {
            Some(p) => {
                points.push(p);
                defined.push(*r);
            }
            None if !r.usable => excluded_unusable += 1,
            None => excluded_undefined += 1,
        }
    }
    let members = frontier_indices(&points, mode)
        .into_iter()
        .map(|i| defined[i].clone())
        .collect();
    ParetoSet {
        x_objective: pair.x,
        y_objective: pair.y,
        mode,
        grouping,
        family,
        source: None,
        excluded_undefined,
        excluded_unusable,
        members,
    }
}

/// Extracts the frontier of `records`: one set per family present (in
/// family order) for `PerFamily`, a single combined set for `AllFamilies`.
pub fn extract_frontier(
    records: &[EvaluationRecord],
    pair: ObjectivePair,
    mode: DominanceMode,
    grouping: Grouping,
) -> Vec<ParetoSet> {
    match grouping {
        Grouping::AllFamilies => {
            let all: Vec<&EvaluationRecord> = records.iter().collect();
            vec![extract_one(&all, pair, mode, grouping, None)]
        }
        Grouping::PerFamily => ModelFamily::ALL
            .iter()
            .filter_map(|&f| {
                let group: Vec<&EvaluationRecord> =
                    records.iter().filter(|r| r.family == f).collect();
                (!group.is_empty()).then(|| extract_one(&group, pair, mode, grouping, Some(f)))
            })
            .collect(),
    }
}

/// Frontier of a single family's records.
pub fn family_frontier(
    records: &[EvaluationRecord],
    family: ModelFamily,
    pair: ObjectivePair,
    mode: DominanceMode,
) -> ParetoSet {
    let group: Vec<&EvaluationRecord> = records.iter().filter(|r| r.family == family).collect();
    extract_one(&group, pair, mode, Grouping::PerFamily, Some(family))
}

/// Orders points by ascending x, then descending y.
pub fn staircase_cmp(a: &(f64, f64), b: &(f64, f64)) -> Ordering {
    a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1))
}
