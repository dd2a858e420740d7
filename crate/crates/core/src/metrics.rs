//! Accuracy and group-fairness metrics for binary classification.
//!
//! Every fairness metric is reported as a *gap*: the absolute difference of
//! a per-group rate between sensitive groups 0 and 1 (lower is fairer), and
//! as a *score* `1 - gap` (higher is fairer). A gap is undefined when one of
//! its per-group rates has a zero denominator.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: y_true={y_true}, y_pred={y_pred}, sensitive={sensitive}")]
    LengthMismatch {
        y_true: usize,
        y_pred: usize,
        sensitive: usize,
    },
    #[error("{vector}[{index}] = {value} is not in {{0, 1}}")]
    NotBinary {
        vector: &'static str,
        index: usize,
        value: u8,
    },
    #[error("sensitive group {0} has no rows")]
    EmptyGroup(u8),
    #[error("no rows to evaluate")]
    Empty,
    #[error("unknown metric id '{0}'")]
    UnknownMetric(String),
}

/// Fairness metric identifiers, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricId {
    StatisticalParity,
    PredictiveParity,
    PredictiveEquality,
    EqualOpportunity,
    AccuracyEquality,
    EqualizedOdds,
}

impl MetricId {
    pub const ALL: [MetricId; 6] = [
        MetricId::StatisticalParity,
        MetricId::PredictiveParity,
        MetricId::PredictiveEquality,
        MetricId::EqualOpportunity,
        MetricId::AccuracyEquality,
        MetricId::EqualizedOdds,
    ];

    /// The five metrics evaluated in the reference case study.
    pub const CASE_STUDY: [MetricId; 5] = [
        MetricId::PredictiveParity,
        MetricId::PredictiveEquality,
        MetricId::EqualOpportunity,
        MetricId::AccuracyEquality,
        MetricId::EqualizedOdds,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricId::StatisticalParity => "statistical_parity",
            MetricId::PredictiveParity => "predictive_parity",
            MetricId::PredictiveEquality => "predictive_equality",
            MetricId::EqualOpportunity => "equal_opportunity",
            MetricId::AccuracyEquality => "accuracy_equality",
            MetricId::EqualizedOdds => "equalized_odds",
        }
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricId {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MetricId::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| MetricError::UnknownMetric(s.to_owned()))
    }
}

/// Confusion counts for one sensitive group.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn n(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Per-group rates; `None` where the denominator is zero.
    pub fn rates(&self) -> GroupRates {
        GroupRates {
            sel: ratio(self.tp + self.fp, self.n()),
            tpr: ratio(self.tp, self.tp + self.fn_),
            fpr: ratio(self.fp, self.fp + self.tn),
            ppv: ratio(self.tp, self.tp + self.fp),
            acc: ratio(self.tp + self.tn, self.n()),
        }
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Confusion counts for groups `S = 0` and `S = 1`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupConfusion {
    pub groups: [Confusion; 2],
}

impl GroupConfusion {
    pub fn total(&self) -> Confusion {
        let [a, b] = self.groups;
        Confusion {
            tp: a.tp + b.tp,
            fp: a.fp + b.fp,
            fn_: a.fn_ + b.fn_,
            tn: a.tn + b.tn,
        }
    }
}

/// Selection rate, TPR, FPR, PPV and accuracy for one group.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    pub sel: Option<f64>,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub ppv: Option<f64>,
    pub acc: Option<f64>,
}

fn check_binary(v: &[u8], name: &'static str) -> Result<(), MetricError> {
    match v.iter().position(|&x| x > 1) {
        Some(index) => Err(MetricError::NotBinary {
            vector: name,
            index,
            value: v[index],
        }),
        None => Ok(()),
    }
}

pub fn confusion_by_group(
    y_true: &[u8],
    y_pred: &[u8],
    sensitive: &[u8],
) -> Result<GroupConfusion, MetricError> {
    if y_true.len() != y_pred.len() || y_true.len() != sensitive.len() {
        return Err(MetricError::LengthMismatch {
            y_true: y_true.len(),
            y_pred: y_pred.len(),
            sensitive: sensitive.len(),
        });
    }
    check_binary(y_true, "y_true")?;
    check_binary(y_pred, "y_pred")?;
    check_binary(sensitive, "sensitive")?;

    let mut c = GroupConfusion::default();
    for ((&t, &p), &s) in y_true.iter().zip(y_pred).zip(sensitive) {
        let g = &mut c.groups[s as usize];
        match (t, p) {
            (1, 1) => g.tp += 1,
            (0, 1) => g.fp += 1,
            (1, 0) => g.fn_ += 1,
            _ => g.tn += 1,
        }
    }
    Ok(c)
}

fn abs_diff(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some((a? - b?).abs())
}

/// Absolute between-group gap of `metric`. `Ok(None)` when a required
/// per-group rate is undefined.
pub fn fairness_gap(c: &GroupConfusion, metric: MetricId) -> Result<Option<f64>, MetricError> {
    for g in 0..2u8 {
        if c.groups[g as usize].n() == 0 {
            return Err(MetricError::EmptyGroup(g));
        }
    }
    let r0 = c.groups[0].rates();
    let r1 = c.groups[1].rates();
    Ok(match metric {
        MetricId::StatisticalParity => abs_diff(r0.sel, r1.sel),
        MetricId::EqualOpportunity => abs_diff(r0.tpr, r1.tpr),
        MetricId::PredictiveEquality => abs_diff(r0.fpr, r1.fpr),
        MetricId::PredictiveParity => abs_diff(r0.ppv, r1.ppv),
        MetricId::AccuracyEquality => abs_diff(r0.acc, r1.acc),
        MetricId::EqualizedOdds => {
            let tpr = abs_diff(r0.tpr, r1.tpr);
            let fpr = abs_diff(r0.fpr, r1.fpr);
            tpr.zip(fpr).map(|(a, b)| a.max(b))
        }
    })
}

/// Accuracy plus the requested fairness gaps for one prediction vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricVector {
    pub accuracy: f64,
    /// `(TPR + TNR) / 2` over all rows; `None` when a class is absent.
    pub balanced_accuracy: Option<f64>,
    pub gaps: BTreeMap<MetricId, Option<f64>>,
    pub rates: [GroupRates; 2],
}

impl MetricVector {
    pub fn gap(&self, m: MetricId) -> Option<f64> {
        self.gaps.get(&m).copied().flatten()
    }

    pub fn score(&self, m: MetricId) -> Option<f64> {
        self.gap(m).map(|g| 1.0 - g)
    }
}

pub fn evaluate_predictions(
    y_true: &[u8],
    y_pred: &[u8],
    sensitive: &[u8],
    metrics: &[MetricId],
) -> Result<MetricVector, MetricError> {
    let c = confusion_by_group(y_true, y_pred, sensitive)?;
    let total = c.total();
    if total.n() == 0 {
        return Err(MetricError::Empty);
    }
    let accuracy = (total.tp + total.tn) as f64 / total.n() as f64;
    let tpr = ratio(total.tp, total.tp + total.fn_);
    let tnr = ratio(total.tn, total.tn + total.fp);
    let balanced_accuracy = tpr.zip(tnr).map(|(a, b)| (a + b) / 2.0);

    let mut gaps = BTreeMap::new();
    for &m in metrics {
        gaps.insert(m, fairness_gap(&c, m)?);
    }
    Ok(MetricVector {
        accuracy,
        balanced_accuracy,
        gaps,
        rates: [c.groups[0].rates(), c.groups[1].rates()],
    })
}
