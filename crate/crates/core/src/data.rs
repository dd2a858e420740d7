//! Dataset ingestion, cleaning, task encoding and repeated splits.
//!
//! The flow is `load_csv` → `preprocess` → `encode_task` → `make_splits`.
//! The first two stages operate on a [`Table`] of raw typed columns; task
//! encoding turns it into a [`Dataset`] with a dense feature matrix, a
//! binary target and a binary sensitive attribute.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("empty file: no header row")]
    EmptyFile,
    #[error("row {row}: expected {expected} fields, found {found}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("csv parse error: {0}")]
    Csv(String),
    #[error("duplicate column name '{0}'")]
    DuplicateColumn(String),
    #[error("column '{0}' not found")]
    MissingColumn(String),
    #[error("all rows were dropped by preprocessing")]
    AllRowsDropped,
    #[error("dataset has no rows")]
    NoRows,
    #[error("column '{column}' has missing values after preprocessing")]
    UnresolvedMissing { column: String },
    #[error("column '{column}' contains values outside the declared sets: {values:?}")]
    UndeclaredValues { column: String, values: Vec<String> },
    #[error("{role} value '{value}' does not occur in column '{column}'")]
    UnmatchedValue {
        column: String,
        role: &'static str,
        value: String,
    },
    #[error("target class {0} empty")]
    EmptyClass(u8),
    #[error("sensitive group {0} empty")]
    EmptyGroup(u8),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("stratified split impossible: target class {class} has {count} row(s), need at least 2")]
    ClassTooSmall { class: u8, count: usize },
    #[error("need at least 4 rows to split, found {0}")]
    TooFewRows(usize),
}

/// Where a table or dataset came from and what was done to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub source: String,
    pub steps: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "snake_case")]
pub enum ColumnData {
    Numeric(Vec<Option<f64>>),
    Categorical(Vec<Option<String>>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match self {
            ColumnData::Numeric(v) => v[row].is_none(),
            ColumnData::Categorical(v) => v[row].is_none(),
        }
    }

    fn select(&self, rows: &[usize]) -> ColumnData {
        match self {
            ColumnData::Numeric(v) => ColumnData::Numeric(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Categorical(v) => {
                ColumnData::Categorical(rows.iter().map(|&r| v[r].clone()).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
}

impl Column {
    pub fn kind(&self) -> ColumnKind {
        match self.data {
            ColumnData::Numeric(_) => ColumnKind::Numeric,
            ColumnData::Categorical(_) => ColumnKind::Categorical,
        }
    }
}

/// Raw typed table, before task encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<Column>,
    pub n_rows: usize,
    pub provenance: Provenance,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    fn select_rows(&self, rows: &[usize]) -> Table {
        Table {
            columns: self
                .columns
                .iter()
                .map(|c| Column {
                    name: c.name.clone(),
                    data: c.data.select(rows),
                })
                .collect(),
            n_rows: rows.len(),
            provenance: self.provenance.clone(),
        }
    }
}

fn parse_number(cell: &str) -> Option<f64> {
    cell.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Parses a headed CSV. Cells that are empty or equal to one of
/// `missing_codes` are marked missing. A column is numeric when every
/// non-missing cell parses as a finite number, categorical otherwise.
pub fn load_csv<R: Read>(
    source: R,
    source_id: &str,
    missing_codes: &[String],
) -> Result<Table, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);

    let mut records = reader.records();
    let header = match records.next() {
        None => return Err(DataError::EmptyFile),
        Some(r) => r.map_err(|e| DataError::Csv(e.to_string()))?,
    };
    let names: Vec<String> = header.iter().map(str::to_owned).collect();
    if names.is_empty() || (names.len() == 1 && names[0].is_empty()) {
        return Err(DataError::EmptyFile);
    }
    let mut seen = BTreeSet::new();
    for n in &names {
        if !seen.insert(n.as_str()) {
            return Err(DataError::DuplicateColumn(n.clone()));
        }
    }

    let mut cells: Vec<Vec<Option<String>>> = vec![Vec::new(); names.len()];
    for (i, rec) in records.enumerate() {
        let rec = rec.map_err(|e| DataError::Csv(e.to_string()))?;
        // skip fully blank trailing lines
        if rec.len() == 1 && rec[0].is_empty() && names.len() > 1 {
            continue;
        }
        if rec.len() != names.len() {
            return Err(DataError::Ragged {
                row: i + 1,
                expected: names.len(),
                found: rec.len(),
            });
        }
        for (col, cell) in cells.iter_mut().zip(rec.iter()) {
            let missing = cell.is_empty() || missing_codes.iter().any(|m| m == cell);
            col.push(if missing { None } else { Some(cell.to_owned()) });
        }
    }

    let n_rows = cells.first().map_or(0, Vec::len);
    let columns = names
        .into_iter()
        .zip(cells)
        .map(|(name, raw)| {
            let numeric: Option<Vec<Option<f64>>> = raw
                .iter()
                .map(|c| match c {
                    None => Some(None),
                    Some(s) => parse_number(s).map(Some),
                })
                .collect();
            let data = match numeric {
                Some(v) => ColumnData::Numeric(v),
                None => ColumnData::Categorical(raw),
            };
            Column { name, data }
        })
        .collect();

    Ok(Table {
        columns,
        n_rows,
        provenance: Provenance {
            source: source_id.to_owned(),
            steps: vec!["load_csv".to_owned()],
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Impute {
    #[default]
    None,
    Mean,
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Standardize {
    None,
    #[default]
    Zscore,
}

fn default_threshold() -> f64 {
    0.75
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub missing_codes: Vec<String>,
    #[serde(default = "default_threshold")]
    pub row_missing_threshold: f64,
    pub impute: Impute,
    pub standardize: Standardize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            missing_codes: Vec::new(),
            row_missing_threshold: default_threshold(),
            impute: Impute::None,
            standardize: Standardize::Zscore,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if !(0.0..=1.0).contains(&self.row_missing_threshold) {
            return Err(DataError::InvalidConfig(format!(
                "row_missing_threshold must be in [0, 1], got {}",
                self.row_missing_threshold
            )));
        }
        Ok(())
    }
}

/// Mean and sample standard deviation (n - 1). `None` when the deviation
/// is undefined (fewer than two values).
pub fn mean_and_sample_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (0.0, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, None);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, Some((ss / (n - 1) as f64).sqrt()))
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

fn mode(values: &[Option<String>]) -> Option<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for v in values.iter().flatten() {
        *counts.entry(v).or_default() += 1;
    }
    // BTreeMap iteration is lexicographic, so ties resolve to the smallest level.
    let mut best: Option<(&str, usize)> = None;
    for (k, c) in counts {
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((k, c));
        }
    }
    best.map(|(k, _)| k.to_owned())
}

/// Drops sparse rows, imputes or drops remaining gaps and optionally
/// z-scores numeric columns. Columns named in `passthrough` (the target and
/// sensitive attribute) are never imputed or scaled; rows missing them are
/// dropped.
pub fn preprocess(
    raw: &Table,
    cfg: &PreprocessConfig,
    passthrough: &[&str],
) -> Result<Table, DataError> {
    cfg.validate()?;
    let n_cols = raw.columns.len();
    let is_passthrough: Vec<bool> = raw
        .columns
        .iter()
        .map(|c| passthrough.contains(&c.name.as_str()))
        .collect();

    let mut steps = raw.provenance.steps.clone();

    let keep: Vec<usize> = (0..raw.n_rows)
        .filter(|&r| {
            let missing = raw.columns.iter().filter(|c| c.data.is_missing(r)).count();
            let sparse = n_cols > 0 && missing as f64 / n_cols as f64 > cfg.row_missing_threshold;
            let pass_missing = raw
                .columns
                .iter()
                .zip(&is_passthrough)
                .any(|(c, &p)| p && c.data.is_missing(r));
            let any_missing = missing > 0;
            !(sparse || pass_missing || (cfg.impute == Impute::None && any_missing))
        })
        .collect();
    let dropped = raw.n_rows - keep.len();
    steps.push(format!(
        "drop_rows(missing_fraction>{}, impute={}): {} dropped",
        cfg.row_missing_threshold,
        impute_name(cfg.impute),
        dropped
    ));
    if keep.is_empty() {
        return Err(DataError::AllRowsDropped);
    }
    let mut table = raw.select_rows(&keep);

    if cfg.impute != Impute::None {
        for col in table.columns.iter_mut() {
            match &mut col.data {
                ColumnData::Numeric(v) => {
                    let mut observed: Vec<f64> = v.iter().flatten().copied().collect();
                    if observed.is_empty() || observed.len() == v.len() {
                        continue;
                    }
                    let fill = match cfg.impute {
                        Impute::Mean => observed.iter().sum::<f64>() / observed.len() as f64,
                        Impute::Median => median(&mut observed),
                        Impute::None => unreachable!(),
                    };
                    for x in v.iter_mut().filter(|x| x.is_none()) {
                        *x = Some(fill);
                    }
                }
                ColumnData::Categorical(v) => {
                    if let Some(fill) = mode(v) {
                        for x in v.iter_mut().filter(|x| x.is_none()) {
                            *x = Some(fill.clone());
                        }
                    }
                }
            }
        }
        steps.push(format!("impute={}", impute_name(cfg.impute)));
    }

    if cfg.standardize == Standardize::Zscore {
        for (col, &p) in table.columns.iter_mut().zip(&is_passthrough) {
            if p {
                continue;
            }
            if let ColumnData::Numeric(v) = &mut col.data {
                let observed: Vec<f64> = v.iter().flatten().copied().collect();
                let (mean, std) = mean_and_sample_std(&observed);
                for x in v.iter_mut().flatten() {
                    *x = match std {
                        Some(s) if s > 0.0 => (*x - mean) / s,
                        _ => 0.0,
                    };
                }
            }
        }
        steps.push("standardize=zscore".to_owned());
    }

    table.provenance.steps = steps;
    Ok(table)
}

fn impute_name(i: Impute) -> &'static str {
    match i {
        Impute::None => "none",
        Impute::Mean => "mean",
        Impute::Median => "median",
    }
}

fn default_target() -> String {
    "target".to_owned()
}
fn default_sensitive() -> String {
    "sensitive".to_owned()
}
fn default_positive() -> Vec<String> {
    vec!["1".to_owned()]
}
fn default_group0() -> Vec<String> {
    vec!["0".to_owned()]
}

/// How raw columns map onto the binary target `Y` and sensitive attribute `S`.
///
/// `Y = 1` iff the raw target value is in `positive`; `S = 0` iff the raw
/// sensitive value is in `group0`. When `negative` (resp. `group1`) is
/// given, the two sets must cover every observed value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskEncoding {
    #[serde(default = "default_target")]
    pub target: String,
    #[serde(default = "default_positive")]
    pub positive: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negative: Option<Vec<String>>,
    #[serde(default = "default_sensitive")]
    pub sensitive: String,
    #[serde(default = "default_group0")]
    pub group0: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group1: Option<Vec<String>>,
}

impl Default for TaskEncoding {
    fn default() -> Self {
        TaskEncoding {
            target: default_target(),
            positive: default_positive(),
            negative: None,
            sensitive: default_sensitive(),
            group0: default_group0(),
            group1: None,
        }
    }
}

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(n_rows: usize, n_cols: usize, values: Vec<f64>) -> FeatureMatrix {
        assert_eq!(values.len(), n_rows * n_cols, "matrix shape mismatch");
        FeatureMatrix {
            n_rows,
            n_cols,
            values,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> FeatureMatrix {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * n_cols);
        for r in rows {
            assert_eq!(r.len(), n_cols, "ragged rows");
            values.extend_from_slice(r);
        }
        FeatureMatrix::new(rows.len(), n_cols, values)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols + j]
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(rows.len() * self.n_cols);
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        FeatureMatrix::new(rows.len(), self.n_cols, values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Encoded binary-classification dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub features: FeatureMatrix,
    pub target: Vec<u8>,
    pub sensitive: Vec<u8>,
    pub provenance: Provenance,
}

impl Dataset {
    /// Builds a dataset directly from encoded parts, checking the invariants.
    pub fn new(
        feature_names: Vec<String>,
        features: FeatureMatrix,
        target: Vec<u8>,
        sensitive: Vec<u8>,
        provenance: Provenance,
    ) -> Result<Dataset, DataError> {
        let n = features.n_rows();
        if target.len() != n || sensitive.len() != n || feature_names.len() != features.n_cols() {
            return Err(DataError::InvalidConfig(
                "feature, target and sensitive lengths disagree".into(),
            ));
        }
        if target.iter().chain(&sensitive).any(|&v| v > 1) {
            return Err(DataError::InvalidConfig(
                "target and sensitive must be 0/1".into(),
            ));
        }
        let d = Dataset {
            feature_names,
            features,
            target,
            sensitive,
            provenance,
        };
        d.check_nonempty_groups()?;
        Ok(d)
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.n_cols()
    }

    /// Row counts of target classes 0 and 1.
    pub fn class_counts(&self) -> [usize; 2] {
        count01(&self.target)
    }

    /// Row counts of sensitive groups 0 and 1.
    pub fn group_counts(&self) -> [usize; 2] {
        count01(&self.sensitive)
    }

    fn check_nonempty_groups(&self) -> Result<(), DataError> {
        if self.n_rows() == 0 {
            return Err(DataError::NoRows);
        }
        let cc = self.class_counts();
        for c in 0..2u8 {
            if cc[c as usize] == 0 {
                return Err(DataError::EmptyClass(c));
            }
        }
        let gc = self.group_counts();
        for g in 0..2u8 {
            if gc[g as usize] == 0 {
                return Err(DataError::EmptyGroup(g));
            }
        }
        Ok(())
    }
}

fn count01(v: &[u8]) -> [usize; 2] {
    let ones = v.iter().filter(|&&x| x == 1).count();
    [v.len() - ones, ones]
}

fn cell_matches(data: &ColumnData, row: usize, declared: &[String]) -> bool {
    match data {
        ColumnData::Numeric(v) => v[row].is_some_and(|x| {
            declared
                .iter()
                .any(|d| parse_number(d.trim()).is_some_and(|dv| dv == x))
        }),
        ColumnData::Categorical(v) => v[row]
            .as_deref()
            .is_some_and(|x| declared.iter().any(|d| d.trim() == x)),
    }
}

fn cell_text(data: &ColumnData, row: usize) -> String {
    match data {
        ColumnData::Numeric(v) => v[row].map_or_else(String::new, |x| x.to_string()),
        ColumnData::Categorical(v) => v[row].clone().unwrap_or_default(),
    }
}

/// Every declared value must match at least one row; a value that matches
/// nothing is almost always a typo.
fn check_declared(col: &Column, declared: &[String], role: &'static str) -> Result<(), DataError> {
    for d in declared {
        let one = std::slice::from_ref(d);
        if !(0..col.data.len()).any(|r| cell_matches(&col.data, r, one)) {
            return Err(DataError::UnmatchedValue {
                column: col.name.clone(),
                role,
                value: d.clone(),
            });
        }
    }
    Ok(())
}

fn encode_binary(
    col: &Column,
    ones: &[String],
    zeros: Option<&[String]>,
    ones_is_positive: bool,
) -> Result<Vec<u8>, DataError> {
    let n = col.data.len();
    let mut out = Vec::with_capacity(n);
    let mut offending = BTreeSet::new();
    for r in 0..n {
        if col.data.is_missing(r) {
            return Err(DataError::UnresolvedMissing {
                column: col.name.clone(),
            });
        }
        let hit = cell_matches(&col.data, r, ones);
        if let Some(other) = zeros {
            if !hit && !cell_matches(&col.data, r, other) {
                offending.insert(cell_text(&col.data, r));
            }
        }
        // `ones` is the positive set for the target and group 0 for the sensitive attribute.
        out.push(if hit == ones_is_positive { 1 } else { 0 });
    }
    if !offending.is_empty() {
        return Err(DataError::UndeclaredValues {
            column: col.name.clone(),
            values: offending.into_iter().collect(),
        });
    }
    Ok(out)
}

/// Binarizes the target and sensitive columns and one-hot encodes the
/// remaining categorical features (levels in lexicographic order).
pub fn encode_task(table: &Table, task: &TaskEncoding) -> Result<Dataset, DataError> {
    let target_col = table
        .column(&task.target)
        .ok_or_else(|| DataError::MissingColumn(task.target.clone()))?;
    let sens_col = table
        .column(&task.sensitive)
        .ok_or_else(|| DataError::MissingColumn(task.sensitive.clone()))?;
    if task.target == task.sensitive {
        return Err(DataError::InvalidConfig(
            "target and sensitive columns must differ".into(),
        ));
    }
    if table.n_rows == 0 {
        return Err(DataError::NoRows);
    }

    check_declared(target_col, &task.positive, "positive")?;
    if let Some(neg) = &task.negative {
        check_declared(target_col, neg, "negative")?;
    }
    check_declared(sens_col, &task.group0, "group0")?;
    if let Some(g1) = &task.group1 {
        check_declared(sens_col, g1, "group1")?;
    }
    let target = encode_binary(target_col, &task.positive, task.negative.as_deref(), true)?;
    let sensitive = encode_binary(sens_col, &task.group0, task.group1.as_deref(), false)?;

    let mut names = Vec::new();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for col in &table.columns {
        if col.name == task.target || col.name == task.sensitive {
            continue;
        }
        match &col.data {
            ColumnData::Numeric(v) => {
                let vals: Option<Vec<f64>> = v.iter().copied().collect();
                let vals = vals.ok_or_else(|| DataError::UnresolvedMissing {
                    column: col.name.clone(),
                })?;
                names.push(col.name.clone());
                cols.push(vals);
            }
            ColumnData::Categorical(v) => {
                if v.iter().any(Option::is_none) {
                    return Err(DataError::UnresolvedMissing {
                        column: col.name.clone(),
                    });
                }
                let levels: BTreeSet<&str> = v.iter().flatten().map(String::as_str).collect();
                for level in levels {
                    names.push(format!("{}={}", col.name, level));
                    cols.push(
                        v.iter()
                            .map(|x| if x.as_deref() == Some(level) { 1.0 } else { 0.0 })
                            .collect(),
                    );
                }
            }
        }
    }

    let n = table.n_rows;
    let p = cols.len();
    let mut values = Vec::with_capacity(n * p);
    for r in 0..n {
        for c in &cols {
            values.push(c[r]);
        }
    }

    let mut provenance = table.provenance.clone();
    provenance.steps.push(format!(
        "encode_task(target={}, sensitive={}, features={})",
        task.target, task.sensitive, p
    ));
    Dataset::new(
        names,
        FeatureMatrix::new(n, p, values),
        target,
        sensitive,
        provenance,
    )
}

fn default_n_splits() -> usize {
    10
}
fn default_test_fraction() -> f64 {
    0.3
}
fn default_true() -> bool {
    true
}

/// Repeated holdout plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitPlan {
    #[serde(default = "default_n_splits")]
    pub n_splits: usize,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_true")]
    pub stratified: bool,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SplitPlan {
    fn default() -> Self {
        SplitPlan {
            n_splits: default_n_splits(),
            test_fraction: default_test_fraction(),
            stratified: true,
            seed: 0,
        }
    }
}

impl SplitPlan {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.n_splits == 0 {
            return Err(DataError::InvalidConfig("n_splits must be >= 1".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(DataError::InvalidConfig(format!(
                "test_fraction must be in (0, 1), got {}",
                self.test_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

const SPLIT_STREAM: u64 = 0x53_504c_4954;

/// Largest-remainder allocation of `total` across `sizes`.
fn apportion(total: usize, sizes: &[usize]) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    let mut alloc: Vec<usize> = sizes.iter().map(|&s| total * s / n).collect();
    let mut rema: Vec<(usize, usize)> = sizes
        .iter()
        .enumerate()
        .map(|(i, &s)| (i, (total * s) % n))
        .collect();
    rema.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut left = total - alloc.iter().sum::<usize>();
    for (i, _) in rema {
        if left == 0 {
            break;
        }
        alloc[i] += 1;
        left -= 1;
    }
    alloc
}

/// Generates `plan.n_splits` seeded train/test partitions of the rows.
/// Index lists are sorted ascending.
pub fn make_splits(d: &Dataset, plan: &SplitPlan) -> Result<Vec<Split>, DataError> {
    plan.validate()?;
    let n = d.n_rows();
    if n < 4 {
        return Err(DataError::TooFewRows(n));
    }
    let n_test = ((plan.test_fraction * n as f64).round() as usize).clamp(1, n - 1);

    let strata: Vec<Vec<usize>> = if plan.stratified {
        let by_class: Vec<Vec<usize>> = (0..2u8)
            .map(|c| (0..n).filter(|&i| d.target[i] == c).collect())
            .collect();
        for (c, rows) in by_class.iter().enumerate() {
            if rows.len() < 2 {
                return Err(DataError::ClassTooSmall {
                    class: c as u8,
                    count: rows.len(),
                });
            }
        }
        by_class
    } else {
        vec![(0..n).collect()]
    };
    let sizes: Vec<usize> = strata.iter().map(Vec::len).collect();
    let quotas: Vec<usize> = if plan.stratified {
        apportion(n_test, &sizes)
            .into_iter()
            .zip(&sizes)
            .map(|(q, &s)| q.clamp(1, s - 1))
            .collect()
    } else {
        vec![n_test]
    };

    Ok((0..plan.n_splits)
        .map(|k| {
            let mut rng = seed::rng(seed::derive(plan.seed, &[SPLIT_STREAM, k as u64]));
            let mut test = Vec::with_capacity(n_test);
            for (rows, &q) in strata.iter().zip(&quotas) {
                let mut rows = rows.clone();
                rows.shuffle(&mut rng);
                test.extend_from_slice(&rows[..q]);
            }
            test.sort_unstable();
            let mut in_test = vec![false; n];
            for &t in &test {
                in_test[t] = true;
            }
            let train = (0..n).filter(|&i| !in_test[i]).collect();
            Split { train, test }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(s: &str, codes: &[&str]) -> Result<Table, DataError> {
        let codes: Vec<String> = codes.iter().map(|s| s.to_string()).collect();
        load_csv(s.as_bytes(), "test", &codes)
    }

    fn numeric(t: &Table, name: &str) -> Vec<Option<f64>> {
        match &t.column(name).unwrap().data {
            ColumnData::Numeric(v) => v.clone(),
            other => panic!("not numeric: {other:?}"),
        }
    }

    #[test]
    fn load_infers_column_types() {
        let t = load("a,b\n1,x\n2,y\n3,z", &[]).unwrap();
        assert_eq!(t.n_rows, 3);
        assert_eq!(t.columns[0].kind(), ColumnKind::Numeric);
        assert_eq!(t.columns[1].kind(), ColumnKind::Categorical);
        assert_eq!(numeric(&t, "a"), vec![Some(1.0), Some(2.0), Some(3.0)]);
    }

    #[test]
    fn load_marks_missing_codes() {
        let t = load("a,b\n-9,x\n2,\n", &["-9"]).unwrap();
        assert_eq!(numeric(&t, "a"), vec![None, Some(2.0)]);
        assert!(t.column("b").unwrap().data.is_missing(1));
    }

    #[test]
    fn load_header_only_then_encode_fails() {
        let t = load("target,sensitive,x\n", &[]).unwrap();
        assert_eq!(t.n_rows, 0);
        assert!(encode_task(&t, &TaskEncoding::default()).is_err());
    }

    #[test]
    fn load_rejects_ragged_and_empty() {
        assert_eq!(
            load("a,b\n1,2\n3\n", &[]).unwrap_err(),
            DataError::Ragged {
                row: 2,
                expected: 2,
                found: 1
            }
        );
        assert_eq!(load("", &[]).unwrap_err(), DataError::EmptyFile);
    }

    #[test]
    fn sparse_rows_are_dropped() {
        // row 1 has 8 of 10 cells missing
        let header = (0..10).map(|i| format!("c{i}")).collect::<Vec<_>>().join(",");
        let full = (0..10).map(|i| i.to_string()).collect::<Vec<_>>().join(",");
        let sparse = "1,2,,,,,,,,";
        let csv = format!("{header}\n{full}\n{sparse}\n");
        let t = load(&csv, &[]).unwrap();
        let cfg = PreprocessConfig {
            impute: Impute::Mean,
            standardize: Standardize::None,
            ..Default::default()
        };
        let p = preprocess(&t, &cfg, &[]).unwrap();
        assert_eq!(p.n_rows, 1);
    }

    #[test]
    fn zscore_uses_sample_std() {
        let t = load("a,k\n1,3\n2,3\n3,3\n", &[]).unwrap();
        let p = preprocess(&t, &PreprocessConfig::default(), &[]).unwrap();
        assert_eq!(numeric(&p, "a"), vec![Some(-1.0), Some(0.0), Some(1.0)]);
        // constant column maps to zeros
        assert_eq!(numeric(&p, "k"), vec![Some(0.0); 3]);
    }

    #[test]
    fn mean_imputation_fills_gaps() {
        let t = load("a,b\n1,0\n,0\n3,0\n", &[]).unwrap();
        let cfg = PreprocessConfig {
            impute: Impute::Mean,
            standardize: Standardize::None,
            row_missing_threshold: 1.0,
            ..Default::default()
        };
        let p = preprocess(&t, &cfg, &[]).unwrap();
        assert_eq!(numeric(&p, "a"), vec![Some(1.0), Some(2.0), Some(3.0)]);
    }

    #[test]
    fn median_and_mode_imputation() {
        let t = load("a,b\n1,x\n,\n10,y\n4,x\n", &[]).unwrap();
        let cfg = PreprocessConfig {
            impute: Impute::Median,
            standardize: Standardize::None,
            row_missing_threshold: 1.0,
            ..Default::default()
        };
        let p = preprocess(&t, &cfg, &[]).unwrap();
        assert_eq!(numeric(&p, "a")[1], Some(4.0));
        match &p.column("b").unwrap().data {
            ColumnData::Categorical(v) => assert_eq!(v[1].as_deref(), Some("x")),
            _ => panic!(),
        }
    }

    #[test]
    fn impute_none_drops_incomplete_rows() {
        let t = load("a,b\n1,x\n,y\n3,z\n", &[]).unwrap();
        let p = preprocess(&t, &PreprocessConfig::default(), &[]).unwrap();
        assert_eq!(p.n_rows, 2);
    }

    #[test]
    fn all_rows_dropped_is_error() {
        let t = load("a,b\n,x\n", &[]).unwrap();
        assert_eq!(
            preprocess(&t, &PreprocessConfig::default(), &[]).unwrap_err(),
            DataError::AllRowsDropped
        );
    }

    #[test]
    fn passthrough_columns_are_not_scaled() {
        let t = load("y,a\n1,5\n0,7\n", &[]).unwrap();
        let p = preprocess(&t, &PreprocessConfig::default(), &["y"]).unwrap();
        assert_eq!(numeric(&p, "y"), vec![Some(1.0), Some(0.0)]);
    }

    const RACE_CSV: &str = "race,degree,gpa,school\n\
        Black,BA,3.1,pub\n\
        Hispanic,HS,2.5,priv\n\
        MR,MA,3.8,pub\n\
        Asian,BA,3.9,charter\n\
        White,HS,2.9,pub\n\
        White,PhD,3.5,priv\n";

    fn race_task() -> TaskEncoding {
        TaskEncoding {
            target: "degree".into(),
            positive: vec!["BA".into(), "MA".into(), "PhD".into()],
            negative: None,
            sensitive: "race".into(),
            group0: vec!["Black".into(), "Hispanic".into(), "MR".into()],
            group1: Some(vec!["Asian".into(), "White".into()]),
        }
    }

    #[test]
    fn encode_groups_race_values() {
        let t = load(RACE_CSV, &[]).unwrap();
        let d = encode_task(&t, &race_task()).unwrap();
        assert_eq!(d.sensitive, vec![0, 0, 0, 1, 1, 1]);
        assert_eq!(d.target, vec![1, 0, 1, 1, 0, 1]);
        // gpa + 3 indicator columns for school
        assert_eq!(
            d.feature_names,
            vec!["gpa", "school=charter", "school=priv", "school=pub"]
        );
        assert_eq!(d.features.row(3), &[3.9, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn encode_rejects_undeclared_values() {
        let t = load(RACE_CSV, &[]).unwrap();
        let mut task = race_task();
        task.group1 = Some(vec!["White".into()]);
        assert_eq!(
            encode_task(&t, &task).unwrap_err(),
            DataError::UndeclaredValues {
                column: "race".into(),
                values: vec!["Asian".into()]
            }
        );
    }

    #[test]
    fn encode_rejects_single_class() {
        let t = load(RACE_CSV, &[]).unwrap();
        let mut task = race_task();
        task.positive = vec!["BA".into(), "MA".into(), "PhD".into(), "HS".into()];
        assert_eq!(
            encode_task(&t, &task).unwrap_err(),
            DataError::EmptyClass(0)
        );
        let mut task = race_task();
        task.group0 = vec![];
        task.group1 = None;
        assert_eq!(encode_task(&t, &task).unwrap_err(), DataError::EmptyGroup(0));
    }

    #[test]
    fn encode_missing_column_is_named() {
        let t = load(RACE_CSV, &[]).unwrap();
        let mut task = race_task();
        task.target = "income".into();
        assert_eq!(
            encode_task(&t, &task).unwrap_err().to_string(),
            "column 'income' not found"
        );
    }

    #[test]
    fn encode_matches_numeric_codes() {
        let t = load("y,s,x\n1,2,0.5\n0,1,0.1\n1.0,1,0.2\n0,2,0.3\n", &[]).unwrap();
        let task = TaskEncoding {
            target: "y".into(),
            sensitive: "s".into(),
            group0: vec!["2".into()],
            ..Default::default()
        };
        let d = encode_task(&t, &task).unwrap();
        assert_eq!(d.target, vec![1, 0, 1, 0]);
        assert_eq!(d.sensitive, vec![0, 1, 1, 0]);
    }

    fn toy_dataset(n: usize, positives: usize) -> Dataset {
        let target: Vec<u8> = (0..n).map(|i| u8::from(i < positives)).collect();
        let sensitive: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let feats = FeatureMatrix::new(n, 1, (0..n).map(|i| i as f64).collect());
        Dataset::new(
            vec!["x".into()],
            feats,
            target,
            sensitive,
            Provenance::default(),
        )
        .unwrap()
    }

    #[test]
    fn splits_are_deterministic_and_sized() {
        let d = toy_dataset(100, 40);
        let plan = SplitPlan {
            seed: 42,
            ..Default::default()
        };
        let a = make_splits(&d, &plan).unwrap();
        let b = make_splits(&d, &plan).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        for s in &a {
            assert_eq!(s.test.len(), 30);
            assert_eq!(s.train.len(), 70);
        }
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn stratified_split_keeps_proportions() {
        // 60/40 class balance, test size 10
        let d = toy_dataset(25, 10);
        let plan = SplitPlan {
            n_splits: 20,
            test_fraction: 0.4,
            stratified: true,
            seed: 3,
        };
        for s in make_splits(&d, &plan).unwrap() {
            assert_eq!(s.test.len(), 10);
            let pos = s.test.iter().filter(|&&i| d.target[i] == 1).count();
            assert!((3..=5).contains(&pos), "positives in test: {pos}");
        }
    }

    #[test]
    fn stratified_split_needs_two_per_class() {
        let d = toy_dataset(10, 1);
        assert_eq!(
            make_splits(&d, &SplitPlan::default()).unwrap_err(),
            DataError::ClassTooSmall { class: 1, count: 1 }
        );
        let plan = SplitPlan {
            stratified: false,
            ..Default::default()
        };
        assert!(make_splits(&d, &plan).is_ok());
    }

    #[test]
    fn apportion_sums_to_total() {
        assert_eq!(apportion(10, &[15, 10]), vec![6, 4]);
        assert_eq!(apportion(3, &[1, 1, 1]), vec![1, 1, 1]);
        assert_eq!(apportion(1, &[1, 1]), vec![1, 0]);
    }
}
