//! Pareto tables (CSV/JSON) and the markdown run report.
//!
//! Table column order is fixed: `family`, `accuracy`, one score column per
//! computed fairness metric (named by metric id, holding the mean score
//! `1 - gap`), then the hyperparameters. Per-family tables list that
//! family's hyperparameters in declaration order; combined tables list the
//! union over the families present, in family order, with empty cells
//! where a hyperparameter does not apply.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::EvaluationRecord;
use crate::metrics::MetricId;
use crate::models::{HyperValue, ModelFamily};
use crate::pareto::{extract_frontier, DominanceMode, Grouping, ObjectivePair, ParetoSet};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no evaluation records to report on")]
    NoRecords,
    #[error("csv: {0}")]
    Csv(String),
    #[error("malformed table: {0}")]
    Malformed(String),
}

/// One frontier member as a table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub family: ModelFamily,
    pub accuracy: f64,
    /// Mean score per metric column, `None` where undefined.
    pub scores: Vec<Option<f64>>,
    /// Value per hyperparameter column, `None` where not applicable.
    pub hyperparameters: Vec<Option<HyperValue>>,
}

/// Tabular view of one Pareto set, in ascending accuracy order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoTable {
    pub y_objective: MetricId,
    pub family: Option<ModelFamily>,
    pub metrics: Vec<MetricId>,
    pub hyperparameters: Vec<String>,
    pub rows: Vec<TableRow>,
}

fn hyperparameter_columns(family: Option<ModelFamily>, members: &[EvaluationRecord]) -> Vec<String> {
    let families: Vec<ModelFamily> = match family {
        Some(f) => vec![f],
        None => ModelFamily::ALL
            .into_iter()
            .filter(|f| members.iter().any(|r| r.family == *f))
            .collect(),
    };
    let mut cols: Vec<String> = Vec::new();
    for f in families {
        for h in f.hyperparameters() {
            if !cols.iter().any(|c| c == h) {
                cols.push((*h).to_owned());
            }
        }
    }
    cols
}

/// Builds the table of `ps` with a score column for every metric in
/// `metrics`, whether or not it is the set's y objective.
pub fn pareto_table(ps: &ParetoSet, metrics: &[MetricId]) -> ParetoTable {
    let hyperparameters = hyperparameter_columns(ps.family, &ps.members);
    let rows = ps
        .members
        .iter()
        .zip(ps.points())
        .map(|(r, (x, _))| TableRow {
            family: r.family,
            accuracy: x,
            scores: metrics.iter().map(|&m| r.score_mean(m)).collect(),
            hyperparameters: hyperparameters
                .iter()
                .map(|h| r.hyperparameter(h).cloned())
                .collect(),
        })
        .collect();
    ParetoTable {
        y_objective: ps.y_objective,
        family: ps.family,
        metrics: metrics.to_vec(),
        hyperparameters,
        rows,
    }
}

fn fixed(v: f64, decimals: usize) -> String {
    let s = format!("{v:.decimals$}");
    // drop the sign of values that round to zero
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_owned()
    } else {
        s
    }
}

fn signed(v: f64, decimals: usize) -> String {
    let s = fixed(v, decimals);
    if s.starts_with('-') {
        s
    } else {
        format!("+{s}")
    }
}

impl ParetoTable {
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["family".to_owned(), "accuracy".to_owned()];
        h.extend(self.metrics.iter().map(|m| m.as_str().to_owned()));
        h.extend(self.hyperparameters.iter().cloned());
        h
    }

    fn cells(&self, row: &TableRow, decimals: usize) -> Vec<String> {
        let mut c = vec![row.family.as_str().to_owned(), fixed(row.accuracy, decimals)];
        c.extend(
            row.scores
                .iter()
                .map(|s| s.map_or_else(String::new, |v| fixed(v, decimals))),
        );
        c.extend(
            row.hyperparameters
                .iter()
                .map(|h| h.as_ref().map_or_else(String::new, ToString::to_string)),
        );
        c
    }

    /// RFC 4180 CSV with 6-decimal numbers; header only when empty.
    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(Vec::new());
        w.write_record(self.header()).expect("in-memory write");
        for row in &self.rows {
            w.write_record(self.cells(row, 6)).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    /// Pretty JSON with full-precision numbers.
    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(&JsonTable::from(self)).expect("serializable");
        out.push(b'\n');
        out
    }

    /// Parses CSV produced by [`ParetoTable::to_csv`]. Hyperparameter
    /// cells are read as integers, floats, booleans or strings, in that
    /// order.
    pub fn from_csv(bytes: &[u8], y_objective: MetricId) -> Result<ParetoTable, ReportError> {
        let mut r = csv::ReaderBuilder::new().from_reader(bytes);
        let header: Vec<String> = r
            .headers()
            .map_err(|e| ReportError::Csv(e.to_string()))?
            .iter()
            .map(str::to_owned)
            .collect();
        if header.len() < 2 || header[0] != "family" || header[1] != "accuracy" {
            return Err(ReportError::Malformed("header must start with family,accuracy".into()));
        }
        let mut metrics = Vec::new();
        let mut k = 2;
        while k < header.len() {
            match header[k].parse::<MetricId>() {
                Ok(m) => metrics.push(m),
                Err(_) => break,
            }
            k += 1;
        }
        let hyperparameters = header[k..].to_vec();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| ReportError::Csv(e.to_string()))?;
            let bad = |what: &str| ReportError::Malformed(format!("bad {what} in {rec:?}"));
            let family = rec[0].parse::<ModelFamily>().map_err(|_| bad("family"))?;
            let accuracy = rec[1].parse::<f64>().map_err(|_| bad("accuracy"))?;
            let scores = (0..metrics.len())
                .map(|j| {
                    let cell = &rec[2 + j];
                    if cell.is_empty() {
                        Ok(None)
                    } else {
                        cell.parse::<f64>().map(Some).map_err(|_| bad("score"))
                    }
                })
                .collect::<Result<_, _>>()?;
            let hyper = (k..header.len())
                .map(|j| parse_hyper(&rec[j]))
                .collect();
            rows.push(TableRow {
                family,
                accuracy,
                scores,
                hyperparameters: hyper,
            });
        }
        let families: Vec<ModelFamily> = rows.iter().map(|r| r.family).collect();
        let family = match families.first() {
            Some(&f) if families.iter().all(|&g| g == f) => Some(f),
            _ => None,
        };
        Ok(ParetoTable {
            y_objective,
            family,
            metrics,
            hyperparameters,
            rows,
        })
    }

    fn markdown(&self, out: &mut String) {
        let header = self.header();
        let _ = writeln!(out, "| {} |", header.join(" | "));
        let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
        for row in &self.rows {
            let cells: Vec<String> = self
                .cells(row, 3)
                .into_iter()
                .map(|c| if c.is_empty() { "n/a".to_owned() } else { c })
                .collect();
            let _ = writeln!(out, "| {} |", cells.join(" | "));
        }
    }
}

fn parse_hyper(cell: &str) -> Option<HyperValue> {
    if cell.is_empty() {
        return None;
    }
    Some(if let Ok(i) = cell.parse::<i64>() {
        HyperValue::Int(i)
    } else if let Ok(x) = cell.parse::<f64>() {
        HyperValue::Float(x)
    } else if let Ok(b) = cell.parse::<bool>() {
        HyperValue::Bool(b)
    } else {
        HyperValue::Str(cell.to_owned())
    })
}

#[derive(Serialize)]
struct JsonRow<'a> {
    family: ModelFamily,
    accuracy: f64,
    scores: BTreeMap<&'static str, Option<f64>>,
    assignment: BTreeMap<&'a str, Option<&'a HyperValue>>,
}

#[derive(Serialize)]
struct JsonTable<'a> {
    y_objective: MetricId,
    family: Option<ModelFamily>,
    columns: Vec<String>,
    rows: Vec<JsonRow<'a>>,
}

impl<'a> From<&'a ParetoTable> for JsonTable<'a> {
    fn from(t: &'a ParetoTable) -> Self {
        JsonTable {
            y_objective: t.y_objective,
            family: t.family,
            columns: t.header(),
            rows: t
                .rows
                .iter()
                .map(|r| JsonRow {
                    family: r.family,
                    accuracy: r.accuracy,
                    scores: t.metrics.iter().map(|m| m.as_str()).zip(r.scores.iter().copied()).collect(),
                    assignment: t
                        .hyperparameters
                        .iter()
                        .map(String::as_str)
                        .zip(r.hyperparameters.iter().map(Option::as_ref))
                        .filter(|(_, v)| v.is_some())
                        .collect(),
                })
                .collect(),
        }
    }
}

/// Base file name (without extension) of a frontier export.
pub fn frontier_file_stem(family: Option<ModelFamily>, metric: MetricId) -> String {
    match family {
        Some(f) => format!("{}_{}_frontier", f.as_str(), metric.as_str()),
        None => format!("all_families_{}_frontier", metric.as_str()),
    }
}

/// Every frontier of a finished run: one per family and metric, plus one
/// combined frontier per metric when at least two families ran.
#[derive(Debug, Clone)]
pub struct Frontiers {
    pub individual: Vec<ParetoSet>,
    pub multi_model: Vec<ParetoSet>,
}

pub fn families_of(records: &[EvaluationRecord]) -> Vec<ModelFamily> {
    ModelFamily::ALL
        .into_iter()
        .filter(|f| records.iter().any(|r| r.family == *f))
        .collect()
}

pub fn all_frontiers(
    records: &[EvaluationRecord],
    metrics: &[MetricId],
    mode: DominanceMode,
) -> Frontiers {
    let mut individual = Vec::new();
    for &m in metrics {
        individual.extend(extract_frontier(
            records,
            ObjectivePair::accuracy_vs(m),
            mode,
            Grouping::PerFamily,
        ));
    }
    // family-major order
    individual.sort_by_key(|ps| ps.family.map(|f| f as usize));
    let multi_model = if families_of(records).len() >= 2 {
        metrics
            .iter()
            .flat_map(|&m| {
                extract_frontier(
                    records,
                    ObjectivePair::accuracy_vs(m),
                    mode,
                    Grouping::AllFamilies,
                )
            })
            .collect()
    } else {
        Vec::new()
    };
    Frontiers {
        individual,
        multi_model,
    }
}

/// Inputs of the run report.
#[derive(Debug, Clone)]
pub struct ReportInput<'a> {
    pub records: &'a [EvaluationRecord],
    /// The configuration document, echoed verbatim.
    pub config_text: &'a str,
    pub metrics: &'a [MetricId],
    pub mode: DominanceMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub markdown: String,
    pub individual_tables: usize,
    pub multi_model_tables: usize,
}

/// Sentence describing the move from the most-accurate to the fairest
/// frontier member.
pub fn endpoint_sentence(ps: &ParetoSet) -> String {
    match ps.endpoint_delta() {
        Some((da, df)) => format!(
            "Moving from the most-accurate to the fairest member changes accuracy by {} and fairness score by {}.",
            signed(da, 3),
            signed(df, 3)
        ),
        None => "The frontier is empty: no configuration has a defined score for this metric.".to_owned(),
    }
}

fn frontier_section(out: &mut String, title: &str, ps: &ParetoSet, metrics: &[MetricId], considered: usize) {
    let _ = writeln!(out, "### {title}\n");
    let _ = writeln!(
        out,
        "{} of {} configurations are non-dominated ({} dominance).",
        ps.members.len(),
        considered,
        ps.mode
    );
    if ps.excluded_undefined > 0 || ps.excluded_unusable > 0 {
        let _ = writeln!(
            out,
            "Excluded: {} with an undefined score, {} with no successful split.",
            ps.excluded_undefined, ps.excluded_unusable
        );
    }
    let _ = writeln!(out, "{}", endpoint_sentence(ps));
    let _ = writeln!(
        out,
        "Data: `{}.json`\n",
        frontier_file_stem(ps.family, ps.y_objective)
    );
    pareto_table(ps, metrics).markdown(out);
    out.push('\n');
}

/// Renders the markdown report. The body is a pure function of the input.
pub fn generate_report(input: &ReportInput<'_>) -> Result<Report, ReportError> {
    let records = input.records;
    if records.is_empty() {
        return Err(ReportError::NoRecords);
    }
    let families = families_of(records);
    let frontiers = all_frontiers(records, input.metrics, input.mode);
    let mut out = String::new();

    out.push_str("# Exploration report\n\n## Configuration\n\n```json\n");
    out.push_str(input.config_text);
    if !input.config_text.ends_with('\n') {
        out.push('\n');
    }
    out.push_str("```\n\n## Grid\n\n");
    out.push_str("| family | assignments | splits | tasks | failed tasks | unusable assignments |\n");
    out.push_str("|---|---|---|---|---|---|\n");
    for &f in &families {
        let rs: Vec<&EvaluationRecord> = records.iter().filter(|r| r.family == f).collect();
        let splits = rs.first().map_or(0, |r| r.n_splits);
        let failed: usize = rs.iter().map(|r| r.failed_splits.len()).sum();
        let unusable = rs.iter().filter(|r| !r.usable).count();
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} |",
            f,
            rs.len(),
            splits,
            rs.len() * splits,
            failed,
            unusable
        );
    }

    out.push_str("\n## Undefined metrics\n\n");
    let mut warnings = Vec::new();
    for &f in &families {
        for &m in input.metrics {
            let n = records
                .iter()
                .filter(|r| r.family == f && r.usable && r.score_mean(m).is_none())
                .count();
            if n > 0 {
                warnings.push((f, m, n));
            }
        }
    }
    if warnings.is_empty() {
        out.push_str("Every fairness metric is defined for every configuration.\n");
    } else {
        out.push_str("| family | metric | configurations with an undefined score |\n|---|---|---|\n");
        for (f, m, n) in warnings {
            let _ = writeln!(out, "| {f} | {m} | {n} |");
        }
    }

    out.push_str("\n## Individual model frontiers\n\n");
    for ps in &frontiers.individual {
        let family = ps.family.expect("per-family set");
        let considered = records.iter().filter(|r| r.family == family).count();
        frontier_section(
            &mut out,
            &format!("{} · {}", family, ps.y_objective),
            ps,
            input.metrics,
            considered,
        );
    }

    if !frontiers.multi_model.is_empty() {
        out.push_str("## Multi-model frontiers\n\n");
        for ps in &frontiers.multi_model {
            frontier_section(
                &mut out,
                &format!("all families · {}", ps.y_objective),
                ps,
                input.metrics,
                records.len(),
            );
        }
    }

    while out.ends_with("\n\n") {
        out.pop();
    }
    Ok(Report {
        markdown: out,
        individual_tables: frontiers.individual.len(),
        multi_model_tables: frontiers.multi_model.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{MetricStat, RateMeans, Stat};
    use crate::models::Params;

    fn record(family: ModelFamily, index: usize, acc: f64, scores: &[(MetricId, Option<f64>)]) -> EvaluationRecord {
        let mut assignment = Params::new();
        for h in family.hyperparameters() {
            assignment.insert((*h).to_owned(), HyperValue::Str(format!("v{index}")));
        }
        EvaluationRecord {
            family,
            index,
            assignment,
            n_splits: 2,
            usable: true,
            failed_splits: Vec::new(),
            accuracy: Some(Stat { mean: acc, variance: 0.0 }),
            balanced_accuracy: None,
            metrics: scores
                .iter()
                .map(|&(m, s)| {
                    let st = s.map(|v| Stat { mean: v, variance: 0.0 });
                    (
                        m,
                        MetricStat {
                            gap: st.map(|g| Stat { mean: 1.0 - g.mean, variance: 0.0 }),
                            score: st,
                            undefined_splits: usize::from(s.is_none()),
                        },
                    )
                })
                .collect(),
            group_rates: [RateMeans::default(); 2],
        }
    }

    const PP: MetricId = MetricId::PredictiveParity;
    const EO: MetricId = MetricId::EqualOpportunity;

    fn three_member_set() -> (ParetoSet, Vec<EvaluationRecord>) {
        let recs = vec![
            record(ModelFamily::DecisionTree, 0, 0.90, &[(PP, Some(0.70)), (EO, Some(0.5))]),
            record(ModelFamily::DecisionTree, 1, 0.85, &[(PP, Some(0.90)), (EO, None)]),
            record(ModelFamily::DecisionTree, 2, 0.80, &[(PP, Some(0.80)), (EO, Some(0.9))]),
            record(ModelFamily::DecisionTree, 3, 0.95, &[(PP, Some(0.65)), (EO, Some(0.1))]),
        ];
        let ps = crate::pareto::family_frontier(
            &recs,
            ModelFamily::DecisionTree,
            ObjectivePair::accuracy_vs(PP),
            DominanceMode::Weak,
        );
        (ps, recs)
    }

    #[test]
    fn table_has_every_metric_and_hyperparameter_column() {
        let (ps, _) = three_member_set();
        let t = pareto_table(&ps, &[PP, EO]);
        assert_eq!(t.header().len(), 2 + 2 + 5);
        let csv = String::from_utf8(t.to_csv()).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(
            lines[0],
            "family,accuracy,predictive_parity,equal_opportunity,criterion,max_features,min_samples_split,min_samples_leaf,class_weight"
        );
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("decision_tree,0.850000,0.900000,,"));
        assert!(lines[3].starts_with("decision_tree,0.950000,"));
    }

    #[test]
    fn csv_round_trips() {
        let (ps, _) = three_member_set();
        let t = pareto_table(&ps, &[PP, EO]);
        let back = ParetoTable::from_csv(&t.to_csv(), PP).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn empty_frontier_is_header_only() {
        let ps = crate::pareto::family_frontier(
            &[],
            ModelFamily::Svc,
            ObjectivePair::accuracy_vs(PP),
            DominanceMode::Weak,
        );
        let csv = String::from_utf8(pareto_table(&ps, &[PP]).to_csv()).unwrap();
        assert_eq!(csv, "family,accuracy,predictive_parity,C,kernel\r\n");
    }

    #[test]
    fn single_member_delta_is_zero() {
        let recs = vec![record(ModelFamily::Svc, 0, 0.7, &[(PP, Some(0.6))])];
        let ps = crate::pareto::family_frontier(
            &recs,
            ModelFamily::Svc,
            ObjectivePair::accuracy_vs(PP),
            DominanceMode::Weak,
        );
        assert_eq!(ps.endpoint_delta(), Some((0.0, 0.0)));
        assert!(endpoint_sentence(&ps).contains("accuracy by +0.000 and fairness score by +0.000"));
    }

    #[test]
    fn report_echoes_config_and_counts_tables() {
        let mut recs = Vec::new();
        for (k, f) in ModelFamily::ALL.into_iter().enumerate() {
            recs.push(record(f, 0, 0.8 + 0.01 * k as f64, &[(PP, Some(0.7)), (EO, Some(0.6))]));
            recs.push(record(f, 1, 0.7, &[(PP, Some(0.9)), (EO, None)]));
        }
        let cfg = "{\n  \"seed\": 3\n}";
        let rep = generate_report(&ReportInput {
            records: &recs,
            config_text: cfg,
            metrics: &[PP, EO],
            mode: DominanceMode::Weak,
        })
        .unwrap();
        assert_eq!(rep.individual_tables, 8);
        assert_eq!(rep.multi_model_tables, 2);
        assert!(rep.markdown.contains(&format!("```json\n{cfg}\n```")));
        assert_eq!(rep.markdown.matches("\n### ").count(), 10);
        assert!(rep.markdown.contains("| svc | equal_opportunity | 1 |"));
        let again = generate_report(&ReportInput {
            records: &recs,
            config_text: cfg,
            metrics: &[PP, EO],
            mode: DominanceMode::Weak,
        })
        .unwrap();
        assert_eq!(again, rep);
    }

    #[test]
    fn report_needs_records() {
        let r = generate_report(&ReportInput {
            records: &[],
            config_text: "{}",
            metrics: &[PP],
            mode: DominanceMode::Weak,
        });
        assert!(matches!(r, Err(ReportError::NoRecords)));
    }

    #[test]
    fn fixed_formatting_drops_negative_zero() {
        assert_eq!(fixed(-0.0001, 3), "0.000");
        assert_eq!(signed(-0.0001, 3), "+0.000");
        assert_eq!(signed(-0.25, 3), "-0.250");
    }
}
