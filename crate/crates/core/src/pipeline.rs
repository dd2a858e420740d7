//! End-to-end driver: CSV bytes to records, frontiers and report files.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigViolation, ExplorationConfig};
use crate::data::{encode_task, load_csv, make_splits, preprocess, DataError, Dataset, PreprocessConfig, TaskEncoding};
use crate::grid::{run_grid_on_splits, EvaluationRecord, GridError, Inspector, Progress};
use crate::pareto::{DominanceMode, ParetoSet};
use crate::report::{
    all_frontiers, frontier_file_stem, generate_report, pareto_table, ReportError, ReportInput,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Config(Vec<ConfigViolation>),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl PipelineError {
    /// Whether the failure comes from user input rather than execution.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            PipelineError::Config(_) | PipelineError::Data(_) | PipelineError::Grid(GridError::Invalid(_) | GridError::TooLarge { .. })
        )
    }
}

/// Loads, cleans and encodes a CSV. The target and sensitive columns pass
/// through cleaning untouched.
pub fn prepare_dataset(
    csv: &[u8],
    source_id: &str,
    pre: &PreprocessConfig,
    task: &TaskEncoding,
) -> Result<Dataset, DataError> {
    pre.validate()?;
    let raw = load_csv(csv, source_id, &pre.missing_codes)?;
    for col in [&task.target, &task.sensitive] {
        if raw.column(col).is_none() {
            return Err(DataError::MissingColumn(col.clone()));
        }
    }
    let clean = preprocess(&raw, pre, &[task.target.as_str(), task.sensitive.as_str()])?;
    encode_task(&clean, task)
}

/// Number of (assignment, split) tasks `cfg` schedules.
pub fn total_tasks(cfg: &ExplorationConfig) -> u64 {
    cfg.families
        .iter()
        .map(|&f| cfg.space(f).size() as u64)
        .sum::<u64>()
        .saturating_mul(cfg.splits.n_splits as u64)
}

/// Runs every configured family over one shared list of splits. Records
/// come out grouped by family in `cfg.families` order, each in expand
/// order.
pub fn run_exploration(
    d: &Dataset,
    cfg: &ExplorationConfig,
    progress: &Progress,
    inspect: Option<Inspector<'_>>,
) -> Result<Vec<EvaluationRecord>, PipelineError> {
    cfg.validate().map_err(PipelineError::Config)?;
    let splits = make_splits(d, &cfg.split_plan())?;
    progress.set_total(total_tasks(cfg));
    let opts = cfg.grid_options();
    let mut records = Vec::new();
    for &family in &cfg.families {
        records.extend(run_grid_on_splits(
            d,
            &cfg.space(family),
            &splits,
            &opts,
            progress,
            inspect,
        )?);
    }
    Ok(records)
}

pub fn records_json(records: &[EvaluationRecord]) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(records).expect("serializable");
    out.push(b'\n');
    out
}

pub fn parse_records(bytes: &[u8]) -> Result<Vec<EvaluationRecord>, serde_json::Error> {
    serde_json::from_slice(bytes)
}

/// One output file, named relative to the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputFile {
    pub name: String,
    pub bytes: Vec<u8>,
}

fn frontier_files(ps: &ParetoSet, cfg: &ExplorationConfig, out: &mut Vec<OutputFile>) {
    let table = pareto_table(ps, &cfg.metrics);
    let stem = frontier_file_stem(ps.family, ps.y_objective);
    out.push(OutputFile {
        name: format!("{stem}.csv"),
        bytes: table.to_csv(),
    });
    out.push(OutputFile {
        name: format!("{stem}.json"),
        bytes: table.to_json(),
    });
}

/// Renders every deterministic output of a finished run: `records.json`,
/// one CSV and JSON per frontier, `config.json` and, with `report`,
/// `report.md`.
pub fn render_outputs(
    records: &[EvaluationRecord],
    cfg: &ExplorationConfig,
    config_text: &str,
    report: bool,
) -> Result<Vec<OutputFile>, PipelineError> {
    let mut out = vec![
        OutputFile {
            name: "records.json".into(),
            bytes: records_json(records),
        },
        OutputFile {
            name: "config.json".into(),
            bytes: cfg.to_json_pretty().into_bytes(),
        },
    ];
    let frontiers = all_frontiers(records, &cfg.metrics, cfg.mode);
    for ps in frontiers.individual.iter().chain(&frontiers.multi_model) {
        frontier_files(ps, cfg, &mut out);
    }
    if report {
        let rep = render_report(records, cfg, config_text)?;
        out.push(OutputFile {
            name: "report.md".into(),
            bytes: rep.into_bytes(),
        });
    }
    Ok(out)
}

pub fn render_report(
    records: &[EvaluationRecord],
    cfg: &ExplorationConfig,
    config_text: &str,
) -> Result<String, PipelineError> {
    let mut md = generate_report(&ReportInput {
        records,
        config_text,
        metrics: &cfg.metrics,
        mode: cfg.mode,
    })?
    .markdown;
    md.push('\n');
    Ok(md)
}

#[derive(Debug, Serialize)]
struct Metadata<'a> {
    tool_version: &'a str,
    created_unix_seconds: u64,
    records: usize,
    files: Vec<&'a str>,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Writes `files` into `dir` plus `metadata.json`, the only output that
/// carries a timestamp.
pub fn write_outputs(dir: &Path, files: &[OutputFile], n_records: usize) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for f in files {
        let path = dir.join(&f.name);
        fs::write(&path, &f.bytes).map_err(io_err(&path))?;
    }
    let created = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let meta = Metadata {
        tool_version: env!("CARGO_PKG_VERSION"),
        created_unix_seconds: created,
        records: n_records,
        files: files.iter().map(|f| f.name.as_str()).collect(),
    };
    let path = dir.join("metadata.json");
    let mut bytes = serde_json::to_vec_pretty(&meta).expect("serializable");
    bytes.push(b'\n');
    fs::write(&path, bytes).map_err(io_err(&path))?;
    Ok(())
}

/// Frontier query used by the service and tests.
pub fn frontier(
    records: &[EvaluationRecord],
    metric: crate::metrics::MetricId,
    grouping: crate::pareto::Grouping,
    mode: DominanceMode,
) -> Vec<ParetoSet> {
    crate::pareto::extract_frontier(
        records,
        crate::pareto::ObjectivePair::accuracy_vs(metric),
        mode,
        grouping,
    )
}
