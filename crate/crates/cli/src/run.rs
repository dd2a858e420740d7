//! The `run` subcommand. Exit codes: 0 success, 1 invalid input, 2
//! runtime failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;
use std::time::Duration;

use clap::Args;
use fairfront_core::config::ExplorationConfig;
use fairfront_core::grid::Progress;
use fairfront_core::pipeline::{prepare_dataset, render_outputs, run_exploration, total_tasks, write_outputs};
use fairfront_core::{DominanceMode, MetricId, ModelFamily};
use indicatif::{ProgressBar, ProgressStyle};

#[derive(Args)]
pub struct RunArgs {
    /// Exploration document (the JSON schema the service accepts).
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV file; overrides `dataset.path`.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    target: Option<String>,
    /// Raw target values meaning Y = 1.
    #[arg(long, value_delimiter = ',')]
    positive: Option<Vec<String>>,
    #[arg(long)]
    sensitive: Option<String>,
    /// Raw sensitive values meaning S = 0.
    #[arg(long, value_delimiter = ',')]
    group0: Option<Vec<String>>,
    /// Families, e.g. `dt,rf,lr,svc`.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<ModelFamily>>,
    #[arg(long, value_delimiter = ',')]
    metrics: Option<Vec<MetricId>>,
    /// Number of repeated holdout splits.
    #[arg(long)]
    splits: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mode: Option<DominanceMode>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value = "fairfront-out")]
    out: PathBuf,
    /// Write `report.md` (the default).
    #[arg(long, overrides_with = "no_report")]
    report: bool,
    #[arg(long, overrides_with = "report")]
    no_report: bool,
    /// No progress bar.
    #[arg(long, short)]
    quiet: bool,
}

fn invalid(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(1)
}

fn failed(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

/// The document with flags applied. A relative `dataset.path` from a
/// config file is resolved against the file's directory.
fn effective_config(args: &RunArgs) -> Result<ExplorationConfig, String> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            let mut cfg = ExplorationConfig::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))?;
            if let (Some(p), Some(dir)) = (&cfg.dataset.path, path.parent()) {
                if Path::new(p).is_relative() && !dir.as_os_str().is_empty() {
                    cfg.dataset.path = Some(dir.join(p).to_string_lossy().into_owned());
                }
            }
            cfg
        }
        None => ExplorationConfig::default(),
    };
    if let Some(d) = &args.data {
        cfg.dataset.path = Some(d.to_string_lossy().into_owned());
        cfg.dataset.id = None;
    }
    if args.target.is_some() || args.positive.is_some() || args.sensitive.is_some() || args.group0.is_some() {
        let mut task = cfg.task_or_default();
        if let Some(v) = &args.target {
            task.target.clone_from(v);
        }
        if let Some(v) = &args.positive {
            task.positive.clone_from(v);
        }
        if let Some(v) = &args.sensitive {
            task.sensitive.clone_from(v);
        }
        if let Some(v) = &args.group0 {
            task.group0.clone_from(v);
        }
        cfg.task = Some(task);
    }
    if let Some(v) = &args.models {
        cfg.families.clone_from(v);
        cfg.spaces.retain(|f, _| v.contains(f));
    }
    if let Some(v) = &args.metrics {
        cfg.metrics.clone_from(v);
    }
    if let Some(v) = args.splits {
        cfg.splits.n_splits = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.mode {
        cfg.mode = v;
    }
    if let Some(v) = args.workers {
        cfg.workers = v;
    }
    cfg.preprocess.get_or_insert_with(Default::default);
    cfg.task.get_or_insert_with(Default::default);
    Ok(cfg)
}

pub fn run(args: RunArgs) -> ExitCode {
    let cfg = match effective_config(&args) {
        Ok(c) => c,
        Err(e) => return invalid(e),
    };
    if let Err(violations) = cfg.validate() {
        for v in &violations {
            eprintln!("error: {v}");
        }
        return ExitCode::from(1);
    }
    let Some(path) = cfg.dataset.path.clone() else {
        return invalid("no data file: pass --data or set dataset.path");
    };
    let csv = match fs::read(&path) {
        Ok(b) => b,
        Err(e) => return failed(format!("{path}: {e}")),
    };
    let dataset = match prepare_dataset(&csv, &path, &cfg.preprocess_or_default(), &cfg.task_or_default()) {
        Ok(d) => d,
        Err(e) => return invalid(e),
    };

    let progress = Progress::new(total_tasks(&cfg));
    let bar = if args.quiet {
        ProgressBar::hidden()
    } else {
        ProgressBar::new(progress.total())
    };
    bar.set_style(
        ProgressStyle::with_template("{bar:40} {pos}/{len} tasks  {elapsed_precise} eta {eta}")
            .expect("valid template"),
    );
    let outcome = thread::scope(|s| {
        let worker = s.spawn(|| run_exploration(&dataset, &cfg, &progress, None));
        while !worker.is_finished() {
            bar.set_position(progress.completed());
            thread::sleep(Duration::from_millis(100));
        }
        worker.join().expect("exploration thread panicked")
    });
    bar.set_position(progress.completed());
    bar.finish_and_clear();
    let records = match outcome {
        Ok(r) => r,
        Err(e) if e.is_validation() => return invalid(e),
        Err(e) => return failed(e),
    };

    let config_text = cfg.to_json_pretty();
    let files = match render_outputs(&records, &cfg, &config_text, !args.no_report) {
        Ok(f) => f,
        Err(e) => return failed(e),
    };
    if let Err(e) = write_outputs(&args.out, &files, records.len()) {
        return failed(e);
    }
    let unusable = records.iter().filter(|r| !r.usable).count();
    println!(
        "{} configurations, {} unusable; wrote {} files to {}",
        records.len(),
        unusable,
        files.len() + 1,
        args.out.display()
    );
    ExitCode::SUCCESS
}
