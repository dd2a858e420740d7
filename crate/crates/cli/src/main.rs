//! `fairfront run` explores a grid headlessly and writes records,
//! frontier tables and a report; `fairfront serve` starts the HTTP service.

mod run;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fairfront_service::ServiceSettings;

#[derive(Parser)]
#[command(name = "fairfront", version, about = "Fairness-aware hyperparameter exploration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an exploration and write its outputs to a directory.
    Run(run::RunArgs),
    /// Start the HTTP service. Flags override `FAIRFRONT_*` variables.
    Serve(ServeArgs),
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    listen: Option<SocketAddr>,
    #[arg(long)]
    data_root: Option<PathBuf>,
    /// Directory with the browser explorer's built assets.
    #[arg(long)]
    static_dir: Option<PathBuf>,
    /// Grid worker threads per job.
    #[arg(long)]
    workers: Option<usize>,
    /// Jobs allowed to run at once.
    #[arg(long)]
    job_slots: Option<usize>,
    #[arg(long)]
    grid_cap: Option<usize>,
}

fn serve(args: ServeArgs) -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let mut s = match ServiceSettings::from_env() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Some(v) = args.listen {
        s.listen = v;
    }
    if let Some(v) = args.data_root {
        s.data_root = v;
    }
    if args.static_dir.is_some() {
        s.static_dir = args.static_dir;
    }
    for (flag, v, slot) in [
        ("--workers", args.workers, &mut s.workers),
        ("--job-slots", args.job_slots, &mut s.job_slots),
        ("--grid-cap", args.grid_cap, &mut s.grid_cap),
    ] {
        match v {
            Some(0) => {
                eprintln!("error: {flag} must be at least 1");
                return ExitCode::from(1);
            }
            Some(v) => *slot = v,
            None => {}
        }
    }
    let rt = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match rt.block_on(fairfront_service::serve(s)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // bad flags and values are input errors, like a bad config file
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match cli.command {
        Command::Run(args) => run::run(args),
        Command::Serve(args) => serve(args),
    }
}
