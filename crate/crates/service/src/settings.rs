//! Service settings, read from `FAIRFRONT_*` environment variables.

use std::env;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::str::FromStr;

use fairfront_core::grid::DEFAULT_GRID_CAP;
use thiserror::Error;

#[derive(Debug, Error)]
#[error("{var}: cannot parse '{value}'")]
pub struct SettingsError {
    pub var: &'static str,
    pub value: String,
}

#[derive(Debug, Clone)]
pub struct ServiceSettings {
    /// Holds `datasets/` and `jobs/`, one directory per id.
    pub data_root: PathBuf,
    pub listen: SocketAddr,
    /// Grid worker threads per job; overrides the document's `workers`.
    pub workers: usize,
    /// Jobs run concurrently; the rest wait in FIFO order.
    pub job_slots: usize,
    /// Upper bound on every job's `grid_cap`.
    pub grid_cap: usize,
    pub max_upload_bytes: usize,
    /// Browser UI assets served at `/`; a placeholder page when unset.
    pub static_dir: Option<PathBuf>,
}

impl ServiceSettings {
    pub fn new(data_root: impl Into<PathBuf>) -> ServiceSettings {
        ServiceSettings {
            data_root: data_root.into(),
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            job_slots: 1,
            grid_cap: DEFAULT_GRID_CAP,
            max_upload_bytes: 64 * 1024 * 1024,
            static_dir: None,
        }
    }

    /// Defaults overridden by `FAIRFRONT_DATA_ROOT`, `FAIRFRONT_LISTEN`,
    /// `FAIRFRONT_WORKERS`, `FAIRFRONT_JOB_SLOTS`, `FAIRFRONT_GRID_CAP`,
    /// `FAIRFRONT_MAX_UPLOAD_BYTES` and `FAIRFRONT_STATIC_DIR`.
    pub fn from_env() -> Result<ServiceSettings, SettingsError> {
        let mut s = ServiceSettings::new(
            env::var_os("FAIRFRONT_DATA_ROOT").map_or_else(|| PathBuf::from("fairfront-data"), PathBuf::from),
        );
        if let Some(v) = parsed("FAIRFRONT_LISTEN")? {
            s.listen = v;
        }
        if let Some(v) = parsed("FAIRFRONT_WORKERS")? {
            s.workers = positive("FAIRFRONT_WORKERS", v)?;
        }
        if let Some(v) = parsed("FAIRFRONT_JOB_SLOTS")? {
            s.job_slots = positive("FAIRFRONT_JOB_SLOTS", v)?;
        }
        if let Some(v) = parsed("FAIRFRONT_GRID_CAP")? {
            s.grid_cap = positive("FAIRFRONT_GRID_CAP", v)?;
        }
        if let Some(v) = parsed("FAIRFRONT_MAX_UPLOAD_BYTES")? {
            s.max_upload_bytes = positive("FAIRFRONT_MAX_UPLOAD_BYTES", v)?;
        }
        s.static_dir = env::var_os("FAIRFRONT_STATIC_DIR").map(PathBuf::from);
        Ok(s)
    }
}

fn parsed<T: FromStr>(var: &'static str) -> Result<Option<T>, SettingsError> {
    match env::var(var) {
        Ok(value) => value
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| SettingsError { var, value }),
        Err(_) => Ok(None),
    }
}

fn positive(var: &'static str, v: usize) -> Result<usize, SettingsError> {
    if v == 0 {
        Err(SettingsError {
            var,
            value: "0".into(),
        })
    } else {
        Ok(v)
    }
}
