//! Uploaded datasets and exploration jobs, persisted as JSON documents in
//! one directory per id under the data root.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex, OnceLock, RwLock};
use std::thread;

use fairfront_core::config::ExplorationConfig;
use fairfront_core::data::{load_csv, ColumnKind, DataError, Dataset, PreprocessConfig, TaskEncoding};
use fairfront_core::grid::{EvaluationRecord, Progress};
use fairfront_core::pipeline::{parse_records, prepare_dataset, records_json, run_exploration, total_tasks};
use serde::{Deserialize, Serialize};

/// Cleaning and task settings sent with an upload.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UploadSettings {
    pub preprocess: PreprocessConfig,
    pub task: TaskEncoding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub name: String,
    pub kind: ColumnKind,
    pub missing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub id: String,
    pub source: String,
    pub n_rows: usize,
    pub n_features: usize,
    /// Raw columns as parsed, before cleaning and encoding.
    pub columns: Vec<ColumnSummary>,
    pub feature_names: Vec<String>,
    /// Rows with `Y = 0` and `Y = 1`.
    pub class_counts: [usize; 2],
    /// Rows with `S = 0` and `S = 1`.
    pub group_counts: [usize; 2],
    pub preprocess: PreprocessConfig,
    pub task: TaskEncoding,
}

pub struct StoredDataset {
    pub summary: DatasetSummary,
    pub raw: Arc<Vec<u8>>,
    pub dataset: Arc<Dataset>,
}

impl StoredDataset {
    fn build(id: String, source: &str, raw: Vec<u8>, settings: &UploadSettings) -> Result<StoredDataset, DataError> {
        let dataset = prepare_dataset(&raw, source, &settings.preprocess, &settings.task)?;
        let table = load_csv(raw.as_slice(), source, &settings.preprocess.missing_codes)?;
        let columns = table
            .columns
            .iter()
            .map(|c| ColumnSummary {
                name: c.name.clone(),
                kind: c.kind(),
                missing: (0..c.data.len()).filter(|&r| c.data.is_missing(r)).count(),
            })
            .collect();
        let summary = DatasetSummary {
            id,
            source: source.to_owned(),
            n_rows: dataset.n_rows(),
            n_features: dataset.n_features(),
            columns,
            feature_names: dataset.feature_names.clone(),
            class_counts: dataset.class_counts(),
            group_counts: dataset.group_counts(),
            preprocess: settings.preprocess.clone(),
            task: settings.task.clone(),
        };
        Ok(StoredDataset {
            summary,
            raw: Arc::new(raw),
            dataset: Arc::new(dataset),
        })
    }

    /// The encoded data for a job: the upload's own encoding unless the
    /// document overrides cleaning or task settings.
    pub fn for_config(&self, pre: &PreprocessConfig, task: &TaskEncoding) -> Result<Arc<Dataset>, DataError> {
        if *pre == self.summary.preprocess && *task == self.summary.task {
            Ok(Arc::clone(&self.dataset))
        } else {
            prepare_dataset(&self.raw, &self.summary.source, pre, task).map(Arc::new)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Pending,
    Running,
    Finished,
    Failed,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Finished | JobState::Failed)
    }
}

/// What `status.json` holds.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct StatusFile {
    seq: u64,
    state: JobState,
    completed: u64,
    total: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct JobStatus {
    pub state: JobState,
    pub error: Option<String>,
}

pub struct Results {
    pub records: Vec<EvaluationRecord>,
    /// The persisted `records.json` bytes, served as is.
    pub records_json: Vec<u8>,
}

pub struct Job {
    pub id: String,
    /// Submission order.
    pub seq: u64,
    /// The effective document: upload settings filled in, service
    /// overrides applied.
    pub config: ExplorationConfig,
    pub progress: Progress,
    status: Mutex<JobStatus>,
    results: OnceLock<Results>,
    dir: PathBuf,
}

impl Job {
    pub fn status(&self) -> JobStatus {
        self.status.lock().expect("status lock").clone()
    }

    pub fn results(&self) -> Option<&Results> {
        self.results.get()
    }

    /// Applies a transition; only pending to running to a terminal state
    /// is allowed.
    fn transition(&self, state: JobState, error: Option<String>) {
        let mut st = self.status.lock().expect("status lock");
        let allowed = matches!(
            (st.state, state),
            (JobState::Pending, JobState::Running)
                | (JobState::Pending, JobState::Failed)
                | (JobState::Running, JobState::Finished)
                | (JobState::Running, JobState::Failed)
        );
        if !allowed {
            return;
        }
        st.state = state;
        st.error = error;
        let file = StatusFile {
            seq: self.seq,
            state,
            completed: self.progress.completed(),
            total: self.progress.total(),
            error: st.error.clone(),
        };
        if let Err(e) = write_json(&self.dir.join("status.json"), &file) {
            tracing::warn!(job = %self.id, "cannot persist status: {e}");
        }
    }

    fn run(&self, dataset: &Dataset) {
        self.transition(JobState::Running, None);
        tracing::info!(job = %self.id, tasks = total_tasks(&self.config), "exploration started");
        let outcome = run_exploration(dataset, &self.config, &self.progress, None)
            .map_err(|e| e.to_string())
            .and_then(|records| {
                let bytes = records_json(&records);
                fs::write(self.dir.join("records.json"), &bytes)
                    .map_err(|e| format!("cannot persist records: {e}"))?;
                Ok(Results {
                    records,
                    records_json: bytes,
                })
            });
        match outcome {
            Ok(results) => {
                let _ = self.results.set(results);
                self.transition(JobState::Finished, None);
                tracing::info!(job = %self.id, "exploration finished");
            }
            Err(e) => {
                tracing::warn!(job = %self.id, "exploration failed: {e}");
                self.transition(JobState::Failed, Some(e));
            }
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(io::Error::other)?;
    bytes.push(b'\n');
    fs::write(path, bytes)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> io::Result<T> {
    serde_json::from_slice(&fs::read(path)?).map_err(io::Error::other)
}

type Queued = (Arc<Job>, Arc<Dataset>);

pub struct Store {
    root: PathBuf,
    datasets: RwLock<HashMap<String, Arc<StoredDataset>>>,
    jobs: RwLock<HashMap<String, Arc<Job>>>,
    next_seq: AtomicU64,
    queue: Mutex<Sender<Queued>>,
}

impl Store {
    /// Loads everything persisted under `root` and starts `slots` runner
    /// threads. Jobs that were pending or running when the previous
    /// process stopped are marked failed.
    pub fn open(root: &Path, slots: usize) -> io::Result<Store> {
        fs::create_dir_all(root.join("datasets"))?;
        fs::create_dir_all(root.join("jobs"))?;
        let (tx, rx) = channel::<Queued>();
        let rx = Arc::new(Mutex::new(rx));
        for i in 0..slots.max(1) {
            let rx = Arc::clone(&rx);
            thread::Builder::new()
                .name(format!("fairfront-job-{i}"))
                .spawn(move || runner(&rx))?;
        }
        let store = Store {
            root: root.to_owned(),
            datasets: RwLock::new(HashMap::new()),
            jobs: RwLock::new(HashMap::new()),
            next_seq: AtomicU64::new(0),
            queue: Mutex::new(tx),
        };
        store.load_datasets()?;
        store.load_jobs()?;
        Ok(store)
    }

    fn load_datasets(&self) -> io::Result<()> {
        let mut map = self.datasets.write().expect("datasets lock");
        for entry in fs::read_dir(self.root.join("datasets"))? {
            let dir = entry?.path();
            let id = dir.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_owned();
            let loaded = fs::read(dir.join("data.csv")).and_then(|raw| {
                let meta: DatasetSummary = read_json(&dir.join("summary.json"))?;
                let settings = UploadSettings {
                    preprocess: meta.preprocess,
                    task: meta.task,
                };
                StoredDataset::build(id.clone(), &meta.source, raw, &settings).map_err(io::Error::other)
            });
            match loaded {
                Ok(d) => {
                    map.insert(id, Arc::new(d));
                }
                Err(e) => tracing::warn!("skipping dataset {}: {e}", dir.display()),
            }
        }
        Ok(())
    }

    fn load_jobs(&self) -> io::Result<()> {
        let mut map = self.jobs.write().expect("jobs lock");
        for entry in fs::read_dir(self.root.join("jobs"))? {
            let dir = entry?.path();
            let id = dir.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_owned();
            let loaded = (|| -> io::Result<Job> {
                let config: ExplorationConfig = read_json(&dir.join("config.json"))?;
                let st: StatusFile = read_json(&dir.join("status.json"))?;
                let job = Job {
                    id: id.clone(),
                    seq: st.seq,
                    config,
                    progress: Progress::with_counts(st.completed, st.total),
                    status: Mutex::new(JobStatus {
                        state: st.state,
                        error: st.error,
                    }),
                    results: OnceLock::new(),
                    dir: dir.clone(),
                };
                match st.state {
                    JobState::Finished => {
                        let bytes = fs::read(dir.join("records.json"))?;
                        let records = parse_records(&bytes).map_err(io::Error::other)?;
                        let _ = job.results.set(Results {
                            records,
                            records_json: bytes,
                        });
                    }
                    JobState::Failed => {}
                    JobState::Pending | JobState::Running => {
                        job.transition(JobState::Failed, Some("interrupted by a service restart".into()));
                    }
                }
                Ok(job)
            })();
            match loaded {
                Ok(job) => {
                    self.next_seq.fetch_max(job.seq + 1, Ordering::SeqCst);
                    map.insert(id, Arc::new(job));
                }
                Err(e) => tracing::warn!("skipping job {}: {e}", dir.display()),
            }
        }
        Ok(())
    }

    pub fn add_dataset(&self, source: &str, raw: Vec<u8>, settings: &UploadSettings) -> Result<Arc<StoredDataset>, AddError> {
        let id = uuid::Uuid::new_v4().to_string();
        let d = StoredDataset::build(id.clone(), source, raw, settings).map_err(AddError::Data)?;
        let dir = self.root.join("datasets").join(&id);
        fs::create_dir_all(&dir)
            .and_then(|()| fs::write(dir.join("data.csv"), d.raw.as_slice()))
            .and_then(|()| write_json(&dir.join("summary.json"), &d.summary))
            .map_err(AddError::Io)?;
        let d = Arc::new(d);
        self.datasets.write().expect("datasets lock").insert(id, Arc::clone(&d));
        Ok(d)
    }

    pub fn dataset(&self, id: &str) -> Option<Arc<StoredDataset>> {
        self.datasets.read().expect("datasets lock").get(id).cloned()
    }

    pub fn datasets(&self) -> Vec<DatasetSummary> {
        let mut v: Vec<DatasetSummary> = self
            .datasets
            .read()
            .expect("datasets lock")
            .values()
            .map(|d| d.summary.clone())
            .collect();
        v.sort_by(|a, b| a.id.cmp(&b.id));
        v
    }

    /// Persists and queues a validated job.
    pub fn submit(&self, config: ExplorationConfig, request: &[u8], dataset: Arc<Dataset>) -> io::Result<Arc<Job>> {
        let id = uuid::Uuid::new_v4().to_string();
        let dir = self.root.join("jobs").join(&id);
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("request.json"), request)?;
        write_json(&dir.join("config.json"), &config)?;
        let seq = self.next_seq.fetch_add(1, Ordering::SeqCst);
        let job = Arc::new(Job {
            id: id.clone(),
            seq,
            progress: Progress::new(total_tasks(&config)),
            config,
            status: Mutex::new(JobStatus {
                state: JobState::Pending,
                error: None,
            }),
            results: OnceLock::new(),
            dir: dir.clone(),
        });
        write_json(
            &dir.join("status.json"),
            &StatusFile {
                seq,
                state: JobState::Pending,
                completed: 0,
                total: job.progress.total(),
                error: None,
            },
        )?;
        self.jobs.write().expect("jobs lock").insert(id, Arc::clone(&job));
        self.queue
            .lock()
            .expect("queue lock")
            .send((Arc::clone(&job), dataset))
            .map_err(|_| io::Error::other("job runner stopped"))?;
        Ok(job)
    }

    pub fn job(&self, id: &str) -> Option<Arc<Job>> {
        self.jobs.read().expect("jobs lock").get(id).cloned()
    }

    /// Every job in submission order.
    pub fn jobs(&self) -> Vec<Arc<Job>> {
        let mut v: Vec<Arc<Job>> = self.jobs.read().expect("jobs lock").values().cloned().collect();
        v.sort_by_key(|j| j.seq);
        v
    }
}

#[derive(Debug)]
pub enum AddError {
    Data(DataError),
    Io(io::Error),
}

fn runner(rx: &Mutex<Receiver<Queued>>) {
    loop {
        // The lock is held only while waiting, so jobs are taken in FIFO
        // order by whichever slot is free.
        let next = rx.lock().expect("queue lock").recv();
        match next {
            Ok((job, dataset)) => job.run(&dataset),
            Err(_) => return,
        }
    }
}
