//! HTTP service: dataset upload, exploration jobs with progress polling,
//! and frontier, report and table retrieval. Jobs run on background
//! threads; every result endpoint is a pure function of the persisted
//! records and the query.

pub mod settings;
pub mod store;

use std::io;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::multipart::{Multipart, MultipartRejection};
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use fairfront_core::config::{ConfigViolation, ExplorationConfig};
use fairfront_core::data::DataError;
use fairfront_core::grid::{default_space, HyperparamSpace};
use fairfront_core::metrics::MetricId;
use fairfront_core::models::ModelFamily;
use fairfront_core::pareto::{family_frontier, DominanceMode, Grouping, ObjectivePair};
use fairfront_core::pipeline::{frontier, render_report, total_tasks};
use fairfront_core::report::{frontier_file_stem, pareto_table};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

pub use settings::{ServiceSettings, SettingsError};
pub use store::{JobState, Store, UploadSettings};
use store::{AddError, Job, Results};

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub settings: Arc<ServiceSettings>,
}

impl AppState {
    pub fn open(settings: ServiceSettings) -> io::Result<AppState> {
        let store = Store::open(&settings.data_root, settings.job_slots)?;
        Ok(AppState {
            store: Arc::new(store),
            settings: Arc::new(settings),
        })
    }
}

/// A JSON error body `{"error": ...}` plus optional extra fields.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> ApiError {
        ApiError {
            status,
            body: json!({ "error": message.into() }),
        }
    }

    fn bad_request(message: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::BAD_REQUEST, message)
    }

    fn not_found(what: &str, id: &str) -> ApiError {
        ApiError::new(StatusCode::NOT_FOUND, format!("unknown {what} '{id}'"))
    }

    fn violations(v: Vec<ConfigViolation>) -> ApiError {
        let message = v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ");
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            body: json!({ "error": message, "violations": v }),
        }
    }

    fn internal(e: impl std::fmt::Display) -> ApiError {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, axum::Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn json_bytes(status: StatusCode, bytes: Vec<u8>) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], bytes).into_response()
}

fn to_json<T: Serialize>(status: StatusCode, value: &T) -> Response {
    json_bytes(status, serde_json::to_vec(value).expect("serializable"))
}

pub fn router(state: AppState) -> Router {
    let upload_limit = state.settings.max_upload_bytes;
    let api = Router::new()
        .route(
            "/datasets",
            post(upload_dataset)
                .get(list_datasets)
                .layer(DefaultBodyLimit::max(upload_limit)),
        )
        .route("/datasets/{id}", get(get_dataset))
        .route("/defaults", get(defaults))
        .route("/explorations", post(create_exploration).get(list_explorations))
        .route("/explorations/{id}", get(get_exploration))
        .route("/explorations/{id}/progress", get(get_progress))
        .route("/explorations/{id}/records", get(get_records))
        .route("/explorations/{id}/frontier", get(get_frontier))
        .route("/explorations/{id}/report", get(get_report))
        .route("/explorations/{id}/export/{fmt}", get(get_export));
    let api = match &state.settings.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir).append_index_html_on_directories(true)),
        None => api.route("/", get(placeholder_page)),
    };
    api.with_state(state)
}

/// Binds `settings.listen` and serves until the process stops.
pub async fn serve(settings: ServiceSettings) -> io::Result<()> {
    let listen = settings.listen;
    let state = AppState::open(settings)?;
    let listener = tokio::net::TcpListener::bind(listen).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

async fn placeholder_page() -> Html<&'static str> {
    Html(include_str!("placeholder.html"))
}

async fn upload_dataset(
    State(st): State<AppState>,
    multipart: Result<Multipart, MultipartRejection>,
) -> ApiResult<Response> {
    let mut multipart = multipart.map_err(|e| ApiError::new(e.status(), e.body_text()))?;
    let mut file: Option<(String, Vec<u8>)> = None;
    let mut settings = UploadSettings::default();
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| ApiError::new(e.status(), e.body_text()))?
    {
        let name = field.name().unwrap_or_default().to_owned();
        let filename = field.file_name().unwrap_or("upload.csv").to_owned();
        let bytes = field
            .bytes()
            .await
            .map_err(|e| ApiError::new(e.status(), e.body_text()))?;
        match name.as_str() {
            "file" => file = Some((filename, bytes.to_vec())),
            "config" => {
                settings = serde_json::from_slice(&bytes)
                    .map_err(|e| ApiError::bad_request(format!("config: {e}")))?;
            }
            other => return Err(ApiError::bad_request(format!("unexpected multipart field '{other}'"))),
        }
    }
    let (source, raw) = file.ok_or_else(|| ApiError::bad_request("missing multipart field 'file'"))?;
    let store = Arc::clone(&st.store);
    let added = tokio::task::spawn_blocking(move || store.add_dataset(&source, raw, &settings))
        .await
        .map_err(ApiError::internal)?;
    match added {
        Ok(d) => Ok(to_json(StatusCode::CREATED, &d.summary)),
        Err(AddError::Data(e)) => Err(ApiError::bad_request(e.to_string())),
        Err(AddError::Io(e)) => Err(ApiError::internal(e)),
    }
}

async fn list_datasets(State(st): State<AppState>) -> Response {
    to_json(StatusCode::OK, &st.store.datasets())
}

async fn get_dataset(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let d = st.store.dataset(&id).ok_or_else(|| ApiError::not_found("dataset", &id))?;
    Ok(to_json(StatusCode::OK, &d.summary))
}

#[derive(Serialize)]
struct Defaults {
    families: Vec<ModelFamily>,
    metrics: Vec<MetricId>,
    all_metrics: Vec<MetricId>,
    spaces: Vec<HyperparamSpace>,
    config: ExplorationConfig,
}

/// Default document and every family's default ranges, for building forms.
async fn defaults() -> Response {
    let config = ExplorationConfig::default();
    to_json(
        StatusCode::OK,
        &Defaults {
            families: config.families.clone(),
            metrics: config.metrics.clone(),
            all_metrics: MetricId::ALL.to_vec(),
            spaces: ModelFamily::ALL.iter().map(|&f| default_space(f)).collect(),
            config,
        },
    )
}

fn violation(field: &str, message: impl Into<String>) -> ConfigViolation {
    ConfigViolation {
        field: field.to_owned(),
        family: None,
        hyperparameter: None,
        value: None,
        message: message.into(),
    }
}

fn data_violation(e: &DataError) -> ConfigViolation {
    let field = match e {
        DataError::InvalidConfig(_) => "preprocess",
        _ => "task",
    };
    violation(field, e.to_string())
}

async fn create_exploration(State(st): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let text = std::str::from_utf8(&body).map_err(|_| ApiError::bad_request("body is not UTF-8"))?;
    let mut cfg = match ExplorationConfig::from_json(text) {
        Ok(c) => c,
        Err(e) if e.is_data() => return Err(ApiError::violations(vec![violation("", e.to_string())])),
        Err(e) => return Err(ApiError::bad_request(format!("malformed JSON: {e}"))),
    };
    if cfg.dataset.path.is_some() {
        return Err(ApiError::violations(vec![violation(
            "dataset.path",
            "the service reads uploaded datasets only; pass dataset.id",
        )]));
    }
    let id = cfg
        .dataset
        .id
        .clone()
        .ok_or_else(|| ApiError::violations(vec![violation("dataset.id", "dataset.id is required")]))?;
    let stored = st.store.dataset(&id).ok_or_else(|| ApiError::not_found("dataset", &id))?;
    cfg.workers = st.settings.workers;
    cfg.grid_cap = cfg.grid_cap.min(st.settings.grid_cap);
    cfg.preprocess.get_or_insert_with(|| stored.summary.preprocess.clone());
    cfg.task.get_or_insert_with(|| stored.summary.task.clone());
    cfg.validate().map_err(ApiError::violations)?;

    let store = Arc::clone(&st.store);
    let request = body.to_vec();
    let job = tokio::task::spawn_blocking(move || -> ApiResult<Arc<Job>> {
        let dataset = stored
            .for_config(&cfg.preprocess_or_default(), &cfg.task_or_default())
            .map_err(|e| ApiError::violations(vec![data_violation(&e)]))?;
        store.submit(cfg, &request, dataset).map_err(ApiError::internal)
    })
    .await
    .map_err(ApiError::internal)??;
    let mut res = to_json(
        StatusCode::ACCEPTED,
        &json!({ "id": job.id, "state": JobState::Pending, "total": total_tasks(&job.config) }),
    );
    if let Ok(v) = HeaderValue::from_str(&format!("/explorations/{}", job.id)) {
        res.headers_mut().insert(header::LOCATION, v);
    }
    Ok(res)
}

#[derive(Serialize)]
struct ProgressView {
    id: String,
    state: JobState,
    fraction: f64,
    completed: u64,
    total: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn progress_view(job: &Job) -> ProgressView {
    let status = job.status();
    let completed = job.progress.completed();
    let total = job.progress.total();
    let fraction = if status.state == JobState::Finished {
        1.0
    } else {
        job.progress.fraction()
    };
    ProgressView {
        id: job.id.clone(),
        state: status.state,
        fraction,
        completed,
        total,
        error: status.error,
    }
}

fn find_job(st: &AppState, id: &str) -> ApiResult<Arc<Job>> {
    st.store.job(id).ok_or_else(|| ApiError::not_found("exploration", id))
}

async fn get_progress(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(to_json(StatusCode::OK, &progress_view(&*find_job(&st, &id)?)))
}

async fn list_explorations(State(st): State<AppState>) -> Response {
    let v: Vec<ProgressView> = st.store.jobs().iter().map(|j| progress_view(j)).collect();
    to_json(StatusCode::OK, &v)
}

async fn get_exploration(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let job = find_job(&st, &id)?;
    Ok(to_json(
        StatusCode::OK,
        &json!({ "progress": progress_view(&job), "config": job.config }),
    ))
}

fn finished(job: &Job) -> ApiResult<&Results> {
    job.results().ok_or_else(|| {
        let status = job.status();
        let mut e = ApiError::new(
            StatusCode::CONFLICT,
            match &status.error {
                Some(err) => format!("exploration failed: {err}"),
                None => "exploration has not finished".to_owned(),
            },
        );
        e.body["state"] = json!(status.state);
        e
    })
}

async fn get_records(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let job = find_job(&st, &id)?;
    Ok(json_bytes(StatusCode::OK, finished(&job)?.records_json.clone()))
}

#[derive(Deserialize)]
struct FrontierQuery {
    metric: Option<String>,
    grouping: Option<String>,
    mode: Option<String>,
    family: Option<String>,
}

fn parse_query<T: std::str::FromStr>(name: &str, v: Option<&str>) -> ApiResult<Option<T>>
where
    T::Err: std::fmt::Display,
{
    v.map(|s| s.parse::<T>().map_err(|e| ApiError::bad_request(format!("{name}: {e}"))))
        .transpose()
}

fn query_metric(job: &Job, q: &FrontierQuery) -> ApiResult<MetricId> {
    let metric: MetricId = parse_query("metric", q.metric.as_deref())?
        .ok_or_else(|| ApiError::bad_request("metric: required"))?;
    if !job.config.metrics.contains(&metric) {
        return Err(ApiError::bad_request(format!(
            "metric: {metric} was not evaluated in this exploration"
        )));
    }
    Ok(metric)
}

fn query_mode(job: &Job, q: &FrontierQuery) -> ApiResult<DominanceMode> {
    Ok(parse_query("mode", q.mode.as_deref())?.unwrap_or(job.config.mode))
}

/// `per_family` answers an array of frontiers, one per family with
/// records; `all_families` answers a single frontier.
async fn get_frontier(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<FrontierQuery>,
) -> ApiResult<Response> {
    let job = find_job(&st, &id)?;
    let results = finished(&job)?;
    let metric = query_metric(&job, &q)?;
    let mode = query_mode(&job, &q)?;
    let grouping: Grouping = parse_query("grouping", q.grouping.as_deref())?.unwrap_or_default();
    let sets = frontier(&results.records, metric, grouping, mode);
    Ok(match grouping {
        Grouping::PerFamily => to_json(StatusCode::OK, &sets),
        Grouping::AllFamilies => to_json(StatusCode::OK, &sets[0]),
    })
}

async fn get_report(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let job = find_job(&st, &id)?;
    let results = finished(&job)?;
    let md = render_report(&results.records, &job.config, &job.config.to_json_pretty())
        .map_err(ApiError::internal)?;
    Ok(([(header::CONTENT_TYPE, "text/markdown; charset=utf-8")], md).into_response())
}

/// One frontier table: a family's when `family` is given, else the
/// combined one across families.
async fn get_export(
    State(st): State<AppState>,
    Path((id, fmt)): Path<(String, String)>,
    Query(q): Query<FrontierQuery>,
) -> ApiResult<Response> {
    let job = find_job(&st, &id)?;
    let results = finished(&job)?;
    if fmt != "csv" && fmt != "json" {
        return Err(ApiError::bad_request(format!("format: expected csv or json, got '{fmt}'")));
    }
    let metric = query_metric(&job, &q)?;
    let mode = query_mode(&job, &q)?;
    let family: Option<ModelFamily> = parse_query("family", q.family.as_deref())?;
    let set = match family {
        Some(f) if !job.config.families.contains(&f) => {
            return Err(ApiError::bad_request(format!("family: {f} was not explored")));
        }
        Some(f) => family_frontier(&results.records, f, ObjectivePair::accuracy_vs(metric), mode),
        None => frontier(&results.records, metric, Grouping::AllFamilies, mode).remove(0),
    };
    let table = pareto_table(&set, &job.config.metrics);
    let (bytes, content_type) = if fmt == "csv" {
        (table.to_csv(), "text/csv; charset=utf-8")
    } else {
        (table.to_json(), "application/json")
    };
    let disposition = format!("attachment; filename=\"{}.{fmt}\"", frontier_file_stem(family, metric));
    Response::builder()
        .header(header::CONTENT_TYPE, content_type)
        .header(header::CONTENT_DISPOSITION, disposition)
        .body(Body::from(bytes))
        .map_err(ApiError::internal)
}
