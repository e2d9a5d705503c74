//! HTTP editing service.
//!
//! Tensors travel as tensor-file bodies (`application/octet-stream`); every
//! other body is a `key = value` text record. Scenes are the `.bin` scans of
//! the data directory, addressed by file stem, and are only ever read.
//!
//! | method | path | body | response |
//! |---|---|---|---|
//! | GET | `/scenes` | | `count`, one `scene` per scan |
//! | GET | `/scenes/{id}/bev` | | BEV occupancy tensor |
//! | POST | `/mask/preview` | `scene`, `box` | mask tensor, `x-mask-pixels` header |
//! | POST | `/jobs` | `scene`, `seed`, `box` per edit | `id`, `status` |
//! | GET | `/jobs/{id}` | | job record |
//! | GET | `/jobs/{id}/image`, `/bev`, `/mask` | | result tensors |
//! | DELETE | `/jobs/{id}` | | 204 |

pub mod jobs;

use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use tokio::sync::mpsc;

use rangeforge::dataset::read_velodyne_bin;
use rangeforge::edit::{bev_occupancy, BevConfig, Generator};
use rangeforge::kv::KeyValues;
use rangeforge::tensor_file::Tensor;
use rangeforge::{project, OrientedBox, RangeImage};

use jobs::{spawn_worker, DeleteError, JobStatus, JobStore, SceneLoader};

pub const MASK_PIXELS_HEADER: &str = "x-mask-pixels";

#[derive(Clone)]
pub struct AppState {
    generator: Arc<Generator>,
    scenes: Arc<SceneDir>,
    jobs: Arc<JobStore>,
    queue: mpsc::Sender<String>,
}

impl AppState {
    /// Starts the job worker; must be called inside a tokio runtime.
    pub fn new(generator: Generator, data: PathBuf, queue_depth: usize) -> Self {
        let generator = Arc::new(generator);
        let scenes = Arc::new(SceneDir { root: data });
        let jobs = Arc::new(JobStore::default());
        let loader: SceneLoader = {
            let scenes = scenes.clone();
            let generator = generator.clone();
            Arc::new(move |id: &str| scenes.image(id, &generator).map_err(|e| e.message))
        };
        let queue = spawn_worker(jobs.clone(), generator.clone(), loader, queue_depth);
        AppState {
            generator,
            scenes,
            jobs,
            queue,
        }
    }

    pub fn jobs(&self) -> &JobStore {
        &self.jobs
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/scenes", get(list_scenes))
        .route("/scenes/{id}/bev", get(scene_bev))
        .route("/mask/preview", post(mask_preview))
        .route("/jobs", post(submit_job))
        .route("/jobs/{id}", get(job_status).delete(delete_job))
        .route("/jobs/{id}/image", get(job_image))
        .route("/jobs/{id}/bev", get(job_bev))
        .route("/jobs/{id}/mask", get(job_mask))
        .with_state(state)
}

/// Error response with a one-record text body.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("unknown {what} {id:?}"))
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut kv = KeyValues::new();
        kv.push("status", self.status.as_u16())
            .push("error", self.message.replace('\n', " "));
        (self.status, text(kv)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn text(kv: KeyValues) -> ([(header::HeaderName, &'static str); 1], String) {
    ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], kv.to_string())
}

fn tensor_body(t: &Tensor) -> Response {
    ([(header::CONTENT_TYPE, "application/octet-stream")], t.to_bytes()).into_response()
}

struct SceneDir {
    root: PathBuf,
}

impl SceneDir {
    fn valid_id(id: &str) -> bool {
        !id.is_empty()
            && !id.starts_with('.')
            && id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
    }

    fn list(&self) -> ApiResult<Vec<String>> {
        let entries = fs::read_dir(&self.root).map_err(|e| {
            ApiError::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                format!("{}: {e}", self.root.display()),
            )
        })?;
        let mut ids: Vec<String> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "bin"))
            .filter_map(|p| p.file_stem().and_then(|s| s.to_str()).map(str::to_owned))
            .filter(|id| Self::valid_id(id))
            .collect();
        ids.sort();
        Ok(ids)
    }

    fn path(&self, id: &str) -> ApiResult<PathBuf> {
        let path = self.root.join(format!("{id}.bin"));
        if !Self::valid_id(id) || !path.is_file() {
            return Err(ApiError::not_found("scene", id));
        }
        Ok(path)
    }

    fn image(&self, id: &str, generator: &Generator) -> ApiResult<RangeImage> {
        let scan = read_velodyne_bin(self.path(id)?)
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
        Ok(project(&scan.cloud, &generator.projection).image)
    }
}

fn parse_body(body: &str) -> ApiResult<KeyValues> {
    KeyValues::parse(body).map_err(|e| ApiError::invalid(e.to_string()))
}

fn required<'a>(kv: &'a KeyValues, key: &str) -> ApiResult<&'a str> {
    kv.get(key)
        .ok_or_else(|| ApiError::invalid(format!("missing field {key:?}")))
}

fn parse_box(s: &str) -> ApiResult<OrientedBox> {
    s.parse()
        .map_err(|e: rangeforge::Error| ApiError::invalid(e.to_string()))
}

async fn list_scenes(State(state): State<AppState>) -> ApiResult<impl IntoResponse> {
    let ids = state.scenes.list()?;
    let mut kv = KeyValues::new();
    kv.push("count", ids.len());
    for id in ids {
        kv.push("scene", id);
    }
    Ok(text(kv))
}

async fn scene_bev(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let path = state.scenes.path(&id)?;
    let scan = read_velodyne_bin(path).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    let bev = bev_occupancy(&scan.cloud, &BevConfig::default())
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(tensor_body(&bev))
}

async fn mask_preview(State(state): State<AppState>, body: String) -> ApiResult<Response> {
    let kv = parse_body(&body)?;
    let scene = required(&kv, "scene")?;
    let b = parse_box(required(&kv, "box")?)?;
    state.scenes.path(scene)?;
    let mask = state
        .generator
        .box_mask(&b)
        .map_err(|e| ApiError::invalid(e.to_string()))?;
    let mut resp = tensor_body(&mask.to_tensor());
    resp.headers_mut()
        .insert(MASK_PIXELS_HEADER, HeaderValue::from(mask.count()));
    Ok(resp)
}

async fn submit_job(State(state): State<AppState>, body: String) -> ApiResult<impl IntoResponse> {
    let kv = parse_body(&body)?;
    let scene = required(&kv, "scene")?.to_string();
    let seed: u64 = required(&kv, "seed")?
        .parse()
        .map_err(|e| ApiError::invalid(format!("bad seed: {e}")))?;
    let boxes = kv.all("box").map(parse_box).collect::<ApiResult<Vec<_>>>()?;
    if boxes.is_empty() {
        return Err(ApiError::invalid("a job needs at least one box"));
    }
    state.scenes.path(&scene)?;
    let job = state.jobs.insert(scene, boxes, seed);
    if state.queue.try_send(job.id.clone()).is_err() {
        state.jobs.remove(&job.id);
        return Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "job queue is full"));
    }
    let mut kv = KeyValues::new();
    kv.push("id", &job.id).push("status", job.status.as_str());
    Ok((StatusCode::ACCEPTED, text(kv)))
}

async fn job_status(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let job = state.jobs.get(&id).ok_or_else(|| ApiError::not_found("job", &id))?;
    Ok(text(job.to_kv()))
}

/// Result of a finished job, or 409 while it is still pending.
fn finished(state: &AppState, id: &str) -> ApiResult<Arc<jobs::JobResult>> {
    let job = state.jobs.get(id).ok_or_else(|| ApiError::not_found("job", id))?;
    match (job.status, job.result) {
        (JobStatus::Done, Some(r)) => Ok(r),
        (status, _) => Err(ApiError::new(
            StatusCode::CONFLICT,
            format!("job {id} is {}", status.as_str()),
        )),
    }
}

async fn job_image(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(tensor_body(&finished(&state, &id)?.image.to_tensor()))
}

async fn job_bev(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(tensor_body(&finished(&state, &id)?.bev))
}

async fn job_mask(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(tensor_body(&finished(&state, &id)?.mask.to_tensor()))
}

async fn delete_job(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    match state.jobs.delete(&id) {
        Ok(()) => Ok(StatusCode::NO_CONTENT),
        Err(DeleteError::NotFound) => Err(ApiError::not_found("job", &id)),
        Err(DeleteError::Running) => Err(ApiError::new(StatusCode::CONFLICT, format!("job {id} is running"))),
    }
}
