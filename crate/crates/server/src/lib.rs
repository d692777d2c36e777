//! HTTP scene service. Each scene is a directory under the configured
//! scenes root; at most one job runs per scene, and every mutation is
//! rejected with 409 while it does.

mod error;
pub mod stub;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use primscene_core::api::{
    FrameInfo, FramesResponse, InsertedSummary, JobView, RunAccepted, SceneStatus, SceneSummary,
};
use primscene_core::backends::Backends;
use primscene_core::config::Config;
use primscene_core::dataset::NerfDataset;
use primscene_core::imaging::encode_png;
use primscene_core::integration::{preview_frame, ObjectSpec, Stage};
use primscene_core::jobs::{run_job, start_job, JobState, JobStatus, SceneDir};
use serde::Deserialize;
use tokio::net::TcpListener;
use tokio::sync::Mutex as AsyncMutex;
use tokio::task::JoinHandle;
use tracing::{error, info};

pub use error::ApiError;

type ApiResult<T> = Result<T, ApiError>;

struct SceneSlot {
    id: String,
    dir: SceneDir,
    /// Held for the whole duration of a job and for each mutation.
    run_lock: Arc<AsyncMutex<()>>,
    status: Mutex<SceneStatus>,
    job: Mutex<Option<JobState>>,
}

impl SceneSlot {
    fn status(&self) -> SceneStatus {
        self.status.lock().expect("status lock").clone()
    }

    fn set_status(&self, status: SceneStatus) {
        *self.status.lock().expect("status lock") = status;
    }

    fn set_job(&self, job: JobState) {
        *self.job.lock().expect("job lock") = Some(job);
    }
}

pub struct AppState {
    config: Config,
    /// Overrides the configured endpoints; used by tests and embedders.
    backends: Option<Backends>,
    slots: Mutex<HashMap<String, Arc<SceneSlot>>>,
}

impl AppState {
    pub fn new(config: Config) -> Arc<Self> {
        Arc::new(AppState {
            config,
            backends: None,
            slots: Mutex::new(HashMap::new()),
        })
    }

    pub fn with_backends(config: Config, backends: Backends) -> Arc<Self> {
        Arc::new(AppState {
            config,
            backends: Some(backends),
            slots: Mutex::new(HashMap::new()),
        })
    }

    fn backends(&self) -> primscene_core::Result<Backends> {
        match &self.backends {
            Some(b) => Ok(b.clone()),
            None => self.config.backends(),
        }
    }

    fn slot(&self, id: &str) -> ApiResult<Arc<SceneSlot>> {
        let valid = !id.is_empty()
            && id != "."
            && id != ".."
            && id.chars().all(|c| c.is_ascii_alphanumeric() || "._-".contains(c));
        if !valid {
            return Err(ApiError::not_found(format!("no scene `{id}`")));
        }
        let mut slots = self.slots.lock().expect("slot map lock");
        if let Some(slot) = slots.get(id) {
            return Ok(slot.clone());
        }
        let dir = SceneDir::open(self.config.scenes_root.join(id))
            .map_err(|_| ApiError::not_found(format!("no scene `{id}`")))?;
        let job = dir.load_job().ok().flatten();
        let status = match job.as_ref().map(|j| &j.status) {
            None => SceneStatus::Idle,
            Some(JobStatus::Done) => SceneStatus::Done,
            Some(JobStatus::Failed { reason }) => SceneStatus::Failed { reason: reason.clone() },
            Some(JobStatus::Running) => SceneStatus::Failed {
                reason: "service stopped while the job was running".into(),
            },
        };
        let slot = Arc::new(SceneSlot {
            id: id.to_string(),
            dir,
            run_lock: Arc::new(AsyncMutex::new(())),
            status: Mutex::new(status),
            job: Mutex::new(job),
        });
        slots.insert(id.to_string(), slot.clone());
        Ok(slot)
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

/// Loads the dataset, retrying across the short window in which a running
/// job swaps dataset directories.
fn load_dataset(dir: &SceneDir) -> ApiResult<NerfDataset> {
    let mut last = None;
    for _ in 0..20 {
        match dir.load_dataset() {
            Ok(ds) => return Ok(ds),
            Err(e) => last = Some(e),
        }
        std::thread::sleep(std::time::Duration::from_millis(5));
    }
    Err(last.expect("at least one attempt").into())
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/scenes", get(list_scenes))
        .route("/scenes/{id}", get(get_scene))
        .route("/scenes/{id}/frames", get(get_frames))
        .route("/scenes/{id}/objects", post(post_object))
        .route("/scenes/{id}/objects/{name}", delete(delete_object))
        .route("/scenes/{id}/run", post(post_run))
        .route("/scenes/{id}/jobs/current", get(get_job))
        .route("/scenes/{id}/preview", get(get_preview))
        .route("/scenes/{id}/report", get(get_report))
        .with_state(state)
}

async fn list_scenes(State(app): State<Arc<AppState>>) -> ApiResult<Json<Vec<String>>> {
    let root = app.config.scenes_root.clone();
    blocking(move || {
        let mut ids: Vec<String> = match std::fs::read_dir(&root) {
            Ok(entries) => entries
                .filter_map(|e| e.ok())
                .filter(|e| SceneDir::open(e.path()).is_ok())
                .filter_map(|e| e.file_name().into_string().ok())
                .collect(),
            Err(_) => Vec::new(),
        };
        ids.sort();
        Ok(Json(ids))
    })
    .await
}

async fn get_scene(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SceneSummary>> {
    let slot = app.slot(&id)?;
    blocking(move || {
        let scene = slot.dir.load_scene()?;
        let frames = load_dataset(&slot.dir)?.len();
        Ok(Json(SceneSummary {
            id: slot.id.clone(),
            status: slot.status(),
            frames,
            base_dataset_size: scene.state.base_dataset_size,
            inserted: scene
                .state
                .inserted
                .iter()
                .map(|o| InsertedSummary {
                    name: o.spec.name.clone(),
                    prompt: o.spec.prompt.clone(),
                    strategy: o.spec.strategy,
                    primitive: o.spec.primitive,
                    centroid: o.centroid,
                    bound_radius: o.bound_radius,
                    vertices: o.mesh.vertices.len(),
                    triangles: o.mesh.triangles.len(),
                })
                .collect(),
            queue: scene.queue,
        }))
    })
    .await
}

async fn get_frames(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<FramesResponse>> {
    let slot = app.slot(&id)?;
    blocking(move || {
        let ds = load_dataset(&slot.dir)?;
        Ok(Json(FramesResponse {
            intrinsics: ds.intrinsics,
            frames: ds
                .frames
                .iter()
                .enumerate()
                .map(|(index, f)| FrameInfo {
                    index,
                    file_path: f.file_path.clone(),
                    transform_matrix: f.transform.to_rows(),
                })
                .collect(),
        }))
    })
    .await
}

async fn post_object(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<ObjectSpec>)> {
    let slot = app.slot(&id)?;
    let spec: ObjectSpec = serde_json::from_slice(&body).map_err(|e| ApiError::invalid(e.to_string()))?;
    let guard = slot
        .run_lock
        .clone()
        .try_lock_owned()
        .map_err(|_| ApiError::conflict("scene is busy; objects cannot be placed while a job runs"))?;
    blocking(move || {
        let _guard = guard;
        slot.dir.enqueue(spec.clone())?;
        Ok((StatusCode::CREATED, Json(spec)))
    })
    .await
}

async fn delete_object(
    State(app): State<Arc<AppState>>,
    Path((id, name)): Path<(String, String)>,
) -> ApiResult<StatusCode> {
    let slot = app.slot(&id)?;
    let guard = slot
        .run_lock
        .clone()
        .try_lock_owned()
        .map_err(|_| ApiError::conflict("scene is busy; objects cannot be removed while a job runs"))?;
    blocking(move || {
        let _guard = guard;
        if slot.dir.dequeue(&name)? {
            Ok(StatusCode::NO_CONTENT)
        } else {
            Err(ApiError::not_found(format!("no queued object `{name}`")))
        }
    })
    .await
}

async fn post_run(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<(StatusCode, Json<RunAccepted>)> {
    let slot = app.slot(&id)?;
    let guard = slot
        .run_lock
        .clone()
        .try_lock_owned()
        .map_err(|_| ApiError::conflict("a job is already running on this scene"))?;
    let claim = slot.clone();
    let job = blocking(move || Ok(start_job(&claim.dir)?)).await?;
    slot.set_job(job.clone());
    slot.set_status(SceneStatus::Running { stage: Stage::Stylize });
    let job_id = job.job_id.clone();
    info!(scene = %slot.id, job = %job_id, "job started");

    let params = app.config.pipeline_params();
    tokio::task::spawn_blocking(move || {
        // The lock is released only after the final status is recorded.
        let _guard = guard;
        // HTTP backends own a blocking client, which must not be built or
        // dropped on an async worker.
        let backends = app.backends();
        let progress_slot = slot.clone();
        let mut on_progress = move |j: &JobState| {
            progress_slot.set_job(j.clone());
            if j.status == JobStatus::Running {
                progress_slot.set_status(SceneStatus::Running { stage: j.stage });
            }
        };
        let result = backends.and_then(|b| run_job(&slot.dir, job, &b, &params, &mut on_progress));
        match result {
            Ok(summary) => {
                info!(scene = %slot.id, frames = summary.frames, "job finished");
                slot.set_job(summary.job);
                slot.set_status(SceneStatus::Done);
            }
            Err(e) => {
                error!(scene = %slot.id, error = %e, "job failed");
                if let Ok(Some(job)) = slot.dir.load_job() {
                    slot.set_job(job);
                }
                slot.set_status(SceneStatus::Failed { reason: e.to_string() });
            }
        }
    });
    Ok((StatusCode::ACCEPTED, Json(RunAccepted { job_id })))
}

async fn get_job(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<JobView>> {
    let slot = app.slot(&id)?;
    let job = slot.job.lock().expect("job lock").clone();
    let job = job.ok_or_else(|| ApiError::not_found("no job has run on this scene"))?;
    Ok(Json(JobView {
        status: slot.status(),
        progress: job.progress(),
        job,
    }))
}

#[derive(Deserialize)]
struct PreviewQuery {
    #[serde(default)]
    view: usize,
}

async fn get_preview(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<PreviewQuery>,
) -> ApiResult<Response> {
    let slot = app.slot(&id)?;
    let params = app.config.pipeline_params();
    blocking(move || {
        let ds = load_dataset(&slot.dir)?;
        let scene = slot.dir.load_scene()?;
        let img = preview_frame(&ds, &scene.state, &scene.queue, q.view, &params)?;
        let png = encode_png(&img)?;
        Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
    })
    .await
}

async fn get_report(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let slot = app.slot(&id)?;
    blocking(move || {
        let csv = slot.dir.load_report()?.to_csv();
        Ok(([(header::CONTENT_TYPE, "text/csv")], csv).into_response())
    })
    .await
}

/// Binds `addr` and serves in the background. Returns the bound address.
pub async fn spawn(state: Arc<AppState>, addr: &str) -> std::io::Result<(SocketAddr, JoinHandle<()>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let app = router(state);
    let handle = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            error!(error = %e, "server stopped");
        }
    });
    Ok((local, handle))
}

/// Serves until Ctrl-C.
pub async fn serve(config: Config) -> std::io::Result<()> {
    let listener = TcpListener::bind(&config.bind).await?;
    info!(addr = %listener.local_addr()?, root = %config.scenes_root.display(), "listening");
    let app = router(AppState::new(config));
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
