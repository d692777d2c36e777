//! Backend services over HTTP, answering the wire protocol the pipeline's
//! HTTP clients speak. Serves any [`Backends`] set; with the mocks it stands
//! in for the model servers in tests and demos.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use primscene_core::backends::mesh_io::write_obj;
use primscene_core::backends::wire::{
    self, ErrorBody, GridEditBody, ImageBody, MeshBody, RenderSceneBody, StylizeBody,
};
use primscene_core::backends::{BackendError, Backends, MeshGenRequest, StylizeRequest};
use primscene_core::dataset::NerfDataset;
use serde::de::DeserializeOwned;

struct StubState {
    backends: Backends,
    /// Scene the renderer answers from.
    dataset: Arc<NerfDataset>,
}

type StubResult = Result<Response, (StatusCode, Json<ErrorBody>)>;

fn reject(e: BackendError) -> (StatusCode, Json<ErrorBody>) {
    let (status, code) = match &e {
        BackendError::InvalidRequest(_) | BackendError::Payload(_) => (StatusCode::BAD_REQUEST, "invalid_request"),
        BackendError::Remote { status, .. } if *status < 500 => (StatusCode::BAD_REQUEST, "rejected"),
        _ => (StatusCode::INTERNAL_SERVER_ERROR, "backend_failure"),
    };
    (status, Json(ErrorBody::new(code, e.to_string())))
}

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, BackendError> {
    serde_json::from_slice(body).map_err(|e| BackendError::InvalidRequest(e.to_string()))
}

async fn run<T: IntoResponse + Send + 'static>(
    state: Arc<StubState>,
    f: impl FnOnce(&StubState) -> Result<T, BackendError> + Send + 'static,
) -> Result<T, (StatusCode, Json<ErrorBody>)> {
    tokio::task::spawn_blocking(move || f(&state))
        .await
        .map_err(|e| reject(BackendError::Payload(e.to_string())))?
        .map_err(reject)
}

async fn stylize(State(s): State<Arc<StubState>>, body: Bytes) -> StubResult {
    run(s, move |s| {
        let b: StylizeBody = parse(&body)?;
        let req = StylizeRequest {
            image: wire::decode_image(&b.image)?,
            prompt: b.prompt,
        };
        let out = s.backends.stylizer.stylize(&req)?;
        Ok(Json(ImageBody {
            image: wire::encode_image(&out)?,
        }))
    })
    .await
    .map(IntoResponse::into_response)
}

async fn generate_mesh(State(s): State<Arc<StubState>>, body: Bytes) -> StubResult {
    run(s, move |s| {
        let b: ImageBody = parse(&body)?;
        let mesh = s.backends.mesh_generator.generate_mesh(&MeshGenRequest {
            image: wire::decode_image(&b.image)?,
        })?;
        Ok(Json(MeshBody {
            mesh: wire::encode_bytes(write_obj(&mesh).as_bytes()),
        }))
    })
    .await
    .map(IntoResponse::into_response)
}

async fn edit_grid(State(s): State<Arc<StubState>>, body: Bytes) -> StubResult {
    run(s, move |s| {
        let b: GridEditBody = parse(&body)?;
        let out = s.backends.grid_editor.edit_grid(&b.into_request()?)?;
        Ok(Json(ImageBody {
            image: wire::encode_image(&out)?,
        }))
    })
    .await
    .map(IntoResponse::into_response)
}

async fn render_scene(State(s): State<Arc<StubState>>, body: Bytes) -> StubResult {
    run(s, move |s| {
        let b: RenderSceneBody = parse(&body)?;
        let out = s.backends.scene_renderer.render_scene(&b.into_request()?, &s.dataset)?;
        Ok(Json(ImageBody {
            image: wire::encode_image(&out)?,
        }))
    })
    .await
    .map(IntoResponse::into_response)
}

pub fn backend_router(backends: Backends, dataset: Arc<NerfDataset>) -> Router {
    Router::new()
        .route(wire::STYLIZE_PATH, post(stylize))
        .route(wire::GENERATE_MESH_PATH, post(generate_mesh))
        .route(wire::EDIT_GRID_PATH, post(edit_grid))
        .route(wire::RENDER_SCENE_PATH, post(render_scene))
        .layer(DefaultBodyLimit::max(512 * 1024 * 1024))
        .with_state(Arc::new(StubState { backends, dataset }))
}
