use std::thread;
use std::time::Duration;

use image::RgbImage;
use reqwest::blocking::Client;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::wire::{self, ErrorBody, GridEditBody, ImageBody, MeshBody, RenderSceneBody, StylizeBody};
use super::{
    mesh_io, BackendError, GridEditRequest, GridEditor, MeshGenRequest, MeshGenerator, RenderSceneRequest,
    SceneRenderer, StylizeRequest, Stylizer,
};
use crate::dataset::NerfDataset;
use crate::geometry::TriMesh;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub attempts: u32,
    /// Delay before the second attempt; doubles after each failure.
    pub base_delay_ms: u64,
    pub timeout_secs: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base_delay_ms: 1000,
            timeout_secs: 300,
        }
    }
}

impl RetryPolicy {
    pub fn delay_before(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.base_delay_ms.saturating_mul(1u64 << (attempt - 1).min(16)))
    }
}

/// JSON-over-HTTP client for one backend service. The same type serves all
/// four operations; each posts to its own path under `base_url`.
#[derive(Clone)]
pub struct HttpBackend {
    base_url: String,
    client: Client,
    retry: RetryPolicy,
}

impl HttpBackend {
    pub fn new(base_url: impl Into<String>, retry: RetryPolicy) -> Result<Self, BackendError> {
        let base_url = base_url.into().trim_end_matches('/').to_string();
        let client = Client::builder()
            .timeout(Duration::from_secs(retry.timeout_secs))
            .build()
            .map_err(|e| BackendError::Unreachable {
                endpoint: base_url.clone(),
                attempts: 0,
                last_error: e.to_string(),
            })?;
        Ok(HttpBackend {
            base_url,
            client,
            retry,
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R, BackendError> {
        let url = format!("{}{}", self.base_url, path);
        let attempts = self.retry.attempts.max(1);
        let mut last_error = String::new();
        for attempt in 1..=attempts {
            if attempt > 1 {
                thread::sleep(self.retry.delay_before(attempt - 1));
            }
            let resp = match self.client.post(&url).json(body).send() {
                Ok(r) => r,
                Err(e) => {
                    last_error = e.to_string();
                    tracing::warn!(%url, attempt, error = %last_error, "backend request failed");
                    continue;
                }
            };
            let status = resp.status();
            if status.is_success() {
                return resp
                    .json::<R>()
                    .map_err(|e| BackendError::Payload(format!("{url}: {e}")));
            }
            let text = resp.text().unwrap_or_default();
            let (code, message) = match serde_json::from_str::<ErrorBody>(&text) {
                Ok(b) => (b.error.code, b.error.message),
                Err(_) => ("http_error".to_string(), text),
            };
            if status.is_server_error() {
                last_error = format!("{status} {code}: {message}");
                tracing::warn!(%url, attempt, error = %last_error, "backend returned server error");
                continue;
            }
            return Err(BackendError::Remote {
                status: status.as_u16(),
                code,
                message,
            });
        }
        Err(BackendError::Unreachable {
            endpoint: url,
            attempts,
            last_error,
        })
    }
}

impl Stylizer for HttpBackend {
    fn stylize(&self, req: &StylizeRequest) -> Result<RgbImage, BackendError> {
        let body = StylizeBody {
            image: wire::encode_image(&req.image)?,
            prompt: req.prompt.clone(),
        };
        let resp: ImageBody = self.post(wire::STYLIZE_PATH, &body)?;
        wire::decode_image(&resp.image)
    }
}

impl MeshGenerator for HttpBackend {
    fn generate_mesh(&self, req: &MeshGenRequest) -> Result<TriMesh, BackendError> {
        let body = ImageBody {
            image: wire::encode_image(&req.image)?,
        };
        let resp: MeshBody = self.post(wire::GENERATE_MESH_PATH, &body)?;
        mesh_io::decode_mesh_payload(&wire::decode_bytes(&resp.mesh)?)
    }
}

impl GridEditor for HttpBackend {
    fn edit_grid(&self, req: &GridEditRequest) -> Result<RgbImage, BackendError> {
        let body = GridEditBody::from_request(req)?;
        let resp: ImageBody = self.post(wire::EDIT_GRID_PATH, &body)?;
        wire::decode_image(&resp.image)
    }
}

impl SceneRenderer for HttpBackend {
    fn render_scene(&self, req: &RenderSceneRequest, _ds: &NerfDataset) -> Result<RgbImage, BackendError> {
        let resp: ImageBody = self.post(wire::RENDER_SCENE_PATH, &RenderSceneBody::from(req))?;
        wire::decode_image(&resp.image)
    }
}
