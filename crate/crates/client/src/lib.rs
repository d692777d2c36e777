//! Async client for the scene service.

use primscene_core::api::{FramesResponse, JobView, RunAccepted, SceneSummary};
use primscene_core::backends::wire::ErrorBody;
use primscene_core::integration::{ObjectSpec, PipelineReport};
use reqwest::{Response, StatusCode};
use serde::de::DeserializeOwned;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("{status} {code}: {message}")]
    Api { status: u16, code: String, message: String },
    #[error("transport: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("unexpected response: {0}")]
    Decode(String),
}

impl ClientError {
    pub fn status(&self) -> Option<u16> {
        match self {
            ClientError::Api { status, .. } => Some(*status),
            _ => None,
        }
    }

    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Api { code, .. } => Some(code),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

async fn checked(resp: Response) -> Result<Response> {
    let status = resp.status();
    if status.is_success() {
        return Ok(resp);
    }
    let text = resp.text().await.unwrap_or_default();
    let (code, message) = match serde_json::from_str::<ErrorBody>(&text) {
        Ok(body) => (body.error.code, body.error.message),
        Err(_) => ("http_error".to_string(), text),
    };
    Err(ClientError::Api {
        status: status.as_u16(),
        code,
        message,
    })
}

async fn json<T: DeserializeOwned>(resp: Response) -> Result<T> {
    let bytes = checked(resp).await?.bytes().await?;
    serde_json::from_slice(&bytes).map_err(|e| ClientError::Decode(e.to_string()))
}

impl Client {
    pub fn new(base_url: impl Into<String>) -> Self {
        Client {
            base: base_url.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    pub async fn scenes(&self) -> Result<Vec<String>> {
        json(self.http.get(self.url("/scenes")).send().await?).await
    }

    pub async fn scene(&self, id: &str) -> Result<SceneSummary> {
        json(self.http.get(self.url(&format!("/scenes/{id}"))).send().await?).await
    }

    pub async fn frames(&self, id: &str) -> Result<FramesResponse> {
        json(self.http.get(self.url(&format!("/scenes/{id}/frames"))).send().await?).await
    }

    pub async fn place(&self, id: &str, spec: &ObjectSpec) -> Result<ObjectSpec> {
        let resp = self
            .http
            .post(self.url(&format!("/scenes/{id}/objects")))
            .json(spec)
            .send()
            .await?;
        json(resp).await
    }

    pub async fn remove(&self, id: &str, name: &str) -> Result<()> {
        let resp = self
            .http
            .delete(self.url(&format!("/scenes/{id}/objects/{name}")))
            .send()
            .await?;
        checked(resp).await.map(|_| ())
    }

    pub async fn run(&self, id: &str) -> Result<RunAccepted> {
        json(self.http.post(self.url(&format!("/scenes/{id}/run"))).send().await?).await
    }

    /// `None` when no job has run on the scene yet.
    pub async fn current_job(&self, id: &str) -> Result<Option<JobView>> {
        let resp = self
            .http
            .get(self.url(&format!("/scenes/{id}/jobs/current")))
            .send()
            .await?;
        if resp.status() == StatusCode::NOT_FOUND {
            return match checked(resp).await {
                Err(ClientError::Api { code, .. }) if code == "not_found" => Ok(None),
                Err(e) => Err(e),
                Ok(_) => unreachable!("404 is never a success"),
            };
        }
        json(resp).await.map(Some)
    }

    /// PNG bytes of frame `view` with placed and inserted objects drawn in.
    pub async fn preview(&self, id: &str, view: usize) -> Result<Vec<u8>> {
        let resp = self
            .http
            .get(self.url(&format!("/scenes/{id}/preview?view={view}")))
            .send()
            .await?;
        Ok(checked(resp).await?.bytes().await?.to_vec())
    }

    pub async fn report_csv(&self, id: &str) -> Result<String> {
        let resp = self.http.get(self.url(&format!("/scenes/{id}/report"))).send().await?;
        Ok(checked(resp).await?.text().await?)
    }

    pub async fn report(&self, id: &str) -> Result<PipelineReport> {
        PipelineReport::from_csv(&self.report_csv(id).await?).map_err(|e| ClientError::Decode(e.to_string()))
    }

    /// Polls the current job every `interval` until it leaves the running
    /// state.
    pub async fn wait_for_job(&self, id: &str, interval: std::time::Duration) -> Result<JobView> {
        loop {
            if let Some(view) = self.current_job(id).await? {
                if !matches!(view.status, primscene_core::api::SceneStatus::Running { .. }) {
                    return Ok(view);
                }
            }
            tokio::time::sleep(interval).await;
        }
    }
}
