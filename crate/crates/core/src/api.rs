//! JSON bodies of the scene service, shared by server and client.

use serde::{Deserialize, Serialize};

use crate::geometry::{CameraIntrinsics, Primitive, Vec3};
use crate::integration::{ObjectSpec, Stage, Strategy};
use crate::jobs::JobState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum SceneStatus {
    Idle,
    Running { stage: Stage },
    Failed { reason: String },
    Done,
}

/// Ledger entry without the mesh payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsertedSummary {
    pub name: String,
    pub prompt: String,
    pub strategy: Strategy,
    pub primitive: Primitive,
    pub centroid: Vec3,
    pub bound_radius: f64,
    pub vertices: usize,
    pub triangles: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSummary {
    pub id: String,
    pub status: SceneStatus,
    pub frames: usize,
    pub base_dataset_size: usize,
    pub inserted: Vec<InsertedSummary>,
    pub queue: Vec<ObjectSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameInfo {
    pub index: usize,
    pub file_path: String,
    /// Camera-to-world, row-major.
    pub transform_matrix: [[f64; 4]; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramesResponse {
    pub intrinsics: CameraIntrinsics,
    pub frames: Vec<FrameInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAccepted {
    pub job_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobView {
    pub status: SceneStatus,
    pub progress: f64,
    pub job: JobState,
}
