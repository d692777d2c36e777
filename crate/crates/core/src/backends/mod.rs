//! Contracts for the neural services the pipeline depends on: the stylizer,
//! the single-image mesh generator, the reference-grid editor and the scene
//! renderer.
//!
//! [`Backends`] validates every request before dispatch and every response
//! before it is handed back, so a misbehaving service surfaces as a typed
//! [`BackendError`] rather than bad pixels in a dataset.

mod http;
pub mod mesh_io;
mod mock;
pub mod wire;

use std::sync::Arc;

use image::RgbImage;
use thiserror::Error;

use crate::dataset::NerfDataset;
use crate::error::{Error, Result};
use crate::geometry::{CameraView, TriMesh};
use crate::imaging::{DepthImage, GrayImage};
use crate::refgrid::{GridShape, ReferenceGrid};

pub use http::{HttpBackend, RetryPolicy};
pub use mock::{fnv1a_64, prompt_gains, MockGridEditor, MockMeshGenerator, MockSceneRenderer, MockStylizer};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("backend {endpoint} unreachable after {attempts} attempts: {last_error}")]
    Unreachable {
        endpoint: String,
        attempts: u32,
        last_error: String,
    },

    #[error("{operation} returned {actual:?}, expected {expected:?}")]
    DimensionViolation {
        operation: &'static str,
        expected: (u32, u32),
        actual: (u32, u32),
    },

    #[error("generated mesh is invalid: {0}")]
    InvalidMesh(String),

    #[error("request rejected before dispatch: {0}")]
    InvalidRequest(String),

    #[error("backend returned {status} {code}: {message}")]
    Remote { status: u16, code: String, message: String },

    #[error("malformed backend payload: {0}")]
    Payload(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StylizeRequest {
    pub image: RgbImage,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshGenRequest {
    pub image: RgbImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridEditRequest {
    pub color_grid: RgbImage,
    pub depth_grid: DepthImage,
    pub mask_grid: GrayImage,
    pub prompt: String,
    pub shape: GridShape,
    pub tile_width: u32,
    pub tile_height: u32,
}

impl GridEditRequest {
    pub fn from_grid(grid: &ReferenceGrid, prompt: &str) -> Self {
        GridEditRequest {
            color_grid: grid.color.clone(),
            depth_grid: grid.depth.clone(),
            mask_grid: grid.mask.clone(),
            prompt: prompt.to_string(),
            shape: grid.shape,
            tile_width: grid.tile_width,
            tile_height: grid.tile_height,
        }
    }

    pub fn grid_dimensions(&self) -> (u32, u32) {
        (self.tile_width * self.shape.cols, self.tile_height * self.shape.rows)
    }

    fn validate(&self) -> Result<(), BackendError> {
        self.shape
            .validate()
            .map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
        if self.prompt.trim().is_empty() {
            return Err(BackendError::InvalidRequest("empty prompt".into()));
        }
        let dims = self.grid_dimensions();
        if self.color_grid.dimensions() != dims
            || self.depth_grid.dimensions() != dims
            || self.mask_grid.dimensions() != dims
        {
            return Err(BackendError::InvalidRequest(format!(
                "grid channels must all be {dims:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderSceneRequest {
    pub view: CameraView,
}

pub trait Stylizer: Send + Sync {
    fn stylize(&self, req: &StylizeRequest) -> Result<RgbImage, BackendError>;
}

pub trait MeshGenerator: Send + Sync {
    fn generate_mesh(&self, req: &MeshGenRequest) -> Result<TriMesh, BackendError>;
}

pub trait GridEditor: Send + Sync {
    fn edit_grid(&self, req: &GridEditRequest) -> Result<RgbImage, BackendError>;
}

pub trait SceneRenderer: Send + Sync {
    fn render_scene(&self, req: &RenderSceneRequest, ds: &NerfDataset) -> Result<RgbImage, BackendError>;
}

/// The four services, behind request/response validation.
#[derive(Clone)]
pub struct Backends {
    pub stylizer: Arc<dyn Stylizer>,
    pub mesh_generator: Arc<dyn MeshGenerator>,
    pub grid_editor: Arc<dyn GridEditor>,
    pub scene_renderer: Arc<dyn SceneRenderer>,
}

impl Backends {
    pub fn mock() -> Self {
        Backends {
            stylizer: Arc::new(MockStylizer),
            mesh_generator: Arc::new(MockMeshGenerator),
            grid_editor: Arc::new(MockGridEditor),
            scene_renderer: Arc::new(MockSceneRenderer::default()),
        }
    }

    pub fn stylize(&self, req: &StylizeRequest) -> Result<RgbImage> {
        if req.prompt.trim().is_empty() {
            return Err(BackendError::InvalidRequest("empty prompt".into()).into());
        }
        if req.image.width() == 0 || req.image.height() == 0 {
            return Err(BackendError::InvalidRequest("empty image".into()).into());
        }
        let out = self.stylizer.stylize(req)?;
        check_dims("stylize", req.image.dimensions(), out.dimensions())?;
        Ok(out)
    }

    /// Generated mesh in object-local coordinates, normalized into
    /// `[−0.5, 0.5]³`.
    pub fn generate_mesh(&self, req: &MeshGenRequest) -> Result<TriMesh> {
        if req.image.width() == 0 || req.image.height() == 0 {
            return Err(BackendError::InvalidRequest("empty image".into()).into());
        }
        let mesh = self.mesh_generator.generate_mesh(req)?;
        mesh.validate().map_err(|e| BackendError::InvalidMesh(e.to_string()))?;
        Ok(mesh_io::normalize_unit_box(mesh))
    }

    pub fn edit_grid(&self, req: &GridEditRequest) -> Result<RgbImage> {
        req.validate()?;
        let out = self.grid_editor.edit_grid(req)?;
        check_dims("edit_grid", req.grid_dimensions(), out.dimensions())?;
        Ok(out)
    }

    pub fn render_scene(&self, req: &RenderSceneRequest, ds: &NerfDataset) -> Result<RgbImage> {
        if ds.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let out = self.scene_renderer.render_scene(req, ds)?;
        check_dims("render_scene", req.view.intrinsics.dimensions(), out.dimensions())?;
        Ok(out)
    }
}

fn check_dims(operation: &'static str, expected: (u32, u32), actual: (u32, u32)) -> Result<(), BackendError> {
    if expected != actual {
        return Err(BackendError::DimensionViolation {
            operation,
            expected,
            actual,
        });
    }
    Ok(())
}
