//! JSON bodies exchanged with backend services. Images travel as base64 PNG
//! (16-bit PNG for depth grids), meshes as base64 OBJ or GLB.

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::{BackendError, GridEditRequest, RenderSceneRequest};
use crate::geometry::{CameraIntrinsics, CameraView, Pose};
use crate::imaging;
use crate::refgrid::GridShape;

pub const STYLIZE_PATH: &str = "/stylize";
pub const GENERATE_MESH_PATH: &str = "/generate_mesh";
pub const EDIT_GRID_PATH: &str = "/edit_grid";
pub const RENDER_SCENE_PATH: &str = "/render_scene";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StylizeBody {
    pub image: String,
    pub prompt: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageBody {
    pub image: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeshBody {
    pub mesh: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridEditBody {
    pub color_grid: String,
    pub depth_grid: String,
    pub mask_grid: String,
    /// Depth value encoded as 65535 in `depth_grid`.
    pub depth_scale: f32,
    pub prompt: String,
    pub rows: u32,
    pub cols: u32,
    pub blank_index: u32,
    pub tile_width: u32,
    pub tile_height: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViewBody {
    pub intrinsics: CameraIntrinsics,
    /// Camera-to-world, row-major.
    pub transform_matrix: [[f64; 4]; 4],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RenderSceneBody {
    pub view: ViewBody,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

impl ErrorBody {
    pub fn new(code: impl Into<String>, message: impl Into<String>) -> Self {
        ErrorBody {
            error: ErrorDetail {
                code: code.into(),
                message: message.into(),
            },
        }
    }
}

pub fn encode_bytes(bytes: &[u8]) -> String {
    STANDARD.encode(bytes)
}

pub fn decode_bytes(text: &str) -> Result<Vec<u8>, BackendError> {
    STANDARD
        .decode(text)
        .map_err(|e| BackendError::Payload(format!("base64: {e}")))
}

pub fn encode_image(img: &RgbImage) -> Result<String, BackendError> {
    imaging::encode_png(img)
        .map(|b| encode_bytes(&b))
        .map_err(|e| BackendError::Payload(e.to_string()))
}

pub fn decode_image(text: &str) -> Result<RgbImage, BackendError> {
    imaging::decode_rgb(&decode_bytes(text)?, "backend image").map_err(|e| BackendError::Payload(e.to_string()))
}

impl GridEditBody {
    pub fn from_request(req: &GridEditRequest) -> Result<Self, BackendError> {
        let payload = |r: crate::Result<Vec<u8>>| {
            r.map(|b| encode_bytes(&b))
                .map_err(|e| BackendError::Payload(e.to_string()))
        };
        let (depth16, depth_scale) = imaging::quantize_depth(&req.depth_grid);
        Ok(GridEditBody {
            color_grid: payload(imaging::encode_png(&req.color_grid))?,
            depth_grid: payload(imaging::encode_png(&depth16))?,
            mask_grid: payload(imaging::encode_png(&req.mask_grid))?,
            depth_scale,
            prompt: req.prompt.clone(),
            rows: req.shape.rows,
            cols: req.shape.cols,
            blank_index: req.shape.blank_index,
            tile_width: req.tile_width,
            tile_height: req.tile_height,
        })
    }

    pub fn into_request(self) -> Result<GridEditRequest, BackendError> {
        let err = |e: crate::Error| BackendError::Payload(e.to_string());
        let depth16 = imaging::decode_gray16(&decode_bytes(&self.depth_grid)?, "depth grid").map_err(err)?;
        Ok(GridEditRequest {
            color_grid: decode_image(&self.color_grid)?,
            depth_grid: imaging::dequantize_depth(&depth16, self.depth_scale),
            mask_grid: imaging::decode_gray(&decode_bytes(&self.mask_grid)?, "mask grid").map_err(err)?,
            prompt: self.prompt,
            shape: GridShape {
                rows: self.rows,
                cols: self.cols,
                blank_index: self.blank_index,
            },
            tile_width: self.tile_width,
            tile_height: self.tile_height,
        })
    }
}

impl From<&RenderSceneRequest> for RenderSceneBody {
    fn from(req: &RenderSceneRequest) -> Self {
        RenderSceneBody {
            view: ViewBody {
                intrinsics: req.view.intrinsics,
                transform_matrix: req.view.pose.to_rows(),
            },
        }
    }
}

impl RenderSceneBody {
    pub fn into_request(self) -> Result<RenderSceneRequest, BackendError> {
        let pose = Pose::from_rows(&self.view.transform_matrix);
        if !pose.is_valid(1e-6) {
            return Err(BackendError::InvalidRequest(
                "transform_matrix is not a rigid transform".into(),
            ));
        }
        self.view
            .intrinsics
            .validate()
            .map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
        Ok(RenderSceneRequest {
            view: CameraView::new(self.view.intrinsics, pose),
        })
    }
}
