//! Deterministic in-process stand-ins for the neural services.

use image::RgbImage;

use super::{
    BackendError, GridEditRequest, GridEditor, MeshGenRequest, MeshGenerator, RenderSceneRequest, SceneRenderer,
    StylizeRequest, Stylizer,
};
use crate::dataset::NerfDataset;
use crate::geometry::{pose_distance, tessellate_primitive, Pose, Primitive, PrimitiveKind, TriMesh, Vec3};
use crate::imaging::mean_rgb;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a_64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Per-channel gains in [0.5, 1.0] from the three low-order bytes of the
/// prompt hash.
pub fn prompt_gains(prompt: &str) -> [f64; 3] {
    let bytes = fnv1a_64(prompt.as_bytes()).to_le_bytes();
    [0, 1, 2].map(|i| 0.5 + 0.5 * bytes[i] as f64 / 255.0)
}

/// Scales each channel by a prompt-derived gain.
pub struct MockStylizer;

impl Stylizer for MockStylizer {
    fn stylize(&self, req: &StylizeRequest) -> Result<RgbImage, BackendError> {
        let g = prompt_gains(&req.prompt);
        let mut out = req.image.clone();
        for p in out.pixels_mut() {
            for (ch, gain) in p.0.iter_mut().zip(g) {
                *ch = (*ch as f64 * gain).round().min(255.0) as u8;
            }
        }
        Ok(out)
    }
}

/// Level-32 sphere of radius 0.5 painted with the request image's mean color.
pub struct MockMeshGenerator;

impl MeshGenerator for MockMeshGenerator {
    fn generate_mesh(&self, req: &MeshGenRequest) -> Result<TriMesh, BackendError> {
        let prim = Primitive::new(PrimitiveKind::Sphere, Pose::identity(), Vec3::repeat(0.5));
        Ok(tessellate_primitive(&prim, 32).with_uniform_color(mean_rgb(&req.image)))
    }
}

/// Returns the color grid unchanged. The pipeline pre-composites whatever the
/// blank slot should show before calling it.
pub struct MockGridEditor;

impl GridEditor for MockGridEditor {
    fn edit_grid(&self, req: &GridEditRequest) -> Result<RgbImage, BackendError> {
        Ok(req.color_grid.clone())
    }
}

/// Returns the dataset image whose pose is nearest to the requested view.
pub struct MockSceneRenderer {
    /// Scene units per radian in the pose distance.
    pub rotation_weight: f64,
}

impl Default for MockSceneRenderer {
    fn default() -> Self {
        MockSceneRenderer { rotation_weight: 1.0 }
    }
}

impl MockSceneRenderer {
    pub fn nearest_frame(&self, ds: &NerfDataset, pose: &Pose) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, f) in ds.frames.iter().enumerate() {
            let d = pose_distance(&f.transform, pose, self.rotation_weight);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best.map(|(i, _)| i)
    }
}

impl SceneRenderer for MockSceneRenderer {
    fn render_scene(&self, req: &RenderSceneRequest, ds: &NerfDataset) -> Result<RgbImage, BackendError> {
        let index = self
            .nearest_frame(ds, &req.view.pose)
            .ok_or_else(|| BackendError::InvalidRequest("dataset has no frames".into()))?;
        let img = ds.frames[index]
            .decode_image()
            .map_err(|e| BackendError::Payload(e.to_string()))?;
        let (w, h) = req.view.intrinsics.dimensions();
        if img.dimensions() == (w, h) {
            Ok(img)
        } else {
            Ok(crate::imaging::downscale(&img, w, h))
        }
    }
}
