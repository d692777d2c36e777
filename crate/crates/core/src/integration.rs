//! Object insertion: stylize a primitive, turn the stylized view into a mesh,
//! place it in the scene and push it into the dataset, either by adding new
//! reference views or by editing the existing frames that see it.
//!
//! Every condition render includes all previously inserted meshes. The
//! [`SceneState`] ledger is what makes that possible across insertions.

use std::collections::HashSet;
use std::time::Instant;

use image::{Luma, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::backends::{Backends, GridEditRequest, MeshGenRequest, RenderSceneRequest, StylizeRequest};
use crate::dataset::{add_frames, replace_frame_image, NerfDataset};
use crate::error::{Error, Result};
use crate::geometry::{
    look_at_pose, pose_distance, project_point, tessellate_primitive, Aabb, CameraIntrinsics, CameraView, Primitive,
    TriMesh, Vec3,
};
use crate::imaging::{self, GrayImage};
use crate::raster::{composite_over, render_meshes, RenderOutput, MASK_ON};
use crate::refgrid::{assemble_grid, select_reference_cameras, GridShape, ReferenceGrid, RingParams};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    /// Append edited reference views as new frames.
    AddNewImages,
    /// Edit existing frames that see the object.
    ModifyExisting,
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "add_new_images" | "add" => Ok(Strategy::AddNewImages),
            "modify_existing" | "modify" => Ok(Strategy::ModifyExisting),
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub name: String,
    pub primitive: Primitive,
    pub prompt: String,
    #[serde(default)]
    pub strategy: Strategy,
}

impl ObjectSpec {
    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::InvalidSpec("object name is empty".into()));
        }
        if self.prompt.trim().is_empty() {
            return Err(Error::InvalidSpec(format!(
                "object `{}` has an empty prompt",
                self.name
            )));
        }
        self.primitive.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsertedObject {
    pub spec: ObjectSpec,
    /// World coordinates.
    pub mesh: TriMesh,
    pub centroid: Vec3,
    pub bound_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SceneState {
    pub inserted: Vec<InsertedObject>,
    /// Frame count of the captured dataset before any insertion.
    pub base_dataset_size: usize,
}

impl SceneState {
    pub fn new(base_dataset_size: usize) -> Self {
        SceneState {
            inserted: Vec::new(),
            base_dataset_size,
        }
    }

    pub fn meshes(&self) -> impl Iterator<Item = &TriMesh> {
        self.inserted.iter().map(|o| &o.mesh)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.inserted.iter().any(|o| o.spec.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    pub stylize_seconds: f64,
    pub meshgen_seconds: f64,
    pub integrate_minutes: f64,
    pub total_minutes: f64,
}

pub const REPORT_HEADER: [&str; 5] = [
    "Object",
    "Primitive-Stylization (s)",
    "Mesh Generation (s)",
    "SIGNeRF (min)",
    "Total (min)",
];

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PipelineReport {
    pub rows: Vec<ReportRow>,
}

impl PipelineReport {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(REPORT_HEADER).expect("in-memory csv");
        for r in &self.rows {
            w.write_record([
                r.name.clone(),
                format!("{:.3}", r.stylize_seconds),
                format!("{:.3}", r.meshgen_seconds),
                format!("{:.4}", r.integrate_minutes),
                format!("{:.4}", r.total_minutes),
            ])
            .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
    }

    pub fn from_csv(text: &str) -> Result<PipelineReport> {
        let bad = |m: String| Error::InvalidSpec(format!("report csv: {m}"));
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers().map_err(|e| bad(e.to_string()))?;
        if header.iter().ne(REPORT_HEADER) {
            return Err(bad(format!("unexpected header {header:?}")));
        }
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let num = |i: usize| rec[i].parse::<f64>().map_err(|e| bad(e.to_string()));
            rows.push(ReportRow {
                name: rec[0].to_string(),
                stylize_seconds: num(1)?,
                meshgen_seconds: num(2)?,
                integrate_minutes: num(3)?,
                total_minutes: num(4)?,
            });
        }
        Ok(PipelineReport { rows })
    }

    /// Fixed-width table for terminals.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<12} {:>26} {:>20} {:>14} {:>12}\n",
            REPORT_HEADER[0], REPORT_HEADER[1], REPORT_HEADER[2], REPORT_HEADER[3], REPORT_HEADER[4]
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<12} {:>26.3} {:>20.3} {:>14.4} {:>12.4}\n",
                r.name, r.stylize_seconds, r.meshgen_seconds, r.integrate_minutes, r.total_minutes
            ));
        }
        out
    }
}

/// Knobs of the insertion pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    pub grid: GridShape,
    pub tile_width: u32,
    pub tile_height: u32,
    pub ring: RingParams,
    pub near: f64,
    pub far: f64,
    /// Tessellation level for primitives rendered in the stylize view.
    pub tessellation_level: u32,
    /// Worker bound for per-view rendering and backend calls.
    pub concurrency: usize,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            grid: GridShape::default(),
            tile_width: 256,
            tile_height: 256,
            ring: RingParams::default(),
            near: 0.01,
            far: 100.0,
            tessellation_level: 16,
            concurrency: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Stylize,
    GenerateMesh,
    ReferenceGrids,
    DatasetUpdate,
    Done,
}

impl Stage {
    /// Fraction of one object's work finished when this stage starts.
    pub fn progress(self) -> f64 {
        match self {
            Stage::Stylize => 0.0,
            Stage::GenerateMesh => 0.25,
            Stage::ReferenceGrids => 0.5,
            Stage::DatasetUpdate => 0.75,
            Stage::Done => 1.0,
        }
    }
}

/// Stage outputs recovered from an interrupted run.
#[derive(Debug, Clone, Default)]
pub struct ResumeArtifacts {
    pub stylized: Option<(RgbImage, f64)>,
    pub mesh_local: Option<(TriMesh, f64)>,
}

/// Callbacks for progress reporting and checkpointing. All methods default to
/// no-ops.
pub trait PipelineHooks {
    fn stage(&mut self, _object_index: usize, _stage: Stage) {}

    fn resume(&mut self, _object_index: usize) -> ResumeArtifacts {
        ResumeArtifacts::default()
    }

    fn stylized(&mut self, _object_index: usize, _image: &RgbImage, _seconds: f64) -> Result<()> {
        Ok(())
    }

    fn mesh_generated(&mut self, _object_index: usize, _mesh: &TriMesh, _seconds: f64) -> Result<()> {
        Ok(())
    }

    fn object_completed(&mut self, _outcome: &InsertOutcome) -> Result<()> {
        Ok(())
    }
}

pub struct NoHooks;

impl PipelineHooks for NoHooks {}

#[derive(Debug, Clone)]
pub struct InsertOutcome {
    pub scene: SceneState,
    pub dataset: NerfDataset,
    pub row: ReportRow,
    /// Condition grid sent to the editor (blank slot still mid-gray).
    pub grid: ReferenceGrid,
    /// Frame whose camera was used for the stylize view.
    pub stylize_frame: usize,
    pub stylized: RgbImage,
    /// Frames whose pixels changed (strategy 2 only).
    pub modified_frames: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Fits a unit-box mesh into the primitive: centered, uniformly scaled to the
/// largest size that stays within the primitive's local box, then posed.
pub fn place_mesh(mesh_local: &TriMesh, prim: &Primitive) -> Result<TriMesh> {
    prim.validate()?;
    let bounds = mesh_local
        .bounds()
        .ok_or_else(|| Error::InvalidMesh("mesh has no vertices".into()))?;
    let unit = Aabb {
        min: Vec3::repeat(-0.5),
        max: Vec3::repeat(0.5),
    };
    if !unit.contains_aabb(&bounds, 1e-9) {
        return Err(Error::InvalidMesh(format!(
            "local mesh bounds {:?}..{:?} exceed the unit box",
            bounds.min.as_slice(),
            bounds.max.as_slice()
        )));
    }
    let extents = bounds.extents();
    let scale = (0..3)
        .filter(|&i| extents[i] > 0.0)
        .map(|i| 2.0 * prim.scale[i] / extents[i])
        .fold(f64::INFINITY, f64::min);
    if !scale.is_finite() {
        return Err(Error::InvalidMesh("mesh has zero extent".into()));
    }
    let center = bounds.center();
    Ok(TriMesh {
        vertices: mesh_local
            .vertices
            .iter()
            .map(|v| prim.pose.transform_point(&((v - center) * scale)))
            .collect(),
        normals: mesh_local
            .normals
            .iter()
            .map(|n| prim.pose.transform_vector(n))
            .collect(),
        triangles: mesh_local.triangles.clone(),
        vertex_colors: mesh_local.vertex_colors.clone(),
    })
}

/// Bounding-box center and the radius of the enclosing sphere around it.
pub fn bounding_sphere(mesh: &TriMesh) -> Option<(Vec3, f64)> {
    let center = mesh.bounds()?.center();
    let radius = mesh.vertices.iter().map(|v| (v - center).norm()).fold(0.0, f64::max);
    Some((center, radius))
}

/// Camera-space planes of a pinhole frustum, normals pointing inward.
#[derive(Debug, Clone, Copy)]
pub struct Frustum {
    planes: [(Vec3, f64); 6],
}

impl Frustum {
    pub fn new(k: &CameraIntrinsics, near: f64, far: f64) -> Self {
        let (w, h) = (k.width as f64, k.height as f64);
        let side = |n: Vec3| (n.normalize(), 0.0);
        Frustum {
            planes: [
                (Vec3::new(0.0, 0.0, -1.0), -near),
                (Vec3::new(0.0, 0.0, 1.0), far),
                side(Vec3::new(k.fx, 0.0, -k.cx)),
                side(Vec3::new(-k.fx, 0.0, -(w - k.cx))),
                side(Vec3::new(0.0, -k.fy, -k.cy)),
                side(Vec3::new(0.0, k.fy, -(h - k.cy))),
            ],
        }
    }

    /// Conservative sphere test: rejects only spheres entirely outside one
    /// plane.
    pub fn intersects_sphere(&self, center_cam: &Vec3, radius: f64) -> bool {
        self.planes.iter().all(|(n, d)| n.dot(center_cam) + d >= -radius)
    }
}

/// Frames whose view frustum intersects the sphere.
pub fn frustum_frames(ds: &NerfDataset, centroid: &Vec3, bound_radius: f64, near: f64, far: f64) -> Vec<usize> {
    let frustum = Frustum::new(&ds.intrinsics, near, far);
    ds.views()
        .enumerate()
        .filter(|(_, view)| frustum.intersects_sphere(&view.world_to_camera(centroid), bound_radius))
        .map(|(i, _)| i)
        .collect()
}

/// Dataset frame that looks most directly at `target`: smallest pose distance
/// between the frame and a camera at the same spot looking at the target.
/// Frames that see the target inside their image are preferred.
pub fn stylize_view_frame(ds: &NerfDataset, target: &Vec3) -> Option<usize> {
    let (w, h) = (ds.intrinsics.width as f64, ds.intrinsics.height as f64);
    let mut best: Option<(bool, f64, usize)> = None;
    for (i, view) in ds.views().enumerate() {
        let Ok(ideal) = look_at_pose(&view.pose.translation, target, &Vec3::y()) else {
            continue;
        };
        let visible = project_point(&view, target).is_some_and(|(u, v)| (0.0..w).contains(&u) && (0.0..h).contains(&v));
        let d = pose_distance(&view.pose, &ideal, 1.0);
        let better = match best {
            None => true,
            Some((bv, bd, _)) => (visible && !bv) || (visible == bv && d < bd),
        };
        if better {
            best = Some((visible, d, i));
        }
    }
    best.map(|(_, _, i)| i)
}

fn worker_pool(concurrency: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(concurrency.max(1))
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))
}

/// Runs the full pipeline for one object.
pub fn insert_object(
    scene: &SceneState,
    ds: &NerfDataset,
    spec: &ObjectSpec,
    backends: &Backends,
    params: &PipelineParams,
    hooks: &mut dyn PipelineHooks,
) -> Result<InsertOutcome> {
    spec.validate()?;
    if scene.contains(&spec.name) {
        return Err(Error::InvalidSpec(format!("object `{}` already inserted", spec.name)));
    }
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    params.grid.validate()?;
    let object_index = scene.inserted.len();
    let started = Instant::now();
    let pool = worker_pool(params.concurrency)?;
    let mut warnings = Vec::new();
    let resume = hooks.resume(object_index);

    // 1. Stylize a single view of the primitive over the scene.
    hooks.stage(object_index, Stage::Stylize);
    let stylize_frame = stylize_view_frame(ds, &spec.primitive.pose.translation).ok_or(Error::EmptyDataset)?;
    let (stylized, stylize_seconds) = match resume.stylized {
        Some(done) => done,
        None => {
            let t = Instant::now();
            let view = ds.view(stylize_frame);
            let background = backends.render_scene(&RenderSceneRequest { view }, ds)?;
            let proxy = tessellate_primitive(&spec.primitive, params.tessellation_level);
            let render = render_meshes(&view, &[proxy], params.near, params.far)?;
            if render.covered_pixels() == 0 {
                warnings.push(format!(
                    "primitive `{}` is not visible from frame {stylize_frame}",
                    spec.name
                ));
            }
            let composite = composite_over(&background, &render)?;
            let stylized = backends.stylize(&StylizeRequest {
                image: composite,
                prompt: spec.prompt.clone(),
            })?;
            let secs = t.elapsed().as_secs_f64();
            hooks.stylized(object_index, &stylized, secs)?;
            (stylized, secs)
        }
    };

    // 2. Single-image mesh generation.
    hooks.stage(object_index, Stage::GenerateMesh);
    let (mesh_local, meshgen_seconds) = match resume.mesh_local {
        Some(done) => done,
        None => {
            let t = Instant::now();
            let mesh = backends.generate_mesh(&MeshGenRequest {
                image: stylized.clone(),
            })?;
            let secs = t.elapsed().as_secs_f64();
            hooks.mesh_generated(object_index, &mesh, secs)?;
            (mesh, secs)
        }
    };
    let integrate_start = Instant::now();

    // 3. Placement.
    let mesh = place_mesh(&mesh_local, &spec.primitive)?;
    let (centroid, bound_radius) = bounding_sphere(&mesh)
        .filter(|(_, r)| *r > 0.0)
        .ok_or_else(|| Error::InvalidMesh("placed mesh has zero radius".into()))?;

    // 4-6. Reference ring, condition renders with every mesh in the ledger,
    // grid assembly and editing.
    hooks.stage(object_index, Stage::ReferenceGrids);
    let mut all_meshes: Vec<TriMesh> = scene.meshes().cloned().collect();
    all_meshes.push(mesh.clone());
    let tile_k = ds.intrinsics.resized(params.tile_width, params.tile_height);
    let tile_views = select_reference_cameras(
        &centroid,
        bound_radius,
        params.grid.reference_count(),
        &tile_k,
        &params.ring,
    )?;
    let tiles: Vec<RenderOutput> = pool.install(|| {
        tile_views
            .par_iter()
            .map(|view| condition_tile(ds, view, &all_meshes, backends, params))
            .collect::<Result<_>>()
    })?;
    let grid = assemble_grid(&tiles, tile_views.clone(), params.grid)?;
    let edited = backends.edit_grid(&GridEditRequest::from_grid(&grid, &spec.prompt))?;

    // 7. Dataset update.
    hooks.stage(object_index, Stage::DatasetUpdate);
    let mut modified_frames = Vec::new();
    let dataset = match spec.strategy {
        Strategy::AddNewImages => {
            let (w, h) = ds.intrinsics.dimensions();
            let new_frames: Vec<(CameraView, RgbImage)> = grid
                .reference_tiles_of(&edited)?
                .iter()
                .zip(&tile_views)
                .map(|(tile, view)| (CameraView::new(ds.intrinsics, view.pose), imaging::upscale(tile, w, h)))
                .collect();
            add_frames(ds, object_index, &new_frames)?
        }
        Strategy::ModifyExisting => {
            // Frames added for earlier objects are never re-edited.
            let candidates: Vec<usize> = frustum_frames(ds, &centroid, bound_radius, params.near, params.far)
                .into_iter()
                .filter(|&i| i < scene.base_dataset_size.min(ds.len()))
                .collect();
            if candidates.is_empty() {
                let msg = format!("object `{}` is not inside any existing frame's frustum", spec.name);
                warn!("{msg}");
                warnings.push(msg);
            }
            let edits: Vec<Option<RgbImage>> = pool.install(|| {
                candidates
                    .par_iter()
                    .map(|&i| edit_existing_frame(ds, i, &grid, &all_meshes, &mesh, &spec.prompt, backends, params))
                    .collect::<Result<_>>()
            })?;
            let mut out = ds.clone();
            for (&i, edit) in candidates.iter().zip(edits) {
                if let Some(img) = edit {
                    let before = out.frames[i].image_hash();
                    out = replace_frame_image(&out, i, &img)?;
                    if out.frames[i].image_hash() != before {
                        modified_frames.push(i);
                    }
                }
            }
            out
        }
    };

    // 8-9. Ledger and timings.
    let mut next_scene = scene.clone();
    next_scene.inserted.push(InsertedObject {
        spec: spec.clone(),
        mesh,
        centroid,
        bound_radius,
    });
    let integrate_minutes = integrate_start.elapsed().as_secs_f64() / 60.0;
    let total_minutes = (stylize_seconds + meshgen_seconds) / 60.0 + integrate_minutes;
    let row = ReportRow {
        name: spec.name.clone(),
        stylize_seconds,
        meshgen_seconds,
        integrate_minutes,
        total_minutes,
    };
    info!(
        object = %spec.name,
        frames = dataset.len(),
        modified = modified_frames.len(),
        elapsed = ?started.elapsed(),
        "object inserted"
    );
    hooks.stage(object_index, Stage::Done);
    let outcome = InsertOutcome {
        scene: next_scene,
        dataset,
        row,
        grid,
        stylize_frame,
        stylized,
        modified_frames,
        warnings,
    };
    hooks.object_completed(&outcome)?;
    Ok(outcome)
}

/// Condition tile for one reference view: every ledger mesh rendered at tile
/// resolution over the scene background.
fn condition_tile(
    ds: &NerfDataset,
    tile_view: &CameraView,
    meshes: &[TriMesh],
    backends: &Backends,
    params: &PipelineParams,
) -> Result<RenderOutput> {
    let render = render_meshes(tile_view, meshes, params.near, params.far)?;
    let full_view = CameraView::new(ds.intrinsics, tile_view.pose);
    let background = backends.render_scene(&RenderSceneRequest { view: full_view }, ds)?;
    let background = imaging::downscale(&background, params.tile_width, params.tile_height);
    Ok(RenderOutput {
        color: composite_over(&background, &render)?,
        depth: render.depth,
        mask: render.mask,
    })
}

/// Strategy 2 for one frame: the frame (with the object composited in) goes
/// into the blank slot, the editor fills it, and the edited slot is pasted
/// back wherever the new object is the front-most surface. `None` when the
/// object is not visible in the frame.
#[allow(clippy::too_many_arguments)]
fn edit_existing_frame(
    ds: &NerfDataset,
    index: usize,
    grid: &ReferenceGrid,
    all_meshes: &[TriMesh],
    new_mesh: &TriMesh,
    prompt: &str,
    backends: &Backends,
    params: &PipelineParams,
) -> Result<Option<RgbImage>> {
    let view = ds.view(index);
    let (w, h) = ds.intrinsics.dimensions();
    let full = render_meshes(&view, all_meshes, params.near, params.far)?;
    let alone = render_meshes(&view, std::slice::from_ref(new_mesh), params.near, params.far)?;
    let front = GrayImage::from_fn(w, h, |x, y| {
        let a = alone.depth.get_pixel(x, y).0[0];
        let f = full.depth.get_pixel(x, y).0[0];
        Luma([if a > 0.0 && a <= f { MASK_ON } else { 0 }])
    });
    if front.pixels().all(|p| p.0[0] == 0) {
        return Ok(None);
    }
    let frame = ds.image(index)?;
    let composite = composite_over(&frame, &full)?;
    let (tw, th) = (grid.tile_width, grid.tile_height);
    let blank = RenderOutput {
        color: imaging::downscale(&composite, tw, th),
        depth: image::imageops::resize(&full.depth, tw, th, image::imageops::FilterType::Nearest),
        mask: imaging::resize_mask(&full.mask, tw, th),
    };
    let request_grid = grid.with_blank_content(&blank)?;
    let edited = backends.edit_grid(&GridEditRequest::from_grid(&request_grid, prompt))?;
    let filled = imaging::upscale(&grid.blank_tile_of(&edited), w, h);
    let overlay = RenderOutput {
        color: filled,
        depth: full.depth,
        mask: front,
    };
    Ok(Some(composite_over(&frame, &overlay)?))
}

pub struct InsertManyOutcome {
    pub scene: SceneState,
    pub dataset: NerfDataset,
    pub report: PipelineReport,
    pub outcomes: Vec<InsertOutcome>,
}

/// Inserts `specs` left to right, each conditioned on all earlier objects.
/// Stops at the first failure; `hooks.object_completed` has already seen
/// every object that finished.
pub fn insert_objects(
    scene: &SceneState,
    ds: &NerfDataset,
    specs: &[ObjectSpec],
    backends: &Backends,
    params: &PipelineParams,
    hooks: &mut dyn PipelineHooks,
) -> Result<InsertManyOutcome> {
    validate_batch(scene, specs)?;
    let mut scene = scene.clone();
    let mut dataset = ds.clone();
    let mut report = PipelineReport::default();
    let mut outcomes = Vec::with_capacity(specs.len());
    for spec in specs {
        let outcome = insert_object(&scene, &dataset, spec, backends, params, hooks)?;
        scene = outcome.scene.clone();
        dataset = outcome.dataset.clone();
        report.rows.push(outcome.row.clone());
        outcomes.push(outcome);
    }
    Ok(InsertManyOutcome {
        scene,
        dataset,
        report,
        outcomes,
    })
}

pub fn validate_batch(scene: &SceneState, specs: &[ObjectSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::InvalidSpec("no objects queued".into()));
    }
    let mut names = HashSet::new();
    for spec in specs {
        spec.validate()?;
        if !names.insert(spec.name.as_str()) || scene.contains(&spec.name) {
            return Err(Error::InvalidSpec(format!("duplicate object name `{}`", spec.name)));
        }
    }
    Ok(())
}

/// Frame `index` with every inserted mesh and every queued primitive drawn
/// over it.
pub fn preview_frame(
    ds: &NerfDataset,
    scene: &SceneState,
    queued: &[ObjectSpec],
    index: usize,
    params: &PipelineParams,
) -> Result<RgbImage> {
    let frame = ds.image(index)?;
    let mut meshes: Vec<TriMesh> = scene.meshes().cloned().collect();
    meshes.extend(
        queued
            .iter()
            .map(|s| tessellate_primitive(&s.primitive, params.tessellation_level)),
    );
    let render = render_meshes(&ds.view(index), &meshes, params.near, params.far)?;
    composite_over(&frame, &render)
}
