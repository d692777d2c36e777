//! Acceptance gate: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines are always printed.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use image::{Luma, Rgb, RgbImage};
use primscene_client::Client;
use primscene_core::api::SceneStatus;
use primscene_core::backends::{
    BackendError, Backends, GridEditRequest, GridEditor, MeshGenRequest, MeshGenerator, MockGridEditor,
    MockMeshGenerator, MockSceneRenderer, MockStylizer, RenderSceneRequest, SceneRenderer, StylizeRequest, Stylizer,
};
use primscene_core::config::Config;
use primscene_core::dataset::{directory_digest, load_dataset, save_dataset, NerfDataset};
use primscene_core::fixture::{demo_objects, synthetic_dataset, FixtureSpec};
use primscene_core::geometry::{
    project_point, tessellate_primitive, CameraIntrinsics, CameraView, Pose, Primitive, PrimitiveKind, TriMesh, Vec3,
};
use primscene_core::imaging::{DepthImage, GrayImage};
use primscene_core::integration::{frustum_frames, insert_object, NoHooks, SceneState, Strategy};
use primscene_core::jobs::{run_scene, SceneDir};
use primscene_core::raster::{mask_union, render_meshes, RenderOutput};
use primscene_core::refgrid::{
    assemble_grid, select_reference_cameras, split_grid, GridShape, ReferenceGrid, RingParams,
};
use primscene_core::Error;
use primscene_server::AppState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fixture() -> NerfDataset {
    synthetic_dataset(&FixtureSpec::default(), ".").expect("fixture builds")
}

fn params() -> primscene_core::integration::PipelineParams {
    Config::default().pipeline_params()
}

fn dataset_fidelity() -> Outcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (first, second) = (tmp.path().join("a"), tmp.path().join("b"));
    let ds = fixture();
    save_dataset(&ds, &first).map_err(|e| e.to_string())?;
    let loaded = load_dataset(&first).map_err(|e| e.to_string())?;
    save_dataset(&loaded, &second).map_err(|e| e.to_string())?;
    let reloaded = load_dataset(&second).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();

    ensure(ds.len() == 303 && reloaded.len() == 303, || {
        format!("frame count {}", reloaded.len())
    })?;
    let mut worst_pose = 0.0f64;
    for (a, b) in ds.frames.iter().zip(&reloaded.frames) {
        ensure(a.file_path == b.file_path, || {
            format!("path {} vs {}", a.file_path, b.file_path)
        })?;
        ensure(a.image_bytes() == b.image_bytes(), || {
            format!("{} bytes differ", a.file_path)
        })?;
        let on_disk = std::fs::read(second.join(&b.file_path)).map_err(|e| e.to_string())?;
        ensure(on_disk == a.image_bytes(), || {
            format!("{} differs on disk", a.file_path)
        })?;
        worst_pose = worst_pose.max((a.transform.to_matrix() - b.transform.to_matrix()).amax());
    }
    ensure(worst_pose <= 1e-9, || format!("pose error {worst_pose:e}"))?;
    ensure(ds.intrinsics == reloaded.intrinsics, || "intrinsics changed".into())?;
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!("303 frames, max pose error {worst_pose:e}, {elapsed:.2?}"))
}

fn rasterizer_oracle() -> Outcome {
    let f = 256.0;
    let k = CameraIntrinsics::new(f, f, 128.0, 128.0, 256, 256).map_err(|e| e.to_string())?;
    let view = CameraView::new(k, Pose::identity());
    let (r, d) = (1.0, 4.0);
    let sphere = tessellate_primitive(
        &Primitive::new(
            PrimitiveKind::Sphere,
            Pose::from_translation(Vec3::new(0.0, 0.0, -d)),
            Vec3::repeat(r),
        ),
        64,
    );
    let start = Instant::now();
    let out = render_meshes(&view, &[sphere], 0.01, 100.0).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();

    // Ray through the center of pixel (128, 128) against the exact sphere.
    let dir = Vec3::new((128.5 - k.cx) / f, -(128.5 - k.cy) / f, -1.0);
    let center = Vec3::new(0.0, 0.0, -d);
    let (a, b, c) = (dir.dot(&dir), -2.0 * dir.dot(&center), center.dot(&center) - r * r);
    let t = (-b - (b * b - 4.0 * a * c).sqrt()) / (2.0 * a);
    let expected_depth = t; // dir.z = -1, so depth along -z equals t.
    let got = out.depth.get_pixel(128, 128).0[0] as f64;
    let depth_err = (got - expected_depth).abs();
    ensure(depth_err <= 5e-3, || format!("center depth {got} vs {expected_depth}"))?;

    let disk_radius = f * r / (d * d - r * r).sqrt();
    let disk_area = std::f64::consts::PI * disk_radius * disk_radius;
    let covered = out.covered_pixels() as f64;
    let area_err = (covered - disk_area).abs() / disk_area;
    ensure(area_err <= 0.02, || {
        format!("silhouette {covered} px vs disk {disk_area:.1}")
    })?;
    ensure(elapsed < Duration::from_secs(1), || format!("render took {elapsed:?}"))?;
    Ok(format!(
        "depth error {depth_err:.2e}, silhouette error {:.3}%, render {elapsed:.2?}",
        area_err * 100.0
    ))
}

fn random_tile(rng: &mut ChaCha8Rng, w: u32, h: u32) -> RenderOutput {
    RenderOutput {
        color: RgbImage::from_fn(w, h, |_, _| Rgb([rng.random(), rng.random(), rng.random()])),
        depth: DepthImage::from_fn(w, h, |_, _| Luma([rng.random_range(0.0f32..50.0)])),
        mask: GrayImage::from_fn(w, h, |_, _| Luma([if rng.random() { 255 } else { 0 }])),
    }
}

fn grid_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let dummy = CameraView::new(
        CameraIntrinsics::new(1.0, 1.0, 0.5, 0.5, 1, 1).map_err(|e| e.to_string())?,
        Pose::identity(),
    );
    for set in 0..100 {
        let (rows, cols) = loop {
            let rc = (rng.random_range(1..=4u32), rng.random_range(1..=4u32));
            if rc.0 * rc.1 >= 2 {
                break rc;
            }
        };
        let shape = GridShape {
            rows,
            cols,
            blank_index: rng.random_range(0..rows * cols),
        };
        let (tw, th) = (rng.random_range(1..=40u32), rng.random_range(1..=40u32));
        let tiles: Vec<RenderOutput> = (0..shape.reference_count())
            .map(|_| random_tile(&mut rng, tw, th))
            .collect();
        let grid = assemble_grid(&tiles, vec![dummy; tiles.len()], shape).map_err(|e| e.to_string())?;
        let colors = split_grid(&grid.color, rows, cols, tw, th).map_err(|e| e.to_string())?;
        let depths = split_grid(&grid.depth, rows, cols, tw, th).map_err(|e| e.to_string())?;
        let masks = split_grid(&grid.mask, rows, cols, tw, th).map_err(|e| e.to_string())?;
        for (i, tile) in tiles.iter().enumerate() {
            let s = shape.slot_of_tile(i);
            ensure(colors[s] == tile.color, || format!("set {set}: color tile {i} differs"))?;
            ensure(
                depths[s]
                    .as_raw()
                    .iter()
                    .map(|v| v.to_bits())
                    .eq(tile.depth.as_raw().iter().map(|v| v.to_bits())),
                || format!("set {set}: depth tile {i} differs"),
            )?;
            ensure(masks[s] == tile.mask, || format!("set {set}: mask tile {i} differs"))?;
        }
        let blank = shape.blank_index as usize;
        ensure(colors[blank].pixels().all(|p| p.0 == [128; 3]), || {
            format!("set {set}: blank not mid-gray")
        })?;
        let rebuilt: Vec<RenderOutput> = (0..tiles.len())
            .map(|i| {
                let s = shape.slot_of_tile(i);
                RenderOutput {
                    color: colors[s].clone(),
                    depth: depths[s].clone(),
                    mask: masks[s].clone(),
                }
            })
            .collect();
        let again = assemble_grid(&rebuilt, vec![dummy; tiles.len()], shape).map_err(|e| e.to_string())?;
        ensure(again == grid, || format!("set {set}: reassembled grid differs"))?;
    }

    let k = CameraIntrinsics::new(300.0, 280.0, 127.3, 131.9, 256, 256).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let centroid = Vec3::new(
            rng.random_range(-5.0..5.0),
            rng.random_range(-1.0..3.0),
            rng.random_range(-5.0..5.0),
        );
        let radius = rng.random_range(0.1..2.0);
        let views =
            select_reference_cameras(&centroid, radius, 8, &k, &RingParams::default()).map_err(|e| e.to_string())?;
        ensure(views.len() == 8, || "expected 8 reference views".into())?;
        for v in &views {
            let (u, w) = project_point(v, &centroid).ok_or("centroid behind a reference camera")?;
            worst = worst.max((u - k.cx).abs()).max((w - k.cy).abs());
        }
    }
    ensure(worst <= 1e-4, || format!("centroid reprojection error {worst:e} px"))?;
    Ok(format!(
        "100 tile sets exact, centroid reprojection error {worst:.1e} px"
    ))
}

/// Samples 1000 points of the ball and reports whether any lands inside
/// the image between the clip planes.
fn oracle_sees(view: &CameraView, c: &Vec3, r: f64, near: f64, far: f64, rng: &mut ChaCha8Rng) -> bool {
    let (w, h) = (view.intrinsics.width as f64, view.intrinsics.height as f64);
    (0..1000).any(|i| {
        let p = if i == 0 {
            *c
        } else {
            let dir = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .try_normalize(1e-12)
            .unwrap_or_else(Vec3::x);
            let scale = if i % 2 == 0 { 1.0 } else { rng.random::<f64>().cbrt() };
            c + dir * (r * scale)
        };
        let depth = -view.world_to_camera(&p).z;
        depth > near
            && depth < far
            && project_point(view, &p).is_some_and(|(u, v)| (0.0..w).contains(&u) && (0.0..h).contains(&v))
    })
}

fn strategy_conservation() -> Outcome {
    let ds = fixture();
    let p = params();
    let scene = SceneState::new(ds.len());
    let mut sofa = demo_objects(Strategy::AddNewImages).remove(0);
    let added = insert_object(&scene, &ds, &sofa, &Backends::mock(), &p, &mut NoHooks).map_err(|e| e.to_string())?;
    ensure(added.dataset.len() == 311, || {
        format!("AddNewImages gave {} frames", added.dataset.len())
    })?;
    ensure(added.dataset.image_hashes()[..303] == ds.image_hashes()[..], || {
        "original frames changed".into()
    })?;
    ensure(
        added.dataset.frames[..303]
            .iter()
            .zip(&ds.frames)
            .all(|(a, b)| a.transform == b.transform),
        || "original poses changed".into(),
    )?;

    sofa.strategy = Strategy::ModifyExisting;
    let modified = insert_object(&scene, &ds, &sofa, &Backends::mock(), &p, &mut NoHooks).map_err(|e| e.to_string())?;
    ensure(modified.dataset.len() == 303, || {
        format!("ModifyExisting gave {} frames", modified.dataset.len())
    })?;
    let obj = &modified.scene.inserted[0];
    let in_frustum = frustum_frames(&ds, &obj.centroid, obj.bound_radius, p.near, p.far);
    let before = ds.image_hashes();
    let after = modified.dataset.image_hashes();
    let changed: Vec<usize> = (0..303).filter(|&i| before[i] != after[i]).collect();
    ensure(!changed.is_empty(), || "ModifyExisting changed no frame".into())?;
    ensure(changed.iter().all(|i| in_frustum.contains(i)), || {
        "a frame outside the frustum set changed".into()
    })?;
    ensure(changed == modified.modified_frames, || {
        "reported modified set differs from actual".into()
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut oracle_visible = 0;
    for (i, view) in ds.views().enumerate() {
        if oracle_sees(&view, &obj.centroid, obj.bound_radius, p.near, p.far, &mut rng) {
            oracle_visible += 1;
            ensure(in_frustum.contains(&i), || {
                format!("frame {i} sees the object but was excluded")
            })?;
        }
    }
    Ok(format!(
        "311 frames with originals intact; {} modified of {} in frustum ({} oracle-visible)",
        changed.len(),
        in_frustum.len(),
        oracle_visible
    ))
}

fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .expect("tokio runtime")
}

async fn start_service(root: &Path) -> Client {
    let cfg = Config {
        scenes_root: root.to_path_buf(),
        ..Config::default()
    };
    let (addr, _handle) = primscene_server::spawn(AppState::new(cfg), "127.0.0.1:0")
        .await
        .expect("bind");
    Client::new(format!("http://{addr}"))
}

async fn wait_done(client: &Client, id: &str) -> Result<(), String> {
    let view = client
        .wait_for_job(id, Duration::from_millis(50))
        .await
        .map_err(|e| e.to_string())?;
    match view.status {
        SceneStatus::Done => Ok(()),
        other => Err(format!("scene {id} ended as {other:?}")),
    }
}

/// Checks that every saved condition mask is the union of the individual
/// renders of all meshes inserted up to that object.
fn masks_are_unions(scene: &SceneDir) -> Result<usize, String> {
    let file = scene.load_scene().map_err(|e| e.to_string())?;
    let p = params();
    let mut tiles_checked = 0;
    for k in 0..file.state.inserted.len() {
        let grid = ReferenceGrid::load(scene.root().join(format!("grids/obj{k}"))).map_err(|e| e.to_string())?;
        let masks = split_grid(
            &grid.mask,
            grid.shape.rows,
            grid.shape.cols,
            grid.tile_width,
            grid.tile_height,
        )
        .map_err(|e| e.to_string())?;
        let meshes: Vec<&TriMesh> = file.state.inserted[..=k].iter().map(|o| &o.mesh).collect();
        for (t, view) in grid.views.iter().enumerate() {
            let individual: Vec<GrayImage> = meshes
                .iter()
                .map(|m| render_meshes(view, std::slice::from_ref(*m), p.near, p.far).map(|o| o.mask))
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?;
            let union = mask_union(&individual, grid.tile_width, grid.tile_height);
            ensure(masks[grid.shape.slot_of_tile(t)] == union, || {
                format!("object {k} tile {t} mask is not the union")
            })?;
            tiles_checked += 1;
        }
        if k > 0 {
            let prior: usize = grid
                .views
                .iter()
                .map(|v| {
                    render_meshes(v, &[meshes[0].clone()], p.near, p.far)
                        .map(|o| o.covered_pixels())
                        .unwrap_or(0)
                })
                .sum();
            ensure(prior > 0, || {
                format!("object {k}: first object never visible in its grid")
            })?;
        }
    }
    Ok(tiles_checked)
}

fn iterative_run() -> Outcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ds = fixture();
    let scenes: Vec<SceneDir> = ["first", "second"]
        .iter()
        .map(|id| SceneDir::create(tmp.path().join(id), &ds))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let rt = runtime();
    let (csv, summary) = rt.block_on(async {
        let client = start_service(tmp.path()).await;
        let mut last = None;
        for id in ["first", "second"] {
            for spec in demo_objects(Strategy::AddNewImages) {
                client.place(id, &spec).await.map_err(|e| e.to_string())?;
            }
            client.run(id).await.map_err(|e| e.to_string())?;
            wait_done(&client, id).await?;
            let csv = client.report_csv(id).await.map_err(|e| e.to_string())?;
            let summary = client.scene(id).await.map_err(|e| e.to_string())?;
            last = Some((csv, summary));
        }
        Ok::<_, String>(last.expect("two scenes ran"))
    })?;

    ensure(summary.frames == 327, || {
        format!("{} frames after three objects", summary.frames)
    })?;
    ensure(summary.inserted.len() == 3, || {
        format!("ledger holds {}", summary.inserted.len())
    })?;
    let mut lines = csv.lines();
    ensure(
        lines.next() == Some("Object,Primitive-Stylization (s),Mesh Generation (s),SIGNeRF (min),Total (min)"),
        || format!("report header: {csv}"),
    )?;
    let names: Vec<&str> = lines.map(|l| l.split(',').next().unwrap_or("")).collect();
    ensure(names == ["sofa", "lamp", "bed"], || format!("report rows {names:?}"))?;
    let tiles = masks_are_unions(&scenes[1])?;
    let digests: Vec<String> = scenes
        .iter()
        .map(|s| directory_digest(s.dataset_dir()))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    ensure(digests[0] == digests[1], || {
        "two runs produced different datasets".into()
    })?;
    let ledgers: Vec<_> = scenes
        .iter()
        .map(|s| s.load_scene().map(|f| f.state))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    ensure(ledgers[0] == ledgers[1], || {
        "two runs produced different ledgers".into()
    })?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(120), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "327 frames, 3 report rows, {tiles} condition masks checked, runs identical, {elapsed:.1?} for two runs"
    ))
}

#[derive(Debug, Clone, Copy)]
enum Fault {
    StylizeWider,
    StylizeTaller,
    StylizeEmpty,
    StylizeUnreachable,
    StylizeRejected,
    MeshEmpty,
    MeshDanglingIndex,
    MeshNan,
    MeshCollapsed,
    MeshMissingNormals,
    MeshColorOutOfRange,
    MeshNonUnitNormals,
    GridWider,
    GridTaller,
    GridSingleTile,
    GridHalf,
    GridGarbled,
    GridWrongAfterThreeCalls,
    RenderTransposed,
    RenderOnePixel,
}

struct Faulty {
    fault: Fault,
    grid_calls: AtomicUsize,
}

fn resized(img: &RgbImage, w: u32, h: u32) -> RgbImage {
    image::imageops::resize(img, w, h, image::imageops::FilterType::Nearest)
}

impl Stylizer for Faulty {
    fn stylize(&self, req: &StylizeRequest) -> Result<RgbImage, BackendError> {
        let ok = MockStylizer.stylize(req)?;
        let (w, h) = ok.dimensions();
        match self.fault {
            Fault::StylizeWider => Ok(resized(&ok, w + 1, h)),
            Fault::StylizeTaller => Ok(resized(&ok, w, h + 7)),
            Fault::StylizeEmpty => Ok(RgbImage::new(0, 0)),
            Fault::StylizeUnreachable => Err(BackendError::Unreachable {
                endpoint: "stylize".into(),
                attempts: 3,
                last_error: "connection refused".into(),
            }),
            Fault::StylizeRejected => Err(BackendError::Remote {
                status: 422,
                code: "nsfw".into(),
                message: "prompt rejected".into(),
            }),
            _ => Ok(ok),
        }
    }
}

impl MeshGenerator for Faulty {
    fn generate_mesh(&self, req: &MeshGenRequest) -> Result<TriMesh, BackendError> {
        let mut m = MockMeshGenerator.generate_mesh(req)?;
        match self.fault {
            Fault::MeshEmpty => {
                m = TriMesh {
                    vertices: vec![],
                    normals: vec![],
                    triangles: vec![],
                    vertex_colors: vec![],
                }
            }
            Fault::MeshDanglingIndex => m.triangles[3][1] = m.vertices.len() as u32 + 5,
            Fault::MeshNan => m.vertices[10].y = f64::NAN,
            Fault::MeshCollapsed => m.vertices.iter_mut().for_each(|v| *v = Vec3::new(0.1, 0.1, 0.1)),
            Fault::MeshMissingNormals => m.normals.truncate(3),
            Fault::MeshColorOutOfRange => m.vertex_colors[0] = [1.5, 0.0, -0.2],
            Fault::MeshNonUnitNormals => m.normals.iter_mut().for_each(|n| *n *= 3.0),
            _ => {}
        }
        Ok(m)
    }
}

impl GridEditor for Faulty {
    fn edit_grid(&self, req: &GridEditRequest) -> Result<RgbImage, BackendError> {
        let calls = self.grid_calls.fetch_add(1, Ordering::SeqCst);
        let ok = MockGridEditor.edit_grid(req)?;
        let (w, h) = ok.dimensions();
        match self.fault {
            Fault::GridWider => Ok(resized(&ok, w + 3, h)),
            Fault::GridTaller => Ok(resized(&ok, w, h + 1)),
            Fault::GridSingleTile => Ok(resized(&ok, req.tile_width, req.tile_height)),
            Fault::GridHalf => Ok(resized(&ok, w / 2, h / 2)),
            Fault::GridGarbled => Err(BackendError::Payload("PNG signature mismatch".into())),
            Fault::GridWrongAfterThreeCalls if calls >= 3 => Ok(resized(&ok, w, h - 1)),
            _ => Ok(ok),
        }
    }
}

impl SceneRenderer for Faulty {
    fn render_scene(&self, req: &RenderSceneRequest, ds: &NerfDataset) -> Result<RgbImage, BackendError> {
        let ok = MockSceneRenderer::default().render_scene(req, ds)?;
        let (w, h) = ok.dimensions();
        match self.fault {
            Fault::RenderTransposed => Ok(resized(&ok, h, w)),
            Fault::RenderOnePixel => Ok(RgbImage::new(1, 1)),
            _ => Ok(ok),
        }
    }
}

fn typed_as_expected(fault: Fault, err: &Error) -> bool {
    use Fault::*;
    match fault {
        StylizeWider
        | StylizeTaller
        | StylizeEmpty
        | GridWider
        | GridTaller
        | GridSingleTile
        | GridHalf
        | GridWrongAfterThreeCalls
        | RenderTransposed
        | RenderOnePixel => {
            matches!(err, Error::Backend(BackendError::DimensionViolation { .. }))
        }
        StylizeUnreachable => matches!(err, Error::Backend(BackendError::Unreachable { .. })),
        StylizeRejected => matches!(err, Error::Backend(BackendError::Remote { status: 422, .. })),
        GridGarbled => matches!(err, Error::Backend(BackendError::Payload(_))),
        MeshEmpty | MeshDanglingIndex | MeshNan | MeshMissingNormals | MeshColorOutOfRange | MeshNonUnitNormals => {
            matches!(err, Error::Backend(BackendError::InvalidMesh(_)))
        }
        MeshCollapsed => matches!(err, Error::InvalidMesh(_)),
    }
}

fn backend_contract() -> Outcome {
    use Fault::*;
    let faults = [
        StylizeWider,
        StylizeTaller,
        StylizeEmpty,
        StylizeUnreachable,
        StylizeRejected,
        MeshEmpty,
        MeshDanglingIndex,
        MeshNan,
        MeshCollapsed,
        MeshMissingNormals,
        MeshColorOutOfRange,
        MeshNonUnitNormals,
        GridWider,
        GridTaller,
        GridSingleTile,
        GridHalf,
        GridGarbled,
        GridWrongAfterThreeCalls,
        RenderTransposed,
        RenderOnePixel,
    ];
    let ds = fixture();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    for (i, fault) in faults.into_iter().enumerate() {
        let scene = SceneDir::create(tmp.path().join(format!("s{i}")), &ds).map_err(|e| e.to_string())?;
        // Alternate strategies so both dataset-update paths see faults.
        let strategy = if i % 2 == 0 {
            Strategy::AddNewImages
        } else {
            Strategy::ModifyExisting
        };
        let strategy = if matches!(fault, GridWrongAfterThreeCalls) {
            Strategy::ModifyExisting
        } else {
            strategy
        };
        for spec in demo_objects(strategy).into_iter().take(1) {
            scene.enqueue(spec).map_err(|e| e.to_string())?;
        }
        let before = directory_digest(scene.dataset_dir()).map_err(|e| e.to_string())?;
        let faulty = Arc::new(Faulty {
            fault,
            grid_calls: AtomicUsize::new(0),
        });
        let backends = Backends {
            stylizer: faulty.clone(),
            mesh_generator: faulty.clone(),
            grid_editor: faulty.clone(),
            scene_renderer: faulty,
        };
        match run_scene(&scene, &backends, &params(), &mut |_| {}) {
            Ok(_) => return Err(format!("{fault:?}: run succeeded")),
            Err(e) => ensure(typed_as_expected(fault, &e), || {
                format!("{fault:?}: unexpected error {e:?}")
            })?,
        }
        let after = directory_digest(scene.dataset_dir()).map_err(|e| e.to_string())?;
        ensure(before == after, || format!("{fault:?}: dataset changed"))?;
        let state = scene.load_scene().map_err(|e| e.to_string())?;
        ensure(state.state.inserted.is_empty() && state.queue.len() == 1, || {
            format!("{fault:?}: ledger changed")
        })?;
    }
    Ok(format!(
        "{} fault patterns rejected with typed errors, datasets untouched",
        faults.len()
    ))
}

fn service_safety() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ds = fixture();
    for id in ["single", "contended"] {
        SceneDir::create(tmp.path().join(id), &ds).map_err(|e| e.to_string())?;
    }
    let rt = runtime();
    let (accepted, conflicts, other) = rt.block_on(async {
        let client = start_service(tmp.path()).await;
        for id in ["single", "contended"] {
            for spec in demo_objects(Strategy::AddNewImages) {
                client.place(id, &spec).await.map_err(|e| e.to_string())?;
            }
        }
        client.run("single").await.map_err(|e| e.to_string())?;
        wait_done(&client, "single").await?;

        let mut set = tokio::task::JoinSet::new();
        for _ in 0..50 {
            let c = client.clone();
            set.spawn(async move { c.run("contended").await });
        }
        let (mut accepted, mut conflicts, mut other) = (0, 0, Vec::new());
        while let Some(res) = set.join_next().await {
            match res.map_err(|e| e.to_string())? {
                Ok(_) => accepted += 1,
                Err(e) if e.status() == Some(409) => conflicts += 1,
                Err(e) => other.push(e.to_string()),
            }
        }
        wait_done(&client, "contended").await?;
        Ok::<_, String>((accepted, conflicts, other))
    })?;
    ensure(accepted == 1 && conflicts == 49, || {
        format!("{accepted} accepted, {conflicts} conflicts, others {other:?}")
    })?;
    let single = directory_digest(tmp.path().join("single/dataset")).map_err(|e| e.to_string())?;
    let contended = directory_digest(tmp.path().join("contended/dataset")).map_err(|e| e.to_string())?;
    ensure(single == contended, || {
        "contended dataset differs from a single run".into()
    })?;
    Ok("1 accepted, 49 conflicts, dataset identical to a single run".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("dataset fidelity", dataset_fidelity),
        ("rasterizer oracle", rasterizer_oracle),
        ("grid round-trip", grid_round_trip),
        ("strategy conservation", strategy_conservation),
        ("iterative run", iterative_run),
        ("backend contract enforcement", backend_contract),
        ("service safety", service_safety),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail}) [{:.2?}]", i + 1, start.elapsed()),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({why}) [{:.2?}]", i + 1, start.elapsed());
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
