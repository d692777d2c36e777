use std::path::Path;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use image::RgbImage;
use primscene_client::{Client, ClientError};
use primscene_core::api::SceneStatus;
use primscene_core::backends::{BackendError, Backends, MockStylizer, StylizeRequest, Stylizer};
use primscene_core::config::{BackendEndpoints, Config};
use primscene_core::dataset::directory_digest;
use primscene_core::fixture::{demo_objects, synthetic_dataset, FixtureSpec};
use primscene_core::geometry::{tessellate_primitive, Pose, Primitive, PrimitiveKind, Vec3};
use primscene_core::imaging::decode_rgb;
use primscene_core::integration::{ObjectSpec, Strategy};
use primscene_core::jobs::SceneDir;
use primscene_core::raster::{render_meshes, MASK_ON};
use primscene_server::{spawn, stub::backend_router, AppState};

fn small_fixture() -> FixtureSpec {
    FixtureSpec {
        frames: 24,
        ..FixtureSpec::default()
    }
}

fn make_scene(root: &Path, id: &str) -> SceneDir {
    let ds = synthetic_dataset(&small_fixture(), ".").unwrap();
    SceneDir::create(root.join(id), &ds).unwrap()
}

fn config(root: &Path) -> Config {
    Config {
        scenes_root: root.to_path_buf(),
        ..Config::default()
    }
}

async fn serve(state: Arc<AppState>) -> Client {
    let (addr, _) = spawn(state, "127.0.0.1:0").await.unwrap();
    Client::new(format!("http://{addr}"))
}

fn sofa() -> ObjectSpec {
    demo_objects(Strategy::AddNewImages).remove(0)
}

fn status_of<T: std::fmt::Debug>(r: Result<T, ClientError>) -> u16 {
    r.expect_err("request should fail").status().expect("api error")
}

/// Stylizer that blocks until the gate opens, keeping a job running.
struct Gated {
    open: Mutex<bool>,
    cv: Condvar,
}

impl Gated {
    fn release(&self) {
        *self.open.lock().unwrap() = true;
        self.cv.notify_all();
    }
}

impl Stylizer for Gated {
    fn stylize(&self, req: &StylizeRequest) -> Result<RgbImage, BackendError> {
        let mut open = self.open.lock().unwrap();
        while !*open {
            open = self.cv.wait(open).unwrap();
        }
        MockStylizer.stylize(req)
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn unknown_scene_and_object_are_404() {
    let tmp = tempfile::tempdir().unwrap();
    make_scene(tmp.path(), "room");
    let client = serve(AppState::new(config(tmp.path()))).await;

    assert_eq!(status_of(client.scene("nowhere").await), 404);
    assert_eq!(status_of(client.frames("..").await), 404);
    assert_eq!(status_of(client.remove("room", "ghost").await), 404);
    assert_eq!(status_of(client.preview("room", 9999).await), 404);
    assert_eq!(client.current_job("room").await.unwrap(), None);
    assert_eq!(client.scenes().await.unwrap(), vec!["room".to_string()]);
}

#[tokio::test(flavor = "multi_thread")]
async fn invalid_specs_are_422_with_error_body() {
    let tmp = tempfile::tempdir().unwrap();
    make_scene(tmp.path(), "room");
    let client = serve(AppState::new(config(tmp.path()))).await;

    let mut flat = sofa();
    flat.primitive.scale = Vec3::new(0.5, 0.0, 0.5);
    let err = client.place("room", &flat).await.unwrap_err();
    assert_eq!(err.status(), Some(422));

    let mut unnamed = sofa();
    unnamed.name = " ".into();
    assert_eq!(status_of(client.place("room", &unnamed).await), 422);

    let raw = reqwest::Client::new()
        .post(format!("{}/scenes/room/objects", client.base_url()))
        .body("{not json")
        .send()
        .await
        .unwrap();
    assert_eq!(raw.status().as_u16(), 422);
    let body: serde_json::Value = raw.json().await.unwrap();
    assert_eq!(body["error"]["code"], "invalid_spec");

    let err = client.run("room").await.unwrap_err();
    assert_eq!(err.status(), Some(422));
    assert_eq!(err.code(), Some("no_objects_queued"));
}

#[tokio::test(flavor = "multi_thread")]
async fn mutations_conflict_while_a_job_runs() {
    let tmp = tempfile::tempdir().unwrap();
    make_scene(tmp.path(), "room");
    let gate = Arc::new(Gated {
        open: Mutex::new(false),
        cv: Condvar::new(),
    });
    let backends = Backends {
        stylizer: gate.clone(),
        ..Backends::mock()
    };
    let client = serve(AppState::with_backends(config(tmp.path()), backends)).await;

    client.place("room", &sofa()).await.unwrap();
    let accepted = client.run("room").await.unwrap();
    assert_eq!(accepted.job_id, "job-1");

    assert_eq!(status_of(client.run("room").await), 409);
    let mut lamp = demo_objects(Strategy::AddNewImages).remove(1);
    assert_eq!(status_of(client.place("room", &lamp).await), 409);
    assert_eq!(status_of(client.remove("room", "sofa").await), 409);

    let job = client.current_job("room").await.unwrap().unwrap();
    assert!(matches!(job.status, SceneStatus::Running { .. }));
    assert_eq!(client.scene("room").await.unwrap().frames, 24);

    gate.release();
    let done = client.wait_for_job("room", Duration::from_millis(20)).await.unwrap();
    assert_eq!(done.status, SceneStatus::Done);
    assert_eq!(done.progress, 1.0);
    assert_eq!(client.scene("room").await.unwrap().frames, 32);

    lamp.name = "lamp".into();
    client.place("room", &lamp).await.unwrap();
    client.remove("room", "lamp").await.unwrap();
    assert!(client.scene("room").await.unwrap().queue.is_empty());
}

#[tokio::test(flavor = "multi_thread")]
async fn preview_differs_from_frame_exactly_on_the_primitive_mask() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = make_scene(tmp.path(), "room");
    let cfg = config(tmp.path());
    let params = cfg.pipeline_params();
    let client = serve(AppState::new(cfg)).await;

    let view = 0;
    let bare = decode_rgb(&client.preview("room", view).await.unwrap(), "preview").unwrap();
    let ds = scene.load_dataset().unwrap();
    let raw = ds.image(view).unwrap();
    assert_eq!(bare, raw, "preview with nothing placed is the raw frame");

    // A bright box straight in front of the first camera.
    let cam = ds.frames[view].transform;
    let ahead = cam.transform_point(&Vec3::new(0.0, 0.0, -2.0));
    let spec = ObjectSpec {
        name: "marker".into(),
        primitive: Primitive::new(PrimitiveKind::Box, Pose::from_translation(ahead), Vec3::repeat(0.3)),
        prompt: "a white cube".into(),
        strategy: Strategy::AddNewImages,
    };
    client.place("room", &spec).await.unwrap();
    let preview = decode_rgb(&client.preview("room", view).await.unwrap(), "preview").unwrap();

    let mesh = tessellate_primitive(&spec.primitive, params.tessellation_level);
    let oracle = render_meshes(&ds.view(view), &[mesh], params.near, params.far).unwrap();
    let mut covered = 0;
    for (x, y, m) in oracle.mask.enumerate_pixels() {
        if m.0[0] == MASK_ON {
            covered += 1;
            assert_eq!(preview.get_pixel(x, y), oracle.color.get_pixel(x, y));
        } else {
            assert_eq!(
                preview.get_pixel(x, y),
                raw.get_pixel(x, y),
                "pixel ({x}, {y}) outside the mask"
            );
        }
    }
    assert!(covered > 100, "marker covers {covered} pixels");
    let differing = preview.pixels().zip(raw.pixels()).filter(|(a, b)| a != b).count();
    assert!(differing > 0 && differing <= covered);
}

#[tokio::test(flavor = "multi_thread")]
async fn reads_are_repeatable_and_do_not_touch_the_scene() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = make_scene(tmp.path(), "room");
    let client = serve(AppState::new(config(tmp.path()))).await;
    client.place("room", &sofa()).await.unwrap();
    client.run("room").await.unwrap();
    client.wait_for_job("room", Duration::from_millis(20)).await.unwrap();

    let before = directory_digest(scene.root()).unwrap();
    let first = (
        client.frames("room").await.unwrap(),
        client.report_csv("room").await.unwrap(),
        client.preview("room", 3).await.unwrap(),
    );
    for _ in 0..3 {
        let summary = client.scene("room").await.unwrap();
        assert_eq!(summary.frames, 32);
        assert_eq!(summary.inserted.len(), 1);
        assert_eq!(client.frames("room").await.unwrap(), first.0);
        assert_eq!(client.report_csv("room").await.unwrap(), first.1);
        assert_eq!(client.preview("room", 3).await.unwrap(), first.2);
        client.current_job("room").await.unwrap().unwrap();
    }
    assert_eq!(directory_digest(scene.root()).unwrap(), before);
    assert_eq!(first.0.frames.len(), 32);
    assert_eq!(first.0.frames[31].index, 31);
}

#[tokio::test(flavor = "multi_thread")]
async fn pipeline_runs_against_backends_over_http() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = make_scene(tmp.path(), "room");
    let ds = Arc::new(scene.load_dataset().unwrap());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let backend_url = format!("http://{}", listener.local_addr().unwrap());
    tokio::spawn(async move {
        axum::serve(listener, backend_router(Backends::mock(), ds))
            .await
            .unwrap();
    });

    let cfg = Config {
        backends: BackendEndpoints::all(&backend_url),
        ..config(tmp.path())
    };
    let client = serve(AppState::new(cfg)).await;
    let mut lamp = demo_objects(Strategy::ModifyExisting).remove(1);
    lamp.name = "lamp".into();
    client.place("room", &sofa()).await.unwrap();
    client.place("room", &lamp).await.unwrap();
    client.run("room").await.unwrap();
    let done = client.wait_for_job("room", Duration::from_millis(20)).await.unwrap();
    assert_eq!(done.status, SceneStatus::Done, "{done:?}");
    let summary = client.scene("room").await.unwrap();
    assert_eq!(summary.frames, 32);
    assert_eq!(summary.inserted.len(), 2);
    assert_eq!(client.report("room").await.unwrap().rows.len(), 2);
}

#[tokio::test(flavor = "multi_thread")]
async fn unreachable_backend_fails_the_job_and_keeps_the_queue() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = make_scene(tmp.path(), "room");
    let mut cfg = config(tmp.path());
    cfg.backends.stylize = "http://127.0.0.1:9".into();
    cfg.retry.attempts = 1;
    let client = serve(AppState::new(cfg)).await;
    client.place("room", &sofa()).await.unwrap();
    let before = directory_digest(scene.dataset_dir()).unwrap();

    client.run("room").await.unwrap();
    let done = client.wait_for_job("room", Duration::from_millis(20)).await.unwrap();
    assert!(matches!(done.status, SceneStatus::Failed { .. }), "{done:?}");
    assert_eq!(directory_digest(scene.dataset_dir()).unwrap(), before);
    assert_eq!(client.scene("room").await.unwrap().queue.len(), 1);
}
