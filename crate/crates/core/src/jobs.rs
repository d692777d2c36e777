//! On-disk scenes and resumable pipeline jobs.
//!
//! ```text
//! <scene>/dataset/        transforms.json + images, swapped atomically
//! <scene>/scene.json      ledger and queued object specs
//! <scene>/job.json        last job: stage, artifacts, timings
//! <scene>/report.csv      one row per inserted object
//! <scene>/artifacts/      stylized views and generated meshes
//! <scene>/grids/objN/     condition grid sent to the editor
//! ```
//!
//! Only `dataset/` is touched by a dataset update, so its digest depends on
//! pixels and poses alone.

use std::fs;
use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};
use tracing::info;

use crate::backends::mesh_io::{parse_obj, write_obj};
use crate::backends::Backends;
use crate::dataset::{load_dataset, save_dataset, NerfDataset};
use crate::error::{Error, Result};
use crate::geometry::TriMesh;
use crate::imaging::{decode_rgb, encode_png};
use crate::integration::{
    insert_objects, validate_batch, InsertOutcome, ObjectSpec, PipelineHooks, PipelineParams, PipelineReport,
    ResumeArtifacts, SceneState, Stage,
};

pub const DATASET_DIR: &str = "dataset";
pub const SCENE_FILE: &str = "scene.json";
pub const JOB_FILE: &str = "job.json";
pub const REPORT_FILE: &str = "report.csv";
const ARTIFACTS_DIR: &str = "artifacts";
const GRIDS_DIR: &str = "grids";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SceneFile {
    pub state: SceneState,
    pub queue: Vec<ObjectSpec>,
    /// Number of jobs started so far; names the next job.
    pub runs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum JobStatus {
    Running,
    Failed { reason: String },
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobState {
    pub job_id: String,
    pub status: JobStatus,
    /// Ledger index of the object being worked on.
    pub object_index: usize,
    /// Objects of this job finished so far, and the job's total.
    pub completed: usize,
    pub total: usize,
    pub stage: Stage,
    pub stylized_path: Option<String>,
    pub mesh_path: Option<String>,
    pub stylize_seconds: Option<f64>,
    pub meshgen_seconds: Option<f64>,
}

impl JobState {
    fn new(job_id: String, object_index: usize, total: usize) -> Self {
        JobState {
            job_id,
            status: JobStatus::Running,
            object_index,
            completed: 0,
            total,
            stage: Stage::Stylize,
            stylized_path: None,
            mesh_path: None,
            stylize_seconds: None,
            meshgen_seconds: None,
        }
    }

    /// Fraction of the job finished, counting partial progress on the
    /// current object.
    pub fn progress(&self) -> f64 {
        if self.total == 0 || self.status == JobStatus::Done {
            return 1.0;
        }
        ((self.completed as f64 + self.stage.progress()) / self.total as f64).min(1.0)
    }
}

/// Handle to one scene directory.
#[derive(Debug, Clone)]
pub struct SceneDir {
    root: PathBuf,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Option<T>> {
    match fs::read_to_string(path) {
        Ok(text) => serde_json::from_str(&text).map(Some).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            field: String::new(),
            message: e.to_string(),
        }),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(path, e)),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_vec_pretty(value).map_err(|e| Error::Internal(e.to_string()))?;
    write_atomic(path, &text)
}

impl SceneDir {
    /// Opens an existing scene; the directory must contain `dataset/`.
    pub fn open(root: impl Into<PathBuf>) -> Result<SceneDir> {
        let root = root.into();
        let transforms = root.join(DATASET_DIR).join(crate::dataset::TRANSFORMS_FILE);
        if !transforms.is_file() {
            return Err(Error::io(
                &transforms,
                std::io::Error::new(std::io::ErrorKind::NotFound, "scene has no dataset"),
            ));
        }
        Ok(SceneDir { root })
    }

    /// Creates a scene around `ds`, copying its frames into `<root>/dataset`.
    pub fn create(root: impl Into<PathBuf>, ds: &NerfDataset) -> Result<SceneDir> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        save_dataset(ds, root.join(DATASET_DIR))?;
        let scene = SceneDir { root };
        scene.save_scene(&SceneFile {
            state: SceneState::new(ds.len()),
            ..SceneFile::default()
        })?;
        Ok(scene)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.root.join(DATASET_DIR)
    }

    pub fn load_dataset(&self) -> Result<NerfDataset> {
        load_dataset(self.dataset_dir())
    }

    /// Writes `ds` next to the live dataset, then swaps directories.
    pub fn replace_dataset(&self, ds: &NerfDataset) -> Result<()> {
        let live = self.dataset_dir();
        let staged = self.root.join("dataset.staged");
        let retired = self.root.join("dataset.retired");
        for stale in [&staged, &retired] {
            if stale.exists() {
                fs::remove_dir_all(stale).map_err(|e| Error::io(stale, e))?;
            }
        }
        save_dataset(ds, &staged)?;
        fs::rename(&live, &retired).map_err(|e| Error::io(&live, e))?;
        fs::rename(&staged, &live).map_err(|e| Error::io(&staged, e))?;
        fs::remove_dir_all(&retired).map_err(|e| Error::io(&retired, e))
    }

    /// Scene file, or a fresh one sized to the current dataset.
    pub fn load_scene(&self) -> Result<SceneFile> {
        match read_json(&self.root.join(SCENE_FILE))? {
            Some(s) => Ok(s),
            None => Ok(SceneFile {
                state: SceneState::new(self.load_dataset()?.len()),
                ..SceneFile::default()
            }),
        }
    }

    pub fn save_scene(&self, scene: &SceneFile) -> Result<()> {
        write_json(&self.root.join(SCENE_FILE), scene)
    }

    pub fn load_job(&self) -> Result<Option<JobState>> {
        read_json(&self.root.join(JOB_FILE))
    }

    pub fn save_job(&self, job: &JobState) -> Result<()> {
        write_json(&self.root.join(JOB_FILE), job)
    }

    pub fn load_report(&self) -> Result<PipelineReport> {
        let path = self.root.join(REPORT_FILE);
        match fs::read_to_string(&path) {
            Ok(text) => PipelineReport::from_csv(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(PipelineReport::default()),
            Err(e) => Err(Error::io(&path, e)),
        }
    }

    pub fn save_report(&self, report: &PipelineReport) -> Result<()> {
        write_atomic(&self.root.join(REPORT_FILE), report.to_csv().as_bytes())
    }

    /// Appends a spec to the queue after validating it against the ledger
    /// and the queue.
    pub fn enqueue(&self, spec: ObjectSpec) -> Result<SceneFile> {
        let mut scene = self.load_scene()?;
        spec.validate()?;
        if scene.state.contains(&spec.name) || scene.queue.iter().any(|q| q.name == spec.name) {
            return Err(Error::InvalidSpec(format!("object `{}` already exists", spec.name)));
        }
        scene.queue.push(spec);
        self.save_scene(&scene)?;
        Ok(scene)
    }

    /// Removes a queued spec; `Ok(false)` if no queued object has that name.
    pub fn dequeue(&self, name: &str) -> Result<bool> {
        let mut scene = self.load_scene()?;
        let before = scene.queue.len();
        scene.queue.retain(|s| s.name != name);
        if scene.queue.len() == before {
            return Ok(false);
        }
        self.save_scene(&scene)?;
        Ok(true)
    }

    fn artifact(&self, name: &str) -> PathBuf {
        self.root.join(ARTIFACTS_DIR).join(name)
    }

    fn resume_artifacts(&self, job: &JobState) -> ResumeArtifacts {
        let stylized = job.stylized_path.as_ref().zip(job.stylize_seconds).and_then(|(p, s)| {
            let bytes = fs::read(self.root.join(p)).ok()?;
            Some((decode_rgb(&bytes, p).ok()?, s))
        });
        let mesh_local = job.mesh_path.as_ref().zip(job.meshgen_seconds).and_then(|(p, s)| {
            let text = fs::read_to_string(self.root.join(p)).ok()?;
            Some((parse_obj(&text).ok()?, s))
        });
        // A generated mesh is only reused together with its stylized input.
        let mesh_local = mesh_local.filter(|_| stylized.is_some());
        ResumeArtifacts { stylized, mesh_local }
    }
}

/// Checkpointing hooks: artifacts, dataset, ledger and report are persisted
/// as each stage or object completes.
struct Checkpoint<'a> {
    scene_dir: &'a SceneDir,
    scene: SceneFile,
    job: JobState,
    report: PipelineReport,
    resume: Option<JobState>,
    on_progress: &'a mut dyn FnMut(&JobState),
}

impl Checkpoint<'_> {
    fn persist_job(&mut self) -> Result<()> {
        self.scene_dir.save_job(&self.job)?;
        (self.on_progress)(&self.job);
        Ok(())
    }
}

impl PipelineHooks for Checkpoint<'_> {
    fn stage(&mut self, object_index: usize, stage: Stage) {
        self.job.object_index = object_index;
        self.job.stage = stage;
        // Progress is advisory; a failed write shows up at the next checkpoint.
        let _ = self.persist_job();
    }

    fn resume(&mut self, object_index: usize) -> ResumeArtifacts {
        let artifacts = match self.resume.take() {
            Some(prev) if prev.object_index == object_index => self.scene_dir.resume_artifacts(&prev),
            _ => ResumeArtifacts::default(),
        };
        if artifacts.stylized.is_some() {
            info!(object_index, "resuming from saved artifacts");
        } else {
            self.job.stylized_path = None;
            self.job.stylize_seconds = None;
        }
        if artifacts.mesh_local.is_none() {
            self.job.mesh_path = None;
            self.job.meshgen_seconds = None;
        }
        artifacts
    }

    fn stylized(&mut self, object_index: usize, image: &RgbImage, seconds: f64) -> Result<()> {
        let rel = format!("{ARTIFACTS_DIR}/obj{object_index}_stylized.png");
        let path = self.scene_dir.artifact(&format!("obj{object_index}_stylized.png"));
        fs::create_dir_all(path.parent().expect("artifact dir")).map_err(|e| Error::io(&path, e))?;
        write_atomic(&path, &encode_png(image)?)?;
        self.job.stylized_path = Some(rel);
        self.job.stylize_seconds = Some(seconds);
        self.persist_job()
    }

    fn mesh_generated(&mut self, object_index: usize, mesh: &TriMesh, seconds: f64) -> Result<()> {
        let rel = format!("{ARTIFACTS_DIR}/obj{object_index}_mesh.obj");
        let path = self.scene_dir.artifact(&format!("obj{object_index}_mesh.obj"));
        fs::create_dir_all(path.parent().expect("artifact dir")).map_err(|e| Error::io(&path, e))?;
        write_atomic(&path, write_obj(mesh).as_bytes())?;
        self.job.mesh_path = Some(rel);
        self.job.meshgen_seconds = Some(seconds);
        self.persist_job()
    }

    fn object_completed(&mut self, outcome: &InsertOutcome) -> Result<()> {
        let index = outcome.scene.inserted.len() - 1;
        outcome
            .grid
            .save(self.scene_dir.root.join(GRIDS_DIR).join(format!("obj{index}")))?;
        self.scene_dir.replace_dataset(&outcome.dataset)?;
        self.scene.state = outcome.scene.clone();
        self.scene.queue.remove(0);
        self.scene_dir.save_scene(&self.scene)?;
        self.report.rows.push(outcome.row.clone());
        self.scene_dir.save_report(&self.report)?;
        self.job.completed += 1;
        self.job.object_index = index + 1;
        self.job.stage = Stage::Stylize;
        self.job.stylized_path = None;
        self.job.mesh_path = None;
        self.job.stylize_seconds = None;
        self.job.meshgen_seconds = None;
        self.persist_job()
    }
}

/// Summary of a finished job.
#[derive(Debug, Clone)]
pub struct JobSummary {
    pub job: JobState,
    /// Rows added by this job.
    pub report: PipelineReport,
    pub frames: usize,
    pub warnings: Vec<String>,
}

/// Fails with `InvalidSpec("no objects queued")` when there is nothing to do.
pub fn ensure_queue(scene: &SceneFile) -> Result<()> {
    validate_batch(&scene.state, &scene.queue)
}

/// Assigns the next job id and records the job as running. A failed job on
/// the same object hands its stage artifacts to the new one. Callers holding
/// a scene lock use this to claim the scene before doing the work.
pub fn start_job(scene_dir: &SceneDir) -> Result<JobState> {
    let prev = scene_dir.load_job()?;
    let mut scene = scene_dir.load_scene()?;
    ensure_queue(&scene)?;
    scene.runs += 1;
    scene_dir.save_scene(&scene)?;
    let mut job = JobState::new(
        format!("job-{}", scene.runs),
        scene.state.inserted.len(),
        scene.queue.len(),
    );
    if let Some(prev) = prev {
        if matches!(prev.status, JobStatus::Failed { .. }) && prev.object_index == job.object_index {
            job.stylized_path = prev.stylized_path;
            job.stylize_seconds = prev.stylize_seconds;
            job.mesh_path = prev.mesh_path;
            job.meshgen_seconds = prev.meshgen_seconds;
        }
    }
    scene_dir.save_job(&job)?;
    Ok(job)
}

/// Runs every queued object, checkpointing after each stage and object.
pub fn run_job(
    scene_dir: &SceneDir,
    job: JobState,
    backends: &Backends,
    params: &PipelineParams,
    on_progress: &mut dyn FnMut(&JobState),
) -> Result<JobSummary> {
    let scene = scene_dir.load_scene()?;
    let ds = scene_dir.load_dataset()?;
    let specs = scene.queue.clone();
    let state = scene.state.clone();
    let mut hooks = Checkpoint {
        scene_dir,
        report: scene_dir.load_report()?,
        scene,
        resume: Some(job.clone()),
        job,
        on_progress,
    };
    let result = insert_objects(&state, &ds, &specs, backends, params, &mut hooks);
    match result {
        Ok(done) => {
            hooks.job.status = JobStatus::Done;
            hooks.job.stage = Stage::Done;
            hooks.persist_job()?;
            Ok(JobSummary {
                job: hooks.job.clone(),
                report: done.report,
                frames: done.dataset.len(),
                warnings: done.outcomes.into_iter().flat_map(|o| o.warnings).collect(),
            })
        }
        Err(e) => {
            hooks.job.status = JobStatus::Failed { reason: e.to_string() };
            hooks.persist_job()?;
            Err(e)
        }
    }
}

/// Starts and runs a job in one call.
pub fn run_scene(
    scene_dir: &SceneDir,
    backends: &Backends,
    params: &PipelineParams,
    on_progress: &mut dyn FnMut(&JobState),
) -> Result<JobSummary> {
    let job = start_job(scene_dir)?;
    run_job(scene_dir, job, backends, params, on_progress)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{BackendError, GridEditRequest, GridEditor, MockStylizer, StylizeRequest, Stylizer};
    use crate::dataset::directory_digest;
    use crate::fixture::{demo_objects, synthetic_dataset, FixtureSpec};
    use crate::integration::Strategy;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    fn small_scene(dir: &Path) -> SceneDir {
        let spec = FixtureSpec {
            frames: 20,
            width: 48,
            height: 36,
            seed: 5,
        };
        SceneDir::create(dir.join("demo"), &synthetic_dataset(&spec, ".").unwrap()).unwrap()
    }

    fn params() -> PipelineParams {
        PipelineParams {
            tile_width: 24,
            tile_height: 18,
            tessellation_level: 4,
            ..PipelineParams::default()
        }
    }

    #[test]
    fn run_persists_everything() {
        let tmp = tempfile::tempdir().unwrap();
        let scene = small_scene(tmp.path());
        for spec in demo_objects(Strategy::AddNewImages).into_iter().take(2) {
            scene.enqueue(spec).unwrap();
        }
        let mut seen = Vec::new();
        let summary = run_scene(&scene, &Backends::mock(), &params(), &mut |j| seen.push(j.progress())).unwrap();
        assert_eq!(summary.frames, 36);
        assert_eq!(summary.job.status, JobStatus::Done);
        assert!(seen.windows(2).all(|w| w[0] <= w[1] + 1e-12));
        assert_eq!(scene.load_dataset().unwrap().len(), 36);
        let file = scene.load_scene().unwrap();
        assert!(file.queue.is_empty());
        assert_eq!(file.state.inserted.len(), 2);
        assert_eq!(scene.load_report().unwrap().rows.len(), 2);
        assert!(scene.root().join("grids/obj1/color.png").is_file());
        assert!(matches!(ensure_queue(&file), Err(Error::InvalidSpec(m)) if m == "no objects queued"));
    }

    #[test]
    fn enqueue_rejects_duplicates_and_dequeue_reports_missing() {
        let tmp = tempfile::tempdir().unwrap();
        let scene = small_scene(tmp.path());
        let spec = demo_objects(Strategy::ModifyExisting).remove(0);
        scene.enqueue(spec.clone()).unwrap();
        assert!(scene.enqueue(spec.clone()).is_err());
        assert!(!scene.dequeue("nope").unwrap());
        assert!(scene.dequeue(&spec.name).unwrap());
        assert!(scene.load_scene().unwrap().queue.is_empty());
    }

    struct CountingStylizer(Arc<AtomicUsize>);

    impl Stylizer for CountingStylizer {
        fn stylize(&self, req: &StylizeRequest) -> std::result::Result<RgbImage, BackendError> {
            self.0.fetch_add(1, Ordering::SeqCst);
            MockStylizer.stylize(req)
        }
    }

    struct DownEditor;

    impl GridEditor for DownEditor {
        fn edit_grid(&self, _: &GridEditRequest) -> std::result::Result<RgbImage, BackendError> {
            Err(BackendError::Remote {
                status: 400,
                code: "rejected".into(),
                message: "no".into(),
            })
        }
    }

    #[test]
    fn failure_keeps_dataset_and_resume_reuses_artifacts() {
        let tmp = tempfile::tempdir().unwrap();
        let scene = small_scene(tmp.path());
        scene.enqueue(demo_objects(Strategy::AddNewImages).remove(0)).unwrap();
        let digest = directory_digest(scene.dataset_dir()).unwrap();
        let calls = Arc::new(AtomicUsize::new(0));
        let failing = Backends {
            stylizer: Arc::new(CountingStylizer(calls.clone())),
            grid_editor: Arc::new(DownEditor),
            ..Backends::mock()
        };
        assert!(run_scene(&scene, &failing, &params(), &mut |_| {}).is_err());
        assert_eq!(directory_digest(scene.dataset_dir()).unwrap(), digest);
        let job = scene.load_job().unwrap().unwrap();
        assert!(matches!(job.status, JobStatus::Failed { .. }));
        assert_eq!(job.stage, Stage::ReferenceGrids);
        assert_eq!(calls.load(Ordering::SeqCst), 1);

        let healed = Backends {
            stylizer: Arc::new(CountingStylizer(calls.clone())),
            ..Backends::mock()
        };
        let summary = run_scene(&scene, &healed, &params(), &mut |_| {}).unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 1, "stylize stage was not resumed");
        assert_eq!(summary.frames, 28);
        assert_eq!(summary.job.job_id, "job-2");
    }
}
