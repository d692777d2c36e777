//! Nerfstudio-format datasets: a shared pinhole camera, an ordered list of
//! posed frames, and their PNG images.
//!
//! Datasets are values. Mutations return a new dataset; image payloads are
//! reference counted, so untouched frames keep their exact original bytes.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::RgbImage;
use serde_json::{json, Map, Value};
use tracing::warn;

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, CameraView, Pose};
use crate::imaging;

pub const TRANSFORMS_FILE: &str = "transforms.json";

/// Rotations drifting further than this from orthonormal are rejected.
pub const ROTATION_TOLERANCE: f64 = 1e-3;

const FRAME_INTRINSIC_KEYS: [&str; 6] = ["fl_x", "fl_y", "cx", "cy", "w", "h"];

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub file_path: String,
    /// Camera-to-world.
    pub transform: Pose,
    image: Arc<[u8]>,
}

impl FrameRecord {
    /// Encoded image bytes exactly as they will be written to disk.
    pub fn image_bytes(&self) -> &[u8] {
        &self.image
    }

    pub fn image_hash(&self) -> String {
        imaging::sha256_hex(&self.image)
    }

    pub fn decode_image(&self) -> Result<RgbImage> {
        imaging::decode_rgb(&self.image, &self.file_path)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NerfDataset {
    pub intrinsics: CameraIntrinsics,
    pub frames: Vec<FrameRecord>,
    pub root_dir: PathBuf,
}

impl NerfDataset {
    /// Empty dataset with the given shared camera.
    pub fn new(intrinsics: CameraIntrinsics, root_dir: impl Into<PathBuf>) -> Self {
        NerfDataset {
            intrinsics,
            frames: Vec::new(),
            root_dir: root_dir.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn view(&self, index: usize) -> CameraView {
        CameraView::new(self.intrinsics, self.frames[index].transform)
    }

    pub fn views(&self) -> impl Iterator<Item = CameraView> + '_ {
        self.frames
            .iter()
            .map(|f| CameraView::new(self.intrinsics, f.transform))
    }

    pub fn image(&self, index: usize) -> Result<RgbImage> {
        self.frame(index)?.decode_image()
    }

    pub fn frame(&self, index: usize) -> Result<&FrameRecord> {
        self.frames.get(index).ok_or(Error::IndexOutOfRange {
            index,
            len: self.frames.len(),
        })
    }

    pub fn image_hashes(&self) -> Vec<String> {
        self.frames.iter().map(FrameRecord::image_hash).collect()
    }

    /// Appends a frame from an already-encoded image. Used by loaders and
    /// fixture generators; checks dimensions and path uniqueness.
    pub fn push_encoded(&mut self, file_path: String, transform: Pose, bytes: Vec<u8>) -> Result<()> {
        if file_path.is_empty() {
            return Err(Error::InvalidSpec("empty frame file_path".into()));
        }
        if self.frames.iter().any(|f| f.file_path == file_path) {
            return Err(Error::Internal(format!("duplicate frame file_path `{file_path}`")));
        }
        let dims = imaging::probe_dimensions(&bytes, &file_path)?;
        self.check_dimensions("frame image", dims)?;
        self.frames.push(FrameRecord {
            file_path,
            transform,
            image: bytes.into(),
        });
        Ok(())
    }

    fn check_dimensions(&self, context: &'static str, actual: (u32, u32)) -> Result<()> {
        let expected = self.intrinsics.dimensions();
        if actual != expected {
            return Err(Error::DimensionMismatch {
                context,
                expected,
                actual,
            });
        }
        Ok(())
    }
}

/// File path used for the `view`-th image generated for object `object`.
pub fn generated_frame_path(object: usize, view: usize) -> String {
    format!("images/obj{object}_view{view}.png")
}

/// Loads a dataset from a directory containing `transforms.json` (or from the
/// transforms file itself).
pub fn load_dataset(path: impl AsRef<Path>) -> Result<NerfDataset> {
    let path = path.as_ref();
    let (root_dir, transforms_path) = if path.is_dir() {
        (path.to_path_buf(), path.join(TRANSFORMS_FILE))
    } else {
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        (root, path.to_path_buf())
    };
    let text = fs::read_to_string(&transforms_path).map_err(|e| Error::io(&transforms_path, e))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: transforms_path.clone(),
        field: "<document>".into(),
        message: e.to_string(),
    })?;
    let parser = Parser { path: &transforms_path };
    let top = parser.object(&doc, "<document>")?;

    let width = parser.uint(top, "w")?;
    let height = parser.uint(top, "h")?;
    let fx = parser.number(top, "fl_x")?;
    let fy = match top.get("fl_y") {
        Some(_) => parser.number(top, "fl_y")?,
        None => fx,
    };
    let cx = match top.get("cx") {
        Some(_) => parser.number(top, "cx")?,
        None => width as f64 / 2.0,
    };
    let cy = match top.get("cy") {
        Some(_) => parser.number(top, "cy")?,
        None => height as f64 / 2.0,
    };
    let intrinsics = CameraIntrinsics::new(fx, fy, cx, cy, width, height).map_err(|e| Error::Parse {
        path: transforms_path.clone(),
        field: "fl_x/fl_y/cx/cy/w/h".into(),
        message: e.to_string(),
    })?;

    let frames = match top.get("frames") {
        Some(v) => parser.array(v, "frames")?,
        None => return Err(parser.err("frames", "missing")),
    };

    let mut records = Vec::with_capacity(frames.len());
    let mut seen = HashSet::new();
    for (i, frame) in frames.iter().enumerate() {
        let field = format!("frames[{i}]");
        let obj = parser.object(frame, &field)?;
        let file_path = match obj.get("file_path") {
            Some(Value::String(s)) if !s.is_empty() => s.clone(),
            _ => return Err(parser.err(&format!("{field}.file_path"), "expected non-empty string")),
        };
        if FRAME_INTRINSIC_KEYS.iter().any(|k| obj.contains_key(*k)) {
            return Err(Error::PerFrameIntrinsics(file_path));
        }
        if !seen.insert(file_path.clone()) {
            return Err(parser.err(&format!("{field}.file_path"), &format!("duplicate path `{file_path}`")));
        }
        let rows = parser.matrix4(obj.get("transform_matrix"), &format!("{field}.transform_matrix"))?;
        let transform = checked_pose(&rows, &file_path, &parser, &field)?;
        records.push((file_path, transform));
    }

    let missing: Vec<String> = records
        .iter()
        .filter(|(p, _)| !root_dir.join(p).is_file())
        .map(|(p, _)| p.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingImages(missing));
    }

    let mut ds = NerfDataset::new(intrinsics, root_dir.clone());
    for (file_path, transform) in records {
        let image_path = root_dir.join(&file_path);
        let bytes = fs::read(&image_path).map_err(|e| Error::io(&image_path, e))?;
        ds.push_encoded(file_path, transform, bytes)?;
    }
    Ok(ds)
}

fn checked_pose(rows: &[[f64; 4]; 4], file_path: &str, parser: &Parser, field: &str) -> Result<Pose> {
    let last = rows[3];
    if (last[0].abs() + last[1].abs() + last[2].abs() + (last[3] - 1.0).abs()) > 1e-6 {
        return Err(parser.err(&format!("{field}.transform_matrix"), "bottom row must be [0, 0, 0, 1]"));
    }
    let pose = Pose::from_rows(rows);
    let drift = pose.orthonormality_drift();
    let det = pose.rotation.determinant();
    if !(drift <= ROTATION_TOLERANCE) || det <= 0.0 {
        return Err(Error::NonOrthonormalRotation {
            file_path: file_path.to_string(),
            drift,
            det,
        });
    }
    if drift > 1e-9 {
        warn!(file_path, drift, "re-orthonormalizing frame rotation");
        return Ok(pose.reorthonormalized());
    }
    Ok(pose)
}

struct Parser<'a> {
    path: &'a Path,
}

impl Parser<'_> {
    fn err(&self, field: &str, message: &str) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            field: field.to_string(),
            message: message.to_string(),
        }
    }

    fn object<'v>(&self, v: &'v Value, field: &str) -> Result<&'v Map<String, Value>> {
        v.as_object().ok_or_else(|| self.err(field, "expected object"))
    }

    fn array<'v>(&self, v: &'v Value, field: &str) -> Result<&'v Vec<Value>> {
        v.as_array().ok_or_else(|| self.err(field, "expected array"))
    }

    fn number(&self, obj: &Map<String, Value>, key: &str) -> Result<f64> {
        obj.get(key)
            .ok_or_else(|| self.err(key, "missing"))?
            .as_f64()
            .ok_or_else(|| self.err(key, "expected number"))
    }

    fn uint(&self, obj: &Map<String, Value>, key: &str) -> Result<u32> {
        let v = obj.get(key).ok_or_else(|| self.err(key, "missing"))?;
        v.as_u64()
            .or_else(|| v.as_f64().filter(|f| f.fract() == 0.0 && *f >= 0.0).map(|f| f as u64))
            .and_then(|n| u32::try_from(n).ok())
            .ok_or_else(|| self.err(key, "expected non-negative integer"))
    }

    fn matrix4(&self, v: Option<&Value>, field: &str) -> Result<[[f64; 4]; 4]> {
        let rows = self.array(v.ok_or_else(|| self.err(field, "missing"))?, field)?;
        if rows.len() != 4 {
            return Err(self.err(field, "expected 4 rows"));
        }
        let mut out = [[0.0; 4]; 4];
        for (i, row) in rows.iter().enumerate() {
            let row = self.array(row, field)?;
            if row.len() != 4 {
                return Err(self.err(field, "expected 4 columns"));
            }
            for (j, x) in row.iter().enumerate() {
                out[i][j] = x
                    .as_f64()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| self.err(&format!("{field}[{i}][{j}]"), "expected finite number"))?;
            }
        }
        Ok(out)
    }
}

/// Writes `transforms.json` and every image under `path`.
pub fn save_dataset(ds: &NerfDataset, path: impl AsRef<Path>) -> Result<()> {
    let root = path.as_ref();
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    for frame in &ds.frames {
        let target = root.join(&frame.file_path);
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&target, frame.image_bytes()).map_err(|e| Error::io(&target, e))?;
    }
    let k = &ds.intrinsics;
    let frames: Vec<Value> = ds
        .frames
        .iter()
        .map(|f| json!({ "file_path": f.file_path, "transform_matrix": f.transform.to_rows() }))
        .collect();
    let doc = json!({
        "camera_angle_x": 2.0 * (k.width as f64 / (2.0 * k.fx)).atan(),
        "fl_x": k.fx,
        "fl_y": k.fy,
        "cx": k.cx,
        "cy": k.cy,
        "w": k.width,
        "h": k.height,
        "frames": frames,
    });
    let text = serde_json::to_string_pretty(&doc).expect("json values serialize");
    let target = root.join(TRANSFORMS_FILE);
    fs::write(&target, text).map_err(|e| Error::io(&target, e))
}

/// Strategy 1: appends newly generated views. Existing frames are untouched.
pub fn add_frames(ds: &NerfDataset, object: usize, new: &[(CameraView, RgbImage)]) -> Result<NerfDataset> {
    for (_, img) in new {
        ds.check_dimensions("add_frames", img.dimensions())?;
    }
    let mut out = ds.clone();
    for (k, (view, img)) in new.iter().enumerate() {
        let path = generated_frame_path(object, k);
        if out.frames.iter().any(|f| f.file_path == path) {
            return Err(Error::Internal(format!("generated frame path `{path}` already exists")));
        }
        let bytes = imaging::encode_png(img)?;
        out.push_encoded(path, view.pose, bytes)?;
    }
    Ok(out)
}

/// Strategy 2: replaces the pixels of one existing frame, keeping its pose
/// and path. Replacing with identical pixels keeps the original bytes.
pub fn replace_frame_image(ds: &NerfDataset, index: usize, image: &RgbImage) -> Result<NerfDataset> {
    let frame = ds.frame(index)?;
    ds.check_dimensions("replace_frame_image", image.dimensions())?;
    if frame.decode_image()? == *image {
        return Ok(ds.clone());
    }
    let bytes = imaging::encode_png(image)?;
    let mut out = ds.clone();
    out.frames[index].image = bytes.into();
    Ok(out)
}

/// Content digest of a directory tree: relative paths and file bytes, in
/// sorted path order.
pub fn directory_digest(root: impl AsRef<Path>) -> Result<String> {
    fn collect(dir: &Path, root: &Path, out: &mut Vec<(String, PathBuf)>) -> Result<()> {
        for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let path = entry.path();
            if path.is_dir() {
                collect(&path, root, out)?;
            } else {
                let rel = path
                    .strip_prefix(root)
                    .unwrap_or(&path)
                    .to_string_lossy()
                    .replace('\\', "/");
                out.push((rel, path));
            }
        }
        Ok(())
    }
    let root = root.as_ref();
    let mut files = Vec::new();
    collect(root, root, &mut files)?;
    files.sort();
    let mut manifest = String::new();
    for (rel, path) in files {
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        manifest.push_str(&rel);
        manifest.push(' ');
        manifest.push_str(&imaging::sha256_hex(&bytes));
        manifest.push('\n');
    }
    Ok(imaging::sha256_hex(manifest.as_bytes()))
}
