//! Synthetic scenes for tests, demos and the CLI `fixture` command: a colored
//! room with a few blocks in it, photographed from seeded random cameras.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::{save_dataset, NerfDataset};
use crate::error::Result;
use crate::geometry::{
    look_at_pose, tessellate_primitive, CameraIntrinsics, CameraView, Pose, Primitive, PrimitiveKind, TriMesh, Vec3,
};
use crate::imaging::encode_png;
use crate::integration::{ObjectSpec, Strategy};
use crate::raster::render_meshes;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixtureSpec {
    pub frames: usize,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            frames: 303,
            width: 128,
            height: 96,
            seed: 7,
        }
    }
}

/// Floor at y = 0, ceiling at y = 3, walls at x, z = ±4.
pub const ROOM_HALF_EXTENTS: [f64; 3] = [4.0, 1.5, 4.0];

fn tinted(mesh: TriMesh, f: impl Fn(&Vec3) -> [f32; 3]) -> TriMesh {
    let vertex_colors = mesh.vertices.iter().map(&f).collect();
    TriMesh { vertex_colors, ..mesh }
}

/// Room shell plus three blocks, colored by position so every view differs.
pub fn room_meshes() -> Vec<TriMesh> {
    let [hx, hy, hz] = ROOM_HALF_EXTENTS;
    let room = Primitive::new(
        PrimitiveKind::Box,
        Pose::from_translation(Vec3::new(0.0, hy, 0.0)),
        Vec3::new(hx, hy, hz),
    );
    let room = tinted(tessellate_primitive(&room, 6), |v| {
        [
            (0.35 + 0.5 * (v.x + hx) / (2.0 * hx)) as f32,
            (0.3 + 0.4 * v.y / (2.0 * hy)) as f32,
            (0.35 + 0.5 * (v.z + hz) / (2.0 * hz)) as f32,
        ]
    });
    let block = |kind, at: Vec3, scale: Vec3, color: [f32; 3]| {
        tessellate_primitive(&Primitive::new(kind, Pose::from_yaw_translation(0.4, at), scale), 8)
            .with_uniform_color(color)
    };
    vec![
        room,
        block(
            PrimitiveKind::Box,
            Vec3::new(-2.8, 0.4, -2.8),
            Vec3::new(0.6, 0.4, 0.6),
            [0.8, 0.3, 0.2],
        ),
        block(
            PrimitiveKind::Cylinder,
            Vec3::new(2.8, 0.6, -2.5),
            Vec3::new(0.3, 0.6, 0.3),
            [0.2, 0.6, 0.8],
        ),
        block(
            PrimitiveKind::Sphere,
            Vec3::new(2.5, 0.5, 2.8),
            Vec3::repeat(0.5),
            [0.9, 0.8, 0.2],
        ),
    ]
}

pub fn fixture_intrinsics(width: u32, height: u32) -> CameraIntrinsics {
    let f = 100.0 * width as f64 / 128.0;
    CameraIntrinsics::new(f, f, width as f64 / 2.0, height as f64 / 2.0, width, height).expect("positive fixture size")
}

/// Seeded camera poses inside the room. Even frames look toward the room
/// center, odd frames look sideways along the wall.
pub fn fixture_poses(count: usize, seed: u64) -> Vec<Pose> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = Vec3::new(0.0, 0.6, 0.0);
    (0..count)
        .map(|i| loop {
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let radius = rng.random_range(2.2..3.2);
            let eye = Vec3::new(radius * angle.cos(), rng.random_range(1.0..1.8), radius * angle.sin());
            let jitter = Vec3::new(
                rng.random_range(-0.4..0.4),
                rng.random_range(-0.2..0.2),
                rng.random_range(-0.4..0.4),
            );
            let target = if i % 2 == 0 {
                center + jitter
            } else {
                let tangent = Vec3::new(-angle.sin(), 0.0, angle.cos());
                eye + tangent * 2.0 + (center - eye) * 0.3 + jitter
            };
            if let Ok(pose) = look_at_pose(&eye, &target, &Vec3::y()) {
                break pose;
            }
        })
        .collect()
}

/// Builds the fixture in memory with `root_dir` as its nominal location.
pub fn synthetic_dataset(spec: &FixtureSpec, root_dir: impl AsRef<Path>) -> Result<NerfDataset> {
    let k = fixture_intrinsics(spec.width, spec.height);
    let meshes = room_meshes();
    let poses = fixture_poses(spec.frames, spec.seed);
    let encoded: Vec<Vec<u8>> = poses
        .par_iter()
        .map(|pose| {
            let out = render_meshes(&CameraView::new(k, *pose), &meshes, 0.01, 100.0)?;
            encode_png(&out.color)
        })
        .collect::<Result<_>>()?;
    let mut ds = NerfDataset::new(k, root_dir.as_ref());
    for (i, (pose, bytes)) in poses.into_iter().zip(encoded).enumerate() {
        ds.push_encoded(format!("images/frame_{i:04}.png"), pose, bytes)?;
    }
    Ok(ds)
}

/// Builds the fixture and writes it to `dir`.
pub fn write_synthetic_dataset(spec: &FixtureSpec, dir: impl AsRef<Path>) -> Result<NerfDataset> {
    let ds = synthetic_dataset(spec, dir.as_ref())?;
    save_dataset(&ds, dir.as_ref())?;
    Ok(ds)
}

/// Sofa, lamp and bed placed near the room center.
pub fn demo_objects(strategy: Strategy) -> Vec<ObjectSpec> {
    let spec = |name: &str, kind, at: Vec3, yaw: f64, scale: Vec3, prompt: &str| ObjectSpec {
        name: name.into(),
        primitive: Primitive::new(kind, Pose::from_yaw_translation(yaw, at), scale),
        prompt: prompt.into(),
        strategy,
    };
    vec![
        spec(
            "sofa",
            PrimitiveKind::Box,
            Vec3::new(-0.6, 0.4, 0.3),
            0.3,
            Vec3::new(0.9, 0.4, 0.4),
            "a modern sofa in the apartment",
        ),
        spec(
            "lamp",
            PrimitiveKind::Cylinder,
            Vec3::new(0.9, 0.7, -0.4),
            0.0,
            Vec3::new(0.2, 0.7, 0.2),
            "a tall floor lamp",
        ),
        spec(
            "bed",
            PrimitiveKind::Box,
            Vec3::new(0.2, 0.3, 1.2),
            -0.2,
            Vec3::new(0.8, 0.3, 1.0),
            "a modern bed in the apartment, clean background",
        ),
    ]
}
