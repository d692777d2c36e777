//! Pose algebra, pinhole projection and primitive tessellation.
//!
//! Conventions used throughout the crate:
//! - poses are camera-to-world (or object-to-world) rigid transforms;
//! - cameras look along their local −z axis with +y up (right-handed, the
//!   same convention Nerfstudio and OpenGL use);
//! - pixel origin is the top-left corner and v grows downward, so camera-space
//!   +y maps to smaller v.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Points with camera-space z ≥ −EPSILON_NEAR are treated as behind the camera.
pub const EPSILON_NEAR: f64 = 1e-6;

/// Rigid transform: `p_world = rotation * p_local + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "PoseRepr", into = "PoseRepr")]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl From<PoseRepr> for Pose {
    fn from(r: PoseRepr) -> Self {
        Pose {
            rotation: Matrix3::from_fn(|i, j| r.rotation[i][j]),
            translation: Vec3::from(r.translation),
        }
    }
}

impl From<Pose> for PoseRepr {
    fn from(p: Pose) -> Self {
        PoseRepr {
            rotation: std::array::from_fn(|i| std::array::from_fn(|j| p.rotation[(i, j)])),
            translation: p.translation.into(),
        }
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Self {
        Pose { rotation, translation }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation about world +y by `yaw` radians, then translation.
    pub fn from_yaw_translation(yaw: f64, translation: Vec3) -> Self {
        let (s, c) = yaw.sin_cos();
        let rotation = Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c);
        Pose { rotation, translation }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// Camera forward direction (local −z) in world coordinates.
    pub fn forward(&self) -> Vec3 {
        -self.rotation.column(2).into_owned()
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Row-major nested 4×4, as stored in `transforms.json`.
    pub fn to_rows(&self) -> [[f64; 4]; 4] {
        let m = self.to_matrix();
        std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
    }

    /// Builds a pose from a row-major 4×4 without validating the rotation.
    pub fn from_rows(rows: &[[f64; 4]; 4]) -> Pose {
        Pose {
            rotation: Matrix3::from_fn(|i, j| rows[i][j]),
            translation: Vec3::new(rows[0][3], rows[1][3], rows[2][3]),
        }
    }

    /// Largest elementwise deviation of `RᵀR` from identity.
    pub fn orthonormality_drift(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax()
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        self.rotation.iter().all(|v| v.is_finite())
            && self.translation.iter().all(|v| v.is_finite())
            && self.orthonormality_drift() <= tol
            && self.rotation.determinant() > 0.0
    }

    /// Replaces the rotation by the nearest proper rotation (SVD projection).
    pub fn reorthonormalized(&self) -> Pose {
        Pose {
            rotation: nearest_rotation(&self.rotation),
            translation: self.translation,
        }
    }
}

/// Nearest rotation matrix in the Frobenius sense.
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}

/// Geodesic angle (radians) between two rotations.
pub fn rotation_angle_between(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let r = a.transpose() * b;
    let cos2 = r.trace() - 1.0;
    let sin2 = Vec3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]).norm();
    sin2.atan2(cos2)
}

/// Pose distance `|t₁ − t₂| + w·angle(R₁, R₂)` with `w` scene units per radian.
pub fn pose_distance(a: &Pose, b: &Pose, rotation_weight: f64) -> f64 {
    (a.translation - b.translation).norm() + rotation_weight * rotation_angle_between(&a.rotation, &b.rotation)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let k = CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx.is_finite()
            && self.fy.is_finite()
            && self.fx > 0.0
            && self.fy > 0.0
            && self.width > 0
            && self.height > 0
            && (0.0..self.width as f64).contains(&self.cx)
            && (0.0..self.height as f64).contains(&self.cy);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidIntrinsics(format!("{self:?}")))
        }
    }

    /// Same camera resampled to a `width`×`height` image.
    pub fn resized(&self, width: u32, height: u32) -> CameraIntrinsics {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        CameraIntrinsics {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            width,
            height,
        }
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraView {
    pub intrinsics: CameraIntrinsics,
    /// Camera-to-world.
    pub pose: Pose,
}

impl CameraView {
    pub fn new(intrinsics: CameraIntrinsics, pose: Pose) -> Self {
        CameraView { intrinsics, pose }
    }

    pub fn world_to_camera(&self, p_world: &Vec3) -> Vec3 {
        self.pose.rotation.transpose() * (p_world - self.pose.translation)
    }

    /// Pixel of a point given in camera coordinates, `None` if it is not in
    /// front of the camera.
    pub fn project_camera_point(&self, p: &Vec3) -> Option<(f64, f64)> {
        if p.z >= -EPSILON_NEAR {
            return None;
        }
        let k = &self.intrinsics;
        let inv = 1.0 / -p.z;
        Some((k.cx + k.fx * p.x * inv, k.cy - k.fy * p.y * inv))
    }

    /// World point seen at pixel `(u, v)` at `depth` along the −z axis.
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        let k = &self.intrinsics;
        let p_cam = Vec3::new((u - k.cx) / k.fx * depth, -(v - k.cy) / k.fy * depth, -depth);
        self.pose.transform_point(&p_cam)
    }
}

/// Projects a world point to pixel coordinates; `None` when the point lies at
/// or behind the camera plane. The result is not clipped to the image.
pub fn project_point(view: &CameraView, p_world: &Vec3) -> Option<(f64, f64)> {
    view.project_camera_point(&view.world_to_camera(p_world))
}

/// Camera-to-world pose at `eye` whose −z axis points at `target`.
pub fn look_at_pose(eye: &Vec3, target: &Vec3, up_hint: &Vec3) -> Result<Pose> {
    let dir = target - eye;
    let dist = dir.norm();
    if !(dist > 1e-9) {
        return Err(Error::DegenerateDirection("eye and target coincide"));
    }
    let forward = dir / dist;
    let up_norm = up_hint.norm();
    if !(up_norm > 0.0) {
        return Err(Error::DegenerateDirection("zero up vector"));
    }
    let side = forward.cross(&(up_hint / up_norm));
    let side_norm = side.norm();
    if side_norm < 1e-6 {
        return Err(Error::DegenerateDirection("up hint parallel to view direction"));
    }
    let right = side / side_norm;
    let up = right.cross(&forward);
    let rotation = Matrix3::from_columns(&[right, up, -forward]);
    Ok(Pose {
        rotation,
        translation: *eye,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveKind {
    Box,
    Sphere,
    Cylinder,
}

impl std::str::FromStr for PrimitiveKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "box" => Ok(PrimitiveKind::Box),
            "sphere" => Ok(PrimitiveKind::Sphere),
            "cylinder" => Ok(PrimitiveKind::Cylinder),
            other => Err(format!("unknown primitive kind `{other}`")),
        }
    }
}

impl std::fmt::Display for PrimitiveKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PrimitiveKind::Box => "box",
            PrimitiveKind::Sphere => "sphere",
            PrimitiveKind::Cylinder => "cylinder",
        })
    }
}

/// User-placed proxy shape. In the local frame every kind spans
/// `[−scale, scale]` per axis: half-extents for a box, radii for a sphere,
/// and (radius x, half-height y, radius z) for a y-axis cylinder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub kind: PrimitiveKind,
    /// Object-to-world.
    pub pose: Pose,
    pub scale: Vec3,
}

impl Primitive {
    pub fn new(kind: PrimitiveKind, pose: Pose, scale: Vec3) -> Self {
        Primitive { kind, pose, scale }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.pose.is_valid(1e-6) {
            return Err(Error::InvalidSpec("primitive pose is not a rigid transform".into()));
        }
        if !self.scale.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(Error::DegeneratePrimitive(format!(
                "scale components must be positive, got {:?}",
                self.scale.as_slice()
            )));
        }
        Ok(())
    }

    /// Corners of the local box `[−scale, scale]` in world coordinates.
    pub fn world_corners(&self) -> [Vec3; 8] {
        std::array::from_fn(|i| {
            let sx = if i & 1 == 0 { -1.0 } else { 1.0 };
            let sy = if i & 2 == 0 { -1.0 } else { 1.0 };
            let sz = if i & 4 == 0 { -1.0 } else { 1.0 };
            let local = Vec3::new(sx * self.scale.x, sy * self.scale.y, sz * self.scale.z);
            self.pose.transform_point(&local)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Option<Aabb> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut b = Aabb {
            min: *first,
            max: *first,
        };
        for p in it {
            b.min = b.min.inf(p);
            b.max = b.max.sup(p);
        }
        Some(b)
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn extents(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn contains_aabb(&self, other: &Aabb, tol: f64) -> bool {
        (0..3).all(|i| other.min[i] >= self.min[i] - tol && other.max[i] <= self.max[i] + tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub vertex_colors: Vec<[f32; 3]>,
}

impl TriMesh {
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if n < 4 || self.triangles.len() < 4 {
            return Err(Error::InvalidMesh(format!(
                "need at least 4 vertices and 4 triangles, got {n} and {}",
                self.triangles.len()
            )));
        }
        if self.normals.len() != n || self.vertex_colors.len() != n {
            return Err(Error::InvalidMesh(format!(
                "attribute counts differ: {n} vertices, {} normals, {} colors",
                self.normals.len(),
                self.vertex_colors.len()
            )));
        }
        if let Some(i) = self.vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMesh(format!("vertex {i} is not finite")));
        }
        if let Some(i) = self.normals.iter().position(|nrm| !((nrm.norm() - 1.0).abs() <= 1e-4)) {
            return Err(Error::InvalidMesh(format!("normal {i} is not unit length")));
        }
        if let Some(i) = self
            .vertex_colors
            .iter()
            .position(|c| !c.iter().all(|x| (0.0..=1.0).contains(x)))
        {
            return Err(Error::InvalidMesh(format!("color {i} outside [0, 1]")));
        }
        if let Some(t) = self.triangles.iter().position(|t| t.iter().any(|&i| i as usize >= n)) {
            return Err(Error::InvalidMesh(format!("triangle {t} references a missing vertex")));
        }
        Ok(())
    }

    pub fn bounds(&self) -> Option<Aabb> {
        Aabb::from_points(&self.vertices)
    }

    pub fn surface_area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i as usize]);
                0.5 * (b - a).cross(&(c - a)).norm()
            })
            .sum()
    }

    /// Applies a uniform scale about the origin followed by `pose`.
    pub fn transformed(&self, pose: &Pose, uniform_scale: f64) -> TriMesh {
        TriMesh {
            vertices: self
                .vertices
                .iter()
                .map(|v| pose.transform_point(&(v * uniform_scale)))
                .collect(),
            normals: self.normals.iter().map(|n| pose.transform_vector(n)).collect(),
            triangles: self.triangles.clone(),
            vertex_colors: self.vertex_colors.clone(),
        }
    }

    pub fn with_uniform_color(mut self, color: [f32; 3]) -> TriMesh {
        self.vertex_colors.fill(color);
        self
    }
}

const MID_GRAY: [f32; 3] = [0.5, 0.5, 0.5];

/// Tessellates a primitive into a closed world-space triangle mesh.
///
/// Sphere: UV sphere with `4·level` longitudes and `2·level` latitude bands.
/// Box: each face split into a `level×level` grid (`12·level²` triangles).
/// Cylinder: `4·level` radial segments plus two capping fans.
pub fn tessellate_primitive(prim: &Primitive, level: u32) -> TriMesh {
    let level = level.max(1);
    let mut builder = MeshBuilder::default();
    match prim.kind {
        PrimitiveKind::Sphere => builder.uv_sphere(&prim.scale, level),
        PrimitiveKind::Box => builder.subdivided_box(&prim.scale, level),
        PrimitiveKind::Cylinder => builder.cylinder(&prim.scale, level),
    }
    builder.finish(&prim.pose)
}

#[derive(Default)]
struct MeshBuilder {
    vertices: Vec<Vec3>,
    normals: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
}

impl MeshBuilder {
    fn push(&mut self, p: Vec3, n: Vec3) -> u32 {
        self.vertices.push(p);
        self.normals.push(n.normalize());
        (self.vertices.len() - 1) as u32
    }

    fn uv_sphere(&mut self, radii: &Vec3, level: u32) {
        let lon = 4 * level;
        let bands = 2 * level;
        let ellipsoid = |dir: Vec3| (dir.component_mul(radii), dir.component_div(radii));
        let (p, n) = ellipsoid(Vec3::y());
        let north = self.push(p, n);
        let mut rings = Vec::with_capacity((bands - 1) as usize);
        for i in 1..bands {
            let phi = PI * i as f64 / bands as f64;
            let ring: Vec<u32> = (0..lon)
                .map(|j| {
                    let theta = 2.0 * PI * j as f64 / lon as f64;
                    let dir = Vec3::new(phi.sin() * theta.cos(), phi.cos(), phi.sin() * theta.sin());
                    let (p, n) = ellipsoid(dir);
                    self.push(p, n)
                })
                .collect();
            rings.push(ring);
        }
        let (p, n) = ellipsoid(-Vec3::y());
        let south = self.push(p, n);

        let l = lon as usize;
        for j in 0..l {
            let jn = (j + 1) % l;
            self.triangles.push([north, rings[0][jn], rings[0][j]]);
        }
        for pair in rings.windows(2) {
            let (upper, lower) = (&pair[0], &pair[1]);
            for j in 0..l {
                let jn = (j + 1) % l;
                self.triangles.push([upper[j], upper[jn], lower[j]]);
                self.triangles.push([upper[jn], lower[jn], lower[j]]);
            }
        }
        let last = rings.last().unwrap();
        for j in 0..l {
            let jn = (j + 1) % l;
            self.triangles.push([last[j], last[jn], south]);
        }
    }

    fn subdivided_box(&mut self, half: &Vec3, level: u32) {
        // (normal, u, v) with u × v = normal so faces wind outward.
        let faces = [
            (Vec3::x(), Vec3::y(), Vec3::z()),
            (-Vec3::x(), Vec3::z(), Vec3::y()),
            (Vec3::y(), Vec3::z(), Vec3::x()),
            (-Vec3::y(), Vec3::x(), Vec3::z()),
            (Vec3::z(), Vec3::x(), Vec3::y()),
            (-Vec3::z(), Vec3::y(), Vec3::x()),
        ];
        let steps = level as usize;
        for (normal, u, v) in faces {
            let base = self.vertices.len() as u32;
            for b in 0..=steps {
                for a in 0..=steps {
                    let fu = -1.0 + 2.0 * a as f64 / steps as f64;
                    let fv = -1.0 + 2.0 * b as f64 / steps as f64;
                    let unit = normal + u * fu + v * fv;
                    self.push(unit.component_mul(half), normal);
                }
            }
            let idx = |a: usize, b: usize| base + (b * (steps + 1) + a) as u32;
            for b in 0..steps {
                for a in 0..steps {
                    self.triangles.push([idx(a, b), idx(a + 1, b), idx(a, b + 1)]);
                    self.triangles.push([idx(a + 1, b), idx(a + 1, b + 1), idx(a, b + 1)]);
                }
            }
        }
    }

    fn cylinder(&mut self, scale: &Vec3, level: u32) {
        let segments = (4 * level) as usize;
        let ring_point = |j: usize, y: f64| {
            let theta = 2.0 * PI * j as f64 / segments as f64;
            Vec3::new(scale.x * theta.cos(), y * scale.y, scale.z * theta.sin())
        };
        let side_normal = |j: usize| {
            let theta = 2.0 * PI * j as f64 / segments as f64;
            Vec3::new(theta.cos() / scale.x, 0.0, theta.sin() / scale.z)
        };

        let top: Vec<u32> = (0..segments)
            .map(|j| self.push(ring_point(j, 1.0), side_normal(j)))
            .collect();
        let bottom: Vec<u32> = (0..segments)
            .map(|j| self.push(ring_point(j, -1.0), side_normal(j)))
            .collect();
        for j in 0..segments {
            let jn = (j + 1) % segments;
            self.triangles.push([top[j], top[jn], bottom[j]]);
            self.triangles.push([top[jn], bottom[jn], bottom[j]]);
        }

        for (y, normal) in [(1.0, Vec3::y()), (-1.0, -Vec3::y())] {
            let center = self.push(Vec3::new(0.0, y * scale.y, 0.0), normal);
            let rim: Vec<u32> = (0..segments).map(|j| self.push(ring_point(j, y), normal)).collect();
            for j in 0..segments {
                let jn = (j + 1) % segments;
                if y > 0.0 {
                    self.triangles.push([center, rim[jn], rim[j]]);
                } else {
                    self.triangles.push([center, rim[j], rim[jn]]);
                }
            }
        }
    }

    fn finish(self, pose: &Pose) -> TriMesh {
        let count = self.vertices.len();
        TriMesh {
            vertices: self.vertices.iter().map(|p| pose.transform_point(p)).collect(),
            normals: self
                .normals
                .iter()
                .map(|n| pose.transform_vector(n).normalize())
                .collect(),
            triangles: self.triangles,
            vertex_colors: vec![MID_GRAY; count],
        }
    }
}
