//! Mesh payload codecs: OBJ with per-vertex colors (`v x y z r g b`) and a
//! minimal binary glTF reader for backends that answer with GLB.

use std::fmt::Write as _;

use serde_json::Value;

use super::BackendError;
use crate::geometry::{Aabb, TriMesh, Vec3};

const DEFAULT_COLOR: [f32; 3] = [0.5, 0.5, 0.5];

pub fn write_obj(mesh: &TriMesh) -> String {
    let mut out = String::new();
    for (v, c) in mesh.vertices.iter().zip(&mesh.vertex_colors) {
        let _ = writeln!(out, "v {} {} {} {} {} {}", v.x, v.y, v.z, c[0], c[1], c[2]);
    }
    for n in &mesh.normals {
        let _ = writeln!(out, "vn {} {} {}", n.x, n.y, n.z);
    }
    for t in &mesh.triangles {
        let [a, b, c] = t.map(|i| i + 1);
        let _ = writeln!(out, "f {a}//{a} {b}//{b} {c}//{c}");
    }
    out
}

pub fn parse_obj(text: &str) -> Result<TriMesh, BackendError> {
    let mut vertices = Vec::new();
    let mut colors = Vec::new();
    let mut normals = Vec::new();
    let mut faces: Vec<Vec<(usize, Option<usize>)>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let bad = |what: &str| BackendError::Payload(format!("obj line {}: {what}", lineno + 1));
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let nums: Vec<f64> = parts
                    .map(|p| p.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| bad("bad vertex"))?;
                match nums.len() {
                    3 | 4 => colors.push(DEFAULT_COLOR),
                    6 | 7 => colors.push([nums[3] as f32, nums[4] as f32, nums[5] as f32]),
                    _ => return Err(bad("vertex needs 3 or 6 components")),
                }
                vertices.push(Vec3::new(nums[0], nums[1], nums[2]));
            }
            Some("vn") => {
                let nums: Vec<f64> = parts
                    .map(|p| p.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| bad("bad normal"))?;
                if nums.len() != 3 {
                    return Err(bad("normal needs 3 components"));
                }
                normals.push(Vec3::new(nums[0], nums[1], nums[2]));
            }
            Some("f") => {
                let mut corners = Vec::new();
                for corner in parts {
                    let mut fields = corner.split('/');
                    let v = resolve_index(fields.next().unwrap_or(""), vertices.len())
                        .ok_or_else(|| bad("bad face index"))?;
                    let n = match fields.nth(1) {
                        Some(s) if !s.is_empty() => {
                            Some(resolve_index(s, normals.len()).ok_or_else(|| bad("bad normal index"))?)
                        }
                        _ => None,
                    };
                    corners.push((v, n));
                }
                if corners.len() < 3 {
                    return Err(bad("face needs at least 3 corners"));
                }
                faces.push(corners);
            }
            _ => {}
        }
    }

    let mut triangles = Vec::new();
    // Per-vertex normal from the face data when every reference agrees.
    let mut assigned: Vec<Option<usize>> = vec![None; vertices.len()];
    let mut consistent = !normals.is_empty();
    for face in &faces {
        for i in 1..face.len() - 1 {
            triangles.push([face[0].0, face[i].0, face[i + 1].0].map(|v| v as u32));
        }
        for (v, n) in face {
            match (n, assigned[*v]) {
                (None, _) => consistent = false,
                (Some(n), None) => assigned[*v] = Some(*n),
                (Some(n), Some(prev)) if prev != *n => consistent = false,
                _ => {}
            }
        }
    }
    let normals = if consistent && assigned.iter().all(Option::is_some) {
        assigned.iter().map(|n| unit_or_up(normals[n.unwrap()])).collect()
    } else {
        vertex_normals(&vertices, &triangles)
    };
    Ok(TriMesh {
        vertices,
        normals,
        triangles,
        vertex_colors: colors,
    })
}

fn unit_or_up(n: Vec3) -> Vec3 {
    if (n.norm() - 1.0).abs() < 1e-9 {
        n
    } else {
        n.try_normalize(1e-12).unwrap_or(Vec3::y())
    }
}

fn resolve_index(s: &str, len: usize) -> Option<usize> {
    let i: i64 = s.parse().ok()?;
    let idx = if i > 0 { i - 1 } else { len as i64 + i };
    (0..len as i64).contains(&idx).then_some(idx as usize)
}

/// Area-weighted vertex normals; isolated vertices get +y.
pub fn vertex_normals(vertices: &[Vec3], triangles: &[[u32; 3]]) -> Vec<Vec3> {
    let mut acc = vec![Vec3::zeros(); vertices.len()];
    for t in triangles {
        let [a, b, c] = t.map(|i| i as usize);
        if a.max(b).max(c) >= vertices.len() {
            continue;
        }
        let n = (vertices[b] - vertices[a]).cross(&(vertices[c] - vertices[a]));
        for i in [a, b, c] {
            acc[i] += n;
        }
    }
    acc.into_iter()
        .map(|n| n.try_normalize(1e-300).unwrap_or(Vec3::y()))
        .collect()
}

/// Centers the mesh bounding box at the origin and scales it uniformly so its
/// largest extent is 1. Meshes already inside `[−0.5, 0.5]³` are returned
/// unchanged.
pub fn normalize_unit_box(mesh: TriMesh) -> TriMesh {
    let Some(b) = mesh.bounds() else { return mesh };
    let inside = Aabb {
        min: Vec3::repeat(-0.5),
        max: Vec3::repeat(0.5),
    };
    if inside.contains_aabb(&b, 0.0) {
        return mesh;
    }
    let center = b.center();
    let extent = b.extents().max();
    let scale = if extent > 0.0 { 1.0 / extent } else { 1.0 };
    TriMesh {
        vertices: mesh.vertices.iter().map(|v| (v - center) * scale).collect(),
        ..mesh
    }
}

const GLB_MAGIC: &[u8; 4] = b"glTF";
const CHUNK_JSON: u32 = 0x4E4F_534A;
const CHUNK_BIN: u32 = 0x004E_4942;

pub fn is_glb(bytes: &[u8]) -> bool {
    bytes.len() >= 4 && &bytes[..4] == GLB_MAGIC
}

/// Decodes either payload format.
pub fn decode_mesh_payload(bytes: &[u8]) -> Result<TriMesh, BackendError> {
    if is_glb(bytes) {
        parse_glb(bytes)
    } else {
        let text = std::str::from_utf8(bytes)
            .map_err(|_| BackendError::Payload("mesh is neither GLB nor UTF-8 OBJ".into()))?;
        parse_obj(text)
    }
}

/// Reads the first triangle primitive of the first mesh: POSITION, optional
/// NORMAL and COLOR_0, optional indices.
pub fn parse_glb(bytes: &[u8]) -> Result<TriMesh, BackendError> {
    let err = |m: &str| BackendError::Payload(format!("glb: {m}"));
    let u32_at = |off: usize| -> Result<u32, BackendError> {
        bytes
            .get(off..off + 4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .ok_or_else(|| err("truncated"))
    };
    if !is_glb(bytes) || u32_at(4)? != 2 {
        return Err(err("not a glTF 2.0 binary"));
    }
    let mut json: Option<Value> = None;
    let mut bin: &[u8] = &[];
    let mut off = 12;
    while off + 8 <= bytes.len() {
        let len = u32_at(off)? as usize;
        let kind = u32_at(off + 4)?;
        let data = bytes
            .get(off + 8..off + 8 + len)
            .ok_or_else(|| err("chunk overruns file"))?;
        match kind {
            CHUNK_JSON => json = Some(serde_json::from_slice(data).map_err(|e| err(&e.to_string()))?),
            CHUNK_BIN => bin = data,
            _ => {}
        }
        off += 8 + len;
    }
    let doc = json.ok_or_else(|| err("missing JSON chunk"))?;
    let prim = &doc["meshes"][0]["primitives"][0];
    if !prim.is_object() {
        return Err(err("no mesh primitive"));
    }
    if prim["mode"].as_u64().unwrap_or(4) != 4 {
        return Err(err("only triangle primitives are supported"));
    }
    let accessor = |idx: &Value| -> Result<Vec<Vec<f64>>, BackendError> {
        let i = idx.as_u64().ok_or_else(|| err("bad accessor index"))? as usize;
        read_accessor(&doc, bin, i).map_err(|m| err(&m))
    };
    let attrs = &prim["attributes"];
    let positions = accessor(&attrs["POSITION"])?;
    let vertices: Vec<Vec3> = positions
        .iter()
        .map(|p| {
            (p.len() == 3)
                .then(|| Vec3::new(p[0], p[1], p[2]))
                .ok_or_else(|| err("POSITION must be VEC3"))
        })
        .collect::<Result<_, _>>()?;
    let triangles: Vec<[u32; 3]> = if prim["indices"].is_null() {
        (0..vertices.len() as u32 / 3)
            .map(|t| [3 * t, 3 * t + 1, 3 * t + 2])
            .collect()
    } else {
        let idx = accessor(&prim["indices"])?;
        idx.chunks_exact(3)
            .map(|c| [c[0][0] as u32, c[1][0] as u32, c[2][0] as u32])
            .collect()
    };
    let normals = if attrs["NORMAL"].is_null() {
        vertex_normals(&vertices, &triangles)
    } else {
        accessor(&attrs["NORMAL"])?
            .iter()
            .map(|n| unit_or_up(Vec3::new(n[0], n[1], n[2])))
            .collect()
    };
    let vertex_colors = if attrs["COLOR_0"].is_null() {
        vec![DEFAULT_COLOR; vertices.len()]
    } else {
        accessor(&attrs["COLOR_0"])?
            .iter()
            .map(|c| [c[0] as f32, c[1] as f32, c[2] as f32])
            .collect()
    };
    Ok(TriMesh {
        vertices,
        normals,
        triangles,
        vertex_colors,
    })
}

/// Accessor elements as f64 (normalized integer types mapped to [0, 1]).
fn read_accessor(doc: &Value, bin: &[u8], index: usize) -> Result<Vec<Vec<f64>>, String> {
    let acc = &doc["accessors"][index];
    let count = acc["count"].as_u64().ok_or("accessor without count")? as usize;
    let comps = match acc["type"].as_str() {
        Some("SCALAR") => 1,
        Some("VEC2") => 2,
        Some("VEC3") => 3,
        Some("VEC4") => 4,
        other => return Err(format!("unsupported accessor type {other:?}")),
    };
    let ctype = acc["componentType"].as_u64().ok_or("accessor without componentType")?;
    let size = match ctype {
        5121 => 1,
        5123 => 2,
        5125 | 5126 => 4,
        _ => return Err(format!("unsupported componentType {ctype}")),
    };
    let normalized = acc["normalized"].as_bool().unwrap_or(false);
    let view = &doc["bufferViews"][acc["bufferView"].as_u64().ok_or("sparse accessors unsupported")? as usize];
    let base = view["byteOffset"].as_u64().unwrap_or(0) as usize + acc["byteOffset"].as_u64().unwrap_or(0) as usize;
    let stride = view["byteStride"].as_u64().map(|s| s as usize).unwrap_or(comps * size);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let mut elem = Vec::with_capacity(comps);
        for c in 0..comps {
            let at = base + i * stride + c * size;
            let raw = bin.get(at..at + size).ok_or("accessor overruns buffer")?;
            let v = match ctype {
                5121 => {
                    let x = raw[0] as f64;
                    if normalized {
                        x / 255.0
                    } else {
                        x
                    }
                }
                5123 => {
                    let x = u16::from_le_bytes([raw[0], raw[1]]) as f64;
                    if normalized {
                        x / 65535.0
                    } else {
                        x
                    }
                }
                5125 => u32::from_le_bytes(raw.try_into().unwrap()) as f64,
                _ => f32::from_le_bytes(raw.try_into().unwrap()) as f64,
            };
            elem.push(v);
        }
        out.push(elem);
    }
    Ok(out)
}

/// Encodes a mesh as GLB (f32 positions/normals/colors, u32 indices).
pub fn write_glb(mesh: &TriMesh) -> Vec<u8> {
    let mut bin = Vec::new();
    let push_f32 = |vals: &mut dyn Iterator<Item = f32>, bin: &mut Vec<u8>| {
        let start = bin.len();
        for v in vals {
            bin.extend_from_slice(&v.to_le_bytes());
        }
        (start, bin.len() - start)
    };
    let pos = push_f32(
        &mut mesh.vertices.iter().flat_map(|v| [v.x as f32, v.y as f32, v.z as f32]),
        &mut bin,
    );
    let nrm = push_f32(
        &mut mesh.normals.iter().flat_map(|v| [v.x as f32, v.y as f32, v.z as f32]),
        &mut bin,
    );
    let col = push_f32(&mut mesh.vertex_colors.iter().flat_map(|c| *c), &mut bin);
    let idx_start = bin.len();
    for i in mesh.triangles.iter().flatten() {
        bin.extend_from_slice(&i.to_le_bytes());
    }
    let idx = (idx_start, bin.len() - idx_start);
    let n = mesh.vertices.len();
    let doc = serde_json::json!({
        "asset": {"version": "2.0"},
        "buffers": [{"byteLength": bin.len()}],
        "bufferViews": [
            {"buffer": 0, "byteOffset": pos.0, "byteLength": pos.1},
            {"buffer": 0, "byteOffset": nrm.0, "byteLength": nrm.1},
            {"buffer": 0, "byteOffset": col.0, "byteLength": col.1},
            {"buffer": 0, "byteOffset": idx.0, "byteLength": idx.1},
        ],
        "accessors": [
            {"bufferView": 0, "componentType": 5126, "count": n, "type": "VEC3"},
            {"bufferView": 1, "componentType": 5126, "count": n, "type": "VEC3"},
            {"bufferView": 2, "componentType": 5126, "count": n, "type": "VEC3"},
            {"bufferView": 3, "componentType": 5125, "count": mesh.triangles.len() * 3, "type": "SCALAR"},
        ],
        "meshes": [{"primitives": [{"attributes": {"POSITION": 0, "NORMAL": 1, "COLOR_0": 2}, "indices": 3}]}],
    });
    let mut json = serde_json::to_vec(&doc).expect("glb json");
    while !json.len().is_multiple_of(4) {
        json.push(b' ');
    }
    while bin.len() % 4 != 0 {
        bin.push(0);
    }
    let total = 12 + 8 + json.len() + 8 + bin.len();
    let mut out = Vec::with_capacity(total);
    out.extend_from_slice(GLB_MAGIC);
    out.extend_from_slice(&2u32.to_le_bytes());
    out.extend_from_slice(&(total as u32).to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&CHUNK_JSON.to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(bin.len() as u32).to_le_bytes());
    out.extend_from_slice(&CHUNK_BIN.to_le_bytes());
    out.extend_from_slice(&bin);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{tessellate_primitive, Pose, Primitive, PrimitiveKind};

    fn sample() -> TriMesh {
        let prim = Primitive::new(PrimitiveKind::Cylinder, Pose::identity(), Vec3::new(0.3, 0.5, 0.2));
        let mut m = tessellate_primitive(&prim, 2);
        for (i, c) in m.vertex_colors.iter_mut().enumerate() {
            *c = [(i % 4) as f32 / 4.0, 0.25, 1.0];
        }
        m
    }

    #[test]
    fn obj_round_trip() {
        let m = sample();
        let back = parse_obj(&write_obj(&m)).unwrap();
        assert_eq!(back, m);
        back.validate().unwrap();
    }

    #[test]
    fn obj_without_normals_or_colors() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf 1 3 2\nf 1 2 4\nf 1 4 3\nf 2 3 4\n";
        let m = parse_obj(text).unwrap();
        m.validate().unwrap();
        assert_eq!(m.triangles.len(), 4);
        assert!(m.vertex_colors.iter().all(|c| *c == DEFAULT_COLOR));
        let quad = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf -4 -3 -2 -1\n").unwrap();
        assert_eq!(quad.triangles, vec![[0, 1, 2], [0, 2, 3]]);
        assert!(parse_obj("v 0 0\n").is_err());
        assert!(parse_obj("v 0 0 0\nf 1 2 3\n").is_err());
    }

    #[test]
    fn glb_round_trip() {
        let m = sample();
        let bytes = write_glb(&m);
        assert!(is_glb(&bytes));
        let back = decode_mesh_payload(&bytes).unwrap();
        assert_eq!(back.triangles, m.triangles);
        for (a, b) in back.vertices.iter().zip(&m.vertices) {
            assert!((a - b).norm() < 1e-6);
        }
        back.validate().unwrap();
        assert!(parse_glb(&bytes[..30]).is_err());
    }

    #[test]
    fn normalization() {
        let prim = Primitive::new(
            PrimitiveKind::Box,
            Pose::from_translation(Vec3::new(3.0, 0.0, 0.0)),
            Vec3::new(2.0, 1.0, 0.5),
        );
        let m = normalize_unit_box(tessellate_primitive(&prim, 1));
        let b = m.bounds().unwrap();
        assert!((b.extents().max() - 1.0).abs() < 1e-12);
        assert!(b.center().norm() < 1e-12);
        let inside = sample();
        assert_eq!(normalize_unit_box(inside.clone()), inside);
    }
}
