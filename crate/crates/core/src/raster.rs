//! Software z-buffer rasterizer producing color, depth and mask condition
//! images.
//!
//! Depth is stored as distance along the camera −z axis (not ray length) and
//! is 0 where nothing was drawn. Fragments are resolved by depth first, then
//! by mesh index, then by triangle index, so the output never depends on how
//! rows are distributed across worker threads.

use image::{Luma, Rgb, RgbImage};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{CameraView, TriMesh, Vec3};
use crate::imaging::{DepthImage, GrayImage};

pub const MASK_ON: u8 = 255;

const ROWS_PER_BAND: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub color: RgbImage,
    pub depth: DepthImage,
    /// 255 where a fragment was drawn, 0 elsewhere.
    pub mask: GrayImage,
}

impl RenderOutput {
    pub fn empty(width: u32, height: u32) -> Self {
        RenderOutput {
            color: RgbImage::new(width, height),
            depth: DepthImage::new(width, height),
            mask: GrayImage::new(width, height),
        }
    }

    pub fn dimensions(&self) -> (u32, u32) {
        self.color.dimensions()
    }

    pub fn covered_pixels(&self) -> usize {
        self.mask.pixels().filter(|p| p.0[0] == MASK_ON).count()
    }
}

#[derive(Clone, Copy)]
struct ClipVertex {
    cam: Vec3,
    color: [f32; 3],
}

/// Screen-space triangle ready for scan conversion.
struct ScreenTri {
    xy: [(f64, f64); 3],
    inv_depth: [f64; 3],
    color_over_depth: [[f64; 3]; 3],
    shade: f64,
    area: f64,
    y_min: f64,
    y_max: f64,
    x_min: f64,
    x_max: f64,
}

/// Rasterizes `meshes` (world coordinates) from `view`.
pub fn render_meshes(view: &CameraView, meshes: &[TriMesh], near: f64, far: f64) -> Result<RenderOutput> {
    if !(near > 0.0 && near < far) {
        return Err(Error::InvalidClipRange { near, far });
    }
    let (width, height) = view.intrinsics.dimensions();
    let tris = setup_triangles(view, meshes, near);

    let w = width as usize;
    let h = height as usize;
    let mut depth = vec![0.0f32; w * h];
    let mut color = vec![0u8; w * h * 3];
    let mut mask = vec![0u8; w * h];

    depth
        .par_chunks_mut(w * ROWS_PER_BAND)
        .zip(color.par_chunks_mut(w * ROWS_PER_BAND * 3))
        .zip(mask.par_chunks_mut(w * ROWS_PER_BAND))
        .enumerate()
        .for_each(|(band, ((depth, color), mask))| {
            let y0 = band * ROWS_PER_BAND;
            let rows = depth.len() / w;
            let mut zbuf = vec![f64::INFINITY; rows * w];
            for tri in &tris {
                raster_band(tri, y0, rows, w, near, far, &mut zbuf, depth, color, mask);
            }
        });

    Ok(RenderOutput {
        color: RgbImage::from_raw(width, height, color).expect("buffer size"),
        depth: DepthImage::from_raw(width, height, depth).expect("buffer size"),
        mask: GrayImage::from_raw(width, height, mask).expect("buffer size"),
    })
}

fn setup_triangles(view: &CameraView, meshes: &[TriMesh], near: f64) -> Vec<ScreenTri> {
    let k = view.intrinsics;
    let mut out = Vec::new();
    for mesh in meshes {
        let cam: Vec<Vec3> = mesh.vertices.iter().map(|p| view.world_to_camera(p)).collect();
        for tri in &mesh.triangles {
            let [a, b, c] = tri.map(|i| i as usize);
            let normal = (cam[b] - cam[a]).cross(&(cam[c] - cam[a]));
            let len = normal.norm();
            if !(len > 0.0) {
                continue;
            }
            // Headlight along the view axis; culling is off so both sides light.
            let shade = (normal.z / len).abs();
            let poly = clip_near(
                [a, b, c].map(|i| ClipVertex {
                    cam: cam[i],
                    color: mesh.vertex_colors[i],
                }),
                near,
            );
            if poly.len() < 3 {
                continue;
            }
            let screen: Vec<((f64, f64), f64, [f64; 3])> = poly
                .iter()
                .map(|v| {
                    let d = -v.cam.z;
                    let inv = 1.0 / d;
                    let xy = (k.cx + k.fx * v.cam.x * inv, k.cy - k.fy * v.cam.y * inv);
                    (xy, inv, v.color.map(|c| c as f64 * inv))
                })
                .collect();
            for i in 1..screen.len() - 1 {
                let verts = [screen[0], screen[i], screen[i + 1]];
                let xy = verts.map(|v| v.0);
                let area = edge(xy[0], xy[1], xy[2]);
                if area == 0.0 || !area.is_finite() {
                    continue;
                }
                out.push(ScreenTri {
                    xy,
                    inv_depth: verts.map(|v| v.1),
                    color_over_depth: verts.map(|v| v.2),
                    shade,
                    area,
                    y_min: xy.iter().map(|p| p.1).fold(f64::INFINITY, f64::min),
                    y_max: xy.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max),
                    x_min: xy.iter().map(|p| p.0).fold(f64::INFINITY, f64::min),
                    x_max: xy.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max),
                });
            }
        }
    }
    out
}

/// Sutherland–Hodgman against the plane z = −near, keeping z ≤ −near.
fn clip_near(tri: [ClipVertex; 3], near: f64) -> Vec<ClipVertex> {
    let inside = |v: &ClipVertex| v.cam.z <= -near;
    if tri.iter().all(inside) {
        return tri.to_vec();
    }
    let mut out = Vec::with_capacity(4);
    for i in 0..3 {
        let cur = tri[i];
        let next = tri[(i + 1) % 3];
        if inside(&cur) {
            out.push(cur);
        }
        if inside(&cur) != inside(&next) {
            let t = (-near - cur.cam.z) / (next.cam.z - cur.cam.z);
            let lerp = |a: f32, b: f32| a + (b - a) * t as f32;
            out.push(ClipVertex {
                cam: cur.cam + (next.cam - cur.cam) * t,
                color: [
                    lerp(cur.color[0], next.color[0]),
                    lerp(cur.color[1], next.color[1]),
                    lerp(cur.color[2], next.color[2]),
                ],
            });
        }
    }
    out
}

#[inline]
fn edge(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

#[allow(clippy::too_many_arguments)]
fn raster_band(
    tri: &ScreenTri,
    y0: usize,
    rows: usize,
    w: usize,
    near: f64,
    far: f64,
    zbuf: &mut [f64],
    depth: &mut [f32],
    color: &mut [u8],
    mask: &mut [u8],
) {
    // Pixel (x, y) is sampled at its center (x + 0.5, y + 0.5).
    let py_lo = (tri.y_min - 0.5).ceil().max(y0 as f64);
    let py_hi = (tri.y_max - 0.5).floor().min((y0 + rows) as f64 - 1.0);
    let px_lo = (tri.x_min - 0.5).ceil().max(0.0);
    let px_hi = (tri.x_max - 0.5).floor().min(w as f64 - 1.0);
    if py_lo > py_hi || px_lo > px_hi {
        return;
    }
    let [a, b, c] = tri.xy;
    let inv_area = 1.0 / tri.area;
    for py in py_lo as usize..=py_hi as usize {
        let row = py - y0;
        for px in px_lo as usize..=px_hi as usize {
            let p = (px as f64 + 0.5, py as f64 + 0.5);
            let w0 = edge(b, c, p) * inv_area;
            let w1 = edge(c, a, p) * inv_area;
            let w2 = edge(a, b, p) * inv_area;
            if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                continue;
            }
            let inv_d = w0 * tri.inv_depth[0] + w1 * tri.inv_depth[1] + w2 * tri.inv_depth[2];
            let d = 1.0 / inv_d;
            if !(d > near && d < far) {
                continue;
            }
            let idx = row * w + px;
            if d >= zbuf[idx] {
                continue;
            }
            zbuf[idx] = d;
            depth[idx] = d as f32;
            mask[idx] = MASK_ON;
            for ch in 0..3 {
                let cod = w0 * tri.color_over_depth[0][ch]
                    + w1 * tri.color_over_depth[1][ch]
                    + w2 * tri.color_over_depth[2][ch];
                let v = (cod * d * tri.shade).clamp(0.0, 1.0);
                color[idx * 3 + ch] = (v * 255.0).round() as u8;
            }
        }
    }
}

/// Overlay color where the overlay mask is set, base pixel elsewhere.
pub fn composite_over(base: &RgbImage, overlay: &RenderOutput) -> Result<RgbImage> {
    if base.dimensions() != overlay.dimensions() {
        return Err(Error::DimensionMismatch {
            context: "composite_over",
            expected: base.dimensions(),
            actual: overlay.dimensions(),
        });
    }
    let mut out = base.clone();
    for ((dst, m), src) in out.pixels_mut().zip(overlay.mask.pixels()).zip(overlay.color.pixels()) {
        if m.0[0] == MASK_ON {
            *dst = *src;
        }
    }
    Ok(out)
}

/// Per-pixel OR of several masks of equal size.
pub fn mask_union<'a>(masks: impl IntoIterator<Item = &'a GrayImage>, width: u32, height: u32) -> GrayImage {
    let mut out = GrayImage::new(width, height);
    for m in masks {
        for (dst, src) in out.pixels_mut().zip(m.pixels()) {
            if src.0[0] == MASK_ON {
                *dst = Luma([MASK_ON]);
            }
        }
    }
    out
}

/// Solid-color helper used by tests and fixtures.
pub fn solid(width: u32, height: u32, rgb: [u8; 3]) -> RgbImage {
    RgbImage::from_pixel(width, height, Rgb(rgb))
}
