//! Reference image grids: a ring of reference cameras around an object, and
//! color/depth/mask renders from those cameras tiled into one image per
//! channel with a single blank slot for the editor to fill.

use std::fs;
use std::path::Path;

use image::imageops;
use image::{GenericImage, GenericImageView, ImageBuffer, Luma, Pixel, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{look_at_pose, CameraIntrinsics, CameraView, Vec3};
use crate::imaging::{self, DepthImage, GrayImage, MID_GRAY};
use crate::raster::{RenderOutput, MASK_ON};

/// Grid shape: `rows × cols` slots, one of which stays blank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridShape {
    pub rows: u32,
    pub cols: u32,
    pub blank_index: u32,
}

impl Default for GridShape {
    fn default() -> Self {
        GridShape {
            rows: 3,
            cols: 3,
            blank_index: 4,
        }
    }
}

impl GridShape {
    pub fn slots(&self) -> usize {
        (self.rows * self.cols) as usize
    }

    /// Number of reference views (every slot but the blank one).
    pub fn reference_count(&self) -> usize {
        self.slots() - 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.slots() < 2 {
            return Err(Error::InvalidGrid(format!(
                "{}x{} grid needs at least 2 slots",
                self.rows, self.cols
            )));
        }
        if self.blank_index as usize >= self.slots() {
            return Err(Error::InvalidGrid(format!(
                "blank index {} outside {} slots",
                self.blank_index,
                self.slots()
            )));
        }
        Ok(())
    }

    /// Slot (row-major) holding the `tile`-th non-blank tile.
    pub fn slot_of_tile(&self, tile: usize) -> usize {
        if tile < self.blank_index as usize {
            tile
        } else {
            tile + 1
        }
    }

    fn slot_origin(&self, slot: usize, tile_w: u32, tile_h: u32) -> (u32, u32) {
        let slot = slot as u32;
        ((slot % self.cols) * tile_w, (slot / self.cols) * tile_h)
    }
}

/// Placement of the reference camera ring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingParams {
    /// Ring radius as a multiple of the object's bounding radius.
    pub radius_multiplier: f64,
    pub elevation_deg: f64,
}

impl Default for RingParams {
    fn default() -> Self {
        RingParams {
            radius_multiplier: 2.5,
            elevation_deg: 20.0,
        }
    }
}

/// `count` cameras evenly spaced in azimuth on a ring around `centroid`, all
/// looking at it with world +y up. Azimuth 0 sits on the +z side.
pub fn select_reference_cameras(
    centroid: &Vec3,
    bound_radius: f64,
    count: usize,
    intrinsics: &CameraIntrinsics,
    ring: &RingParams,
) -> Result<Vec<CameraView>> {
    if !(bound_radius > 0.0) || count == 0 {
        return Err(Error::InvalidGrid(format!(
            "reference ring needs positive radius and count, got {bound_radius} and {count}"
        )));
    }
    let radius = ring.radius_multiplier * bound_radius;
    let elevation = ring.elevation_deg.to_radians();
    (0..count)
        .map(|k| {
            let azimuth = (k as f64 * 360.0 / count as f64).to_radians();
            let offset = Vec3::new(
                elevation.cos() * azimuth.sin(),
                elevation.sin(),
                elevation.cos() * azimuth.cos(),
            ) * radius;
            let pose = look_at_pose(&(centroid + offset), centroid, &Vec3::y())?;
            Ok(CameraView::new(*intrinsics, pose))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceGrid {
    pub shape: GridShape,
    pub tile_width: u32,
    pub tile_height: u32,
    pub color: RgbImage,
    pub depth: DepthImage,
    pub mask: GrayImage,
    /// One view per non-blank slot, row-major, skipping the blank slot.
    pub views: Vec<CameraView>,
}

/// Tiles `tiles` into per-channel grid images. The blank slot is mid-gray in
/// color and zero in depth and mask.
pub fn assemble_grid(tiles: &[RenderOutput], views: Vec<CameraView>, shape: GridShape) -> Result<ReferenceGrid> {
    shape.validate()?;
    let expected = shape.reference_count();
    if tiles.len() != expected {
        return Err(Error::TileCountMismatch {
            expected,
            actual: tiles.len(),
        });
    }
    if views.len() != expected {
        return Err(Error::TileCountMismatch {
            expected,
            actual: views.len(),
        });
    }
    let (tw, th) = tiles[0].dimensions();
    if let Some(bad) = tiles.iter().find(|t| t.dimensions() != (tw, th)) {
        return Err(Error::DimensionMismatch {
            context: "assemble_grid tile",
            expected: (tw, th),
            actual: bad.dimensions(),
        });
    }
    let (gw, gh) = (tw * shape.cols, th * shape.rows);
    let mut color = RgbImage::new(gw, gh);
    let mut depth = DepthImage::new(gw, gh);
    let mut mask = GrayImage::new(gw, gh);

    let (bx, by) = shape.slot_origin(shape.blank_index as usize, tw, th);
    let blank = RgbImage::from_pixel(tw, th, MID_GRAY);
    color.copy_from(&blank, bx, by).expect("blank slot inside grid");

    for (i, tile) in tiles.iter().enumerate() {
        let (x, y) = shape.slot_origin(shape.slot_of_tile(i), tw, th);
        color.copy_from(&tile.color, x, y).expect("slot inside grid");
        depth.copy_from(&tile.depth, x, y).expect("slot inside grid");
        mask.copy_from(&tile.mask, x, y).expect("slot inside grid");
    }
    Ok(ReferenceGrid {
        shape,
        tile_width: tw,
        tile_height: th,
        color,
        depth,
        mask,
        views,
    })
}

/// Cuts a grid image into `rows·cols` tiles in row-major order, blank slot
/// included. No resampling.
pub fn split_grid<P>(
    grid: &ImageBuffer<P, Vec<P::Subpixel>>,
    rows: u32,
    cols: u32,
    tile_w: u32,
    tile_h: u32,
) -> Result<Vec<ImageBuffer<P, Vec<P::Subpixel>>>>
where
    P: Pixel + 'static,
{
    let expected = (cols * tile_w, rows * tile_h);
    if rows == 0 || cols == 0 || tile_w == 0 || tile_h == 0 || grid.dimensions() != expected {
        return Err(Error::DimensionMismatch {
            context: "split_grid",
            expected,
            actual: grid.dimensions(),
        });
    }
    let mut tiles = Vec::with_capacity((rows * cols) as usize);
    for r in 0..rows {
        for c in 0..cols {
            tiles.push(imageops::crop_imm(grid, c * tile_w, r * tile_h, tile_w, tile_h).to_image());
        }
    }
    Ok(tiles)
}

impl ReferenceGrid {
    pub fn grid_dimensions(&self) -> (u32, u32) {
        self.color.dimensions()
    }

    fn blank_origin(&self) -> (u32, u32) {
        self.shape
            .slot_origin(self.shape.blank_index as usize, self.tile_width, self.tile_height)
    }

    /// The blank slot region of a same-sized color grid.
    pub fn blank_tile_of(&self, color_grid: &RgbImage) -> RgbImage {
        let (x, y) = self.blank_origin();
        color_grid.view(x, y, self.tile_width, self.tile_height).to_image()
    }

    /// Copy of this grid with `tile` written into the blank slot of every
    /// channel.
    pub fn with_blank_content(&self, tile: &RenderOutput) -> Result<ReferenceGrid> {
        let dims = (self.tile_width, self.tile_height);
        if tile.dimensions() != dims {
            return Err(Error::DimensionMismatch {
                context: "blank slot content",
                expected: dims,
                actual: tile.dimensions(),
            });
        }
        let (x, y) = self.blank_origin();
        let mut out = self.clone();
        out.color.copy_from(&tile.color, x, y).expect("slot inside grid");
        out.depth.copy_from(&tile.depth, x, y).expect("slot inside grid");
        out.mask.copy_from(&tile.mask, x, y).expect("slot inside grid");
        Ok(out)
    }

    /// Non-blank tiles of an (edited) color grid, in view order.
    pub fn reference_tiles_of(&self, color_grid: &RgbImage) -> Result<Vec<RgbImage>> {
        let mut tiles = split_grid(
            color_grid,
            self.shape.rows,
            self.shape.cols,
            self.tile_width,
            self.tile_height,
        )?;
        tiles.remove(self.shape.blank_index as usize);
        Ok(tiles)
    }

    /// Writes `color.png`, `mask.png`, `depth.png` (16-bit) and `grid.json`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let (depth16, depth_scale) = imaging::quantize_depth(&self.depth);
        let write = |name: &str, bytes: Vec<u8>| {
            let p = dir.join(name);
            fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
        };
        write("color.png", imaging::encode_png(&self.color)?)?;
        write("mask.png", imaging::encode_png(&self.mask)?)?;
        write("depth.png", imaging::encode_png(&depth16)?)?;
        let meta = GridMetadata {
            rows: self.shape.rows,
            cols: self.shape.cols,
            blank_index: self.shape.blank_index,
            tile_width: self.tile_width,
            tile_height: self.tile_height,
            depth_scale,
            views: self.views.clone(),
        };
        write(
            "grid.json",
            serde_json::to_vec_pretty(&meta).expect("metadata serializes"),
        )
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<ReferenceGrid> {
        let dir = dir.as_ref();
        let read = |name: &str| {
            let p = dir.join(name);
            fs::read(&p).map_err(|e| Error::io(&p, e))
        };
        let meta: GridMetadata = serde_json::from_slice(&read("grid.json")?).map_err(|e| Error::Parse {
            path: dir.join("grid.json"),
            field: "<document>".into(),
            message: e.to_string(),
        })?;
        let shape = GridShape {
            rows: meta.rows,
            cols: meta.cols,
            blank_index: meta.blank_index,
        };
        shape.validate()?;
        let color = imaging::decode_rgb(&read("color.png")?, "grid color")?;
        let mask = imaging::decode_gray(&read("mask.png")?, "grid mask")?;
        let depth = imaging::dequantize_depth(
            &imaging::decode_gray16(&read("depth.png")?, "grid depth")?,
            meta.depth_scale,
        );
        let expected = (meta.tile_width * meta.cols, meta.tile_height * meta.rows);
        for (ctx, dims) in [
            ("grid color", color.dimensions()),
            ("grid mask", mask.dimensions()),
            ("grid depth", depth.dimensions()),
        ] {
            if dims != expected {
                return Err(Error::DimensionMismatch {
                    context: ctx,
                    expected,
                    actual: dims,
                });
            }
        }
        Ok(ReferenceGrid {
            shape,
            tile_width: meta.tile_width,
            tile_height: meta.tile_height,
            color,
            depth,
            mask,
            views: meta.views,
        })
    }

    /// mask ⇔ depth > 0 over the whole grid.
    pub fn channels_coherent(&self) -> bool {
        self.mask
            .pixels()
            .zip(self.depth.pixels())
            .all(|(m, d): (&Luma<u8>, &Luma<f32>)| (m.0[0] == MASK_ON) == (d.0[0] > 0.0))
    }
}

#[derive(Serialize, Deserialize)]
struct GridMetadata {
    rows: u32,
    cols: u32,
    blank_index: u32,
    tile_width: u32,
    tile_height: u32,
    depth_scale: f32,
    views: Vec<CameraView>,
}
