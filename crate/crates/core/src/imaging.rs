//! Image aliases, PNG codecs and resampling shared by the other modules.

use std::io::Cursor;

use image::imageops::{self, FilterType};
use image::{ImageBuffer, ImageFormat, Luma, Rgb, RgbImage};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use image::GrayImage;
pub type DepthImage = ImageBuffer<Luma<f32>, Vec<f32>>;
pub type Depth16Image = ImageBuffer<Luma<u16>, Vec<u16>>;

pub const MID_GRAY: Rgb<u8> = Rgb([128, 128, 128]);

pub fn encode_png<P, C>(img: &ImageBuffer<P, C>) -> Result<Vec<u8>>
where
    P: image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::image("png encode", e))?;
    Ok(out.into_inner())
}

pub fn decode_rgb(bytes: &[u8], context: &str) -> Result<RgbImage> {
    image::load_from_memory(bytes)
        .map(|img| img.to_rgb8())
        .map_err(|e| Error::image(context, e))
}

pub fn decode_gray(bytes: &[u8], context: &str) -> Result<GrayImage> {
    image::load_from_memory(bytes)
        .map(|img| img.to_luma8())
        .map_err(|e| Error::image(context, e))
}

pub fn decode_gray16(bytes: &[u8], context: &str) -> Result<Depth16Image> {
    image::load_from_memory(bytes)
        .map(|img| img.to_luma16())
        .map_err(|e| Error::image(context, e))
}

/// Width and height of an encoded image without decoding pixels.
pub fn probe_dimensions(bytes: &[u8], context: &str) -> Result<(u32, u32)> {
    image::ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| Error::image(context, e))?
        .into_dimensions()
        .map_err(|e| Error::image(context, e))
}

/// Bilinear resample, used when shrinking into grid tiles.
pub fn downscale(img: &RgbImage, width: u32, height: u32) -> RgbImage {
    if img.dimensions() == (width, height) {
        return img.clone();
    }
    imageops::resize(img, width, height, FilterType::Triangle)
}

/// Bicubic resample, used when growing edited tiles back to dataset size.
pub fn upscale(img: &RgbImage, width: u32, height: u32) -> RgbImage {
    if img.dimensions() == (width, height) {
        return img.clone();
    }
    imageops::resize(img, width, height, FilterType::CatmullRom)
}

/// Nearest-neighbour resample for binary masks.
pub fn resize_mask(mask: &GrayImage, width: u32, height: u32) -> GrayImage {
    if mask.dimensions() == (width, height) {
        return mask.clone();
    }
    imageops::resize(mask, width, height, FilterType::Nearest)
}

/// Quantizes a depth image to 16 bits. Returns the image and the depth that
/// maps to 65535 (0 when the image is empty).
pub fn quantize_depth(depth: &DepthImage) -> (Depth16Image, f32) {
    let scale = depth.pixels().map(|p| p.0[0]).fold(0.0f32, f32::max);
    let img = Depth16Image::from_fn(depth.width(), depth.height(), |x, y| {
        let d = depth.get_pixel(x, y).0[0];
        if scale > 0.0 && d > 0.0 {
            Luma([((d / scale) * 65535.0).round().clamp(1.0, 65535.0) as u16])
        } else {
            Luma([0])
        }
    });
    (img, scale)
}

pub fn dequantize_depth(img: &Depth16Image, scale: f32) -> DepthImage {
    DepthImage::from_fn(img.width(), img.height(), |x, y| {
        Luma([img.get_pixel(x, y).0[0] as f32 / 65535.0 * scale])
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn mean_rgb(img: &RgbImage) -> [f32; 3] {
    let n = (img.width() as f64 * img.height() as f64).max(1.0);
    let mut sum = [0.0f64; 3];
    for p in img.pixels() {
        for (s, ch) in sum.iter_mut().zip(p.0) {
            *s += ch as f64;
        }
    }
    sum.map(|s| (s / n / 255.0) as f32)
}
