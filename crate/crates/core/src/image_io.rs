//! Lossless 8-bit raster IO. Floats map to bytes as round(255 * clamp(v, 0, 1)).

use std::path::Path;

use image::{ImageBuffer, Rgb, Rgba};

use crate::error::{Error, Result};

#[inline]
fn to_byte(v: f64) -> u8 {
    (255.0 * v.clamp(0.0, 1.0)).round() as u8
}

/// Write a row-major RGB float image as PNG.
pub fn write_image(rgb: &[f64], width: u32, height: u32, path: &Path) -> Result<()> {
    let n = width as usize * height as usize * 3;
    if rgb.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "image buffer has {} values, expected {n}",
            rgb.len()
        )));
    }
    let mut img = ImageBuffer::<Rgb<u8>, Vec<u8>>::new(width, height);
    for (i, pixel) in img.pixels_mut().enumerate() {
        *pixel = Rgb([
            to_byte(rgb[i * 3]),
            to_byte(rgb[i * 3 + 1]),
            to_byte(rgb[i * 3 + 2]),
        ]);
    }
    img.save(path)?;
    Ok(())
}

/// Write RGBA (straight alpha) as PNG.
pub fn write_image_rgba(
    rgb: &[f64],
    alpha: &[f64],
    width: u32,
    height: u32,
    path: &Path,
) -> Result<()> {
    let pixels = width as usize * height as usize;
    if rgb.len() != pixels * 3 || alpha.len() != pixels {
        return Err(Error::ShapeMismatch("rgba buffers do not match dimensions".into()));
    }
    let mut img = ImageBuffer::<Rgba<u8>, Vec<u8>>::new(width, height);
    for (i, pixel) in img.pixels_mut().enumerate() {
        *pixel = Rgba([
            to_byte(rgb[i * 3]),
            to_byte(rgb[i * 3 + 1]),
            to_byte(rgb[i * 3 + 2]),
            to_byte(alpha[i]),
        ]);
    }
    img.save(path)?;
    Ok(())
}

/// Decoded image: RGB in [0, 1] plus the alpha plane when the file has one.
pub struct LoadedImage {
    pub rgb: Vec<f32>,
    pub alpha: Option<Vec<f32>>,
    pub width: u32,
    pub height: u32,
}

pub fn read_image(path: &Path) -> Result<LoadedImage> {
    let dynamic = image::open(path)?;
    let width = dynamic.width();
    let height = dynamic.height();
    let has_alpha = dynamic.color().has_alpha();
    let rgba = dynamic.into_rgba8();
    let pixels = width as usize * height as usize;
    let mut rgb = Vec::with_capacity(pixels * 3);
    let mut alpha = Vec::with_capacity(pixels);
    for p in rgba.pixels() {
        rgb.push(p.0[0] as f32 / 255.0);
        rgb.push(p.0[1] as f32 / 255.0);
        rgb.push(p.0[2] as f32 / 255.0);
        alpha.push(p.0[3] as f32 / 255.0);
    }
    Ok(LoadedImage {
        rgb,
        alpha: has_alpha.then_some(alpha),
        width,
        height,
    })
}
