//! NeRF-synthetic (Blender) dataset loading: `transforms_<split>.json`
//! manifests with camera-to-world poses in the OpenGL convention, RGBA
//! images whose alpha channel doubles as the foreground mask.

use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Matrix4, Vector3};
use rayon::prelude::*;
use serde::Deserialize;

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::image_io;
use crate::scene::ViewSample;

#[derive(Debug, Deserialize)]
struct TransformsJson {
    camera_angle_x: f64,
    frames: Vec<FrameJson>,
}

#[derive(Debug, Deserialize)]
struct FrameJson {
    file_path: String,
    transform_matrix: [[f64; 4]; 4],
}

/// Parsed manifest: the shared horizontal field of view plus per-frame
/// image paths and camera-to-world matrices, in manifest order.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub camera_angle_x: f64,
    pub frames: Vec<(String, Matrix4<f64>)>,
}

pub fn load_manifest(dir: &Path, split: &str) -> Result<DatasetManifest> {
    let path = dir.join(format!("transforms_{split}.json"));
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Dataset(format!("cannot read {}: {e}", path.display())))?;
    let parsed: TransformsJson = serde_json::from_str(&text)
        .map_err(|e| Error::Dataset(format!("malformed {}: {e}", path.display())))?;
    let frames = parsed
        .frames
        .into_iter()
        .map(|f| {
            let m = Matrix4::from_fn(|r, c| f.transform_matrix[r][c]);
            validate_pose(&m)?;
            Ok((f.file_path, m))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DatasetManifest {
        camera_angle_x: parsed.camera_angle_x,
        frames,
    })
}

fn validate_pose(c2w: &Matrix4<f64>) -> Result<()> {
    let bottom = [c2w[(3, 0)], c2w[(3, 1)], c2w[(3, 2)], c2w[(3, 3)] - 1.0];
    if bottom.iter().any(|v| v.abs() > 1e-6) {
        return Err(Error::Dataset("pose bottom row is not (0,0,0,1)".into()));
    }
    let rot = c2w.fixed_view::<3, 3>(0, 0).into_owned();
    let dev = (rot.transpose() * rot - Matrix3::identity()).abs().max();
    if dev > 1e-4 {
        return Err(Error::Dataset(format!(
            "pose rotation block not orthonormal (deviation {dev:.2e}); pose not invertible as a rigid transform"
        )));
    }
    Ok(())
}

/// Convert an OpenGL-convention camera-to-world pose (camera looks down -z,
/// y up) into the world-to-camera form used by projection, plus intrinsics
/// from the horizontal field of view.
pub fn pose_to_camera(
    c2w: &Matrix4<f64>,
    camera_angle_x: f64,
    width: u32,
    height: u32,
) -> Result<Camera> {
    validate_pose(c2w)?;
    let rot_c2w = c2w.fixed_view::<3, 3>(0, 0).into_owned();
    let center = Vector3::new(c2w[(0, 3)], c2w[(1, 3)], c2w[(2, 3)]);
    // Orthonormal inverse, then flip y and z into the CV convention.
    let w2c_gl = rot_c2w.transpose();
    let flip = Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0));
    let rotation = flip * w2c_gl;
    let translation = -(rotation * center);
    let focal = 0.5 * width as f64 / (camera_angle_x / 2.0).tan();
    let intrinsics = Matrix3::new(
        focal,
        0.0,
        width as f64 / 2.0,
        0.0,
        focal,
        height as f64 / 2.0,
        0.0,
        0.0,
        1.0,
    );
    Camera::new(rotation, translation, intrinsics, width, height)
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    /// Integer box-filter downscale factor.
    pub downscale: u32,
    /// Background composited behind the alpha channel.
    pub background: [f64; 3],
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            downscale: 1,
            background: [1.0; 3],
        }
    }
}

fn resolve_image_path(dir: &Path, file_path: &str) -> PathBuf {
    let raw = dir.join(file_path.trim_start_matches("./"));
    if raw.extension().is_some() {
        raw
    } else {
        raw.with_extension("png")
    }
}

fn downscale_plane(values: &[f64], width: usize, height: usize, factor: usize) -> Vec<f64> {
    let (ow, oh) = (width / factor, height / factor);
    let inv = 1.0 / (factor * factor) as f64;
    let mut out = vec![0.0; ow * oh];
    for oy in 0..oh {
        for ox in 0..ow {
            let mut acc = 0.0;
            for dy in 0..factor {
                for dx in 0..factor {
                    acc += values[(oy * factor + dy) * width + ox * factor + dx];
                }
            }
            out[oy * ow + ox] = acc * inv;
        }
    }
    out
}

/// Load one split as view samples: poses converted, RGB composited over the
/// configured background at full resolution, then box-filtered by the
/// integer downscale factor. A pixel is foreground if any covered source
/// pixel had alpha > 0.
pub fn load_blender(dir: &Path, split: &str, opts: &LoadOptions) -> Result<Vec<ViewSample>> {
    if opts.downscale == 0 {
        return Err(Error::Config("downscale must be >= 1".into()));
    }
    let manifest = load_manifest(dir, split)?;
    let views: Vec<Result<ViewSample>> = manifest
        .frames
        .par_iter()
        .map(|(file_path, c2w)| {
            let path = resolve_image_path(dir, file_path);
            let img = image_io::read_image(&path)
                .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
            let factor = opts.downscale;
            if img.width % factor != 0 || img.height % factor != 0 {
                return Err(Error::Dataset(format!(
                    "{}x{} not divisible by downscale {factor}",
                    img.width, img.height
                )));
            }
            let pixels = img.width as usize * img.height as usize;
            let alpha: Vec<f64> = match &img.alpha {
                Some(a) => a.iter().map(|&v| v as f64).collect(),
                None => vec![1.0; pixels],
            };
            // Composite first, then filter; the mask comes from filtered
            // coverage so thin structures survive.
            let mut composited = vec![0.0f64; pixels * 3];
            for i in 0..pixels {
                let a = alpha[i];
                for ch in 0..3 {
                    composited[i * 3 + ch] =
                        img.rgb[i * 3 + ch] as f64 * a + opts.background[ch] * (1.0 - a);
                }
            }
            let (w, h) = (img.width as usize, img.height as usize);
            let f = factor as usize;
            let (image, mask) = if f == 1 {
                (composited, alpha.iter().map(|&a| a > 0.0).collect())
            } else {
                let planes: Vec<Vec<f64>> = (0..3)
                    .map(|ch| {
                        let plane: Vec<f64> =
                            (0..pixels).map(|i| composited[i * 3 + ch]).collect();
                        downscale_plane(&plane, w, h, f)
                    })
                    .collect();
                let small_alpha = downscale_plane(&alpha, w, h, f);
                let out_pixels = small_alpha.len();
                let mut image = vec![0.0; out_pixels * 3];
                for i in 0..out_pixels {
                    for ch in 0..3 {
                        image[i * 3 + ch] = planes[ch][i];
                    }
                }
                (image, small_alpha.iter().map(|&a| a > 0.0).collect())
            };
            let camera = pose_to_camera(
                c2w,
                manifest.camera_angle_x,
                img.width / factor,
                img.height / factor,
            )?;
            ViewSample::new(camera, image, mask)
        })
        .collect();
    views.into_iter().collect()
}
