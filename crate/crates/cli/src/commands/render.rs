use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Args;
use dprf_core::camera::Camera;
use dprf_core::checkpoint::load_checkpoint;
use dprf_core::dataset;
use dprf_core::image_io;
use dprf_core::render::render_view;
use nalgebra::Matrix4;
use serde::Deserialize;

use super::raster_from_snapshot;

#[derive(Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Either a view index into the dataset split, or a path to a camera
    /// JSON file {camera_angle_x, width, height, transform_matrix}.
    #[arg(long)]
    pub pose: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Optional depth map output (normalized to [0, 1]).
    #[arg(long)]
    pub depth: Option<PathBuf>,
    /// Dataset directory for index poses; defaults to the checkpoint's
    /// recorded data directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: String,
}

#[derive(Deserialize)]
struct CameraJson {
    camera_angle_x: f64,
    width: u32,
    height: u32,
    transform_matrix: [[f64; 4]; 4],
}

fn camera_from_pose_file(path: &PathBuf) -> Result<Camera> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read pose file {}", path.display()))?;
    let parsed: CameraJson = serde_json::from_str(&text)
        .with_context(|| format!("malformed pose file {}", path.display()))?;
    let c2w = Matrix4::from_fn(|r, c| parsed.transform_matrix[r][c]);
    Ok(dataset::pose_to_camera(
        &c2w,
        parsed.camera_angle_x,
        parsed.width,
        parsed.height,
    )?)
}

pub fn run(args: RenderArgs) -> Result<ExitCode> {
    let ckpt = load_checkpoint(&args.ckpt)?;
    let raster = raster_from_snapshot(&ckpt.config)?;

    let camera = if let Ok(index) = args.pose.parse::<usize>() {
        let data_dir = match &args.data {
            Some(d) => d.clone(),
            None => match ckpt.config.get("data_dir") {
                Some(d) => PathBuf::from(d),
                None => bail!("pose index given but no --data and no data_dir in checkpoint"),
            },
        };
        let manifest = dataset::load_manifest(&data_dir, &args.split)?;
        let Some((_, c2w)) = manifest.frames.get(index) else {
            bail!(
                "pose index {index} out of range ({} frames in split {})",
                manifest.frames.len(),
                args.split
            );
        };
        let width: u32 = ckpt
            .config
            .get("width")
            .map(|s| s.parse())
            .transpose()?
            .unwrap_or(800);
        let height: u32 = ckpt
            .config
            .get("height")
            .map(|s| s.parse())
            .transpose()?
            .unwrap_or(width);
        dataset::pose_to_camera(c2w, manifest.camera_angle_x, width, height)?
    } else {
        camera_from_pose_file(&PathBuf::from(&args.pose))?
    };

    let buffers = render_view(&ckpt.cloud, &camera, &raster)?;
    image_io::write_image(&buffers.clamped_rgb(), camera.width, camera.height, &args.out)?;
    println!("wrote {}", args.out.display());

    if let Some(depth_path) = &args.depth {
        // Normalize covered depth to [0, 1]; empty pixels stay black.
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (d, a) in buffers.depth.iter().zip(&buffers.alpha_acc) {
            if *a > 0.0 {
                let z = d / a;
                lo = lo.min(z);
                hi = hi.max(z);
            }
        }
        let range = (hi - lo).max(1e-12);
        let mut gray = vec![0.0; buffers.pixel_count() * 3];
        for i in 0..buffers.pixel_count() {
            if buffers.alpha_acc[i] > 0.0 {
                let v = 1.0 - (buffers.depth[i] / buffers.alpha_acc[i] - lo) / range;
                gray[i * 3] = v;
                gray[i * 3 + 1] = v;
                gray[i * 3 + 2] = v;
            }
        }
        image_io::write_image(&gray, camera.width, camera.height, depth_path)?;
        println!("wrote {}", depth_path.display());
    }
    Ok(ExitCode::SUCCESS)
}
