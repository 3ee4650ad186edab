use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Args;
use dprf_core::checkpoint::load_checkpoint;
use dprf_core::dataset::{load_blender, LoadOptions};
use dprf_core::metrics::{psnr, ssim, EvalReport, ViewEval};
use dprf_core::render::render_view;

use super::raster_from_snapshot;

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Report file (line-delimited key=value records).
    #[arg(long)]
    pub report: PathBuf,
    /// Downscale override; defaults to the factor recorded at training time.
    #[arg(long)]
    pub downscale: Option<u32>,
}

pub fn run(args: EvalArgs) -> Result<ExitCode> {
    let ckpt = load_checkpoint(&args.ckpt)?;
    let raster = raster_from_snapshot(&ckpt.config)?;
    let downscale = match args.downscale {
        Some(d) => d,
        None => ckpt
            .config
            .get("downscale")
            .map(|s| s.parse())
            .transpose()?
            .unwrap_or(1),
    };
    let views = load_blender(
        &args.data,
        &args.split,
        &LoadOptions {
            downscale,
            background: raster.background,
        },
    )?;

    let mut evals = Vec::with_capacity(views.len());
    for (index, view) in views.iter().enumerate() {
        let started = Instant::now();
        let buffers = render_view(&ckpt.cloud, &view.camera, &raster)?;
        let render_ms = started.elapsed().as_secs_f64() * 1e3;
        let rendered = buffers.clamped_rgb();
        let view_psnr = psnr(&rendered, &view.image)?;
        let view_ssim = ssim(
            &rendered,
            &view.image,
            view.camera.width as usize,
            view.camera.height as usize,
        )?;
        evals.push(ViewEval {
            index,
            psnr: view_psnr,
            ssim: view_ssim,
            render_ms,
        });
    }

    let checkpoint_bytes = std::fs::metadata(&args.ckpt)?.len();
    let train_seconds = ckpt
        .config
        .get("train_seconds")
        .and_then(|s| s.parse().ok());
    let resolution = (views[0].camera.width, views[0].camera.height);
    let report = EvalReport::from_views(
        evals,
        ckpt.cloud.len(),
        checkpoint_bytes,
        train_seconds,
        resolution,
        raster.background,
    );
    std::fs::write(&args.report, format!("{report}\n"))
        .with_context(|| format!("cannot write {}", args.report.display()))?;
    println!(
        "split={} views={} psnr_mean={:.4} ssim_mean={:.4} render_ms_mean={:.2}",
        args.split,
        report.views.len(),
        report.mean_psnr,
        report.mean_ssim,
        report.mean_render_ms
    );
    Ok(ExitCode::SUCCESS)
}
