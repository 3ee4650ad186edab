use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Args;
use dprf_core::checkpoint;
use dprf_core::dataset::{load_blender, LoadOptions};
use dprf_core::pipeline::PipelineConfig;
use dprf_core::video::{train_sequence, FrameSequence, VideoConfig};

use super::config_snapshot;

#[derive(Args)]
pub struct VideoArgs {
    /// Root directory containing frame_<idx>/ datasets.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for per-frame checkpoints and the sequence report.
    #[arg(long)]
    pub out: PathBuf,
    /// Epochs for warm-started frames (default: epochs / 4).
    #[arg(long)]
    pub warm_epochs: Option<usize>,
    /// Chamfer alignment steps.
    #[arg(long, default_value_t = 300)]
    pub align_steps: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub align_lr: f64,
    /// Neighbors averaged when transferring appearance.
    #[arg(long, default_value_t = 5)]
    pub transfer_k: usize,
    /// Re-run coarse-to-fine on warm-started frames.
    #[arg(long, default_value_t = false)]
    pub warm_c2f: bool,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lmax: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub downscale: u32,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "train")]
    pub split: String,
    #[arg(long)]
    pub c2f_rounds: Option<usize>,
}

/// Frame directories `frame_<idx>` under the root, ordered by index.
fn discover_frames(root: &PathBuf) -> Result<Vec<PathBuf>> {
    let mut frames: Vec<(u64, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(root)
        .with_context(|| format!("cannot read video root {}", root.display()))?
    {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().to_string();
        if let Some(index) = name.strip_prefix("frame_") {
            if let Ok(i) = index.parse::<u64>() {
                frames.push((i, entry.path()));
            }
        }
    }
    if frames.is_empty() {
        bail!("no frame_<idx> directories under {}", root.display());
    }
    frames.sort();
    Ok(frames.into_iter().map(|(_, p)| p).collect())
}

pub fn run(args: VideoArgs) -> Result<ExitCode> {
    let mut pipeline = PipelineConfig::default();
    if let Some(p) = args.points {
        pipeline.hull.target_count = p;
    }
    if let Some(e) = args.epochs {
        pipeline.train.epochs = e;
    }
    if let Some(l) = args.lmax {
        pipeline.hull.l_max = l;
    }
    if let Some(s) = args.seed {
        pipeline.train.seed = s;
        pipeline.hull.seed = s;
    }
    if let Some(r) = args.c2f_rounds {
        pipeline.c2f.rounds = r;
    }

    let mut video = VideoConfig::for_pipeline(&pipeline);
    if let Some(w) = args.warm_epochs {
        video.warm_epochs = w;
    }
    video.align_steps = args.align_steps;
    video.align_lr = args.align_lr;
    video.transfer_k = args.transfer_k;
    video.warm_c2f = args.warm_c2f;

    let frame_dirs = discover_frames(&args.data)?;
    eprintln!("found {} frames under {}", frame_dirs.len(), args.data.display());
    let opts = LoadOptions {
        downscale: args.downscale,
        background: pipeline.raster.background,
    };
    let frames = frame_dirs
        .iter()
        .map(|dir| load_blender(dir, &args.split, &opts))
        .collect::<dprf_core::error::Result<Vec<_>>>()?;
    let seq = FrameSequence::new(frames, true)?;

    std::fs::create_dir_all(&args.out)?;
    let results = train_sequence(&seq, &pipeline, &video, |frame, stats| {
        println!("frame={frame} {stats}");
    })?;

    let report_path = args.out.join("sequence_report.txt");
    let mut report = std::fs::File::create(&report_path)?;
    for (f, result) in results.iter().enumerate() {
        let ckpt_path = args.out.join(format!("frame_{f:03}.dprf"));
        let (width, height) = seq.frames[f]
            .first()
            .map(|v| (v.camera.width, v.camera.height))
            .unwrap_or((0, 0));
        let snapshot = config_snapshot(
            &pipeline,
            &frame_dirs[f].to_string_lossy(),
            &args.split,
            args.downscale,
            width,
            height,
            0.0,
        );
        checkpoint::save_checkpoint(&result.cloud, &snapshot, &ckpt_path)?;
        let line = format!(
            "frame={f} warm={} epochs={} final_loss={:.6e} points={}{}",
            result.warm_started,
            result.epochs_run,
            result.final_loss,
            result.cloud.len(),
            match result.align_chamfer {
                Some(cd) => format!(" align_chamfer={cd:.6e}"),
                None => String::new(),
            }
        );
        println!("{line}");
        writeln!(report, "{line}")?;
    }
    println!(
        "wrote {} checkpoints and {}",
        results.len(),
        report_path.display()
    );
    Ok(ExitCode::SUCCESS)
}
