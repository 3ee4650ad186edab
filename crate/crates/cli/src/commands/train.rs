use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Args;
use dprf_core::checkpoint;
use dprf_core::dataset::{load_blender, LoadOptions};
use dprf_core::pipeline::{train_static, PipelineConfig};

use crate::config_file::{self, FileValues};

use super::{config_snapshot, parse_background};

#[derive(Args)]
pub struct TrainArgs {
    /// Blender-layout dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Output checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// Visual hull point budget.
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Maximum spherical harmonics degree (0..=4).
    #[arg(long)]
    pub lmax: Option<usize>,
    /// Splat kernel radius in NDC units.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Contributors kept per pixel.
    #[arg(long)]
    pub ppp: Option<usize>,
    /// Total variation weight.
    #[arg(long)]
    pub tv: Option<f64>,
    /// Integer image downscale factor.
    #[arg(long)]
    pub downscale: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `key = value` config file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training split name.
    #[arg(long)]
    pub split: Option<String>,
    /// Background color: white or black.
    #[arg(long)]
    pub background: Option<String>,
    /// Coarse-to-fine rounds.
    #[arg(long)]
    pub c2f_rounds: Option<usize>,
    #[arg(long)]
    pub lr_sh: Option<f64>,
    #[arg(long)]
    pub lr_pos: Option<f64>,
    /// Frustum depth range used for scene bounds estimation.
    #[arg(long)]
    pub near: Option<f64>,
    #[arg(long)]
    pub far: Option<f64>,
}

pub struct ResolvedTrain {
    pub pipeline: PipelineConfig,
    pub split: String,
    pub downscale: u32,
}

/// Defaults, then config file, then CLI flags.
pub fn resolve(args: &TrainArgs) -> Result<ResolvedTrain> {
    let file = match &args.config {
        Some(path) => FileValues(config_file::parse(path)?),
        None => FileValues(Default::default()),
    };
    let mut pipeline = PipelineConfig::default();
    let mut split = "train".to_string();
    let mut downscale = 1u32;

    macro_rules! setting {
        ($target:expr, $key:literal, $flag:expr) => {
            if let Some(v) = file.get($key)? {
                $target = v;
            }
            if let Some(v) = &$flag {
                $target = v.clone();
            }
        };
    }

    setting!(pipeline.hull.target_count, "points", args.points);
    setting!(pipeline.train.epochs, "epochs", args.epochs);
    setting!(pipeline.hull.l_max, "lmax", args.lmax);
    setting!(pipeline.raster.kernel_radius, "radius", args.radius);
    setting!(pipeline.raster.points_per_pixel, "ppp", args.ppp);
    setting!(pipeline.train.tv_weight, "tv", args.tv);
    setting!(downscale, "downscale", args.downscale);
    setting!(pipeline.train.lr_sh, "lr_sh", args.lr_sh);
    setting!(pipeline.train.lr_pos, "lr_pos", args.lr_pos);
    setting!(pipeline.c2f.rounds, "c2f_rounds", args.c2f_rounds);
    setting!(pipeline.bounds_near, "near", args.near);
    setting!(pipeline.bounds_far, "far", args.far);
    setting!(split, "split", args.split);
    if let Some(v) = file.get::<u64>("seed")? {
        pipeline.train.seed = v;
        pipeline.hull.seed = v;
    }
    if let Some(v) = args.seed {
        pipeline.train.seed = v;
        pipeline.hull.seed = v;
    }
    let mut background: Option<String> = file.get("background")?;
    if args.background.is_some() {
        background = args.background.clone();
    }
    if let Some(name) = background {
        pipeline.raster.background = parse_background(&name)?;
    }
    Ok(ResolvedTrain {
        pipeline,
        split,
        downscale,
    })
}

pub fn run(args: TrainArgs) -> Result<ExitCode> {
    let resolved = resolve(&args)?;
    let pipeline = resolved.pipeline;
    let views = load_blender(
        &args.data,
        &resolved.split,
        &LoadOptions {
            downscale: resolved.downscale,
            background: pipeline.raster.background,
        },
    )?;
    eprintln!(
        "loaded {} views at {}x{} (split {}, downscale {})",
        views.len(),
        views[0].camera.width,
        views[0].camera.height,
        resolved.split,
        resolved.downscale
    );

    let metrics_path = args.out.with_extension("metrics");
    let mut log = std::fs::File::create(&metrics_path)
        .with_context(|| format!("cannot create {}", metrics_path.display()))?;
    let outcome = train_static(&views, &pipeline, |stats| {
        println!("{stats}");
        let _ = writeln!(log, "{stats}");
    })?;

    let (width, height) = (views[0].camera.width, views[0].camera.height);
    let snapshot = config_snapshot(
        &pipeline,
        &args.data.to_string_lossy(),
        &resolved.split,
        resolved.downscale,
        width,
        height,
        outcome.train_seconds,
    );
    checkpoint::save_checkpoint(&outcome.cloud, &snapshot, &args.out)?;
    let bytes = std::fs::metadata(&args.out)?.len();
    println!(
        "trained {} points in {:.1}s; checkpoint {} ({} bytes), metrics {}",
        outcome.cloud.len(),
        outcome.train_seconds,
        args.out.display(),
        bytes,
        metrics_path.display()
    );
    Ok(ExitCode::SUCCESS)
}
