pub mod eval;
pub mod gradcheck;
pub mod render;
pub mod train;
pub mod video;

use std::collections::BTreeMap;

use anyhow::{bail, Result};
use dprf_core::pipeline::PipelineConfig;

/// Background palette shared by train/eval/render.
pub fn parse_background(name: &str) -> Result<[f64; 3]> {
    match name {
        "white" => Ok([1.0; 3]),
        "black" => Ok([0.0; 3]),
        other => bail!("unknown background `{other}` (expected white or black)"),
    }
}

pub fn background_name(bg: [f64; 3]) -> &'static str {
    if bg == [0.0; 3] {
        "black"
    } else {
        "white"
    }
}

/// Configuration snapshot stored inside checkpoints, enough to re-render
/// and evaluate without repeating flags.
pub fn config_snapshot(
    pipeline: &PipelineConfig,
    data_dir: &str,
    split: &str,
    downscale: u32,
    width: u32,
    height: u32,
    train_seconds: f64,
) -> BTreeMap<String, String> {
    let mut cfg = BTreeMap::new();
    let raster = &pipeline.raster;
    cfg.insert("kernel_radius".into(), format!("{}", raster.kernel_radius));
    cfg.insert(
        "points_per_pixel".into(),
        format!("{}", raster.points_per_pixel),
    );
    cfg.insert(
        "cutoff_multiplier".into(),
        format!("{}", raster.cutoff_multiplier),
    );
    cfg.insert("near_clip".into(), format!("{}", raster.near_clip));
    cfg.insert("alpha_ceiling".into(), format!("{}", raster.alpha_ceiling));
    cfg.insert(
        "background".into(),
        background_name(raster.background).into(),
    );
    let train = &pipeline.train;
    cfg.insert("lr_sh".into(), format!("{}", train.lr_sh));
    cfg.insert("lr_pos".into(), format!("{}", train.lr_pos));
    cfg.insert("decay".into(), format!("{}", train.decay));
    cfg.insert("epochs".into(), format!("{}", train.epochs));
    cfg.insert("tv_weight".into(), format!("{}", train.tv_weight));
    cfg.insert("batch".into(), format!("{}", train.batch));
    cfg.insert("seed".into(), format!("{}", train.seed));
    cfg.insert("c2f_rounds".into(), format!("{}", pipeline.c2f.rounds));
    cfg.insert("c2f_voxel_grid".into(), format!("{}", pipeline.c2f.voxel_grid));
    cfg.insert("c2f_knn".into(), format!("{}", pipeline.c2f.knn));
    cfg.insert(
        "refine_lr_scale".into(),
        format!("{}", pipeline.c2f.refine_lr_scale),
    );
    cfg.insert("hull_points".into(), format!("{}", pipeline.hull.target_count));
    cfg.insert("data_dir".into(), data_dir.into());
    cfg.insert("split".into(), split.into());
    cfg.insert("downscale".into(), format!("{downscale}"));
    cfg.insert("width".into(), format!("{width}"));
    cfg.insert("height".into(), format!("{height}"));
    cfg.insert("train_seconds".into(), format!("{train_seconds:.3}"));
    cfg
}

/// Rebuild the raster configuration recorded in a checkpoint.
pub fn raster_from_snapshot(
    cfg: &BTreeMap<String, String>,
) -> Result<dprf_core::render::RasterConfig> {
    let mut raster = dprf_core::render::RasterConfig::default();
    let get = |key: &str| cfg.get(key).map(|s| s.as_str());
    if let Some(v) = get("kernel_radius") {
        raster.kernel_radius = v.parse()?;
    }
    if let Some(v) = get("points_per_pixel") {
        raster.points_per_pixel = v.parse()?;
    }
    if let Some(v) = get("cutoff_multiplier") {
        raster.cutoff_multiplier = v.parse()?;
    }
    if let Some(v) = get("near_clip") {
        raster.near_clip = v.parse()?;
    }
    if let Some(v) = get("alpha_ceiling") {
        raster.alpha_ceiling = v.parse()?;
    }
    if let Some(v) = get("background") {
        raster.background = parse_background(v)?;
    }
    Ok(raster)
}
