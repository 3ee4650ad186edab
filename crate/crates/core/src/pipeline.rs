//! Full static-scene pipeline: bounds, visual-hull initialization, epoch
//! training, then the configured number of coarse-to-fine rounds.

use std::time::Instant;

use crate::error::Result;
use crate::hull::{estimate_bounds, visual_hull_sample, HullConfig, SceneBounds};
use crate::optim::AdamState;
use crate::refine::{c2f_round, C2FConfig, C2FCounts};
use crate::render::RasterConfig;
use crate::scene::{RadiancePointCloud, ViewSample};
use crate::train::{train_epoch, EpochStats, TrainConfig};

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub train: TrainConfig,
    pub raster: RasterConfig,
    pub c2f: C2FConfig,
    pub hull: HullConfig,
    /// Frustum depth range for bounds estimation.
    pub bounds_near: f64,
    pub bounds_far: f64,
    pub fallback_bounds: Option<SceneBounds>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            raster: RasterConfig::default(),
            c2f: C2FConfig::default(),
            hull: HullConfig::default(),
            bounds_near: 0.5,
            bounds_far: 8.0,
            fallback_bounds: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub cloud: RadiancePointCloud,
    pub stats: Vec<EpochStats>,
    pub c2f_counts: Vec<C2FCounts>,
    pub bounds: SceneBounds,
    pub train_seconds: f64,
    /// Mean loss over views in the last completed epoch.
    pub final_loss: f64,
    /// Total epochs run, refinement retraining included.
    pub epochs_run: usize,
}

/// Train a static scene from scratch.
pub fn train_static(
    views: &[ViewSample],
    config: &PipelineConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    let start = Instant::now();
    config.train.validate()?;
    config.raster.validate()?;
    config.c2f.validate()?;
    let bounds = estimate_bounds(
        views,
        config.bounds_near,
        config.bounds_far,
        config.fallback_bounds,
    )?;
    let mut cloud = visual_hull_sample(views, &bounds, &config.hull)?;

    let mut stats = Vec::new();
    let mut adam = AdamState::new(&cloud, config.train.adam_params());
    for epoch in 0..config.train.epochs {
        let s = train_epoch(&mut cloud, &mut adam, views, &config.train, &config.raster, epoch)?;
        on_epoch(&s);
        stats.push(s);
    }

    let mut c2f_counts = Vec::new();
    for _ in 0..config.c2f.rounds {
        let (next, counts) = c2f_round(
            cloud,
            &bounds,
            &config.c2f,
            views,
            &config.train,
            &config.raster,
            |s| {
                on_epoch(s);
                stats.push(*s);
            },
        )?;
        cloud = next;
        c2f_counts.push(counts);
    }

    let final_loss = stats.last().map(|s| s.mean_loss).unwrap_or(f64::NAN);
    Ok(TrainOutcome {
        cloud,
        c2f_counts,
        bounds,
        train_seconds: start.elapsed().as_secs_f64(),
        final_loss,
        epochs_run: stats.len(),
        stats,
    })
}
