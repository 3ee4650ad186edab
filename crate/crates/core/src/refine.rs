//! Hybrid coarse-to-fine point cloud updates: voxel reduction, neighbor
//! statistics outlier removal, and kNN-average point generation, followed by
//! retraining at a scaled learning rate.

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hull::SceneBounds;
use crate::knn::KdTree;
use crate::optim::AdamState;
use crate::render::RasterConfig;
use crate::scene::{RadiancePointCloud, ViewSample};
use crate::train::{train_epoch, EpochStats, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutlierThreshold {
    /// Twice the median neighbor-distance deviation across all points.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct C2FConfig {
    /// Voxels per axis of the reduction grid.
    pub voxel_grid: usize,
    /// Neighbor count for outlier statistics and point generation.
    pub knn: usize,
    pub outlier_threshold: OutlierThreshold,
    /// Number of coarse-to-fine rounds in the full pipeline.
    pub rounds: usize,
    /// Retraining learning-rate scale relative to the original rates.
    pub refine_lr_scale: f64,
}

impl Default for C2FConfig {
    fn default() -> Self {
        Self {
            voxel_grid: 128,
            knn: 10,
            outlier_threshold: OutlierThreshold::Auto,
            rounds: 2,
            refine_lr_scale: 0.5,
        }
    }
}

impl C2FConfig {
    pub fn validate(&self) -> Result<()> {
        if self.voxel_grid < 2 {
            return Err(Error::Config("voxel grid must be >= 2 per axis".into()));
        }
        if self.knn < 2 {
            return Err(Error::Config("knn must be >= 2".into()));
        }
        if !(self.refine_lr_scale > 0.0) {
            return Err(Error::Config("refine_lr_scale must be positive".into()));
        }
        Ok(())
    }
}

fn voxel_key(p: &Vector3<f64>, bounds: &SceneBounds, n: usize) -> u64 {
    let extent = bounds.extent();
    let mut idx = [0u64; 3];
    for ax in 0..3 {
        let t = (p[ax] - bounds.min[ax]) / extent[ax];
        idx[ax] = ((t * n as f64).floor() as i64).clamp(0, n as i64 - 1) as u64;
    }
    (idx[2] * n as u64 + idx[1]) * n as u64 + idx[0]
}

/// One point per occupied voxel of the N^3 partition of `bounds`: position
/// and all SH coefficients are arithmetic means of the voxel members.
/// Output order follows the voxel linear index, so the result is invariant
/// to input storage order.
pub fn voxel_reduce(
    cloud: &RadiancePointCloud,
    bounds: &SceneBounds,
    n: usize,
) -> Result<RadiancePointCloud> {
    if n < 2 {
        return Err(Error::Config("voxel grid must be >= 2 per axis".into()));
    }
    let stride = cloud.sh_stride();
    let mut keyed: Vec<(u64, u32)> = cloud
        .positions()
        .iter()
        .enumerate()
        .map(|(i, p)| (voxel_key(p, bounds, n), i as u32))
        .collect();
    keyed.sort_unstable();

    let mut positions = Vec::new();
    let mut coeffs = Vec::new();
    let mut start = 0;
    while start < keyed.len() {
        let key = keyed[start].0;
        let mut end = start;
        while end < keyed.len() && keyed[end].0 == key {
            end += 1;
        }
        let count = (end - start) as f64;
        let mut pos = Vector3::zeros();
        let mut sh = vec![0.0; stride];
        for &(_, i) in &keyed[start..end] {
            pos += cloud.positions()[i as usize];
            for (acc, v) in sh.iter_mut().zip(cloud.point_sh(i as usize)) {
                *acc += v;
            }
        }
        positions.push(pos / count);
        coeffs.extend(sh.iter().map(|v| v / count));
        start = end;
    }
    RadiancePointCloud::new(positions, coeffs, cloud.l_max())
}

/// Standard deviation of each point's distances to its K nearest neighbors
/// (population form, self excluded), computed against the full cloud.
pub fn neighbor_distance_stddev(cloud: &RadiancePointCloud, k: usize) -> Result<Vec<f64>> {
    if cloud.len() < k + 1 {
        return Err(Error::Config(format!(
            "outlier statistics need at least {} points, cloud has {}",
            k + 1,
            cloud.len()
        )));
    }
    let tree = KdTree::build(cloud.positions());
    Ok((0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let neighbors = tree.k_nearest(&cloud.positions()[i], k, Some(i));
            let dists: Vec<f64> = neighbors.iter().map(|(_, d2)| d2.sqrt()).collect();
            let mean = dists.iter().sum::<f64>() / k as f64;
            let var = dists.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / k as f64;
            var.sqrt()
        })
        .collect())
}

fn resolve_threshold(deltas: &[f64], threshold: OutlierThreshold) -> f64 {
    match threshold {
        OutlierThreshold::Fixed(eps) => eps,
        OutlierThreshold::Auto => {
            let mut sorted = deltas.to_vec();
            sorted.sort_by(f64::total_cmp);
            let median = if sorted.len() % 2 == 1 {
                sorted[sorted.len() / 2]
            } else {
                0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
            };
            2.0 * median
        }
    }
}

/// Remove points whose neighbor-distance deviation exceeds the threshold.
/// Single pass: every deviation is computed against the pre-removal cloud,
/// removals do not cascade.
pub fn outlier_removal(
    cloud: &RadiancePointCloud,
    k: usize,
    threshold: OutlierThreshold,
) -> Result<RadiancePointCloud> {
    let deltas = neighbor_distance_stddev(cloud, k)?;
    let eps = resolve_threshold(&deltas, threshold);
    let retained: Vec<usize> = (0..cloud.len()).filter(|&i| deltas[i] <= eps).collect();
    if retained.is_empty() {
        return Err(Error::TrainingCollapse(
            "outlier removal dropped every point".into(),
        ));
    }
    let mut out = cloud.clone();
    out.retain_indices(&retained);
    Ok(out)
}

/// Double the cloud: per original point, append one new point whose position
/// and SH coefficients are the mean over its K nearest original neighbors
/// (self excluded). New points are appended after the originals.
pub fn point_generation(cloud: &RadiancePointCloud, k: usize) -> Result<RadiancePointCloud> {
    if cloud.len() < k + 1 {
        return Err(Error::Config(format!(
            "point generation needs at least {} points, cloud has {}",
            k + 1,
            cloud.len()
        )));
    }
    let stride = cloud.sh_stride();
    let tree = KdTree::build(cloud.positions());
    let generated: Vec<(Vector3<f64>, Vec<f64>)> = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let neighbors = tree.k_nearest(&cloud.positions()[i], k, Some(i));
            let mut pos = Vector3::zeros();
            let mut sh = vec![0.0; stride];
            for &(j, _) in &neighbors {
                pos += cloud.positions()[j];
                for (acc, v) in sh.iter_mut().zip(cloud.point_sh(j)) {
                    *acc += v;
                }
            }
            let inv = 1.0 / k as f64;
            (pos * inv, sh.iter().map(|v| v * inv).collect())
        })
        .collect();

    let mut positions = cloud.positions().to_vec();
    let mut coeffs = cloud.sh().to_vec();
    for (pos, sh) in generated {
        positions.push(pos);
        coeffs.extend_from_slice(&sh);
    }
    RadiancePointCloud::new(positions, coeffs, cloud.l_max())
}

/// Point counts recorded by one coarse-to-fine round.
#[derive(Debug, Clone, Copy)]
pub struct C2FCounts {
    pub input: usize,
    pub after_reduce: usize,
    pub after_removal: usize,
    pub after_generation: usize,
}

/// One full round: reduce, remove outliers, generate, then retrain with a
/// fresh optimizer at `refine_lr_scale` times the original learning rates.
/// Returns the restructured cloud, the per-epoch stats of the retraining,
/// and the stage point counts.
#[allow(clippy::too_many_arguments)]
pub fn c2f_round(
    cloud: RadiancePointCloud,
    bounds: &SceneBounds,
    config: &C2FConfig,
    views: &[ViewSample],
    train_config: &TrainConfig,
    raster: &RasterConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(RadiancePointCloud, C2FCounts)> {
    config.validate()?;
    let input = cloud.len();
    let reduced = voxel_reduce(&cloud, bounds, config.voxel_grid)?;
    let after_reduce = reduced.len();
    let cleaned = outlier_removal(&reduced, config.knn, config.outlier_threshold)?;
    let after_removal = cleaned.len();
    let mut grown = point_generation(&cleaned, config.knn)?;
    let after_generation = grown.len();
    grown.check_finite()?;

    // Moments are meaningless across identity changes: fresh Adam state.
    let retrain = TrainConfig {
        lr_sh: train_config.lr_sh * config.refine_lr_scale,
        lr_pos: train_config.lr_pos * config.refine_lr_scale,
        ..train_config.clone()
    };
    let mut adam = AdamState::new(&grown, retrain.adam_params());
    for epoch in 0..retrain.epochs {
        let stats = train_epoch(&mut grown, &mut adam, views, &retrain, raster, epoch)?;
        on_epoch(&stats);
    }
    Ok((
        grown,
        C2FCounts {
            input,
            after_reduce,
            after_removal,
            after_generation,
        },
    ))
}
