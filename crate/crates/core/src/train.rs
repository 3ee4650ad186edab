//! Training loop: per-view render / loss / backward / Adam step, the
//! per-epoch mask consistency filter, and the exponentially decayed
//! two-group learning-rate schedule.

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::loss::loss;
use crate::metrics::psnr_from_mse;
use crate::optim::{AdamParams, AdamState};
use crate::render::{self, RasterConfig};
use crate::scene::{RadiancePointCloud, ViewSample};
use crate::sh;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Initial learning rate of the SH coefficient group.
    pub lr_sh: f64,
    /// Initial learning rate of the position group.
    pub lr_pos: f64,
    /// Per-epoch exponential decay factor of both rates.
    pub decay: f64,
    pub epochs: usize,
    pub tv_weight: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Views per optimizer step.
    pub batch: usize,
    pub seed: u64,
    pub learn_positions: bool,
    pub learn_sh: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_sh: 3e-3,
            lr_pos: 8e-4,
            decay: 0.93,
            epochs: 20,
            tv_weight: 0.01,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch: 1,
            seed: 0,
            learn_positions: true,
            learn_sh: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_sh > 0.0 && self.lr_pos > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::Config("decay must be in (0, 1]".into()));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch must be >= 1".into()));
        }
        Ok(())
    }

    pub fn adam_params(&self) -> AdamParams {
        AdamParams {
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    /// Learning rates at the start of epoch `e`: lr0 * decay^e, exactly.
    pub fn lr_at_epoch(&self, epoch: usize) -> (f64, f64) {
        let f = self.decay.powi(epoch as i32);
        (self.lr_pos * f, self.lr_sh * f)
    }
}

/// Per-epoch record emitted as one line of structured text.
#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub mean_psnr: f64,
    pub point_count: usize,
    pub lr_pos: f64,
    pub lr_sh: f64,
}

impl std::fmt::Display for EpochStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "epoch={} loss={:.6e} psnr={:.3} points={} lr_pos={:.6e} lr_sh={:.6e}",
            self.epoch, self.mean_loss, self.mean_psnr, self.point_count, self.lr_pos, self.lr_sh
        )
    }
}

/// Indices of points whose projection lands on the foreground mask of every
/// view. Projections behind the camera or outside the image count as
/// background.
pub fn consistency_filter(cloud: &RadiancePointCloud, views: &[ViewSample]) -> Vec<usize> {
    (0..cloud.len())
        .into_par_iter()
        .filter(|&i| point_consistent(&cloud.positions()[i], views))
        .collect()
}

/// The consistency check CC(p): every view sees p on its foreground mask.
pub(crate) fn point_consistent(p: &Vector3<f64>, views: &[ViewSample]) -> bool {
    views.iter().all(|view| mask_hit(p, view))
}

fn mask_hit(p: &Vector3<f64>, view: &ViewSample) -> bool {
    let Some(proj) = view.camera.project_pixel(p) else {
        return false;
    };
    // Nearest-pixel lookup via floor; masks are binary, interpolation would
    // invent foreground.
    let (w, h) = (view.camera.width as i64, view.camera.height as i64);
    let ix = proj.x.floor() as i64;
    let iy = proj.y.floor() as i64;
    if ix < 0 || iy < 0 || ix >= w || iy >= h {
        return false;
    }
    view.mask[(iy * w + ix) as usize]
}

/// Accumulated gradients for one optimizer step.
struct StepGrads {
    positions: Vec<Vector3<f64>>,
    sh: Vec<f64>,
    loss_sum: f64,
    psnr_sum: f64,
}

fn view_step_grads(
    cloud: &RadiancePointCloud,
    view: &ViewSample,
    raster: &RasterConfig,
    tv_weight: f64,
) -> Result<(Vec<Vector3<f64>>, Vec<f64>, f64, f64)> {
    let buffers = render::render_view(cloud, &view.camera, raster)?;
    let (value, upstream) = loss(
        &buffers.rgb,
        &view.image,
        view.camera.width as usize,
        view.camera.height as usize,
        tv_weight,
    )?;
    let grads = render::backward(cloud, &view.camera, raster, &buffers, &upstream)?;

    // Chain per-point color gradients into SH coefficient slots.
    let b = cloud.basis_len();
    let stride = cloud.sh_stride();
    let mut sh_grads = vec![0.0; cloud.len() * stride];
    let mut basis = [0.0f64; sh::basis_len(sh::MAX_DEGREE)];
    for (i, dc) in grads.colors.iter().enumerate() {
        if *dc == Vector3::zeros() {
            continue;
        }
        let dir = view.camera.view_direction(&cloud.positions()[i])?;
        sh::eval_basis(&dir, cloud.l_max(), &mut basis);
        let slot = &mut sh_grads[i * stride..(i + 1) * stride];
        for ch in 0..3 {
            for k in 0..b {
                slot[ch * b + k] = dc[ch] * basis[k];
            }
        }
    }
    Ok((grads.positions, sh_grads, value.total, psnr_from_mse(value.mse)))
}

/// One epoch: iterate views in a seeded shuffled order, step Adam per batch,
/// then apply the consistency filter, drop removed points (with their
/// optimizer rows) and decay the learning rates for the next epoch.
pub fn train_epoch(
    cloud: &mut RadiancePointCloud,
    adam: &mut AdamState,
    views: &[ViewSample],
    config: &TrainConfig,
    raster: &RasterConfig,
    epoch: usize,
) -> Result<EpochStats> {
    config.validate()?;
    if views.is_empty() {
        return Err(Error::Config("cannot train on zero views".into()));
    }
    let (lr_pos, lr_sh) = config.lr_at_epoch(epoch);
    let lr_pos = if config.learn_positions { lr_pos } else { 0.0 };
    let lr_sh = if config.learn_sh { lr_sh } else { 0.0 };

    let mut order: Vec<usize> = (0..views.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(epoch as u64 + 1);
    order.shuffle(&mut rng);

    let mut loss_sum = 0.0;
    let mut psnr_sum = 0.0;
    for chunk in order.chunks(config.batch) {
        let mut step = StepGrads {
            positions: vec![Vector3::zeros(); cloud.len()],
            sh: vec![0.0; cloud.sh().len()],
            loss_sum: 0.0,
            psnr_sum: 0.0,
        };
        for &vi in chunk {
            let (pos, shg, l, p) = view_step_grads(cloud, &views[vi], raster, config.tv_weight)?;
            for (acc, g) in step.positions.iter_mut().zip(&pos) {
                *acc += g;
            }
            for (acc, g) in step.sh.iter_mut().zip(&shg) {
                *acc += g;
            }
            step.loss_sum += l;
            step.psnr_sum += p;
        }
        let inv = 1.0 / chunk.len() as f64;
        step.positions.iter_mut().for_each(|g| *g *= inv);
        step.sh.iter_mut().for_each(|g| *g *= inv);
        adam.step(cloud, &step.positions, &step.sh, lr_pos, lr_sh)?;
        loss_sum += step.loss_sum;
        psnr_sum += step.psnr_sum;
    }
    cloud.check_finite()?;

    let retained = consistency_filter(cloud, views);
    if retained.is_empty() {
        return Err(Error::TrainingCollapse(format!(
            "consistency filter removed all {} points after epoch {epoch}",
            cloud.len()
        )));
    }
    if retained.len() < cloud.len() {
        cloud.retain_indices(&retained);
        adam.retain_indices(&retained, cloud.sh_stride());
    }

    Ok(EpochStats {
        epoch,
        mean_loss: loss_sum / views.len() as f64,
        mean_psnr: psnr_sum / views.len() as f64,
        point_count: cloud.len(),
        lr_pos,
        lr_sh,
    })
}
