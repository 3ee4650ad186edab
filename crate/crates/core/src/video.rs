//! Video synthesis: per-frame models warm-started from the previous frame
//! by Chamfer alignment of the new hull sample and kNN transfer of the
//! learned SH coefficients.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::hull::{estimate_bounds, visual_hull_sample};
use crate::knn::KdTree;
use crate::optim::{AdamParams, AdamState};
use crate::pipeline::{train_static, PipelineConfig};
use crate::scene::{RadiancePointCloud, ViewSample};
use crate::train::{train_epoch, EpochStats};

/// Symmetric mean squared nearest-neighbor distance between two point sets.
pub fn chamfer(s1: &[Vector3<f64>], s2: &[Vector3<f64>]) -> Result<f64> {
    if s1.is_empty() || s2.is_empty() {
        return Err(Error::Contract("chamfer distance of an empty cloud".into()));
    }
    let tree1 = KdTree::build(s1);
    let tree2 = KdTree::build(s2);
    let forward: f64 = s1
        .iter()
        .map(|x| tree2.nearest(x, None).map(|(_, d2)| d2).unwrap_or(0.0))
        .sum::<f64>()
        / s1.len() as f64;
    let backward: f64 = s2
        .iter()
        .map(|y| tree1.nearest(y, None).map(|(_, d2)| d2).unwrap_or(0.0))
        .sum::<f64>()
        / s2.len() as f64;
    Ok(forward + backward)
}

/// Chamfer distance plus its gradient w.r.t. the points of `s2`, with the
/// nearest-neighbor assignments frozen at the current positions.
pub fn chamfer_grad_s2(
    s1: &[Vector3<f64>],
    s2: &[Vector3<f64>],
) -> Result<(f64, Vec<Vector3<f64>>)> {
    if s1.is_empty() || s2.is_empty() {
        return Err(Error::Contract("chamfer distance of an empty cloud".into()));
    }
    let tree1 = KdTree::build(s1);
    let tree2 = KdTree::build(s2);
    let mut grads = vec![Vector3::zeros(); s2.len()];
    let mut total = 0.0;
    // Term over s1: min_y ||x - y||^2 pulls the assigned y toward x.
    let inv1 = 1.0 / s1.len() as f64;
    for x in s1 {
        let (j, d2) = tree2.nearest(x, None).expect("s2 is non-empty");
        total += d2 * inv1;
        grads[j] += (s2[j] - x) * (2.0 * inv1);
    }
    // Term over s2: each y moves toward its nearest x.
    let inv2 = 1.0 / s2.len() as f64;
    for (j, y) in s2.iter().enumerate() {
        let (_, d2) = tree1.nearest(y, None).expect("s1 is non-empty");
        total += d2 * inv2;
        let (i, _) = tree1.nearest(y, None).unwrap();
        grads[j] += (y - s1[i]) * (2.0 * inv2);
    }
    Ok((total, grads))
}

/// Reposition `cloud` toward `target` by Adam descent on the Chamfer
/// distance of the position sets; `target` is immutable, SH coefficients
/// are untouched. Returns the final Chamfer distance.
pub fn chamfer_align(
    cloud: &mut RadiancePointCloud,
    target: &RadiancePointCloud,
    steps: usize,
    lr: f64,
) -> Result<f64> {
    let params = AdamParams::default();
    let mut m: Vec<Vector3<f64>> = vec![Vector3::zeros(); cloud.len()];
    let mut v: Vec<Vector3<f64>> = vec![Vector3::zeros(); cloud.len()];
    let mut cd = chamfer(target.positions(), cloud.positions())?;
    for step in 1..=steps {
        let (value, grads) = chamfer_grad_s2(target.positions(), cloud.positions())?;
        cd = value;
        let bc1 = 1.0 - params.beta1.powi(step as i32);
        let bc2 = 1.0 - params.beta2.powi(step as i32);
        let positions = cloud.positions_mut();
        for i in 0..positions.len() {
            for ax in 0..3 {
                let g = grads[i][ax];
                m[i][ax] = params.beta1 * m[i][ax] + (1.0 - params.beta1) * g;
                v[i][ax] = params.beta2 * v[i][ax] + (1.0 - params.beta2) * g * g;
                positions[i][ax] -=
                    lr * (m[i][ax] / bc1) / ((v[i][ax] / bc2).sqrt() + params.eps);
            }
        }
    }
    Ok(cd)
}

/// Replace each point's SH coefficients with the mean over its k nearest
/// points in `source`.
pub fn transfer_appearance(
    cloud: &mut RadiancePointCloud,
    source: &RadiancePointCloud,
    k: usize,
) -> Result<()> {
    if source.l_max() != cloud.l_max() {
        return Err(Error::ShapeMismatch(
            "appearance transfer requires matching l_max".into(),
        ));
    }
    if k == 0 || source.len() < k {
        return Err(Error::Config(format!(
            "appearance transfer needs k in 1..={}, got {k}",
            source.len()
        )));
    }
    let stride = cloud.sh_stride();
    let tree = KdTree::build(source.positions());
    let positions = cloud.positions().to_vec();
    let sh = cloud.sh_mut();
    for (i, p) in positions.iter().enumerate() {
        let neighbors = tree.k_nearest(p, k, None);
        let slot = &mut sh[i * stride..(i + 1) * stride];
        slot.iter_mut().for_each(|v| *v = 0.0);
        for &(j, _) in &neighbors {
            for (acc, v) in slot.iter_mut().zip(source.point_sh(j)) {
                *acc += v;
            }
        }
        let inv = 1.0 / k as f64;
        slot.iter_mut().for_each(|v| *v *= inv);
    }
    Ok(())
}

/// Ordered multi-view datasets of a dynamic scene.
#[derive(Debug, Clone)]
pub struct FrameSequence {
    pub frames: Vec<Vec<ViewSample>>,
    /// Whether all frames share one camera rig (informational).
    pub shared_cameras: bool,
}

impl FrameSequence {
    pub fn new(frames: Vec<Vec<ViewSample>>, shared_cameras: bool) -> Result<Self> {
        if frames.iter().any(|f| f.is_empty()) {
            return Err(Error::Config("every frame needs at least one view".into()));
        }
        Ok(Self {
            frames,
            shared_cameras,
        })
    }
}

#[derive(Debug, Clone)]
pub struct VideoConfig {
    /// Training epochs for warm-started frames (frame 0 uses the full
    /// pipeline schedule).
    pub warm_epochs: usize,
    pub align_steps: usize,
    pub align_lr: f64,
    /// Neighbors averaged in appearance transfer.
    pub transfer_k: usize,
    /// Re-run coarse-to-fine on warm-started frames.
    pub warm_c2f: bool,
}

impl VideoConfig {
    /// Defaults derived from the pipeline's epoch budget: a quarter of the
    /// epochs per warm frame.
    pub fn for_pipeline(pipeline: &PipelineConfig) -> Self {
        Self {
            warm_epochs: (pipeline.train.epochs / 4).max(1),
            align_steps: 300,
            align_lr: 1e-3,
            transfer_k: 5,
            warm_c2f: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FrameResult {
    pub cloud: RadiancePointCloud,
    pub stats: Vec<EpochStats>,
    pub final_loss: f64,
    pub epochs_run: usize,
    pub warm_started: bool,
    pub align_chamfer: Option<f64>,
}

/// Train a frame sequence: frame 0 from scratch with the full pipeline,
/// later frames warm-started from the previous solution.
pub fn train_sequence(
    seq: &FrameSequence,
    pipeline: &PipelineConfig,
    video: &VideoConfig,
    mut on_epoch: impl FnMut(usize, &EpochStats),
) -> Result<Vec<FrameResult>> {
    if seq.frames.is_empty() {
        return Err(Error::Config("sequence has no frames".into()));
    }
    let mut results: Vec<FrameResult> = Vec::with_capacity(seq.frames.len());
    for (f, views) in seq.frames.iter().enumerate() {
        let frame_err = |e: Error| Error::TrainingCollapse(format!("frame {f}: {e}"));
        if f == 0 {
            let outcome = train_static(views, pipeline, |s| on_epoch(0, s)).map_err(frame_err)?;
            results.push(FrameResult {
                cloud: outcome.cloud,
                stats: outcome.stats,
                final_loss: outcome.final_loss,
                epochs_run: outcome.epochs_run,
                warm_started: false,
                align_chamfer: None,
            });
            continue;
        }
        let prev = &results[f - 1].cloud;
        let bounds = estimate_bounds(
            views,
            pipeline.bounds_near,
            pipeline.bounds_far,
            pipeline.fallback_bounds,
        )
        .map_err(frame_err)?;
        let mut hull_config = pipeline.hull.clone();
        hull_config.seed = pipeline.hull.seed.wrapping_add(f as u64);
        let mut cloud = visual_hull_sample(views, &bounds, &hull_config).map_err(frame_err)?;
        let cd = chamfer_align(&mut cloud, prev, video.align_steps, video.align_lr)
            .map_err(frame_err)?;
        transfer_appearance(&mut cloud, prev, video.transfer_k).map_err(frame_err)?;

        let mut warm_train = pipeline.train.clone();
        warm_train.epochs = video.warm_epochs;
        let mut stats = Vec::new();
        let mut adam = AdamState::new(&cloud, warm_train.adam_params());
        for epoch in 0..warm_train.epochs {
            let s = train_epoch(&mut cloud, &mut adam, views, &warm_train, &pipeline.raster, epoch)
                .map_err(frame_err)?;
            on_epoch(f, &s);
            stats.push(s);
        }
        if video.warm_c2f {
            for _ in 0..pipeline.c2f.rounds {
                let (next, _) = crate::refine::c2f_round(
                    cloud,
                    &bounds,
                    &pipeline.c2f,
                    views,
                    &warm_train,
                    &pipeline.raster,
                    |s| {
                        on_epoch(f, s);
                        stats.push(*s);
                    },
                )
                .map_err(frame_err)?;
                cloud = next;
            }
        }
        let final_loss = stats.last().map(|s| s.mean_loss).unwrap_or(f64::NAN);
        results.push(FrameResult {
            cloud,
            final_loss,
            epochs_run: stats.len(),
            stats,
            warm_started: true,
            align_chamfer: Some(cd),
        });
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, seed: u64) -> Vec<Vector3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect()
    }

    fn brute_chamfer(s1: &[Vector3<f64>], s2: &[Vector3<f64>]) -> f64 {
        let min_d2 = |x: &Vector3<f64>, set: &[Vector3<f64>]| {
            set.iter()
                .map(|y| (x - y).norm_squared())
                .fold(f64::INFINITY, f64::min)
        };
        s1.iter().map(|x| min_d2(x, s2)).sum::<f64>() / s1.len() as f64
            + s2.iter().map(|y| min_d2(y, s1)).sum::<f64>() / s2.len() as f64
    }

    #[test]
    fn chamfer_of_identical_sets_is_zero() {
        let s = random_points(100, 1);
        assert_eq!(chamfer(&s, &s).unwrap(), 0.0);
    }

    #[test]
    fn chamfer_of_unit_offset_singletons() {
        let s1 = vec![Vector3::zeros()];
        let s2 = vec![Vector3::new(1.0, 0.0, 0.0)];
        approx::assert_relative_eq!(chamfer(&s1, &s2).unwrap(), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn chamfer_matches_brute_force() {
        let s1 = random_points(200, 2);
        let s2 = random_points(200, 3);
        let got = chamfer(&s1, &s2).unwrap();
        let want = brute_chamfer(&s1, &s2);
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }

    #[test]
    fn chamfer_is_symmetric() {
        let s1 = random_points(150, 4);
        let s2 = random_points(120, 5);
        let a = chamfer(&s1, &s2).unwrap();
        let b = chamfer(&s2, &s1).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn chamfer_is_rigid_invariant() {
        let s1 = random_points(80, 6);
        let s2 = random_points(90, 7);
        let rot = nalgebra::Rotation3::new(Vector3::new(0.3, -0.8, 0.5)).into_inner();
        let t = Vector3::new(2.0, -1.0, 0.5);
        let moved = |s: &[Vector3<f64>]| -> Vec<Vector3<f64>> {
            s.iter().map(|p| rot * p + t).collect()
        };
        let a = chamfer(&s1, &s2).unwrap();
        let b = chamfer(&moved(&s1), &moved(&s2)).unwrap();
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn chamfer_rejects_empty_input() {
        assert!(chamfer(&[], &[Vector3::zeros()]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences_away_from_switches() {
        let s1 = random_points(40, 8);
        let s2 = random_points(35, 9);
        let (_, grads) = chamfer_grad_s2(&s1, &s2).unwrap();
        let h = 1e-6;
        let nn_signature = |s2: &[Vector3<f64>]| -> Vec<usize> {
            let mut sig = Vec::new();
            for x in &s1 {
                let mut best = (f64::INFINITY, 0);
                for (j, y) in s2.iter().enumerate() {
                    let d2 = (x - y).norm_squared();
                    if d2 < best.0 {
                        best = (d2, j);
                    }
                }
                sig.push(best.1);
            }
            for y in s2 {
                let mut best = (f64::INFINITY, 0);
                for (i, x) in s1.iter().enumerate() {
                    let d2 = (x - y).norm_squared();
                    if d2 < best.0 {
                        best = (d2, i);
                    }
                }
                sig.push(best.1);
            }
            sig
        };
        let base_sig = nn_signature(&s2);
        let mut checked = 0;
        for j in 0..s2.len() {
            for ax in 0..3 {
                let mut plus = s2.clone();
                let mut minus = s2.clone();
                plus[j][ax] += h;
                minus[j][ax] -= h;
                if nn_signature(&plus) != base_sig || nn_signature(&minus) != base_sig {
                    continue; // assignment switch within the stencil
                }
                let fp = brute_chamfer(&s1, &plus);
                let fm = brute_chamfer(&s1, &minus);
                let fd = (fp - fm) / (2.0 * h);
                let scale = fd.abs().max(grads[j][ax].abs()).max(1e-9);
                assert!(
                    (fd - grads[j][ax]).abs() / scale < 1e-3,
                    "point {j} axis {ax}: fd {fd} vs analytic {}",
                    grads[j][ax]
                );
                checked += 1;
            }
        }
        assert!(checked > 60, "too few switch-free coordinates ({checked})");
    }

    #[test]
    fn align_is_stationary_at_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let positions = random_points(60, 11);
        let target =
            RadiancePointCloud::with_normal_sh(positions.clone(), 0, &mut rng).unwrap();
        let mut cloud = target.clone();
        let cd = chamfer_align(&mut cloud, &target, 50, 1e-2).unwrap();
        assert_eq!(cd, 0.0);
        assert_eq!(cloud.positions(), target.positions());
    }

    #[test]
    fn align_recovers_translation() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let base = random_points(300, 13);
        let target = RadiancePointCloud::with_normal_sh(base.clone(), 0, &mut rng).unwrap();
        let shifted: Vec<Vector3<f64>> = base
            .iter()
            .map(|p| p + Vector3::new(0.1, 0.0, 0.0))
            .collect();
        let mut cloud = RadiancePointCloud::with_normal_sh(shifted, 0, &mut rng).unwrap();
        let before = chamfer(target.positions(), cloud.positions()).unwrap();
        chamfer_align(&mut cloud, &target, 300, 1e-3).unwrap();
        let after = chamfer(target.positions(), cloud.positions()).unwrap();
        assert!(
            after < 0.1 * before,
            "chamfer reduced only from {before} to {after}"
        );
    }

    #[test]
    fn transfer_identity_copies_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let positions = random_points(50, 15);
        let source = RadiancePointCloud::with_normal_sh(positions.clone(), 2, &mut rng).unwrap();
        let mut cloud =
            RadiancePointCloud::with_normal_sh(positions, 2, &mut rng).unwrap();
        transfer_appearance(&mut cloud, &source, 1).unwrap();
        assert_eq!(cloud.sh(), source.sh());
    }

    #[test]
    fn transfer_from_uniform_source_is_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let stride = 3; // l_max = 0
        let src_positions = random_points(40, 17);
        let coeffs: Vec<f64> = src_positions
            .iter()
            .flat_map(|_| [0.4, -0.2, 0.9])
            .collect();
        let source = RadiancePointCloud::new(src_positions, coeffs, 0).unwrap();
        let mut cloud =
            RadiancePointCloud::with_normal_sh(random_points(30, 18), 0, &mut rng).unwrap();
        transfer_appearance(&mut cloud, &source, 5).unwrap();
        for i in 0..cloud.len() {
            let sh = &cloud.sh()[i * stride..(i + 1) * stride];
            assert!((sh[0] - 0.4).abs() < 1e-12);
            assert!((sh[1] + 0.2).abs() < 1e-12);
            assert!((sh[2] - 0.9).abs() < 1e-12);
        }
    }

    #[test]
    fn transfer_matches_exhaustive_knn_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let source =
            RadiancePointCloud::with_normal_sh(random_points(120, 20), 1, &mut rng).unwrap();
        let mut cloud =
            RadiancePointCloud::with_normal_sh(random_points(50, 21), 1, &mut rng).unwrap();
        let k = 4;
        let queries = cloud.positions().to_vec();
        transfer_appearance(&mut cloud, &source, k).unwrap();
        let stride = source.sh_stride();
        for (i, q) in queries.iter().enumerate() {
            let mut neigh: Vec<(f64, usize)> = source
                .positions()
                .iter()
                .enumerate()
                .map(|(j, p)| ((p - q).norm_squared(), j))
                .collect();
            neigh.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            neigh.truncate(k);
            let mut want = vec![0.0; stride];
            for &(_, j) in &neigh {
                for (acc, v) in want.iter_mut().zip(source.point_sh(j)) {
                    *acc += v;
                }
            }
            for (got, w) in cloud.point_sh(i).iter().zip(&want) {
                assert!((got - w / k as f64).abs() < 1e-9);
            }
        }
    }

    /// Transferred coefficients are means of source coefficients, so they
    /// stay inside the componentwise min/max envelope of the source.
    #[test]
    fn transfer_stays_in_source_envelope() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let source =
            RadiancePointCloud::with_normal_sh(random_points(80, 23), 1, &mut rng).unwrap();
        let mut cloud =
            RadiancePointCloud::with_normal_sh(random_points(60, 24), 1, &mut rng).unwrap();
        transfer_appearance(&mut cloud, &source, 7).unwrap();
        let stride = source.sh_stride();
        for slot in 0..stride {
            let lo = (0..source.len())
                .map(|j| source.point_sh(j)[slot])
                .fold(f64::INFINITY, f64::min);
            let hi = (0..source.len())
                .map(|j| source.point_sh(j)[slot])
                .fold(f64::NEG_INFINITY, f64::max);
            for i in 0..cloud.len() {
                let v = cloud.point_sh(i)[slot];
                assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }
}
