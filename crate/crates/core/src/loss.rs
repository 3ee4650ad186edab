//! Training objective: mean squared error plus an anisotropic total
//! variation penalty on the rendered image.
//!
//! Both terms use mean reduction so the TV weight and learning rates are
//! resolution independent. The TV subgradient at zero is taken as zero.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct LossValue {
    pub total: f64,
    pub mse: f64,
    pub tv: f64,
}

/// Loss and its gradient w.r.t. the rendered image.
///
/// `rendered` and `target` are row-major RGB of the given dimensions.
/// L = mean((I - I_hat)^2) + tv_weight * (mean |dx I_hat| + mean |dy I_hat|).
pub fn loss(
    rendered: &[f64],
    target: &[f64],
    width: usize,
    height: usize,
    tv_weight: f64,
) -> Result<(LossValue, Vec<f64>)> {
    let n = width * height * 3;
    if rendered.len() != n || target.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "loss inputs must both be {width}x{height}x3 = {n} values \
             (got {} and {})",
            rendered.len(),
            target.len()
        )));
    }
    let mut grad = vec![0.0; n];

    let inv_n = 1.0 / n as f64;
    let mut mse = 0.0;
    for i in 0..n {
        let diff = rendered[i] - target[i];
        mse += diff * diff;
        grad[i] = 2.0 * diff * inv_n;
    }
    mse *= inv_n;

    let mut tv = 0.0;
    if tv_weight != 0.0 {
        let nh = height * width.saturating_sub(1) * 3;
        if nh > 0 {
            let w_h = tv_weight / nh as f64;
            for y in 0..height {
                for x in 0..width - 1 {
                    let a = (y * width + x) * 3;
                    let b = a + 3;
                    for ch in 0..3 {
                        let d = rendered[b + ch] - rendered[a + ch];
                        tv += d.abs() / nh as f64;
                        let s = sign(d);
                        grad[b + ch] += s * w_h;
                        grad[a + ch] -= s * w_h;
                    }
                }
            }
        }
        let nv = width * height.saturating_sub(1) * 3;
        if nv > 0 {
            let w_v = tv_weight / nv as f64;
            for y in 0..height - 1 {
                for x in 0..width {
                    let a = (y * width + x) * 3;
                    let b = a + width * 3;
                    for ch in 0..3 {
                        let d = rendered[b + ch] - rendered[a + ch];
                        tv += d.abs() / nv as f64;
                        let s = sign(d);
                        grad[b + ch] += s * w_v;
                        grad[a + ch] -= s * w_v;
                    }
                }
            }
        }
    }

    Ok((
        LossValue {
            total: mse + tv_weight * tv,
            mse,
            tv,
        },
        grad,
    ))
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_for_identical_images() {
        let img = vec![0.3; 4 * 4 * 3];
        let (value, grad) = loss(&img, &img, 4, 4, 0.01).unwrap();
        assert_eq!(value.total, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn constant_image_has_pure_mse() {
        let rendered = vec![0.5; 6 * 6 * 3];
        let target = vec![0.0; 6 * 6 * 3];
        let (value, _) = loss(&rendered, &target, 6, 6, 0.01).unwrap();
        assert_relative_eq!(value.mse, 0.25, epsilon = 1e-12);
        assert_eq!(value.tv, 0.0);
        assert_relative_eq!(value.total, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn with_zero_weight_loss_is_exactly_mse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rendered: Vec<f64> = (0..5 * 4 * 3).map(|_| rng.gen_range(0.0..1.0)).collect();
        let target: Vec<f64> = (0..5 * 4 * 3).map(|_| rng.gen_range(0.0..1.0)).collect();
        let (value, _) = loss(&rendered, &target, 5, 4, 0.0).unwrap();
        let mse: f64 = rendered
            .iter()
            .zip(&target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / rendered.len() as f64;
        assert_relative_eq!(value.total, mse, epsilon = 1e-12);
        assert!(value.total >= 0.0);
    }

    /// Gradient check away from TV kinks: coordinates whose finite
    /// difference step could flip the sign of an image difference are
    /// excluded.
    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (w, h) = (6, 6);
        let rendered: Vec<f64> = (0..w * h * 3).map(|_| rng.gen_range(0.0..1.0)).collect();
        let target: Vec<f64> = (0..w * h * 3).map(|_| rng.gen_range(0.0..1.0)).collect();
        let tv_weight = 0.05;
        let (_, grad) = loss(&rendered, &target, w, h, tv_weight).unwrap();
        let fd_h = 1e-6;

        let kink_free = |i: usize| {
            let x = (i / 3) % w;
            let y = i / 3 / w;
            let ch = i % 3;
            let mut ok = true;
            let mut check = |j: usize| {
                let d = (rendered[i] - rendered[j]).abs();
                if d < 2.0 * fd_h {
                    ok = false;
                }
            };
            if x > 0 {
                check((y * w + x - 1) * 3 + ch);
            }
            if x + 1 < w {
                check((y * w + x + 1) * 3 + ch);
            }
            if y > 0 {
                check(((y - 1) * w + x) * 3 + ch);
            }
            if y + 1 < h {
                check(((y + 1) * w + x) * 3 + ch);
            }
            ok
        };

        let mut checked = 0;
        for i in 0..w * h * 3 {
            if !kink_free(i) {
                continue;
            }
            let mut plus = rendered.clone();
            let mut minus = rendered.clone();
            plus[i] += fd_h;
            minus[i] -= fd_h;
            let (lp, _) = loss(&plus, &target, w, h, tv_weight).unwrap();
            let (lm, _) = loss(&minus, &target, w, h, tv_weight).unwrap();
            let fd = (lp.total - lm.total) / (2.0 * fd_h);
            let scale = fd.abs().max(grad[i].abs()).max(1e-8);
            assert!(
                (fd - grad[i]).abs() / scale < 1e-4,
                "slot {i}: fd {fd} vs analytic {}",
                grad[i]
            );
            checked += 1;
        }
        assert!(checked > 50, "too few kink-free coordinates ({checked})");
    }

    #[test]
    fn rejects_shape_mismatch() {
        assert!(loss(&[0.0; 12], &[0.0; 9], 2, 2, 0.0).is_err());
    }
}
