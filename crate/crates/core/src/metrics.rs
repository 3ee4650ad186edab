//! Image quality metrics: PSNR and SSIM over [0, 1] RGB images.

use crate::error::{Error, Result};

/// PSNR in dB for images in [0, 1]; identical images report the 99 dB cap.
pub fn psnr(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "psnr inputs must match and be non-empty ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let mse = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64;
    Ok(psnr_from_mse(mse))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        return 99.0;
    }
    (10.0 * (1.0 / mse).log10()).min(99.0)
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in w.iter_mut() {
        *v /= sum;
    }
    w
}

/// Separable Gaussian filter, valid region only: output is
/// (w - 10) x (h - 10).
fn filter_valid(plane: &[f64], w: usize, h: usize, kernel: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let half = SSIM_WINDOW / 2;
    let vw = w - 2 * half;
    let vh = h - 2 * half;
    let mut horiz = vec![0.0; vw * h];
    for y in 0..h {
        for x in 0..vw {
            let mut acc = 0.0;
            for (k, &g) in kernel.iter().enumerate() {
                acc += g * plane[y * w + x + k];
            }
            horiz[y * vw + x] = acc;
        }
    }
    let mut out = vec![0.0; vw * vh];
    for y in 0..vh {
        for x in 0..vw {
            let mut acc = 0.0;
            for (k, &g) in kernel.iter().enumerate() {
                acc += g * horiz[(y + k) * vw + x];
            }
            out[y * vw + x] = acc;
        }
    }
    out
}

/// SSIM with the canonical constants: 11x11 Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03, dynamic range 1; computed per channel over the
/// valid window region, then averaged over channels.
pub fn ssim(a: &[f64], b: &[f64], width: usize, height: usize) -> Result<f64> {
    let n = width * height * 3;
    if a.len() != n || b.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "ssim inputs must both be {width}x{height}x3 (got {} and {})",
            a.len(),
            b.len()
        )));
    }
    if width < SSIM_WINDOW || height < SSIM_WINDOW {
        return Err(Error::Config(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} images, got {width}x{height}"
        )));
    }
    let kernel = gaussian_window();
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut channel_mean = 0.0;
    for ch in 0..3 {
        let plane_a: Vec<f64> = (0..width * height).map(|i| a[i * 3 + ch]).collect();
        let plane_b: Vec<f64> = (0..width * height).map(|i| b[i * 3 + ch]).collect();
        let aa: Vec<f64> = plane_a.iter().map(|x| x * x).collect();
        let bb: Vec<f64> = plane_b.iter().map(|x| x * x).collect();
        let ab: Vec<f64> = plane_a.iter().zip(&plane_b).map(|(x, y)| x * y).collect();
        let mu_a = filter_valid(&plane_a, width, height, &kernel);
        let mu_b = filter_valid(&plane_b, width, height, &kernel);
        let m_aa = filter_valid(&aa, width, height, &kernel);
        let m_bb = filter_valid(&bb, width, height, &kernel);
        let m_ab = filter_valid(&ab, width, height, &kernel);
        let mut sum = 0.0;
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = m_aa[i] - ma * ma;
            let var_b = m_bb[i] - mb * mb;
            let cov = m_ab[i] - ma * mb;
            let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
            let den = (ma * ma + mb * mb + c1) * (var_a + var_b + c2);
            sum += num / den;
        }
        channel_mean += sum / mu_a.len() as f64;
    }
    Ok(channel_mean / 3.0)
}

/// Quality record of one evaluated view.
#[derive(Debug, Clone, Copy)]
pub struct ViewEval {
    pub index: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub render_ms: f64,
}

/// Evaluation summary: per-view metrics plus aggregates and context.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub views: Vec<ViewEval>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub mean_render_ms: f64,
    pub point_count: usize,
    pub checkpoint_bytes: u64,
    pub train_seconds: Option<f64>,
    pub resolution: (u32, u32),
    pub background: [f64; 3],
}

impl EvalReport {
    pub fn from_views(
        views: Vec<ViewEval>,
        point_count: usize,
        checkpoint_bytes: u64,
        train_seconds: Option<f64>,
        resolution: (u32, u32),
        background: [f64; 3],
    ) -> Self {
        let n = views.len().max(1) as f64;
        let mean_psnr = views.iter().map(|v| v.psnr).sum::<f64>() / n;
        let mean_ssim = views.iter().map(|v| v.ssim).sum::<f64>() / n;
        let mean_render_ms = views.iter().map(|v| v.render_ms).sum::<f64>() / n;
        Self {
            views,
            mean_psnr,
            mean_ssim,
            mean_render_ms,
            point_count,
            checkpoint_bytes,
            train_seconds,
            resolution,
            background,
        }
    }
}

impl std::fmt::Display for EvalReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for v in &self.views {
            writeln!(
                f,
                "view={} psnr={:.6} ssim={:.6} render_ms={:.3}",
                v.index, v.psnr, v.ssim, v.render_ms
            )?;
        }
        writeln!(
            f,
            "aggregate views={} psnr_mean={:.6} ssim_mean={:.6} render_ms_mean={:.3}",
            self.views.len(),
            self.mean_psnr,
            self.mean_ssim,
            self.mean_render_ms
        )?;
        write!(
            f,
            "aggregate points={} checkpoint_bytes={} resolution={}x{} background={:.1},{:.1},{:.1}",
            self.point_count,
            self.checkpoint_bytes,
            self.resolution.0,
            self.resolution.1,
            self.background[0],
            self.background[1],
            self.background[2]
        )?;
        if let Some(t) = self.train_seconds {
            write!(f, "\naggregate train_seconds={t:.3}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_images_cap_at_99() {
        let img = vec![0.25; 16 * 16 * 3];
        assert_eq!(psnr(&img, &img).unwrap(), 99.0);
    }

    #[test]
    fn mse_of_one_percent_is_20db() {
        // Constant difference of 0.1 gives MSE = 0.01.
        let a = vec![0.5; 8 * 8 * 3];
        let b = vec![0.6; 8 * 8 * 3];
        assert_relative_eq!(psnr(&a, &b).unwrap(), 20.0, epsilon = 1e-9);
    }

    #[test]
    fn psnr_matches_direct_formula_and_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a: Vec<f64> = (0..300).map(|_| rng.gen_range(0.0..1.0)).collect();
        let b: Vec<f64> = (0..300).map(|_| rng.gen_range(0.0..1.0)).collect();
        let mse = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            / 300.0;
        let expected = 10.0 * (1.0 / mse).log10();
        assert_relative_eq!(psnr(&a, &b).unwrap(), expected, epsilon = 1e-12);
        assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
    }

    #[test]
    fn ssim_of_identical_image_is_exactly_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img: Vec<f64> = (0..20 * 14 * 3).map(|_| rng.gen_range(0.0..1.0)).collect();
        let s = ssim(&img, &img, 20, 14).unwrap();
        assert_eq!(s, 1.0);
    }

    #[test]
    fn ssim_of_negated_image_is_low() {
        // Content away from mid-gray; the negative flips the luminance.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a: Vec<f64> = (0..24 * 24 * 3).map(|_| rng.gen_range(0.0..0.3)).collect();
        let b: Vec<f64> = a.iter().map(|v| 1.0 - v).collect();
        let s = ssim(&a, &b, 24, 24).unwrap();
        assert!(s < 0.5, "ssim {s}");
    }

    /// Independent oracle: per-window double loops, no separable filtering.
    #[test]
    fn ssim_matches_sliding_window_oracle() {
        let (w, h) = (18, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a: Vec<f64> = (0..w * h * 3).map(|_| rng.gen_range(0.0..1.0)).collect();
        let b: Vec<f64> = a
            .iter()
            .map(|v| (v + rng.gen_range(-0.1..0.1)).clamp(0.0, 1.0))
            .collect();

        let kernel = gaussian_window();
        let mut weights = [[0.0; SSIM_WINDOW]; SSIM_WINDOW];
        for (i, row) in weights.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = kernel[i] * kernel[j];
            }
        }
        let c1 = 1e-4;
        let c2 = 9e-4;
        let mut oracle = 0.0;
        for ch in 0..3 {
            let mut sum = 0.0;
            let mut count = 0;
            for cy in 5..h - 5 {
                for cx in 5..w - 5 {
                    let (mut ma, mut mb) = (0.0, 0.0);
                    let (mut maa, mut mbb, mut mab) = (0.0, 0.0, 0.0);
                    for dy in 0..SSIM_WINDOW {
                        for dx in 0..SSIM_WINDOW {
                            let y = cy + dy - 5;
                            let x = cx + dx - 5;
                            let va = a[(y * w + x) * 3 + ch];
                            let vb = b[(y * w + x) * 3 + ch];
                            let wgt = weights[dy][dx];
                            ma += wgt * va;
                            mb += wgt * vb;
                            maa += wgt * va * va;
                            mbb += wgt * vb * vb;
                            mab += wgt * va * vb;
                        }
                    }
                    let var_a = maa - ma * ma;
                    let var_b = mbb - mb * mb;
                    let cov = mab - ma * mb;
                    sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                        / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
                    count += 1;
                }
            }
            oracle += sum / count as f64;
        }
        oracle /= 3.0;
        let got = ssim(&a, &b, w, h).unwrap();
        assert_relative_eq!(got, oracle, epsilon = 1e-10);
    }

    #[test]
    fn report_aggregates_are_arithmetic_means() {
        let report = EvalReport::from_views(
            vec![
                ViewEval {
                    index: 0,
                    psnr: 20.0,
                    ssim: 0.8,
                    render_ms: 4.0,
                },
                ViewEval {
                    index: 1,
                    psnr: 30.0,
                    ssim: 0.9,
                    render_ms: 6.0,
                },
            ],
            1000,
            5000,
            Some(12.0),
            (64, 64),
            [1.0; 3],
        );
        assert_relative_eq!(report.mean_psnr, 25.0);
        assert_relative_eq!(report.mean_ssim, 0.85, epsilon = 1e-12);
        let text = report.to_string();
        assert!(text.contains("view=0 "));
        assert!(text.contains("aggregate views=2"));
        assert!(text.contains("train_seconds=12.000"));
    }
}
