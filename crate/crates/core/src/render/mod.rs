//! Differentiable splat rasterizer.
//!
//! Forward: project points to NDC, splat each with a clamped Gaussian kernel,
//! and alpha-blend the per-pixel contributors front to back. Backward: hand
//! derived chain rule through the blend, the kernel, the projection, and the
//! per-point view direction; depth ordering and the per-pixel gather are
//! constants of the forward pass.

mod backward;
mod forward;

pub use backward::{backward, RenderGradients};
pub use forward::{composite, project, render_view};

use nalgebra::Vector2;

use crate::error::{Error, Result};

/// Rasterizer parameters. The kernel radius lives in NDC units, where the
/// shorter image side spans [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct RasterConfig {
    /// Gaussian kernel radius r.
    pub kernel_radius: f64,
    /// Contributors kept per pixel (front-most by camera depth).
    pub points_per_pixel: usize,
    /// Kernel support ends at `cutoff_multiplier * kernel_radius`.
    pub cutoff_multiplier: f64,
    /// Points with camera depth at or below this are invisible.
    pub near_clip: f64,
    /// Upper clamp on per-splat opacity; keeps transmittance positive.
    pub alpha_ceiling: f64,
    /// Color composited behind the remaining transmittance.
    pub background: [f64; 3],
}

impl Default for RasterConfig {
    fn default() -> Self {
        Self {
            kernel_radius: 0.008,
            points_per_pixel: 15,
            cutoff_multiplier: 3.0,
            near_clip: 0.01,
            alpha_ceiling: 0.9999,
            background: [0.0; 3],
        }
    }
}

impl RasterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kernel_radius > 0.0) {
            return Err(Error::Config("kernel radius must be positive".into()));
        }
        if self.points_per_pixel == 0 {
            return Err(Error::Config("points_per_pixel must be >= 1".into()));
        }
        if !(self.cutoff_multiplier >= 1.0) {
            return Err(Error::Config("cutoff_multiplier must be >= 1".into()));
        }
        if !(self.alpha_ceiling > 0.0 && self.alpha_ceiling <= 1.0) {
            return Err(Error::Config("alpha_ceiling must be in (0, 1]".into()));
        }
        if !(self.near_clip > 0.0) {
            return Err(Error::Config("near_clip must be positive".into()));
        }
        Ok(())
    }

    /// Kernel support radius in NDC.
    #[inline]
    pub fn support_radius(&self) -> f64 {
        self.cutoff_multiplier * self.kernel_radius
    }

    /// Peak of the unclamped kernel, 1 / sqrt(2 pi r^2).
    #[inline]
    pub fn kernel_peak(&self) -> f64 {
        1.0 / (std::f64::consts::TAU * self.kernel_radius * self.kernel_radius).sqrt()
    }
}

/// Splat opacity of a point at `point_ndc` seen from a pixel at `pixel_ndc`:
/// the Gaussian kernel clamped to the alpha ceiling, exactly zero beyond the
/// support cutoff.
pub fn kernel_opacity(
    point_ndc: Vector2<f64>,
    pixel_ndc: Vector2<f64>,
    config: &RasterConfig,
) -> f64 {
    let d2 = (point_ndc - pixel_ndc).norm_squared();
    let support = config.support_radius();
    if d2 > support * support {
        return 0.0;
    }
    alpha_from_d2(d2, config)
}

/// Kernel value from a squared NDC distance already known to be inside the
/// support.
#[inline]
pub(crate) fn alpha_from_d2(d2: f64, config: &RasterConfig) -> f64 {
    let r2 = config.kernel_radius * config.kernel_radius;
    let raw = config.kernel_peak() * (-d2 / (2.0 * r2)).exp();
    raw.min(config.alpha_ceiling)
}

/// A point after projection. Invisible points keep their slot so that
/// indices stay aligned with the cloud.
#[derive(Debug, Clone, Copy)]
pub struct ProjectedPoint {
    pub ndc: Vector2<f64>,
    pub cam_z: f64,
    pub world_index: u32,
    pub visible: bool,
}

/// One retained splat contribution at a pixel.
#[derive(Debug, Clone, Copy)]
pub struct Contrib {
    pub point: u32,
    /// Clamped kernel opacity alpha_i.
    pub alpha: f64,
    /// Net contribution A_i = alpha_i * prod_{k<i} (1 - alpha_k).
    pub weight: f64,
}

/// Forward-pass outputs plus the per-pixel contributor lists retained for
/// the backward pass (front-to-back order).
#[derive(Debug, Clone)]
pub struct RenderBuffers {
    pub width: u32,
    pub height: u32,
    /// Composited RGB including the background term, row-major, unclamped.
    pub rgb: Vec<f64>,
    /// Sum of contribution weights per pixel.
    pub alpha_acc: Vec<f64>,
    /// Contribution-weighted expected camera depth per pixel.
    pub depth: Vec<f64>,
    offsets: Vec<u32>,
    contribs: Vec<Contrib>,
}

impl RenderBuffers {
    pub(crate) fn from_parts(
        width: u32,
        height: u32,
        rgb: Vec<f64>,
        alpha_acc: Vec<f64>,
        depth: Vec<f64>,
        offsets: Vec<u32>,
        contribs: Vec<Contrib>,
    ) -> Self {
        Self {
            width,
            height,
            rgb,
            alpha_acc,
            depth,
            offsets,
            contribs,
        }
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Contributors of pixel `(ix, iy)`, ordered front to back.
    pub fn contributors(&self, ix: u32, iy: u32) -> &[Contrib] {
        let p = (iy * self.width + ix) as usize;
        let lo = self.offsets[p] as usize;
        let hi = self.offsets[p + 1] as usize;
        &self.contribs[lo..hi]
    }

    #[inline]
    pub(crate) fn contributors_flat(&self, pixel: usize) -> &[Contrib] {
        let lo = self.offsets[pixel] as usize;
        let hi = self.offsets[pixel + 1] as usize;
        &self.contribs[lo..hi]
    }

    /// Every retained contribution, all pixels concatenated.
    pub fn contributors_all(&self) -> &[Contrib] {
        &self.contribs
    }

    /// RGB clamped to [0, 1] for write-out and metric evaluation.
    pub fn clamped_rgb(&self) -> Vec<f64> {
        self.rgb.iter().map(|v| v.clamp(0.0, 1.0)).collect()
    }
}
