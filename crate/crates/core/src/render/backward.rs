//! Backward pass of the splat rasterizer.
//!
//! Given upstream per-pixel gradients dL/dI, produces dL/d(position) and
//! dL/d(color) per point. The per-pixel contributor lists, depth order and
//! clamp states are constants of the forward pass; gradients flow through
//!
//!   * the blend weights A_i = alpha_i prod_{k<i} (1 - alpha_k),
//!   * the Gaussian kernel (zero where the kernel was clamped at the
//!     ceiling, zero beyond the support cutoff),
//!   * the NDC projection Jacobian, and
//!   * the per-point view direction entering the SH color.

use nalgebra::{Matrix3, Vector2, Vector3};
use rayon::prelude::*;

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::scene::RadiancePointCloud;
use crate::sh;

use super::forward::{project, view_colors};
use super::{RasterConfig, RenderBuffers};

/// Gradients w.r.t. the scene parameters of one rendered view.
#[derive(Debug, Clone)]
pub struct RenderGradients {
    /// dL/dP per point (world units).
    pub positions: Vec<Vector3<f64>>,
    /// dL/dc per point: upstream gradient of the per-point RGB color,
    /// ready to be chained into SH coefficients with `sh_color_gradient`.
    pub colors: Vec<Vector3<f64>>,
}

/// Fixed number of row chunks for gradient accumulation. Partial sums are
/// reduced in chunk order, so results do not depend on the worker count.
const ACCUM_CHUNKS: usize = 16;

pub fn backward(
    cloud: &RadiancePointCloud,
    camera: &Camera,
    config: &RasterConfig,
    buffers: &RenderBuffers,
    upstream: &[f64],
) -> Result<RenderGradients> {
    let (w, h) = (camera.width as usize, camera.height as usize);
    if buffers.width != camera.width || buffers.height != camera.height {
        return Err(Error::ShapeMismatch(format!(
            "buffers are {}x{}, camera is {}x{}",
            buffers.width, buffers.height, camera.width, camera.height
        )));
    }
    if upstream.len() != w * h * 3 {
        return Err(Error::ShapeMismatch(format!(
            "upstream has {} values, expected {}",
            upstream.len(),
            w * h * 3
        )));
    }
    let n = cloud.len();
    if let Some(c) = buffers
        .contributors_all()
        .iter()
        .find(|c| c.point as usize >= n)
    {
        return Err(Error::ShapeMismatch(format!(
            "buffer references point {} but cloud has {} points",
            c.point, n
        )));
    }

    // Forward state the pixel loop needs: identical recomputation.
    let projected = project(cloud.positions(), camera, config);
    let colors = view_colors(cloud, camera, &projected)?;

    let r2 = config.kernel_radius * config.kernel_radius;
    let ceiling = config.alpha_ceiling;

    let chunks = ACCUM_CHUNKS.min(h.max(1));
    let partials: Vec<(Vec<Vector2<f64>>, Vec<Vector3<f64>>)> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let row_lo = chunk * h / chunks;
            let row_hi = (chunk + 1) * h / chunks;
            let mut d_ndc = vec![Vector2::zeros(); n];
            let mut d_color = vec![Vector3::zeros(); n];
            for iy in row_lo..row_hi {
                for ix in 0..w {
                    let pixel = iy * w + ix;
                    let list = buffers.contributors_flat(pixel);
                    if list.is_empty() {
                        continue;
                    }
                    let g = Vector3::new(
                        upstream[pixel * 3],
                        upstream[pixel * 3 + 1],
                        upstream[pixel * 3 + 2],
                    );
                    let pixel_rgb = Vector3::new(
                        buffers.rgb[pixel * 3],
                        buffers.rgb[pixel * 3 + 1],
                        buffers.rgb[pixel * 3 + 2],
                    );
                    let (ux, uy) = camera.pixel_center_ndc(ix as u32, iy as u32);
                    let u = Vector2::new(ux, uy);
                    let mut transmittance = 1.0;
                    // Colors already blended in front of the current splat.
                    let mut prefix = Vector3::zeros();
                    for c in list {
                        let i = c.point as usize;
                        let color = colors[i];
                        d_color[i] += g * c.weight;
                        prefix += color * c.weight;
                        if c.alpha < ceiling {
                            // Suffix: everything occluded by this splat,
                            // including the background term.
                            let suffix = pixel_rgb - prefix;
                            let d_alpha = g.dot(
                                &(color * transmittance - suffix / (1.0 - c.alpha)),
                            );
                            // d alpha / d ndc = -alpha (p - u) / r^2.
                            let p_ndc = projected[i].ndc;
                            d_ndc[i] += (p_ndc - u) * (-c.alpha / r2 * d_alpha);
                        }
                        transmittance *= 1.0 - c.alpha;
                    }
                }
            }
            (d_ndc, d_color)
        })
        .collect();

    let mut d_ndc = vec![Vector2::zeros(); n];
    let mut d_color = vec![Vector3::zeros(); n];
    for (pn, pc) in partials {
        for i in 0..n {
            d_ndc[i] += pn[i];
            d_color[i] += pc[i];
        }
    }

    // Chain per-point NDC and color gradients back to world positions.
    let inv_scale = 1.0 / camera.ndc_scale();
    let m = camera.intrinsics;
    let rot = camera.rotation;
    let l_max = cloud.l_max();
    let basis_len = cloud.basis_len();
    let d_positions: Vec<Vector3<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let pp = &projected[i];
            if !pp.visible || (d_ndc[i] == Vector2::zeros() && d_color[i] == Vector3::zeros()) {
                return Vector3::zeros();
            }
            let q = camera.to_camera(&cloud.positions()[i]);
            let s = m * q;
            let mut grad = Vector3::zeros();

            // Projection path: ndc = (M q / s_z - principal) / scale.
            let row0 = m.row(0);
            let row2 = m.row(2);
            let row1 = m.row(1);
            let d_pix_x = (row0 * s.z - row2 * s.x) / (s.z * s.z);
            let d_pix_y = (row1 * s.z - row2 * s.y) / (s.z * s.z);
            let d_q = (d_pix_x * d_ndc[i].x + d_pix_y * d_ndc[i].y) * inv_scale;
            grad += rot.transpose() * d_q.transpose();

            // View-direction path: c = sum_k h_k Y_k(v), v = q / |q|.
            let dc = d_color[i];
            if dc != Vector3::zeros() {
                let norm = q.norm();
                let v = q / norm;
                let mut values = [0.0f64; sh::basis_len(sh::MAX_DEGREE)];
                let mut grads = [Vector3::zeros(); sh::basis_len(sh::MAX_DEGREE)];
                sh::eval_basis_with_grad(&v, l_max, &mut values, &mut grads);
                let coeffs = cloud.point_sh(i);
                let mut d_v = Vector3::zeros();
                for ch in 0..3 {
                    let gch = dc[ch];
                    if gch == 0.0 {
                        continue;
                    }
                    for k in 0..basis_len {
                        d_v += grads[k] * (gch * coeffs[ch * basis_len + k]);
                    }
                }
                let projector = Matrix3::identity() - v * v.transpose();
                grad += rot.transpose() * (projector * d_v) / norm;
            }
            grad
        })
        .collect();

    Ok(RenderGradients {
        positions: d_positions,
        colors: d_color,
    })
}
