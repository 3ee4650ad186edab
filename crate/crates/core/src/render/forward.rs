//! Forward rasterization: projection, tile binning, per-pixel gather and
//! front-to-back alpha blending.

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;

use crate::camera::Camera;
use crate::error::Result;
use crate::scene::RadiancePointCloud;
use crate::sh;

use super::{alpha_from_d2, Contrib, ProjectedPoint, RasterConfig, RenderBuffers};

/// Project cloud positions into NDC. Points behind the near clip or with
/// their whole kernel support off-image are flagged invisible; indices stay
/// aligned with the input.
pub fn project(
    positions: &[Vector3<f64>],
    camera: &Camera,
    config: &RasterConfig,
) -> Vec<ProjectedPoint> {
    let margin = config.support_radius();
    // Visible NDC rectangle inflated by the support radius. For square
    // images this is [-1 - c r, 1 + c r]^2; non-square images extend the
    // longer axis accordingly.
    let half_w = camera.width as f64 / camera.width.min(camera.height) as f64;
    let half_h = camera.height as f64 / camera.width.min(camera.height) as f64;
    positions
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (ndc, cam_z, mut visible) = match camera.project_pixel(p) {
                Some(proj) => {
                    let (nx, ny) = camera.pixel_to_ndc(proj.x, proj.y);
                    (Vector2::new(nx, ny), proj.depth, proj.depth > config.near_clip)
                }
                None => (Vector2::zeros(), 0.0, false),
            };
            if visible {
                visible = ndc.x.abs() <= half_w + margin && ndc.y.abs() <= half_h + margin;
            }
            ProjectedPoint {
                ndc,
                cam_z,
                world_index: i as u32,
                visible,
            }
        })
        .collect()
}

/// Tile binning structure: tile size equals the kernel support in pixels, so
/// a splat overlaps at most a 2x2 block of tiles (plus rounding slack).
struct TileGrid {
    tile_px: u32,
    tiles_x: u32,
    tiles_y: u32,
    bins: Vec<Vec<u32>>,
}

impl TileGrid {
    fn build(projected: &[ProjectedPoint], camera: &Camera, config: &RasterConfig) -> Self {
        let support_px = config.support_radius() * camera.ndc_scale();
        let tile_px = (support_px.ceil() as u32).max(1);
        let tiles_x = camera.width.div_ceil(tile_px);
        let tiles_y = camera.height.div_ceil(tile_px);
        let mut bins = vec![Vec::new(); (tiles_x * tiles_y) as usize];
        let (w, h) = (camera.width as f64, camera.height as f64);
        let s = camera.ndc_scale();
        for p in projected {
            if !p.visible {
                continue;
            }
            let px = p.ndc.x * s + w / 2.0;
            let py = p.ndc.y * s + h / 2.0;
            // Pixel centers within the support, conservatively widened.
            let x0 = (px - support_px - 0.5).floor().max(0.0) as u32;
            let y0 = (py - support_px - 0.5).floor().max(0.0) as u32;
            let x1 = (px + support_px + 0.5).ceil().min(w - 1.0);
            let y1 = (py + support_px + 0.5).ceil().min(h - 1.0);
            if x1 < 0.0 || y1 < 0.0 || x0 as f64 > x1 || y0 as f64 > y1 {
                continue;
            }
            let (tx0, tx1) = (x0 / tile_px, x1 as u32 / tile_px);
            let (ty0, ty1) = (y0 / tile_px, y1 as u32 / tile_px);
            for ty in ty0..=ty1 {
                for tx in tx0..=tx1 {
                    bins[(ty * tiles_x + tx) as usize].push(p.world_index);
                }
            }
        }
        Self {
            tile_px,
            tiles_x,
            tiles_y: tiles_y.max(1),
            bins,
        }
    }

    #[inline]
    fn candidates(&self, ix: u32, iy: u32) -> &[u32] {
        let tx = (ix / self.tile_px).min(self.tiles_x - 1);
        let ty = (iy / self.tile_px).min(self.tiles_y - 1);
        &self.bins[(ty * self.tiles_x + tx) as usize]
    }
}

struct RowOutput {
    rgb: Vec<f64>,
    alpha: Vec<f64>,
    depth: Vec<f64>,
    counts: Vec<u32>,
    contribs: Vec<Contrib>,
}

/// Composite projected points with per-point colors into render buffers.
///
/// Per pixel: gather covering splats, keep the `points_per_pixel` front-most
/// by camera depth, blend front to back, and composite the background behind
/// the remaining transmittance. Pixels are independent; rows run in parallel
/// and are stitched in order, so the result is deterministic.
pub fn composite(
    projected: &[ProjectedPoint],
    colors: &[Vector3<f64>],
    camera: &Camera,
    config: &RasterConfig,
) -> RenderBuffers {
    let grid = TileGrid::build(projected, camera, config);
    let (w, h) = (camera.width, camera.height);
    let support2 = config.support_radius() * config.support_radius();
    let n_keep = config.points_per_pixel;
    let bg = config.background;

    let rows: Vec<RowOutput> = (0..h)
        .into_par_iter()
        .map(|iy| {
            let mut rgb = vec![0.0; w as usize * 3];
            let mut alpha = vec![0.0; w as usize];
            let mut depth = vec![0.0; w as usize];
            let mut counts = vec![0u32; w as usize];
            let mut contribs = Vec::new();
            let mut candidates: Vec<(f64, u32, f64)> = Vec::new(); // (z, index, d2)
            for ix in 0..w {
                let (ux, uy) = camera.pixel_center_ndc(ix, iy);
                let u = Vector2::new(ux, uy);
                candidates.clear();
                for &pi in grid.candidates(ix, iy) {
                    let p = &projected[pi as usize];
                    let d2 = (p.ndc - u).norm_squared();
                    if d2 <= support2 {
                        candidates.push((p.cam_z, pi, d2));
                    }
                }
                candidates
                    .sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                candidates.truncate(n_keep);

                let mut transmittance = 1.0;
                let mut acc = Vector3::zeros();
                let mut acc_alpha = 0.0;
                let mut acc_depth = 0.0;
                for &(z, pi, d2) in &candidates {
                    let a = alpha_from_d2(d2, config);
                    let weight = a * transmittance;
                    let c = colors[pi as usize];
                    acc += c * weight;
                    acc_alpha += weight;
                    acc_depth += z * weight;
                    transmittance *= 1.0 - a;
                    contribs.push(Contrib {
                        point: pi,
                        alpha: a,
                        weight,
                    });
                    counts[ix as usize] += 1;
                }
                let x3 = ix as usize * 3;
                rgb[x3] = acc.x + transmittance * bg[0];
                rgb[x3 + 1] = acc.y + transmittance * bg[1];
                rgb[x3 + 2] = acc.z + transmittance * bg[2];
                alpha[ix as usize] = acc_alpha;
                depth[ix as usize] = acc_depth;
            }
            RowOutput {
                rgb,
                alpha,
                depth,
                counts,
                contribs,
            }
        })
        .collect();

    let pixels = w as usize * h as usize;
    let mut rgb = Vec::with_capacity(pixels * 3);
    let mut alpha = Vec::with_capacity(pixels);
    let mut depth = Vec::with_capacity(pixels);
    let mut offsets = Vec::with_capacity(pixels + 1);
    let mut contribs = Vec::new();
    offsets.push(0u32);
    for row in rows {
        rgb.extend_from_slice(&row.rgb);
        alpha.extend_from_slice(&row.alpha);
        depth.extend_from_slice(&row.depth);
        for c in row.counts {
            offsets.push(offsets.last().unwrap() + c);
        }
        contribs.extend_from_slice(&row.contribs);
    }
    RenderBuffers::from_parts(w, h, rgb, alpha, depth, offsets, contribs)
}

/// Per-point view-dependent colors for one camera. Invisible points get a
/// zero placeholder; they never reach the compositor.
pub(crate) fn view_colors(
    cloud: &RadiancePointCloud,
    camera: &Camera,
    projected: &[ProjectedPoint],
) -> Result<Vec<Vector3<f64>>> {
    let l_max = cloud.l_max();
    let mut colors = vec![Vector3::zeros(); cloud.len()];
    let mut basis = [0.0f64; sh::basis_len(sh::MAX_DEGREE)];
    for p in projected {
        if !p.visible {
            continue;
        }
        let i = p.world_index as usize;
        let dir = camera.view_direction(&cloud.positions()[i])?;
        sh::eval_basis(&dir, l_max, &mut basis);
        colors[i] = cloud.color_from_basis(i, &basis[..cloud.basis_len()]);
    }
    Ok(colors)
}

/// Full forward pass: project, evaluate per-point colors, composite.
pub fn render_view(
    cloud: &RadiancePointCloud,
    camera: &Camera,
    config: &RasterConfig,
) -> Result<RenderBuffers> {
    config.validate()?;
    camera.validate()?;
    let projected = project(cloud.positions(), camera, config);
    let colors = view_colors(cloud, camera, &projected)?;
    Ok(composite(&projected, &colors, camera, config))
}
