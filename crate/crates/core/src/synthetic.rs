//! Procedurally generated test scenes: ray-traced sphere clusters with
//! exact masks, ring camera rigs, and Blender-layout dataset writing.
//!
//! These provide ground truth that is independent of the splat renderer,
//! for end-to-end training tests and demo datasets.

use std::path::Path;

use nalgebra::Vector3;
use serde_json::json;

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::image_io;
use crate::scene::ViewSample;

#[derive(Debug, Clone, Copy)]
pub struct Sphere {
    pub center: Vector3<f64>,
    pub radius: f64,
    pub albedo: [f64; 3],
    /// Strength of the view-dependent highlight.
    pub specular: f64,
    pub shininess: f64,
}

#[derive(Debug, Clone)]
pub struct SphereScene {
    pub spheres: Vec<Sphere>,
    pub light_dir: Vector3<f64>,
    pub ambient: f64,
}

impl SphereScene {
    /// A small cluster with mixed albedos and one glossy sphere.
    pub fn demo() -> Self {
        Self {
            spheres: vec![
                Sphere {
                    center: Vector3::new(0.0, 0.0, 0.1),
                    radius: 0.75,
                    albedo: [0.85, 0.25, 0.2],
                    specular: 0.5,
                    shininess: 12.0,
                },
                Sphere {
                    center: Vector3::new(0.75, 0.45, -0.35),
                    radius: 0.42,
                    albedo: [0.2, 0.55, 0.9],
                    specular: 0.25,
                    shininess: 8.0,
                },
                Sphere {
                    center: Vector3::new(-0.65, 0.55, -0.3),
                    radius: 0.38,
                    albedo: [0.25, 0.8, 0.3],
                    specular: 0.0,
                    shininess: 1.0,
                },
                Sphere {
                    center: Vector3::new(-0.1, -0.75, -0.25),
                    radius: 0.34,
                    albedo: [0.9, 0.8, 0.25],
                    specular: 0.35,
                    shininess: 20.0,
                },
            ],
            light_dir: Vector3::new(-0.35, -0.45, 0.82).normalize(),
            ambient: 0.25,
        }
    }

    /// The demo scene rigidly shifted (for video sequences).
    pub fn translated(&self, offset: Vector3<f64>) -> Self {
        let mut scene = self.clone();
        for s in &mut scene.spheres {
            s.center += offset;
        }
        scene
    }

    fn hit(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for (i, s) in self.spheres.iter().enumerate() {
            let oc = origin - s.center;
            let b = oc.dot(dir);
            let c = oc.norm_squared() - s.radius * s.radius;
            let disc = b * b - c;
            if disc < 0.0 {
                continue;
            }
            let sqrt_disc = disc.sqrt();
            let mut t = -b - sqrt_disc;
            if t <= 1e-6 {
                t = -b + sqrt_disc;
            }
            if t <= 1e-6 {
                continue;
            }
            if best.map_or(true, |(bt, _)| t < bt) {
                best = Some((t, i));
            }
        }
        best
    }

    fn shade(&self, hit: &Vector3<f64>, sphere: usize, view_dir: &Vector3<f64>) -> [f64; 3] {
        let s = &self.spheres[sphere];
        let normal = (hit - s.center) / s.radius;
        let diffuse = normal.dot(&self.light_dir).max(0.0);
        let reflect = normal * (2.0 * normal.dot(&self.light_dir)) - self.light_dir;
        let spec = s.specular * reflect.dot(&(-view_dir)).max(0.0).powf(s.shininess);
        let mut rgb = [0.0; 3];
        for ch in 0..3 {
            rgb[ch] = (s.albedo[ch] * (self.ambient + (1.0 - self.ambient) * diffuse) + spec)
                .clamp(0.0, 1.0);
        }
        rgb
    }
}

/// Cameras on a ring of the given radius and height, all looking at the
/// origin, sharing one focal length derived from `fov_x` (radians).
pub fn ring_cameras(
    count: usize,
    radius: f64,
    height: f64,
    width: u32,
    height_px: u32,
    fov_x: f64,
) -> Result<Vec<Camera>> {
    let focal = 0.5 * width as f64 / (fov_x / 2.0).tan();
    (0..count)
        .map(|i| {
            let theta = i as f64 / count as f64 * std::f64::consts::TAU;
            let eye = Vector3::new(radius * theta.cos(), radius * theta.sin(), height);
            Camera::look_at(
                eye,
                Vector3::zeros(),
                Vector3::new(0.0, 0.0, 1.0),
                focal,
                width,
                height_px,
            )
        })
        .collect()
}

/// Ray-trace one view. Returns straight-alpha RGB (color averaged over the
/// covered sub-samples) and coverage alpha.
pub fn render_scene(
    scene: &SphereScene,
    camera: &Camera,
    supersample: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (w, h) = (camera.width as usize, camera.height as usize);
    let origin = camera.center();
    let ss = supersample.max(1);
    let mut rgb = vec![0.0; w * h * 3];
    let mut alpha = vec![0.0; w * h];
    for iy in 0..h {
        for ix in 0..w {
            let mut acc = [0.0; 3];
            let mut hits = 0usize;
            for sy in 0..ss {
                for sx in 0..ss {
                    let px = ix as f64 + (sx as f64 + 0.5) / ss as f64;
                    let py = iy as f64 + (sy as f64 + 0.5) / ss as f64;
                    let dir = camera.ray_direction(px, py)?;
                    if let Some((t, si)) = scene.hit(&origin, &dir) {
                        let hit = origin + dir * t;
                        let shaded = scene.shade(&hit, si, &dir);
                        for ch in 0..3 {
                            acc[ch] += shaded[ch];
                        }
                        hits += 1;
                    }
                }
            }
            let idx = iy * w + ix;
            if hits > 0 {
                for ch in 0..3 {
                    rgb[idx * 3 + ch] = acc[ch] / hits as f64;
                }
            }
            alpha[idx] = hits as f64 / (ss * ss) as f64;
        }
    }
    Ok((rgb, alpha))
}

/// ViewSamples of a scene: RGB composited over `background`, mask where any
/// coverage exists (alpha > 0).
pub fn scene_views(
    scene: &SphereScene,
    cameras: &[Camera],
    background: [f64; 3],
) -> Result<Vec<ViewSample>> {
    cameras
        .iter()
        .map(|camera| {
            let (rgb, alpha) = render_scene(scene, camera, 2)?;
            let pixels = alpha.len();
            let mut image = Vec::with_capacity(pixels * 3);
            let mut mask = Vec::with_capacity(pixels);
            for i in 0..pixels {
                let a = alpha[i];
                for ch in 0..3 {
                    image.push(rgb[i * 3 + ch] * a + background[ch] * (1.0 - a));
                }
                mask.push(a > 0.0);
            }
            ViewSample::new(camera.clone(), image, mask)
        })
        .collect()
}

/// Exact silhouette views of a single sphere: the mask is an analytic
/// ray-sphere test at each pixel center, the image is flat white foreground.
pub fn sphere_silhouette_views(
    center: Vector3<f64>,
    radius: f64,
    cameras: &[Camera],
) -> Result<Vec<ViewSample>> {
    cameras
        .iter()
        .map(|camera| {
            let (w, h) = (camera.width as usize, camera.height as usize);
            let origin = camera.center();
            let mut mask = vec![false; w * h];
            let mut image = vec![0.0f64; w * h * 3];
            for iy in 0..h {
                for ix in 0..w {
                    let dir = camera.ray_direction(ix as f64 + 0.5, iy as f64 + 0.5)?;
                    let oc = origin - center;
                    let b = oc.dot(&dir);
                    let c = oc.norm_squared() - radius * radius;
                    if b * b - c >= 0.0 && (-b) > 0.0 {
                        let idx = iy * w + ix;
                        mask[idx] = true;
                        image[idx * 3] = 1.0;
                        image[idx * 3 + 1] = 1.0;
                        image[idx * 3 + 2] = 1.0;
                    }
                }
            }
            ViewSample::new(camera.clone(), image, mask)
        })
        .collect()
}

/// Camera-to-world matrix in the OpenGL convention used by the Blender
/// layout (camera looks down -z, y up).
fn camera_to_world_gl(camera: &Camera) -> [[f64; 4]; 4] {
    // R_cv = flip * R_gl_w2c with flip = diag(1, -1, -1), so the c2w
    // rotation block is R_cv^T * flip.
    let r = camera.rotation.transpose();
    let center = camera.center();
    let mut m = [[0.0; 4]; 4];
    for row in 0..3 {
        m[row][0] = r[(row, 0)];
        m[row][1] = -r[(row, 1)];
        m[row][2] = -r[(row, 2)];
        m[row][3] = center[row];
    }
    m[3][3] = 1.0;
    m
}

fn write_split(
    dir: &Path,
    split: &str,
    scene: &SphereScene,
    cameras: &[Camera],
) -> Result<()> {
    let sub = dir.join(split);
    std::fs::create_dir_all(&sub)?;
    let focal = cameras
        .first()
        .ok_or_else(|| Error::Config("split needs at least one camera".into()))?
        .intrinsics[(0, 0)];
    let width = cameras[0].width;
    let camera_angle_x = 2.0 * (0.5 * width as f64 / focal).atan();
    let mut frames = Vec::new();
    for (i, camera) in cameras.iter().enumerate() {
        let (rgb, alpha) = render_scene(scene, camera, 2)?;
        let name = format!("r_{i}");
        image_io::write_image_rgba(
            &rgb,
            &alpha,
            camera.width,
            camera.height,
            &sub.join(format!("{name}.png")),
        )?;
        frames.push(json!({
            "file_path": format!("./{split}/{name}"),
            "transform_matrix": camera_to_world_gl(camera),
        }));
    }
    let manifest = json!({
        "camera_angle_x": camera_angle_x,
        "frames": frames,
    });
    std::fs::write(
        dir.join(format!("transforms_{split}.json")),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

/// Write a complete Blender-layout dataset (transforms_{split}.json plus
/// RGBA renders) for the given scene.
pub fn write_blender_dataset(
    dir: &Path,
    scene: &SphereScene,
    train_cameras: &[Camera],
    test_cameras: &[Camera],
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_split(dir, "train", scene, train_cameras)?;
    write_split(dir, "test", scene, test_cameras)?;
    Ok(())
}

/// Write a `frame_<idx>/` video dataset of the demo scene translating by
/// `step` per frame.
pub fn write_translating_sequence(
    root: &Path,
    frames: usize,
    step: Vector3<f64>,
    train_cameras: &[Camera],
    test_cameras: &[Camera],
) -> Result<()> {
    let base = SphereScene::demo();
    for f in 0..frames {
        let scene = base.translated(step * f as f64);
        let dir = root.join(format!("frame_{f:03}"));
        write_blender_dataset(&dir, &scene, train_cameras, test_cameras)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silhouette_matches_projected_sphere_extent() {
        let cameras = ring_cameras(1, 4.0, 0.0, 64, 64, 1.0).unwrap();
        let views = sphere_silhouette_views(Vector3::zeros(), 1.0, &cameras).unwrap();
        let fg = views[0].mask.iter().filter(|&&m| m).count();
        // Disc of angular radius asin(1/4) on a 64px image with fov 1 rad:
        // projected pixel radius ~ focal * tan(asin(1/4)) ~ 15.2 px.
        let expected = std::f64::consts::PI * 15.2f64.powi(2);
        let ratio = fg as f64 / expected;
        assert!(
            (0.85..1.15).contains(&ratio),
            "foreground {fg}, expected about {expected:.0}"
        );
    }

    #[test]
    fn ring_cameras_all_see_origin() {
        let cameras = ring_cameras(12, 4.0, 1.5, 32, 32, 1.0).unwrap();
        for cam in &cameras {
            let proj = cam.project_pixel(&Vector3::zeros()).unwrap();
            assert!((proj.x - 16.0).abs() < 1e-6);
            assert!((proj.y - 16.0).abs() < 1e-6);
            assert!(proj.depth > 0.0);
        }
    }

    #[test]
    fn rendered_views_have_foreground_and_background() {
        let cameras = ring_cameras(2, 4.0, 1.0, 32, 32, 1.0).unwrap();
        let views = scene_views(&SphereScene::demo(), &cameras, [1.0; 3]).unwrap();
        for view in &views {
            let fg = view.mask.iter().filter(|&&m| m).count();
            assert!(fg > 50 && fg < view.mask.len() - 50);
        }
    }
}
