//! Scene representation: the learnable point cloud and training views.

use nalgebra::Vector3;
use rand_chacha::ChaCha8Rng;

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::sh;

/// Point cloud with per-point spherical-harmonic radiance coefficients.
///
/// Coefficients are stored flat, `3 * basis_len` values per point in
/// channel-major order: for point `i`, channel `ch`, basis index `k` the
/// slot is `i * 3 * basis_len + ch * basis_len + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiancePointCloud {
    positions: Vec<Vector3<f64>>,
    sh_coeffs: Vec<f64>,
    l_max: usize,
}

impl RadiancePointCloud {
    pub fn new(positions: Vec<Vector3<f64>>, sh_coeffs: Vec<f64>, l_max: usize) -> Result<Self> {
        if l_max > sh::MAX_DEGREE {
            return Err(Error::Config(format!(
                "l_max {l_max} out of range (max {})",
                sh::MAX_DEGREE
            )));
        }
        if positions.is_empty() {
            return Err(Error::Config("point cloud must hold at least one point".into()));
        }
        let stride = 3 * sh::basis_len(l_max);
        if sh_coeffs.len() != positions.len() * stride {
            return Err(Error::ShapeMismatch(format!(
                "expected {} sh coefficients for {} points (stride {stride}), got {}",
                positions.len() * stride,
                positions.len(),
                sh_coeffs.len()
            )));
        }
        Ok(Self {
            positions,
            sh_coeffs,
            l_max,
        })
    }

    /// Positions with coefficients drawn i.i.d. from a standard normal.
    pub fn with_normal_sh(
        positions: Vec<Vector3<f64>>,
        l_max: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let stride = 3 * sh::basis_len(l_max);
        let n = positions.len() * stride;
        let mut coeffs = Vec::with_capacity(n);
        for _ in 0..n {
            coeffs.push(crate::rngutil::standard_normal(rng));
        }
        Self::new(positions, coeffs, l_max)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    #[inline]
    pub fn l_max(&self) -> usize {
        self.l_max
    }

    #[inline]
    pub fn basis_len(&self) -> usize {
        sh::basis_len(self.l_max)
    }

    /// SH values per point (`3 * basis_len`).
    #[inline]
    pub fn sh_stride(&self) -> usize {
        3 * self.basis_len()
    }

    #[inline]
    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    #[inline]
    pub fn positions_mut(&mut self) -> &mut [Vector3<f64>] {
        &mut self.positions
    }

    #[inline]
    pub fn sh(&self) -> &[f64] {
        &self.sh_coeffs
    }

    #[inline]
    pub fn sh_mut(&mut self) -> &mut [f64] {
        &mut self.sh_coeffs
    }

    #[inline]
    pub fn point_sh(&self, index: usize) -> &[f64] {
        let stride = self.sh_stride();
        &self.sh_coeffs[index * stride..(index + 1) * stride]
    }

    /// View-dependent RGB of one point, unclamped so gradients keep flowing;
    /// images are clamped to [0, 1] only at write-out.
    pub fn point_color(&self, index: usize, direction: &Vector3<f64>) -> Result<Vector3<f64>> {
        if index >= self.len() {
            return Err(Error::Contract(format!(
                "point index {index} out of range ({} points)",
                self.len()
            )));
        }
        let basis = sh::sh_basis(direction, self.l_max)?;
        Ok(self.color_from_basis(index, &basis))
    }

    /// Color from a precomputed basis evaluation (hot path; no checks).
    #[inline]
    pub(crate) fn color_from_basis(&self, index: usize, basis: &[f64]) -> Vector3<f64> {
        let b = self.basis_len();
        let coeffs = &self.sh_coeffs[index * 3 * b..(index + 1) * 3 * b];
        let mut rgb = Vector3::zeros();
        for ch in 0..3 {
            let mut acc = 0.0;
            for k in 0..b {
                acc += coeffs[ch * b + k] * basis[k];
            }
            rgb[ch] = acc;
        }
        rgb
    }

    /// Color seen from `camera`, using the per-point view direction.
    pub fn point_color_in_view(&self, index: usize, camera: &Camera) -> Result<Vector3<f64>> {
        let dir = camera.view_direction(&self.positions[index])?;
        self.point_color(index, &dir)
    }

    /// Keep only the points whose indices appear in `retained` (ascending).
    pub fn retain_indices(&mut self, retained: &[usize]) {
        let stride = self.sh_stride();
        let mut positions = Vec::with_capacity(retained.len());
        let mut coeffs = Vec::with_capacity(retained.len() * stride);
        for &i in retained {
            positions.push(self.positions[i]);
            coeffs.extend_from_slice(&self.sh_coeffs[i * stride..(i + 1) * stride]);
        }
        self.positions = positions;
        self.sh_coeffs = coeffs;
    }

    /// Append the points of `other` (same l_max) after this cloud's points.
    pub fn append(&mut self, other: &RadiancePointCloud) -> Result<()> {
        if other.l_max != self.l_max {
            return Err(Error::ShapeMismatch("appending clouds with different l_max".into()));
        }
        self.positions.extend_from_slice(&other.positions);
        self.sh_coeffs.extend_from_slice(&other.sh_coeffs);
        Ok(())
    }

    /// Every stored value must stay finite after optimization steps.
    pub fn check_finite(&self) -> Result<()> {
        for (i, p) in self.positions.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(Error::TrainingCollapse(format!(
                    "non-finite position at point {i}"
                )));
            }
        }
        if let Some(pos) = self.sh_coeffs.iter().position(|v| !v.is_finite()) {
            return Err(Error::TrainingCollapse(format!(
                "non-finite sh coefficient at flat index {pos}"
            )));
        }
        Ok(())
    }
}

/// One training image with its camera and foreground mask.
#[derive(Debug, Clone)]
pub struct ViewSample {
    pub camera: Camera,
    /// Row-major RGB, values in [0, 1].
    pub image: Vec<f64>,
    /// Row-major foreground mask.
    pub mask: Vec<bool>,
}

impl ViewSample {
    pub fn new(camera: Camera, image: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        let pixels = camera.width as usize * camera.height as usize;
        if image.len() != pixels * 3 {
            return Err(Error::ShapeMismatch(format!(
                "image has {} values, camera is {}x{}",
                image.len(),
                camera.width,
                camera.height
            )));
        }
        if mask.len() != pixels {
            return Err(Error::ShapeMismatch(format!(
                "mask has {} values, camera is {}x{}",
                mask.len(),
                camera.width,
                camera.height
            )));
        }
        Ok(Self {
            camera,
            image,
            mask,
        })
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.camera.width as usize * self.camera.height as usize
    }

    /// Target image widened to f64 for loss evaluation.
    pub fn image_f64(&self) -> Vec<f64> {
        self.image.iter().map(|&v| v as f64).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Matrix3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_term_scaling_gives_flat_color() {
        // l_max = 0 with coefficient c / Y0 yields color c from any direction.
        let target = Vector3::new(0.3, 0.6, 0.9);
        let y0 = 0.282_094_791_773_878_14;
        let coeffs = vec![target.x / y0, target.y / y0, target.z / y0];
        let cloud =
            RadiancePointCloud::new(vec![Vector3::zeros()], coeffs, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let v = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
            .normalize();
            let c = cloud.point_color(0, &v).unwrap();
            assert_relative_eq!(c, target, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_coefficients_give_black() {
        let cloud = RadiancePointCloud::new(
            vec![Vector3::zeros()],
            vec![0.0; 3 * 9],
            2,
        )
        .unwrap();
        let c = cloud
            .point_color(0, &Vector3::new(0.0, 0.0, 1.0))
            .unwrap();
        assert_eq!(c, Vector3::zeros());
    }

    #[test]
    fn point_color_matches_double_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let l_max = 2;
        let b = crate::sh::basis_len(l_max);
        let coeffs: Vec<f64> = (0..3 * b).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cloud =
            RadiancePointCloud::new(vec![Vector3::zeros()], coeffs.clone(), l_max).unwrap();
        for _ in 0..10 {
            let v = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
            .normalize();
            let c = cloud.point_color(0, &v).unwrap();
            // Oracle: explicit double loop over (l, m).
            let basis = crate::sh::sh_basis(&v, l_max).unwrap();
            for ch in 0..3 {
                let mut acc = 0.0;
                let mut k = 0;
                for l in 0..=l_max {
                    for _m in 0..(2 * l + 1) {
                        acc += coeffs[ch * b + k] * basis[k];
                        k += 1;
                    }
                }
                assert_relative_eq!(c[ch], acc, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn point_color_linear_in_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = crate::sh::basis_len(2);
        let h1: Vec<f64> = (0..3 * b).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h2: Vec<f64> = (0..3 * b).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (a, bb) = (0.7, -1.3);
        let mixed: Vec<f64> = h1.iter().zip(&h2).map(|(u, v)| a * u + bb * v).collect();
        let pos = vec![Vector3::zeros()];
        let c1 = RadiancePointCloud::new(pos.clone(), h1, 2).unwrap();
        let c2 = RadiancePointCloud::new(pos.clone(), h2, 2).unwrap();
        let cm = RadiancePointCloud::new(pos, mixed, 2).unwrap();
        let v = Vector3::new(0.48, -0.6, 0.64).normalize();
        let lhs = cm.point_color(0, &v).unwrap();
        let rhs = c1.point_color(0, &v).unwrap() * a + c2.point_color(0, &v).unwrap() * bb;
        assert_relative_eq!(lhs, rhs, epsilon = 1e-9);
    }

    #[test]
    fn color_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let l_max = 2;
        let b = crate::sh::basis_len(l_max);
        let coeffs: Vec<f64> = (0..3 * b).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v = Vector3::new(0.2, 0.5, 0.3).normalize();
        let upstream = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let grad = crate::sh::sh_color_gradient(&v, &upstream, l_max).unwrap();
        let h = 1e-5;
        for slot in 0..3 * b {
            let mut plus = coeffs.clone();
            let mut minus = coeffs.clone();
            plus[slot] += h;
            minus[slot] -= h;
            let cp = RadiancePointCloud::new(vec![Vector3::zeros()], plus, l_max).unwrap();
            let cm = RadiancePointCloud::new(vec![Vector3::zeros()], minus, l_max).unwrap();
            let fd = (upstream.dot(&cp.point_color(0, &v).unwrap())
                - upstream.dot(&cm.point_color(0, &v).unwrap()))
                / (2.0 * h);
            let scale = fd.abs().max(grad[slot].abs()).max(1e-9);
            assert!(
                (fd - grad[slot]).abs() / scale < 1e-6,
                "slot {slot}: fd {fd} vs analytic {}",
                grad[slot]
            );
        }
    }

    #[test]
    fn index_out_of_range_errors() {
        let cloud =
            RadiancePointCloud::new(vec![Vector3::zeros()], vec![0.0; 3], 0).unwrap();
        assert!(cloud
            .point_color(1, &Vector3::new(0.0, 0.0, 1.0))
            .is_err());
    }

    #[test]
    fn view_sample_rejects_mismatched_shapes() {
        let cam = Camera::new(
            Matrix3::identity(),
            Vector3::zeros(),
            Matrix3::identity(),
            4,
            4,
        )
        .unwrap();
        assert!(ViewSample::new(cam.clone(), vec![0.0; 10], vec![false; 16]).is_err());
        assert!(ViewSample::new(cam, vec![0.0; 48], vec![false; 15]).is_err());
    }
}
