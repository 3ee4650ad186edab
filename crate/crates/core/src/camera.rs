//! Pinhole camera: world-to-camera extrinsics plus pixel intrinsics.
//!
//! Convention is the usual CV one: `q = R p + t` maps world points into a
//! frame with x right, y down, z forward; points in front of the camera have
//! positive depth. NDC maps pixel coordinates so the shorter image side spans
//! [-1, 1]; the kernel radius of the rasterizer lives in these units.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub intrinsics: Matrix3<f64>,
    pub width: u32,
    pub height: u32,
}

/// A point projected into continuous pixel coordinates.
#[derive(Debug, Clone, Copy)]
pub struct PixelProjection {
    pub x: f64,
    pub y: f64,
    /// Camera-space depth (z component of `R p + t`).
    pub depth: f64,
}

impl Camera {
    pub fn new(
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        intrinsics: Matrix3<f64>,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let cam = Self {
            rotation,
            translation,
            intrinsics,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("camera dimensions must be positive".into()));
        }
        let gram = self.rotation.transpose() * self.rotation;
        let max_dev = (gram - Matrix3::identity()).abs().max();
        if max_dev > 1e-5 {
            return Err(Error::Config(format!(
                "camera rotation not orthonormal (max deviation {max_dev:.2e})"
            )));
        }
        if (self.intrinsics[(2, 2)] - 1.0).abs() > 1e-9 {
            return Err(Error::Config("intrinsics[2][2] must be 1".into()));
        }
        if self.intrinsics[(0, 0)] <= 0.0 || self.intrinsics[(1, 1)] <= 0.0 {
            return Err(Error::Config("focal entries must be positive".into()));
        }
        Ok(())
    }

    /// Camera looking from `eye` toward `target`, `up` fixing the roll.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        focal: f64,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let forward = target - eye;
        let norm = forward.norm();
        if norm < 1e-9 {
            return Err(Error::Degenerate("look_at eye coincides with target".into()));
        }
        let z_axis = forward / norm;
        let x_axis = z_axis.cross(&up);
        let x_norm = x_axis.norm();
        if x_norm < 1e-9 {
            return Err(Error::Degenerate("look_at direction parallel to up".into()));
        }
        let x_axis = x_axis / x_norm;
        let y_axis = z_axis.cross(&x_axis);
        let rotation = Matrix3::from_rows(&[
            x_axis.transpose(),
            y_axis.transpose(),
            z_axis.transpose(),
        ]);
        let translation = -rotation * eye;
        let intrinsics = Matrix3::new(
            focal,
            0.0,
            width as f64 / 2.0,
            0.0,
            focal,
            height as f64 / 2.0,
            0.0,
            0.0,
            1.0,
        );
        Self::new(rotation, translation, intrinsics, width, height)
    }

    /// World point into camera coordinates.
    #[inline]
    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Unit view direction of a world point in camera coordinates.
    pub fn view_direction(&self, p: &Vector3<f64>) -> Result<Vector3<f64>> {
        let q = self.to_camera(p);
        let norm = q.norm();
        if norm <= 1e-8 {
            return Err(Error::Degenerate(
                "point coincides with camera center".into(),
            ));
        }
        Ok(q / norm)
    }

    /// Perspective projection into continuous pixel coordinates.
    /// Returns `None` for points at or behind the camera plane.
    pub fn project_pixel(&self, p: &Vector3<f64>) -> Option<PixelProjection> {
        let q = self.to_camera(p);
        let s = self.intrinsics * q;
        if s.z <= 0.0 {
            return None;
        }
        Some(PixelProjection {
            x: s.x / s.z,
            y: s.y / s.z,
            depth: q.z,
        })
    }

    /// Half the shorter image side: pixel-to-NDC scale factor.
    #[inline]
    pub fn ndc_scale(&self) -> f64 {
        self.width.min(self.height) as f64 / 2.0
    }

    /// Continuous pixel coordinates to NDC (shorter side spans [-1, 1]).
    #[inline]
    pub fn pixel_to_ndc(&self, px: f64, py: f64) -> (f64, f64) {
        let s = self.ndc_scale();
        (
            (px - self.width as f64 / 2.0) / s,
            (py - self.height as f64 / 2.0) / s,
        )
    }

    /// NDC position of the center of pixel (ix, iy).
    #[inline]
    pub fn pixel_center_ndc(&self, ix: u32, iy: u32) -> (f64, f64) {
        self.pixel_to_ndc(ix as f64 + 0.5, iy as f64 + 0.5)
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// World-space unit direction of the ray through continuous pixel (px, py).
    pub fn ray_direction(&self, px: f64, py: f64) -> Result<Vector3<f64>> {
        let inv = self
            .intrinsics
            .try_inverse()
            .ok_or_else(|| Error::Config("intrinsics not invertible".into()))?;
        let dir_cam = inv * Vector3::new(px, py, 1.0);
        let dir = self.rotation.transpose() * dir_cam;
        Ok(dir / dir.norm())
    }

    /// World point at camera depth `z` behind continuous pixel (px, py).
    pub fn unproject(&self, px: f64, py: f64, z: f64) -> Result<Vector3<f64>> {
        let inv = self
            .intrinsics
            .try_inverse()
            .ok_or_else(|| Error::Config("intrinsics not invertible".into()))?;
        let q = inv * Vector3::new(px * z, py * z, z);
        Ok(self.rotation.transpose() * (q - self.translation))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_camera() -> Camera {
        Camera::new(
            Matrix3::identity(),
            Vector3::zeros(),
            Matrix3::identity(),
            64,
            64,
        )
        .unwrap()
    }

    #[test]
    fn view_direction_on_axis() {
        let cam = identity_camera();
        let v = cam.view_direction(&Vector3::new(0.0, 0.0, 5.0)).unwrap();
        assert_relative_eq!(v, Vector3::new(0.0, 0.0, 1.0), epsilon = 1e-12);
    }

    #[test]
    fn view_direction_three_four_five() {
        let cam = identity_camera();
        let v = cam.view_direction(&Vector3::new(3.0, 0.0, 4.0)).unwrap();
        assert_relative_eq!(v, Vector3::new(0.6, 0.0, 0.8), epsilon = 1e-12);
    }

    #[test]
    fn view_direction_at_center_errors() {
        let cam = identity_camera();
        let err = cam.view_direction(&Vector3::zeros()).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    /// Random poses: view direction matches a scalar recomputation of
    /// normalize(R p + t) done without nalgebra operators.
    #[test]
    fn view_direction_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let axis = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let rot = nalgebra::Rotation3::new(axis).into_inner();
            let t = Vector3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            let cam = Camera::new(rot, t, Matrix3::identity(), 8, 8).unwrap();
            let p = Vector3::new(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            );
            let mut q = [0.0f64; 3];
            for r in 0..3 {
                q[r] = rot[(r, 0)] * p.x + rot[(r, 1)] * p.y + rot[(r, 2)] * p.z + t[r];
            }
            let norm = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt();
            if norm <= 1e-8 {
                continue;
            }
            let v = cam.view_direction(&p).unwrap();
            for r in 0..3 {
                assert_relative_eq!(v[r], q[r] / norm, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn look_at_points_camera_forward() {
        let cam = Camera::look_at(
            Vector3::new(0.0, -4.0, 0.0),
            Vector3::zeros(),
            Vector3::new(0.0, 0.0, 1.0),
            100.0,
            100,
            100,
        )
        .unwrap();
        let q = cam.to_camera(&Vector3::zeros());
        assert_relative_eq!(q, Vector3::new(0.0, 0.0, 4.0), epsilon = 1e-12);
        let proj = cam.project_pixel(&Vector3::zeros()).unwrap();
        assert_relative_eq!(proj.x, 50.0, epsilon = 1e-9);
        assert_relative_eq!(proj.y, 50.0, epsilon = 1e-9);
        assert_relative_eq!(cam.center(), Vector3::new(0.0, -4.0, 0.0), epsilon = 1e-9);
    }

    #[test]
    fn unproject_inverts_projection() {
        let cam = Camera::look_at(
            Vector3::new(2.0, -3.0, 1.5),
            Vector3::zeros(),
            Vector3::new(0.0, 0.0, 1.0),
            80.0,
            64,
            48,
        )
        .unwrap();
        let p = Vector3::new(0.2, 0.3, -0.1);
        let proj = cam.project_pixel(&p).unwrap();
        let back = cam.unproject(proj.x, proj.y, proj.depth).unwrap();
        assert_relative_eq!(back, p, epsilon = 1e-9);
    }

    #[test]
    fn validate_rejects_bad_rotation() {
        let mut rot = Matrix3::identity();
        rot[(0, 0)] = 1.1;
        assert!(Camera::new(rot, Vector3::zeros(), Matrix3::identity(), 4, 4).is_err());
    }
}
