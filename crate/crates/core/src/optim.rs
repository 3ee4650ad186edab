//! Adam with bias correction, split into the two parameter groups of the
//! model: point positions and SH coefficients, each with its own learning
//! rate (the non-synchronous schedule).

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::scene::RadiancePointCloud;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[inline]
fn adam_scalar(
    param: &mut f64,
    grad: f64,
    m: &mut f64,
    v: &mut f64,
    lr: f64,
    bc1: f64,
    bc2: f64,
    p: &AdamParams,
) {
    *m = p.beta1 * *m + (1.0 - p.beta1) * grad;
    *v = p.beta2 * *v + (1.0 - p.beta2) * grad * grad;
    let m_hat = *m / bc1;
    let v_hat = *v / bc2;
    *param -= lr * m_hat / (v_hat.sqrt() + p.eps);
}

/// One bias-corrected Adam update over a flat parameter slice.
/// `step` is 1-based (the count including this update).
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    step: u64,
    lr: f64,
    p: &AdamParams,
) -> Result<()> {
    if grads.len() != params.len() || m.len() != params.len() || v.len() != params.len() {
        return Err(Error::ShapeMismatch(
            "adam buffers must match parameter length".into(),
        ));
    }
    let bc1 = 1.0 - p.beta1.powi(step as i32);
    let bc2 = 1.0 - p.beta2.powi(step as i32);
    for i in 0..params.len() {
        adam_scalar(&mut params[i], grads[i], &mut m[i], &mut v[i], lr, bc1, bc2, p);
    }
    Ok(())
}

/// Optimizer state for a point cloud: moment buffers shaped like the
/// positions and SH coefficient arrays. State is rebuilt from scratch
/// whenever coarse-to-fine restructuring changes point identities.
#[derive(Debug, Clone)]
pub struct AdamState {
    pos_m: Vec<Vector3<f64>>,
    pos_v: Vec<Vector3<f64>>,
    sh_m: Vec<f64>,
    sh_v: Vec<f64>,
    step_count: u64,
    params: AdamParams,
}

impl AdamState {
    pub fn new(cloud: &RadiancePointCloud, params: AdamParams) -> Self {
        Self {
            pos_m: vec![Vector3::zeros(); cloud.len()],
            pos_v: vec![Vector3::zeros(); cloud.len()],
            sh_m: vec![0.0; cloud.sh().len()],
            sh_v: vec![0.0; cloud.sh().len()],
            step_count: 0,
            params,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One update of both parameter groups.
    pub fn step(
        &mut self,
        cloud: &mut RadiancePointCloud,
        pos_grads: &[Vector3<f64>],
        sh_grads: &[f64],
        lr_pos: f64,
        lr_sh: f64,
    ) -> Result<()> {
        if pos_grads.len() != self.pos_m.len() || sh_grads.len() != self.sh_m.len() {
            return Err(Error::ShapeMismatch(
                "gradient shapes do not match optimizer state".into(),
            ));
        }
        if cloud.len() != self.pos_m.len() {
            return Err(Error::ShapeMismatch(
                "cloud size does not match optimizer state".into(),
            ));
        }
        self.step_count += 1;
        let p = self.params;
        let bc1 = 1.0 - p.beta1.powi(self.step_count as i32);
        let bc2 = 1.0 - p.beta2.powi(self.step_count as i32);
        let positions = cloud.positions_mut();
        for i in 0..positions.len() {
            for ax in 0..3 {
                adam_scalar(
                    &mut positions[i][ax],
                    pos_grads[i][ax],
                    &mut self.pos_m[i][ax],
                    &mut self.pos_v[i][ax],
                    lr_pos,
                    bc1,
                    bc2,
                    &p,
                );
            }
        }
        let sh = cloud.sh_mut();
        for i in 0..sh.len() {
            adam_scalar(
                &mut sh[i],
                sh_grads[i],
                &mut self.sh_m[i],
                &mut self.sh_v[i],
                lr_sh,
                bc1,
                bc2,
                &p,
            );
        }
        Ok(())
    }

    /// Drop moment rows for removed points, keeping rows of `retained`
    /// (ascending point indices). Mirrors `RadiancePointCloud::retain_indices`.
    pub fn retain_indices(&mut self, retained: &[usize], sh_stride: usize) {
        let mut pos_m = Vec::with_capacity(retained.len());
        let mut pos_v = Vec::with_capacity(retained.len());
        let mut sh_m = Vec::with_capacity(retained.len() * sh_stride);
        let mut sh_v = Vec::with_capacity(retained.len() * sh_stride);
        for &i in retained {
            pos_m.push(self.pos_m[i]);
            pos_v.push(self.pos_v[i]);
            sh_m.extend_from_slice(&self.sh_m[i * sh_stride..(i + 1) * sh_stride]);
            sh_v.extend_from_slice(&self.sh_v[i * sh_stride..(i + 1) * sh_stride]);
        }
        self.pos_m = pos_m;
        self.pos_v = pos_v;
        self.sh_m = sh_m;
        self.sh_v = sh_v;
    }
}
