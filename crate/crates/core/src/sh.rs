//! Real spherical harmonics basis, closed forms for degrees 0..=4.
//!
//! Convention: orthonormal real basis with the Condon-Shortley phase absorbed
//! into the constants (the usual graphics tables). Flat ordering is
//! (l,m) = (0,0), (1,-1), (1,0), (1,1), (2,-2), ... Checkpoints record this
//! as `sh_convention_version = 1`; learned coefficients are only meaningful
//! under the convention they were trained with.

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Highest supported band.
pub const MAX_DEGREE: usize = 4;

/// Number of basis functions for a maximum degree `l_max`.
pub const fn basis_len(l_max: usize) -> usize {
    (l_max + 1) * (l_max + 1)
}

const C0: f64 = 0.282_094_791_773_878_14;
const C1: f64 = 0.488_602_511_902_919_9;
const C2_XY: f64 = 1.092_548_430_592_079_2;
const C2_Z2: f64 = 0.315_391_565_252_520_05;
const C2_X2Y2: f64 = 0.546_274_215_296_039_6;
const C3_0: f64 = 0.590_043_589_926_643_5;
const C3_1: f64 = 2.890_611_442_640_554;
const C3_2: f64 = 0.457_045_799_464_465_74;
const C3_3: f64 = 0.373_176_332_590_115_4;
const C3_4: f64 = 1.445_305_721_320_277;
const C4_0: f64 = 2.503_342_941_796_704_6;
const C4_1: f64 = 1.770_130_769_779_930_4;
const C4_2: f64 = 0.946_174_695_757_560_1;
const C4_3: f64 = 0.669_046_543_557_289_2;
const C4_4: f64 = 0.105_785_546_915_204_31;
const C4_5: f64 = 0.473_087_347_878_780_04;
const C4_6: f64 = 0.625_835_735_449_176_1;

fn check_degree(l_max: usize) -> Result<()> {
    if l_max > MAX_DEGREE {
        return Err(Error::Config(format!(
            "sh degree {l_max} out of range (max {MAX_DEGREE})"
        )));
    }
    Ok(())
}

fn check_unit(direction: &Vector3<f64>) -> Result<()> {
    let norm = direction.norm();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(Error::Contract(format!(
            "sh direction must be unit length, got norm {norm}"
        )));
    }
    Ok(())
}

/// Evaluate the real SH basis at a unit direction, flat (l,m) order.
pub fn sh_basis(direction: &Vector3<f64>, l_max: usize) -> Result<Vec<f64>> {
    check_degree(l_max)?;
    check_unit(direction)?;
    let mut out = vec![0.0; basis_len(l_max)];
    eval_basis(direction, l_max, &mut out);
    Ok(out)
}

/// Unchecked basis evaluation into a caller-provided slice (hot path).
pub(crate) fn eval_basis(direction: &Vector3<f64>, l_max: usize, out: &mut [f64]) {
    let (x, y, z) = (direction.x, direction.y, direction.z);
    out[0] = C0;
    if l_max == 0 {
        return;
    }
    out[1] = C1 * y;
    out[2] = C1 * z;
    out[3] = C1 * x;
    if l_max == 1 {
        return;
    }
    let (x2, y2, z2) = (x * x, y * y, z * z);
    out[4] = C2_XY * x * y;
    out[5] = C2_XY * y * z;
    out[6] = C2_Z2 * (3.0 * z2 - 1.0);
    out[7] = C2_XY * x * z;
    out[8] = C2_X2Y2 * (x2 - y2);
    if l_max == 2 {
        return;
    }
    out[9] = C3_0 * y * (3.0 * x2 - y2);
    out[10] = C3_1 * x * y * z;
    out[11] = C3_2 * y * (5.0 * z2 - 1.0);
    out[12] = C3_3 * z * (5.0 * z2 - 3.0);
    out[13] = C3_2 * x * (5.0 * z2 - 1.0);
    out[14] = C3_4 * z * (x2 - y2);
    out[15] = C3_0 * x * (x2 - 3.0 * y2);
    if l_max == 3 {
        return;
    }
    out[16] = C4_0 * x * y * (x2 - y2);
    out[17] = C4_1 * y * z * (3.0 * x2 - y2);
    out[18] = C4_2 * x * y * (7.0 * z2 - 1.0);
    out[19] = C4_3 * y * z * (7.0 * z2 - 3.0);
    out[20] = C4_4 * (35.0 * z2 * z2 - 30.0 * z2 + 3.0);
    out[21] = C4_3 * x * z * (7.0 * z2 - 3.0);
    out[22] = C4_5 * (x2 - y2) * (7.0 * z2 - 1.0);
    out[23] = C4_1 * x * z * (x2 - 3.0 * y2);
    out[24] = C4_6 * (x2 * x2 - 6.0 * x2 * y2 + y2 * y2);
}

/// Basis values together with the ambient (x,y,z) gradient of each
/// polynomial form. The radial component is meaningless on its own; callers
/// must project through the normalization Jacobian, which makes the result
/// independent of the off-sphere polynomial representation.
pub fn sh_basis_with_grad(
    direction: &Vector3<f64>,
    l_max: usize,
) -> Result<(Vec<f64>, Vec<Vector3<f64>>)> {
    check_degree(l_max)?;
    check_unit(direction)?;
    let len = basis_len(l_max);
    let mut values = vec![0.0; len];
    let mut grads = vec![Vector3::zeros(); len];
    eval_basis_with_grad(direction, l_max, &mut values, &mut grads);
    Ok((values, grads))
}

pub(crate) fn eval_basis_with_grad(
    direction: &Vector3<f64>,
    l_max: usize,
    values: &mut [f64],
    grads: &mut [Vector3<f64>],
) {
    eval_basis(direction, l_max, values);
    let (x, y, z) = (direction.x, direction.y, direction.z);
    grads[0] = Vector3::zeros();
    if l_max == 0 {
        return;
    }
    grads[1] = Vector3::new(0.0, C1, 0.0);
    grads[2] = Vector3::new(0.0, 0.0, C1);
    grads[3] = Vector3::new(C1, 0.0, 0.0);
    if l_max == 1 {
        return;
    }
    let (x2, y2, z2) = (x * x, y * y, z * z);
    grads[4] = Vector3::new(C2_XY * y, C2_XY * x, 0.0);
    grads[5] = Vector3::new(0.0, C2_XY * z, C2_XY * y);
    grads[6] = Vector3::new(0.0, 0.0, C2_Z2 * 6.0 * z);
    grads[7] = Vector3::new(C2_XY * z, 0.0, C2_XY * x);
    grads[8] = Vector3::new(C2_X2Y2 * 2.0 * x, -C2_X2Y2 * 2.0 * y, 0.0);
    if l_max == 2 {
        return;
    }
    grads[9] = Vector3::new(C3_0 * 6.0 * x * y, C3_0 * 3.0 * (x2 - y2), 0.0);
    grads[10] = Vector3::new(C3_1 * y * z, C3_1 * x * z, C3_1 * x * y);
    grads[11] = Vector3::new(0.0, C3_2 * (5.0 * z2 - 1.0), C3_2 * 10.0 * y * z);
    grads[12] = Vector3::new(0.0, 0.0, C3_3 * (15.0 * z2 - 3.0));
    grads[13] = Vector3::new(C3_2 * (5.0 * z2 - 1.0), 0.0, C3_2 * 10.0 * x * z);
    grads[14] = Vector3::new(C3_4 * 2.0 * x * z, -C3_4 * 2.0 * y * z, C3_4 * (x2 - y2));
    grads[15] = Vector3::new(C3_0 * 3.0 * (x2 - y2), -C3_0 * 6.0 * x * y, 0.0);
    if l_max == 3 {
        return;
    }
    grads[16] = Vector3::new(
        C4_0 * (3.0 * x2 * y - y2 * y),
        C4_0 * (x2 * x - 3.0 * x * y2),
        0.0,
    );
    grads[17] = Vector3::new(
        C4_1 * 6.0 * x * y * z,
        C4_1 * 3.0 * z * (x2 - y2),
        C4_1 * y * (3.0 * x2 - y2),
    );
    grads[18] = Vector3::new(
        C4_2 * y * (7.0 * z2 - 1.0),
        C4_2 * x * (7.0 * z2 - 1.0),
        C4_2 * 14.0 * x * y * z,
    );
    grads[19] = Vector3::new(
        0.0,
        C4_3 * z * (7.0 * z2 - 3.0),
        C4_3 * y * (21.0 * z2 - 3.0),
    );
    grads[20] = Vector3::new(0.0, 0.0, C4_4 * (140.0 * z2 * z - 60.0 * z));
    grads[21] = Vector3::new(
        C4_3 * z * (7.0 * z2 - 3.0),
        0.0,
        C4_3 * x * (21.0 * z2 - 3.0),
    );
    grads[22] = Vector3::new(
        C4_5 * 2.0 * x * (7.0 * z2 - 1.0),
        -C4_5 * 2.0 * y * (7.0 * z2 - 1.0),
        C4_5 * 14.0 * z * (x2 - y2),
    );
    grads[23] = Vector3::new(
        C4_1 * 3.0 * z * (x2 - y2),
        -C4_1 * 6.0 * x * y * z,
        C4_1 * x * (x2 - 3.0 * y2),
    );
    grads[24] = Vector3::new(
        C4_6 * (4.0 * x2 * x - 12.0 * x * y2),
        C4_6 * (4.0 * y2 * y - 12.0 * x2 * y),
        0.0,
    );
}

/// Gradient of the radiance loss w.r.t. one point's SH coefficients.
///
/// Returns `3 * basis_len(l_max)` values, channel-major: the slot for
/// channel `ch` and basis index `k` is `ch * basis_len + k`, matching the
/// per-point coefficient layout of the point cloud.
pub fn sh_color_gradient(
    direction: &Vector3<f64>,
    upstream: &Vector3<f64>,
    l_max: usize,
) -> Result<Vec<f64>> {
    let basis = sh_basis(direction, l_max)?;
    let len = basis.len();
    let mut grad = vec![0.0; 3 * len];
    for ch in 0..3 {
        let g = upstream[ch];
        for (k, &b) in basis.iter().enumerate() {
            grad[ch * len + k] = g * b;
        }
    }
    Ok(grad)
}
