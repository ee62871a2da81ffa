//! Real spherical harmonics up to degree 3, in the sign and ordering
//! convention used by 3DGS point clouds.

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub const SH_C0: f64 = 0.28209479177387814;
pub const SH_C1: f64 = 0.4886025119029199;
pub const SH_C2: [f64; 5] = [
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
];
pub const SH_C3: [f64; 7] = [
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
];

pub const MAX_DEGREE: usize = 3;
pub const MAX_COEFFS: usize = 16;

pub const fn coeff_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

pub fn degree_for_coeff_count(n: usize) -> Option<usize> {
    match n {
        1 => Some(0),
        4 => Some(1),
        9 => Some(2),
        16 => Some(3),
        _ => None,
    }
}

/// DC coefficient that renders as `rgb` at degree 0.
pub fn rgb_to_dc(rgb: &Vector3<f64>) -> Vector3<f64> {
    rgb.map(|c| (c - 0.5) / SH_C0)
}

/// Basis values at a unit direction; entries past `coeff_count(degree)`
/// are zero.
pub fn sh_basis(dir: &Vector3<f64>, degree: usize) -> [f64; MAX_COEFFS] {
    let mut b = [0.0; MAX_COEFFS];
    b[0] = SH_C0;
    if degree == 0 {
        return b;
    }
    let (x, y, z) = (dir.x, dir.y, dir.z);
    b[1] = -SH_C1 * y;
    b[2] = SH_C1 * z;
    b[3] = -SH_C1 * x;
    if degree == 1 {
        return b;
    }
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, yz, xz) = (x * y, y * z, x * z);
    b[4] = SH_C2[0] * xy;
    b[5] = SH_C2[1] * yz;
    b[6] = SH_C2[2] * (2.0 * zz - xx - yy);
    b[7] = SH_C2[3] * xz;
    b[8] = SH_C2[4] * (xx - yy);
    if degree == 2 {
        return b;
    }
    b[9] = SH_C3[0] * y * (3.0 * xx - yy);
    b[10] = SH_C3[1] * xy * z;
    b[11] = SH_C3[2] * y * (4.0 * zz - xx - yy);
    b[12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    b[13] = SH_C3[4] * x * (4.0 * zz - xx - yy);
    b[14] = SH_C3[5] * z * (xx - yy);
    b[15] = SH_C3[6] * x * (xx - 3.0 * yy);
    b
}

/// Gradient of each basis polynomial with respect to the direction
/// components (the polynomials are differentiated as written, without the
/// unit-norm constraint).
pub fn sh_basis_gradient(dir: &Vector3<f64>, degree: usize) -> [Vector3<f64>; MAX_COEFFS] {
    let mut g = [Vector3::zeros(); MAX_COEFFS];
    if degree == 0 {
        return g;
    }
    let (x, y, z) = (dir.x, dir.y, dir.z);
    g[1] = Vector3::new(0.0, -SH_C1, 0.0);
    g[2] = Vector3::new(0.0, 0.0, SH_C1);
    g[3] = Vector3::new(-SH_C1, 0.0, 0.0);
    if degree == 1 {
        return g;
    }
    let (xx, yy, zz) = (x * x, y * y, z * z);
    g[4] = SH_C2[0] * Vector3::new(y, x, 0.0);
    g[5] = SH_C2[1] * Vector3::new(0.0, z, y);
    g[6] = SH_C2[2] * Vector3::new(-2.0 * x, -2.0 * y, 4.0 * z);
    g[7] = SH_C2[3] * Vector3::new(z, 0.0, x);
    g[8] = SH_C2[4] * Vector3::new(2.0 * x, -2.0 * y, 0.0);
    if degree == 2 {
        return g;
    }
    g[9] = SH_C3[0] * Vector3::new(6.0 * x * y, 3.0 * xx - 3.0 * yy, 0.0);
    g[10] = SH_C3[1] * Vector3::new(y * z, x * z, x * y);
    g[11] = SH_C3[2] * Vector3::new(-2.0 * x * y, 4.0 * zz - xx - 3.0 * yy, 8.0 * y * z);
    g[12] = SH_C3[3] * Vector3::new(-6.0 * x * z, -6.0 * y * z, 6.0 * zz - 3.0 * xx - 3.0 * yy);
    g[13] = SH_C3[4] * Vector3::new(4.0 * zz - 3.0 * xx - yy, -2.0 * x * y, 8.0 * x * z);
    g[14] = SH_C3[5] * Vector3::new(2.0 * x * z, -2.0 * y * z, xx - yy);
    g[15] = SH_C3[6] * Vector3::new(3.0 * xx - 3.0 * yy, -6.0 * x * y, 0.0);
    g
}

fn check_degree(coeffs: &[Vector3<f64>], degree: usize) -> Result<()> {
    if degree > MAX_DEGREE || coeffs.len() < coeff_count(degree) {
        return Err(Error::InvalidParameter(format!(
            "SH degree {degree} needs {} coefficients, have {}",
            coeff_count(degree),
            coeffs.len()
        )));
    }
    Ok(())
}

/// SH contraction plus the 0.5 offset, before clamping.
pub fn eval_sh_unclamped(coeffs: &[Vector3<f64>], dir: &Vector3<f64>, degree: usize) -> Result<Vector3<f64>> {
    check_degree(coeffs, degree)?;
    let basis = sh_basis(dir, degree);
    let mut c = Vector3::repeat(0.5);
    for (b, k) in basis.iter().zip(coeffs).take(coeff_count(degree)) {
        c += *b * k;
    }
    Ok(c)
}

/// View-dependent color, clamped at zero.
pub fn eval_sh(coeffs: &[Vector3<f64>], dir: &Vector3<f64>, degree: usize) -> Result<Vector3<f64>> {
    Ok(eval_sh_unclamped(coeffs, dir, degree)?.map(|c| c.max(0.0)))
}
