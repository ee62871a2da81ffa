//! Reverse-mode derivatives of each forward stage.
//!
//! Matrix gradients use the full-matrix convention: for a symmetric input
//! X the returned G satisfies dL = ⟨G, dX⟩ over all entries, and G is
//! symmetric.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3, Vector4};

use crate::affine;
use crate::camera::{symmetrize, Camera};
use crate::conic::spd_inverse;
use crate::error::{Error, Result};
use crate::gaussian::{normalize_quaternion, rotation_matrix};
use crate::sh;

fn sym2(g: &Matrix2<f64>) -> Matrix2<f64> {
    (g + g.transpose()) * 0.5
}

fn sym3(g: &Matrix3<f64>) -> Matrix3<f64> {
    (g + g.transpose()) * 0.5
}

fn inner3(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    a.component_mul(b).sum()
}

/// Partial derivatives of the rotation matrix with respect to (w, x, y, z).
pub fn rotation_partials(q: &Vector4<f64>) -> [Matrix3<f64>; 4] {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    let t = |m: [f64; 9]| Matrix3::from_row_slice(&m) * 2.0;
    [
        t([0.0, -z, y, z, 0.0, -x, -y, x, 0.0]),
        t([0.0, y, z, y, -2.0 * x, -w, z, w, -2.0 * x]),
        t([-2.0 * y, x, w, x, 0.0, z, -w, z, -2.0 * y]),
        t([-2.0 * z, -w, x, w, -2.0 * z, y, x, y, 0.0]),
    ]
}

/// Through Σ = R(q/|q|)·diag(exp(2s))·Rᵀ. Returns gradients for the raw
/// quaternion and the log-scales.
pub fn covariance_backward(rotation: &Vector4<f64>, log_scales: &Vector3<f64>, g_sigma: &Matrix3<f64>) -> Result<(Vector4<f64>, Vector3<f64>)> {
    let qn = normalize_quaternion(rotation)?;
    let r = rotation_matrix(&qn);
    let d = log_scales.map(|s| (2.0 * s).exp());
    let gs = sym3(g_sigma);
    let g_r = gs * r * Matrix3::from_diagonal(&d) * 2.0;
    let inner = r.transpose() * gs * r;
    let g_s = Vector3::new(2.0 * d.x * inner[(0, 0)], 2.0 * d.y * inner[(1, 1)], 2.0 * d.z * inner[(2, 2)]);
    let partials = rotation_partials(&qn);
    let g_qn = Vector4::from_fn(|k, _| inner3(&g_r, &partials[k]));
    let norm = rotation.norm();
    let g_q = (g_qn - qn * qn.dot(&g_qn)) / norm;
    Ok((g_q, g_s))
}

/// Through Σ_c = R_w Σ R_wᵀ and p_c = R_w p + t.
pub fn view_backward(cam: &Camera, g_sigma_c: &Matrix3<f64>, g_p_c: &Vector3<f64>) -> (Matrix3<f64>, Vector3<f64>) {
    let r = &cam.rotation;
    (r.transpose() * sym3(g_sigma_c) * r, r.transpose() * g_p_c)
}

/// Through K = (C + sI)⁻¹, given the gradient for K.
pub fn dilation_backward(k: &Matrix2<f64>, g_k: &Matrix2<f64>) -> Matrix2<f64> {
    -(k * sym2(g_k) * k)
}

/// Through the affine projection: C = J Σ_c Jᵀ, center = pinhole(p_c).
pub fn affine_backward(
    sigma_c: &Matrix3<f64>,
    p_c: &Vector3<f64>,
    cam: &Camera,
    g_cov: &Matrix2<f64>,
    g_center: &Vector2<f64>,
) -> Result<(Matrix3<f64>, Vector3<f64>)> {
    let j = affine::affine_jacobian(p_c, cam)?;
    let g2 = sym2(g_cov);
    let g_sigma_c = j.transpose() * g2 * j;
    let g_j = g2 * j * sigma_c * 2.0;
    let (fx, fy) = (cam.fx, cam.fy);
    let (x, y, z) = (p_c.x, p_c.y, p_c.z);
    let (iz, iz2, iz3) = (1.0 / z, 1.0 / (z * z), 1.0 / (z * z * z));
    let mut g_p = Vector3::new(
        g_j[(0, 2)] * (-fx * iz2),
        g_j[(1, 2)] * (-fy * iz2),
        g_j[(0, 0)] * (-fx * iz2) + g_j[(0, 2)] * (2.0 * fx * x * iz3) + g_j[(1, 1)] * (-fy * iz2) + g_j[(1, 2)] * (2.0 * fy * y * iz3),
    );
    g_p.x += fx * iz * g_center.x;
    g_p.y += fy * iz * g_center.y;
    g_p.z += -fx * x * iz2 * g_center.x - fy * y * iz2 * g_center.y;
    Ok((g_sigma_c, g_p))
}

/// Through the cone projection, recomputing the forward intermediates.
/// `g_cov` is the gradient for the undilated covariance C = P⁻¹.
pub fn conic_backward(
    sigma_c: &Matrix3<f64>,
    p_c: &Vector3<f64>,
    cam: &Camera,
    g_cov: &Matrix2<f64>,
    g_center: &Vector2<f64>,
) -> Result<(Matrix3<f64>, Vector3<f64>)> {
    let a = spd_inverse(sigma_c).ok_or(Error::IllConditioned { condition: f64::INFINITY })?;
    let p = *p_c;
    let m = a * p;
    let beta = p.dot(&m) - 9.0;
    let mut q = m * m.transpose() - a * beta;
    symmetrize(&mut q);
    let q2 = Matrix2::new(q[(0, 0)], q[(0, 1)], q[(1, 0)], q[(1, 1)]);
    let lin = Vector2::new(q[(0, 2)], q[(1, 2)]);
    let q2_inv = q2.try_inverse().ok_or(Error::DegenerateSplat)?;
    let v0 = -(q2_inv * lin);
    let c0 = q[(2, 2)] + lin.dot(&v0);
    let mm = q2 * (-9.0 / c0);
    let (fx, fy) = (cam.fx, cam.fy);
    let f_inv = Matrix2::new(1.0 / fx, 0.0, 0.0, 1.0 / fy);
    let pm = f_inv * mm * f_inv;
    let cov = pm.try_inverse().ok_or(Error::DegenerateSplat)?;

    let g_p_img = -(cov * sym2(g_cov) * cov);
    let g_m = f_inv * sym2(&g_p_img) * f_inv;
    let g_v0 = Vector2::new(fx * g_center.x, fy * g_center.y);

    let mut g_q2 = g_m * (-9.0 / c0);
    let g_c0 = 9.0 / (c0 * c0) * g_m.component_mul(&q2).sum();
    let u = -v0;
    let g_q33 = g_c0;
    let mut g_lin = v0 * (2.0 * g_c0);
    g_q2 += u * u.transpose() * g_c0;
    let w = q2_inv.transpose() * g_v0;
    g_lin -= w;
    g_q2 += w * u.transpose();

    let mut g_q = Matrix3::zeros();
    for i in 0..2 {
        for j in 0..2 {
            g_q[(i, j)] = g_q2[(i, j)];
        }
    }
    g_q[(0, 2)] = g_lin.x;
    g_q[(1, 2)] = g_lin.y;
    g_q[(2, 2)] = g_q33;
    let gs = sym3(&g_q);

    let g_mvec = gs * m * 2.0;
    let g_beta = -inner3(&gs, &a);
    let g_a = -gs * beta + g_mvec * p.transpose() + p * p.transpose() * g_beta;
    let g_p = a * g_mvec + m * (2.0 * g_beta);
    let g_sigma_c = -(a * sym3(&g_a) * a);
    Ok((g_sigma_c, g_p))
}

/// Through color = max(SH(dir)·coeffs + 0.5, 0) with dir = (p − eye)/|p − eye|.
/// Returns coefficient gradients (same length as `coeffs`) and the position
/// gradient from the view direction.
pub fn sh_backward(
    coeffs: &[Vector3<f64>],
    dir: &Vector3<f64>,
    dist: f64,
    degree: usize,
    clamped: &[bool; 3],
    g_color: &Vector3<f64>,
) -> (Vec<Vector3<f64>>, Vector3<f64>) {
    let g_raw = Vector3::from_fn(|c, _| if clamped[c] { 0.0 } else { g_color[c] });
    let n = sh::coeff_count(degree).min(coeffs.len());
    let basis = sh::sh_basis(dir, degree);
    let mut g_coeffs = vec![Vector3::zeros(); coeffs.len()];
    for k in 0..n {
        g_coeffs[k] = g_raw * basis[k];
    }
    if degree == 0 || dist == 0.0 {
        return (g_coeffs, Vector3::zeros());
    }
    let grads = sh::sh_basis_gradient(dir, degree);
    let mut g_dir = Vector3::zeros();
    for k in 1..n {
        g_dir += grads[k] * coeffs[k].dot(&g_raw);
    }
    let g_v = (g_dir - dir * dir.dot(&g_dir)) / dist;
    (g_coeffs, g_v)
}
