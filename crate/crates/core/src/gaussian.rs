//! Scene primitive and covariance assembly.
//!
//! Parameters are stored unconstrained: the quaternion is normalized on use,
//! scales live in the log domain and opacity is a logit. This is the layout
//! 3DGS point clouds are written in, and it lets an optimizer step every
//! field freely.

use nalgebra::{Matrix3, Vector3, Vector4};

use crate::error::{Error, Result};

/// One 3D Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian3D {
    pub position: Vector3<f64>,
    /// Quaternion in (w, x, y, z) order, not necessarily unit length.
    pub rotation: Vector4<f64>,
    pub log_scales: Vector3<f64>,
    pub opacity_logit: f64,
    /// SH coefficients, one RGB triple per basis function (1, 4, 9 or 16).
    pub sh_coeffs: Vec<Vector3<f64>>,
}

impl Gaussian3D {
    /// Identity rotation, unit scales, opacity 0.5, black DC color.
    pub fn new(position: Vector3<f64>) -> Self {
        Self {
            position,
            rotation: Vector4::new(1.0, 0.0, 0.0, 0.0),
            log_scales: Vector3::zeros(),
            opacity_logit: 0.0,
            sh_coeffs: vec![Vector3::zeros()],
        }
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn scales(&self) -> Vector3<f64> {
        self.log_scales.map(f64::exp)
    }

    /// Highest SH degree the stored coefficients support.
    pub fn sh_degree(&self) -> Option<usize> {
        crate::sh::degree_for_coeff_count(self.sh_coeffs.len())
    }

    pub fn rotation_matrix(&self) -> Result<Matrix3<f64>> {
        Ok(rotation_matrix(&normalize_quaternion(&self.rotation)?))
    }

    pub fn covariance(&self) -> Result<Matrix3<f64>> {
        build_covariance(&self.rotation, &self.log_scales)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn normalize_quaternion(q: &Vector4<f64>) -> Result<Vector4<f64>> {
    if !q.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "non-finite quaternion {:?}",
            q.as_slice()
        )));
    }
    let norm = q.norm();
    if norm == 0.0 {
        return Err(Error::InvalidParameter("zero quaternion".into()));
    }
    Ok(q / norm)
}

/// Rotation matrix of a unit quaternion (w, x, y, z).
pub fn rotation_matrix(q: &Vector4<f64>) -> Matrix3<f64> {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Hamilton product `a * b`, both in (w, x, y, z) order.
pub fn quaternion_mul(a: &Vector4<f64>, b: &Vector4<f64>) -> Vector4<f64> {
    Vector4::new(
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    )
}

/// Σ = R S Sᵀ Rᵀ with S = diag(exp(log_scales)).
///
/// The quaternion is normalized first. The result is exactly symmetric
/// since it is formed as M Mᵀ with M = R S.
pub fn build_covariance(rotation: &Vector4<f64>, log_scales: &Vector3<f64>) -> Result<Matrix3<f64>> {
    if !log_scales.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "non-finite log-scales {:?}",
            log_scales.as_slice()
        )));
    }
    let r = rotation_matrix(&normalize_quaternion(rotation)?);
    let scales = log_scales.map(f64::exp);
    if !scales.iter().all(|s| s.is_finite() && *s > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "scales {:?} overflow or underflow",
            scales.as_slice()
        )));
    }
    let m = r * Matrix3::from_diagonal(&scales);
    Ok(m * m.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
        (a - b).abs().max()
    }

    #[test]
    fn identity_covariance() {
        let s = build_covariance(&Vector4::new(1.0, 0.0, 0.0, 0.0), &Vector3::zeros()).unwrap();
        assert_eq!(s, Matrix3::identity());
    }

    #[test]
    fn axis_aligned_scaling() {
        let s = build_covariance(
            &Vector4::new(1.0, 0.0, 0.0, 0.0),
            &Vector3::new(2f64.ln(), 0.0, 0.0),
        )
        .unwrap();
        assert!(max_abs(&s, &Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 1.0))) < 1e-15);
    }

    #[test]
    fn unnormalized_quaternion_is_normalized() {
        let a = build_covariance(&Vector4::new(2.0, 0.4, -0.2, 1.0), &Vector3::new(0.1, -0.3, 0.5)).unwrap();
        let b = build_covariance(&Vector4::new(1.0, 0.2, -0.1, 0.5), &Vector3::new(0.1, -0.3, 0.5)).unwrap();
        assert!(max_abs(&a, &b) < 1e-14);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(build_covariance(&Vector4::zeros(), &Vector3::zeros()).is_err());
        assert!(build_covariance(&Vector4::new(1.0, 0.0, 0.0, 0.0), &Vector3::new(f64::NAN, 0.0, 0.0)).is_err());
        assert!(build_covariance(&Vector4::new(f64::INFINITY, 0.0, 0.0, 0.0), &Vector3::zeros()).is_err());
    }

    #[test]
    fn rotation_is_orthonormal() {
        let q = normalize_quaternion(&Vector4::new(0.3, -0.7, 0.2, 0.9)).unwrap();
        let r = rotation_matrix(&q);
        assert!(max_abs(&(r.transpose() * r), &Matrix3::identity()) < 1e-15);
        assert!((r.determinant() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn quaternion_product_composes_rotations() {
        let a = normalize_quaternion(&Vector4::new(0.3, -0.7, 0.2, 0.9)).unwrap();
        let b = normalize_quaternion(&Vector4::new(-0.5, 0.1, 0.8, 0.2)).unwrap();
        let ab = rotation_matrix(&quaternion_mul(&a, &b));
        let expected = rotation_matrix(&a) * rotation_matrix(&b);
        assert!(max_abs(&ab, &expected) < 1e-14);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(800.0) <= 1.0);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!((logit(sigmoid(1.3)) - 1.3).abs() < 1e-12);
    }
}
