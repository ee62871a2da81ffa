//! Baseline projection through the Jacobian of the perspective map at the
//! Gaussian center (EWA / 3DGS convention).
//!
//! For the map (x, y, z) ↦ (fx·x/z, fy·y/z):
//!
//! ```text
//! J = | fx/z   0     -fx·x/z² |
//!     | 0      fy/z  -fy·y/z² |
//! ```
//!
//! Σ²ᴰ = J Σ_c Jᵀ is already the 2×2 block that remains after dropping the
//! third row and column of the homogeneous 3×3 form.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};

use crate::camera::Camera;
use crate::ellipse::Ellipse;
use crate::error::{Error, Result};

/// A projected Gaussian footprint in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Splat2D {
    pub center: Vector2<f64>,
    /// Inverse of the unit-variance 2D covariance. The 3σ silhouette is
    /// the level set `(x − center)ᵀ inv_cov (x − center) = 9`.
    pub inv_cov: Matrix2<f64>,
    /// Camera-space z of the Gaussian center, used as the sort key.
    pub depth: f64,
    pub source_index: usize,
}

impl Splat2D {
    /// 2D covariance, `inv_cov⁻¹`.
    pub fn covariance(&self) -> Option<Matrix2<f64>> {
        self.inv_cov.try_inverse()
    }

    /// The 3σ silhouette.
    pub fn silhouette(&self) -> Ellipse {
        Ellipse::from_form(self.center, &self.inv_cov, 9.0)
    }

    pub fn is_valid(&self) -> bool {
        let m = &self.inv_cov;
        m.iter().all(|v| v.is_finite())
            && self.center.iter().all(|v| v.is_finite())
            && m[(0, 1)] == m[(1, 0)]
            && m[(0, 0)] > 0.0
            && m.determinant() > 0.0
            && self.depth > 0.0
    }
}

pub fn affine_jacobian(p_c: &Vector3<f64>, cam: &Camera) -> Result<Matrix2x3<f64>> {
    let (x, y, z) = (p_c.x, p_c.y, p_c.z);
    if !(z > 0.0) {
        return Err(Error::BehindCamera { z });
    }
    let iz = 1.0 / z;
    let iz2 = iz * iz;
    Ok(Matrix2x3::new(
        cam.fx * iz,
        0.0,
        -cam.fx * x * iz2,
        0.0,
        cam.fy * iz,
        -cam.fy * y * iz2,
    ))
}

/// Pinhole projection of a camera-space point to pixels.
pub fn project_point(p_c: &Vector3<f64>, cam: &Camera) -> Result<Vector2<f64>> {
    if !(p_c.z > 0.0) {
        return Err(Error::BehindCamera { z: p_c.z });
    }
    let k = cam.intrinsics();
    Ok(k.to_pixel(&Vector2::new(p_c.x / p_c.z, p_c.y / p_c.z)))
}

/// 2D covariance J Σ_c Jᵀ, symmetrized.
pub fn projected_covariance(sigma_c: &Matrix3<f64>, p_c: &Vector3<f64>, cam: &Camera) -> Result<Matrix2<f64>> {
    let j = affine_jacobian(p_c, cam)?;
    let mut s = j * sigma_c * j.transpose();
    let off = 0.5 * (s[(0, 1)] + s[(1, 0)]);
    s[(0, 1)] = off;
    s[(1, 0)] = off;
    Ok(s)
}

/// Inverse of a symmetric 2×2 matrix, refusing anything that is not
/// numerically positive definite.
pub(crate) fn spd2_inverse(s: &Matrix2<f64>) -> Option<Matrix2<f64>> {
    let (a, b, c) = (s[(0, 0)], s[(0, 1)], s[(1, 1)]);
    let det = a * c - b * b;
    let scale = (a.abs() + c.abs()).powi(2);
    if !(a > 0.0 && det > 1e-14 * scale) || !det.is_finite() {
        return None;
    }
    let inv_det = 1.0 / det;
    Some(Matrix2::new(c * inv_det, -b * inv_det, -b * inv_det, a * inv_det))
}

pub fn project_affine(sigma_c: &Matrix3<f64>, p_c: &Vector3<f64>, cam: &Camera) -> Result<Splat2D> {
    let cov = projected_covariance(sigma_c, p_c, cam)?;
    let inv_cov = spd2_inverse(&cov).ok_or(Error::DegenerateSplat)?;
    Ok(Splat2D {
        center: project_point(p_c, cam)?,
        inv_cov,
        depth: p_c.z,
        source_index: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam(f: f64) -> Camera {
        Camera::identity(200, 200, f, f).unwrap()
    }

    #[test]
    fn on_axis_jacobian() {
        let j = affine_jacobian(&Vector3::new(0.0, 0.0, 5.0), &cam(100.0)).unwrap();
        assert_eq!(j, Matrix2x3::new(20.0, 0.0, 0.0, 0.0, 20.0, 0.0));
    }

    #[test]
    fn substituted_jacobian() {
        let j = affine_jacobian(&Vector3::new(1.0, 0.0, 2.0), &cam(1.0)).unwrap();
        assert_eq!(j, Matrix2x3::new(0.5, 0.0, -0.25, 0.0, 0.5, 0.0));
    }

    #[test]
    fn behind_camera_is_an_error() {
        assert!(matches!(
            affine_jacobian(&Vector3::new(0.0, 0.0, 0.0), &cam(1.0)),
            Err(Error::BehindCamera { .. })
        ));
        assert!(project_affine(&Matrix3::identity(), &Vector3::new(0.0, 0.0, -1.0), &cam(1.0)).is_err());
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let c = Camera::identity(320, 240, 300.0, 250.0).unwrap();
        let map = |p: &Vector3<f64>| Vector2::new(c.fx * p.x / p.z, c.fy * p.y / p.z);
        for p in [Vector3::new(0.3, -1.2, 4.0), Vector3::new(-2.0, 0.7, 9.5), Vector3::new(1.5, 1.5, 2.2)] {
            let j = affine_jacobian(&p, &c).unwrap();
            for k in 0..3 {
                let h = 1e-6 * p[k].abs().max(1.0);
                let (mut lo, mut hi) = (p, p);
                lo[k] -= h;
                hi[k] += h;
                let fd = (map(&hi) - map(&lo)) / (2.0 * h);
                for r in 0..2 {
                    let scale = j[(r, k)].abs().max(1.0);
                    assert!((fd[r] - j[(r, k)]).abs() <= 1e-6 * scale, "J[{r},{k}]");
                }
            }
        }
    }

    #[test]
    fn isotropic_sphere_gives_thirty_pixel_radius() {
        let s = project_affine(&(Matrix3::identity() * 0.25), &Vector3::new(0.0, 0.0, 5.0), &cam(100.0)).unwrap();
        let cov = s.covariance().unwrap();
        assert!((cov - Matrix2::identity() * 100.0).abs().max() < 1e-12);
        assert_eq!(s.center, Vector2::new(100.0, 100.0));
        let e = s.silhouette();
        assert!((e.semi_axes[0] - 30.0).abs() < 1e-12);
        assert_eq!(s.depth, 5.0);
    }

    #[test]
    fn shrinking_gaussian_keeps_center() {
        let p = Vector3::new(0.4, -0.1, 5.0);
        let mut last = f64::INFINITY;
        for k in 0..8 {
            let sigma2 = 0.25 * 0.01f64.powi(k);
            let s = project_affine(&(Matrix3::identity() * sigma2), &p, &cam(100.0)).unwrap();
            assert_eq!(s.center, project_point(&p, &cam(100.0)).unwrap());
            let r = s.silhouette().semi_axes[0];
            assert!(r < last);
            last = r;
        }
        assert!(last < 1e-4);
    }

    #[test]
    fn anisotropic_axes_ratio() {
        let sigma = Matrix3::from_diagonal(&Vector3::new(1.0, 0.01, 0.01));
        let p = Vector3::new(0.0, 0.0, 10.0);
        let s = project_affine(&sigma, &p, &cam(100.0)).unwrap();
        // Dense oracle: J Σ Jᵀ by explicit sums.
        let j = affine_jacobian(&p, &cam(100.0)).unwrap();
        let mut cov = Matrix2::zeros();
        for r in 0..2 {
            for c in 0..2 {
                for k in 0..3 {
                    for l in 0..3 {
                        cov[(r, c)] += j[(r, k)] * sigma[(k, l)] * j[(c, l)];
                    }
                }
            }
        }
        assert!((s.covariance().unwrap() - cov).abs().max() < 1e-10);
        let e = s.silhouette();
        assert!((e.semi_axes[0] / e.semi_axes[1] - 10.0).abs() < 1e-10);
        assert!((e.major_dir.x.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scaling_covariance_scales_footprint() {
        let sigma = Matrix3::new(0.3, 0.05, -0.02, 0.05, 0.2, 0.01, -0.02, 0.01, 0.4);
        let p = Vector3::new(0.7, -0.4, 6.0);
        let a = projected_covariance(&sigma, &p, &cam(120.0)).unwrap();
        let b = projected_covariance(&(sigma * 9.0), &p, &cam(120.0)).unwrap();
        assert!((b - a * 9.0).abs().max() < 1e-12);
    }
}
