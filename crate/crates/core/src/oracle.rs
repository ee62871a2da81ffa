//! Brute-force verifiers that share no projection code with `conic`.
//!
//! Everything here works with the unit-level form `(x − c)ᵀ A (x − c) = 1`,
//! i.e. `A = Σ_c⁻¹ / 9`, and a ray `x(t) = e + t·d`. Substituting gives the
//! quadratic `a t² + b t + c = 0` with `a = dᵀAd`, `b = 2δᵀAd`,
//! `c = δᵀAδ − 1`, `δ = e − center`. The ray touches the ellipsoid iff the
//! reduced discriminant `(b/2)² − ac` vanishes.

use nalgebra::{Matrix3, Matrix4, Vector2, Vector3, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::affine::Splat2D;
use crate::camera::Intrinsics;
use crate::error::{Error, Result};

const BISECTION_TOL: f64 = 1e-12;
const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayQuadratic {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl RayQuadratic {
    /// Real roots in ascending order, if any.
    pub fn roots(&self) -> Option<(f64, f64)> {
        let disc = tangency_residual(self);
        if disc < 0.0 || self.a == 0.0 {
            return None;
        }
        let half_b = 0.5 * self.b;
        // Avoid cancellation: compute the larger-magnitude root first.
        let q = -(half_b + half_b.signum() * disc.sqrt());
        let (r1, r2) = if q == 0.0 { (0.0, 0.0) } else { (q / self.a, self.c / q) };
        Some((r1.min(r2), r1.max(r2)))
    }
}

/// Unit-level precision matrix `Σ⁻¹ / 9`, by a general LU inverse.
pub fn unit_level_form(sigma_c: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let inv = sigma_c
        .try_inverse()
        .ok_or_else(|| Error::Oracle("covariance is singular".into()))?;
    Ok((inv + inv.transpose()) / 18.0)
}

pub fn ray_quadratic(a: &Matrix3<f64>, center: &Vector3<f64>, e: &Vector3<f64>, d: &Vector3<f64>) -> RayQuadratic {
    let delta = e - center;
    let ad = a * d;
    RayQuadratic {
        a: d.dot(&ad),
        b: 2.0 * delta.dot(&ad),
        c: delta.dot(&(a * delta)) - 1.0,
    }
}

/// `(b/2)² − ac`: positive for two intersections, zero on tangency,
/// negative on a miss.
pub fn tangency_residual(rq: &RayQuadratic) -> f64 {
    0.25 * rq.b * rq.b - rq.a * rq.c
}

/// Tangency residual for a ray from the origin, relative to
/// `(dᵀAd)(δᵀAδ)`.
pub fn relative_tangency_residual(a: &Matrix3<f64>, center: &Vector3<f64>, d: &Vector3<f64>) -> f64 {
    let rq = ray_quadratic(a, center, &Vector3::zeros(), d);
    let delta_norm = rq.c + 1.0;
    tangency_residual(&rq).abs() / (rq.a * delta_norm)
}

/// Worst relative tangency residual over `k` boundary points of a pixel
/// ellipse, each mapped back to a ray through the camera origin.
pub fn silhouette_tangency(splat: &Splat2D, k_points: usize, intrinsics: &Intrinsics, sigma_c: &Matrix3<f64>, p_c: &Vector3<f64>) -> Result<f64> {
    let a = unit_level_form(sigma_c)?;
    let worst = splat
        .silhouette()
        .boundary_points(k_points)
        .iter()
        .map(|x| {
            let v = intrinsics.from_pixel(x);
            relative_tangency_residual(&a, p_c, &Vector3::new(v.x, v.y, 1.0))
        })
        .fold(0.0, f64::max);
    Ok(worst)
}

/// Does the ray from `e` along `d` meet the ellipsoid at positive t?
fn hits_ahead(a: &Matrix3<f64>, center: &Vector3<f64>, e: &Vector3<f64>, d: &Vector3<f64>) -> bool {
    let rq = ray_quadratic(a, center, e, d);
    tangency_residual(&rq) >= 0.0 && rq.b < 0.0
}

/// Traces the silhouette by root counting. For each of `k` azimuths around
/// the pinhole projection of the center, the elevation ψ of the ray
/// `(v₀ + tan ψ·(cos φ, sin φ), 1)` is bisected between hitting and missing.
/// Points are returned on the plane one unit in front of `e` along z.
///
/// Fails if the central ray misses or a ray still hits as ψ → π/2, which
/// happens exactly when the footprint is not bounded (parabola/hyperbola).
pub fn silhouette_by_search(a: &Matrix3<f64>, center: &Vector3<f64>, e: &Vector3<f64>, k: usize) -> Result<Vec<Vector2<f64>>> {
    let rel = center - e;
    if !(rel.z > 0.0) {
        return Err(Error::Oracle("ellipsoid center is not in front of the eye".into()));
    }
    let v0 = Vector2::new(rel.x / rel.z, rel.y / rel.z);
    let dir = |v: Vector2<f64>| Vector3::new(v.x, v.y, 1.0);
    if !hits_ahead(a, center, e, &dir(v0)) {
        return Err(Error::Oracle("ray through the center misses the ellipsoid".into()));
    }
    let top = std::f64::consts::FRAC_PI_2 - 1e-9;
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let phi = std::f64::consts::TAU * i as f64 / k as f64;
        let u = Vector2::new(phi.cos(), phi.sin());
        let at = |psi: f64| v0 + u * psi.tan();
        if hits_ahead(a, center, e, &dir(at(top))) {
            return Err(Error::Oracle(format!("no silhouette crossing at azimuth {phi:.6} rad")));
        }
        let (mut lo, mut hi) = (0.0, top);
        for _ in 0..MAX_BISECTIONS {
            if hi - lo <= BISECTION_TOL {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if hits_ahead(a, center, e, &dir(at(mid))) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        out.push(at(0.5 * (lo + hi)));
    }
    Ok(out)
}

/// Ray-surface intersections found without the quadratic formula: a golden
/// section search for the closest approach, then bisection on each side.
pub fn ray_hits_by_bisection(a: &Matrix3<f64>, center: &Vector3<f64>, e: &Vector3<f64>, d: &Vector3<f64>) -> Option<(f64, f64)> {
    let f = |t: f64| {
        let x = e + d * t - center;
        x.dot(&(a * x)) - 1.0
    };
    let reach = ((e - center).norm() + 1.0 / a.symmetric_eigenvalues().min().sqrt()) / d.norm();
    let (mut lo, mut hi) = (-4.0 * reach, 4.0 * reach);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..400 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if f(m1) < f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let t_min = 0.5 * (lo + hi);
    if f(t_min) > 0.0 {
        return None;
    }
    let bisect = |mut inside: f64, mut outside: f64| {
        for _ in 0..MAX_BISECTIONS {
            let mid = 0.5 * (inside + outside);
            if mid == inside || mid == outside {
                break;
            }
            if f(mid) <= 0.0 {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        0.5 * (inside + outside)
    };
    Some((bisect(t_min, -4.0 * reach), bisect(t_min, 4.0 * reach)))
}

/// Lowest z among `n` points `p + 3 L u` with u uniform on the unit sphere
/// and `L Lᵀ = Σ`.
pub fn min_depth_by_sampling<R: Rng + ?Sized>(sigma_c: &Matrix3<f64>, p_c: &Vector3<f64>, n: usize, rng: &mut R) -> Result<f64> {
    let l = sigma_c
        .cholesky()
        .ok_or_else(|| Error::Oracle("covariance is not positive definite".into()))?
        .l();
    let mut best = f64::INFINITY;
    for _ in 0..n {
        let u = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let norm = u.norm();
        if norm == 0.0 {
            continue;
        }
        let x = p_c + l * (u * (3.0 / norm));
        best = best.min(x.z);
    }
    Ok(best)
}

/// Lowest surface point by Newton iteration on the stationarity system
/// `∇E(x) = λ·(0, 0, 1)`, `E(x) = 9`, with `E(x) = (x − p)ᵀ Σ⁻¹ (x − p)`.
pub fn min_depth_by_newton(sigma_c: &Matrix3<f64>, p_c: &Vector3<f64>) -> Result<f64> {
    let a = sigma_c
        .try_inverse()
        .ok_or_else(|| Error::Oracle("covariance is singular".into()))?;
    let n = Vector3::z();
    // Start on the surface straight below the center.
    let mut x = p_c - n * (3.0 / a[(2, 2)].sqrt());
    let mut lambda = 2.0 * (a * (x - p_c)).z;
    for _ in 0..100 {
        let r = x - p_c;
        let grad = a * r * 2.0;
        let f = Vector4::new(grad.x - lambda * n.x, grad.y - lambda * n.y, grad.z - lambda * n.z, r.dot(&(a * r)) - 9.0);
        if f.amax() < 1e-14 * (1.0 + lambda.abs()) {
            break;
        }
        let mut jac = Matrix4::zeros();
        for i in 0..3 {
            for j in 0..3 {
                jac[(i, j)] = 2.0 * a[(i, j)];
            }
            jac[(i, 3)] = -n[i];
            jac[(3, i)] = grad[i];
        }
        let step = jac
            .lu()
            .solve(&f)
            .ok_or_else(|| Error::Oracle("singular Newton system".into()))?;
        x -= step.fixed_rows::<3>(0);
        lambda -= step[3];
    }
    if lambda >= 0.0 {
        return Err(Error::Oracle("Newton converged to the highest point".into()));
    }
    Ok(x.z)
}

/// Central differences with per-coordinate step `step·max(|xᵢ|, 1)`.
pub fn fd_gradient(mut f: impl FnMut(&[f64]) -> f64, x0: &[f64], step: f64) -> Result<Vec<f64>> {
    let mut x = x0.to_vec();
    let mut out = Vec::with_capacity(x0.len());
    for i in 0..x0.len() {
        let h = step * x0[i].abs().max(1.0);
        x[i] = x0[i] + h;
        let hi = f(&x);
        x[i] = x0[i] - h;
        let lo = f(&x);
        x[i] = x0[i];
        if !(hi.is_finite() && lo.is_finite()) {
            return Err(Error::Oracle(format!("non-finite function value around coordinate {i}")));
        }
        out.push((hi - lo) / (2.0 * h));
    }
    Ok(out)
}
