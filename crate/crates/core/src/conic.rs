//! Exact perspective projection of the 3σ Gaussian ellipsoid.
//!
//! In camera space the ellipsoid is `(x − p)ᵀ A (x − p) = 9` with
//! `A = Σ_c⁻¹`. Rays from the origin tangent to it sweep the cone
//!
//! ```text
//! xᵀ Q x = 0,   Q = A p pᵀ A − (pᵀ A p − 9) A
//! ```
//!
//! Setting z = 1 and partitioning `Q = [[Q₂, q], [qᵀ, q₃₃]]` leaves the
//! plane conic `vᵀ Q₂ v + 2 qᵀ v + q₃₃ = 0`. When Q₂ is definite we complete
//! the square:
//!
//! ```text
//! v₀ = −Q₂⁻¹ q,   c₀ = q₃₃ − qᵀ Q₂⁻¹ q = q₃₃ + qᵀ v₀
//! (v − v₀)ᵀ Q₂ (v − v₀) + c₀ = 0
//! ```
//!
//! so `M = −9 Q₂ / c₀` gives `(v − v₀)ᵀ M (v − v₀) = 9` on the silhouette.
//! Q is homogeneous and only defined up to sign; the ratio `Q₂ / c₀` is
//! invariant under that sign, so M comes out SPD for every real ellipse
//! without a separate sign flip. Finally the pixel map `x = F v + c`,
//! `F = diag(fx, fy)`, turns M into `Σ_img⁻¹ = F⁻¹ M F⁻¹`.
//!
//! The ellipse center v₀ is generally not the projection of p; the two
//! only coincide by symmetry (e.g. on-axis isotropic Gaussians).

use nalgebra::{Cholesky, Matrix2, Matrix3, SymmetricEigen, Vector2, Vector3};

use crate::affine::Splat2D;
use crate::camera::{symmetrize, Camera, Intrinsics};
use crate::error::{Error, Result};

/// Largest accepted condition number of Σ_c.
pub const MAX_CONDITION: f64 = 1e12;

/// `|det Q₂| ≤ PARABOLA_TOL · ‖Q₂‖²_F` classifies as a parabola.
pub const PARABOLA_TOL: f64 = 1e-12;

/// Precision matrix of the camera-space ellipsoid, `A = Σ_c⁻¹`, at the
/// level where the silhouette is `(x − center)ᵀ A (x − center) = 9`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipsoidForm {
    pub a: Matrix3<f64>,
    pub center: Vector3<f64>,
}

impl EllipsoidForm {
    /// Value of `(x − center)ᵀ A (x − center)`.
    pub fn eval(&self, x: &Vector3<f64>) -> f64 {
        let d = x - self.center;
        d.dot(&(self.a * d))
    }

    /// Value of the form at the camera origin.
    pub fn origin_value(&self) -> f64 {
        self.eval(&Vector3::zeros())
    }
}

/// Inverse of an SPD matrix via Cholesky, symmetrized.
pub fn spd_inverse(m: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    let mut inv = Cholesky::new(*m)?.inverse();
    symmetrize(&mut inv);
    Some(inv)
}

pub fn condition_number(sigma: &Matrix3<f64>) -> f64 {
    let eig = SymmetricEigen::new(*sigma).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

pub fn ellipsoid_form(sigma_c: &Matrix3<f64>, p_c: &Vector3<f64>) -> Result<EllipsoidForm> {
    let condition = condition_number(sigma_c);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditioned { condition });
    }
    let a = spd_inverse(sigma_c).ok_or(Error::IllConditioned { condition })?;
    Ok(EllipsoidForm { a, center: *p_c })
}

/// Symmetric 3×3 form of the tangent cone with apex at the camera origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeMatrix {
    pub q: Matrix3<f64>,
}

impl ConeMatrix {
    pub fn eval(&self, d: &Vector3<f64>) -> f64 {
        d.dot(&(self.q * d))
    }
}

/// Cone matrix without the camera-inside check. At `pᵀAp = 9` this
/// degenerates to the rank-1 form `A p pᵀ A`; inside the ellipsoid it is
/// definite and has no real rulings.
pub fn cone_matrix_unchecked(form: &EllipsoidForm) -> ConeMatrix {
    let a = &form.a;
    let m = a * form.center;
    let beta = form.center.dot(&m) - 9.0;
    let mut q = m * m.transpose() - a * beta;
    symmetrize(&mut q);
    ConeMatrix { q }
}

pub fn cone_matrix(form: &EllipsoidForm) -> Result<ConeMatrix> {
    if form.origin_value() <= 9.0 {
        return Err(Error::CameraInside);
    }
    Ok(cone_matrix_unchecked(form))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConicKind {
    Ellipse,
    Parabola,
    Hyperbola,
    /// Definite Q₂ but no real curve (empty or a single point).
    Degenerate,
}

impl ConicKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ConicKind::Ellipse => "ellipse",
            ConicKind::Parabola => "parabola",
            ConicKind::Hyperbola => "hyperbola",
            ConicKind::Degenerate => "degenerate",
        }
    }
}

/// Ellipse on the z=1 plane: `(v − center)ᵀ shape (v − center) = 9`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneEllipse {
    pub center: Vector2<f64>,
    pub shape: Matrix2<f64>,
}

/// The cone restricted to z = 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitPlaneConic {
    pub kind: ConicKind,
    pub quad: Matrix2<f64>,
    pub linear: Vector2<f64>,
    pub constant: f64,
    /// Present iff `kind == Ellipse`.
    pub ellipse: Option<PlaneEllipse>,
}

impl UnitPlaneConic {
    /// Left-hand side `vᵀQ₂v + 2qᵀv + q₃₃`.
    pub fn eval(&self, v: &Vector2<f64>) -> f64 {
        v.dot(&(self.quad * v)) + 2.0 * self.linear.dot(v) + self.constant
    }
}

pub fn conic_on_unit_plane(cone: &ConeMatrix) -> UnitPlaneConic {
    let q = &cone.q;
    let quad = Matrix2::new(q[(0, 0)], q[(0, 1)], q[(1, 0)], q[(1, 1)]);
    let linear = Vector2::new(q[(0, 2)], q[(1, 2)]);
    let constant = q[(2, 2)];
    let det = quad.determinant();
    let norm2 = quad.norm_squared();

    let mut out = UnitPlaneConic {
        kind: ConicKind::Degenerate,
        quad,
        linear,
        constant,
        ellipse: None,
    };
    if !(det.is_finite() && norm2.is_finite()) || norm2 == 0.0 {
        return out;
    }
    if det.abs() <= PARABOLA_TOL * norm2 {
        out.kind = ConicKind::Parabola;
        return out;
    }
    if det < 0.0 {
        out.kind = ConicKind::Hyperbola;
        return out;
    }

    let inv_det = 1.0 / det;
    let quad_inv = Matrix2::new(quad[(1, 1)], -quad[(0, 1)], -quad[(1, 0)], quad[(0, 0)]) * inv_det;
    let center = -(quad_inv * linear);
    let c0 = constant + linear.dot(&center);
    let shape = quad * (-9.0 / c0);
    if shape.iter().all(|v| v.is_finite()) && shape[(0, 0)] > 0.0 && shape.determinant() > 0.0 {
        out.kind = ConicKind::Ellipse;
        out.ellipse = Some(PlaneEllipse { center, shape });
    }
    out
}

/// Maps the z=1 ellipse to pixels: `p_img = F v₀ + c`, `Σ_img⁻¹ = F⁻¹ M F⁻¹`.
pub fn to_image_plane(ellipse: &PlaneEllipse, k: &Intrinsics, depth: f64) -> Splat2D {
    let m = &ellipse.shape;
    let off = 0.5 * (m[(0, 1)] + m[(1, 0)]) / (k.fx * k.fy);
    Splat2D {
        center: k.to_pixel(&ellipse.center),
        inv_cov: Matrix2::new(m[(0, 0)] / (k.fx * k.fx), off, off, m[(1, 1)] / (k.fy * k.fy)),
        depth,
        source_index: 0,
    }
}

/// Projects the z=1 ellipse of a camera-space Gaussian, stopping before the
/// pixel mapping.
pub fn project_to_unit_plane(sigma_c: &Matrix3<f64>, p_c: &Vector3<f64>) -> Result<PlaneEllipse> {
    let form = ellipsoid_form(sigma_c, p_c)?;
    let cone = cone_matrix(&form)?;
    let conic = conic_on_unit_plane(&cone);
    conic.ellipse.ok_or(Error::NonEllipse(conic.kind))
}

/// Full cone projection of a camera-space Gaussian. Depth is `p_c.z`.
pub fn project_conic(sigma_c: &Matrix3<f64>, p_c: &Vector3<f64>, cam: &Camera) -> Result<Splat2D> {
    let ellipse = project_to_unit_plane(sigma_c, p_c)?;
    Ok(to_image_plane(&ellipse, &cam.intrinsics(), p_c.z))
}

/// Classifies the z=1 section for any Gaussian, including ones the
/// prefilter would reject.
pub fn classify(sigma_c: &Matrix3<f64>, p_c: &Vector3<f64>) -> Result<ConicKind> {
    let form = ellipsoid_form(sigma_c, p_c)?;
    Ok(conic_on_unit_plane(&cone_matrix_unchecked(&form)).kind)
}
