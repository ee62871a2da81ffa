//! Screening of Gaussians before projection.
//!
//! Two kinds of ellipsoid cannot be projected by the tangent cone: those
//! containing the camera origin (no tangent rays exist) and those reaching
//! down to z ≤ 0 (the section with z = 1 is a parabola or hyperbola).
//! Splats whose 3σ box misses the image are culled as well. Checks run in
//! that order and the first failure is reported.

use nalgebra::{Matrix3, Vector3};

use crate::affine::Splat2D;
use crate::camera::{to_camera, Camera};
use crate::conic::{self, EllipsoidForm};
use crate::error::{Error, Result};
use crate::gaussian::Gaussian3D;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RejectReason {
    CameraInside,
    BehindPlane,
    OutOfFrustum,
    /// Covariance too ill-conditioned to invert, or a numerically singular
    /// footprint.
    Degenerate,
}

impl RejectReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::CameraInside => "camera-inside",
            RejectReason::BehindPlane => "behind-plane",
            RejectReason::OutOfFrustum => "out-of-frustum",
            RejectReason::Degenerate => "degenerate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FilterVerdict {
    Keep,
    Reject(RejectReason),
}

impl FilterVerdict {
    pub fn keep(&self) -> bool {
        matches!(self, FilterVerdict::Keep)
    }

    pub fn reason(&self) -> Option<RejectReason> {
        match self {
            FilterVerdict::Keep => None,
            FilterVerdict::Reject(r) => Some(*r),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    /// Image rectangle dilation for the frustum test, in pixels.
    pub margin_px: f64,
    /// Gaussians with `z_min <= near_plane` are rejected.
    pub near_plane: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            margin_px: 16.0,
            near_plane: 0.0,
        }
    }
}

/// True iff the origin lies inside or on the 3σ ellipsoid.
pub fn camera_inside(form: &EllipsoidForm) -> bool {
    form.origin_value() <= 9.0
}

/// Lowest camera-space z on the 3σ surface. The gradient of the form is
/// parallel to the z axis there, which gives x − p = ±3 Σ_c e_z / √(Σ_c,zz).
pub fn min_depth(sigma_c: &Matrix3<f64>, p_c: &Vector3<f64>) -> f64 {
    p_c.z - 3.0 * sigma_c[(2, 2)].sqrt()
}

/// True (cull) iff the 3σ bounding box misses the image rectangle grown by
/// `margin_px` on every side.
pub fn frustum_cull(splat: &Splat2D, cam: &Camera, margin_px: f64) -> bool {
    let Some(cov) = splat.covariance() else {
        return true;
    };
    let ex = 3.0 * cov[(0, 0)].max(0.0).sqrt();
    let ey = 3.0 * cov[(1, 1)].max(0.0).sqrt();
    let (w, h) = (cam.width as f64, cam.height as f64);
    let c = splat.center;
    c.x + ex < -margin_px || c.x - ex > w + margin_px || c.y + ey < -margin_px || c.y - ey > h + margin_px
}

/// Everything the screening step computes for one Gaussian and camera.
#[derive(Debug, Clone)]
pub struct Screened {
    pub verdict: FilterVerdict,
    pub sigma_c: Matrix3<f64>,
    pub p_c: Vector3<f64>,
    pub z_min: f64,
    /// Cone projection, available once the first two checks pass.
    pub conic: Option<Splat2D>,
}

/// Screens a camera-space Gaussian.
pub fn screen_camera_space(sigma_c: Matrix3<f64>, p_c: Vector3<f64>, cam: &Camera, cfg: &FilterConfig) -> Screened {
    let z_min = min_depth(&sigma_c, &p_c);
    let mut out = Screened {
        verdict: FilterVerdict::Reject(RejectReason::Degenerate),
        sigma_c,
        p_c,
        z_min,
        conic: None,
    };
    let Ok(form) = conic::ellipsoid_form(&sigma_c, &p_c) else {
        return out;
    };
    if camera_inside(&form) {
        out.verdict = FilterVerdict::Reject(RejectReason::CameraInside);
        return out;
    }
    if !(z_min > cfg.near_plane) {
        out.verdict = FilterVerdict::Reject(RejectReason::BehindPlane);
        return out;
    }
    let splat = match conic::project_conic(&sigma_c, &p_c, cam) {
        Ok(s) if s.is_valid() => s,
        _ => return out,
    };
    out.conic = Some(splat);
    out.verdict = if frustum_cull(&splat, cam, cfg.margin_px) {
        FilterVerdict::Reject(RejectReason::OutOfFrustum)
    } else {
        FilterVerdict::Keep
    };
    out
}

pub fn screen(g: &Gaussian3D, cam: &Camera, cfg: &FilterConfig) -> Result<Screened> {
    let sigma = g.covariance()?;
    if !g.position.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite gaussian position".into()));
    }
    let (sigma_c, p_c) = to_camera(&sigma, &g.position, cam);
    Ok(screen_camera_space(sigma_c, p_c, cam, cfg))
}

pub fn prefilter(g: &Gaussian3D, cam: &Camera, cfg: &FilterConfig) -> Result<FilterVerdict> {
    Ok(screen(g, cam, cfg)?.verdict)
}
