//! Pinhole camera with the principal point fixed at the image center.
//!
//! Camera space follows the usual vision convention: +x right, +y down,
//! +z forward. The camera origin is at 0 in camera space.

use nalgebra::{Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};

/// Tolerance on ‖RᵀR − I‖ accepted by [`Camera::new`].
pub const ORTHONORMAL_TOL: f64 = 1e-9;

/// Focal lengths and principal point, in pixels.
///
/// Kept separate from [`Camera`] so the plane-to-pixel map can be used with
/// a zero principal point (the z=1 plane itself).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// Maps a point on the z=1 plane to pixels.
    pub fn to_pixel(&self, v: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new(self.fx * v.x + self.cx, self.fy * v.y + self.cy)
    }

    pub fn from_pixel(&self, x: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new((x.x - self.cx) / self.fx, (x.y - self.cy) / self.fy)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub id: u32,
    pub fx: f64,
    pub fy: f64,
    pub width: u32,
    pub height: u32,
    /// Rotation block of the world-to-camera transform.
    pub rotation: Matrix3<f64>,
    /// Translation of the world-to-camera transform.
    pub translation: Vector3<f64>,
}

impl Camera {
    pub fn new(
        id: u32,
        width: u32,
        height: u32,
        fx: f64,
        fy: f64,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self> {
        if !(fx.is_finite() && fy.is_finite() && fx > 0.0 && fy > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "focal lengths must be positive, got fx={fx} fy={fy}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "image size must be at least 1x1, got {width}x{height}"
            )));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite camera translation".into()));
        }
        let err = orthonormality_error(&rotation);
        if !(err <= ORTHONORMAL_TOL) || rotation.determinant() < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "camera rotation is not a proper rotation (|RᵀR - I| = {err:.3e})"
            )));
        }
        Ok(Self {
            id,
            fx,
            fy,
            width,
            height,
            rotation,
            translation,
        })
    }

    /// Camera at `eye` looking at `target`. `up` is a world direction that
    /// ends up pointing towards the top of the image (camera -y).
    pub fn look_at(
        id: u32,
        width: u32,
        height: u32,
        focal: f64,
        eye: &Vector3<f64>,
        target: &Vector3<f64>,
        up: &Vector3<f64>,
    ) -> Result<Self> {
        let forward = (target - eye).normalize();
        let right = forward.cross(up);
        if right.norm() < 1e-12 {
            return Err(Error::InvalidParameter("look_at: up is parallel to view direction".into()));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye);
        Self::new(id, width, height, focal, focal, rotation, translation)
    }

    pub fn identity(width: u32, height: u32, fx: f64, fy: f64) -> Result<Self> {
        Self::new(0, width, height, fx, fy, Matrix3::identity(), Vector3::zeros())
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics {
            fx: self.fx,
            fy: self.fy,
            cx: 0.5 * self.width as f64,
            cy: 0.5 * self.height as f64,
        }
    }

    /// Camera center in world coordinates, −Rᵀt.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn point_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// Max-abs entry of RᵀR − I.
pub fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).abs().max()
}

/// Moves a world-space Gaussian into camera space: Σ_c = R Σ Rᵀ,
/// p_c = R p + t.
pub fn to_camera(sigma: &Matrix3<f64>, p: &Vector3<f64>, cam: &Camera) -> (Matrix3<f64>, Vector3<f64>) {
    let r = &cam.rotation;
    let m = r * sigma;
    let mut sigma_c = m * r.transpose();
    symmetrize(&mut sigma_c);
    (sigma_c, cam.point_to_camera(p))
}

pub(crate) fn symmetrize(m: &mut Matrix3<f64>) {
    for i in 0..3 {
        for j in (i + 1)..3 {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}
