//! One camera per line:
//!
//! ```text
//! id width height fx fy r00 r01 r02 tx r10 r11 r12 ty r20 r21 r22 tz
//! ```
//!
//! `#` starts a comment. Rotations within 1e-6 of orthonormal are accepted
//! and snapped to the nearest rotation.

use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::camera::{orthonormality_error, Camera, ORTHONORMAL_TOL};

const TOKENS: usize = 17;

/// Looser tolerance accepted in text files, which often carry rounded
/// rotations.
const READ_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CameraParseErrorKind {
    #[error("expected {TOKENS} fields, found {0}")]
    TokenCount(usize),
    #[error("cannot parse `{0}` as a number")]
    BadNumber(String),
    #[error("rotation is not orthonormal with positive determinant (|RᵀR - I| = {error:.3e}, det = {det})")]
    NotRotation { error: f64, det: f64 },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("camera file line {line}: {kind}")]
pub struct CameraParseError {
    /// 1-based line number.
    pub line: usize,
    pub kind: CameraParseErrorKind,
}

/// Nearest rotation in the Frobenius sense.
fn nearest_rotation(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    u * v_t
}

fn parse_line(line: usize, text: &str) -> Result<Option<Camera>, CameraParseError> {
    let err = |kind| CameraParseError { line, kind };
    let content = text.split('#').next().unwrap_or("");
    let tokens: Vec<&str> = content.split_whitespace().collect();
    if tokens.is_empty() {
        return Ok(None);
    }
    if tokens.len() != TOKENS {
        return Err(err(CameraParseErrorKind::TokenCount(tokens.len())));
    }
    let int = |s: &str| s.parse::<u32>().map_err(|_| err(CameraParseErrorKind::BadNumber(s.into())));
    let float = |s: &str| {
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| err(CameraParseErrorKind::BadNumber(s.into())))
    };
    let id = int(tokens[0])?;
    let width = int(tokens[1])?;
    let height = int(tokens[2])?;
    let fx = float(tokens[3])?;
    let fy = float(tokens[4])?;
    let mut rotation = Matrix3::zeros();
    let mut translation = Vector3::zeros();
    for row in 0..3 {
        for col in 0..3 {
            rotation[(row, col)] = float(tokens[5 + 4 * row + col])?;
        }
        translation[row] = float(tokens[8 + 4 * row])?;
    }
    let error = orthonormality_error(&rotation);
    let det = rotation.determinant();
    if !(error <= READ_TOL) || !(det > 0.0) {
        return Err(err(CameraParseErrorKind::NotRotation { error, det }));
    }
    if error > ORTHONORMAL_TOL {
        rotation = nearest_rotation(&rotation);
    }
    Camera::new(id, width, height, fx, fy, rotation, translation)
        .map(Some)
        .map_err(|e| err(CameraParseErrorKind::Invalid(e.to_string())))
}

pub fn read_cameras(text: &str) -> Result<Vec<Camera>, CameraParseError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(cam) = parse_line(i + 1, line)? {
            out.push(cam);
        }
    }
    Ok(out)
}

/// Shortest round-trip decimal formatting, so values read back exactly.
pub fn write_cameras(cameras: &[Camera]) -> String {
    let mut out = String::from("# id width height fx fy r00 r01 r02 tx r10 r11 r12 ty r20 r21 r22 tz\n");
    for c in cameras {
        let _ = write!(out, "{} {} {} {:?} {:?}", c.id, c.width, c.height, c.fx, c.fy);
        for row in 0..3 {
            for col in 0..3 {
                let _ = write!(out, " {:?}", c.rotation[(row, col)]);
            }
            let _ = write!(out, " {:?}", c.translation[row]);
        }
        out.push('\n');
    }
    out
}
