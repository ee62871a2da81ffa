use thiserror::Error;

use crate::conic::ConicKind;
use crate::io::{CameraParseError, PlyError};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point lies behind the camera (z = {z})")]
    BehindCamera { z: f64 },

    #[error("projected 2D covariance is numerically singular")]
    DegenerateSplat,

    #[error("camera-space covariance is ill-conditioned (condition number {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("camera origin lies inside or on the 3-sigma ellipsoid")]
    CameraInside,

    #[error("cone section on the z=1 plane is a {0:?}, not an ellipse")]
    NonEllipse(ConicKind),

    #[error("non-finite value while blending gaussian {index}")]
    NonFinite { index: usize },

    #[error("image size mismatch: {left_width}x{left_height} vs {right_width}x{right_height}")]
    DimensionMismatch {
        left_width: u32,
        left_height: u32,
        right_width: u32,
        right_height: u32,
    },

    #[error("fitting diverged at iteration {iteration} (loss = {loss})")]
    Diverged { iteration: usize, loss: f64 },

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error(transparent)]
    Ply(#[from] PlyError),

    #[error(transparent)]
    CameraParse(#[from] CameraParseError),
}
