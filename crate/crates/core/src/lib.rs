//! Perspective-exact projection of 3D Gaussians through their tangent cone,
//! next to the classic affine-Jacobian projection, with a deterministic CPU
//! rasterizer, analytic gradients and brute-force verifiers.

pub mod affine;
pub mod camera;
pub mod conic;
pub mod ellipse;
mod error;
pub mod gaussian;
pub mod grad;
pub mod image;
pub mod io;
pub mod oracle;
pub mod prefilter;
pub mod raster;
pub mod sh;
pub mod synth;

pub use affine::Splat2D;
pub use camera::{Camera, Intrinsics};
pub use conic::{ConeMatrix, ConicKind};
pub use error::{Error, Result};
pub use gaussian::Gaussian3D;
pub use image::{Image, Rgb};
pub use prefilter::{FilterConfig, FilterVerdict, RejectReason};
pub use raster::{render, Projection, RenderOptions};
