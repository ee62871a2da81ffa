//! File formats: 3DGS binary PLY clouds, line-oriented camera text, PPM.

mod cameras;
mod ply;
mod ppm;

pub use cameras::{read_cameras, write_cameras, CameraParseError, CameraParseErrorKind};
pub use ply::{read_ply, write_ply, PlyError, PLY_FLOATS_PER_VERTEX, PLY_PROPERTIES};
pub use ppm::write_ppm;
