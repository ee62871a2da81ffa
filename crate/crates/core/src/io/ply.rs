//! Binary little-endian PLY in the layout written by 3DGS training code.
//!
//! Each vertex carries 62 f32 values: `x y z nx ny nz f_dc_0..2
//! f_rest_0..44 opacity scale_0..2 rot_0..3`. `f_rest` is channel-major
//! (all red higher-order coefficients, then green, then blue). Readers accept
//! 0, 9, 24 or 45 `f_rest` properties; the writer always emits 45.

use nalgebra::{Vector3, Vector4};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::gaussian::Gaussian3D;
use crate::sh::MAX_COEFFS;

pub const PLY_FLOATS_PER_VERTEX: usize = 62;

const REST_MAX: usize = 3 * (MAX_COEFFS - 1);

#[derive(Debug, Error, PartialEq)]
pub enum PlyError {
    #[error("malformed PLY header at byte {offset}: {message}")]
    Header { offset: usize, message: String },

    #[error("unexpected PLY property at byte {offset}: expected `{expected}`, found `{found}`")]
    UnexpectedProperty {
        offset: usize,
        expected: String,
        found: String,
    },

    #[error("truncated PLY payload at byte {offset}: need {needed} bytes, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
}

/// Full property list in file order.
pub static PLY_PROPERTIES: std::sync::LazyLock<Vec<String>> = std::sync::LazyLock::new(|| property_names(REST_MAX));

fn property_names(rest: usize) -> Vec<String> {
    let mut names: Vec<String> = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    names.extend((0..rest).map(|i| format!("f_rest_{i}")));
    names.push("opacity".into());
    names.extend((0..3).map(|i| format!("scale_{i}")));
    names.extend((0..4).map(|i| format!("rot_{i}")));
    names
}

/// Header lines with the byte offset at which each starts.
fn header_lines(bytes: &[u8]) -> std::result::Result<(Vec<(usize, String)>, usize), PlyError> {
    let mut lines = Vec::new();
    let mut start = 0;
    loop {
        let Some(rel) = bytes[start..].iter().position(|&b| b == b'\n') else {
            return Err(PlyError::Header {
                offset: start,
                message: "missing end_header".into(),
            });
        };
        let raw = &bytes[start..start + rel];
        let line = std::str::from_utf8(raw)
            .map_err(|_| PlyError::Header {
                offset: start,
                message: "header is not valid UTF-8".into(),
            })?
            .trim_end_matches('\r')
            .to_string();
        let next = start + rel + 1;
        let done = line.trim() == "end_header";
        lines.push((start, line));
        start = next;
        if done {
            return Ok((lines, start));
        }
    }
}

pub fn read_ply(bytes: &[u8]) -> std::result::Result<Vec<Gaussian3D>, PlyError> {
    let (lines, payload_start) = header_lines(bytes)?;
    let mut it = lines
        .into_iter()
        .filter(|(_, l)| {
            let t = l.trim_start();
            !(t.starts_with("comment") || t.starts_with("obj_info"))
        })
        .peekable();

    let header_err = |offset: usize, message: &str| PlyError::Header {
        offset,
        message: message.to_string(),
    };

    if !matches!(it.next(), Some((_, l)) if l.trim() == "ply") {
        return Err(header_err(0, "missing `ply` magic"));
    }
    match it.next() {
        Some((_, l)) if l.split_whitespace().collect::<Vec<_>>() == ["format", "binary_little_endian", "1.0"] => {}
        Some((o, _)) => return Err(header_err(o, "only `format binary_little_endian 1.0` is supported")),
        None => return Err(header_err(payload_start, "missing format line")),
    }
    let count = match it.next() {
        Some((o, l)) => {
            let t: Vec<&str> = l.split_whitespace().collect();
            if t.len() != 3 || t[0] != "element" || t[1] != "vertex" {
                return Err(header_err(o, "expected `element vertex <count>`"));
            }
            t[2].parse::<usize>().map_err(|_| header_err(o, "bad vertex count"))?
        }
        None => return Err(header_err(payload_start, "missing vertex element")),
    };

    let mut found = Vec::new();
    let mut end_offset = payload_start;
    for (o, l) in it {
        let t: Vec<&str> = l.split_whitespace().collect();
        if t == ["end_header"] {
            end_offset = o;
            break;
        }
        if t.len() != 3 || t[0] != "property" {
            return Err(header_err(o, "expected `property float <name>` (only one element is supported)"));
        }
        if t[1] != "float" && t[1] != "float32" {
            return Err(PlyError::UnexpectedProperty {
                offset: o,
                expected: "float".into(),
                found: t[1].into(),
            });
        }
        found.push((o, t[2].to_string()));
    }

    let rest = found.len().saturating_sub(PLY_FLOATS_PER_VERTEX - REST_MAX);
    let expected = property_names(if [0, 9, 24, 45].contains(&rest) { rest } else { REST_MAX });
    for (i, name) in expected.iter().enumerate() {
        match found.get(i) {
            Some((_, f)) if f == name => {}
            Some((o, f)) => {
                return Err(PlyError::UnexpectedProperty {
                    offset: *o,
                    expected: name.clone(),
                    found: f.clone(),
                })
            }
            None => {
                return Err(PlyError::UnexpectedProperty {
                    offset: end_offset,
                    expected: name.clone(),
                    found: "end_header".into(),
                })
            }
        }
    }
    if let Some((o, f)) = found.get(expected.len()) {
        return Err(PlyError::UnexpectedProperty {
            offset: *o,
            expected: "end_header".into(),
            found: f.clone(),
        });
    }

    let floats = expected.len();
    let record = floats * 4;
    let mut out = Vec::with_capacity(count.min(1 << 20));
    let mut offset = payload_start;
    for _ in 0..count {
        let available = bytes.len() - offset;
        if available < record {
            return Err(PlyError::Truncated {
                offset,
                needed: record,
                available,
            });
        }
        let v: Vec<f64> = bytes[offset..offset + record]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        offset += record;

        let n_rest = rest_count(floats);
        let per_channel = n_rest / 3;
        let mut sh = Vec::with_capacity(1 + per_channel);
        sh.push(Vector3::new(v[6], v[7], v[8]));
        for k in 0..per_channel {
            sh.push(Vector3::new(v[9 + k], v[9 + per_channel + k], v[9 + 2 * per_channel + k]));
        }
        let tail = 9 + n_rest;
        out.push(Gaussian3D {
            position: Vector3::new(v[0], v[1], v[2]),
            rotation: Vector4::new(v[tail + 4], v[tail + 5], v[tail + 6], v[tail + 7]),
            log_scales: Vector3::new(v[tail + 1], v[tail + 2], v[tail + 3]),
            opacity_logit: v[tail],
            sh_coeffs: sh,
        });
    }
    Ok(out)
}

fn rest_count(floats: usize) -> usize {
    floats - (PLY_FLOATS_PER_VERTEX - REST_MAX)
}

/// Serializes a cloud. Values are narrowed to f32; higher-order SH
/// coefficients beyond the stored degree are written as zero.
pub fn write_ply(gaussians: &[Gaussian3D]) -> Result<Vec<u8>> {
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", gaussians.len()));
    for name in PLY_PROPERTIES.iter() {
        header.push_str(&format!("property float {name}\n"));
    }
    header.push_str("end_header\n");
    let mut out = header.into_bytes();
    out.reserve(gaussians.len() * PLY_FLOATS_PER_VERTEX * 4);

    let per_channel = MAX_COEFFS - 1;
    for (i, g) in gaussians.iter().enumerate() {
        if g.sh_coeffs.len() > MAX_COEFFS {
            return Err(Error::InvalidParameter(format!(
                "gaussian {i} has {} SH coefficients, at most {MAX_COEFFS} fit the PLY layout",
                g.sh_coeffs.len()
            )));
        }
        let mut v = [0f32; PLY_FLOATS_PER_VERTEX];
        v[0] = g.position.x as f32;
        v[1] = g.position.y as f32;
        v[2] = g.position.z as f32;
        if let Some(dc) = g.sh_coeffs.first() {
            v[6] = dc.x as f32;
            v[7] = dc.y as f32;
            v[8] = dc.z as f32;
        }
        for (k, c) in g.sh_coeffs.iter().skip(1).enumerate() {
            for ch in 0..3 {
                v[9 + ch * per_channel + k] = c[ch] as f32;
            }
        }
        let tail = 9 + REST_MAX;
        v[tail] = g.opacity_logit as f32;
        for k in 0..3 {
            v[tail + 1 + k] = g.log_scales[k] as f32;
        }
        for k in 0..4 {
            v[tail + 4 + k] = g.rotation[k] as f32;
        }
        for f in v {
            out.extend_from_slice(&f.to_le_bytes());
        }
    }
    Ok(out)
}
