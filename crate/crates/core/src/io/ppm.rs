use crate::image::Image;

/// Channel byte: round(clamp(v, 0, 1)·255), halves rounded up. NaN maps to 0.
fn to_byte(v: f64) -> u8 {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (v * 255.0 + 0.5).floor() as u8
}

/// Binary P6 encoding, rows top to bottom.
pub fn write_ppm(img: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.reserve(img.pixels.len() * 3);
    for p in &img.pixels {
        out.extend([to_byte(p.x), to_byte(p.y), to_byte(p.z)]);
    }
    out
}
