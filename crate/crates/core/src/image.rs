use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Rgb = Vector3<f64>;

/// Row-major linear RGB image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<Rgb>,
}

impl Image {
    pub fn new(width: u32, height: u32, fill: Rgb) -> Self {
        Self {
            width,
            height,
            pixels: vec![fill; width as usize * height as usize],
        }
    }

    pub fn from_pixels(width: u32, height: u32, pixels: Vec<Rgb>) -> Result<Self> {
        if pixels.len() != width as usize * height as usize {
            return Err(Error::InvalidParameter(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        if !pixels.iter().all(|p| p.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidParameter("non-finite pixel value".into()));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn get(&self, x: u32, y: u32) -> Rgb {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: Rgb) {
        let w = self.width as usize;
        self.pixels[y as usize * w + x as usize] = value;
    }

    pub fn check_same_size(&self, other: &Image) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch {
                left_width: self.width,
                left_height: self.height,
                right_width: other.width,
                right_height: other.height,
            });
        }
        Ok(())
    }

    /// Mean squared error over every channel of every pixel.
    pub fn mse(&self, other: &Image) -> Result<f64> {
        self.check_same_size(other)?;
        let sum: f64 = self
            .pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| (a - b).norm_squared())
            .sum();
        Ok(sum / (3 * self.pixels.len()).max(1) as f64)
    }

    /// PSNR for a peak value of 1.
    pub fn psnr(&self, other: &Image) -> Result<f64> {
        Ok(psnr_from_mse(self.mse(other)?))
    }
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}
