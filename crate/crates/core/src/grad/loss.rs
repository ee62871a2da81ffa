//! Photometric loss `(1 − λ)·L1 + λ·(1 − SSIM)` and its image gradient.
//!
//! SSIM uses an 11×11 Gaussian window (σ = 1.5), zero padding with
//! same-size output, C1 = 0.01², C2 = 0.03², averaged over pixels and
//! channels.

use crate::error::Result;
use crate::image::{Image, Rgb};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Normalized 1D Gaussian window.
pub fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as f64;
    let raw: Vec<f64> = (0..size)
        .map(|i| (-(i as f64 - half).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

/// Separable zero-padded correlation with a symmetric kernel, same-size
/// output. Self-adjoint for symmetric kernels.
fn blur(src: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let r = kernel.len() / 2;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        let dst = &mut tmp[y * w..(y + 1) * w];
        for (k, &kv) in kernel.iter().enumerate() {
            // dst[x] += kv · row[x + k − r] over the x where the tap is inside.
            let x_lo = r.saturating_sub(k);
            let x_hi = w.min((w + r).saturating_sub(k));
            if x_lo >= x_hi {
                continue;
            }
            let s_lo = x_lo + k - r;
            for (d, v) in dst[x_lo..x_hi].iter_mut().zip(&row[s_lo..s_lo + (x_hi - x_lo)]) {
                *d += kv * v;
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let k_lo = r.saturating_sub(y);
        let k_hi = kernel.len().min(h + r - y);
        let dst = &mut out[y * w..(y + 1) * w];
        for k in k_lo..k_hi {
            let sy = y + k - r;
            let kv = kernel[k];
            for (d, v) in dst.iter_mut().zip(&tmp[sy * w..(sy + 1) * w]) {
                *d += kv * v;
            }
        }
    }
    out
}

fn channel(img: &Image, c: usize) -> Vec<f64> {
    img.pixels.iter().map(|p| p[c]).collect()
}

struct SsimChannel {
    mean: f64,
    /// d(mean SSIM of this channel · n_channel_pixels)/dx per pixel, if requested.
    grad: Option<Vec<f64>>,
}

fn ssim_channel(x: &[f64], y: &[f64], w: usize, h: usize, want_grad: bool) -> SsimChannel {
    let kernel = gaussian_window(SSIM_WINDOW, SSIM_SIGMA);
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mu_x = blur(x, w, h, &kernel);
    let mu_y = blur(y, w, h, &kernel);
    let e_xx = blur(&xx, w, h, &kernel);
    let e_yy = blur(&yy, w, h, &kernel);
    let e_xy = blur(&xy, w, h, &kernel);

    let n = w * h;
    let mut sum = 0.0;
    let (mut g_mu, mut g_xx, mut g_xy) = if want_grad {
        (vec![0.0; n], vec![0.0; n], vec![0.0; n])
    } else {
        (Vec::new(), Vec::new(), Vec::new())
    };
    for i in 0..n {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let var_x = e_xx[i] - mx * mx;
        let var_y = e_yy[i] - my * my;
        let cov = e_xy[i] - mx * my;
        let a1 = 2.0 * mx * my + SSIM_C1;
        let b1 = mx * mx + my * my + SSIM_C1;
        let a2 = 2.0 * cov + SSIM_C2;
        let b2 = var_x + var_y + SSIM_C2;
        let l = a1 / b1;
        let cs = a2 / b2;
        sum += l * cs;
        if want_grad {
            // Written so that every term vanishes exactly when x == y.
            let dl_dmu = 2.0 * (my * b1 - mx * a1) / (b1 * b1);
            let dcs_dmu = 2.0 * (mx * a2 - my * b2) / (b2 * b2);
            g_mu[i] = dl_dmu * cs + l * dcs_dmu;
            let t = l / b2;
            g_xx[i] = -t * cs;
            g_xy[i] = 2.0 * t;
        }
    }
    let grad = want_grad.then(|| {
        let b_mu = blur(&g_mu, w, h, &kernel);
        let b_xx = blur(&g_xx, w, h, &kernel);
        let b_xy = blur(&g_xy, w, h, &kernel);
        (0..n)
            .map(|i| b_mu[i] + 2.0 * x[i] * b_xx[i] + y[i] * b_xy[i])
            .collect()
    });
    SsimChannel {
        mean: sum / n as f64,
        grad,
    }
}

pub fn l1(img: &Image, reference: &Image) -> Result<f64> {
    img.check_same_size(reference)?;
    let sum: f64 = img
        .pixels
        .iter()
        .zip(&reference.pixels)
        .map(|(a, b)| (a - b).abs().sum())
        .sum();
    Ok(sum / (3 * img.pixels.len()).max(1) as f64)
}

/// Mean SSIM over all pixels and channels.
pub fn ssim(img: &Image, reference: &Image) -> Result<f64> {
    img.check_same_size(reference)?;
    let (w, h) = (img.width as usize, img.height as usize);
    let total: f64 = (0..3)
        .map(|c| ssim_channel(&channel(img, c), &channel(reference, c), w, h, false).mean)
        .sum();
    Ok(total / 3.0)
}

pub fn loss(img: &Image, reference: &Image, lambda: f64) -> Result<f64> {
    let mut total = (1.0 - lambda) * l1(img, reference)?;
    if lambda > 0.0 {
        total += lambda * (1.0 - ssim(img, reference)?);
    }
    Ok(total)
}

/// Loss and its gradient with respect to every pixel channel of `img`.
/// The L1 subgradient at zero difference is zero.
pub fn loss_and_grad(img: &Image, reference: &Image, lambda: f64) -> Result<(f64, Vec<Rgb>)> {
    img.check_same_size(reference)?;
    let (w, h) = (img.width as usize, img.height as usize);
    let n = w * h;
    let count = (3 * n).max(1) as f64;
    let l1_scale = (1.0 - lambda) / count;
    let mut grad: Vec<Rgb> = img
        .pixels
        .iter()
        .zip(&reference.pixels)
        .map(|(a, b)| (a - b).map(|d| if d > 0.0 { l1_scale } else if d < 0.0 { -l1_scale } else { 0.0 }))
        .collect();
    let mut value = (1.0 - lambda) * l1(img, reference)?;
    if lambda > 0.0 {
        let mut ssim_sum = 0.0;
        // d(λ(1 − mean))/dx = −λ/(3n) · d(sum)/dx
        let scale = -lambda / count;
        for c in 0..3 {
            let ch = ssim_channel(&channel(img, c), &channel(reference, c), w, h, true);
            ssim_sum += ch.mean;
            for (g, d) in grad.iter_mut().zip(ch.grad.unwrap()) {
                g[c] += scale * d;
            }
        }
        value += lambda * (1.0 - ssim_sum / 3.0);
    }
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: u32, h: u32, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let px = (0..w * h)
            .map(|_| Rgb::new(rng.random(), rng.random(), rng.random()))
            .collect();
        Image::from_pixels(w, h, px).unwrap()
    }

    /// Direct windowed SSIM with an explicit 2D window, no separability.
    fn reference_ssim(a: &Image, b: &Image) -> f64 {
        let g = gaussian_window(11, 1.5);
        let (w, h) = (a.width as i64, a.height as i64);
        let mut total = 0.0;
        for c in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for j in 0..11i64 {
                        for i in 0..11i64 {
                            let (sx, sy) = (x + i - 5, y + j - 5);
                            if sx < 0 || sy < 0 || sx >= w || sy >= h {
                                continue;
                            }
                            let k = g[i as usize] * g[j as usize];
                            let va = a.get(sx as u32, sy as u32)[c];
                            let vb = b.get(sx as u32, sy as u32)[c];
                            mx += k * va;
                            my += k * vb;
                            sxx += k * va * va;
                            syy += k * vb * vb;
                            sxy += k * va * vb;
                        }
                    }
                    let (vx, vy, cxy) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
                    total += ((2.0 * mx * my + SSIM_C1) * (2.0 * cxy + SSIM_C2))
                        / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
                }
            }
        }
        total / (3 * w * h) as f64
    }

    #[test]
    fn identical_images_have_zero_loss_and_gradient() {
        let a = random_image(23, 17, 1);
        let (v, g) = loss_and_grad(&a, &a, 0.2).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.iter().all(|p| *p == Rgb::zeros()));
        assert_eq!(loss(&a, &a, 0.2).unwrap(), 0.0);
    }

    #[test]
    fn l1_of_ones_against_zeros() {
        let a = Image::new(5, 4, Rgb::repeat(1.0));
        let b = Image::new(5, 4, Rgb::zeros());
        assert_eq!(loss(&a, &b, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn matches_reference_ssim() {
        let a = random_image(20, 14, 2);
        let b = random_image(20, 14, 3);
        let expected = 0.8 * l1(&a, &b).unwrap() + 0.2 * (1.0 - reference_ssim(&a, &b));
        assert!((loss(&a, &b, 0.2).unwrap() - expected).abs() < 1e-6);
        assert!((ssim(&a, &b).unwrap() - reference_ssim(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let a = random_image(13, 12, 4);
        let b = random_image(13, 12, 5);
        let (_, g) = loss_and_grad(&a, &b, 0.2).unwrap();
        let h = 1e-6;
        for &(i, c) in &[(0usize, 0usize), (20, 1), (77, 2), (155, 0), (100, 1)] {
            let mut hi = a.clone();
            let mut lo = a.clone();
            hi.pixels[i][c] += h;
            lo.pixels[i][c] -= h;
            let fd = (loss(&hi, &b, 0.2).unwrap() - loss(&lo, &b, 0.2).unwrap()) / (2.0 * h);
            assert!((fd - g[i][c]).abs() < 1e-8, "pixel {i} ch {c}: fd {fd} vs {}", g[i][c]);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let a = Image::new(4, 4, Rgb::zeros());
        let b = Image::new(4, 5, Rgb::zeros());
        assert!(loss(&a, &b, 0.2).is_err());
        assert!(loss_and_grad(&a, &b, 0.2).is_err());
    }
}
