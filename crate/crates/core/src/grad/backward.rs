//! Analytic gradients of the photometric loss with respect to every
//! Gaussian parameter.
//!
//! Pixels are re-blended front to back to recover each contribution, then
//! swept back to front. The color behind contribution i, normalized by the
//! transmittance after it, obeys `S_{i−1} = α_i c_i + (1 − α_i) S_i` with
//! `S = background` at the end, which gives `∂C/∂α_i = T_i (c_i − S_i)`
//! without dividing by `1 − α`.

use nalgebra::{Matrix2, Vector2, Vector3, Vector4};
use rayon::prelude::*;

use super::chain;
use super::loss::{loss, loss_and_grad};
use crate::camera::{to_camera, Camera};
use crate::error::Result;
use crate::gaussian::Gaussian3D;
use crate::image::{Image, Rgb};
use crate::raster::{blend_pixel, prepare, render, render_prepared, tile_bounds, Contribution, PreparedSplat, Prepared, Projection, RenderOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradients {
    pub d_position: Vector3<f64>,
    /// With respect to the stored, unnormalized quaternion.
    pub d_rotation: Vector4<f64>,
    pub d_log_scales: Vector3<f64>,
    pub d_opacity_logit: f64,
    pub d_sh: Vec<Vector3<f64>>,
}

impl ParamGradients {
    pub fn zeros(sh_count: usize) -> Self {
        Self {
            d_position: Vector3::zeros(),
            d_rotation: Vector4::zeros(),
            d_log_scales: Vector3::zeros(),
            d_opacity_logit: 0.0,
            d_sh: vec![Vector3::zeros(); sh_count],
        }
    }

    /// Same order as [`flatten_params`].
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(11 + 3 * self.d_sh.len());
        v.extend(self.d_position.iter());
        v.extend(self.d_rotation.iter());
        v.extend(self.d_log_scales.iter());
        v.push(self.d_opacity_logit);
        for c in &self.d_sh {
            v.extend(c.iter());
        }
        v
    }

    pub fn is_zero(&self) -> bool {
        self.to_vec().iter().all(|v| *v == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.to_vec().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn accumulate(&mut self, other: &ParamGradients) {
        self.d_position += other.d_position;
        self.d_rotation += other.d_rotation;
        self.d_log_scales += other.d_log_scales;
        self.d_opacity_logit += other.d_opacity_logit;
        for (a, b) in self.d_sh.iter_mut().zip(&other.d_sh) {
            *a += b;
        }
    }
}

/// Parameters as a flat vector: position, rotation, log-scales, opacity
/// logit, then SH coefficients one after another.
pub fn flatten_params(g: &Gaussian3D) -> Vec<f64> {
    let mut v = Vec::with_capacity(11 + 3 * g.sh_coeffs.len());
    v.extend(g.position.iter());
    v.extend(g.rotation.iter());
    v.extend(g.log_scales.iter());
    v.push(g.opacity_logit);
    for c in &g.sh_coeffs {
        v.extend(c.iter());
    }
    v
}

/// Inverse of [`flatten_params`]; `x` must have the template's length.
pub fn unflatten_params(template: &Gaussian3D, x: &[f64]) -> Gaussian3D {
    let mut g = template.clone();
    g.position = Vector3::new(x[0], x[1], x[2]);
    g.rotation = Vector4::new(x[3], x[4], x[5], x[6]);
    g.log_scales = Vector3::new(x[7], x[8], x[9]);
    g.opacity_logit = x[10];
    for (k, c) in g.sh_coeffs.iter_mut().enumerate() {
        *c = Vector3::new(x[11 + 3 * k], x[12 + 3 * k], x[13 + 3 * k]);
    }
    g
}

/// Gradients for one splat's 2D quantities.
#[derive(Debug, Clone, Copy, Default)]
struct SplatGrad {
    center: Vector2<f64>,
    /// For (K_xx, K_xy, K_yy), the off-diagonal counted once.
    conic: Vector3<f64>,
    opacity: f64,
    color: Rgb,
}

impl SplatGrad {
    fn add(&mut self, o: &SplatGrad) {
        self.center += o.center;
        self.conic += o.conic;
        self.opacity += o.opacity;
        self.color += o.color;
    }
}

fn pixel_backward(prepared: &Prepared, cam: &Camera, opts: &RenderOptions, g_img: &[Rgb]) -> Result<Vec<SplatGrad>> {
    let splats = &prepared.splats;
    let tiles: Vec<Vec<SplatGrad>> = (0..prepared.bins.len())
        .into_par_iter()
        .map(|tile| {
            let bin = &prepared.bins[tile];
            let mut local = vec![SplatGrad::default(); bin.len()];
            if bin.is_empty() {
                return Ok(local);
            }
            let (x0, x1, y0, y1) = tile_bounds(tile, prepared, cam);
            let mut contribs: Vec<Contribution> = Vec::new();
            for py in y0..y1 {
                for px in x0..x1 {
                    let g = g_img[(py * cam.width as i64 + px) as usize];
                    if g == Rgb::zeros() {
                        continue;
                    }
                    contribs.clear();
                    blend_pixel(bin, splats, px, py, opts, |c| contribs.push(c))?;
                    let (x, y) = (px as f64 + 0.5, py as f64 + 0.5);
                    let mut behind = opts.background;
                    for c in contribs.iter().rev() {
                        let p = &splats[c.slot as usize];
                        let acc = &mut local[c.pos as usize];
                        let t = c.transmittance;
                        acc.color += g * (t * c.alpha);
                        let d_alpha = t * g.dot(&(p.color - behind));
                        behind = p.color * c.alpha + behind * (1.0 - c.alpha);
                        acc.opacity += c.weight * d_alpha;
                        let d_power = p.opacity * d_alpha * c.weight;
                        let dx = x - p.splat.center.x;
                        let dy = y - p.splat.center.y;
                        let k = &p.conic;
                        acc.center += Vector2::new(k.x * dx + k.y * dy, k.y * dx + k.z * dy) * d_power;
                        acc.conic += Vector3::new(-0.5 * dx * dx, -dx * dy, -0.5 * dy * dy) * d_power;
                    }
                }
            }
            Ok(local)
        })
        .collect::<Result<_>>()?;

    // Fixed reduction order: tiles in index order, bin entries in order.
    let mut out = vec![SplatGrad::default(); splats.len()];
    for (tile, local) in tiles.iter().enumerate() {
        for (pos, g) in local.iter().enumerate() {
            out[prepared.bins[tile][pos] as usize].add(g);
        }
    }
    Ok(out)
}

fn splat_backward(
    g: &Gaussian3D,
    p: &PreparedSplat,
    sg: &SplatGrad,
    cam: &Camera,
    opts: &RenderOptions,
    projection: Projection,
) -> Result<ParamGradients> {
    let o = p.opacity;
    let d_opacity_logit = sg.opacity * o * (1.0 - o);
    let (d_sh, g_pos_color) = chain::sh_backward(&g.sh_coeffs, &p.view_dir, p.view_dist, opts.sh_degree, &p.clamped, &sg.color);

    let k = Matrix2::new(p.conic.x, p.conic.y, p.conic.y, p.conic.z);
    let g_k = Matrix2::new(sg.conic.x, 0.5 * sg.conic.y, 0.5 * sg.conic.y, sg.conic.z);
    let g_cov = chain::dilation_backward(&k, &g_k);

    let sigma = g.covariance()?;
    let (sigma_c, p_c) = to_camera(&sigma, &g.position, cam);
    let (g_sigma_c, g_p_c) = match projection {
        Projection::Conic => chain::conic_backward(&sigma_c, &p_c, cam, &g_cov, &sg.center)?,
        Projection::Affine => chain::affine_backward(&sigma_c, &p_c, cam, &g_cov, &sg.center)?,
    };
    let (g_sigma, g_p) = chain::view_backward(cam, &g_sigma_c, &g_p_c);
    let (d_rotation, d_log_scales) = chain::covariance_backward(&g.rotation, &g.log_scales, &g_sigma)?;
    Ok(ParamGradients {
        d_position: g_p + g_pos_color,
        d_rotation,
        d_log_scales,
        d_opacity_logit,
        d_sh,
    })
}

/// Loss, per-Gaussian gradients and the rendered image for one view.
pub(crate) fn backward_with_image(
    scene: &[Gaussian3D],
    cam: &Camera,
    reference: &Image,
    opts: &RenderOptions,
    projection: Projection,
    lambda: f64,
) -> Result<(f64, Vec<ParamGradients>, Image)> {
    let prepared = prepare(scene, cam, opts, projection)?;
    let image = render_prepared(&prepared, cam, opts)?;
    let (value, g_img) = loss_and_grad(&image, reference, lambda)?;
    let splat_grads = pixel_backward(&prepared, cam, opts, &g_img)?;
    let per_splat: Vec<(usize, ParamGradients)> = prepared
        .splats
        .par_iter()
        .zip(splat_grads.par_iter())
        .map(|(p, sg)| splat_backward(&scene[p.index], p, sg, cam, opts, projection).map(|g| (p.index, g)))
        .collect::<Result<_>>()?;
    let mut grads: Vec<ParamGradients> = scene.iter().map(|g| ParamGradients::zeros(g.sh_coeffs.len())).collect();
    for (i, g) in per_splat {
        grads[i] = g;
    }
    Ok((value, grads, image))
}

/// Loss of rendering `scene` against `reference` and its gradient for every
/// Gaussian. Gaussians that are filtered or cover no pixel get exactly zero.
pub fn backward(
    scene: &[Gaussian3D],
    cam: &Camera,
    reference: &Image,
    opts: &RenderOptions,
    projection: Projection,
    lambda: f64,
) -> Result<(f64, Vec<ParamGradients>)> {
    let (value, grads, _) = backward_with_image(scene, cam, reference, opts, projection, lambda)?;
    Ok((value, grads))
}

/// Forward-only loss, the function `backward` differentiates.
pub fn render_loss(
    scene: &[Gaussian3D],
    cam: &Camera,
    reference: &Image,
    opts: &RenderOptions,
    projection: Projection,
    lambda: f64,
) -> Result<f64> {
    loss(&render(scene, cam, opts, projection)?, reference, lambda)
}
