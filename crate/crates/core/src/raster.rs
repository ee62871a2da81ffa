//! Deterministic CPU rasterizer.
//!
//! Splats are sorted front to back, binned into 16×16 tiles and blended per
//! pixel. Tiles are independent work items and each pixel blends strictly
//! in sort order, so the output does not depend on the worker count.

use nalgebra::{Matrix2, Vector2, Vector3};
use rayon::prelude::*;

use crate::affine::{self, spd2_inverse, Splat2D};
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::gaussian::Gaussian3D;
use crate::image::{Image, Rgb};
use crate::prefilter::{self, FilterConfig, FilterVerdict, RejectReason};
use crate::sh;

pub const TILE: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Projection {
    Affine,
    Conic,
}

impl Projection {
    pub fn as_str(&self) -> &'static str {
        match self {
            Projection::Affine => "affine",
            Projection::Conic => "conic",
        }
    }
}

impl std::str::FromStr for Projection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "affine" => Ok(Projection::Affine),
            "conic" => Ok(Projection::Conic),
            other => Err(Error::InvalidParameter(format!("unknown projection mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    /// Isotropic screen-space dilation added to Σ²ᴰ, px².
    pub dilation_s: f64,
    /// Contributions with α·G below this are skipped.
    pub alpha_cutoff: f64,
    /// A pixel stops blending once transmittance drops below this.
    pub transmittance_floor: f64,
    pub sh_degree: usize,
    pub background: Rgb,
    /// Half-width of the per-splat evaluation box in standard deviations of
    /// the dilated footprint.
    pub support_sigma: f64,
    pub filter: FilterConfig,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            dilation_s: 0.3,
            alpha_cutoff: 1.0 / 255.0,
            transmittance_floor: 1e-4,
            sh_degree: 0,
            background: Rgb::zeros(),
            support_sigma: 3.0,
            filter: FilterConfig::default(),
        }
    }
}

impl RenderOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.dilation_s >= 0.0
            && (0.0..1.0).contains(&self.alpha_cutoff)
            && self.transmittance_floor > 0.0
            && self.transmittance_floor < 1.0
            && self.sh_degree <= sh::MAX_DEGREE
            && self.background.iter().all(|c| c.is_finite())
            && self.support_sigma > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid render options {self:?}")))
        }
    }
}

/// exp(−½ dᵀ (Σ + sI)⁻¹ d) for a covariance Σ and offset d.
pub fn dilated_weight(cov: &Matrix2<f64>, offset: &Vector2<f64>, s: f64) -> f64 {
    let dilated = cov + Matrix2::identity() * s;
    match dilated.try_inverse() {
        Some(k) => (-0.5 * offset.dot(&(k * offset))).exp(),
        None => 0.0,
    }
}

/// Gaussian weight of a splat at pixel position `x` with dilation `s`.
pub fn gaussian_weight(splat: &Splat2D, x: &Vector2<f64>, s: f64) -> f64 {
    match splat.covariance() {
        Some(cov) => dilated_weight(&cov, &(x - splat.center), s),
        None => 0.0,
    }
}

/// Stable ascending order by depth, ties broken by source index.
pub fn depth_sort(splats: &[Splat2D]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..splats.len()).collect();
    order.sort_by(|&a, &b| {
        splats[a]
            .depth
            .total_cmp(&splats[b].depth)
            .then(splats[a].source_index.cmp(&splats[b].source_index))
    });
    order
}

/// A splat ready for blending.
#[derive(Debug, Clone)]
pub(crate) struct PreparedSplat {
    pub index: usize,
    pub splat: Splat2D,
    /// (Σ²ᴰ + sI)⁻¹ as (xx, xy, yy).
    pub conic: Vector3<f64>,
    pub color: Rgb,
    /// Which color channels were clamped at zero.
    pub clamped: [bool; 3],
    pub view_dir: Vector3<f64>,
    pub view_dist: f64,
    pub opacity: f64,
    /// Inclusive pixel ranges [x0, x1] × [y0, y1]; empty if x0 > x1.
    pub bbox: [i64; 4],
}

impl PreparedSplat {
    #[inline]
    fn contains(&self, px: i64, py: i64) -> bool {
        px >= self.bbox[0] && px <= self.bbox[1] && py >= self.bbox[2] && py <= self.bbox[3]
    }
}

pub(crate) struct Prepared {
    /// In blending order.
    pub splats: Vec<PreparedSplat>,
    pub verdicts: Vec<FilterVerdict>,
    /// Per tile, indices into `splats` in blending order.
    pub bins: Vec<Vec<u32>>,
    pub tiles_x: u32,
}

/// Projects one screened Gaussian with the chosen projection.
pub fn project(screened: &prefilter::Screened, cam: &Camera, projection: Projection) -> Result<Splat2D> {
    match projection {
        Projection::Conic => screened.conic.ok_or(Error::DegenerateSplat),
        Projection::Affine => affine::project_affine(&screened.sigma_c, &screened.p_c, cam),
    }
}

fn prepare_one(
    index: usize,
    g: &Gaussian3D,
    cam: &Camera,
    opts: &RenderOptions,
    projection: Projection,
) -> Result<(FilterVerdict, Option<PreparedSplat>)> {
    let screened = prefilter::screen(g, cam, &opts.filter)?;
    if !screened.verdict.keep() {
        return Ok((screened.verdict, None));
    }
    let mut splat = match project(&screened, cam, projection) {
        Ok(s) => s,
        Err(Error::DegenerateSplat) | Err(Error::BehindCamera { .. }) => {
            return Ok((FilterVerdict::Reject(RejectReason::Degenerate), None))
        }
        Err(e) => return Err(e),
    };
    splat.source_index = index;
    let Some(cov) = spd2_inverse(&splat.inv_cov) else {
        return Ok((FilterVerdict::Reject(RejectReason::Degenerate), None));
    };
    let dilated = cov + Matrix2::identity() * opts.dilation_s;
    let Some(k) = spd2_inverse(&dilated) else {
        return Ok((FilterVerdict::Reject(RejectReason::Degenerate), None));
    };

    let offset = g.position - cam.center();
    let view_dist = offset.norm();
    let view_dir = if view_dist > 0.0 { offset / view_dist } else { Vector3::z() };
    let raw = sh::eval_sh_unclamped(&g.sh_coeffs, &view_dir, opts.sh_degree)?;
    let clamped = [raw.x <= 0.0, raw.y <= 0.0, raw.z <= 0.0];
    let color = raw.map(|c| c.max(0.0));

    let ex = opts.support_sigma * dilated[(0, 0)].sqrt();
    let ey = opts.support_sigma * dilated[(1, 1)].sqrt();
    let c = splat.center;
    let w = cam.width as i64;
    let h = cam.height as i64;
    let x0 = ((c.x - ex - 0.5).ceil() as i64).max(0);
    let x1 = ((c.x + ex - 0.5).floor() as i64).min(w - 1);
    let y0 = ((c.y - ey - 0.5).ceil() as i64).max(0);
    let y1 = ((c.y + ey - 0.5).floor() as i64).min(h - 1);

    Ok((
        screened.verdict,
        Some(PreparedSplat {
            index,
            splat,
            conic: Vector3::new(k[(0, 0)], k[(0, 1)], k[(1, 1)]),
            color,
            clamped,
            view_dir,
            view_dist,
            opacity: g.opacity(),
            bbox: [x0, x1, y0, y1],
        }),
    ))
}

pub(crate) fn prepare(scene: &[Gaussian3D], cam: &Camera, opts: &RenderOptions, projection: Projection) -> Result<Prepared> {
    opts.validate()?;
    let results: Vec<_> = scene
        .par_iter()
        .enumerate()
        .map(|(i, g)| prepare_one(i, g, cam, opts, projection))
        .collect::<Result<_>>()?;

    let mut verdicts = Vec::with_capacity(scene.len());
    let mut splats = Vec::new();
    for (verdict, prepared) in results {
        verdicts.push(verdict);
        if let Some(p) = prepared {
            if p.bbox[0] <= p.bbox[1] && p.bbox[2] <= p.bbox[3] {
                splats.push(p);
            }
        }
    }
    let keys: Vec<Splat2D> = splats.iter().map(|p| p.splat).collect();
    let order = depth_sort(&keys);
    let mut sorted: Vec<Option<PreparedSplat>> = splats.into_iter().map(Some).collect();
    let splats: Vec<PreparedSplat> = order.iter().map(|&i| sorted[i].take().unwrap()).collect();

    let tiles_x = cam.width.div_ceil(TILE);
    let tiles_y = cam.height.div_ceil(TILE);
    let mut bins = vec![Vec::new(); (tiles_x * tiles_y) as usize];
    for (slot, p) in splats.iter().enumerate() {
        let tx0 = p.bbox[0] as u32 / TILE;
        let tx1 = p.bbox[1] as u32 / TILE;
        let ty0 = p.bbox[2] as u32 / TILE;
        let ty1 = p.bbox[3] as u32 / TILE;
        for ty in ty0..=ty1 {
            for tx in tx0..=tx1 {
                bins[(ty * tiles_x + tx) as usize].push(slot as u32);
            }
        }
    }
    Ok(Prepared {
        splats,
        verdicts,
        bins,
        tiles_x,
    })
}

/// One blended contribution at a pixel.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Contribution {
    /// Position in the tile bin.
    pub pos: u32,
    pub slot: u32,
    pub weight: f64,
    pub alpha: f64,
    /// Transmittance before this contribution.
    pub transmittance: f64,
}

/// Front-to-back blending of one pixel. Returns the color and final
/// transmittance (before the background term).
#[inline]
pub(crate) fn blend_pixel(
    bin: &[u32],
    splats: &[PreparedSplat],
    px: i64,
    py: i64,
    opts: &RenderOptions,
    mut record: impl FnMut(Contribution),
) -> Result<(Rgb, f64)> {
    let x = px as f64 + 0.5;
    let y = py as f64 + 0.5;
    let mut color = Rgb::zeros();
    let mut t = 1.0;
    for (pos, &slot) in bin.iter().enumerate() {
        let p = &splats[slot as usize];
        if !p.contains(px, py) {
            continue;
        }
        let dx = x - p.splat.center.x;
        let dy = y - p.splat.center.y;
        let k = &p.conic;
        let power = -0.5 * (k.x * dx * dx + 2.0 * k.y * dx * dy + k.z * dy * dy);
        let weight = power.exp();
        let alpha = p.opacity * weight;
        if alpha < opts.alpha_cutoff {
            continue;
        }
        color += p.color * (t * alpha);
        if !color.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite { index: p.index });
        }
        record(Contribution {
            pos: pos as u32,
            slot,
            weight,
            alpha,
            transmittance: t,
        });
        t *= 1.0 - alpha;
        if t < opts.transmittance_floor {
            break;
        }
    }
    Ok((color + opts.background * t, t))
}

/// Pixel ranges of a tile.
#[inline]
pub(crate) fn tile_bounds(tile: usize, prepared: &Prepared, cam: &Camera) -> (i64, i64, i64, i64) {
    let tx = tile as u32 % prepared.tiles_x;
    let ty = tile as u32 / prepared.tiles_x;
    let x0 = (tx * TILE) as i64;
    let y0 = (ty * TILE) as i64;
    let x1 = ((tx + 1) * TILE).min(cam.width) as i64;
    let y1 = ((ty + 1) * TILE).min(cam.height) as i64;
    (x0, x1, y0, y1)
}

pub(crate) fn render_prepared(prepared: &Prepared, cam: &Camera, opts: &RenderOptions) -> Result<Image> {
    let tiles: Vec<Vec<(usize, Rgb)>> = (0..prepared.bins.len())
        .into_par_iter()
        .map(|tile| {
            let (x0, x1, y0, y1) = tile_bounds(tile, prepared, cam);
            let bin = &prepared.bins[tile];
            let mut out = Vec::with_capacity(((x1 - x0) * (y1 - y0)) as usize);
            for py in y0..y1 {
                for px in x0..x1 {
                    let (c, _) = blend_pixel(bin, &prepared.splats, px, py, opts, |_| {})?;
                    out.push(((py * cam.width as i64 + px) as usize, c));
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut image = Image::new(cam.width, cam.height, opts.background);
    for tile in tiles {
        for (i, c) in tile {
            image.pixels[i] = c;
        }
    }
    Ok(image)
}

/// Renders `scene` from `cam`. An empty scene yields the background.
pub fn render(scene: &[Gaussian3D], cam: &Camera, opts: &RenderOptions, projection: Projection) -> Result<Image> {
    let prepared = prepare(scene, cam, opts, projection)?;
    render_prepared(&prepared, cam, opts)
}

/// Prefilter verdict per Gaussian, in scene order, as used by `render`.
pub fn verdicts(scene: &[Gaussian3D], cam: &Camera, opts: &RenderOptions, projection: Projection) -> Result<Vec<FilterVerdict>> {
    Ok(prepare(scene, cam, opts, projection)?.verdicts)
}
