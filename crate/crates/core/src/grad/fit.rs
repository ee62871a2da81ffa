//! Fixed-count scene fitting with Adam.

use nalgebra::Vector3;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::backward::{backward_with_image, flatten_params, unflatten_params, ParamGradients};
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::gaussian::Gaussian3D;
use crate::image::{psnr_from_mse, Image};
use crate::raster::{Projection, RenderOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningRates {
    /// Multiplied by the scene scale.
    pub position: f64,
    pub log_scales: f64,
    pub rotation: f64,
    pub opacity: f64,
    pub sh: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            position: 2e-4,
            log_scales: 5e-3,
            rotation: 1e-3,
            opacity: 5e-2,
            sh: 2.5e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub iterations: usize,
    pub learning_rates: LearningRates,
    pub loss_lambda: f64,
    /// Picks the views used at each step when `views_per_step` is set.
    pub seed: u64,
    /// Views per step; `None` uses every view at every step.
    pub views_per_step: Option<usize>,
    /// Overrides the scene scale derived from the camera spread.
    pub scene_scale: Option<f64>,
    pub projection: Projection,
    pub render: RenderOptions,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            learning_rates: LearningRates::default(),
            loss_lambda: 0.2,
            seed: 0,
            views_per_step: None,
            scene_scale: None,
            projection: Projection::Conic,
            render: RenderOptions::default(),
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-15,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::InvalidParameter("iterations must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.loss_lambda) {
            return Err(Error::InvalidParameter(format!("loss_lambda {} outside [0, 1]", self.loss_lambda)));
        }
        if self.views_per_step == Some(0) {
            return Err(Error::InvalidParameter("views_per_step must be positive".into()));
        }
        self.render.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitRecord {
    pub iteration: usize,
    /// Mean loss over the views of this step, before the update.
    pub loss: f64,
    /// PSNR of the same renders, in dB.
    pub psnr: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub scene: Vec<Gaussian3D>,
    pub history: Vec<FitRecord>,
}

/// 1.1 × the largest distance of a camera center from their centroid,
/// at least 1.
pub fn scene_scale(cameras: &[Camera]) -> f64 {
    if cameras.is_empty() {
        return 1.0;
    }
    let centers: Vec<Vector3<f64>> = cameras.iter().map(Camera::center).collect();
    let mean = centers.iter().sum::<Vector3<f64>>() / centers.len() as f64;
    let radius = centers.iter().map(|c| (c - mean).norm()).fold(0.0, f64::max);
    (1.1 * radius).max(1.0)
}

fn lr_vector(g: &Gaussian3D, lr: &LearningRates, scale: f64) -> Vec<f64> {
    let mut v = vec![lr.position * scale; 3];
    v.extend([lr.rotation; 4]);
    v.extend([lr.log_scales; 3]);
    v.push(lr.opacity);
    v.extend(std::iter::repeat_n(lr.sh, 3 * g.sh_coeffs.len()));
    v
}

pub fn fit(scene0: &[Gaussian3D], cameras: &[Camera], refs: &[Image], cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    if cameras.is_empty() || cameras.len() != refs.len() {
        return Err(Error::InvalidParameter(format!(
            "need matching cameras and references, got {} and {}",
            cameras.len(),
            refs.len()
        )));
    }
    let scale = cfg.scene_scale.unwrap_or_else(|| scene_scale(cameras));
    let mut params: Vec<Vec<f64>> = scene0.iter().map(flatten_params).collect();
    let lrs: Vec<Vec<f64>> = scene0.iter().map(|g| lr_vector(g, &cfg.learning_rates, scale)).collect();
    let mut m: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.len()]).collect();
    let mut v = m.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = Vec::with_capacity(cfg.iterations);
    let mut scene: Vec<Gaussian3D> = scene0.to_vec();

    for iteration in 0..cfg.iterations {
        let views: Vec<usize> = match cfg.views_per_step {
            Some(k) if k < cameras.len() => {
                let mut idx = sample(&mut rng, cameras.len(), k).into_vec();
                idx.sort_unstable();
                idx
            }
            _ => (0..cameras.len()).collect(),
        };
        let mut total = scene.iter().map(|g| ParamGradients::zeros(g.sh_coeffs.len())).collect::<Vec<_>>();
        let mut loss_sum = 0.0;
        let mut mse_sum = 0.0;
        for &view in &views {
            let (value, grads, image) = backward_with_image(&scene, &cameras[view], &refs[view], &cfg.render, cfg.projection, cfg.loss_lambda)?;
            loss_sum += value;
            mse_sum += image.mse(&refs[view])?;
            for (t, g) in total.iter_mut().zip(&grads) {
                t.accumulate(g);
            }
        }
        let n = views.len() as f64;
        let loss = loss_sum / n;
        if !loss.is_finite() {
            return Err(Error::Diverged { iteration, loss });
        }
        history.push(FitRecord {
            iteration,
            loss,
            psnr: psnr_from_mse(mse_sum / n),
        });

        let t = (iteration + 1) as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for (i, grad) in total.iter().enumerate() {
            let g: Vec<f64> = grad.to_vec();
            for k in 0..g.len() {
                let gk = g[k] / n;
                m[i][k] = cfg.beta1 * m[i][k] + (1.0 - cfg.beta1) * gk;
                v[i][k] = cfg.beta2 * v[i][k] + (1.0 - cfg.beta2) * gk * gk;
                let step = lrs[i][k] * (m[i][k] / bc1) / ((v[i][k] / bc2).sqrt() + cfg.epsilon);
                params[i][k] -= step;
            }
            scene[i] = unflatten_params(&scene[i], &params[i]);
        }
    }
    Ok(FitResult { scene, history })
}
