//! Reproducible synthetic scenes.

use nalgebra::{Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, UnitSphere};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::gaussian::Gaussian3D;
use crate::image::Rgb;
use crate::sh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SynthPreset {
    /// One white σ = 0.5 sphere at (0, 0, 5) seen by an identity camera,
    /// 200×200, f = 100. Ignores `n`.
    Sphere,
    /// Small spheres on a cubic grid with spacing 0.6.
    SphereGrid,
    /// Random anisotropic Gaussians inside [−0.8, 0.8]³.
    Random,
}

impl SynthPreset {
    pub fn as_str(&self) -> &'static str {
        match self {
            SynthPreset::Sphere => "sphere",
            SynthPreset::SphereGrid => "sphere-grid",
            SynthPreset::Random => "random",
        }
    }
}

impl std::str::FromStr for SynthPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sphere" => Ok(SynthPreset::Sphere),
            "sphere-grid" => Ok(SynthPreset::SphereGrid),
            "random" => Ok(SynthPreset::Random),
            other => Err(Error::InvalidParameter(format!("unknown preset `{other}`"))),
        }
    }
}

pub const RIG_SIZE: u32 = 128;
pub const RIG_FOCAL: f64 = 150.0;
pub const RIG_RADIUS: f64 = 4.0;

/// Three cameras on a circle of radius 4 around the origin, at azimuths
/// −20°, 0° and 20°, all looking at the origin.
pub fn orbit_cameras() -> Vec<Camera> {
    [-20.0f64, 0.0, 20.0]
        .iter()
        .enumerate()
        .map(|(i, deg)| {
            let a = deg.to_radians();
            let eye = Vector3::new(RIG_RADIUS * a.sin(), 0.0, -RIG_RADIUS * a.cos());
            Camera::look_at(i as u32, RIG_SIZE, RIG_SIZE, RIG_FOCAL, &eye, &Vector3::zeros(), &Vector3::new(0.0, -1.0, 0.0))
        })
        .collect::<Result<_>>()
        .expect("fixed rig is valid")
}

fn random_color(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let rgb = Rgb::new(rng.random_range(0.1..0.9), rng.random_range(0.1..0.9), rng.random_range(0.1..0.9));
    sh::rgb_to_dc(&rgb)
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Vector4<f64> {
    loop {
        let q = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        if q.norm() > 1e-3 {
            return q.normalize();
        }
    }
}

pub fn synth(preset: SynthPreset, n: usize, seed: u64) -> (Vec<Gaussian3D>, Vec<Camera>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match preset {
        SynthPreset::Sphere => {
            let mut g = Gaussian3D::new(Vector3::new(0.0, 0.0, 5.0));
            g.log_scales = Vector3::repeat(0.5f64.ln());
            g.opacity_logit = 12.0;
            g.sh_coeffs = vec![sh::rgb_to_dc(&Rgb::repeat(1.0))];
            let cam = Camera::identity(200, 200, 100.0, 100.0).expect("fixed camera is valid");
            (vec![g], vec![cam])
        }
        SynthPreset::SphereGrid => {
            let side = (1..).find(|k| k * k * k >= n).unwrap_or(1);
            let spacing = 0.6;
            let offset = 0.5 * spacing * (side as f64 - 1.0);
            let scene = (0..n)
                .map(|i| {
                    let (ix, iy, iz) = (i % side, (i / side) % side, i / (side * side));
                    let p = Vector3::new(ix as f64, iy as f64, iz as f64) * spacing - Vector3::repeat(offset);
                    let mut g = Gaussian3D::new(p);
                    g.log_scales = Vector3::repeat(0.12f64.ln());
                    g.opacity_logit = 2.0;
                    g.sh_coeffs = vec![random_color(&mut rng)];
                    g
                })
                .collect();
            (scene, orbit_cameras())
        }
        SynthPreset::Random => {
            let scene = (0..n)
                .map(|_| {
                    let p = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)) * 0.8;
                    let mut g = Gaussian3D::new(p);
                    g.rotation = random_rotation(&mut rng);
                    g.log_scales = Vector3::from_fn(|_, _| rng.random_range(0.06f64.ln()..0.2f64.ln()));
                    g.opacity_logit = rng.random_range(0.0..3.0);
                    g.sh_coeffs = vec![random_color(&mut rng)];
                    g
                })
                .collect();
            (scene, orbit_cameras())
        }
    }
}

/// Moves every position by `amount` in a uniformly random direction.
pub fn jitter_positions(scene: &[Gaussian3D], amount: f64, seed: u64) -> Vec<Gaussian3D> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    scene
        .iter()
        .map(|g| {
            let d: [f64; 3] = UnitSphere.sample(&mut rng);
            let mut out = g.clone();
            out.position += Vector3::from(d) * amount;
            out
        })
        .collect()
}
