use nalgebra::{Vector3, Vector4};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use conic_splat::io::{read_cameras, read_ply, write_cameras, write_ply, PLY_FLOATS_PER_VERTEX};
use conic_splat::synth::{orbit_cameras, synth, SynthPreset};
use conic_splat::{Camera, Gaussian3D};

fn random_cloud(n: usize, seed: u64) -> Vec<Gaussian3D> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut g = Gaussian3D::new(Vector3::from_fn(|_, _| rng.random_range(-50.0..50.0)));
            g.rotation = Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0));
            g.log_scales = Vector3::from_fn(|_, _| rng.random_range(-6.0..2.0));
            g.opacity_logit = rng.random_range(-8.0..8.0);
            let degree = rng.random_range(0..=3usize);
            g.sh_coeffs = (0..(degree + 1).pow(2)).map(|_| Vector3::from_fn(|_, _| rng.random_range(-2.0..2.0))).collect();
            g
        })
        .collect()
}

#[test]
fn ply_round_trip_is_bit_identical() {
    let cloud = random_cloud(1000, 1);
    let bytes = write_ply(&cloud).unwrap();
    let back = read_ply(&bytes).unwrap();
    assert_eq!(back.len(), cloud.len());
    assert_eq!(write_ply(&back).unwrap(), bytes);
    // Values survive at f32 precision, missing SH bands come back as zeros.
    for (a, b) in cloud.iter().zip(&back) {
        assert_eq!(b.position, a.position.map(|v| v as f32 as f64));
        assert_eq!(b.sh_coeffs.len(), 16);
        for (i, c) in b.sh_coeffs.iter().enumerate() {
            let want = a.sh_coeffs.get(i).map_or(Vector3::zeros(), |v| v.map(|x| x as f32 as f64));
            assert_eq!(*c, want);
        }
    }
}

#[test]
fn ply_body_size_matches_vertex_count() {
    let cloud = random_cloud(7, 2);
    let bytes = write_ply(&cloud).unwrap();
    let header_end = bytes.windows(11).position(|w| w == b"end_header\n").unwrap() + 11;
    assert_eq!(bytes.len() - header_end, 7 * PLY_FLOATS_PER_VERTEX * 4);
}

#[test]
fn synth_scene_survives_ply() {
    let (scene, _) = synth(SynthPreset::Random, 32, 5);
    let back = read_ply(&write_ply(&scene).unwrap()).unwrap();
    for (a, b) in scene.iter().zip(&back) {
        assert!((a.position - b.position).norm() < 1e-6);
        assert!((a.sh_coeffs[0] - b.sh_coeffs[0]).norm() < 1e-6);
    }
}

#[test]
fn camera_round_trip_is_exact() {
    let mut cams = orbit_cameras();
    cams.push(Camera::identity(640, 480, 512.25, 498.0).unwrap());
    let text = write_cameras(&cams);
    let back = read_cameras(&text).unwrap();
    assert_eq!(back, cams);
    assert_eq!(write_cameras(&back), text);
}

proptest! {
    #[test]
    fn ply_reader_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..512)) {
        let _ = read_ply(&bytes);
    }

    #[test]
    fn ply_reader_never_panics_on_truncation(cut in 0usize..2000) {
        let bytes = write_ply(&random_cloud(3, 3)).unwrap();
        let cut = cut.min(bytes.len());
        let result = read_ply(&bytes[..cut]);
        prop_assert_eq!(result.is_ok(), cut == bytes.len());
    }

    #[test]
    fn camera_reader_never_panics(text in "[0-9a-z .#\\-\\n]{0,300}") {
        let _ = read_cameras(&text);
    }
}
