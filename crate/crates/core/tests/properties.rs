use nalgebra::{Matrix2, Matrix3, SymmetricEigen, Vector2, Vector3, Vector4};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use conic_splat::affine::{self, Splat2D};
use conic_splat::camera::to_camera;
use conic_splat::conic;
use conic_splat::gaussian::{build_covariance, quaternion_mul, rotation_matrix};
use conic_splat::oracle;
use conic_splat::prefilter::{self, FilterConfig, RejectReason};
use conic_splat::raster::depth_sort;
use conic_splat::{render, Camera, FilterVerdict, Gaussian3D, Projection, RenderOptions, Rgb};

fn quaternion() -> impl Strategy<Value = Vector4<f64>> {
    prop::array::uniform4(-1.0..1.0f64)
        .prop_filter("non-zero", |q| q.iter().map(|v| v * v).sum::<f64>() > 1e-2)
        .prop_map(|q| Vector4::from(q).normalize())
}

fn log_scales(lo: f64, hi: f64) -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(lo..hi).prop_map(Vector3::from)
}

fn sorted_eigenvalues(m: &Matrix3<f64>) -> [f64; 3] {
    let mut e: Vec<f64> = SymmetricEigen::new(*m).eigenvalues.iter().copied().collect();
    e.sort_by(f64::total_cmp);
    [e[0], e[1], e[2]]
}

fn camera() -> Camera {
    Camera::identity(320, 240, 260.0, 260.0).unwrap()
}

fn gaussian(p: [f64; 3], q: Vector4<f64>, s: Vector3<f64>) -> Gaussian3D {
    let mut g = Gaussian3D::new(Vector3::from(p));
    g.rotation = q;
    g.log_scales = s;
    g
}

/// Any position in front of the camera, including ones the filter rejects.
fn position() -> impl Strategy<Value = [f64; 3]> {
    (-6.0..6.0f64, -5.0..5.0f64, -2.0..15.0f64).prop_map(|(x, y, z)| [x, y, z])
}

fn look_at_camera() -> impl Strategy<Value = Camera> {
    (prop::array::uniform3(-5.0..5.0f64), prop::array::uniform3(-1.0..1.0f64)).prop_filter_map("valid rig", |(eye, target)| {
        let eye = Vector3::from(eye);
        let target = Vector3::from(target);
        if (eye - target).norm() < 1.0 {
            return None;
        }
        Camera::look_at(0, 160, 120, 140.0, &eye, &target, &Vector3::new(0.0, -1.0, 0.0)).ok()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn covariance_is_spd_with_scale_eigenvalues(q in quaternion(), s in log_scales(-4.0, 2.0)) {
        let sigma = build_covariance(&q, &s).unwrap();
        prop_assert!((sigma - sigma.transpose()).abs().max() <= 1e-15 * sigma.abs().max());
        let got = sorted_eigenvalues(&sigma);
        let mut want: Vec<f64> = s.iter().map(|l| (2.0 * l).exp()).collect();
        want.sort_by(f64::total_cmp);
        for (g, w) in got.iter().zip(&want) {
            prop_assert!(*g > 0.0);
            prop_assert!((g - w).abs() <= 1e-9 * want[2], "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn covariance_conjugates_under_rotation(q in quaternion(), r in quaternion(), s in log_scales(-3.0, 1.0)) {
        let sigma = build_covariance(&q, &s).unwrap();
        let rotated = build_covariance(&quaternion_mul(&r, &q), &s).unwrap();
        let rr = rotation_matrix(&r);
        let expected = rr * sigma * rr.transpose();
        prop_assert!((rotated - expected).abs().max() <= 1e-12 * sigma.abs().max());
    }

    #[test]
    fn to_camera_preserves_eigenvalues(q in quaternion(), s in log_scales(-3.0, 1.0), cam in look_at_camera()) {
        let sigma = build_covariance(&q, &s).unwrap();
        let (sigma_c, _) = to_camera(&sigma, &Vector3::zeros(), &cam);
        let (a, b) = (sorted_eigenvalues(&sigma), sorted_eigenvalues(&sigma_c));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-10 * a[2]);
        }
    }

    #[test]
    fn precision_inverts_covariance(q in quaternion(), s in log_scales(-3.0, 1.0), p in position()) {
        let sigma = build_covariance(&q, &s).unwrap();
        let form = conic::ellipsoid_form(&sigma, &Vector3::from(p)).unwrap();
        let prod = form.a * sigma;
        prop_assert!((prod - Matrix3::identity()).abs().max() <= 1e-9, "{prod}");
    }

    #[test]
    fn survivors_are_tangent_at_64_points(p in position(), q in quaternion(), s in log_scales(-3.0, 0.5)) {
        let cam = camera();
        let g = gaussian(p, q, s);
        let screened = prefilter::screen(&g, &cam, &FilterConfig::default()).unwrap();
        prop_assume!(screened.verdict.keep());
        let splat = screened.conic.unwrap();
        let r = oracle::silhouette_tangency(&splat, 64, &cam.intrinsics(), &screened.sigma_c, &screened.p_c).unwrap();
        prop_assert!(r <= 1e-7, "relative residual {r}");
    }

    #[test]
    fn kept_splats_have_spd_inverse_covariance(p in position(), q in quaternion(), s in log_scales(-3.0, 0.5)) {
        let cam = camera();
        let screened = prefilter::screen(&gaussian(p, q, s), &cam, &FilterConfig::default()).unwrap();
        prop_assume!(screened.verdict.keep());
        let splats = [
            screened.conic.unwrap(),
            affine::project_affine(&screened.sigma_c, &screened.p_c, &cam).unwrap(),
        ];
        for splat in splats {
            let m = splat.inv_cov;
            prop_assert!(m[(0, 1)] == m[(1, 0)]);
            prop_assert!(m[(0, 0)] > 0.0 && m.determinant() > 0.0, "{m}");
        }
    }

    #[test]
    fn quarter_turn_about_the_axis_is_equivariant(p in position(), q in quaternion(), s in log_scales(-3.0, 0.0)) {
        // Square image, equal focal lengths: a 90° turn of camera space about
        // z turns the image about the principal point.
        let cam = Camera::identity(256, 256, 200.0, 200.0).unwrap();
        let sigma = build_covariance(&q, &s).unwrap();
        let pc = Vector3::from(p);
        let turn = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        let turn2 = Matrix2::new(0.0, -1.0, 1.0, 0.0);
        let c = Vector2::new(128.0, 128.0);
        let project = |sig: &Matrix3<f64>, pt: &Vector3<f64>| conic::project_conic(sig, pt, &cam);
        let (Ok(a), Ok(b)) = (project(&sigma, &pc), project(&(turn * sigma * turn.transpose()), &(turn * pc))) else {
            return Ok(());
        };
        let scale = a.inv_cov.abs().max();
        prop_assert!(((b.center - c) - turn2 * (a.center - c)).norm() <= 1e-9 * (1.0 + (a.center - c).norm()));
        prop_assert!((b.inv_cov - turn2 * a.inv_cov * turn2.transpose()).abs().max() <= 1e-9 * scale);
    }

    #[test]
    fn shrinking_converges_to_affine(p in position(), q in quaternion(), s in log_scales(-3.0, -0.5)) {
        let cam = camera();
        let screened = prefilter::screen(&gaussian(p, q, s), &cam, &FilterConfig::default()).unwrap();
        prop_assume!(screened.verdict.keep());
        let mut sigma_c = screened.sigma_c;
        let mut last = f64::INFINITY;
        for _ in 0..4 {
            let c = conic::project_conic(&sigma_c, &screened.p_c, &cam).unwrap().silhouette();
            let a = affine::project_affine(&sigma_c, &screened.p_c, &cam).unwrap().silhouette();
            let h = c.hausdorff(&a, 128);
            prop_assert!(h < last, "{h} after {last}");
            last = h;
            sigma_c *= 0.25;
        }
    }

    #[test]
    fn on_axis_spheres_share_centers(sigma in 0.01..0.5f64, z in 2.0..20.0f64) {
        let cam = camera();
        let sigma_c = Matrix3::identity() * (sigma * sigma);
        let pc = Vector3::new(0.0, 0.0, z);
        let want = Vector2::new(160.0, 120.0);
        prop_assert_eq!(conic::project_conic(&sigma_c, &pc, &cam).unwrap().center, want);
        prop_assert_eq!(affine::project_affine(&sigma_c, &pc, &cam).unwrap().center, want);
    }

    #[test]
    fn prefilter_is_sound(p in position(), q in quaternion(), s in log_scales(-3.0, 1.0), seed in any::<u64>()) {
        let cam = camera();
        let cfg = FilterConfig::default();
        let g = gaussian(p, q, s);
        let screened = prefilter::screen(&g, &cam, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sampled_min = oracle::min_depth_by_sampling(&screened.sigma_c, &screened.p_c, 2000, &mut rng).unwrap();
        let form = conic::ellipsoid_form(&screened.sigma_c, &screened.p_c).unwrap();
        match screened.verdict {
            FilterVerdict::Keep => {
                prop_assert!(form.origin_value() > 9.0);
                prop_assert!(sampled_min > 0.0);
            }
            FilterVerdict::Reject(RejectReason::CameraInside) => prop_assert!(form.origin_value() <= 9.0),
            FilterVerdict::Reject(RejectReason::BehindPlane) => {
                prop_assert!(form.origin_value() > 9.0);
                prop_assert!(screened.z_min <= cfg.near_plane);
                prop_assert!(screened.z_min <= sampled_min + 1e-12);
            }
            FilterVerdict::Reject(RejectReason::OutOfFrustum) => {
                // No surface point may land inside the image grown by the margin.
                let chol = screened.sigma_c.cholesky().unwrap();
                let k = cam.intrinsics();
                for i in 0..500 {
                    let t = i as f64 * 2.399963;
                    let zc = 1.0 - 2.0 * (i as f64 + 0.5) / 500.0;
                    let r = (1.0 - zc * zc).sqrt();
                    let x = screened.p_c + chol.l() * Vector3::new(r * t.cos(), r * t.sin(), zc) * 3.0;
                    let px = k.to_pixel(&Vector2::new(x.x / x.z, x.y / x.z));
                    let m = cfg.margin_px;
                    prop_assert!(px.x < -m || px.x > 320.0 + m || px.y < -m || px.y > 240.0 + m, "{px}");
                }
            }
            FilterVerdict::Reject(RejectReason::Degenerate) => {}
        }
    }

    #[test]
    fn renders_stay_in_unit_range_and_transmittance_only_drops(
        seed in any::<u64>(),
        extra_z in 1.5..3.0f64,
    ) {
        let (scene, cams) = conic_splat::synth::synth(conic_splat::synth::SynthPreset::Random, 12, seed);
        let cam = &cams[1];
        let opts = RenderOptions::default();
        let white = RenderOptions { background: Rgb::repeat(1.0), ..opts };
        for projection in [Projection::Affine, Projection::Conic] {
            let black_img = render(&scene, cam, &opts, projection).unwrap();
            let white_img = render(&scene, cam, &white, projection).unwrap();
            // The background difference is the final transmittance.
            let t: Vec<f64> = black_img.pixels.iter().zip(&white_img.pixels).map(|(b, w)| (w - b).x).collect();
            for (b, w) in black_img.pixels.iter().zip(&white_img.pixels) {
                prop_assert!(b.iter().chain(w.iter()).all(|v| (0.0..=1.0 + 1e-12).contains(v)));
            }
            prop_assert!(t.iter().all(|v| (-1e-12..=1.0 + 1e-12).contains(v)));

            // A Gaussian in front of everything can only lower transmittance.
            let mut front = scene.clone();
            let mut g = Gaussian3D::new(cam.center() + (Vector3::zeros() - cam.center()).normalize() * extra_z);
            g.log_scales = Vector3::repeat(-1.5);
            front.push(g);
            let b2 = render(&front, cam, &opts, projection).unwrap();
            let w2 = render(&front, cam, &white, projection).unwrap();
            for (i, (b, w)) in b2.pixels.iter().zip(&w2.pixels).enumerate() {
                prop_assert!((w - b).x <= t[i] + 1e-12);
            }
        }
    }

    #[test]
    fn tiny_gaussians_render_alike(x in -0.3..0.3f64, y in -0.3..0.3f64, z in 3.0..8.0f64, q in quaternion(), s in log_scales(-6.0, -5.0)) {
        let cam = Camera::identity(64, 64, 80.0, 80.0).unwrap();
        let mut g = gaussian([x * z, y * z, z], q, s);
        g.opacity_logit = 3.0;
        let opts = RenderOptions::default();
        let a = render(std::slice::from_ref(&g), &cam, &opts, Projection::Affine).unwrap();
        let c = render(&[g], &cam, &opts, Projection::Conic).unwrap();
        let worst = a.pixels.iter().zip(&c.pixels).map(|(p, q)| (p - q).abs().max()).fold(0.0, f64::max);
        prop_assert!(worst <= 1.0 / 255.0, "{worst}");
    }
}

#[test]
fn depth_sort_matches_an_oracle_sort() {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let splats: Vec<Splat2D> = (0..10_000)
        .map(|i| Splat2D {
            center: Vector2::zeros(),
            inv_cov: Matrix2::identity(),
            // Coarse depths so that ties are common.
            depth: (rng.random_range(0.0..200.0f64)).floor() * 0.05,
            source_index: 9_999 - i,
        })
        .collect();
    let got = depth_sort(&splats);

    // Insertion into buckets keyed by the exact bit pattern, then by index.
    let mut keyed: Vec<(u64, usize, usize)> = splats.iter().enumerate().map(|(i, s)| (s.depth.to_bits(), s.source_index, i)).collect();
    keyed.sort();
    let want: Vec<usize> = keyed.into_iter().map(|(_, _, i)| i).collect();
    assert_eq!(got, want);
}
