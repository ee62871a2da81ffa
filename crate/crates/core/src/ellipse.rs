//! Planar ellipses given as `(x − c)ᵀ F (x − c) = level` with F SPD.
//!
//! Used to compare projected footprints: boundary sampling, exact
//! point-to-boundary distance and a sampled symmetric Hausdorff distance.

use nalgebra::{Matrix2, Vector2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub center: Vector2<f64>,
    /// Semi-axis lengths, major first.
    pub semi_axes: Vector2<f64>,
    /// Unit direction of the major axis.
    pub major_dir: Vector2<f64>,
}

/// Eigen-decomposition of a symmetric 2×2 matrix: (eigenvalues ascending,
/// unit eigenvector of the smaller eigenvalue).
pub fn sym2_eigen(m: &Matrix2<f64>) -> (Vector2<f64>, Vector2<f64>) {
    let (a, b, c) = (m[(0, 0)], 0.5 * (m[(0, 1)] + m[(1, 0)]), m[(1, 1)]);
    let mean = 0.5 * (a + c);
    let half_diff = 0.5 * (a - c);
    let r = half_diff.hypot(b);
    let lo = mean - r;
    let hi = mean + r;
    // Eigenvector for `lo`: solve (m − lo I) v = 0 using the better row.
    let v = if r == 0.0 {
        Vector2::new(1.0, 0.0)
    } else if half_diff <= 0.0 {
        // a − lo = half_diff + r is small; use (b, lo − a) from row 1.
        Vector2::new(r - half_diff, -b)
    } else {
        Vector2::new(-b, r + half_diff)
    };
    (Vector2::new(lo, hi), v.normalize())
}

impl Ellipse {
    /// Ellipse `(x − center)ᵀ form (x − center) = level`.
    pub fn from_form(center: Vector2<f64>, form: &Matrix2<f64>, level: f64) -> Self {
        let (eig, v_small) = sym2_eigen(form);
        // Smallest form eigenvalue gives the major axis.
        let semi_axes = Vector2::new((level / eig[0]).sqrt(), (level / eig[1]).sqrt());
        Self {
            center,
            semi_axes,
            major_dir: v_small,
        }
    }

    fn minor_dir(&self) -> Vector2<f64> {
        Vector2::new(-self.major_dir.y, self.major_dir.x)
    }

    pub fn point_at(&self, angle: f64) -> Vector2<f64> {
        let (s, c) = angle.sin_cos();
        self.center
            + self.major_dir * (self.semi_axes[0] * c)
            + self.minor_dir() * (self.semi_axes[1] * s)
    }

    /// `k` points evenly spaced in the parametric angle.
    pub fn boundary_points(&self, k: usize) -> Vec<Vector2<f64>> {
        (0..k)
            .map(|i| self.point_at(std::f64::consts::TAU * i as f64 / k as f64))
            .collect()
    }

    /// Half-widths of the axis-aligned bounding box.
    pub fn half_extents(&self) -> Vector2<f64> {
        let (a, b) = (self.semi_axes[0], self.semi_axes[1]);
        let (u, v) = (self.major_dir, self.minor_dir());
        Vector2::new(
            ((a * u.x).powi(2) + (b * v.x).powi(2)).sqrt(),
            ((a * u.y).powi(2) + (b * v.y).powi(2)).sqrt(),
        )
    }

    /// Euclidean distance from `p` to the ellipse boundary.
    pub fn distance_to_boundary(&self, p: &Vector2<f64>) -> f64 {
        let d = p - self.center;
        let y0 = d.dot(&self.major_dir).abs();
        let y1 = d.dot(&self.minor_dir()).abs();
        distance_axis_aligned(self.semi_axes[0], self.semi_axes[1], y0, y1)
    }

    /// Symmetric Hausdorff distance between the two boundaries, with the
    /// supremum taken over `samples` points of each.
    pub fn hausdorff(&self, other: &Ellipse, samples: usize) -> f64 {
        let forward = self
            .boundary_points(samples)
            .iter()
            .map(|p| other.distance_to_boundary(p))
            .fold(0.0, f64::max);
        let backward = other
            .boundary_points(samples)
            .iter()
            .map(|p| self.distance_to_boundary(p))
            .fold(0.0, f64::max);
        forward.max(backward)
    }
}

/// Distance from (y0, y1), both ≥ 0, to the ellipse x²/e0² + y²/e1² = 1
/// with e0 ≥ e1 > 0. Root-finds the Lagrange parameter by bisection.
fn distance_axis_aligned(e0: f64, e1: f64, y0: f64, y1: f64) -> f64 {
    if y1 > 0.0 {
        if y0 > 0.0 {
            let z0 = y0 / e0;
            let z1 = y1 / e1;
            let g = z0 * z0 + z1 * z1 - 1.0;
            if g == 0.0 {
                return 0.0;
            }
            let r0 = (e0 / e1).powi(2);
            let sbar = bisect_root(r0, z0, z1, g);
            let x0 = r0 * y0 / (sbar + r0);
            let x1 = y1 / (sbar + 1.0);
            ((x0 - y0).powi(2) + (x1 - y1).powi(2)).sqrt()
        } else {
            (y1 - e1).abs()
        }
    } else {
        let numer0 = e0 * y0;
        let denom0 = e0 * e0 - e1 * e1;
        if numer0 < denom0 {
            let xde0 = numer0 / denom0;
            let x0 = e0 * xde0;
            let x1 = e1 * (1.0 - xde0 * xde0).max(0.0).sqrt();
            ((x0 - y0).powi(2) + x1 * x1).sqrt()
        } else {
            (y0 - e0).abs()
        }
    }
}

fn bisect_root(r0: f64, z0: f64, z1: f64, g: f64) -> f64 {
    let n0 = r0 * z0;
    let mut s0 = z1 - 1.0;
    let mut s1 = if g < 0.0 { 0.0 } else { (n0.hypot(z1)) - 1.0 };
    let mut s = 0.0;
    for _ in 0..1100 {
        s = 0.5 * (s0 + s1);
        if s == s0 || s == s1 {
            break;
        }
        let ratio0 = n0 / (s + r0);
        let ratio1 = z1 / (s + 1.0);
        let val = ratio0 * ratio0 + ratio1 * ratio1 - 1.0;
        if val > 0.0 {
            s0 = s;
        } else if val < 0.0 {
            s1 = s;
        } else {
            break;
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_axes_and_distance() {
        let e = Ellipse::from_form(Vector2::new(1.0, 2.0), &(Matrix2::identity() / 100.0), 9.0);
        assert!((e.semi_axes[0] - 30.0).abs() < 1e-12);
        assert!((e.semi_axes[1] - 30.0).abs() < 1e-12);
        assert!((e.distance_to_boundary(&Vector2::new(1.0, 2.0)) - 30.0).abs() < 1e-12);
        assert!((e.distance_to_boundary(&Vector2::new(41.0, 2.0)) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn concentric_circles_hausdorff_is_radius_gap() {
        let a = Ellipse::from_form(Vector2::zeros(), &(Matrix2::identity() / 100.0), 9.0);
        let b = Ellipse::from_form(Vector2::zeros(), &(Matrix2::identity() * 91.0 / 1e4), 9.0);
        let expected = 300.0 / 91f64.sqrt() - 30.0;
        assert!((a.hausdorff(&b, 64) - expected).abs() < 1e-9);
    }

    #[test]
    fn boundary_points_satisfy_form() {
        let form = Matrix2::new(0.05, 0.02, 0.02, 0.01);
        let c = Vector2::new(3.0, -4.0);
        let e = Ellipse::from_form(c, &form, 9.0);
        for p in e.boundary_points(37) {
            let d = p - c;
            assert!(((d.transpose() * form * d)[0] - 9.0).abs() < 1e-9);
            assert!(e.distance_to_boundary(&p) < 1e-9);
        }
    }

    #[test]
    fn distance_matches_dense_sampling() {
        let e = Ellipse::from_form(Vector2::new(0.5, 0.0), &Matrix2::new(0.2, 0.05, 0.05, 0.6), 1.0);
        let dense = e.boundary_points(200_000);
        for p in [Vector2::new(4.0, 1.0), Vector2::new(0.6, 0.1), Vector2::new(-1.0, -3.0)] {
            let brute = dense.iter().map(|q| (q - p).norm()).fold(f64::INFINITY, f64::min);
            assert!((e.distance_to_boundary(&p) - brute).abs() < 1e-6);
        }
    }

    #[test]
    fn extents_bound_boundary() {
        let e = Ellipse::from_form(Vector2::zeros(), &Matrix2::new(0.2, 0.05, 0.05, 0.6), 9.0);
        let ext = e.half_extents();
        let pts = e.boundary_points(100_000);
        let mx = pts.iter().map(|p| p.x.abs()).fold(0.0, f64::max);
        let my = pts.iter().map(|p| p.y.abs()).fold(0.0, f64::max);
        assert!((mx - ext.x).abs() < 1e-6 && (my - ext.y).abs() < 1e-6);
    }
}
