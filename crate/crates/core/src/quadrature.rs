//! Gauss-Legendre rules and Gaussian-weighted integrals over unions of
//! intervals.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::gaussian::norm_pdf;

/// Cells closer to the origin of a time integral than this many widths are
/// integrated in `√(s - origin)`.
const NEAR_CELLS: f64 = 2.0;

/// Nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Golub-Welsch free construction by Newton iteration on `P_n`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let mut p1 = 1.0;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
                }
                dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
                let dz = p1 / dp;
                z -= dz;
                if dz.abs() < 1e-15 {
                    break;
                }
            }
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    /// ∫_a^b f(x) dx.
    #[inline]
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }

    /// `∫_a^b f` on a cell of a time integral starting at `origin`: through
    /// `s = origin + u²` when the cell is near `origin`, where the integrand
    /// behaves like `√(s - origin)`, and directly otherwise. Far cells keep
    /// fixed abscissas, so values tabulated per time can be reused.
    pub fn integrate_cell(&self, origin: f64, a: f64, b: f64, f: impl FnMut(f64) -> f64) -> f64 {
        if a - origin < NEAR_CELLS * (b - a) {
            self.integrate_root(origin, a, b, f)
        } else {
            self.integrate(a, b, f)
        }
    }

    /// Weights and abscissas of [`Self::integrate_cell`].
    pub fn cell_points(&self, origin: f64, a: f64, b: f64) -> Vec<(f64, f64)> {
        if a - origin < NEAR_CELLS * (b - a) {
            self.root_points(origin, a, b).collect()
        } else {
            let (half, mid) = (0.5 * (b - a), 0.5 * (a + b));
            self.nodes
                .iter()
                .zip(&self.weights)
                .map(|(x, w)| (half * w, mid + half * x))
                .collect()
        }
    }

    /// `∫_a^b f` through `s = origin + u²`, for integrands smooth in
    /// `√(s - origin)`; `origin ≤ a`.
    pub fn integrate_root(&self, origin: f64, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let (ua, ub) = ((a - origin).max(0.0).sqrt(), (b - origin).max(0.0).sqrt());
        self.integrate(ua, ub, |u| 2.0 * u * f(origin + u * u))
    }

    /// Weights and abscissas of [`Self::integrate_root`].
    pub fn root_points(&self, origin: f64, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let (ua, ub) = ((a - origin).max(0.0).sqrt(), (b - origin).max(0.0).sqrt());
        let (half, mid) = (0.5 * (ub - ua), 0.5 * (ua + ub));
        self.nodes.iter().zip(&self.weights).map(move |(x, w)| {
            let u = mid + half * x;
            (half * w * 2.0 * u, origin + u * u)
        })
    }
}

pub fn gl8() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(8))
}

pub fn gl16() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(16))
}

pub fn gl32() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(32))
}

/// Cached `n`-point rule for `n` in `1..=8`.
pub fn time_rule(n: usize) -> &'static GaussLegendre {
    static RULES: OnceLock<Vec<GaussLegendre>> = OnceLock::new();
    &RULES.get_or_init(|| (1..=8).map(GaussLegendre::new).collect())[n - 1]
}

/// Standardised half-width beyond which Gaussian mass is ignored (< 1e-19).
pub const GAUSS_CUTOFF: f64 = 9.0;

/// `∫ φ_{mean,sd}(z) g(z) dz` over the union of `pieces` (each `(lo, hi)` in
/// the z variable, infinite ends allowed).
///
/// `scale` is the length over which `g` varies appreciably; the composite
/// rule keeps panels shorter than a fraction of it.
pub fn gaussian_expectation(
    mean: f64,
    sd: f64,
    pieces: &[(f64, f64)],
    scale: f64,
    mut g: impl FnMut(f64) -> f64,
) -> f64 {
    let rule = gl8();
    let max_panel = (0.6 * scale / sd).clamp(0.05, 1.5);
    let mut acc = 0.0;
    for &(lo, hi) in pieces {
        let a = ((lo - mean) / sd).max(-GAUSS_CUTOFF);
        let b = ((hi - mean) / sd).min(GAUSS_CUTOFF);
        if !(b > a) {
            continue;
        }
        let panels = ((b - a) / max_panel).ceil().max(1.0) as usize;
        let h = (b - a) / panels as f64;
        for k in 0..panels {
            let pa = a + k as f64 * h;
            acc += rule.integrate(pa, pa + h, |xi| norm_pdf(xi) * g(mean + sd * xi));
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rules_integrate_polynomials_exactly() {
        for n in [1, 2, 5, 8, 16, 32] {
            let rule = GaussLegendre::new(n);
            let wsum: f64 = rule.weights.iter().sum();
            assert!((wsum - 2.0).abs() < 1e-13, "n={n}");
            let deg = (2 * n - 1) as i32;
            let v = rule.integrate(0.0, 1.0, |x| x.powi(deg));
            assert!((v - 1.0 / (deg as f64 + 1.0)).abs() < 1e-13, "n={n}");
        }
    }

    #[test]
    fn gaussian_expectation_of_constant_over_halflines() {
        let full = gaussian_expectation(0.3, 0.7, &[(f64::NEG_INFINITY, f64::INFINITY)], 1.0, |_| 1.0);
        assert!((full - 1.0).abs() < 1e-13);
        let lower = gaussian_expectation(0.3, 0.7, &[(f64::NEG_INFINITY, 0.3)], 1.0, |_| 1.0);
        assert!((lower - 0.5).abs() < 1e-13);
        // E[Z^2] for Z ~ N(0, 1)
        let m2 = gaussian_expectation(0.0, 1.0, &[(f64::NEG_INFINITY, f64::INFINITY)], 1.0, |z| z * z);
        assert!((m2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn root_rule_is_exact_for_square_root_kernels() {
        // 2u·√u² = 2u² is integrated exactly by two points
        let rule = time_rule(2);
        let exact = |o: f64, a: f64, b: f64| 2.0 / 3.0 * ((b - o).powf(1.5) - (a - o).powf(1.5));
        let v = rule.integrate_root(0.1, 0.1, 0.13, |s| (s - 0.1).sqrt());
        assert!((v - exact(0.1, 0.1, 0.13)).abs() < 1e-15);
        let w: f64 = rule.cell_points(0.1, 0.1, 0.13).iter().map(|(w, s)| w * (s - 0.1).sqrt()).sum();
        assert!((w - v).abs() < 1e-16);
    }

    #[test]
    fn far_cells_keep_fixed_abscissas() {
        let rule = time_rule(2);
        let a = rule.cell_points(0.0, 0.5, 0.51);
        let b = rule.cell_points(0.3, 0.5, 0.51);
        assert_eq!(a, b);
        // a near cell moves with the origin
        assert_ne!(rule.cell_points(0.49, 0.5, 0.51), a);
    }

    proptest::proptest! {
        #[test]
        fn cell_rule_integrates_smooth_kernels(o in 0.0..1.0f64, gap in 0.0..0.2f64, w in 1e-4..0.05f64) {
            let (a, b) = (o + gap, o + gap + w);
            let f = |s: f64| (s - o).sqrt() * (-0.3 * s).exp() + 0.1;
            let rule = time_rule(2);
            let v = rule.integrate_cell(o, a, b, f);
            let reference: f64 = (0..64)
                .map(|k| {
                    let (lo, hi) = (a + w * k as f64 / 64.0, a + w * (k + 1) as f64 / 64.0);
                    gl8().integrate_root(o, lo, hi, f)
                })
                .sum();
            proptest::prop_assert!((v - reference).abs() <= 2e-3 * w * w.sqrt() + 1e-14, "{v} vs {reference}");
            let summed: f64 = rule.cell_points(o, a, b).iter().map(|(wt, s)| wt * f(*s)).sum();
            proptest::prop_assert!((summed - v).abs() <= 1e-15);
        }
    }
}
