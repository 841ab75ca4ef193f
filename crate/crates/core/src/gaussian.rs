//! Normal and lognormal probability kernels for GBM.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::params::ModelParams;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
#[inline]
pub fn norm_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal CDF via the complementary error function.
#[inline]
pub fn norm_cdf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    (0.5 * libm::erfc(-z * FRAC_1_SQRT_2)).clamp(0.0, 1.0)
}

/// Input of [`lognormal_cdf`]: `P(X_s ≤ level | X_0 = start_price)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussQuery {
    pub start_price: f64,
    pub level: f64,
    pub elapsed: f64,
}

impl GaussQuery {
    pub fn new(start_price: f64, level: f64, elapsed: f64) -> Self {
        GaussQuery {
            start_price,
            level,
            elapsed,
        }
    }
}

/// Standardised log-distance `(ln(level/x) - (r - σ²/2)s) / (σ√s)`.
#[inline]
pub(crate) fn log_score(x: f64, level: f64, s: f64, params: &ModelParams) -> f64 {
    ((level / x).ln() - params.log_drift() * s) / (params.sigma * s.sqrt())
}

/// `P(X^x_s ≤ level)` under GBM. At `s = 0` the indicator convention applies
/// with value one half on `level == x`.
pub fn lognormal_cdf(q: GaussQuery, params: &ModelParams) -> f64 {
    let GaussQuery {
        start_price: x,
        level,
        elapsed: s,
    } = q;
    if !(level > 0.0) {
        return 0.0;
    }
    if level == f64::INFINITY {
        return 1.0;
    }
    if s <= 0.0 {
        return if level > x {
            1.0
        } else if level < x {
            0.0
        } else {
            0.5
        };
    }
    norm_cdf(log_score(x, level, s, params))
}

/// `P(Z1 ≤ h, Z2 ≤ k)` for a standard bivariate normal with correlation `rho`.
///
/// Drezner-Wesolowsky with Genz's Gauss-Legendre refinements; absolute error
/// below 1e-14 in double precision.
pub fn binorm_cdf(h: f64, k: f64, rho: f64) -> f64 {
    let rho = rho.clamp(-1.0, 1.0);
    if h == f64::NEG_INFINITY || k == f64::NEG_INFINITY {
        return 0.0;
    }
    if h == f64::INFINITY {
        return norm_cdf(k);
    }
    if k == f64::INFINITY {
        return norm_cdf(h);
    }
    if rho == 0.0 {
        return norm_cdf(h) * norm_cdf(k);
    }
    if rho == 1.0 {
        return norm_cdf(h.min(k));
    }
    if rho == -1.0 {
        return (norm_cdf(h) - norm_cdf(-k)).max(0.0);
    }
    if norm_cdf(h.min(k)) < TAIL_SWITCH {
        return lower_orthant_tail(h, k, rho);
    }
    let p = bvnu(-h, -k, rho).clamp(0.0, 1.0);
    if p < TAIL_SWITCH {
        lower_orthant_tail(h, k, rho)
    } else {
        p
    }
}

/// Below this value the Genz sum has lost relative accuracy and the orthant
/// probability is recomputed by [`lower_orthant_tail`].
const TAIL_SWITCH: f64 = 1e-5;

/// `ln Φ(z)`, accurate far into the lower tail.
pub fn log_norm_cdf(z: f64) -> f64 {
    if z > -30.0 {
        return norm_cdf(z).ln();
    }
    let q = 1.0 / (z * z);
    let series = 1.0 - q * (1.0 - q * (3.0 - q * (15.0 - q * (105.0 - 945.0 * q))));
    -0.5 * z * z - LN_SQRT_2PI - (-z).ln() + series.ln()
}

/// Inverse Mills ratio `φ(z) / Φ(z)`.
fn mills(z: f64) -> f64 {
    if z > -30.0 {
        return norm_pdf(z) / norm_cdf(z);
    }
    let q = 1.0 / (z * z);
    let series = 1.0 - q * (1.0 - q * (3.0 - q * (15.0 - q * (105.0 - 945.0 * q))));
    -z / series
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `P(Z₁ ≤ h, Z₂ ≤ k)` with small relative error when the probability is tiny.
///
/// Integrates `φ(u) Φ((k - ρu)/s)` over `u ≤ h` in the log domain. The
/// integrand is log-concave, so the panels are placed around its mode and cut
/// where it has fallen by `e^{-40}`.
pub fn lower_orthant_tail(h: f64, k: f64, rho: f64) -> f64 {
    let s = (1.0 - rho * rho).sqrt();
    let a = rho / s;
    let f = |u: f64| -0.5 * u * u - LN_SQRT_2PI + log_norm_cdf((k - rho * u) / s);
    let df = |u: f64| -u - a * mills((k - rho * u) / s);
    let d2f = |u: f64| {
        let z = (k - rho * u) / s;
        let m = mills(z);
        -1.0 - a * a * m * (z + m)
    };
    // mode on (-∞, h]
    let mode = if df(h) >= 0.0 {
        h
    } else {
        let mut lo = h - 1.0;
        let mut step = 1.0;
        while df(lo) < 0.0 {
            step *= 2.0;
            lo -= step;
        }
        let mut hi = h;
        let mut u = 0.5 * (lo + hi);
        for _ in 0..100 {
            let g = df(u);
            if g > 0.0 {
                lo = u;
            } else {
                hi = u;
            }
            let mut next = u - g / d2f(u);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - u).abs() < 1e-14 * (1.0 + u.abs()) || hi - lo < 1e-14 * (1.0 + u.abs()) {
                u = next;
                break;
            }
            u = next;
        }
        u
    };
    let fmax = f(mode);
    let width = 1.0 / (-d2f(mode)).sqrt();
    let drop = fmax - 40.0;
    let mut left = width;
    while f(mode - left) > drop {
        left *= 2.0;
    }
    let mut hi = mode;
    if mode < h {
        let mut right = width;
        while mode + right < h && f(mode + right) > drop {
            right *= 2.0;
        }
        hi = (mode + right).min(h);
    }
    let lo = mode - left;
    // panels widen geometrically away from the mode, where the integrand is
    // sharpest
    let rule = crate::quadrature::gl16();
    let mut acc = 0.0;
    let g = |u: f64| (f(u) - fmax).exp();
    for (end, sign) in [(lo, -1.0), (hi, 1.0)] {
        let mut a = mode;
        let mut w = width;
        while (end - a) * sign > 0.0 {
            let b = if (end - (a + sign * w)) * sign > 0.0 { a + sign * w } else { end };
            acc += rule.integrate(a.min(b), a.max(b), g);
            a = b;
            w *= 2.0;
        }
    }
    fmax.exp() * acc
}

const GL6_W: [f64; 3] = [0.171_324_492_379_170_5, 0.360_761_573_048_138_4, 0.467_913_934_572_690_4];
const GL6_X: [f64; 3] = [0.932_469_514_203_152_2, 0.661_209_386_466_264_7, 0.238_619_186_083_197];
const GL12_W: [f64; 6] = [
    0.047_175_336_386_511_83,
    0.106_939_325_995_318_4,
    0.160_078_328_543_346_2,
    0.203_167_426_723_065_9,
    0.233_492_536_538_354_8,
    0.249_147_045_813_402_8,
];
const GL12_X: [f64; 6] = [
    0.981_560_634_246_719_3,
    0.904_117_256_370_474_9,
    0.769_902_674_194_304_7,
    0.587_317_954_286_617_4,
    0.367_831_498_998_180_2,
    0.125_233_408_511_468_9,
];
const GL20_W: [f64; 10] = [
    0.017_614_007_139_152_12,
    0.040_601_429_800_386_94,
    0.062_672_048_334_109_06,
    0.083_276_741_576_704_75,
    0.101_930_119_817_240_4,
    0.118_194_531_961_518_4,
    0.131_688_638_449_176_6,
    0.142_096_109_318_382_1,
    0.149_172_986_472_603_7,
    0.152_753_387_130_725_9,
];
const GL20_X: [f64; 10] = [
    0.993_128_599_185_094_9,
    0.963_971_927_277_913_8,
    0.912_234_428_251_326,
    0.839_116_971_822_218_8,
    0.746_331_906_460_150_8,
    0.636_053_680_726_515,
    0.510_867_001_950_827_1,
    0.373_706_088_715_419_6,
    0.227_785_851_141_645_1,
    0.076_526_521_133_497_33,
];

/// Upper orthant `P(Z1 ≥ dh, Z2 ≥ dk)` (Genz, `bvnu`).
fn bvnu(dh: f64, dk: f64, r: f64) -> f64 {
    let tp = 2.0 * PI;
    let h = dh;
    let mut k = dk;
    let mut hk = h * k;
    let (w, x): (&[f64], &[f64]) = if r.abs() < 0.3 {
        (&GL6_W, &GL6_X)
    } else if r.abs() < 0.75 {
        (&GL12_W, &GL12_X)
    } else {
        (&GL20_W, &GL20_X)
    };
    if r.abs() < 0.925 {
        let hs = 0.5 * (h * h + k * k);
        let asr = 0.5 * r.asin();
        let mut bvn = 0.0;
        for (wi, xi) in w.iter().zip(x) {
            for sgn in [-1.0, 1.0] {
                let sn = (asr * (1.0 + sgn * xi)).sin();
                bvn += wi * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            }
        }
        return bvn * asr / tp + norm_cdf(-h) * norm_cdf(-k);
    }
    if r < 0.0 {
        k = -k;
        hk = -hk;
    }
    let mut bvn = 0.0;
    if r.abs() < 1.0 {
        let as_ = 1.0 - r * r;
        let mut a = as_.sqrt();
        let bs = (h - k) * (h - k);
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 80.0;
        let asr = -0.5 * (bs / as_ + hk);
        if asr > -100.0 {
            bvn = a * asr.exp() * (1.0 - c * (bs - as_) * (1.0 - d * bs) / 3.0 + c * d * as_ * as_);
        }
        if hk > -100.0 {
            let b = bs.sqrt();
            let sp = tp.sqrt() * norm_cdf(-b / a);
            bvn -= (-0.5 * hk).exp() * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
        }
        a *= 0.5;
        let mut sum = 0.0;
        for (wi, xi) in w.iter().zip(x) {
            for sgn in [-1.0, 1.0] {
                let xs = (a * (1.0 + sgn * xi)).powi(2);
                let asr = -0.5 * (bs / xs + hk);
                if asr > -100.0 {
                    let sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
                    let rs = (1.0 - xs).sqrt();
                    let ep = (-0.5 * hk * xs / (1.0 + rs).powi(2)).exp() / rs;
                    sum += wi * asr.exp() * (sp - ep);
                }
            }
        }
        bvn = (a * sum - bvn) / tp;
    }
    if r > 0.0 {
        bvn + norm_cdf(-h.max(k))
    } else if h >= k {
        -bvn
    } else {
        let l = if h < 0.0 {
            norm_cdf(k) - norm_cdf(h)
        } else {
            norm_cdf(-h) - norm_cdf(-k)
        };
        l - bvn
    }
}

/// Which side of `level1` the first observation must fall on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Below,
    Above,
}

/// `P_x(X_s ≤ level1, X_{s+lag} ≤ level2)` for [`Side::Below`], or
/// `P_x(X_s ≥ level1, X_{s+lag} ≤ level2)` for [`Side::Above`].
pub fn joint_two_time_prob(
    x: f64,
    side: Side,
    level1: f64,
    s: f64,
    level2: f64,
    lag: f64,
    params: &ModelParams,
) -> f64 {
    if !(level2 > 0.0) {
        return 0.0;
    }
    let tail = lognormal_cdf(GaussQuery::new(x, level2, s + lag), params);
    if s <= 0.0 {
        let ind = lognormal_cdf(GaussQuery::new(x, level1, 0.0), params);
        let first = match side {
            Side::Below => ind,
            Side::Above => 1.0 - ind,
        };
        return first * lognormal_cdf(GaussQuery::new(x, level2, lag), params);
    }
    if lag <= 0.0 {
        // both observations coincide
        let p1 = lognormal_cdf(GaussQuery::new(x, level1, s), params);
        return match side {
            Side::Below => p1.min(tail),
            Side::Above => (tail - p1).max(0.0),
        };
    }
    let rho = (s / (s + lag)).sqrt();
    let z2 = log_score(x, level2, s + lag, params);
    let below = if level1 <= 0.0 {
        0.0
    } else if level1 == f64::INFINITY {
        tail
    } else {
        binorm_cdf(log_score(x, level1, s, params), z2, rho)
    };
    let p = match side {
        Side::Below => below,
        Side::Above => {
            if level1 <= 0.0 {
                tail
            } else if level1 == f64::INFINITY {
                0.0
            } else {
                binorm_cdf(-log_score(x, level1, s, params), z2, -rho)
            }
        }
    };
    p.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::GaussLegendre;
    use proptest::prelude::*;

    fn quad_cdf(z: f64) -> f64 {
        // oracle: ∫_{-12}^{z} φ on fine composite Gauss-Legendre panels
        let rule = GaussLegendre::new(20);
        let n = 400;
        let a = -12.0;
        let h = (z - a) / n as f64;
        (0..n)
            .map(|i| rule.integrate(a + i as f64 * h, a + (i + 1) as f64 * h, norm_pdf))
            .sum()
    }

    fn quad_bvn(h: f64, k: f64, rho: f64) -> f64 {
        // oracle: ∫_{-∞}^{h} φ(u) Φ((k - ρu)/√(1-ρ²)) du, inner Φ also by quadrature
        let rule = GaussLegendre::new(20);
        let n = 120;
        let a = -12.0_f64;
        let step = (h.min(12.0) - a) / n as f64;
        let s = (1.0 - rho * rho).sqrt();
        (0..n)
            .map(|i| {
                rule.integrate(a + i as f64 * step, a + (i + 1) as f64 * step, |u| {
                    norm_pdf(u) * lower_tail((k - rho * u) / s)
                })
            })
            .sum()
    }

    fn lower_tail(z: f64) -> f64 {
        if z > 0.0 {
            return 1.0 - lower_tail(-z);
        }
        let rule = GaussLegendre::new(20);
        (0..10)
            .map(|i| rule.integrate(z - 10.0 + i as f64, z - 9.0 + i as f64, norm_pdf))
            .sum()
    }

    #[test]
    fn norm_cdf_trivial_points() {
        assert_eq!(norm_cdf(0.0), 0.5);
        assert_eq!(norm_cdf(40.0), 1.0);
        assert_eq!(norm_cdf(-40.0), 0.0);
    }

    #[test]
    fn norm_cdf_matches_quadrature_oracle() {
        for z in [-6.0, -2.5, -1.0, -0.3, 0.4, 1.0, 1.7, 3.2, 5.5] {
            let got = norm_cdf(z);
            let want = quad_cdf(z);
            assert!((got - want).abs() < 1e-12, "z={z}: {got} vs {want}");
        }
    }

    #[test]
    fn binorm_trivial_reductions() {
        let v = binorm_cdf(0.3, 1.1, 0.0);
        assert!((v - norm_cdf(0.3) * norm_cdf(1.1)).abs() < 1e-15);
        assert!((binorm_cdf(0.7, 40.0, 0.5) - norm_cdf(0.7)).abs() < 1e-14);
        assert!((binorm_cdf(0.7, -0.2, 1.0) - norm_cdf(-0.2)).abs() < 1e-15);
    }

    #[test]
    fn binorm_arcsine_identity_at_origin() {
        for rho in [-0.99, -0.95, -0.8, -0.5, -0.1, 0.2, 0.5, 0.8, 0.93, 0.999] {
            let want = 0.25 + rho_asin(rho) / (2.0 * PI);
            let got = binorm_cdf(0.0, 0.0, rho);
            assert!((got - want).abs() < 1e-13, "rho={rho}: {got} vs {want}");
        }
    }

    fn rho_asin(r: f64) -> f64 {
        r.asin()
    }

    #[test]
    fn binorm_matches_quadrature_oracle() {
        let pts = [-2.3, -0.7, 0.0, 0.45, 1.9];
        for rho in [-0.97, -0.9, -0.6, -0.2, 0.1, 0.5, 0.8, 0.93, 0.995] {
            for &h in &pts {
                for &k in &pts {
                    let got = binorm_cdf(h, k, rho);
                    let want = quad_bvn(h, k, rho);
                    assert!(
                        (got - want).abs() < 1e-10,
                        "h={h} k={k} rho={rho}: {got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn lognormal_limits() {
        let p = ModelParams::base();
        assert_eq!(lognormal_cdf(GaussQuery::new(1.0, 1e6, 1.0), &p), 1.0);
        assert_eq!(lognormal_cdf(GaussQuery::new(1.0, 0.5, 0.0), &p), 0.0);
        assert_eq!(lognormal_cdf(GaussQuery::new(1.0, 1.5, 0.0), &p), 1.0);
        assert_eq!(lognormal_cdf(GaussQuery::new(1.0, 1.0, 0.0), &p), 0.5);
        assert_eq!(lognormal_cdf(GaussQuery::new(1.0, 0.0, 0.3), &p), 0.0);
    }

    #[test]
    fn joint_two_time_limits() {
        let p = ModelParams::base();
        let marg = lognormal_cdf(GaussQuery::new(1.0, 0.85, 0.1 + p.refract), &p);
        let v = joint_two_time_prob(1.0, Side::Below, 1e8, 0.1, 0.85, p.refract, &p);
        assert!((v - marg).abs() < 1e-14);
        assert_eq!(joint_two_time_prob(1.0, Side::Above, 0.9, 0.1, 0.0, p.refract, &p), 0.0);
        // s = 0 delegates to the indicator times the one-period probability
        let v0 = joint_two_time_prob(0.8, Side::Below, 0.9, 0.0, 0.85, p.refract, &p);
        let want = lognormal_cdf(GaussQuery::new(0.8, 0.85, p.refract), &p);
        assert!((v0 - want).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn norm_cdf_symmetry(z in -30.0f64..30.0) {
            prop_assert!((norm_cdf(z) + norm_cdf(-z) - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn binorm_monotone_and_bounded(
            h in -5.0f64..5.0, k in -5.0f64..5.0, dh in 0.0f64..1.0, rho in -1.0f64..1.0
        ) {
            let v = binorm_cdf(h, k, rho);
            prop_assert!(v <= norm_cdf(h).min(norm_cdf(k)) + 1e-14);
            prop_assert!(binorm_cdf(h + dh, k, rho) >= v - 1e-14);
            prop_assert!(binorm_cdf(h, k + dh, rho) >= v - 1e-14);
        }

        #[test]
        fn joint_sides_sum_to_marginal(
            x in 0.3f64..3.0, l1 in 0.3f64..3.0, l2 in 0.3f64..3.0,
            s in 0.001f64..1.0, lag in 0.001f64..0.5
        ) {
            let p = ModelParams::base();
            let below = joint_two_time_prob(x, Side::Below, l1, s, l2, lag, &p);
            let above = joint_two_time_prob(x, Side::Above, l1, s, l2, lag, &p);
            let marg = lognormal_cdf(GaussQuery::new(x, l2, s + lag), &p);
            prop_assert!((below + above - marg).abs() <= 1e-9);
        }

        #[test]
        fn lognormal_monotone(x in 0.2f64..5.0, dx in 0.0f64..1.0, l in 0.2f64..5.0, s in 0.0f64..2.0) {
            let p = ModelParams::base();
            let a = lognormal_cdf(GaussQuery::new(x, l, s), &p);
            prop_assert!(lognormal_cdf(GaussQuery::new(x + dx, l, s), &p) <= a + 1e-15);
            prop_assert!(lognormal_cdf(GaussQuery::new(x, l + dx, s), &p) >= a - 1e-15);
        }
    }
}
