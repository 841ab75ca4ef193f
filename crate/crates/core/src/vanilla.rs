//! European and American puts, the single-right boundary and the helper
//! functions `f` and `g` used by the two-right problem.

use crate::curve::BoundaryCurve;
use crate::error::{Error, Result};
use crate::gaussian::{log_score, norm_cdf};
use crate::params::ModelParams;
use crate::quadrature::time_rule;
use crate::solver::{solve_single_level, SolverConfig, TIME_POINTS};

/// Black-Scholes put with time to maturity `tau ≥ 0`.
pub fn put_price(x: f64, tau: f64, params: &ModelParams) -> f64 {
    let k = params.strike;
    if tau <= 0.0 {
        return (k - x).max(0.0);
    }
    let disc_k = k * (-params.r * tau).exp();
    if x <= 0.0 {
        return disc_k;
    }
    let sd = params.sigma * tau.sqrt();
    let d2 = log_score(x, k, tau, params);
    let d1 = d2 - sd;
    // d2 here is (ln(K/x) - μτ)/(σ√τ) = -d₂ of the usual notation
    (disc_k * norm_cdf(d2) - x * norm_cdf(d1)).max(0.0)
}

/// `V⁽⁰⁾(t, x)`: European put maturing at `T`.
pub fn european_put(t: f64, x: f64, params: &ModelParams) -> Result<f64> {
    params.check_time("european_put", t, params.maturity)?;
    check_price(x)?;
    Ok(put_price(x, params.maturity - t, params))
}

pub(crate) fn check_price(x: f64) -> Result<()> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::Domain(format!("price must be positive and finite, got {x}")));
    }
    Ok(())
}

/// Midpoint cells of `grid` covering `[from, to]`: `(width, midpoint)`.
/// Partial cells at both ends are cut at `from` and `to`.
pub(crate) fn cells(grid: &[f64], from: f64, to: f64) -> Vec<(f64, f64)> {
    let eps = 1e-13 * grid.last().copied().unwrap_or(1.0).max(1.0);
    let start = grid.partition_point(|&s| s <= from + eps);
    let stop = grid.partition_point(|&s| s < to - eps).max(start);
    let mut out = Vec::with_capacity(stop.saturating_sub(start) + 1);
    let mut left = from;
    for &right in grid[start..stop].iter().chain(std::iter::once(&to)) {
        if right > left {
            out.push((right - left, 0.5 * (left + right)));
            left = right;
        }
    }
    out
}

/// Gauss-Legendre points of every cell of `grid` covering `[from, to]`:
/// `(weight, time)` with `points` nodes per cell.
pub(crate) fn cell_points(grid: &[f64], from: f64, to: f64, points: usize) -> Vec<(f64, f64)> {
    let rule = time_rule(points);
    let mut out = Vec::new();
    for (w, mid) in cells(grid, from, to) {
        out.extend(rule.cell_points(from, mid - 0.5 * w, mid + 0.5 * w));
    }
    out
}

/// Early-exercise premium of the American put, `∫_0^{T-t} e^{-rs} P_x(X_s ≤ b(t+s)) ds`.
fn american_premium(t: f64, x: f64, b1: &BoundaryCurve, params: &ModelParams) -> f64 {
    cell_points(&b1.grid, t, b1.horizon, TIME_POINTS)
        .into_iter()
        .map(|(w, s)| {
            let v = s - t;
            w * (-params.r * v).exp() * norm_cdf(log_score(x, b1.at(s), v, params))
        })
        .sum()
}

/// `V⁽¹⁾(t, x)` through its early-exercise-premium form; equals `K - x` on the
/// stopping set `x ≤ b⁽¹⁾(t)`.
pub fn american_put(t: f64, x: f64, b1: &BoundaryCurve, params: &ModelParams) -> Result<f64> {
    params.check_time("american_put", t, params.maturity)?;
    check_price(x)?;
    if x <= b1.at(t) {
        return Ok(params.strike - x);
    }
    Ok(american_put_eep(t, x, b1, params))
}

/// The EEP formula without the stopping-set clamp.
pub fn american_put_eep(t: f64, x: f64, b1: &BoundaryCurve, params: &ModelParams) -> f64 {
    put_price(x, params.maturity - t, params)
        + params.r * params.strike * american_premium(t, x, b1, params)
}

/// `f(t, x) = e^{-rδ} P(X^x_δ ≤ b⁽¹⁾(t + δ))`.
pub fn f_func(t: f64, x: f64, b1: &BoundaryCurve, params: &ModelParams) -> Result<f64> {
    let d = params.refract;
    params.check_time("f_func", t + d, params.maturity)?;
    check_price(x)?;
    let b = b1.at(t + d);
    if b <= 0.0 {
        return Ok(0.0);
    }
    Ok((-params.r * d).exp() * norm_cdf(log_score(x, b, d, params)))
}

/// `g(t, x) = ∫_0^δ e^{-rs} P(X^x_s ≤ b⁽¹⁾(t + s)) ds`, Gauss-Legendre on the
/// cells of the boundary grid.
pub fn g_func(t: f64, x: f64, b1: &BoundaryCurve, params: &ModelParams) -> Result<f64> {
    let d = params.refract;
    params.check_time("g_func", t + d, params.maturity)?;
    check_price(x)?;
    Ok(cell_points(&b1.grid, t, t + d, TIME_POINTS)
        .into_iter()
        .map(|(w, s)| {
            let v = s - t;
            let b = b1.at(s);
            if b <= 0.0 {
                0.0
            } else {
                w * (-params.r * v).exp() * norm_cdf(log_score(x, b, v, params))
            }
        })
        .sum())
}

/// Solves the American put boundary backward from `b⁽¹⁾(T) = K`.
pub fn solve_american_boundary(params: &ModelParams, grid_steps: usize) -> Result<BoundaryCurve> {
    params.validate()?;
    let config = SolverConfig {
        grid_steps,
        ..SolverConfig::default()
    };
    let single = ModelParams { rights: 1, ..*params };
    let level = solve_single_level(&single, &config)?;
    Ok(level.lower)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::CurveKind;

    #[test]
    fn put_terminal_and_far_otm() {
        let p = ModelParams::base();
        assert!((european_put(p.maturity, 0.8, &p).unwrap() - 0.2).abs() < 1e-15);
        assert!(european_put(0.0, 1e3, &p).unwrap() < 1e-300);
        assert!(european_put(0.6, 1.0, &p).is_err());
    }

    #[test]
    fn put_call_parity_against_forward() {
        // E[e^{-rT}(K - X)] = K e^{-rT} - x, so put - (K e^{-rT} - x) = call ≥ 0
        let p = ModelParams::base();
        for x in [0.7, 1.0, 1.3] {
            let put = put_price(x, 0.5, &p);
            let fwd = p.strike * (-p.r * 0.5_f64).exp() - x;
            assert!(put >= fwd.max(0.0) - 1e-15);
        }
    }

    #[test]
    fn empty_interval_has_no_cells() {
        let grid = [0.0, 0.1, 0.2, 0.3];
        assert!(cells(&grid, 0.3, 0.3).is_empty());
        assert!(cells(&grid, 0.2, 0.2).is_empty());
    }

    #[test]
    fn cells_cover_interval_exactly() {
        let g = vec![0.0, 0.1, 0.25, 0.4, 0.5];
        let total: f64 = cells(&g, 0.05, 0.45).iter().map(|(w, _)| w).sum();
        assert!((total - 0.4).abs() < 1e-15);
        let c = cells(&g, 0.1, 0.5);
        assert_eq!(c.len(), 3);
        assert!((c[0].1 - 0.175).abs() < 1e-15);
    }

    #[test]
    fn zero_boundary_gives_zero_g_and_european_value() {
        let p = ModelParams::base();
        let grid: Vec<f64> = (0..=60).map(|i| p.maturity * i as f64 / 60.0).collect();
        let zero = BoundaryCurve::constant(grid, 0.0, CurveKind::Lower);
        assert_eq!(g_func(0.1, 0.9, &zero, &p).unwrap(), 0.0);
        let v = american_put(0.0, 0.9, &zero, &p).unwrap();
        assert!((v - european_put(0.0, 0.9, &p).unwrap()).abs() < 1e-15);
    }
}
