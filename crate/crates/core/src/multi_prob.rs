//! Chained exercise-region probabilities and the premium rates built on them.
//!
//! With `λ⁽ᵐ⁾(s, y) = I(y < b⁽ᵐ⁾(s)) + I(y ∈ D⁽ᵐ⁾_s) Ψ⁽ᵐ⁻¹⁾(s, y)` and
//! `Ψ⁽ᵏ⁾(s, y) = e^{-rδ} E_y[λ⁽ᵏ⁾(s + δ, X_δ)]` (`Ψ⁽⁰⁾ = 0`), the sum
//! `Σ_j e^{-rjδ} p⁽ᵐ⁾_j(t, x, u)` equals `E_x[λ⁽ᵐ⁾(t + u, X_u)]`. The first two
//! links of every chain are bivariate normal probabilities; longer tails
//! (`Ψ̃⁽ᵏ⁾`, the part of `Ψ⁽ᵏ⁾` reaching beyond the next refracting window) are
//! tabulated on a log-price grid per time and memoised.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::curve::{BoundaryCurve, CurveKind};
use crate::error::{Error, Result};
use crate::gaussian::{binorm_cdf, joint_two_time_prob, log_score, norm_cdf, Side};
use crate::params::ModelParams;
use crate::quadrature::{gaussian_expectation, gl8};

/// Nodes of density-slice grids.
pub const LOG_GRID_NODES: usize = 512;
/// Nodes of the tabulated chain tails; finer than the slices because the
/// solver integrates the interpolant against narrow Gaussians.
pub const TABLE_NODES: usize = 2048;
/// Half-width of log grids in units of `σ√T`.
pub const LOG_GRID_SPREAD: f64 = 8.0;
/// Reach of the tail tables above the strike in units of `σ√T`; covers every
/// upper-boundary candidate the solver can resolve.
pub const TAIL_SPREAD_UP: f64 = 30.0;
/// Table nodes skipped between samples when locating the bulk of a tail
/// expectation.
const SAMPLE_STRIDE: usize = 16;
/// Log-drop below the peak beyond which an integrand is ignored.
const LOG_DROP: f64 = 40.0;

/// Lower and upper boundary of one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelBoundary {
    pub level: usize,
    pub lower: BoundaryCurve,
    pub upper: BoundaryCurve,
}

impl LevelBoundary {
    /// Whether `x` lies in the closed stopping set at time `t`.
    pub fn in_stopping_set(&self, t: f64, x: f64) -> bool {
        x <= self.lower.at(t) || x >= self.upper.at(t)
    }
}

/// Solved boundaries of levels `1..=len`, plus memoised tail tables.
#[derive(Debug, Serialize, Deserialize)]
pub struct RegionSet {
    pub params: ModelParams,
    pub levels: Vec<LevelBoundary>,
    #[serde(skip)]
    cache: TableCache,
}

impl Clone for RegionSet {
    fn clone(&self) -> Self {
        RegionSet {
            params: self.params,
            levels: self.levels.clone(),
            cache: TableCache::default(),
        }
    }
}

impl PartialEq for RegionSet {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params && self.levels == other.levels
    }
}

#[derive(Debug, Default)]
struct TableCache {
    tables: Mutex<HashMap<(usize, u64), Arc<TailTable>>>,
}

impl RegionSet {
    pub fn new(params: ModelParams, levels: Vec<LevelBoundary>) -> Result<Self> {
        for (i, lb) in levels.iter().enumerate() {
            if lb.level != i + 1 {
                return Err(Error::Domain(format!(
                    "level {} stored at position {}",
                    lb.level,
                    i + 1
                )));
            }
            if lb.lower.kind != CurveKind::Lower || lb.upper.kind != CurveKind::Upper {
                return Err(Error::Domain(format!("level {}: curve kinds swapped", i + 1)));
            }
            let h = params.horizon(i + 1);
            if (lb.lower.horizon - h).abs() > 1e-9 || (lb.upper.horizon - h).abs() > 1e-9 {
                return Err(Error::Domain(format!(
                    "level {}: curves end at {} but the horizon is {h}",
                    i + 1,
                    lb.lower.horizon
                )));
            }
        }
        Ok(RegionSet {
            params,
            levels,
            cache: TableCache::default(),
        })
    }

    pub fn empty(params: ModelParams) -> Self {
        RegionSet {
            params,
            levels: Vec::new(),
            cache: TableCache::default(),
        }
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, m: usize) -> Result<&LevelBoundary> {
        if m == 0 || m > self.levels.len() {
            return Err(Error::Domain(format!(
                "level {m} not available (solved levels 1..={})",
                self.levels.len()
            )));
        }
        Ok(&self.levels[m - 1])
    }

    pub(crate) fn push(&mut self, lb: LevelBoundary) {
        self.levels.push(lb);
    }

    /// Largest violation of `b⁽ᵏ⁻¹⁾ ≤ b⁽ᵏ⁾` and `c⁽ᵏ⁻¹⁾ ≥ c⁽ᵏ⁾` over the nodes of
    /// the higher level.
    pub fn nesting_violation(&self) -> f64 {
        let mut worst = 0.0_f64;
        for w in self.levels.windows(2) {
            let (lo, hi) = (&w[0], &w[1]);
            for (t, (&b, &c)) in hi
                .lower
                .grid
                .iter()
                .zip(hi.lower.values.iter().zip(&hi.upper.values))
            {
                worst = worst.max(lo.lower.at(*t) - b);
                let cu = lo.upper.at(*t);
                if cu.is_finite() {
                    worst = worst.max(c - cu);
                }
            }
        }
        worst
    }

    fn lower_at(&self, k: usize, t: f64) -> f64 {
        self.levels[k - 1].lower.at(t)
    }

    fn upper_at(&self, k: usize, t: f64) -> f64 {
        self.levels[k - 1].upper.at(t)
    }

    fn disc(&self) -> f64 {
        (-self.params.r * self.params.refract).exp()
    }

    /// `Ψ⁽ᵏ⁾(τ, y) = e^{-rδ} E_y[λ⁽ᵏ⁾(τ + δ, X_δ)]`, evaluated without tables
    /// at the outermost link.
    pub fn psi(&self, k: usize, tau: f64, y: f64) -> f64 {
        if k == 0 {
            return 0.0;
        }
        let p = &self.params;
        let b = self.lower_at(k, tau + p.refract);
        let head = self.disc() * norm_cdf(log_score(y, b, p.refract, p));
        if k == 1 {
            head
        } else {
            head + self.tail_direct(k, tau, y)
        }
    }

    /// `Ψ̃⁽ᵏ⁾(τ, y) = e^{-rδ} E_y[I(X_δ ∈ D⁽ᵏ⁾_{τ+δ}) Ψ⁽ᵏ⁻¹⁾(τ + δ, X_δ)]`.
    fn tail_direct(&self, k: usize, tau: f64, y: f64) -> f64 {
        debug_assert!(k >= 2);
        let p = &self.params;
        let d = p.refract;
        let t1 = tau + d;
        let bk = self.lower_at(k, t1);
        let ck = self.upper_at(k, t1);
        let bp = self.lower_at(k - 1, t1 + d);
        let disc = self.disc();
        let mut v = disc
            * disc
            * (joint_two_time_prob(y, Side::Below, bk, d, bp, d, p)
                + joint_two_time_prob(y, Side::Above, ck, d, bp, d, p));
        if k >= 3 {
            let table = self.tail_table(k - 1, t1);
            let mean = y.ln() + p.log_drift() * d;
            let sd = p.sigma * d.sqrt();
            v += disc * table.expectation(mean, sd, &stopping_pieces(bk, ck));
        }
        v
    }

    /// Memoised table of `Ψ̃⁽ᵏ⁾(τ, ·)` on the log-price grid.
    fn tail_table(&self, k: usize, tau: f64) -> Arc<TailTable> {
        let key = (k, tau.to_bits());
        if let Some(t) = self.cache.tables.lock().unwrap().get(&key) {
            return Arc::clone(t);
        }
        let grid = LogGrid::for_tails(&self.params);
        let logs = (0..grid.n)
            .map(|i| self.tail_direct(k, tau, grid.node(i).exp()).max(f64::MIN_POSITIVE).ln())
            .collect();
        let table = Arc::new(TailTable { grid, logs });
        self.cache
            .tables
            .lock()
            .unwrap()
            .insert(key, Arc::clone(&table));
        table
    }

    /// Number of memoised tail tables.
    pub fn cached_tables(&self) -> usize {
        self.cache.tables.lock().unwrap().len()
    }

    /// `E_x[λ⁽ᵐ⁾(τ, X_v)]` with the level-`m` boundaries at `τ` given
    /// explicitly as `b`, `c`; lower levels are read from the set.
    pub fn expected_rate(&self, m: usize, tau: f64, x: f64, v: f64, b: f64, c: f64) -> f64 {
        let p = &self.params;
        if v <= 0.0 {
            let below = if x < b { 1.0 } else { 0.0 };
            let inside = x <= b || x >= c;
            return below + if inside { self.psi(m - 1, tau, x) } else { 0.0 };
        }
        let zb = log_score(x, b, v, p);
        let mut rate = norm_cdf(zb);
        if m == 1 {
            return rate;
        }
        let d = p.refract;
        let bp = self.lower_at(m - 1, tau + d);
        let below = joint_two_time_prob(x, Side::Below, b, v, bp, d, p);
        let above = joint_two_time_prob(x, Side::Above, c, v, bp, d, p);
        rate += self.disc() * (below + above);
        if m >= 3 {
            rate += self.tail_expectation(m - 1, tau, x, v, &stopping_pieces(b, c));
        }
        rate
    }

    /// `E_x[I(X_v ∈ C⁽ᵐ⁾_τ) Ψ⁽ᵐ⁻¹⁾(τ, X_v)] - P_x(X_v < b)`: the integrand of
    /// `G⁽ᵐ⁾ - V⁽ᵐ⁾` after the European legs cancel.
    pub fn continuation_rate(&self, m: usize, tau: f64, x: f64, v: f64, b: f64, c: f64) -> f64 {
        let p = &self.params;
        if v <= 0.0 {
            let below = if x < b { 1.0 } else { 0.0 };
            let inside = x > b && x < c;
            return if inside { self.psi(m - 1, tau, x) } else { 0.0 } - below;
        }
        let zb = log_score(x, b, v, p);
        let below = norm_cdf(zb);
        if m == 1 {
            return -below;
        }
        let d = p.refract;
        let bp = self.lower_at(m - 1, tau + d);
        let zp = log_score(x, bp, v + d, p);
        let rho = (v / (v + d)).sqrt();
        let upto_c = if c.is_finite() {
            binorm_cdf(log_score(x, c, v, p), zp, rho)
        } else {
            norm_cdf(zp)
        };
        let mut rate = self.disc() * (upto_c - binorm_cdf(zb, zp, rho)).max(0.0) - below;
        if m >= 3 && c > b {
            rate += self.tail_expectation(m - 1, tau, x, v, &[(b.ln(), c.ln())]);
        }
        rate
    }

    /// `E_x[Ψ⁽ᵐ⁻¹⁾(τ, X_v)]` over the whole line; `Ψ⁽⁰⁾ = 0`.
    pub fn expected_psi(&self, m: usize, tau: f64, x: f64, v: f64) -> f64 {
        if m <= 1 {
            return 0.0;
        }
        if v <= 0.0 {
            return self.psi(m - 1, tau, x);
        }
        let p = &self.params;
        let d = p.refract;
        let bp = self.lower_at(m - 1, tau + d);
        let mut val = self.disc() * norm_cdf(log_score(x, bp, v + d, p));
        if m >= 3 {
            val += self.tail_expectation(
                m - 1,
                tau,
                x,
                v,
                &[(f64::NEG_INFINITY, f64::INFINITY)],
            );
        }
        val
    }

    /// `E_x[I(ln X_v ∈ pieces) Ψ̃⁽ᵏ⁾(τ, X_v)]`.
    fn tail_expectation(&self, k: usize, tau: f64, x: f64, v: f64, pieces: &[(f64, f64)]) -> f64 {
        let p = &self.params;
        let table = self.tail_table(k, tau);
        let mean = x.ln() + p.log_drift() * v;
        let sd = p.sigma * v.sqrt();
        table.expectation(mean, sd, pieces)
    }
}

/// Log-space pieces of the stopping set `(0, b] ∪ [c, ∞)`.
fn stopping_pieces(b: f64, c: f64) -> Vec<(f64, f64)> {
    let mut v = Vec::with_capacity(2);
    if b > 0.0 {
        v.push((f64::NEG_INFINITY, b.ln()));
    }
    if c.is_finite() {
        v.push((c.ln(), f64::INFINITY));
    }
    v
}

/// Uniform grid in log price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogGrid {
    pub z0: f64,
    pub dz: f64,
    pub n: usize,
}

impl LogGrid {
    pub fn new(center: f64, half_width: f64, n: usize) -> Self {
        LogGrid {
            z0: center - half_width,
            dz: 2.0 * half_width / (n - 1) as f64,
            n,
        }
    }

    /// Grid of the tail tables: the density-grid reach below the strike and
    /// [`TAIL_SPREAD_UP`] above it.
    fn for_tails(p: &ModelParams) -> Self {
        let drift = p.log_drift().abs() * p.maturity;
        let scale = p.sigma * p.maturity.sqrt();
        let z0 = p.strike.ln() - LOG_GRID_SPREAD * scale - drift;
        let z1 = p.strike.ln() + TAIL_SPREAD_UP * scale + drift;
        LogGrid {
            z0,
            dz: (z1 - z0) / (TABLE_NODES - 1) as f64,
            n: TABLE_NODES,
        }
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        self.z0 + i as f64 * self.dz
    }

    pub fn end(&self) -> f64 {
        self.node(self.n - 1)
    }
}

/// Values on a [`LogGrid`] with four-point Lagrange interpolation and flat
/// extrapolation.
#[derive(Debug, Clone)]
pub struct LogTable {
    pub grid: LogGrid,
    pub vals: Vec<f64>,
}

impl LogTable {
    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        lagrange4(&self.grid, &self.vals, z)
    }
}

/// Four-point Lagrange interpolation on a uniform grid, flat outside it.
#[inline]
fn lagrange4(g: &LogGrid, v: &[f64], z: f64) -> f64 {
    let u = (z - g.z0) / g.dz;
    if u <= 0.0 {
        return v[0];
    }
    if u >= (g.n - 1) as f64 {
        return v[g.n - 1];
    }
    let i = (u.floor() as usize).clamp(1, g.n - 3);
    let t = u - i as f64;
    let wm = -t * (t - 1.0) * (t - 2.0) / 6.0;
    let w0 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
    let w1 = -(t + 1.0) * t * (t - 2.0) / 2.0;
    let w2 = (t + 1.0) * t * (t - 1.0) / 6.0;
    wm * v[i - 1] + w0 * v[i] + w1 * v[i + 1] + w2 * v[i + 2]
}

/// Logarithms of a chain tail `Ψ̃⁽ᵏ⁾(τ, ·)` on a [`LogGrid`]. Interpolating
/// the logarithm keeps relative accuracy far above the strike, where the
/// tail is exponentially small.
#[derive(Debug, Clone)]
pub struct TailTable {
    pub grid: LogGrid,
    pub logs: Vec<f64>,
}

impl TailTable {
    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        self.log_eval(z).exp()
    }

    #[inline]
    pub fn log_eval(&self, z: f64) -> f64 {
        lagrange4(&self.grid, &self.logs, z)
    }

    /// `∫ N(z; mean, sd²) Ψ̃(z) dz` over the union of `pieces`.
    ///
    /// The integrand is located by sampling its logarithm, so mass far out in
    /// the Gaussian tail is kept whenever the table outweighs the density.
    pub fn expectation(&self, mean: f64, sd: f64, pieces: &[(f64, f64)]) -> f64 {
        let g = &self.grid;
        let log_h = |z: f64| {
            let u = (z - mean) / sd;
            -0.5 * u * u + self.log_eval(z)
        };
        let stride = SAMPLE_STRIDE as f64 * g.dz;
        let mut total = 0.0;
        let mut samples: Vec<(f64, f64)> = Vec::with_capacity(256);
        for &(lo, hi) in pieces {
            // below z0 and above the end the table is flat, so the Gaussian
            // alone decides how far out the mass reaches
            let a = lo.max(g.z0.min(mean) - 10.0 * sd);
            let b = hi.min(g.end().max(mean) + 10.0 * sd);
            if !(b > a) {
                continue;
            }
            samples.clear();
            samples.push((a, log_h(a)));
            samples.push((b, log_h(b)));
            let first = ((a - g.z0) / stride).ceil().max(0.0) as usize;
            let mut j = first;
            loop {
                let z = g.z0 + j as f64 * stride;
                if z >= b || z > g.end() {
                    break;
                }
                samples.push((z, log_h(z)));
                j += 1;
            }
            for i in -20..=20 {
                let z = mean + 0.5 * i as f64 * sd;
                if z > a && z < b {
                    samples.push((z, log_h(z)));
                }
            }
            samples.sort_by(|p, q| p.0.total_cmp(&q.0));
            let peak = samples.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
            if !peak.is_finite() {
                continue;
            }
            let floor = peak - LOG_DROP;
            let first = samples.iter().position(|s| s.1 >= floor).unwrap();
            let last = samples.iter().rposition(|s| s.1 >= floor).unwrap();
            let lo_i = first.saturating_sub(1);
            let hi_i = (last + 1).min(samples.len() - 1);
            let (ra, rb) = (samples[lo_i].0, samples[hi_i].0);
            if !(rb > ra) {
                continue;
            }
            let steep = samples[lo_i..=hi_i]
                .windows(2)
                .filter(|w| w[1].0 > w[0].0)
                .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
                .fold(0.0, f64::max);
            let width = (0.5 * sd).min(stride).min(2.0 / steep.max(1e-300));
            let panels = ((rb - ra) / width).ceil().clamp(1.0, 4000.0) as usize;
            let h = (rb - ra) / panels as f64;
            let rule = gl8();
            let mut acc = 0.0;
            for k in 0..panels {
                let pa = ra + k as f64 * h;
                acc += rule.integrate(pa, pa + h, |z| (log_h(z) - peak).exp());
            }
            total += acc * peak.exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
        }
        total
    }
}

/// Density of `ln X` at a fixed time before the stopping-set restriction is
/// applied; `pieces` are the surviving log-price intervals. Probability
/// outside `pieces` is killed, never renormalised.
#[derive(Debug, Clone)]
pub struct DensitySlice {
    pub density: SliceDensity,
    pub pieces: Vec<(f64, f64)>,
    pub time: f64,
}

/// Exact Gaussian law (first slice after a point mass) or grid samples.
#[derive(Debug, Clone)]
pub enum SliceDensity {
    Gaussian { mean: f64, sd: f64 },
    Grid { table: LogTable, scale: f64 },
}

impl SliceDensity {
    #[inline]
    fn eval(&self, z: f64) -> f64 {
        match self {
            SliceDensity::Gaussian { mean, sd } => crate::gaussian::norm_pdf((z - mean) / sd) / sd,
            SliceDensity::Grid { table, .. } => table.eval(z),
        }
    }

    fn scale(&self) -> f64 {
        match self {
            SliceDensity::Gaussian { sd, .. } => *sd,
            SliceDensity::Grid { scale, .. } => *scale,
        }
    }
}

impl DensitySlice {
    /// Surviving probability mass.
    pub fn mass(&self) -> f64 {
        self.integrate_over(&self.pieces)
    }

    /// `∫` of the density over `pieces` (clipped to the grid for grid slices).
    pub fn integrate_over(&self, pieces: &[(f64, f64)]) -> f64 {
        let table = match &self.density {
            SliceDensity::Gaussian { mean, sd } => {
                return pieces
                    .iter()
                    .map(|&(lo, hi)| (norm_cdf((hi - mean) / sd) - norm_cdf((lo - mean) / sd)).max(0.0))
                    .sum();
            }
            SliceDensity::Grid { table, .. } => table,
        };
        let g = table.grid;
        let rule = gl8();
        let mut acc = 0.0;
        for &(lo, hi) in pieces {
            let a = lo.max(g.z0);
            let b = hi.min(g.end());
            if !(b > a) {
                continue;
            }
            // panels aligned with grid cells so each sees one cubic piece
            let mut left = a;
            while left < b {
                let cell = ((left - g.z0) / g.dz).floor() + 1.0;
                let right = (g.z0 + cell * g.dz).min(b).max(left + 1e-15);
                acc += rule.integrate(left, right, |z| table.eval(z));
                left = right;
            }
        }
        acc
    }

    /// Mass in the outer 2% of the grid on either side.
    pub fn edge_mass(&self) -> f64 {
        let g = match &self.density {
            SliceDensity::Gaussian { .. } => return 0.0,
            SliceDensity::Grid { table, .. } => table.grid,
        };
        let w = 0.02 * (g.end() - g.z0);
        self.integrate_over(&[(g.z0, g.z0 + w), (g.end() - w, g.end())])
    }

    /// Transition over `lag` of the surviving mass, sampled on `grid`.
    pub fn propagate(&self, lag: f64, grid: LogGrid, params: &ModelParams) -> DensitySlice {
        let mu = params.log_drift() * lag;
        let sd = params.sigma * lag.sqrt();
        let scale = self.density.scale().min(sd);
        let vals = (0..grid.n)
            .map(|i| {
                let z = grid.node(i);
                // kernel in the source variable: N(z - mu, sd²)
                gaussian_expectation(z - mu, sd, &self.pieces, scale, |y| self.density.eval(y))
            })
            .collect();
        DensitySlice {
            density: SliceDensity::Grid {
                table: LogTable { grid, vals },
                scale: sd,
            },
            pieces: vec![(f64::NEG_INFINITY, f64::INFINITY)],
            time: self.time + lag,
        }
    }
}

fn check_horizon(regions: &RegionSet, what: &'static str, level: usize, end: f64) -> Result<()> {
    let h = regions.params.horizon(level);
    regions.params.check_time(what, end, h)
}

/// `p⁽ⁿ⁾₀(t, x, s) = P_x(X_s < b⁽ⁿ⁾(t + s))`.
pub fn p_n0(level: usize, t: f64, x: f64, s: f64, regions: &RegionSet) -> Result<f64> {
    let lb = regions.level(level)?;
    check_horizon(regions, "p_n0", level, t + s)?;
    let b = lb.lower.at(t + s);
    if s <= 0.0 {
        return Ok(if x < b { 1.0 } else { 0.0 });
    }
    Ok(norm_cdf(log_score(x, b, s, &regions.params)))
}

/// `p⁽ⁿ⁾ⱼ(t, x, s)` for `1 ≤ j ≤ n - 1`: bivariate normal for `j = 1`,
/// density propagation for longer chains.
pub fn p_nj(level: usize, j: usize, t: f64, x: f64, s: f64, regions: &RegionSet) -> Result<f64> {
    if j == 1 {
        check_chain(level, j, t, s, regions)?;
        let p = &regions.params;
        let lb = regions.level(level)?;
        let b = lb.lower.at(t + s);
        let c = lb.upper.at(t + s);
        let bp = regions.level(level - 1)?.lower.at(t + s + p.refract);
        let below = joint_two_time_prob(x, Side::Below, b, s, bp, p.refract, p);
        let above = joint_two_time_prob(x, Side::Above, c, s, bp, p.refract, p);
        return Ok((below + above).clamp(0.0, 1.0));
    }
    p_nj_propagated(level, j, t, x, s, regions)
}

fn check_chain(level: usize, j: usize, t: f64, s: f64, regions: &RegionSet) -> Result<()> {
    if j == 0 || j >= level {
        return Err(Error::Domain(format!(
            "chain length {j} must lie in 1..={}",
            level.saturating_sub(1)
        )));
    }
    regions.level(level)?;
    if !(s > 0.0) {
        return Err(Error::Domain("p_nj needs s > 0".into()));
    }
    let p = &regions.params;
    for i in 0..=j {
        check_horizon(regions, "p_nj", level - i, t + s + i as f64 * p.refract)?;
    }
    Ok(())
}

/// `p⁽ⁿ⁾ⱼ` by propagating the killed density of `ln X` through the chain of
/// stopping sets on a uniform log grid, for any `j ≥ 1`.
pub fn p_nj_propagated(
    level: usize,
    j: usize,
    t: f64,
    x: f64,
    s: f64,
    regions: &RegionSet,
) -> Result<f64> {
    check_chain(level, j, t, s, regions)?;
    let p = &regions.params;
    let d = p.refract;
    let span = s + j as f64 * d;
    let half = LOG_GRID_SPREAD * p.sigma * span.sqrt() + p.log_drift().abs() * span;
    let grid = LogGrid::new(x.ln() + p.log_drift() * span, half, LOG_GRID_NODES);

    // exact law at t + s, restricted to D⁽ⁿ⁾
    let lb = regions.level(level)?;
    let tau = t + s;
    let mut slice = DensitySlice {
        density: SliceDensity::Gaussian {
            mean: x.ln() + p.log_drift() * s,
            sd: p.sigma * s.sqrt(),
        },
        pieces: stopping_pieces(lb.lower.at(tau), lb.upper.at(tau)),
        time: tau,
    };
    for i in 1..=j {
        let next = slice.propagate(d, grid, p);
        let k = level - i;
        let lbk = regions.level(k)?;
        let pieces = if i == j {
            vec![(f64::NEG_INFINITY, lbk.lower.at(next.time).ln())]
        } else {
            stopping_pieces(lbk.lower.at(next.time), lbk.upper.at(next.time))
        };
        slice = DensitySlice { pieces, ..next };
    }
    let leaked = slice.edge_mass();
    if leaked > 1e-6 {
        return Err(Error::Accuracy {
            leaked,
            limit: 1e-6,
        });
    }
    Ok(slice.mass().clamp(0.0, 1.0))
}
