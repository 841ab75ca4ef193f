//! Binomial refraction lattice: an independent dynamic-programming pricer for
//! swing puts, used as ground truth for the integral-equation solver.
//!
//! `W⁽ᵏ⁾(t, x) = max{(K - x)⁺ + A⁽ᵏ⁻¹⁾(t, x), e^{-rΔt} E[W⁽ᵏ⁾(t + Δt, ·)]}` up to
//! the deadline `T - (k-1)δ`, where every remaining right is exercised, and
//! `A⁽ᵏ⁻¹⁾(t, x) = e^{-rδ} E[W⁽ᵏ⁻¹⁾(t + δ, ·)]`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_sig;
use crate::params::ModelParams;

/// Exercise brackets found on one time slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceBrackets {
    pub t: f64,
    /// Largest exercise node below the strike.
    pub lower: Option<f64>,
    /// Smallest exercise node above the strike.
    pub upper: Option<f64>,
}

/// Values at `t = 0` and exercise brackets of levels `1..=level`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeResult {
    pub params: ModelParams,
    pub requested_steps: usize,
    /// Steps over `[0, T]` after rounding so that δ is a whole number of them.
    pub steps: usize,
    pub dt: f64,
    /// Lattice steps per refracting period.
    pub per_delta: usize,
    pub up: f64,
    pub prob: f64,
    /// Root of the lattice; node `i` at `t = 0` sits at `spot·uⁱ`.
    pub spot: f64,
    /// Nodes kept on each side of the root at `t = 0`.
    pub margin: usize,
    /// `values[k - 1][i + margin]`: level-`k` value at `(0, spot·uⁱ)`.
    pub values: Vec<Vec<f64>>,
    /// `brackets[k - 1][j]`: exercise brackets of level `k` on slice `j`.
    pub brackets: Vec<Vec<SliceBrackets>>,
}

/// Price span kept around the root at `t = 0`, as a factor each way.
const PRICE_SPAN: f64 = 2.5;

/// Lattice rooted at the strike; see [`lattice_price_at`].
pub fn lattice_price(params: &ModelParams, steps: usize, level: usize) -> Result<LatticeResult> {
    lattice_price_at(params, steps, level, params.strike)
}

/// Solves levels `1..=level` on a CRR lattice rooted at `spot`.
///
/// `steps` is rounded so that `δ/Δt` is an integer and `T/Δt` as well; a
/// maturity that is not a whole multiple of the resulting step is rejected.
pub fn lattice_price_at(
    params: &ModelParams,
    steps: usize,
    level: usize,
    spot: f64,
) -> Result<LatticeResult> {
    params.validate()?;
    params.check_level(level)?;
    if !(spot > 0.0 && spot.is_finite()) {
        return Err(Error::Lattice(format!("spot must be positive, got {spot}")));
    }
    if steps == 0 {
        return Err(Error::Lattice("need at least one step".into()));
    }
    let t_end = params.maturity;
    let per_delta = ((steps as f64 * params.refract / t_end).round() as usize).max(1);
    let dt = params.refract / per_delta as f64;
    let n = (t_end / dt).round() as usize;
    if ((n as f64) * dt - t_end).abs() > 1e-9 * t_end {
        return Err(Error::Lattice(format!(
            "maturity {t_end} is not a multiple of the step {dt} implied by δ/Δt = {per_delta}"
        )));
    }
    let up = (params.sigma * dt.sqrt()).exp();
    let down = 1.0 / up;
    let prob = ((params.r * dt).exp() - down) / (up - down);
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::Lattice(format!(
            "risk-neutral probability {prob} outside (0, 1); use more steps"
        )));
    }
    let margin = (PRICE_SPAN.ln() / (params.sigma * dt.sqrt())).ceil() as usize;
    let lat = Lattice {
        strike: params.strike,
        spot,
        up,
        disc: (-params.r * dt).exp(),
        margin,
        dt,
    };

    let mut values = Vec::with_capacity(level);
    let mut brackets = Vec::with_capacity(level);
    // slices of the level below, indexed by step; empty for level 0
    let mut below: Vec<Vec<f64>> = Vec::new();
    for k in 1..=level {
        let last = n - (k - 1) * per_delta;
        let keep = k < level;
        let kernel = binomial_kernel(per_delta, prob, (-params.r * params.refract).exp());
        let mut slices: Vec<Vec<f64>> = if keep { vec![Vec::new(); last + 1] } else { Vec::new() };
        let mut found = vec![
            SliceBrackets {
                t: 0.0,
                lower: None,
                upper: None
            };
            last + 1
        ];
        let mut next: Vec<f64> = Vec::new();
        for j in (0..=last).rev() {
            let width = lat.width(j);
            let carry = if k == 1 {
                vec![0.0; width]
            } else {
                lat.carry(&below[j + per_delta], j, per_delta, &kernel)
            };
            let half = (width / 2) as i64;
            let mut cur = vec![0.0; width];
            let mut stop = vec![false; width];
            cur.par_iter_mut()
                .zip(stop.par_iter_mut())
                .enumerate()
                .for_each(|(idx, (w, s))| {
                    let x = lat.price(idx as i64 - half);
                    let exercise = (lat.strike - x).max(0.0) + carry[idx];
                    if j == last {
                        *w = exercise;
                        *s = exercise > 0.0;
                    } else {
                        // children at idx and idx + 2 of the next, wider slice
                        let cont = lat.disc * (prob * next[idx + 2] + (1.0 - prob) * next[idx]);
                        *s = exercise > 0.0 && exercise >= cont;
                        *w = exercise.max(cont);
                    }
                });
            found[j] = lat.brackets(j, &stop);
            if keep {
                slices[j] = cur.clone();
            }
            next = cur;
        }
        values.push(next);
        brackets.push(found);
        below = slices;
    }
    Ok(LatticeResult {
        params: *params,
        requested_steps: steps,
        steps: n,
        dt,
        per_delta,
        up,
        prob,
        spot,
        margin,
        values,
        brackets,
    })
}

/// Geometry of the lattice: slice `j` holds nodes `i ∈ [-(j + margin), j + margin]`
/// at prices `spot·uⁱ`; both parities are kept, so every `t = 0` node in the
/// margin is the root of an exact CRR tree.
struct Lattice {
    strike: f64,
    spot: f64,
    up: f64,
    disc: f64,
    margin: usize,
    dt: f64,
}

impl Lattice {
    fn width(&self, j: usize) -> usize {
        2 * (j + self.margin) + 1
    }

    #[inline]
    fn price(&self, i: i64) -> f64 {
        self.spot * self.up.powi(i as i32)
    }

    /// `e^{-rδ} E[W(t_j + δ, ·)]` on slice `j` from the slice `per_delta` steps later.
    fn carry(&self, later: &[f64], j: usize, per_delta: usize, kernel: &[f64]) -> Vec<f64> {
        let width = self.width(j);
        debug_assert_eq!(later.len(), self.width(j + per_delta));
        // node idx on slice j sits at idx + per_delta on the later slice;
        // l up-moves out of per_delta land on idx + 2l
        (0..width)
            .into_par_iter()
            .map(|idx| {
                kernel
                    .iter()
                    .enumerate()
                    .map(|(l, w)| w * later[idx + 2 * l])
                    .sum()
            })
            .collect()
    }

    fn brackets(&self, j: usize, stop: &[bool]) -> SliceBrackets {
        let half = (stop.len() / 2) as i64;
        let mut lower = None;
        let mut upper = None;
        for (idx, &s) in stop.iter().enumerate() {
            if !s {
                continue;
            }
            let x = self.price(idx as i64 - half);
            if x < self.strike {
                lower = Some(x);
            } else if x > self.strike && upper.is_none() {
                upper = Some(x);
            }
        }
        SliceBrackets {
            t: j as f64 * self.dt,
            lower,
            upper,
        }
    }
}

/// Discounted probabilities of `l` up-moves out of `m`, `l = 0..=m`.
fn binomial_kernel(m: usize, p: f64, disc: f64) -> Vec<f64> {
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let mut log_choose = 0.0;
    let mut out = Vec::with_capacity(m + 1);
    for l in 0..=m {
        if l > 0 {
            log_choose += ((m - l + 1) as f64).ln() - (l as f64).ln();
        }
        out.push(disc * (log_choose + l as f64 * lp + (m - l) as f64 * lq).exp());
    }
    out
}

impl LatticeResult {
    /// Levels solved.
    pub fn levels(&self) -> usize {
        self.values.len()
    }

    fn row(&self, level: usize) -> Result<&[f64]> {
        if level == 0 || level > self.levels() {
            return Err(Error::Domain(format!(
                "lattice level {level} outside 1..={}",
                self.levels()
            )));
        }
        Ok(&self.values[level - 1])
    }

    /// Value at the root `(0, spot)`.
    pub fn root_value(&self, level: usize) -> Result<f64> {
        Ok(self.row(level)?[self.margin])
    }

    /// Value at `(0, x)`, linear in `ln x` between the two nearest nodes.
    pub fn value_at(&self, level: usize, x: f64) -> Result<f64> {
        let row = self.row(level)?;
        let u = (x / self.spot).ln() / self.up.ln() + self.margin as f64;
        if !(u >= 0.0 && u <= (row.len() - 1) as f64) {
            return Err(Error::Domain(format!(
                "price {x} outside the lattice span around {}",
                self.spot
            )));
        }
        let i = (u.floor() as usize).min(row.len() - 2);
        let w = u - i as f64;
        Ok((1.0 - w) * row[i] + w * row[i + 1])
    }

    /// Ratio between neighbouring lattice prices.
    pub fn price_step(&self) -> f64 {
        self.up
    }

    /// CSV `t,lower_bracket,upper_bracket`; a missing bracket is written as
    /// an empty field.
    pub fn write_brackets_csv<W: Write>(&self, level: usize, mut w: W) -> Result<()> {
        let rows = extract_boundaries(self, level)?;
        writeln!(w, "t,lower_bracket,upper_bracket")?;
        let cell = |v: Option<f64>| v.map(fmt_sig).unwrap_or_default();
        for b in rows {
            writeln!(w, "{},{},{}", fmt_sig(b.t), cell(b.lower), cell(b.upper))?;
        }
        Ok(())
    }
}

/// Per-slice exercise brackets of one level, from `t = 0` to its deadline.
pub fn extract_boundaries(result: &LatticeResult, level: usize) -> Result<Vec<SliceBrackets>> {
    result.row(level)?;
    Ok(result.brackets[level - 1].clone())
}
