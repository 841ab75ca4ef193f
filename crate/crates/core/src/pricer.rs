//! Gains, values and region labels of a solved swing contract.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::norm_pdf;
use crate::grid::TimeGrid;
use crate::io::fmt_sig;
use crate::multi_prob::RegionSet;
use crate::params::ModelParams;
use crate::quadrature::{gl8, GAUSS_CUTOFF};
use crate::solver::{LevelDiagnostics, SolverConfig};
use crate::vanilla::{cell_points, check_price, put_price};

/// Solved boundaries of levels `1..=rights` with everything needed to price.
#[derive(Debug, Clone, PartialEq)]
pub struct SwingSolution {
    pub params: ModelParams,
    pub config: SolverConfig,
    pub grid: TimeGrid,
    pub regions: RegionSet,
    pub diagnostics: Vec<LevelDiagnostics>,
}

/// Position of `(t, x)` relative to the boundaries of one level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionLabel {
    StopLow,
    Continue,
    StopHigh,
}

impl RegionLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            RegionLabel::StopLow => "stop_low",
            RegionLabel::Continue => "continue",
            RegionLabel::StopHigh => "stop_high",
        }
    }

    pub fn is_stop(self) -> bool {
        self != RegionLabel::Continue
    }
}

/// Panels of the 256-node rule used by [`SwingSolution::gain_by_quadrature`].
const GAIN_PANELS: usize = 32;

impl SwingSolution {
    /// Solved depth.
    pub fn levels(&self) -> usize {
        self.regions.depth()
    }

    fn check(&self, what: &'static str, level: usize, t: f64, x: f64) -> Result<f64> {
        self.regions.level(level)?;
        let h = self.params.horizon(level);
        self.params.check_time(what, t, h)?;
        check_price(x)?;
        Ok(h)
    }

    /// `J⁽ᵐ⁾(t, x) = Σ_{k<m} P_BS(x, T - kδ - t)`: the discounted terminal gain
    /// when every right is held to its deadline.
    pub fn leg_j(&self, level: usize, t: f64, x: f64) -> Result<f64> {
        self.check("leg_j", level, t, x)?;
        Ok(self.european_legs(level, t, x))
    }

    fn european_legs(&self, n: usize, t: f64, x: f64) -> f64 {
        (0..n)
            .map(|k| put_price(x, self.params.deadline(k) - t, &self.params))
            .sum()
    }

    /// `G⁽ᵐ⁾(t, x) = (K - x)⁺ + e^{-rδ} E[V⁽ᵐ⁻¹⁾(t + δ, X_δ)]`, with the
    /// expectation expanded through the early-exercise-premium form of
    /// `V⁽ᵐ⁻¹⁾`.
    pub fn gain(&self, level: usize, t: f64, x: f64) -> Result<f64> {
        let h = self.check("gain", level, t, x)?;
        let p = &self.params;
        let mut g = (p.strike - x).max(0.0) + self.european_legs(level - 1, t, x);
        if level >= 2 {
            let nodes = self.grid.level_nodes(p, level);
            let premium: f64 = cell_points(&nodes, t, h, self.config.time_points)
                .into_iter()
                .map(|(w, s)| {
                    let v = s - t;
                    w * (-p.r * v).exp() * self.regions.expected_psi(level, s, x, v)
                })
                .sum();
            g += p.r * p.strike * premium;
        }
        Ok(g)
    }

    /// The same gain with `E[V⁽ᵐ⁻¹⁾(t + δ, X_δ)]` computed by a 256-node
    /// composite Gauss-Legendre rule against the lognormal transition.
    pub fn gain_by_quadrature(&self, level: usize, t: f64, x: f64) -> Result<f64> {
        self.check("gain_by_quadrature", level, t, x)?;
        let p = &self.params;
        let d = p.refract;
        let payoff = (p.strike - x).max(0.0);
        let s = t + d;
        let mean = x.ln() + p.log_drift() * d;
        let sd = p.sigma * d.sqrt();
        let h = 2.0 * GAUSS_CUTOFF / GAIN_PANELS as f64;
        let rule = gl8();
        let mut acc = 0.0;
        let mut err = None;
        for i in 0..GAIN_PANELS {
            let a = -GAUSS_CUTOFF + i as f64 * h;
            acc += rule.integrate(a, a + h, |xi| {
                let y = (mean + sd * xi).exp();
                let v = if level == 1 {
                    Ok(0.0)
                } else {
                    self.value_eep(level - 1, s, y)
                };
                match v {
                    Ok(v) => norm_pdf(xi) * v,
                    Err(e) => {
                        err.get_or_insert(e);
                        0.0
                    }
                }
            });
        }
        if let Some(e) = err {
            return Err(e);
        }
        Ok(payoff + (-p.r * d).exp() * acc)
    }

    /// `V⁽ᵐ⁾(t, x) = J⁽ᵐ⁾ + rK ∫_0^{H_m - t} e^{-rv} Σ_j e^{-rjδ} p⁽ᵐ⁾_j(t, x, v) dv`,
    /// on the solver's time grid.
    pub fn value_eep(&self, level: usize, t: f64, x: f64) -> Result<f64> {
        let h = self.check("value_eep", level, t, x)?;
        let p = &self.params;
        let lb = self.regions.level(level)?;
        let nodes = &lb.lower.grid;
        let premium: f64 = cell_points(nodes, t, h, self.config.time_points)
            .into_iter()
            .map(|(w, s)| {
                let v = s - t;
                let (b, c) = (lb.lower.at(s), lb.upper.at(s));
                w * (-p.r * v).exp() * self.regions.expected_rate(level, s, x, v, b, c)
            })
            .sum();
        Ok(self.european_legs(level, t, x) + p.r * p.strike * premium)
    }

    /// `V⁽ᵐ⁾(t, x)`: the gain on the stopping set, the EEP value elsewhere.
    pub fn value(&self, level: usize, t: f64, x: f64) -> Result<f64> {
        if self.classify(level, t, x)?.is_stop() {
            self.gain(level, t, x)
        } else {
            self.value_eep(level, t, x)
        }
    }

    /// `H⁽ᵐ⁾(t, x) = -rK (I(x < K) + Ψ⁽ᵐ⁻¹⁾(t, x))`, where
    /// `Ψ⁽ᵐ⁻¹⁾(t, x) = Σ_{j ≤ m-2} e^{-r(j+1)δ} p⁽ᵐ⁻¹⁾_j(t, x, δ)`. Undefined at `x = K`.
    pub fn h_func(&self, level: usize, t: f64, x: f64) -> Result<f64> {
        self.check("h_func", level, t, x)?;
        let p = &self.params;
        if x == p.strike {
            return Err(Error::Domain("H is undefined on the strike line".into()));
        }
        let below = if x < p.strike { 1.0 } else { 0.0 };
        Ok(-p.r * p.strike * (below + self.regions.psi(level - 1, t, x)))
    }

    pub fn classify(&self, level: usize, t: f64, x: f64) -> Result<RegionLabel> {
        self.check("classify", level, t, x)?;
        let lb = self.regions.level(level)?;
        Ok(if x <= lb.lower.at(t) {
            RegionLabel::StopLow
        } else if x >= lb.upper.at(t) {
            RegionLabel::StopHigh
        } else {
            RegionLabel::Continue
        })
    }

    /// CSV `t,x,level,value,label` over a mesh; rows outside a level's horizon
    /// carry `nan,error`.
    pub fn write_price_surface<W: Write>(
        &self,
        times: &[f64],
        prices: &[f64],
        levels: &[usize],
        mut w: W,
    ) -> Result<()> {
        writeln!(w, "t,x,level,value,label")?;
        for &level in levels {
            for &t in times {
                for &x in prices {
                    let row = self
                        .value(level, t, x)
                        .and_then(|v| Ok((v, self.classify(level, t, x)?)));
                    let (v, label) = match row {
                        Ok((v, l)) => (fmt_sig(v), l.as_str()),
                        Err(_) => ("nan".to_string(), "error"),
                    };
                    writeln!(w, "{},{},{},{},{}", fmt_sig(t), fmt_sig(x), level, v, label)?;
                }
            }
        }
        Ok(())
    }
}
