use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Contract and market inputs of a swing put under Black-Scholes dynamics.
///
/// All times are in years. `refract` is the minimum waiting time between two
/// exercises and also spaces the per-right deadlines `T - (k-1)·refract`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub r: f64,
    pub sigma: f64,
    pub strike: f64,
    pub maturity: f64,
    pub refract: f64,
    pub rights: usize,
}

impl ModelParams {
    pub fn new(
        r: f64,
        sigma: f64,
        strike: f64,
        maturity: f64,
        refract: f64,
        rights: usize,
    ) -> Result<Self> {
        let p = ModelParams {
            r,
            sigma,
            strike,
            maturity,
            refract,
            rights,
        };
        p.validate()?;
        Ok(p)
    }

    /// K = 1, r = 0.05, σ = 0.2, T = 6 months, δ = 1 month, two rights.
    pub fn base() -> Self {
        ModelParams {
            r: 0.05,
            sigma: 0.2,
            strike: 1.0,
            maturity: 0.5,
            refract: 1.0 / 12.0,
            rights: 2,
        }
    }

    /// K = 1, σ = 0.4, T = 11 months, δ = 1 month, two rights, at rate `r`.
    pub fn volatile(r: f64) -> Self {
        ModelParams {
            r,
            sigma: 0.4,
            strike: 1.0,
            maturity: 11.0 / 12.0,
            refract: 1.0 / 12.0,
            rights: 2,
        }
    }

    /// The base market with four rights.
    pub fn four_rights() -> Self {
        ModelParams {
            rights: 4,
            ..Self::base()
        }
    }

    pub fn with_rights(self, rights: usize) -> Self {
        ModelParams { rights, ..self }
    }

    pub fn with_rate(self, r: f64) -> Self {
        ModelParams { r, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: &str| {
            Err(Error::InvalidParams {
                name,
                reason: reason.to_string(),
            })
        };
        if !(self.r >= 0.0 && self.r.is_finite()) {
            return bad("r", "must be finite and non-negative");
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad("sigma", "must be finite and positive");
        }
        if !(self.strike > 0.0 && self.strike.is_finite()) {
            return bad("strike", "must be finite and positive");
        }
        if !(self.maturity > 0.0 && self.maturity.is_finite()) {
            return bad("maturity", "must be finite and positive");
        }
        if !(self.refract > 0.0 && self.refract.is_finite()) {
            return bad("refract", "must be finite and positive");
        }
        if self.rights == 0 {
            return bad("rights", "at least one right is required");
        }
        let needed = (self.rights - 1) as f64 * self.refract;
        if self.maturity < needed * (1.0 - 1e-12) {
            return bad(
                "maturity",
                &format!(
                    "{} rights spaced by {} need maturity >= {}",
                    self.rights, self.refract, needed
                ),
            );
        }
        Ok(())
    }

    /// `T - k·δ`: the last admissible exercise time of the right that still
    /// has `k` rights behind it. Level `n` lives on `[0, deadline(n-1)]`.
    pub fn deadline(&self, k: usize) -> f64 {
        (self.maturity - k as f64 * self.refract).max(0.0)
    }

    /// Horizon of the level-`level` stopping problem.
    pub fn horizon(&self, level: usize) -> f64 {
        debug_assert!(level >= 1);
        self.deadline(level - 1)
    }

    /// Drift of the log price, `r - σ²/2`.
    pub fn log_drift(&self) -> f64 {
        self.r - 0.5 * self.sigma * self.sigma
    }

    pub(crate) fn check_level(&self, level: usize) -> Result<()> {
        if level == 0 || level > self.rights {
            return Err(Error::Domain(format!(
                "level {level} outside 1..={}",
                self.rights
            )));
        }
        Ok(())
    }

    pub(crate) fn check_time(&self, what: &'static str, t: f64, horizon: f64) -> Result<()> {
        if !(t >= -1e-12 && t <= horizon + 1e-12) {
            return Err(Error::Horizon {
                what,
                time: t,
                horizon,
            });
        }
        Ok(())
    }
}
