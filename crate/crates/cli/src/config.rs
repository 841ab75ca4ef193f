//! Run configuration: JSON file, then command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use swing_core::{ModelParams, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub params: ModelParams,
    pub solver: SolverConfig,
    pub price: PriceOptions,
    pub oracle: OracleOptions,
    pub mc: McOptions,
    pub sweep: Option<SweepOptions>,
    /// Output directory; `--out` and `SWING_OUT_DIR` take precedence.
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            params: ModelParams::base(),
            solver: SolverConfig::default(),
            price: PriceOptions::default(),
            oracle: OracleOptions::default(),
            mc: McOptions::default(),
            sweep: None,
            out: None,
        }
    }
}

/// Probe mesh of `price`; an empty `levels` means every level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriceOptions {
    pub times: Vec<f64>,
    pub prices: Vec<f64>,
    pub levels: Vec<usize>,
}

impl Default for PriceOptions {
    fn default() -> Self {
        PriceOptions {
            times: vec![0.0],
            prices: vec![0.8, 0.9, 1.0, 1.1, 1.2],
            levels: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleOptions {
    pub steps: usize,
    /// Start prices compared at `t = 0`.
    pub prices: Vec<f64>,
    /// Trailing share of slices left out of the bracket comparison.
    pub tail_share: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            steps: 5000,
            prices: vec![0.8, 0.9, 1.0, 1.1, 1.2],
            tail_share: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McOptions {
    pub paths: usize,
    pub steps_per_year: usize,
    pub seed: u64,
    pub t0: f64,
    pub x0: f64,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions {
            paths: 200_000,
            steps_per_year: 2000,
            seed: 1,
            t0: 0.0,
            x0: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    R,
    Sigma,
    Delta,
    Rights,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::R => "r",
            SweepParam::Sigma => "sigma",
            SweepParam::Delta => "delta",
            SweepParam::Rights => "rights",
        }
    }

    pub fn apply(self, p: &ModelParams, v: f64) -> anyhow::Result<ModelParams> {
        let mut q = *p;
        match self {
            SweepParam::R => q.r = v,
            SweepParam::Sigma => q.sigma = v,
            SweepParam::Delta => q.refract = v,
            SweepParam::Rights => {
                if !(v >= 1.0 && v.fract() == 0.0) {
                    bail!("rights must be a positive integer, got {v}");
                }
                q.rights = v as usize;
            }
        }
        q.validate()?;
        Ok(q)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepOptions {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

/// Per-parameter overrides from the command line.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct ParamFlags {
    /// Interest rate per year.
    #[arg(long)]
    pub r: Option<f64>,
    /// Volatility per square-root year.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub strike: Option<f64>,
    /// Maturity in years.
    #[arg(long)]
    pub maturity: Option<f64>,
    /// Refracting period in years.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub rights: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }

    pub fn apply_params(&mut self, f: &ParamFlags) {
        let p = &mut self.params;
        if let Some(v) = f.r {
            p.r = v;
        }
        if let Some(v) = f.sigma {
            p.sigma = v;
        }
        if let Some(v) = f.strike {
            p.strike = v;
        }
        if let Some(v) = f.maturity {
            p.maturity = v;
        }
        if let Some(v) = f.delta {
            p.refract = v;
        }
        if let Some(v) = f.rights {
            p.rights = v;
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.params.validate()?;
        self.solver.validate()?;
        if self.price.times.is_empty() || self.price.prices.is_empty() {
            bail!("price probe mesh must not be empty");
        }
        if self.oracle.prices.is_empty() {
            bail!("oracle probe list must not be empty");
        }
        if !(0.0..1.0).contains(&self.oracle.tail_share) {
            bail!("oracle tail_share must lie in [0, 1)");
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                bail!("sweep values must not be empty");
            }
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        swing_core::io::write_text(path, &text)?;
        Ok(())
    }
}
