//! Exercise boundaries sampled on a time grid.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_sig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    Lower,
    Upper,
}

/// A monotone boundary `t ↦ value` on `[0, horizon]`, linear in
/// `√(horizon - t)` between nodes (boundaries approach their terminal value
/// like a square root).
///
/// Lower curves are nondecreasing, upper curves nonincreasing. An upper curve
/// with every value `+∞` is the sentinel of a level with no upper boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCurve {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub kind: CurveKind,
    pub horizon: f64,
    pub terminal_value: f64,
}

/// Weight of the right node when interpolating at `t ∈ [t0, t1]` linearly
/// in `√(horizon - t)`.
#[inline]
pub fn interp_weight(t0: f64, t1: f64, t: f64, horizon: f64) -> f64 {
    let s0 = (horizon - t0).max(0.0).sqrt();
    let s1 = (horizon - t1).max(0.0).sqrt();
    let s = (horizon - t).max(0.0).sqrt();
    if s0 > s1 {
        ((s0 - s) / (s0 - s1)).clamp(0.0, 1.0)
    } else {
        (t - t0) / (t1 - t0)
    }
}

impl BoundaryCurve {
    pub fn new(grid: Vec<f64>, values: Vec<f64>, kind: CurveKind) -> Result<Self> {
        if grid.len() < 2 || grid.len() != values.len() {
            return Err(Error::Domain(format!(
                "curve needs matching grid/value lengths >= 2 (got {} and {})",
                grid.len(),
                values.len()
            )));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("curve grid must be strictly increasing".into()));
        }
        let horizon = *grid.last().unwrap();
        let terminal_value = *values.last().unwrap();
        Ok(BoundaryCurve {
            grid,
            values,
            kind,
            horizon,
            terminal_value,
        })
    }

    /// Constant curve, e.g. the `+∞` upper sentinel or a zero lower curve.
    pub fn constant(grid: Vec<f64>, value: f64, kind: CurveKind) -> Self {
        let values = vec![value; grid.len()];
        BoundaryCurve::new(grid, values, kind).expect("valid grid")
    }

    pub fn infinite_upper(grid: Vec<f64>) -> Self {
        BoundaryCurve::constant(grid, f64::INFINITY, CurveKind::Upper)
    }

    pub fn is_infinite(&self) -> bool {
        self.values.iter().all(|v| v.is_infinite())
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Boundary value at `t`; times beyond the horizon are rejected.
    pub fn eval(&self, t: f64) -> Result<f64> {
        let tol = 1e-12 * self.horizon.max(1.0);
        if !(t >= -tol && t <= self.horizon + tol) {
            return Err(Error::Horizon {
                what: "boundary evaluation",
                time: t,
                horizon: self.horizon,
            });
        }
        Ok(self.at(t))
    }

    /// Unchecked evaluation; `t` is clamped to `[0, horizon]`.
    #[inline]
    pub fn at(&self, t: f64) -> f64 {
        let g = &self.grid;
        if t <= g[0] {
            return self.values[0];
        }
        if t >= self.horizon {
            return self.terminal_value;
        }
        let j = g.partition_point(|&s| s <= t).clamp(1, g.len() - 1);
        self.between(j - 1, t)
    }

    #[inline]
    fn between(&self, i: usize, t: f64) -> f64 {
        let (a, b) = (self.values[i], self.values[i + 1]);
        if a == b {
            return a;
        }
        let w = interp_weight(self.grid[i], self.grid[i + 1], t, self.horizon);
        a + w * (b - a)
    }

    /// Largest violation of the monotonicity expected from `kind`.
    pub fn monotonicity_violation(&self) -> f64 {
        self.values
            .windows(2)
            .map(|w| match self.kind {
                CurveKind::Lower => w[0] - w[1],
                CurveKind::Upper => w[1] - w[0],
            })
            .filter(|d| d.is_finite())
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,value")?;
        for (t, v) in self.grid.iter().zip(&self.values) {
            writeln!(w, "{},{}", fmt_sig(*t), fmt_sig(*v))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R, kind: CurveKind) -> Result<Self> {
        let mut grid = Vec::new();
        let mut values = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if i == 0 {
                if line.trim() != "t,value" {
                    return Err(Error::Format(format!("unexpected header `{line}`")));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64> {
                s.ok_or_else(|| Error::Format(format!("short row {}", i + 1)))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("row {}: {e}", i + 1)))
            };
            grid.push(parse(parts.next())?);
            values.push(parse(parts.next())?);
        }
        BoundaryCurve::new(grid, values, kind)
    }
}
