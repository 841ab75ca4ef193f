//! Backward solution of the boundary integral equations, level by level.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::curve::{interp_weight, BoundaryCurve, CurveKind};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::io::{fmt_sig, write_text};
use crate::multi_prob::{LevelBoundary, RegionSet};
use crate::params::ModelParams;
use crate::quadrature::time_rule;
use crate::pricer::SwingSolution;
use crate::roots::brent;
use crate::vanilla::put_price;

/// Default Gauss-Legendre points per time cell.
pub const TIME_POINTS: usize = 2;

/// Numerical settings of [`solve`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Coarse steps per maturity; see [`TimeGrid`].
    pub grid_steps: usize,
    /// Residual tolerance relative to the strike.
    pub fixed_point_tol: f64,
    /// Cap on the lower/upper alternations per node.
    pub max_iters: usize,
    /// Relaxation of the alternation between the two boundaries.
    pub damping: f64,
    /// Start every node search at `K ∓ offset·K` instead of the values found
    /// at the next node.
    pub start_offset: Option<f64>,
    /// Gauss-Legendre points per time cell in the premium integrals.
    pub time_points: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            grid_steps: 200,
            fixed_point_tol: 1e-8,
            max_iters: 200,
            damping: 1.0,
            start_offset: None,
            time_points: TIME_POINTS,
        }
    }
}

impl SolverConfig {
    pub fn with_steps(grid_steps: usize) -> Self {
        SolverConfig {
            grid_steps,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: &str| {
            Err(Error::InvalidParams {
                name,
                reason: reason.to_string(),
            })
        };
        if self.grid_steps < 16 {
            return bad("grid_steps", "must be at least 16");
        }
        if !(self.fixed_point_tol > 0.0) {
            return bad("fixed_point_tol", "must be positive");
        }
        if self.max_iters == 0 {
            return bad("max_iters", "must be positive");
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad("damping", "must lie in (0, 1]");
        }
        if !(1..=8).contains(&self.time_points) {
            return bad("time_points", "must lie in 1..=8");
        }
        if let Some(o) = self.start_offset {
            if !(o > 0.0 && o < 1.0) {
                return bad("start_offset", "must lie in (0, 1)");
            }
        }
        Ok(())
    }
}

/// Per-level solver statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelDiagnostics {
    pub level: usize,
    pub nodes: usize,
    pub max_residual_lower: f64,
    pub max_residual_upper: f64,
    /// Largest number of lower/upper alternations at one node.
    pub max_alternations: usize,
    /// Residual evaluations over the whole level.
    pub evaluations: usize,
    /// Nodes whose upper boundary lies beyond the resolvable range and was
    /// set to the search cap.
    #[serde(default)]
    pub capped_upper: usize,
}

/// Residuals `|G - V|` at `(t, b(t))` and `(t, c(t))` for one node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeResidual {
    pub t: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Largest boundary-search distance, in strikes.
const UPPER_CAP: f64 = 1024.0;
/// Standard scores beyond which `P_BS` and the tail probabilities lose
/// relative precision.
const RESOLVABLE_SCORE: f64 = 30.0;
/// Residual size, in strikes, below which `F` carries no information.
const ROUNDOFF: f64 = 64.0 * f64::EPSILON;
/// Smallest lower-boundary candidate, in strikes.
const LOWER_FLOOR: f64 = 1e-9;

/// Equation data for one level on its slice of the time grid.
struct LevelProblem<'a> {
    regions: &'a RegionSet,
    params: ModelParams,
    level: usize,
    nodes: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    time_points: usize,
    evaluations: usize,
    /// Whether the latest upper search stopped at its cap.
    capped: bool,
}

impl<'a> LevelProblem<'a> {
    fn new(regions: &'a RegionSet, grid: &TimeGrid, level: usize, time_points: usize) -> Self {
        let params = regions.params;
        let nodes = grid.level_nodes(&params, level);
        let n = nodes.len();
        let k = params.strike;
        let upper_terminal = if level == 1 { f64::INFINITY } else { k };
        LevelProblem {
            regions,
            params,
            level,
            nodes,
            lower: vec![k; n],
            upper: vec![upper_terminal; n],
            time_points,
            evaluations: 0,
            capped: false,
        }
    }

    fn last(&self) -> usize {
        self.nodes.len() - 1
    }

    /// `G⁽ᵐ⁾ - V⁽ᵐ⁾` at `(t_i, x)` with the node-`i` boundary values `b_i`,
    /// `c_i` entering through the first time cell. Positive values mean
    /// stopping is strictly better than the EEP continuation estimate.
    fn residual(&mut self, i: usize, x: f64, b_i: f64, c_i: f64) -> f64 {
        let (f, _) = self.residual_parts(i, x, b_i, c_i);
        f
    }

    /// `(F, P)` with `F = G - V` and `P = P_BS(x, H - t_i)` the scale of `F`
    /// above the strike.
    fn residual_parts(&mut self, i: usize, x: f64, b_i: f64, c_i: f64) -> (f64, f64) {
        self.evaluations += 1;
        let p = &self.params;
        let t = self.nodes[i];
        let horizon = self.nodes[self.last()];
        let rule = time_rule(self.time_points);
        let mut premium = 0.0;
        for j in i..self.last() {
            let (t0, t1) = (self.nodes[j], self.nodes[j + 1]);
            let (bj, cj) = if j == i {
                (b_i, c_i)
            } else {
                (self.lower[j], self.upper[j])
            };
            let (b1, c1) = (self.lower[j + 1], self.upper[j + 1]);
            let f = |s: f64| {
                let v = s - t;
                let w = interp_weight(t0, t1, s, horizon);
                let b = bj + w * (b1 - bj);
                let c = if cj == c1 { cj } else { cj + w * (c1 - cj) };
                (-p.r * v).exp() * self.regions.continuation_rate(self.level, s, x, v, b, c)
            };
            premium += rule.integrate_cell(t, t0, t1, f);
        }
        let put = put_price(x, horizon - t, p);
        ((p.strike - x).max(0.0) - put + p.r * p.strike * premium, put)
    }

    /// Root of the lower equation at node `i` for a fixed `c_i`.
    fn solve_lower(&mut self, i: usize, start: f64, c_i: f64, xtol: f64) -> Result<(f64, f64)> {
        let k = self.params.strike;
        let floor = LOWER_FLOOR * k;
        let top = k * (1.0 - 1e-12);
        let mut x0 = start.clamp(floor, top);
        let mut f0 = self.residual(i, x0, x0, c_i);
        let mut trace = vec![f0];
        let step0 = (0.25 * (self.lower[i + 1] - self.lower[(i + 2).min(self.last())]).abs())
            .max(1e-6 * k);
        // Below the root the equation is almost flat, and far below it the
        // first cell's coupling can push it slightly negative again. The
        // true stopping interval is a few first-cell standard deviations
        // wide, so never step further than one.
        let max_step = self.params.sigma * (self.nodes[i + 1] - self.nodes[i]).sqrt() * k;
        // continuation above the root (F < 0), stopping below it (F > 0)
        let (mut x1, mut f1);
        if f0 < 0.0 {
            let mut step = step0.min(max_step);
            loop {
                x1 = (x0 - step).max(floor);
                f1 = self.residual(i, x1, x1, c_i);
                trace.push(f1);
                if f1 >= 0.0 {
                    break;
                }
                if x1 <= floor {
                    return Err(self.fail(i, f1, "no sign change above the lower floor", trace));
                }
                x0 = x1;
                f0 = f1;
                step = (2.0 * step).min(max_step);
            }
        } else {
            let mut gap = 0.5 * (top - x0);
            loop {
                x1 = (x0 + gap).min(top);
                f1 = self.residual(i, x1, x1, c_i);
                trace.push(f1);
                if f1 < 0.0 {
                    break;
                }
                if gap < 1e-13 * k {
                    return Err(self.fail(i, f1, "no continuation below the strike", trace));
                }
                x0 = x1;
                f0 = f1;
                gap *= 0.5;
            }
        }
        let root = brent(|x| self.residual(i, x, x, c_i), x0, x1, f0, f1, xtol, 200)
            .ok_or_else(|| self.fail(i, f1, "bracketed search did not converge", trace.clone()))?;
        Ok((root.x, root.fx))
    }

    /// Root of the upper equation at node `i` for a fixed `b_i`.
    ///
    /// Above the strike `F` is exponentially small, so the search runs on
    /// `F / P` and stops where `P` would underflow.
    fn solve_upper(&mut self, i: usize, start: f64, b_i: f64, xtol: f64) -> Result<(f64, f64)> {
        let k = self.params.strike;
        let p = self.params;
        let span = self.nodes[self.last()] - self.nodes[i];
        let reach = RESOLVABLE_SCORE * p.sigma * span.sqrt() + p.log_drift().abs() * span;
        let cap = (k * reach.exp()).min(UPPER_CAP * k);
        let bottom = k * (1.0 + 1e-12);
        let ratio = |me: &mut Self, x: f64| {
            let (f, put) = me.residual_parts(i, x, b_i, x);
            f / put
        };
        self.capped = false;
        let mut x0 = start.clamp(bottom, cap);
        let mut f0 = ratio(self, x0);
        let mut trace = vec![f0];
        let step0 = (0.25 * (self.upper[(i + 2).min(self.last())] - self.upper[i + 1]).abs())
            .max(1e-6 * k);
        // continuation below the root (F < 0), stopping above it (F > 0)
        let (mut x1, mut f1);
        if f0 < 0.0 {
            let mut step = step0;
            loop {
                x1 = (x0 + step).min(cap);
                f1 = ratio(self, x1);
                trace.push(f1);
                if f1 >= 0.0 {
                    break;
                }
                if x1 >= cap {
                    // the equation cannot be resolved further out in double precision
                    let (f, _) = self.residual_parts(i, cap, b_i, cap);
                    self.capped = true;
                    return Ok((cap, f));
                }
                x0 = x1;
                f0 = f1;
                step *= 2.0;
            }
        } else {
            let mut gap = 0.5 * (x0 - bottom);
            loop {
                x1 = (x0 - gap).max(bottom);
                f1 = ratio(self, x1);
                trace.push(f1);
                if f1 < 0.0 {
                    break;
                }
                if gap < 1e-13 * k {
                    return Err(self.fail(i, f1, "no continuation above the strike", trace));
                }
                x0 = x1;
                f0 = f1;
                gap *= 0.5;
            }
        }
        let root = brent(|x| ratio(self, x), x0, x1, f0, f1, xtol, 200)
            .ok_or_else(|| self.fail(i, f1, "bracketed search did not converge", trace.clone()))?;
        let (f, _) = self.residual_parts(i, root.x, b_i, root.x);
        Ok((root.x, f))
    }

    fn fail(&self, node: usize, residual: f64, reason: &str, trace: Vec<f64>) -> Error {
        Error::NonConvergence {
            level: self.level,
            node,
            residual,
            reason: reason.to_string(),
            trace,
        }
    }

    /// Backward sweep over all nodes.
    fn solve(&mut self, config: &SolverConfig) -> Result<LevelDiagnostics> {
        let k = self.params.strike;
        let xtol = 1e-11 * k;
        let tol = config.fixed_point_tol * k;
        let two_sided = self.level >= 2;
        let mut max_alt = 0;
        let mut res_lo = 0.0_f64;
        let mut res_hi = 0.0_f64;
        let mut capped = 0;
        for i in (0..self.last()).rev() {
            let (mut b, mut c) = match config.start_offset {
                Some(o) => (k * (1.0 - o), if two_sided { k * (1.0 + o) } else { f64::INFINITY }),
                None => (self.lower[i + 1], self.upper[i + 1]),
            };
            let mut fb;
            let mut fc;
            let mut alternations = 0;
            loop {
                alternations += 1;
                let (nb, rb) = self.solve_lower(i, b, c, xtol)?;
                // a single equation needs no relaxation
                let b_new = if two_sided { b + config.damping * (nb - b) } else { nb };
                let (nc, rc) = if two_sided {
                    self.solve_upper(i, c, b_new, xtol)?
                } else {
                    (f64::INFINITY, 0.0)
                };
                let c_new = if two_sided { c + config.damping * (nc - c) } else { nc };
                let moved = (b_new - b).abs().max(if two_sided { (c_new - c).abs() } else { 0.0 });
                b = b_new;
                c = c_new;
                fb = rb;
                fc = rc;
                // when both residuals are at rounding level the roots are only
                // defined up to noise and further alternation just wanders
                let noise = two_sided
                    && rb.abs().max(rc.abs()) <= ROUNDOFF * k
                    && self.residual(i, b_new, b_new, c_new).abs() <= ROUNDOFF * k;
                let settled = moved <= 10.0 * xtol || !two_sided || noise;
                if settled && config.damping == 1.0 {
                    break;
                }
                if settled && fb.abs() <= tol && fc.abs() <= tol {
                    break;
                }
                if alternations >= config.max_iters {
                    return Err(Error::NonConvergence {
                        level: self.level,
                        node: i,
                        residual: fb.abs().max(fc.abs()),
                        reason: "lower/upper alternation did not settle".into(),
                        trace: vec![b, c],
                    });
                }
            }
            if two_sided {
                // the last solves ran before relaxation; re-evaluate at (b, c)
                fb = self.residual(i, b, b, c);
                fc = self.residual(i, c, b, c);
            }
            if fb.abs() > tol || fc.abs() > tol {
                return Err(Error::NonConvergence {
                    level: self.level,
                    node: i,
                    residual: fb.abs().max(fc.abs()),
                    reason: "residual above tolerance after root search".into(),
                    trace: vec![fb, fc],
                });
            }
            self.lower[i] = b;
            self.upper[i] = c;
            if two_sided && self.capped {
                capped += 1;
            }
            max_alt = max_alt.max(alternations);
            res_lo = res_lo.max(fb.abs());
            res_hi = res_hi.max(fc.abs());
        }
        Ok(LevelDiagnostics {
            level: self.level,
            nodes: self.nodes.len(),
            max_residual_lower: res_lo,
            max_residual_upper: res_hi,
            max_alternations: max_alt,
            evaluations: self.evaluations,
            capped_upper: capped,
        })
    }

    fn into_boundary(self) -> Result<LevelBoundary> {
        let lower = BoundaryCurve::new(self.nodes.clone(), self.lower, CurveKind::Lower)?;
        let upper = BoundaryCurve::new(self.nodes, self.upper, CurveKind::Upper)?;
        Ok(LevelBoundary {
            level: self.level,
            lower,
            upper,
        })
    }
}

/// Shape checks every solved level must pass.
fn check_integrity(lb: &LevelBoundary, k: f64) -> Result<()> {
    let fail = |node: usize, reason: String| {
        Err(Error::Integrity {
            level: lb.level,
            node,
            reason,
        })
    };
    let n = lb.lower.len();
    let mono_tol = 1e-9 * k;
    for i in 0..n - 1 {
        let (b0, b1) = (lb.lower.values[i], lb.lower.values[i + 1]);
        if b0 > b1 + mono_tol {
            return fail(i, format!("lower boundary decreases: {b0} > {b1}"));
        }
        if !(b0 > 0.0 && b0 < k) {
            return fail(i, format!("lower boundary {b0} outside (0, K)"));
        }
        let (c0, c1) = (lb.upper.values[i], lb.upper.values[i + 1]);
        if lb.level >= 2 {
            if !c0.is_finite() {
                return fail(i, "upper boundary is not finite".into());
            }
            if c0 + mono_tol < c1 {
                return fail(i, format!("upper boundary increases: {c0} < {c1}"));
            }
            if c0 <= k {
                return fail(i, format!("upper boundary {c0} not above K"));
            }
        }
    }
    Ok(())
}

/// Solves level 1 only (the American put) on the grid implied by `config`.
pub(crate) fn solve_single_level(params: &ModelParams, config: &SolverConfig) -> Result<LevelBoundary> {
    config.validate()?;
    let grid = TimeGrid::new(params, config.grid_steps)?;
    let regions = RegionSet::empty(*params);
    let mut problem = LevelProblem::new(&regions, &grid, 1, config.time_points);
    problem.solve(config)?;
    let lb = problem.into_boundary()?;
    check_integrity(&lb, params.strike)?;
    Ok(lb)
}

/// Solves levels `1..=params.rights` backward in time.
pub fn solve(params: &ModelParams, config: &SolverConfig) -> Result<SwingSolution> {
    params.validate()?;
    config.validate()?;
    let grid = TimeGrid::new(params, config.grid_steps)?;
    let mut regions = RegionSet::empty(*params);
    let mut diagnostics = Vec::with_capacity(params.rights);
    for level in 1..=params.rights {
        let mut problem = LevelProblem::new(&regions, &grid, level, config.time_points);
        let diag = problem.solve(config)?;
        let lb = problem.into_boundary()?;
        check_integrity(&lb, params.strike)?;
        regions.push(lb);
        diagnostics.push(diag);
    }
    Ok(SwingSolution {
        params: *params,
        config: *config,
        grid,
        regions,
        diagnostics,
    })
}

/// Re-evaluates `|G - V|` at both boundaries of every node below the horizon.
pub fn residuals(solution: &SwingSolution, level: usize) -> Result<Vec<NodeResidual>> {
    let lb = solution.regions.level(level)?;
    let mut out = Vec::with_capacity(lb.lower.len());
    for (i, &t) in lb.lower.grid.iter().enumerate() {
        if i + 1 == lb.lower.len() {
            break;
        }
        let b = lb.lower.values[i];
        let lower = (solution.gain(level, t, b)? - solution.value_eep(level, t, b)?).abs();
        let upper = if level >= 2 {
            let c = lb.upper.values[i];
            (solution.gain(level, t, c)? - solution.value_eep(level, t, c)?).abs()
        } else {
            0.0
        };
        out.push(NodeResidual { t, lower, upper });
    }
    Ok(out)
}

/// JSON bundle: parameters, configuration, per-level `{t, b, c}` and diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionBundle {
    pub params: ModelParams,
    pub config: SolverConfig,
    pub levels: Vec<LevelArrays>,
    pub diagnostics: Vec<LevelDiagnostics>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelArrays {
    pub level: usize,
    pub t: Vec<f64>,
    pub b: Vec<f64>,
    /// `None` marks the `+∞` sentinel of level 1.
    pub c: Vec<Option<f64>>,
}

impl SwingSolution {
    pub fn to_bundle(&self) -> SolutionBundle {
        SolutionBundle {
            params: self.params,
            config: self.config,
            levels: self
                .regions
                .levels
                .iter()
                .map(|lb| LevelArrays {
                    level: lb.level,
                    t: lb.lower.grid.clone(),
                    b: lb.lower.values.clone(),
                    c: lb
                        .upper
                        .values
                        .iter()
                        .map(|&v| v.is_finite().then_some(v))
                        .collect(),
                })
                .collect(),
            diagnostics: self.diagnostics.clone(),
        }
    }

    /// Rebuilds a solution from a bundle without re-solving.
    pub fn from_bundle(bundle: SolutionBundle) -> Result<Self> {
        bundle.params.validate()?;
        let grid = TimeGrid::new(&bundle.params, bundle.config.grid_steps)?;
        let mut levels = Vec::with_capacity(bundle.levels.len());
        for la in bundle.levels {
            let c = la.c.iter().map(|v| v.unwrap_or(f64::INFINITY)).collect();
            levels.push(LevelBoundary {
                level: la.level,
                lower: BoundaryCurve::new(la.t.clone(), la.b, CurveKind::Lower)?,
                upper: BoundaryCurve::new(la.t, c, CurveKind::Upper)?,
            });
        }
        let regions = RegionSet::new(bundle.params, levels)?;
        Ok(SwingSolution {
            params: bundle.params,
            config: bundle.config,
            grid,
            regions,
            diagnostics: bundle.diagnostics,
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_bundle())?;
        write_text(path, &text)
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let bundle: SolutionBundle = serde_json::from_str(&text)?;
        Self::from_bundle(bundle)
    }

    /// CSV `t,b,c` for one level; the `+∞` sentinel is written as `inf`.
    pub fn write_level_csv<W: Write>(&self, level: usize, mut w: W) -> Result<()> {
        let lb = self.regions.level(level)?;
        writeln!(w, "t,b,c")?;
        for ((t, b), c) in lb
            .lower
            .grid
            .iter()
            .zip(&lb.lower.values)
            .zip(&lb.upper.values)
        {
            writeln!(w, "{},{},{}", fmt_sig(*t), fmt_sig(*b), fmt_sig(*c))?;
        }
        Ok(())
    }
}
