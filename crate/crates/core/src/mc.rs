//! Monte Carlo evaluation of an exercise policy on exact GBM paths.
//!
//! The simulated value of any admissible policy is a lower bound of the swing
//! value, so running the policy read off the solved boundaries tests their
//! optimality from below.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_text;
use crate::params::ModelParams;
use crate::pricer::SwingSolution;

/// Rounding allowance in the refraction check.
const SCHEDULE_SLACK: f64 = 1e-12;

/// Bins of each exercise-time histogram.
pub const HISTOGRAM_BINS: usize = 50;

/// Which rule decides when a right is used.
#[derive(Debug, Clone, Copy)]
pub enum ExercisePolicy<'a> {
    /// Exercise right `k` on first entry into the level-`k` stopping set.
    Boundaries(&'a SwingSolution),
    /// Hold every right to its deadline.
    DeadlinesOnly,
}

/// Exercise-time counts of one right over `[t0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// Rights remaining when this one was used (`rights` is the first exercise).
    pub remaining: usize,
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    /// Sample standard deviation over `√paths`.
    pub std_error: f64,
    pub paths: usize,
    pub seed: u64,
    pub steps_per_year: usize,
    pub t0: f64,
    pub x0: f64,
    /// Share of paths that use their first right strictly before its deadline.
    pub early_first_share: f64,
    pub histograms: Vec<Histogram>,
}

/// Run manifest written next to MC outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCManifest {
    pub params: ModelParams,
    pub policy: String,
    pub estimate: MCEstimate,
}

/// Simulates the policy of the solved boundaries from `(t0, x0)` with all
/// `solution.levels()` rights outstanding.
pub fn simulate_policy(
    solution: &SwingSolution,
    t0: f64,
    x0: f64,
    paths: usize,
    steps_per_year: usize,
    seed: u64,
) -> Result<MCEstimate> {
    let params = ModelParams {
        rights: solution.levels(),
        ..solution.params
    };
    simulate(
        ExercisePolicy::Boundaries(solution),
        &params,
        t0,
        x0,
        paths,
        steps_per_year,
        seed,
    )
}

/// Simulates `policy` for `params.rights` rights.
///
/// Paths are monitored every `1/steps_per_year` from `t0`, plus at every
/// deadline and at the end of every refracting period. Path `i` draws from
/// stream `i` of a ChaCha8 generator keyed by `seed`, so results do not depend
/// on thread scheduling.
pub fn simulate(
    policy: ExercisePolicy<'_>,
    params: &ModelParams,
    t0: f64,
    x0: f64,
    paths: usize,
    steps_per_year: usize,
    seed: u64,
) -> Result<MCEstimate> {
    params.validate()?;
    let n = params.rights;
    if let ExercisePolicy::Boundaries(sol) = policy {
        if sol.levels() < n {
            return Err(Error::Domain(format!(
                "solution has {} levels, policy needs {n}",
                sol.levels()
            )));
        }
    }
    if !(x0 > 0.0 && x0.is_finite()) {
        return Err(Error::Domain(format!("start price must be positive, got {x0}")));
    }
    params.check_time("simulate_policy", t0, params.horizon(n))?;
    if paths < 2 || steps_per_year == 0 {
        return Err(Error::Domain("need at least two paths and one step per year".into()));
    }
    let sim = PathSim {
        policy,
        params,
        t0,
        x0,
        dt: 1.0 / steps_per_year as f64,
    };
    let runs: Vec<PathRun> = (0..paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            sim.run(&mut rng)
        })
        .collect::<Result<_>>()?;

    let payoffs: Vec<f64> = runs.iter().map(|r| r.payoff).collect();
    let mean = pairwise_sum(&payoffs) / paths as f64;
    let dev: Vec<f64> = payoffs.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&dev) / (paths - 1) as f64;
    let deadline = params.horizon(n);
    let early = runs.iter().filter(|r| r.times[0] < deadline).count();
    let histograms = (0..n)
        .map(|i| histogram(n - i, runs.iter().map(|r| r.times[i]), t0, params.maturity))
        .collect();
    Ok(MCEstimate {
        mean,
        std_error: (var / paths as f64).sqrt(),
        paths,
        seed,
        steps_per_year,
        t0,
        x0,
        early_first_share: early as f64 / paths as f64,
        histograms,
    })
}

struct PathSim<'a> {
    policy: ExercisePolicy<'a>,
    params: &'a ModelParams,
    t0: f64,
    x0: f64,
    dt: f64,
}

struct PathRun {
    payoff: f64,
    /// Exercise times, first exercise first.
    times: Vec<f64>,
}

impl PathSim<'_> {
    fn stops(&self, k: usize, t: f64, x: f64) -> bool {
        match self.policy {
            ExercisePolicy::Boundaries(sol) => sol.regions.levels[k - 1].in_stopping_set(t, x),
            ExercisePolicy::DeadlinesOnly => false,
        }
    }

    fn run(&self, rng: &mut ChaCha8Rng) -> Result<PathRun> {
        let p = self.params;
        let drift = p.log_drift();
        let (mut t, mut x) = (self.t0, self.x0);
        let mut tick = 1usize;
        let mut active = self.t0;
        let mut k = p.rights;
        let mut payoff = 0.0;
        let mut times = Vec::with_capacity(k);
        loop {
            let deadline = p.horizon(k);
            if t >= active && (t >= deadline || self.stops(k, t, x)) {
                payoff += (-p.r * (t - self.t0)).exp() * (p.strike - x).max(0.0);
                times.push(t);
                k -= 1;
                if k == 0 {
                    break;
                }
                // clipped so rounding cannot push activation past the deadline
                active = (t + p.refract).min(p.horizon(k));
                continue;
            }
            while self.t0 + tick as f64 * self.dt <= t {
                tick += 1;
            }
            let mut next = (self.t0 + tick as f64 * self.dt).min(deadline);
            if active > t {
                next = next.min(active);
            }
            let h = next - t;
            let z: f64 = rng.sample(StandardNormal);
            x *= (drift * h + p.sigma * h.sqrt() * z).exp();
            t = next;
        }
        self.check_schedule(&times)?;
        Ok(PathRun { payoff, times })
    }

    /// Refraction: `τ_{i+1} + δ ≤ τ_i` and `τ_i ≤ T - (i-1)δ`, with `τ_n` the
    /// first exercise.
    fn check_schedule(&self, times: &[f64]) -> Result<()> {
        let p = self.params;
        for (j, &tau) in times.iter().enumerate() {
            let remaining = p.rights - j;
            let late = tau > p.horizon(remaining);
            let early = j > 0 && times[j - 1] + p.refract > tau + SCHEDULE_SLACK;
            if late || early {
                return Err(Error::Integrity {
                    level: remaining,
                    node: j,
                    reason: format!("exercise schedule {times:?} breaks the refracting rule"),
                });
            }
        }
        Ok(())
    }
}

fn histogram(remaining: usize, times: impl Iterator<Item = f64>, lo: f64, hi: f64) -> Histogram {
    let w = (hi - lo) / HISTOGRAM_BINS as f64;
    let edges = (0..=HISTOGRAM_BINS).map(|i| lo + i as f64 * w).collect();
    let mut counts = vec![0u64; HISTOGRAM_BINS];
    for t in times {
        let b = (((t - lo) / w) as usize).min(HISTOGRAM_BINS - 1);
        counts[b] += 1;
    }
    Histogram {
        remaining,
        edges,
        counts,
    }
}

/// Fixed-shape pairwise summation; the result does not depend on threading.
fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 64 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

impl MCEstimate {
    pub fn manifest(&self, params: &ModelParams, policy: &str) -> MCManifest {
        MCManifest {
            params: *params,
            policy: policy.to_string(),
            estimate: self.clone(),
        }
    }
}

impl MCManifest {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_text(path, &serde_json::to_string_pretty(self)?)
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
