use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, Context};
use serde::Serialize;
use swing_core::io::fmt_sig;
use swing_core::{
    extract_boundaries, lattice_price, simulate_policy, solve, Error, LatticeResult, ModelParams,
    SwingSolution,
};

use crate::config::RunConfig;
use crate::Failure;

fn solver_failure(e: Error) -> Failure {
    let trace = match &e {
        Error::NonConvergence { trace, .. } if !trace.is_empty() => {
            let t: Vec<String> = trace.iter().map(|v| format!("{v:e}")).collect();
            format!("\nresidual trace: {}", t.join(" "))
        }
        _ => String::new(),
    };
    Failure::Solver(anyhow!("{e}{trace}"))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn solve_or_load(cfg: &RunConfig, solution: Option<&Path>) -> Result<SwingSolution, Failure> {
    match solution {
        Some(p) => SwingSolution::read_json(p)
            .with_context(|| format!("reading solution {}", p.display()))
            .map_err(Failure::Usage),
        None => solve(&cfg.params, &cfg.solver).map_err(solver_failure),
    }
}

fn write_solution(sol: &SwingSolution, out: &Path, prefix: &str) -> anyhow::Result<()> {
    sol.write_json(&out.join(format!("{prefix}solution.json")))?;
    for level in 1..=sol.levels() {
        let mut w = create(&out.join(format!("{prefix}level{level}.csv")))?;
        sol.write_level_csv(level, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

pub fn run_solve(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let sol = solve(&cfg.params, &cfg.solver).map_err(solver_failure)?;
    write_solution(&sol, out, "")?;
    cfg.write(&out.join("run.json"))?;
    for d in &sol.diagnostics {
        let capped = if d.capped_upper > 0 {
            format!(", {} upper nodes at the search cap", d.capped_upper)
        } else {
            String::new()
        };
        println!(
            "level {}: {} nodes, max residual {:.1e}{capped}",
            d.level,
            d.nodes,
            d.max_residual_lower.max(d.max_residual_upper)
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

pub fn price(cfg: &RunConfig, solution: Option<&Path>, out: &Path) -> Result<(), Failure> {
    let sol = solve_or_load(cfg, solution)?;
    let levels: Vec<usize> = if cfg.price.levels.is_empty() {
        (1..=sol.levels()).collect()
    } else {
        cfg.price.levels.clone()
    };
    if let Some(bad) = levels.iter().find(|&&l| l == 0 || l > sol.levels()) {
        return Err(Failure::Usage(anyhow!(
            "level {bad} outside 1..={}",
            sol.levels()
        )));
    }
    let mut w = create(&out.join("prices.csv"))?;
    sol.write_price_surface(&cfg.price.times, &cfg.price.prices, &levels, &mut w)?;
    w.flush()?;
    cfg.write(&out.join("run.json"))?;
    println!("wrote {}", out.join("prices.csv").display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct PriceGap {
    level: usize,
    x: f64,
    eep: f64,
    lattice: f64,
    /// Value when every right is held to its deadline.
    european_legs: f64,
    abs_gap: f64,
    rel_gap: f64,
}

#[derive(Debug, Serialize)]
struct Coverage {
    level: usize,
    slices: usize,
    lower_within_step: usize,
    upper_within_step: Option<usize>,
    /// Slices where the lattice found no bracket the solver predicts.
    missing_brackets: usize,
    tail_slices: usize,
    tail_misses: usize,
}

#[derive(Debug, Serialize)]
struct OracleReport {
    params: ModelParams,
    requested_steps: usize,
    lattice_steps: usize,
    steps_per_refraction: usize,
    note: Option<String>,
    max_abs_gap: f64,
    max_rel_gap: f64,
    gaps: Vec<PriceGap>,
    coverage: Vec<Coverage>,
}

/// Whether `v` lies within one lattice price-step of the bracket `node`.
fn within_step(v: f64, node: f64, lat: &LatticeResult) -> bool {
    (v / node).ln().abs() <= lat.price_step().ln() * (1.0 + 1e-9)
}

fn coverage(sol: &SwingSolution, lat: &LatticeResult, level: usize, tail_share: f64) -> anyhow::Result<Coverage> {
    let lb = sol.regions.level(level)?;
    let slices = extract_boundaries(lat, level)?;
    // the deadline slice itself is pure forced exercise
    let usable = &slices[..slices.len() - 1];
    let tail_from = ((1.0 - tail_share) * usable.len() as f64).floor() as usize;
    let two_sided = level >= 2;
    let mut c = Coverage {
        level,
        slices: tail_from,
        lower_within_step: 0,
        upper_within_step: two_sided.then_some(0),
        missing_brackets: 0,
        tail_slices: usable.len() - tail_from,
        tail_misses: 0,
    };
    for (j, s) in usable.iter().enumerate() {
        let b = lb.lower.at(s.t);
        let lower_ok = s.lower.map(|n| within_step(b, n, lat));
        let upper_ok = if two_sided {
            let cv = lb.upper.at(s.t);
            // a solver curve beyond the lattice's price span has no bracket
            let reach = lat.spot * lat.price_step().powi((j + lat.margin) as i32);
            match s.upper {
                Some(n) => Some(within_step(cv, n, lat)),
                None if cv >= reach => Some(true),
                None => None,
            }
        } else {
            Some(true)
        };
        if lower_ok.is_none() || upper_ok.is_none() {
            c.missing_brackets += 1;
        }
        let ok = lower_ok == Some(true) && upper_ok == Some(true);
        if j >= tail_from {
            if !ok {
                c.tail_misses += 1;
            }
            continue;
        }
        if lower_ok == Some(true) {
            c.lower_within_step += 1;
        }
        if two_sided && upper_ok == Some(true) {
            *c.upper_within_step.as_mut().unwrap() += 1;
        }
    }
    Ok(c)
}

pub fn oracle(cfg: &RunConfig, solution: Option<&Path>, levels: &[usize], out: &Path) -> Result<(), Failure> {
    let sol = solve_or_load(cfg, solution)?;
    let levels: Vec<usize> = if levels.is_empty() {
        (1..=sol.levels()).collect()
    } else {
        levels.to_vec()
    };
    let top = *levels.iter().max().unwrap();
    if levels.contains(&0) || top > sol.levels() {
        return Err(Failure::Usage(anyhow!("levels must lie in 1..={}", sol.levels())));
    }
    let lat = lattice_price(&sol.params, cfg.oracle.steps, top).map_err(|e| Failure::Solver(e.into()))?;
    let note = (lat.steps != cfg.oracle.steps).then(|| {
        format!(
            "steps adjusted from {} to {} so that the refracting period spans {} whole steps",
            cfg.oracle.steps, lat.steps, lat.per_delta
        )
    });
    if let Some(n) = &note {
        eprintln!("note: {n}");
    }
    let mut gaps = Vec::new();
    for &level in &levels {
        for &x in &cfg.oracle.prices {
            let eep = sol.value(level, 0.0, x).map_err(|e| Failure::Usage(e.into()))?;
            let l = lat.value_at(level, x).map_err(|e| Failure::Usage(e.into()))?;
            let legs = sol.leg_j(level, 0.0, x).map_err(|e| Failure::Usage(e.into()))?;
            gaps.push(PriceGap {
                level,
                x,
                eep,
                lattice: l,
                european_legs: legs,
                abs_gap: (eep - l).abs(),
                rel_gap: (eep - l).abs() / l.abs().max(f64::MIN_POSITIVE),
            });
        }
    }
    let coverage = levels
        .iter()
        .map(|&l| coverage(&sol, &lat, l, cfg.oracle.tail_share))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let report = OracleReport {
        params: sol.params,
        requested_steps: cfg.oracle.steps,
        lattice_steps: lat.steps,
        steps_per_refraction: lat.per_delta,
        note,
        max_abs_gap: gaps.iter().map(|g| g.abs_gap).fold(0.0, f64::max),
        max_rel_gap: gaps.iter().map(|g| g.rel_gap).fold(0.0, f64::max),
        gaps,
        coverage,
    };
    swing_core::io::write_text(&out.join("oracle.json"), &serde_json::to_string_pretty(&report)?)?;
    for &level in &levels {
        let mut w = create(&out.join(format!("lattice_level{level}.csv")))?;
        lat.write_brackets_csv(level, &mut w)?;
        w.flush()?;
    }
    cfg.write(&out.join("run.json"))?;
    println!(
        "max price gap {:.3e} ({:.3e} relative) over {} probes",
        report.max_abs_gap,
        report.max_rel_gap,
        report.gaps.len()
    );
    Ok(())
}

pub fn mc(cfg: &RunConfig, solution: Option<&Path>, rights: Option<usize>, out: &Path) -> Result<(), Failure> {
    let mut sol = solve_or_load(cfg, solution)?;
    if let Some(k) = rights {
        if k == 0 || k > sol.levels() {
            return Err(Failure::Usage(anyhow!("level {k} outside 1..={}", sol.levels())));
        }
        sol.regions.levels.truncate(k);
    }
    let m = &cfg.mc;
    let est = simulate_policy(&sol, m.t0, m.x0, m.paths, m.steps_per_year, m.seed)
        .map_err(|e| Failure::Usage(e.into()))?;
    let params = ModelParams {
        rights: sol.levels(),
        ..sol.params
    };
    est.manifest(&params, "boundaries").write_json(&out.join("mc.json"))?;
    cfg.write(&out.join("run.json"))?;
    let v = sol.value(sol.levels(), m.t0, m.x0).map_err(|e| Failure::Usage(e.into()))?;
    println!(
        "estimate {:.8} ± {:.2e} ({} paths), value {:.8}",
        est.mean, est.std_error, est.paths, v
    );
    Ok(())
}

pub fn sweep(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let s = cfg.sweep.as_ref().expect("validated sweep");
    let name = s.param.name();
    let mut long = String::from("param,value,level,t,b,c\n");
    let mut failures = Vec::new();
    for &v in &s.values {
        let params = match s.param.apply(&cfg.params, v) {
            Ok(p) => p,
            Err(e) => {
                failures.push(format!("{name}={v}: {e:#}"));
                continue;
            }
        };
        let sol = match solve(&params, &cfg.solver) {
            Ok(sol) => sol,
            Err(e) => {
                failures.push(format!("{name}={v}: {e}"));
                continue;
            }
        };
        for lb in &sol.regions.levels {
            for ((t, b), c) in lb.lower.grid.iter().zip(&lb.lower.values).zip(&lb.upper.values) {
                let row = format!("{},{},{},{}", lb.level, fmt_sig(*t), fmt_sig(*b), fmt_sig(*c));
                writeln!(long, "{name},{},{row}", fmt_sig(v)).unwrap();
            }
        }
        write_solution(&sol, out, &format!("sweep_{name}_{}_", fmt_sig(v)))?;
    }
    swing_core::io::write_text(&out.join(format!("sweep_{name}.csv")), &long)?;
    cfg.write(&out.join("run.json"))?;
    for f in &failures {
        eprintln!("sweep value failed: {f}");
    }
    if failures.len() == s.values.len() {
        return Err(Failure::Solver(anyhow!("every sweep value failed")));
    }
    println!(
        "{} of {} sweep values solved; wrote {}",
        s.values.len() - failures.len(),
        s.values.len(),
        out.join(format!("sweep_{name}.csv")).display()
    );
    Ok(())
}
