//! Shared fixtures for the criterion benchmarks under `benches/`.

use swing_core::{solve, ModelParams, SolverConfig, SwingSolution};

/// Solved two-right problem on the reference parameters.
pub fn reference_solution(grid_steps: usize) -> SwingSolution {
    solve(&ModelParams::base(), &SolverConfig::with_steps(grid_steps)).expect("reference solve")
}
