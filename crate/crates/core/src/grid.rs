//! Time grids shared by all levels of a swing problem.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;

/// Grading exponent inside each δ-block: nodes are uniform in
/// `√(deadline - t)`, matching the square-root behaviour of the boundaries
/// at every deadline.
pub const BLOCK_GRADING: f64 = 2.0;

/// Nodes on `[0, T]` built from identical blocks of length δ that end at the
/// deadlines `T - kδ`. Inside a block the offsets from its end are
/// `δ (k/n)²`; the leftmost block is truncated when `T/δ` is not an integer.
/// Level `m` uses the prefix of nodes up to its horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub nodes: Vec<f64>,
    /// Base steps per unit horizon requested by the caller.
    pub base_steps: usize,
    /// Cells per full δ-block.
    pub block_cells: usize,
}

impl TimeGrid {
    pub fn new(params: &ModelParams, base_steps: usize) -> Result<Self> {
        if base_steps < 16 {
            return Err(Error::InvalidParams {
                name: "grid_steps",
                reason: format!("need at least 16 steps, got {base_steps}"),
            });
        }
        let t_end = params.maturity;
        let delta = params.refract;
        let block_cells = ((delta / t_end * base_steps as f64).round() as usize).max(4);
        // offsets inside one block measured backwards from its end
        let back: Vec<f64> = (0..block_cells)
            .map(|k| delta * (k as f64 / block_cells as f64).powf(BLOCK_GRADING))
            .collect();
        // widest cell, at the start of a block
        let h = delta - back[block_cells - 1];

        let mut nodes = vec![t_end];
        let mut end = t_end;
        let rel_eps = 1e-12 * t_end;
        'outer: loop {
            for &off in back.iter().skip(1) {
                let t = end - off;
                if t <= rel_eps {
                    break 'outer;
                }
                nodes.push(t);
            }
            end -= delta;
            if end <= rel_eps {
                break;
            }
            nodes.push(end);
        }
        nodes.push(0.0);
        nodes.reverse();
        // drop a sliver cell at the origin left by a truncated block
        if nodes.len() > 2 && nodes[1] < 0.05 * h {
            nodes.remove(1);
        }
        Ok(TimeGrid {
            nodes,
            base_steps,
            block_cells,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Index of the node at the horizon of a level, located by time.
    pub fn last_index_at(&self, horizon: f64) -> usize {
        let tol = 1e-9 * self.nodes.last().copied().unwrap_or(1.0);
        match self
            .nodes
            .iter()
            .position(|&t| (t - horizon).abs() <= tol)
        {
            Some(i) => i,
            None => self.nodes.partition_point(|&t| t < horizon).min(self.nodes.len() - 1),
        }
    }

    /// Nodes of the level-`level` problem, `[0, H_level]`.
    pub fn level_nodes(&self, params: &ModelParams, level: usize) -> Vec<f64> {
        let last = self.last_index_at(params.horizon(level));
        let mut v = self.nodes[..=last].to_vec();
        // guard rounding so the last node is the horizon itself
        *v.last_mut().unwrap() = params.horizon(level);
        v
    }
}
