//! Optimal exercise boundaries and prices of swing put options with a
//! refracting period under Black-Scholes dynamics.

pub mod curve;
pub mod error;
pub mod gaussian;
pub mod grid;
pub mod io;
pub mod lattice;
pub mod mc;
pub mod multi_prob;
pub mod params;
pub mod pricer;
pub mod quadrature;
pub mod roots;
pub mod solver;
pub mod vanilla;

pub use error::{Error, Result};
pub use gaussian::{binorm_cdf, joint_two_time_prob, lognormal_cdf, norm_cdf, norm_pdf, GaussQuery, Side};
pub use params::ModelParams;
pub use multi_prob::{p_n0, p_nj, LevelBoundary, RegionSet};
pub use pricer::{RegionLabel, SwingSolution};
pub use solver::{residuals, solve, SolverConfig};
pub use vanilla::{american_put, european_put, f_func, g_func, put_price, solve_american_boundary};
pub use curve::{BoundaryCurve, CurveKind};
pub use grid::TimeGrid;
pub use lattice::{extract_boundaries, lattice_price, lattice_price_at, LatticeResult, SliceBrackets};
pub use mc::{simulate, simulate_policy, ExercisePolicy, MCEstimate, MCManifest};
