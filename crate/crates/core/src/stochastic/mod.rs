//! Monte Carlo machinery: forward path simulation, least-squares regression,
//! backward-equation solvers, and the comparative studies built on them.
//!
//! All randomness is governed by one 64-bit seed; per-path generator streams
//! keyed by the path index make every estimate reproducible under any worker
//! count. Comparative studies reuse one increment stream across the compared
//! policies (common random numbers).

mod bsde;
mod bsvie;
mod paths;
mod regression;
mod studies;

pub use bsde::{solve_bsde_lsmc, BsdeOptions, BsdeSolution, RetainValues};
pub use bsvie::{solve_bsvie, solve_modified_bsvie, AdaptedPair, BsvieOptions};
pub use paths::{simulate_sde, ControlLaw, InitialState, SamplePaths};
pub use regression::{fit_poly, PolyFit, RegressionBasis};
pub use studies::{
    check_feynman_kac, epsilon_gap_study, evaluate_cost, local_optimality_probe, CostEstimate,
    EpsilonStudy, FkResiduals, Perturbation, ProbeRow, ProbeStudy,
};
