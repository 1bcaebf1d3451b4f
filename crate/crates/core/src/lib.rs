//! Numerical toolkit for stochastic control problems whose recursive cost is
//! a backward Volterra equation: equilibrium Hamilton-Jacobi-Bellman solves
//! with diagonal coupling, the partition-based strategy construction,
//! least-squares Monte Carlo backward solvers, and coupled forward-backward
//! systems carrying diagonal second components.
//!
//! The numerical kernels are generic over the floating-point scalar; the
//! aliases below fix `f64` as the default precision.

pub mod diagonal;
pub mod error;
pub mod grids;
pub mod kernel;
pub mod model;
pub mod partition_game;
pub mod pde;
pub mod scalar;
pub mod scenarios;
pub mod stochastic;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default scalar type of the shipped binaries and scenarios.
pub type Real = f64;

pub type Partition = grids::Partition<Real>;
pub type SpatialGrid = grids::SpatialGrid<Real>;
pub type ScalarField = grids::ScalarField<Real>;
pub type ThetaField = grids::ThetaField<Real>;
pub type DiscountKernel = kernel::DiscountKernel<Real>;
pub type KernelFactorization = kernel::KernelFactorization<Real>;
pub type ProblemSpec = model::ProblemSpec<Real>;
pub type ControlSet = model::ControlSet<Real>;
pub type PdeConfig = pde::PdeConfig<Real>;
pub type FeedbackStrategy = pde::FeedbackStrategy<Real>;
pub type SamplePaths = stochastic::SamplePaths<Real>;
pub type AdaptedPair = stochastic::AdaptedPair<Real>;
pub type DiagonalProblem = diagonal::DiagonalProblem<Real>;
pub type DiagonalSolution = diagonal::DiagonalSolution<Real>;
