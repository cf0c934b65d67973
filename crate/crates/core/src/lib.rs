//! Stationary analysis of Cox(k)/M^Y/1 batch-service queues.
//!
//! The queue is a quasi-skip-free Markov process on states `(m, i)`: `m`
//! customers present and the arrival process in Coxian phase `i`. Its
//! stationary distribution has product form above level 0,
//! `π_(m,i) = c·γ^{m−1}·t_i`, where the level factor `γ` is the unique root
//! below 1 of a scalar fixpoint equation and `t_i` are products of phase
//! factors.
//!
//! Modules:
//! - [`linalg`]: dense matrices, inversion, power iteration.
//! - [`model`]: arrival and service laws, ergodicity.
//! - [`qsf`]: block generators, lumped embedded matrices, rate matrices.
//! - [`solver`]: the fixpoint, boundary probabilities, product form.
//! - [`finite`]: finite capacity and level-dependent service.
//! - [`analysis`]: fixed-mean families, metrics, the D/M^Y/1 limit.
//! - [`oracle`]: brute-force truncated-chain checks.

pub mod analysis;
pub mod error;
pub mod finite;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod qsf;
pub mod solver;

pub use error::{Error, Result};
pub use linalg::{EigenPair, Matrix};
pub use model::{BatchService, CoxianArrival, ModelSpec, Order, QueueModel};
pub use qsf::{QsfBlocks, RateMatrixResult, TopLevel};
pub use solver::{SolveMethod, SolverOptions, SpectralSolution, StationaryDistribution};
