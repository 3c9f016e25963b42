//! Assignment problems as optimal transport: exact and entropic linear OT,
//! Gromov-Wasserstein solvers, a capacitated quadratic assignment model with
//! an exact oracle and a genetic baseline, and a benchmark harness.

pub mod cqap;
pub mod error;
pub mod harness;
pub mod gw;
pub mod heuristics;
pub mod linear_ot;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    marginal_violation, normalize_masses, validate_histogram, Coupling, Histogram, MmSpace, RectCostMatrix,
    SeedPolicy, SymCostMatrix,
};
