//! Numerical solver and verification suite for the fractional Lane-Emden
//! system (−Δ)^s u = v^p, (−Δ)^s v = u^q in Ω with u = v = 0 outside Ω.

pub mod analysis;
pub mod domain;
pub mod energy;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod operator;
pub mod solvers;
pub mod special;

pub use domain::Domain;
pub use energy::{EnergyReport, ExponentPair, Regime};
pub use error::{Error, Result};
pub use grid::{build_grid, Grid, GridFunction};
pub use operator::FractionalOperator;
pub use solvers::{SolutionPair, SolverConfig};
