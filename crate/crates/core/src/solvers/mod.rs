//! Positive solutions of the discrete system A u = (v⁺)^p, A v = (u⁺)^q.

mod minimize;
mod mountain_pass;
mod newton;

pub use minimize::minimize_sublinear;
pub use mountain_pass::mountain_pass;
pub use newton::newton_polish;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::{self, EnergyReport, ExponentPair, Regime};
use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::operator::FractionalOperator;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "snake_case")]
pub enum InitialGuess {
    Zero,
    PositiveBump,
    RandomPositive,
    Supplied(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Iteration budget per smoothing stage (descent steps or path sweeps).
    pub max_iterations: usize,
    /// Target for ‖g‖∞ at the end of the last smoothing stage.
    pub gradient_tolerance: f64,
    /// Residual bound an accepted pair must satisfy.
    pub residual_tolerance: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Backtracking factor.
    pub backtrack: f64,
    pub min_step: f64,
    pub smoothing: Vec<f64>,
    pub seed: u64,
    pub initial_guess: InitialGuess,
    /// Number of nodes on the mountain-pass path, endpoints included.
    pub path_nodes: usize,
    /// Relative size of the preconditioned gradient at which the path
    /// deformation hands over to Newton.
    pub mountain_pass_tolerance: f64,
    pub newton_max_iterations: usize,
    pub newton_tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 2000,
            gradient_tolerance: 1e-10,
            residual_tolerance: 1e-8,
            armijo: 1e-4,
            backtrack: 0.5,
            min_step: 1e-12,
            smoothing: vec![1e-2, 1e-4, 1e-6, 1e-8, 1e-10],
            seed: 0,
            initial_guess: InitialGuess::PositiveBump,
            path_nodes: 31,
            mountain_pass_tolerance: 1e-3,
            newton_max_iterations: 20,
            newton_tolerance: 1e-11,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.gradient_tolerance,
            self.residual_tolerance,
            self.armijo,
            self.min_step,
            self.mountain_pass_tolerance,
            self.newton_tolerance,
        ];
        if positive.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::Config("solver tolerances must be positive".into()));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::Config("backtracking factor must lie in (0, 1)".into()));
        }
        if self.smoothing.is_empty() || self.smoothing.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(Error::Config("smoothing schedule must be a nonempty list of ε ≥ 0".into()));
        }
        if self.path_nodes < 3 || self.max_iterations == 0 {
            return Err(Error::Config("path needs at least 3 nodes and a positive budget".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub epsilon: f64,
    pub energy: f64,
    pub gradient_norm: f64,
    pub step: f64,
}

pub type IterationTrace = Vec<IterationRecord>;

/// A candidate solution with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPair {
    pub u: GridFunction,
    pub v: GridFunction,
    /// ‖A u − (v⁺)^p‖∞
    pub residual_u: f64,
    /// ‖A v − (u⁺)^q‖∞
    pub residual_v: f64,
    pub energy: EnergyReport,
    pub min_u: f64,
    pub min_v: f64,
    pub trace: IterationTrace,
}

impl SolutionPair {
    pub fn evaluate(op: &FractionalOperator, u: GridFunction, v: GridFunction, exps: ExponentPair, trace: IterationTrace) -> Self {
        let (residual_u, residual_v) = residuals(op, &u, &v, exps);
        let energy = energy::energy(op, &u, exps);
        SolutionPair { min_u: u.min(), min_v: v.min(), residual_u, residual_v, energy, u, v, trace }
    }

    pub fn max_residual(&self) -> f64 {
        self.residual_u.max(self.residual_v)
    }

    pub fn is_positive(&self) -> bool {
        self.min_u > 0.0 && self.min_v > 0.0
    }

    /// Both equations within `tol` and both components strictly positive.
    pub fn is_accepted(&self, tol: f64) -> bool {
        self.max_residual() <= tol && self.is_positive()
    }
}

pub(crate) fn residuals(op: &FractionalOperator, u: &GridFunction, v: &GridFunction, exps: ExponentPair) -> (f64, f64) {
    let ru = (&op.apply(u) - &v.positive_power(exps.p)).sup_norm();
    let rv = (&op.apply(v) - &u.positive_power(exps.q)).sup_norm();
    (ru, rv)
}

/// v = A⁻¹ (u⁺)^q.
pub fn recover_v(op: &FractionalOperator, u: &GridFunction, q: f64) -> Result<GridFunction> {
    op.solve_linear(&u.positive_power(q))
}

/// max(0, 1 − |x − x_c|²/r²) scaled to unit sup-norm, with x_c the domain
/// center and r the largest radius keeping the support inside the box.
pub fn positive_bump(grid: &Grid) -> GridFunction {
    let c = grid.domain().center();
    let (lo, hi) = grid.domain().bounding_box();
    let r = (0..grid.dimension()).map(|a| 0.5 * (hi[a] - lo[a])).fold(f64::INFINITY, f64::min);
    let bump = grid.sample(|x| {
        let d2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
        (1.0 - d2 / (r * r)).max(0.0)
    });
    let m = bump.sup_norm();
    &bump * (1.0 / m)
}

pub(crate) fn initial_guess(grid: &Grid, cfg: &SolverConfig) -> Result<GridFunction> {
    match &cfg.initial_guess {
        InitialGuess::Zero => Ok(grid.zeros()),
        InitialGuess::PositiveBump => Ok(positive_bump(grid)),
        InitialGuess::RandomPositive => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            Ok(grid.sample(|_| rng.random_range(0.1..1.0)))
        }
        InitialGuess::Supplied(values) => {
            if values.len() != grid.num_nodes() {
                return Err(Error::Config(format!(
                    "supplied initial guess has {} values, grid has {} nodes",
                    values.len(),
                    grid.num_nodes()
                )));
            }
            Ok(GridFunction::from_vec(values.clone()))
        }
    }
}

pub(crate) fn check_regime(op: &FractionalOperator, exps: ExponentPair, wanted: Regime, solver: &'static str) -> Result<()> {
    match exps.regime(op.dimension(), op.order()) {
        Regime::Resonant => Err(Error::Resonant { pq: exps.product() }),
        r if r == wanted => Ok(()),
        r => Err(Error::WrongRegime { regime: r.to_string(), solver }),
    }
}

/// Variable-metric preconditioner M(u) = A W diag(σ'_ε(A u)) A.
pub(crate) struct Metric<'a> {
    op: &'a FractionalOperator,
    scale: GridFunction,
}

impl<'a> Metric<'a> {
    pub fn at(op: &'a FractionalOperator, au: &GridFunction, exps: ExponentPair, eps: f64) -> Self {
        let w = op.quadrature_weight();
        // floor keeps the metric definite where σ' degenerates at ε = 0
        let scale = au.map(|t| (w * energy::smoothed_power_derivative(t, exps.p, eps)).clamp(w * 1e-12, w * 1e12));
        Metric { op, scale }
    }

    /// M⁻¹ g.
    pub fn solve(&self, g: &GridFunction) -> Result<GridFunction> {
        let inner = self.op.solve_linear(g)?;
        let scaled = GridFunction::from_vec(inner.values().iter().zip(self.scale.values()).map(|(a, b)| a / b).collect());
        self.op.solve_linear(&scaled)
    }

    /// M x.
    pub fn apply(&self, x: &GridFunction) -> GridFunction {
        let ax = self.op.apply(x);
        let scaled = GridFunction::from_vec(ax.values().iter().zip(self.scale.values()).map(|(a, b)| a * b).collect());
        self.op.apply(&scaled)
    }
}
