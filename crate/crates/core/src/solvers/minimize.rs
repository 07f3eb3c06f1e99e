use super::{check_regime, initial_guess, newton_polish, recover_v, IterationRecord, IterationTrace, Metric, SolutionPair, SolverConfig};
use crate::energy::{self, ExponentPair, Regime};
use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::operator::FractionalOperator;

const SOLVER: &str = "minimize_sublinear";

/// Outcome of one descent stage at fixed ε.
enum Stage {
    Converged,
    /// Armijo could not decrease Φ_ε any further; the energy is at rounding level.
    Floor,
    Budget,
}

/// Global minimizer of Φ for pq < 1 by preconditioned descent with an ε-continuation.
pub fn minimize_sublinear(op: &FractionalOperator, grid: &Grid, exps: ExponentPair, cfg: &SolverConfig) -> Result<SolutionPair> {
    cfg.validate()?;
    check_regime(op, exps, Regime::Sublinear, SOLVER)?;
    let mut u = initial_guess(grid, cfg)?;
    if u.sup_norm() == 0.0 {
        return Err(Error::Config("the zero function is a critical point; choose a nonzero initial guess".into()));
    }
    let mut trace = IterationTrace::new();
    let last = cfg.smoothing.len() - 1;
    for (stage, &eps) in cfg.smoothing.iter().enumerate() {
        let tol = if stage == last { cfg.gradient_tolerance } else { cfg.gradient_tolerance.max(1e-2 * eps) };
        let outcome = descend(op, &mut u, exps, eps, tol, cfg, &mut trace)?;
        if stage == last {
            if let Stage::Budget = outcome {
                return Err(Error::NonConvergence { solver: SOLVER, reason: "iteration budget exhausted".into(), trace: Box::new(trace) });
            }
        }
    }

    let v = recover_v(op, &u, exps.q)?;
    let pair = SolutionPair::evaluate(op, u, v, exps, trace);
    let pair = newton_polish(op, pair, exps, cfg)?;
    if !pair.is_accepted(cfg.residual_tolerance) || pair.energy.value >= 0.0 {
        let reason = format!(
            "candidate rejected: residual {:.3e}, min u {:.3e}, min v {:.3e}, energy {:.3e}",
            pair.max_residual(),
            pair.min_u,
            pair.min_v,
            pair.energy.value
        );
        return Err(Error::NonConvergence { solver: SOLVER, reason, trace: Box::new(pair.trace) });
    }
    Ok(pair)
}

fn descend(
    op: &FractionalOperator,
    u: &mut GridFunction,
    exps: ExponentPair,
    eps: f64,
    tol: f64,
    cfg: &SolverConfig,
    trace: &mut IterationTrace,
) -> Result<Stage> {
    let w = op.quadrature_weight();
    let mut au = op.apply(u);
    let mut phi = energy::energy_smoothed_with(w, &au, u, exps, eps);
    for _ in 0..cfg.max_iterations {
        let g = energy::gradient_with(op, &au, u, exps, eps);
        let gnorm = g.sup_norm();
        if !gnorm.is_finite() {
            return Err(Error::Numerical("non-finite gradient".into()));
        }
        if gnorm <= tol {
            return Ok(Stage::Converged);
        }
        let d = -&Metric::at(op, &au, exps, eps).solve(&g)?;
        let slope = g.dot(&d);
        let ad = op.apply(&d);
        let mut step = 1.0;
        let accepted = loop {
            let mut trial = u.clone();
            trial.axpy(step, &d);
            let mut atrial = au.clone();
            atrial.axpy(step, &ad);
            let value = energy::energy_smoothed_with(w, &atrial, &trial, exps, eps);
            if value < phi && value <= phi + cfg.armijo * step * slope {
                break Some((trial, atrial, value));
            }
            step *= cfg.backtrack;
            if step < cfg.min_step {
                break None;
            }
        };
        let Some((trial, atrial, value)) = accepted else {
            return Ok(Stage::Floor);
        };
        *u = trial;
        au = atrial;
        phi = value;
        trace.push(IterationRecord { iteration: trace.len(), epsilon: eps, energy: phi, gradient_norm: gnorm, step });
    }
    Ok(Stage::Budget)
}
