use super::{
    check_regime, initial_guess, newton_polish, positive_bump, recover_v, InitialGuess, IterationRecord, IterationTrace, Metric,
    SolutionPair, SolverConfig,
};
use crate::energy::{self, ExponentPair, Regime};
use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::operator::FractionalOperator;

const SOLVER: &str = "mountain_pass";
const MAX_RESTARTS: usize = 4;
const GOLDEN_STEPS: usize = 40;

/// Critical point of mountain-pass type for pq > 1, followed by Newton polish.
///
/// The path runs from 0 to t·φ with t doubled until Φ(t·φ) < 0. φ is the
/// positive bump, or A⁻¹ applied to the positive part of any other initial
/// guess (rough guesses would otherwise put the path at huge kinetic energy).
pub fn mountain_pass(op: &FractionalOperator, grid: &Grid, exps: ExponentPair, cfg: &SolverConfig) -> Result<SolutionPair> {
    cfg.validate()?;
    check_regime(op, exps, Regime::SuperlinearSubcritical, SOLVER)?;
    let profile = match cfg.initial_guess {
        InitialGuess::PositiveBump | InitialGuess::Zero => positive_bump(grid),
        _ => {
            let guess = initial_guess(grid, cfg)?;
            if guess.max() <= 0.0 {
                positive_bump(grid)
            } else {
                let smooth = op.solve_linear(&guess.positive_part())?;
                &smooth * (1.0 / smooth.sup_norm())
            }
        }
    };

    let mut t = 1.0;
    while energy::energy(op, &(&profile * t), exps).value >= 0.0 {
        t *= 2.0;
        if t > 1e12 {
            return Err(Error::Numerical("energy stays nonnegative along the initial ray".into()));
        }
    }

    let mut trace = IterationTrace::new();
    for _ in 0..=MAX_RESTARTS {
        match deform(op, &profile, t, exps, cfg, &mut trace)? {
            Deformation::Critical(u) => {
                let v = recover_v(op, &u, exps.q)?;
                let pair = SolutionPair::evaluate(op, u, v, exps, trace);
                let pair = newton_polish(op, pair, exps, cfg)?;
                if !pair.is_accepted(cfg.residual_tolerance) || pair.energy.value <= 0.0 {
                    let reason = format!(
                        "candidate rejected: residual {:.3e}, min u {:.3e}, min v {:.3e}, energy {:.3e}",
                        pair.max_residual(),
                        pair.min_u,
                        pair.min_v,
                        pair.energy.value
                    );
                    return Err(Error::NonConvergence { solver: SOLVER, reason, trace: Box::new(pair.trace) });
                }
                return Ok(pair);
            }
            Deformation::Collapsed => t *= 2.0,
            Deformation::Budget => {
                return Err(Error::NonConvergence { solver: SOLVER, reason: "iteration budget exhausted".into(), trace: Box::new(trace) })
            }
        }
    }
    Err(Error::NonConvergence {
        solver: SOLVER,
        reason: format!("path collapsed onto 0 after {MAX_RESTARTS} restarts"),
        trace: Box::new(trace),
    })
}

enum Deformation {
    Critical(GridFunction),
    Collapsed,
    Budget,
}

fn deform(
    op: &FractionalOperator,
    profile: &GridFunction,
    t: f64,
    exps: ExponentPair,
    cfg: &SolverConfig,
    trace: &mut IterationTrace,
) -> Result<Deformation> {
    let m = cfg.path_nodes;
    let mut path: Vec<GridFunction> = (0..m).map(|k| profile * (t * k as f64 / (m - 1) as f64)).collect();
    let w = op.quadrature_weight();
    let phi = |u: &GridFunction, eps: f64| energy::energy_smoothed(op, u, exps, eps);

    for &eps in &cfg.smoothing {
        let mut levels: Vec<f64> = path.iter().map(|u| phi(u, eps)).collect();
        let mut done = false;
        for _ in 0..cfg.max_iterations {
            let k = (1..m - 1).fold(1, |best, j| if levels[j] > levels[best] { j } else { best });
            if levels[k] <= 0.0 || path[k].sup_norm() == 0.0 {
                return Ok(Deformation::Collapsed);
            }
            let u = &path[k];
            let au = op.apply(u);
            let g = energy::gradient_with(op, &au, u, exps, eps);
            let metric = Metric::at(op, &au, exps, eps);
            let mut d = -&metric.solve(&g)?;
            let gnorm = g.sup_norm();
            if !gnorm.is_finite() {
                return Err(Error::Numerical("non-finite gradient on the path".into()));
            }
            if d.sup_norm() <= cfg.mountain_pass_tolerance * u.sup_norm() {
                done = true;
                break;
            }
            // the radial part is handled by ray_maximum
            let mu = metric.apply(u);
            let umu = u.dot(&mu);
            if umu > 0.0 {
                d.axpy(g.dot(u) / umu, u);
            }
            let slope = g.dot(&d);
            let mut step = 1.0;
            let mut next = u.clone();
            if slope < 0.0 {
                let ad = op.apply(&d);
                loop {
                    let mut trial = u.clone();
                    trial.axpy(step, &d);
                    let mut atrial = au.clone();
                    atrial.axpy(step, &ad);
                    if energy::energy_smoothed_with(w, &atrial, &trial, exps, eps) <= levels[k] + cfg.armijo * step * slope {
                        next = trial;
                        break;
                    }
                    step *= cfg.backtrack;
                    if step < cfg.min_step {
                        step = 0.0;
                        break;
                    }
                }
            } else {
                step = 0.0;
            }
            let next = ray_maximum(&next, |x| phi(x, eps));
            levels[k] = phi(&next, eps);
            path[k] = next;
            trace.push(IterationRecord { iteration: trace.len(), epsilon: eps, energy: levels[k], gradient_norm: gnorm, step });
        }
        if !done {
            return Ok(Deformation::Budget);
        }
    }
    let k = (1..m - 1)
        .map(|j| (j, energy::energy(op, &path[j], exps).value))
        .fold((1, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
        .0;
    Ok(Deformation::Critical(path.swap_remove(k)))
}

/// Golden-section maximization of τ ↦ Φ(τ w) on [1/2, 2].
fn ray_maximum<F: Fn(&GridFunction) -> f64>(w: &GridFunction, phi: F) -> GridFunction {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.5, 2.0);
    let mut c1 = b - ratio * (b - a);
    let mut c2 = a + ratio * (b - a);
    let mut f1 = phi(&(w * c1));
    let mut f2 = phi(&(w * c2));
    for _ in 0..GOLDEN_STEPS {
        if f1 > f2 {
            b = c2;
            c2 = c1;
            f2 = f1;
            c1 = b - ratio * (b - a);
            f1 = phi(&(w * c1));
        } else {
            a = c1;
            c1 = c2;
            f1 = f2;
            c2 = a + ratio * (b - a);
            f2 = phi(&(w * c2));
        }
    }
    w * (0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Domain;
    use crate::grid::build_grid;

    fn setup(n: usize) -> (Grid, FractionalOperator) {
        let g = build_grid(Domain::interval(-1.0, 1.0).unwrap(), n).unwrap();
        let op = FractionalOperator::assemble(&g, 0.5).unwrap();
        (g, op)
    }

    #[test]
    fn cubic_system_has_positive_solution() {
        let (g, op) = setup(128);
        let pair = mountain_pass(&op, &g, ExponentPair::new(3.0, 3.0).unwrap(), &SolverConfig::default()).unwrap();
        assert!(pair.max_residual() <= 1e-8);
        assert!(pair.energy.value > 0.0);
        assert!(pair.is_positive());
        assert!((&pair.u - &pair.v).sup_norm() <= 1e-4 * pair.u.sup_norm());
    }

    #[test]
    fn asymmetric_exponents() {
        let (g, op) = setup(64);
        let pair = mountain_pass(&op, &g, ExponentPair::new(2.0, 1.5).unwrap(), &SolverConfig::default()).unwrap();
        assert!(pair.is_accepted(1e-8));
        assert!(pair.energy.value > 0.0);
    }

    #[test]
    fn random_start_reaches_the_bump_solution() {
        let (g, op) = setup(64);
        let exps = ExponentPair::new(3.0, 2.0).unwrap();
        let bump = mountain_pass(&op, &g, exps, &SolverConfig::default()).unwrap();
        let cfg = SolverConfig { initial_guess: InitialGuess::RandomPositive, seed: 99, ..SolverConfig::default() };
        let rough = mountain_pass(&op, &g, exps, &cfg).unwrap();
        assert!((&bump.u - &rough.u).sup_norm() <= 1e-8 * bump.u.sup_norm());
    }

    #[test]
    fn ray_maximum_of_parabola() {
        let w = GridFunction::from_vec(vec![1.0]);
        let best = ray_maximum(&w, |x| -(x[0] - 1.3).powi(2));
        assert!((best[0] - 1.3).abs() < 1e-6);
    }

    #[test]
    fn rejects_sublinear_and_resonant() {
        let (g, op) = setup(32);
        let cfg = SolverConfig::default();
        assert!(matches!(mountain_pass(&op, &g, ExponentPair::new(0.5, 0.5).unwrap(), &cfg), Err(Error::WrongRegime { .. })));
        assert!(matches!(mountain_pass(&op, &g, ExponentPair::new(2.0, 0.5).unwrap(), &cfg), Err(Error::Resonant { .. })));
    }
}
