use nalgebra::{DMatrix, DVector};

use super::{residuals, IterationRecord, SolutionPair, SolverConfig};
use crate::energy::{self, ExponentPair};
use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::operator::FractionalOperator;

const MAX_HALVINGS: usize = 30;

/// Damped Newton on F(u, v) = (A u − (v⁺)^p, A v − (u⁺)^q).
///
/// The Jacobian is reduced to its Schur complement S = A − D_q A⁻¹ D_p.
/// Steps that would make a positive component nonpositive, or that fail to
/// decrease ‖F‖∞, are halved. Returns the input unchanged when it already
/// meets the tolerance, and stops early once the residual stagnates.
pub fn newton_polish(op: &FractionalOperator, pair: SolutionPair, exps: ExponentPair, cfg: &SolverConfig) -> Result<SolutionPair> {
    if exps.is_resonant() {
        return Err(Error::Resonant { pq: exps.product() });
    }
    if !(pair.u.is_finite() && pair.v.is_finite()) {
        return Err(Error::Numerical("Newton polish received non-finite values".into()));
    }
    let SolutionPair { mut u, mut v, mut trace, .. } = pair;
    let (p, q) = (exps.p, exps.q);
    let residual = |u: &GridFunction, v: &GridFunction| {
        let (a, b) = residuals(op, u, v, exps);
        a.max(b)
    };
    let mut current = residual(&u, &v);
    let scale = op.apply(&u).sup_norm().max(op.apply(&v).sup_norm()).max(1.0);
    if current <= cfg.newton_tolerance * scale {
        return Ok(SolutionPair::evaluate(op, u, v, exps, trace));
    }

    let n = op.size();
    let a = op.matrix();
    let a_inv = op.solve_matrix(&DMatrix::identity(n, n))?;
    for _ in 0..cfg.newton_max_iterations {
        let dp = v.map(|t| if t > 0.0 { p * t.powf(p - 1.0) } else { 0.0 });
        let dq = u.map(|t| if t > 0.0 { q * t.powf(q - 1.0) } else { 0.0 });
        let f1 = (&op.apply(&u) - &v.positive_power(p)).into_vector();
        let f2 = (&op.apply(&v) - &u.positive_power(q)).into_vector();

        let mut schur = a.clone();
        for j in 0..n {
            for i in 0..n {
                schur[(i, j)] -= dq[i] * a_inv[(i, j)] * dp[j];
            }
        }
        let a_inv_f1 = &a_inv * &f1;
        let rhs: DVector<f64> = -&f2 - a_inv_f1.component_mul(dq.as_vector());
        let dv = schur.lu().solve(&rhs).ok_or(Error::SingularJacobian)?;
        if !dv.iter().all(|x| x.is_finite()) {
            return Err(Error::SingularJacobian);
        }
        let du = &a_inv * (dv.component_mul(dp.as_vector()) - f1);
        let (du, dv) = (GridFunction::from_vector(du), GridFunction::from_vector(dv));

        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let mut nu = u.clone();
            nu.axpy(lambda, &du);
            let mut nv = v.clone();
            nv.axpy(lambda, &dv);
            let keeps_sign = nu.values().iter().zip(u.values()).all(|(a, b)| *b <= 0.0 || *a > 0.0)
                && nv.values().iter().zip(v.values()).all(|(a, b)| *b <= 0.0 || *a > 0.0);
            if keeps_sign {
                let r = residual(&nu, &nv);
                if r < current {
                    accepted = Some((nu, nv, r));
                    break;
                }
            }
            lambda *= 0.5;
        }
        let Some((nu, nv, r)) = accepted else {
            break;
        };
        u = nu;
        v = nv;
        current = r;
        trace.push(IterationRecord {
            iteration: trace.len(),
            epsilon: 0.0,
            energy: energy::energy(op, &u, exps).value,
            gradient_norm: current,
            step: lambda,
        });
        if current <= cfg.newton_tolerance * scale {
            break;
        }
    }
    Ok(SolutionPair::evaluate(op, u, v, exps, trace))
}
