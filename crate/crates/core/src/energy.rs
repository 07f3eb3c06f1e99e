//! Discrete energy Φ(u) = p/(p+1) ∫|A u|^{(p+1)/p} − 1/(q+1) ∫(u⁺)^{q+1}
//! and its quadrature-weighted gradient.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::operator::FractionalOperator;

/// Relative tolerance for deciding pq = 1 and points on the critical hyperbole.
pub const REGIME_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Sublinear,
    Resonant,
    SuperlinearSubcritical,
    Critical,
    Supercritical,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Sublinear => "sublinear",
            Regime::Resonant => "resonant",
            Regime::SuperlinearSubcritical => "superlinear_subcritical",
            Regime::Critical => "critical",
            Regime::Supercritical => "supercritical",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentPair {
    pub p: f64,
    pub q: f64,
}

impl ExponentPair {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        if p.is_finite() && q.is_finite() && p > 0.0 && q > 0.0 {
            Ok(ExponentPair { p, q })
        } else {
            Err(Error::Config(format!("exponents must be positive, got p = {p}, q = {q}")))
        }
    }

    pub fn product(&self) -> f64 {
        self.p * self.q
    }

    /// 1/(p+1) + 1/(q+1) − (n−2s)/n, defined only when n > 2s.
    pub fn hyperbole_gap(&self, n: usize, s: f64) -> Option<f64> {
        let nf = n as f64;
        (nf > 2.0 * s).then(|| 1.0 / (self.p + 1.0) + 1.0 / (self.q + 1.0) - (nf - 2.0 * s) / nf)
    }

    /// n/(q+1) + n/(p+1) − (n−2s), the interior factor of the Rellich identity.
    pub fn rhs_factor(&self, n: usize, s: f64) -> f64 {
        let nf = n as f64;
        nf / (self.q + 1.0) + nf / (self.p + 1.0) - (nf - 2.0 * s)
    }

    pub fn is_resonant(&self) -> bool {
        (self.product() - 1.0).abs() <= REGIME_TOLERANCE
    }

    pub fn regime(&self, n: usize, s: f64) -> Regime {
        let pq = self.product();
        if self.is_resonant() {
            Regime::Resonant
        } else if pq < 1.0 {
            Regime::Sublinear
        } else {
            match self.hyperbole_gap(n, s) {
                None => Regime::SuperlinearSubcritical,
                Some(gap) if gap.abs() <= REGIME_TOLERANCE => Regime::Critical,
                Some(gap) if gap > 0.0 => Regime::SuperlinearSubcritical,
                Some(_) => Regime::Supercritical,
            }
        }
    }

    /// Exponent (p+1)/p of the kinetic term.
    pub fn kinetic_exponent(&self) -> f64 {
        (self.p + 1.0) / self.p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub value: f64,
    /// p/(p+1) ∫|A u|^{(p+1)/p}
    pub kinetic: f64,
    /// 1/(q+1) ∫(u⁺)^{q+1}
    pub potential: f64,
    /// (∫|A u|^{(p+1)/p})^{p/(p+1)}
    pub norm: f64,
}

/// σ_ε(t) = (t² + ε²)^{(1−p)/(2p)} t, and σ₀(t) = |t|^{1/p − 1} t.
pub fn smoothed_power(t: f64, p: f64, eps: f64) -> f64 {
    let r2 = t * t + eps * eps;
    if r2 == 0.0 {
        0.0
    } else {
        r2.powf((1.0 - p) / (2.0 * p)) * t
    }
}

/// Derivative of [`smoothed_power`] in t.
pub(crate) fn smoothed_power_derivative(t: f64, p: f64, eps: f64) -> f64 {
    let r2 = t * t + eps * eps;
    if r2 == 0.0 {
        return if p < 1.0 {
            0.0
        } else if p == 1.0 {
            1.0
        } else {
            f64::INFINITY
        };
    }
    r2.powf((1.0 - p) / (2.0 * p) - 1.0) * (t * t / p + eps * eps)
}

/// Antiderivative of σ_ε vanishing at 0.
fn smoothed_density(t: f64, p: f64, eps: f64) -> f64 {
    let r = (p + 1.0) / p;
    let e = (t * t + eps * eps).powf(0.5 * r) - eps.powf(r);
    p / (p + 1.0) * e
}

pub fn energy(op: &FractionalOperator, u: &GridFunction, exps: ExponentPair) -> EnergyReport {
    let w = op.quadrature_weight();
    let au = op.apply(u);
    let r = exps.kinetic_exponent();
    let kin_integral = w * au.values().iter().map(|t| t.abs().powf(r)).sum::<f64>();
    let kinetic = exps.p / (exps.p + 1.0) * kin_integral;
    let potential = w * u.positive_power(exps.q + 1.0).values().iter().sum::<f64>() / (exps.q + 1.0);
    EnergyReport { value: kinetic - potential, kinetic, potential, norm: kin_integral.powf(1.0 / r) }
}

/// Φ with the kinetic density replaced by the antiderivative of σ_ε; equals
/// `energy(..).value` at ε = 0.
pub fn energy_smoothed(op: &FractionalOperator, u: &GridFunction, exps: ExponentPair, eps: f64) -> f64 {
    let au = op.apply(u);
    energy_smoothed_with(op.quadrature_weight(), &au, u, exps, eps)
}

pub(crate) fn energy_smoothed_with(w: f64, au: &GridFunction, u: &GridFunction, exps: ExponentPair, eps: f64) -> f64 {
    let kinetic: f64 = au.values().iter().map(|&t| smoothed_density(t, exps.p, eps)).sum();
    let potential: f64 = u.positive_power(exps.q + 1.0).values().iter().sum::<f64>() / (exps.q + 1.0);
    w * (kinetic - potential)
}

/// g = Aᵀ W σ_ε(A u) − W (u⁺)^q, so that ⟨g, φ⟩ is the directional derivative.
pub fn energy_gradient(op: &FractionalOperator, u: &GridFunction, exps: ExponentPair, eps: f64) -> GridFunction {
    let au = op.apply(u);
    gradient_with(op, &au, u, exps, eps)
}

pub(crate) fn gradient_with(op: &FractionalOperator, au: &GridFunction, u: &GridFunction, exps: ExponentPair, eps: f64) -> GridFunction {
    let w = op.quadrature_weight();
    let flux = au.map(|t| w * smoothed_power(t, exps.p, eps));
    let mut g = GridFunction::from_vector(op.matrix().tr_mul(flux.as_vector()));
    g.axpy(-w, &u.positive_power(exps.q));
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Domain;
    use crate::grid::build_grid;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(n: usize) -> (crate::grid::Grid, FractionalOperator) {
        let g = build_grid(Domain::interval(-1.0, 1.0).unwrap(), n).unwrap();
        let op = FractionalOperator::assemble(&g, 0.5).unwrap();
        (g, op)
    }

    #[test]
    fn zero_has_zero_energy() {
        let (g, op) = setup(32);
        let e = energy(&op, &g.zeros(), ExponentPair::new(2.0, 3.0).unwrap());
        assert_eq!((e.value, e.kinetic, e.potential, e.norm), (0.0, 0.0, 0.0, 0.0));
        let exps = ExponentPair::new(0.5, 0.5).unwrap();
        assert_eq!(energy_gradient(&op, &g.zeros(), exps, 0.0).sup_norm(), 0.0);
        let linear = ExponentPair::new(1.0, 2.0).unwrap();
        assert_eq!(energy_gradient(&op, &g.zeros(), linear, 0.0).sup_norm(), 0.0);
    }

    #[test]
    fn homogeneity_under_scaling() {
        let (g, op) = setup(48);
        let u = g.sample(|x| (1.0 - x[0] * x[0]).max(0.0));
        let exps = ExponentPair::new(3.0, 0.7).unwrap();
        let base = energy(&op, &u, exps);
        for t in [0.1, 2.0, 7.5] {
            let e = energy(&op, &(&u * t), exps);
            assert_relative_eq!(e.kinetic, t.powf(4.0 / 3.0) * base.kinetic, max_relative = 1e-12);
            assert_relative_eq!(e.potential, t.powf(1.7) * base.potential, max_relative = 1e-12);
        }
    }

    #[test]
    fn sublinear_energy_negative_near_zero() {
        let (g, op) = setup(64);
        let u = g.sample(|x| (1.0 - x[0] * x[0]).max(0.0));
        let exps = ExponentPair::new(0.5, 0.5).unwrap();
        for eps in [1e-1, 1e-2, 1e-4] {
            assert!(energy(&op, &(&u * eps), exps).value < 0.0);
        }
    }

    #[test]
    fn coercive_along_rays_when_sublinear() {
        let (g, op) = setup(64);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let exps = ExponentPair::new(0.5, 0.5).unwrap();
        for _ in 0..5 {
            let dir = g.sample(|_| rng.random_range(-1.0..1.0));
            let dir = &dir * (1.0 / energy(&op, &dir, exps).norm);
            let vals: Vec<f64> = [10.0, 100.0, 1000.0].iter().map(|t| energy(&op, &(&dir * *t), exps).value).collect();
            assert!(vals[0] < vals[1] && vals[1] < vals[2] && vals[1] > 0.0, "{vals:?}");
        }
    }

    #[test]
    fn regime_labels() {
        let r = |p, q, n, s| ExponentPair::new(p, q).unwrap().regime(n, s);
        assert_eq!(r(1.0, 1.0, 1, 0.5), Regime::Resonant);
        assert_eq!(r(2.0, 2.0, 3, 0.5), Regime::Critical);
        assert_eq!(r(5.0, 5.0, 1, 0.5), Regime::SuperlinearSubcritical);
        assert_eq!(r(0.5, 0.5, 1, 0.5), Regime::Sublinear);
        assert_eq!(r(10.0, 10.0, 3, 0.5), Regime::Supercritical);
        assert_eq!(r(4.0, 0.25, 2, 0.3), Regime::Resonant);
        assert!(ExponentPair::new(0.0, 1.0).is_err());
    }

    #[test]
    fn ps_identity() {
        let (g, op) = setup(64);
        let u = g.sample(|x| (1.0 - x[0] * x[0]).max(0.0) * (1.0 + 0.3 * x[0]));
        for (p, q) in [(3.0, 3.0), (2.0, 5.0), (0.5, 0.5)] {
            let exps = ExponentPair::new(p, q).unwrap();
            let e = energy(&op, &u, exps);
            let grad = energy_gradient(&op, &u, exps, 0.0);
            let lhs = (q + 1.0) * e.value - grad.dot(&u);
            let kin = e.norm.powf(exps.kinetic_exponent());
            assert_relative_eq!(lhs, (p * (q + 1.0) / (p + 1.0) - 1.0) * kin, max_relative = 1e-10);
        }
    }

    #[test]
    fn smoothed_gradient_converges_to_exact() {
        let (g, op) = setup(32);
        let u = g.sample(|x| (1.0 - x[0] * x[0]).max(0.0));
        let exps = ExponentPair::new(3.0, 2.0).unwrap();
        let exact = energy_gradient(&op, &u, exps, 0.0);
        let mut prev = f64::INFINITY;
        for eps in [1e-2, 1e-4, 1e-6, 1e-8] {
            let gap = (&energy_gradient(&op, &u, exps, eps) - &exact).sup_norm();
            assert!(gap < prev);
            prev = gap;
        }
        assert!(prev < 1e-8 * exact.sup_norm());
    }

    #[test]
    fn smoothed_energy_at_zero_epsilon_is_exact() {
        let (g, op) = setup(32);
        let u = g.sample(|x| x[0].cos());
        let exps = ExponentPair::new(1.7, 2.2).unwrap();
        assert_relative_eq!(energy_smoothed(&op, &u, exps, 0.0), energy(&op, &u, exps).value, max_relative = 1e-13);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn gradient_matches_central_differences(seed in 0u64..1000, pidx in 0usize..3) {
            let (g, op) = setup(24);
            let p = [0.5, 1.0, 3.0][pidx];
            let exps = ExponentPair::new(p, 1.5).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = g.sample(|_| rng.random_range(-1.0..1.0));
            let phi = g.sample(|_| rng.random_range(-1.0..1.0));
            let eps = 1e-8;
            let delta = 1e-6;
            let fd = (energy_smoothed(&op, &(&u + &(&phi * delta)), exps, eps)
                - energy_smoothed(&op, &(&u - &(&phi * delta)), exps, eps)) / (2.0 * delta);
            let an = energy_gradient(&op, &u, exps, eps).dot(&phi);
            prop_assert!((fd - an).abs() <= 1e-4 * an.abs().max(1e-12), "fd {} an {}", fd, an);
        }
    }
}
