//! Diagnostics on operators and computed solutions.

use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::{ExponentPair, Regime};
use crate::error::{Error, Result};
use crate::grid::{boundary_trace_weights, Grid, GridFunction, TracePoint};
use crate::operator::FractionalOperator;
use crate::solvers::SolutionPair;
use crate::special::gamma;

/// Floor for relative-residual denominators.
pub const RESIDUAL_FLOOR: f64 = 1e-14;
/// Fit window along an inward normal, in multiples of h.
pub const FIT_WINDOW: (f64, f64) = (2.0, 6.0);
/// Half-width of the tube around a normal line, in multiples of h.
const TUBE: f64 = 0.75;
const MIN_FIT_NODES: usize = 3;

pub fn classify(exps: ExponentPair, n: usize, s: f64) -> Regime {
    exps.regime(n, s)
}

/// Log-space fit of u ≈ c·d^α on the nodes sampling one inward normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalFit {
    pub point: [f64; 2],
    pub normal: [f64; 2],
    pub weight: f64,
    /// Quotient u/d^s with the exponent pinned to s; `None` when the fit failed.
    pub quotient: Option<f64>,
    /// Free log-log slope.
    pub exponent: Option<f64>,
    pub nodes_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryFit {
    pub fits: Vec<NormalFit>,
    pub failures: usize,
    pub corners_dropped: bool,
}

impl BoundaryFit {
    pub fn quotients(&self) -> impl Iterator<Item = f64> + '_ {
        self.fits.iter().filter_map(|f| f.quotient)
    }

    /// Surface-weighted mean of the fitted exponents.
    pub fn mean_exponent(&self) -> Option<f64> {
        let (num, den) = self
            .fits
            .iter()
            .filter_map(|f| f.exponent.map(|a| (a * f.weight, f.weight)))
            .fold((0.0, 0.0), |acc, x| (acc.0 + x.0, acc.1 + x.1));
        (den > 0.0).then(|| num / den)
    }
}

/// Nodes within the tube around the inward normal at `tp` whose depth
/// along the normal equals their distance to ∂Ω, restricted to the window.
fn normal_samples(grid: &Grid, tp: &TracePoint) -> Vec<usize> {
    let h = grid.spacing();
    let (lo, hi) = (FIT_WINDOW.0 * h, FIT_WINDOW.1 * h);
    let n = tp.normal;
    grid.coords()
        .iter()
        .zip(grid.boundary_distance())
        .enumerate()
        .filter_map(|(i, (x, &d))| {
            let rel = [x[0] - tp.point[0], x[1] - tp.point[1]];
            let depth = -(rel[0] * n[0] + rel[1] * n[1]);
            let off = (rel[0] * n[1] - rel[1] * n[0]).abs();
            let in_tube = off <= TUBE * h && (depth - d).abs() <= TUBE * h;
            (in_tube && d >= lo && d <= hi).then_some(i)
        })
        .collect()
}

fn fit_one(u: &GridFunction, grid: &Grid, tp: &TracePoint, s: Option<f64>) -> NormalFit {
    let nodes = normal_samples(grid, tp);
    let mut fit =
        NormalFit { point: tp.point, normal: tp.normal, weight: tp.weight, quotient: None, exponent: None, nodes_used: nodes.len() };
    if nodes.len() < MIN_FIT_NODES || nodes.iter().any(|&i| u[i] <= 0.0) {
        return fit;
    }
    let d = grid.boundary_distance();
    let xs: Vec<f64> = nodes.iter().map(|&i| d[i].ln()).collect();
    let ys: Vec<f64> = nodes.iter().map(|&i| u[i].ln()).collect();
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx > 0.0 {
        fit.exponent = Some(sxy / sxx);
    }
    if let Some(s) = s {
        fit.quotient = Some((my - s * mx).exp());
    }
    fit
}

/// u/d^s at every boundary trace point.
pub fn boundary_quotient(u: &GridFunction, grid: &Grid, s: f64) -> BoundaryFit {
    boundary_fit(u, grid, Some(s))
}

/// Log-log slope of u against d along inward normals.
pub fn boundary_exponent_fit(u: &GridFunction, grid: &Grid) -> BoundaryFit {
    boundary_fit(u, grid, None)
}

fn boundary_fit(u: &GridFunction, grid: &Grid, s: Option<f64>) -> BoundaryFit {
    let trace = boundary_trace_weights(grid);
    let fits: Vec<NormalFit> = trace.points.iter().map(|tp| fit_one(u, grid, tp, s)).collect();
    let failures = fits.iter().filter(|f| if s.is_some() { f.quotient.is_none() } else { f.exponent.is_none() }).count();
    BoundaryFit { fits, failures, corners_dropped: trace.corners_dropped }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RellichReport {
    pub lhs: f64,
    pub rhs_factor: f64,
    pub rhs: f64,
    pub relative_residual: f64,
    pub cross_gap: f64,
    /// ∫ u^{q+1}
    pub potential_u: f64,
    /// ∫ v^{p+1}
    pub potential_v: f64,
    /// Trace points skipped because a normal fit failed.
    pub failed_points: usize,
    pub corners_dropped: bool,
    pub star_shaped: bool,
}

/// Both sides of the boundary identity
/// Γ(1+s)² ∮ (u/d^s)(v/d^s)(x·ν) dσ = (n/(q+1) + n/(p+1) − (n−2s)) ∫ u^{q+1}.
pub fn rellich_residual(pair: &SolutionPair, exps: ExponentPair, grid: &Grid, s: f64) -> RellichReport {
    let n = grid.dimension();
    let qu = boundary_quotient(&pair.u, grid, s);
    let qv = boundary_quotient(&pair.v, grid, s);
    let mut lhs = 0.0;
    let mut failed = 0;
    for (a, b) in qu.fits.iter().zip(&qv.fits) {
        match (a.quotient, b.quotient) {
            (Some(cu), Some(cv)) => {
                let xn = a.point[0] * a.normal[0] + a.point[1] * a.normal[1];
                lhs += cu * cv * xn * a.weight;
            }
            _ => failed += 1,
        }
    }
    lhs *= gamma(1.0 + s).powi(2);
    let potential_u = grid.integrate(&pair.u.positive_power(exps.q + 1.0));
    let potential_v = grid.integrate(&pair.v.positive_power(exps.p + 1.0));
    let rhs_factor = exps.rhs_factor(n, s);
    let rhs = rhs_factor * potential_u;
    RellichReport {
        lhs,
        rhs_factor,
        rhs,
        relative_residual: (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(RESIDUAL_FLOOR),
        cross_gap: (potential_v - potential_u).abs() / potential_u.max(RESIDUAL_FLOOR),
        potential_u,
        potential_v,
        failed_points: failed,
        corners_dropped: qu.corners_dropped,
        star_shaped: grid.domain().is_star_shaped_wrt_origin(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniquenessGap {
    pub gap_u: f64,
    pub gap_v: f64,
    /// Gaps divided by the sup-norms of the first pair.
    pub relative_u: f64,
    pub relative_v: f64,
    /// min over nodes of min(u₁/u₂, v₁/v₂)
    pub sliding: f64,
}

pub fn uniqueness_gap(a: &SolutionPair, b: &SolutionPair) -> Result<UniquenessGap> {
    if a.u.len() != b.u.len() {
        return Err(Error::Config("pairs live on different grids".into()));
    }
    if !(a.is_positive() && b.is_positive()) {
        return Err(Error::Numerical("uniqueness gap needs strictly positive pairs".into()));
    }
    let gap_u = (&a.u - &b.u).sup_norm();
    let gap_v = (&a.v - &b.v).sup_norm();
    let ratio = |x: &GridFunction, y: &GridFunction| x.values().iter().zip(y.values()).map(|(p, q)| p / q).fold(f64::INFINITY, f64::min);
    Ok(UniquenessGap {
        gap_u,
        gap_v,
        relative_u: gap_u / a.u.sup_norm(),
        relative_v: gap_v / a.v.sup_norm(),
        sliding: ratio(&a.u, &b.u).min(ratio(&a.v, &b.v)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub trial: usize,
    pub node: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaximumPrincipleAudit {
    pub trials: usize,
    pub passed: usize,
    pub skipped: usize,
    pub min_solution: f64,
    pub witnesses: Vec<Witness>,
}

impl MaximumPrincipleAudit {
    pub fn ok(&self) -> bool {
        self.witnesses.is_empty()
    }
}

/// Solves A w = f for `trials` random f ≥ 0 and records every node where w ≤ 0.
///
/// Each draw has a random support: every entry is zero with probability 1/2,
/// so single-node and sparse right-hand sides are exercised as well.
pub fn maximum_principle_audit(op: &FractionalOperator, trials: usize, seed: u64) -> Result<MaximumPrincipleAudit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = MaximumPrincipleAudit { trials, passed: 0, skipped: 0, min_solution: f64::INFINITY, witnesses: Vec::new() };
    for trial in 0..trials {
        let sparsity: f64 = rng.random_range(0.0..1.0);
        let f = GridFunction::from_vec(
            (0..op.size()).map(|_| if rng.random_range(0.0..1.0) < sparsity { 0.0 } else { rng.random_range(0.0..1.0) }).collect(),
        );
        if f.max() <= 0.0 {
            report.skipped += 1;
            continue;
        }
        let w = op.solve_linear(&f)?;
        let before = report.witnesses.len();
        for (node, &value) in w.values().iter().enumerate() {
            if value <= 0.0 {
                report.witnesses.push(Witness { trial, node, value });
            }
        }
        report.min_solution = report.min_solution.min(w.min());
        if report.witnesses.len() == before {
            report.passed += 1;
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseCheck {
    pub min_entry: f64,
    pub negative_entries: usize,
}

/// Entrywise sign of A⁻¹.
pub fn inverse_nonnegativity(op: &FractionalOperator) -> Result<InverseCheck> {
    let n = op.size();
    let inv = op.solve_matrix(&DMatrix::identity(n, n))?;
    Ok(InverseCheck { min_entry: inv.min(), negative_entries: inv.iter().filter(|x| **x < 0.0).count() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorReport {
    pub size: usize,
    pub normalization: f64,
    /// max |A − Aᵀ|
    pub asymmetry: f64,
    pub min_diagonal: f64,
    pub max_off_diagonal: f64,
    pub min_row_sum: f64,
    /// |⟨A u, v⟩ − ⟨u, A v⟩| / (‖A u‖‖v‖) for a random pair
    pub adjoint_defect: f64,
    pub zero_map: f64,
    /// Present when the operator is small enough to invert densely.
    pub inverse: Option<InverseCheck>,
}

impl OperatorReport {
    pub fn ok(&self) -> bool {
        self.asymmetry <= 1e-12 * self.min_diagonal
            && self.min_diagonal > 0.0
            && self.max_off_diagonal <= 0.0
            && self.min_row_sum > 0.0
            && self.adjoint_defect <= 1e-12
            && self.zero_map == 0.0
            && self.inverse.is_none_or(|c| c.negative_entries == 0)
    }
}

/// Largest operator for which [`operator_invariants`] also inverts A.
pub const INVERSE_CHECK_LIMIT: usize = 4096;

pub fn operator_invariants(op: &FractionalOperator, seed: u64) -> Result<OperatorReport> {
    let a = op.matrix();
    let n = op.size();
    let mut asymmetry: f64 = 0.0;
    let mut min_diagonal = f64::INFINITY;
    let mut max_off_diagonal = f64::NEG_INFINITY;
    let mut min_row_sum = f64::INFINITY;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            let x = a[(i, j)];
            row += x;
            if i == j {
                min_diagonal = min_diagonal.min(x);
            } else {
                max_off_diagonal = max_off_diagonal.max(x);
                asymmetry = asymmetry.max((x - a[(j, i)]).abs());
            }
        }
        min_row_sum = min_row_sum.min(row);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || GridFunction::from_vec((0..n).map(|_| rng.random_range(-1.0..1.0)).collect());
    let (u, v) = (draw(), draw());
    let (au, av) = (op.apply(&u), op.apply(&v));
    let adjoint_defect = (au.dot(&v) - u.dot(&av)).abs() / (au.as_vector().norm() * v.as_vector().norm());
    let zero_map = op.apply(&GridFunction::zeros(n)).sup_norm();
    let inverse = if n <= INVERSE_CHECK_LIMIT { Some(inverse_nonnegativity(op)?) } else { None };
    Ok(OperatorReport {
        size: n,
        normalization: op.normalization(),
        asymmetry,
        min_diagonal,
        max_off_diagonal,
        min_row_sum,
        adjoint_defect,
        zero_map,
        inverse,
    })
}

/// Lower bound for inf over the sphere ‖u‖ = ρ of Φ, maximized over ρ.
///
/// With the kinetic norm ‖u‖ = ‖A u‖_{(p+1)/p} one has
/// ‖u‖_{q+1} ≤ |Ω|^{1/(q+1)} K ‖u‖, where K bounds the Green matrix rows in
/// the dual norm, so Φ(u) ≥ p/(p+1) ρ^{(p+1)/p} − |Ω| K^{q+1} ρ^{q+1}/(q+1).
pub fn mountain_ridge_lower_bound(op: &FractionalOperator, grid: &Grid, exps: ExponentPair) -> Result<f64> {
    let (p, q) = (exps.p, exps.q);
    let n = op.size();
    let w = op.quadrature_weight();
    let inv = op.solve_matrix(&DMatrix::identity(n, n))?;
    // kernel of u = A⁻¹f as an integral operator: G_ij = inv_ij / w
    let k =
        (0..n).map(|i| (0..n).map(|j| (inv[(i, j)] / w).abs().powf(p + 1.0) * w).sum::<f64>().powf(1.0 / (p + 1.0))).fold(0.0, f64::max);
    let measure = grid.discrete_measure();
    let lower = |rho: f64| p / (p + 1.0) * rho.powf((p + 1.0) / p) - measure * k.powf(q + 1.0) * rho.powf(q + 1.0) / (q + 1.0);
    // the maximizer satisfies ρ^{1/p} = |Ω| K^{q+1} ρ^q
    let exponent = q - 1.0 / p;
    if exponent <= 0.0 {
        return Err(Error::Config("ridge bound needs pq > 1".into()));
    }
    let rho = (1.0 / (measure * k.powf(q + 1.0))).powf(1.0 / exponent);
    Ok(lower(rho))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Domain;
    use crate::grid::build_grid;
    use crate::solvers::{minimize_sublinear, mountain_pass, IterationTrace, SolverConfig};

    fn interval(n: usize, s: f64) -> (Grid, FractionalOperator) {
        let g = build_grid(Domain::interval(-1.0, 1.0).unwrap(), n).unwrap();
        let op = FractionalOperator::assemble(&g, s).unwrap();
        (g, op)
    }

    #[test]
    fn classify_examples() {
        let e = |p, q| ExponentPair::new(p, q).unwrap();
        assert_eq!(classify(e(1.0, 1.0), 1, 0.5), Regime::Resonant);
        assert_eq!(classify(e(2.0, 2.0), 3, 0.5), Regime::Critical);
        assert_eq!(classify(e(5.0, 5.0), 1, 0.5), Regime::SuperlinearSubcritical);
        assert_eq!(classify(e(0.5, 0.5), 2, 0.5), Regime::Sublinear);
        assert_eq!(classify(e(10.0, 10.0), 3, 0.5), Regime::Supercritical);
    }

    #[test]
    fn quotient_of_torsion_profile() {
        let (g, _) = interval(512, 0.5);
        let u = g.sample(|x| (1.0 - x[0] * x[0]).sqrt());
        let fit = boundary_quotient(&u, &g, 0.5);
        assert_eq!(fit.failures, 0);
        for c in fit.quotients() {
            assert!((c - 2f64.sqrt()).abs() < 0.01, "{c}");
        }
        let alpha = boundary_exponent_fit(&u, &g).mean_exponent().unwrap();
        assert!((alpha - 0.5).abs() < 0.02);
    }

    #[test]
    fn quotient_of_pure_power_is_one() {
        for dom in [Domain::interval(-1.0, 1.0).unwrap(), Domain::disk(1.0, [0.0, 0.0]).unwrap()] {
            let g = build_grid(dom, 64).unwrap();
            let d = g.boundary_distance().to_vec();
            let u = GridFunction::from_vec(d.iter().map(|x| x.powf(0.3)).collect());
            let fit = boundary_quotient(&u, &g, 0.3);
            assert_eq!(fit.failures, 0);
            assert!(fit.quotients().all(|c| (c - 1.0).abs() < 1e-12));
            let linear = GridFunction::from_vec(d);
            let alpha = boundary_exponent_fit(&linear, &g).mean_exponent().unwrap();
            assert!((alpha - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rectangle_fits_flag_corners_and_skip_them() {
        let g = build_grid(Domain::rectangle(2.0, 1.0, [0.0, 0.0]).unwrap(), 64).unwrap();
        let u = GridFunction::from_vec(g.boundary_distance().iter().map(|d| d.sqrt()).collect());
        let fit = boundary_quotient(&u, &g, 0.5);
        assert!(fit.corners_dropped);
        assert!(fit.fits.len() > fit.failures);
        assert!(fit.quotients().all(|c| (c - 1.0).abs() < 1e-12));
    }

    #[test]
    fn coarse_grid_fit_fails_cleanly() {
        let (g, _) = interval(8, 0.5);
        let fit = boundary_quotient(&g.constant(1.0), &g, 0.5);
        assert_eq!(fit.failures, fit.fits.len());
        let (fine, _) = interval(64, 0.5);
        let zero = boundary_quotient(&fine.zeros(), &fine, 0.5);
        assert_eq!(zero.failures, 2);
    }

    #[test]
    fn rellich_on_cubic_solution() {
        let (g, op) = interval(256, 0.5);
        let exps = ExponentPair::new(3.0, 3.0).unwrap();
        let pair = mountain_pass(&op, &g, exps, &SolverConfig::default()).unwrap();
        let report = rellich_residual(&pair, exps, &g, 0.5);
        assert!(report.lhs > 0.0);
        assert!(report.relative_residual < 0.1, "{report:?}");
        assert!(report.cross_gap < 0.01);
        assert_eq!(report.failed_points, 0);
    }

    #[test]
    fn critical_rhs_factor_vanishes() {
        let exps = ExponentPair::new(2.0, 2.0).unwrap();
        assert_eq!(exps.rhs_factor(3, 0.5), 0.0);
    }

    #[test]
    fn gap_of_pair_with_itself_and_scaled_copy() {
        let (g, op) = interval(64, 0.5);
        let exps = ExponentPair::new(0.5, 0.5).unwrap();
        let pair = minimize_sublinear(&op, &g, exps, &SolverConfig::default()).unwrap();
        let same = uniqueness_gap(&pair, &pair).unwrap();
        assert_eq!((same.gap_u, same.gap_v, same.sliding), (0.0, 0.0, 1.0));
        let doubled = SolutionPair::evaluate(&op, &pair.u * 2.0, &pair.v * 2.0, exps, IterationTrace::new());
        let ab = uniqueness_gap(&pair, &doubled).unwrap();
        let ba = uniqueness_gap(&doubled, &pair).unwrap();
        assert!((ab.sliding - 0.5).abs() < 1e-15);
        assert_eq!(ab.gap_u, ba.gap_u);
        assert!(ab.sliding * ba.sliding <= 1.0);
        let flat = SolutionPair::evaluate(&op, g.zeros(), g.zeros(), exps, IterationTrace::new());
        assert!(uniqueness_gap(&pair, &flat).is_err());
    }

    #[test]
    fn audit_passes_and_is_seeded() {
        let (_, op) = interval(128, 0.5);
        let a = maximum_principle_audit(&op, 100, 5).unwrap();
        assert!(a.ok());
        assert_eq!(a.passed + a.skipped, 100);
        assert_eq!(a, maximum_principle_audit(&op, 100, 5).unwrap());
    }

    #[test]
    fn single_cell_source_spreads_everywhere() {
        let (g, op) = interval(32, 0.3);
        let mut f = g.zeros();
        f[3] = 1.0;
        assert!(op.solve_linear(&f).unwrap().min() > 0.0);
        assert_eq!(inverse_nonnegativity(&op).unwrap().negative_entries, 0);
    }

    #[test]
    fn operator_report_on_disk() {
        let g = build_grid(Domain::disk(1.0, [0.0, 0.0]).unwrap(), 24).unwrap();
        let op = FractionalOperator::assemble(&g, 0.6).unwrap();
        let r = operator_invariants(&op, 1).unwrap();
        assert!(r.ok(), "{r:?}");
    }

    #[test]
    fn ridge_bound_is_positive_and_below_solution() {
        let (g, op) = interval(128, 0.5);
        let exps = ExponentPair::new(3.0, 3.0).unwrap();
        let lb = mountain_ridge_lower_bound(&op, &g, exps).unwrap();
        let pair = mountain_pass(&op, &g, exps, &SolverConfig::default()).unwrap();
        assert!(lb > 0.0);
        assert!(lb <= pair.energy.value);
    }
}
