//! Configured runs: dispatch, solve, diagnose, persist.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{boundary_exponent_fit, rellich_residual, uniqueness_gap, RellichReport, UniquenessGap};
use crate::domain::Domain;
use crate::energy::{EnergyReport, ExponentPair, Regime};
use crate::error::{Error, Result};
use crate::grid::{build_grid, Grid};
use crate::operator::FractionalOperator;
use crate::solvers::{minimize_sublinear, mountain_pass, InitialGuess, SolutionPair, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverChoice {
    #[default]
    Auto,
    Sublinear,
    MountainPass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: Domain,
    /// Optional dimension check against the domain.
    #[serde(default)]
    pub n: Option<usize>,
    pub resolution: usize,
    pub s: f64,
    pub p: f64,
    pub q: f64,
    #[serde(default)]
    pub solver: SolverChoice,
    #[serde(default)]
    pub solver_config: SolverConfig,
    /// A second start for the uniqueness comparison.
    #[serde(default)]
    pub second_init: Option<InitialGuess>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_true")]
    pub write_solution: bool,
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn new(domain: Domain, resolution: usize, s: f64, p: f64, q: f64) -> Self {
        ExperimentConfig {
            domain,
            n: None,
            resolution,
            s,
            p,
            q,
            solver: SolverChoice::Auto,
            solver_config: SolverConfig::default(),
            second_init: None,
            output_dir: None,
            write_solution: true,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid configuration: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validated()?;
        let dim = self.domain.dimension();
        if let Some(n) = self.n {
            if !(1..=2).contains(&n) {
                return Err(Error::Config(format!("dimension n = {n} is not supported (n must be 1 or 2)")));
            }
            if n != dim {
                return Err(Error::Config(format!("n = {n} does not match the {dim}-dimensional domain")));
            }
        }
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::OrderOutOfRange(self.s));
        }
        self.exponents()?;
        self.solver_config.validate()
    }

    pub fn exponents(&self) -> Result<ExponentPair> {
        ExponentPair::new(self.p, self.q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    NonConvergence,
    Resonant,
    /// Outside the existence range, or a solver forced onto the wrong regime.
    Rejected,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Converged => 0,
            RunStatus::NonConvergence => 2,
            RunStatus::Resonant | RunStatus::Rejected => 3,
        }
    }
}

/// Outcome of one run; every field is always present (unset ones serialize as null).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub input: ExperimentConfig,
    pub regime: Regime,
    pub rhs_factor: f64,
    pub status: RunStatus,
    pub message: Option<String>,
    pub solver: Option<String>,
    pub nodes: usize,
    pub iterations: Option<usize>,
    pub residual_u: Option<f64>,
    pub residual_v: Option<f64>,
    pub min_u: Option<f64>,
    pub min_v: Option<f64>,
    pub energy: Option<EnergyReport>,
    pub rellich: Option<RellichReport>,
    pub exponent_u: Option<f64>,
    pub exponent_v: Option<f64>,
    pub uniqueness: Option<UniquenessGap>,
    pub wall_clock_seconds: f64,
}

impl ResultRecord {
    /// The record with the timing zeroed, for comparing numerics across runs.
    pub fn numerics(&self) -> ResultRecord {
        ResultRecord { wall_clock_seconds: 0.0, ..self.clone() }
    }
}

/// Wall-clock timer; reads zero where the platform has no clock (wasm32).
#[derive(Clone, Copy)]
struct Stopwatch(#[cfg(not(target_arch = "wasm32"))] std::time::Instant);

impl Stopwatch {
    fn start() -> Self {
        Stopwatch(
            #[cfg(not(target_arch = "wasm32"))]
            std::time::Instant::now(),
        )
    }

    fn seconds(self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        return self.0.elapsed().as_secs_f64();
        #[cfg(target_arch = "wasm32")]
        0.0
    }
}

pub struct Experiment {
    pub record: ResultRecord,
    pub grid: Grid,
    pub solution: Option<SolutionPair>,
}

/// Validates, discretizes and runs one configuration. Only configuration
/// problems are returned as errors; solver outcomes land in the record.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Experiment> {
    let start = Stopwatch::start();
    cfg.validate()?;
    let grid = build_grid(cfg.domain, cfg.resolution)?;
    let op = FractionalOperator::assemble(&grid, cfg.s)?;
    let mut exp = run_on(&grid, &op, cfg)?;
    exp.record.wall_clock_seconds = start.seconds();
    Ok(exp)
}

/// Runs `cfg` on an already assembled operator; `cfg.domain`, `resolution`
/// and `s` must describe `grid` and `op`.
pub fn run_on(grid: &Grid, op: &FractionalOperator, cfg: &ExperimentConfig) -> Result<Experiment> {
    let start = Stopwatch::start();
    cfg.validate()?;
    let exps = cfg.exponents()?;
    let n = grid.dimension();
    let regime = exps.regime(n, cfg.s);
    let mut record = ResultRecord {
        input: cfg.clone(),
        regime,
        rhs_factor: exps.rhs_factor(n, cfg.s),
        status: RunStatus::Rejected,
        message: None,
        solver: None,
        nodes: grid.num_nodes(),
        iterations: None,
        residual_u: None,
        residual_v: None,
        min_u: None,
        min_v: None,
        energy: None,
        rellich: None,
        exponent_u: None,
        exponent_v: None,
        uniqueness: None,
        wall_clock_seconds: 0.0,
    };

    let solver = match (cfg.solver, regime) {
        (_, Regime::Resonant) => {
            record.status = RunStatus::Resonant;
            record.message = Some(format!("pq = {} is resonant; no solver is applied", exps.product()));
            return Ok(finish(record, grid, None, start));
        }
        (SolverChoice::Auto, Regime::Critical | Regime::Supercritical) => {
            record.message = Some(obstruction_verdict(grid, record.rhs_factor));
            return Ok(finish(record, grid, None, start));
        }
        (SolverChoice::Auto, Regime::Sublinear) | (SolverChoice::Sublinear, _) => SolverChoice::Sublinear,
        _ => SolverChoice::MountainPass,
    };
    let solve = |init: Option<&InitialGuess>| {
        let mut sc = cfg.solver_config.clone();
        if let Some(init) = init {
            sc.initial_guess = init.clone();
        }
        match solver {
            SolverChoice::Sublinear => minimize_sublinear(op, grid, exps, &sc),
            _ => mountain_pass(op, grid, exps, &sc),
        }
    };
    record.solver = Some(if solver == SolverChoice::Sublinear { "minimize_sublinear" } else { "mountain_pass" }.to_string());

    let pair = match solve(None) {
        Ok(pair) => pair,
        Err(e) => {
            record.message = Some(e.to_string());
            record.status = match e {
                Error::Config(_) | Error::OrderOutOfRange(_) => return Err(e),
                Error::Resonant { .. } => RunStatus::Resonant,
                Error::WrongRegime { .. } => RunStatus::Rejected,
                Error::NonConvergence { trace, .. } => {
                    record.iterations = Some(trace.len());
                    RunStatus::NonConvergence
                }
                _ => RunStatus::NonConvergence,
            };
            return Ok(finish(record, grid, None, start));
        }
    };

    record.status = RunStatus::Converged;
    record.iterations = Some(pair.trace.len());
    record.residual_u = Some(pair.residual_u);
    record.residual_v = Some(pair.residual_v);
    record.min_u = Some(pair.min_u);
    record.min_v = Some(pair.min_v);
    record.energy = Some(pair.energy);
    record.rellich = Some(rellich_residual(&pair, exps, grid, cfg.s));
    record.exponent_u = boundary_exponent_fit(&pair.u, grid).mean_exponent();
    record.exponent_v = boundary_exponent_fit(&pair.v, grid).mean_exponent();
    if let Some(init) = &cfg.second_init {
        match solve(Some(init)) {
            Ok(other) => record.uniqueness = Some(uniqueness_gap(&pair, &other)?),
            Err(e) => record.message = Some(format!("second initialization failed: {e}")),
        }
    }
    Ok(finish(record, grid, Some(pair), start))
}

fn finish(mut record: ResultRecord, grid: &Grid, solution: Option<SolutionPair>, start: Stopwatch) -> Experiment {
    record.wall_clock_seconds = start.seconds();
    Experiment { record, grid: grid.clone(), solution }
}

fn obstruction_verdict(grid: &Grid, rhs_factor: f64) -> String {
    let star = grid.domain().is_star_shaped_wrt_origin();
    if star {
        format!(
            "rhs_factor = {rhs_factor:.6} ≤ 0 while the boundary term is positive on this star-shaped domain: \
             the Rellich identity excludes positive solutions (consistency verdict, not a proof)"
        )
    } else {
        format!("rhs_factor = {rhs_factor:.6} ≤ 0; no existence result applies on this domain and no solver is run")
    }
}

/// Solution values as CSV: `x,u,v` in one dimension and `x,y,u,v` in two.
pub fn write_solution_csv<W: Write>(grid: &Grid, pair: &SolutionPair, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    if grid.dimension() == 1 {
        w.write_record(["x", "u", "v"]).map_err(csv_err)?;
    } else {
        w.write_record(["x", "y", "u", "v"]).map_err(csv_err)?;
    }
    for (i, x) in grid.coords().iter().enumerate() {
        let mut row = vec![x[0].to_string()];
        if grid.dimension() == 2 {
            row.push(x[1].to_string());
        }
        row.push(pair.u[i].to_string());
        row.push(pair.v[i].to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `record.json` and, when present and requested, `solution.csv`.
pub fn write_outputs(exp: &Experiment, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let record_path = dir.join("record.json");
    fs::write(&record_path, serde_json::to_string_pretty(&exp.record)?)?;
    let mut written = vec![record_path];
    if let (true, Some(pair)) = (exp.record.input.write_solution, &exp.solution) {
        let path = dir.join("solution.csv");
        write_solution_csv(&exp.grid, pair, fs::File::create(&path)?)?;
        written.push(path);
    }
    Ok(written)
}

/// Runs `base` at every (p, q) in parallel on a shared operator. Rows keep
/// the order of `points`; a failing point is recorded and the sweep goes on.
pub fn phase_diagram(base: &ExperimentConfig, points: &[(f64, f64)]) -> Result<Vec<ResultRecord>> {
    if points.is_empty() {
        return Ok(Vec::new());
    }
    base.domain.validated()?;
    let grid = build_grid(base.domain, base.resolution)?;
    let op = FractionalOperator::assemble(&grid, base.s)?;
    points
        .par_iter()
        .map(|&(p, q)| {
            let cfg = ExperimentConfig { p, q, ..base.clone() };
            run_on(&grid, &op, &cfg).map(|e| e.record)
        })
        .collect()
}

pub const PHASE_COLUMNS: [&str; 12] = [
    "p",
    "q",
    "pq",
    "regime",
    "rhs_factor",
    "status",
    "solver",
    "iterations",
    "max_residual",
    "energy",
    "rellich_residual",
    "wall_clock_seconds",
];

/// One CSV row per record with the columns of [`PHASE_COLUMNS`]; unset values are empty.
pub fn write_phase_table<W: Write>(records: &[ResultRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(PHASE_COLUMNS).map_err(csv_err)?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for r in records {
        let status = serde_json::to_value(r.status)?.as_str().unwrap_or_default().to_string();
        let residual = r.residual_u.zip(r.residual_v).map(|(a, b)| a.max(b));
        w.write_record([
            r.input.p.to_string(),
            r.input.q.to_string(),
            (r.input.p * r.input.q).to_string(),
            r.regime.to_string(),
            r.rhs_factor.to_string(),
            status,
            r.solver.clone().unwrap_or_default(),
            r.iterations.map(|i| i.to_string()).unwrap_or_default(),
            opt(residual),
            opt(r.energy.map(|e| e.value)),
            opt(r.rellich.as_ref().map(|x| x.relative_residual)),
            r.wall_clock_seconds.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(p: f64, q: f64) -> ExperimentConfig {
        ExperimentConfig::new(Domain::interval(-1.0, 1.0).unwrap(), 64, 0.5, p, q)
    }

    #[test]
    fn sublinear_run_converges() {
        let exp = run_experiment(&base(0.5, 0.5)).unwrap();
        let r = &exp.record;
        assert_eq!(r.regime, Regime::Sublinear);
        assert_eq!(r.status, RunStatus::Converged);
        assert!(r.energy.unwrap().value < 0.0);
        assert!(r.rellich.is_some());
        assert_eq!(r.status.exit_code(), 0);
    }

    #[test]
    fn resonant_and_forced_solver() {
        let r = run_experiment(&base(1.0, 1.0)).unwrap().record;
        assert_eq!(r.status, RunStatus::Resonant);
        assert_eq!(r.status.exit_code(), 3);
        let forced = ExperimentConfig { solver: SolverChoice::MountainPass, ..base(0.5, 0.5) };
        assert_eq!(run_experiment(&forced).unwrap().record.status, RunStatus::Rejected);
    }

    #[test]
    fn supercritical_is_rejected_with_verdict() {
        let cfg = ExperimentConfig::new(Domain::disk(1.0, [0.0, 0.0]).unwrap(), 16, 0.5, 10.0, 10.0);
        let r = run_experiment(&cfg).unwrap().record;
        assert_eq!(r.regime, Regime::Supercritical);
        assert_eq!(r.status, RunStatus::Rejected);
        assert!(r.rhs_factor < 0.0);
        assert!(r.message.unwrap().contains("Rellich"));
    }

    #[test]
    fn unsupported_dimension_is_config_error() {
        let cfg = ExperimentConfig { n: Some(3), ..base(0.5, 0.5) };
        assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));
        let mismatch = ExperimentConfig { n: Some(2), ..base(0.5, 0.5) };
        assert!(matches!(run_experiment(&mismatch), Err(Error::Config(_))));
    }

    #[test]
    fn config_json_round_trip_and_defaults() {
        let text = r#"{"domain": {"kind": "interval", "a": -1, "b": 1}, "resolution": 32, "s": 0.5, "p": 0.5, "q": 0.5}"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(cfg.solver, SolverChoice::Auto);
        assert_eq!(cfg.solver_config, SolverConfig::default());
        let again = ExperimentConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again);
        assert!(ExperimentConfig::from_json(r#"{"resolution": 32}"#).is_err());
    }

    #[test]
    fn records_share_one_field_set() {
        let keys = |r: &ResultRecord| {
            let v = serde_json::to_value(r).unwrap();
            v.as_object().unwrap().keys().cloned().collect::<Vec<_>>()
        };
        let ok = run_experiment(&base(0.5, 0.5)).unwrap().record;
        let res = run_experiment(&base(1.0, 1.0)).unwrap().record;
        let budget = ExperimentConfig { solver_config: SolverConfig { max_iterations: 1, ..Default::default() }, ..base(0.5, 0.5) };
        let failed = run_experiment(&budget).unwrap().record;
        assert_eq!(failed.status, RunStatus::NonConvergence);
        assert_eq!(keys(&ok), keys(&res));
        assert_eq!(keys(&ok), keys(&failed));
    }

    #[test]
    fn rerun_from_echo_is_bitwise_identical() {
        let cfg = ExperimentConfig {
            solver_config: SolverConfig { initial_guess: InitialGuess::RandomPositive, seed: 4, ..Default::default() },
            ..base(3.0, 3.0)
        };
        let a = run_experiment(&cfg).unwrap().record;
        let b = run_experiment(&a.input).unwrap().record;
        assert_eq!(a.numerics(), b.numerics());
    }

    #[test]
    fn second_init_reports_uniqueness() {
        let cfg = ExperimentConfig { second_init: Some(InitialGuess::RandomPositive), ..base(0.5, 0.5) };
        let gap = run_experiment(&cfg).unwrap().record.uniqueness.unwrap();
        assert!(gap.relative_u < 1e-6);
        assert!((gap.sliding - 1.0).abs() < 1e-6);
    }

    #[test]
    fn phase_sweep_is_ordered() {
        let points = [(0.25, 0.25), (0.5, 0.5), (1.0, 1.0), (2.0, 2.0), (3.0, 3.0)];
        let rows = phase_diagram(&base(0.0, 0.0), &points).unwrap();
        let got: Vec<_> = rows.iter().map(|r| (r.input.p, r.status)).collect();
        assert_eq!(
            got,
            vec![
                (0.25, RunStatus::Converged),
                (0.5, RunStatus::Converged),
                (1.0, RunStatus::Resonant),
                (2.0, RunStatus::Converged),
                (3.0, RunStatus::Converged)
            ]
        );
        assert_eq!(rows[0].solver.as_deref(), Some("minimize_sublinear"));
        assert_eq!(rows[4].solver.as_deref(), Some("mountain_pass"));
        let mut buf = Vec::new();
        write_phase_table(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.lines().nth(3).unwrap().contains("resonant"));
        assert!(phase_diagram(&base(0.5, 0.5), &[]).unwrap().is_empty());
    }

    #[test]
    fn outputs_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::new(Domain::rectangle(2.0, 1.0, [0.0, 0.0]).unwrap(), 16, 0.5, 0.5, 0.5);
        let exp = run_experiment(&cfg).unwrap();
        let files = write_outputs(&exp, dir.path()).unwrap();
        assert_eq!(files.len(), 2);
        let csv = fs::read_to_string(dir.path().join("solution.csv")).unwrap();
        assert!(csv.starts_with("x,y,u,v\n"));
        assert_eq!(csv.lines().count(), exp.grid.num_nodes() + 1);
        let back: ResultRecord = serde_json::from_str(&fs::read_to_string(&files[0]).unwrap()).unwrap();
        assert_eq!(back, exp.record);
    }
}
