use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fracsys_core::analysis::{maximum_principle_audit, operator_invariants};
use fracsys_core::experiment::{phase_diagram, run_experiment, write_outputs, write_phase_table, ExperimentConfig, SolverChoice};
use fracsys_core::solvers::InitialGuess;
use fracsys_core::{build_grid, Domain, Error, ExponentPair, FractionalOperator};

const DEFAULT_OUTPUT: &str = "fracsys-output";

#[derive(Parser)]
#[command(name = "fracsys", version, about = "Positive solutions of fractional Lane-Emden systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one configuration and write record.json and solution.csv
    Solve(SolveArgs),
    /// Print the regime of (p, q) for given n and s
    Classify(ClassifyArgs),
    /// Sweep (p, q) points and write a table of outcomes
    PhaseDiagram(PhaseArgs),
    /// Check operator invariants and the discrete maximum principle
    Audit(AuditArgs),
}

#[derive(Args)]
struct Output {
    /// Output directory [default: the config's output_dir, else ./fracsys-output]
    #[arg(long, env = "FRACSYS_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long)]
    s: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    solver: Option<SolverArg>,
}

#[derive(Args)]
struct SolveArgs {
    /// JSON configuration file
    config: PathBuf,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    /// Also solve from this start and report the uniqueness gap
    #[arg(long, value_enum)]
    second_init: Option<InitArg>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    p: f64,
    #[arg(long)]
    q: f64,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    s: f64,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct PhaseArgs {
    /// Base configuration; without it the unit interval or unit disk is used
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dimension of the default domain
    #[arg(long, default_value_t = 1)]
    n: usize,
    /// Values of p; combined with --q-values as a product grid
    #[arg(long, value_delimiter = ',')]
    p_values: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    q_values: Vec<f64>,
    /// Points with p = q
    #[arg(long, value_delimiter = ',')]
    diagonal: Vec<f64>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Auto,
    Sublinear,
    MountainPass,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Bump,
    Random,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Classify(a) => classify(a),
        Command::PhaseDiagram(a) => phase(a),
        Command::Audit(a) => audit(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(error_code(&e))
        }
    }
}

fn error_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::OrderOutOfRange(_) | Error::Json(_) => 4,
        Error::Resonant { .. } | Error::WrongRegime { .. } => 3,
        Error::NonConvergence { .. } | Error::Numerical(_) | Error::SingularJacobian => 2,
        Error::Io(_) => 1,
    }
}

fn apply(cfg: &mut ExperimentConfig, o: &Overrides) {
    if let Some(r) = o.resolution {
        cfg.resolution = r;
    }
    if let Some(s) = o.s {
        cfg.s = s;
    }
    if let Some(seed) = o.seed {
        cfg.solver_config.seed = seed;
    }
    if let Some(solver) = o.solver {
        cfg.solver = match solver {
            SolverArg::Auto => SolverChoice::Auto,
            SolverArg::Sublinear => SolverChoice::Sublinear,
            SolverArg::MountainPass => SolverChoice::MountainPass,
        };
    }
}

fn output_dir(flag: &Output, cfg: &ExperimentConfig) -> PathBuf {
    flag.output_dir.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT))
}

fn solve(a: SolveArgs) -> Result<u8, Error> {
    let mut cfg = ExperimentConfig::from_path(&a.config)?;
    apply(&mut cfg, &a.overrides);
    if let Some(p) = a.p {
        cfg.p = p;
    }
    if let Some(q) = a.q {
        cfg.q = q;
    }
    if let Some(init) = a.second_init {
        cfg.second_init = Some(match init {
            InitArg::Bump => InitialGuess::PositiveBump,
            InitArg::Random => InitialGuess::RandomPositive,
        });
    }
    let dir = output_dir(&a.output, &cfg);
    let exp = run_experiment(&cfg)?;
    let files = write_outputs(&exp, &dir)?;
    let r = &exp.record;
    println!("regime: {}", r.regime);
    println!("status: {}", serde_json::to_value(r.status)?.as_str().unwrap_or_default());
    if let Some(m) = &r.message {
        println!("message: {m}");
    }
    if let (Some(ru), Some(rv), Some(e)) = (r.residual_u, r.residual_v, r.energy) {
        println!("residuals: {ru:.3e} {rv:.3e}");
        println!("energy: {:.12}", e.value);
    }
    if let Some(rel) = &r.rellich {
        println!("rellich relative residual: {:.4e}", rel.relative_residual);
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(r.status.exit_code() as u8)
}

fn classify(a: ClassifyArgs) -> Result<u8, Error> {
    if a.n == 0 {
        return Err(Error::Config("n must be at least 1".into()));
    }
    if !(a.s > 0.0 && a.s < 1.0) {
        return Err(Error::OrderOutOfRange(a.s));
    }
    let exps = ExponentPair::new(a.p, a.q)?;
    let regime = fracsys_core::analysis::classify(exps, a.n, a.s);
    let rhs = exps.rhs_factor(a.n, a.s);
    let gap = exps.hyperbole_gap(a.n, a.s);
    if a.json {
        let v = serde_json::json!({"p": a.p, "q": a.q, "n": a.n, "s": a.s, "regime": regime, "rhs_factor": rhs, "hyperbole_gap": gap});
        println!("{v}");
    } else {
        println!("regime: {regime}");
        println!("rhs_factor: {rhs}");
        match gap {
            Some(g) => println!("hyperbole_gap: {g}"),
            None => println!("hyperbole_gap: none (n <= 2s)"),
        }
    }
    Ok(0)
}

fn default_domain(n: usize) -> Result<Domain, Error> {
    match n {
        1 => Domain::interval(-1.0, 1.0),
        2 => Domain::disk(1.0, [0.0, 0.0]),
        _ => Err(Error::Config(format!("dimension n = {n} is not supported (n must be 1 or 2)"))),
    }
}

fn base_config(config: Option<&Path>, n: usize, o: &Overrides) -> Result<ExperimentConfig, Error> {
    let mut cfg = match config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::new(default_domain(n)?, if n == 1 { 256 } else { 32 }, 0.5, 1.0, 1.0),
    };
    apply(&mut cfg, o);
    if !(cfg.s > 0.0 && cfg.s < 1.0) {
        return Err(Error::OrderOutOfRange(cfg.s));
    }
    Ok(cfg)
}

fn phase(a: PhaseArgs) -> Result<u8, Error> {
    let base = base_config(a.config.as_deref(), a.n, &a.overrides)?;
    let mut points: Vec<(f64, f64)> = a.diagonal.iter().map(|&x| (x, x)).collect();
    if a.p_values.is_empty() != a.q_values.is_empty() {
        return Err(Error::Config("--p-values and --q-values must be given together".into()));
    }
    for &p in &a.p_values {
        for &q in &a.q_values {
            points.push((p, q));
        }
    }
    let dir = output_dir(&a.output, &base);
    let records = phase_diagram(&base, &points)?;
    fs::create_dir_all(&dir)?;
    let table = dir.join("phase_diagram.csv");
    write_phase_table(&records, fs::File::create(&table)?)?;
    let json = dir.join("phase_diagram.json");
    fs::write(&json, serde_json::to_string_pretty(&records)?)?;
    write_phase_table(&records, std::io::stdout().lock())?;
    eprintln!("wrote {} and {}", table.display(), json.display());
    Ok(0)
}

fn audit(a: AuditArgs) -> Result<u8, Error> {
    let cfg = base_config(a.config.as_deref(), a.n, &a.overrides)?;
    let grid = build_grid(cfg.domain.validated()?, cfg.resolution)?;
    let op = FractionalOperator::assemble(&grid, cfg.s)?;
    let invariants = operator_invariants(&op, cfg.solver_config.seed)?;
    let mp = maximum_principle_audit(&op, a.trials, cfg.solver_config.seed)?;
    let ok = invariants.ok() && mp.ok();
    let report = serde_json::json!({"ok": ok, "operator": invariants, "maximum_principle": mp});
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(if ok { 0 } else { 1 })
}
