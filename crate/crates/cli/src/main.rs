use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use tvcontrol::adjoint::{OptimalityReport, Scheme};
use tvcontrol::examples::{example1, example2};
use tvcontrol::fem::{Mesh, NodalFunction};
use tvcontrol::outer::{solve, Solution, SolverConfig};
use tvcontrol::study::{format_real, run_study, write_report, Example, Metric, StudyConfig, DEFAULT_REFERENCE_LEVEL, DEFAULT_SAMPLES_PER_ELEMENT};
use tvcontrol::subproblem::SubproblemSolution;
use tvcontrol::verify::{run_suite, Suite};
use tvcontrol::{Error, JumpControl};

#[derive(Parser, Debug)]
#[command(name = "tvcontrol", version, about = "Elliptic optimal control with total-variation regularized jump controls")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one problem on a uniform mesh and write the solution files.
    Solve(SolveArgs),
    /// Mesh-refinement study over uniform meshes with n = 2^k - 1 elements.
    Study(StudyArgs),
    /// Run the randomized property suites and print a pass/fail table.
    Verify(VerifyArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SchemeArg {
    Variational,
    Full,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Variational => Scheme::Variational,
            SchemeArg::Full => Scheme::Full,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct SolverArgs {
    /// Regularization weight (defaults to the example's 1e-5).
    #[arg(long)]
    alpha: Option<f64>,
    /// Inner fixed-point residual tolerance.
    #[arg(long, default_value_t = 1e-12)]
    eps_in: f64,
    /// Outer tolerance on jump positions (or coefficients for the full scheme).
    #[arg(long, default_value_t = 1e-10)]
    eps_out: f64,
    /// Gauss-Legendre points per element.
    #[arg(long, default_value_t = 5)]
    quad_order: usize,
    /// Outer iteration budget.
    #[arg(long, default_value_t = 200)]
    max_outer: usize,
    /// Disable the step-halving damper of the outer iteration.
    #[arg(long)]
    no_damping: bool,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            eps_in: self.eps_in,
            eps_out: self.eps_out,
            max_outer: self.max_outer,
            quad_order: self.quad_order,
            damping_enabled: !self.no_damping,
            ..SolverConfig::default()
        }
    }
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// Example id: 1 (known solution) or 2.
    #[arg(long, value_parser = ["1", "2"])]
    example: String,
    #[arg(long, value_enum, default_value = "variational")]
    scheme: SchemeArg,
    /// Number of elements.
    #[arg(long)]
    n: usize,
    #[command(flatten)]
    solver: SolverArgs,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct StudyArgs {
    #[arg(long, value_parser = ["1", "2"])]
    example: String,
    #[arg(long, value_enum, default_value = "variational")]
    scheme: SchemeArg,
    /// Inclusive level range `a..b` (or a single level).
    #[arg(long, value_parser = parse_levels)]
    levels: (u32, u32),
    /// Reference level for example 2.
    #[arg(long, default_value_t = DEFAULT_REFERENCE_LEVEL)]
    reference_level: u32,
    /// Comma-separated subset of e_q_L1,e_q_L2,e_u_L2,e_z_Linf,e_z_grad_Linf.
    #[arg(long, value_delimiter = ',')]
    metrics: Option<Vec<String>>,
    /// Sup-norm samples per element.
    #[arg(long, default_value_t = DEFAULT_SAMPLES_PER_ELEMENT)]
    samples: usize,
    /// Levels solved concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// projection, oracle, example1, fem, symmetry or all.
    #[arg(long, default_value = "all")]
    suite: String,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn parse_levels(s: &str) -> Result<(u32, u32), String> {
    let bad = || format!("expected `a..b` or `k`, got `{s}`");
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (a, b.trim_start_matches('=')),
        None => (s, s),
    };
    let a: u32 = a.trim().parse().map_err(|_| bad())?;
    let b: u32 = b.trim().parse().map_err(|_| bad())?;
    if a > b {
        return Err(format!("empty level range `{s}`"));
    }
    Ok((a, b))
}

/// A failure tagged with the stage that produced it.
struct Failure {
    stage: String,
    error: Error,
}

fn at(stage: impl Into<String>) -> impl FnOnce(Error) -> Failure {
    let stage = stage.into();
    move |error| Failure { stage, error }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidArgument(_) => 2,
        Error::StudyLevel { source, .. } => exit_code(source),
        _ => 1,
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    example: &'a str,
    scheme: Scheme,
    n: usize,
    alpha: f64,
    objective: f64,
    objective_at_zero: f64,
    outer_iterations: usize,
    jumps: usize,
    offset: f64,
    jump_positions: Vec<f64>,
    jump_heights: Vec<f64>,
    plateaus: Vec<f64>,
    /// `None` where the point count changed between iterations.
    step_history: Vec<Option<f64>>,
    optimality: &'a OptimalityReport,
    inner: &'a SubproblemSolution,
}

fn nodal_csv(f: &NodalFunction) -> String {
    nodal_pairs_csv(f.mesh().nodes(), f.values())
}

fn nodal_pairs_csv(nodes: &[f64], values: &[f64]) -> String {
    let mut out = String::from("node,value\n");
    for (x, v) in nodes.iter().zip(values) {
        let _ = writeln!(out, "{},{}", format_real(*x), format_real(*v));
    }
    out
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("in-memory values serialize") + "\n"
}

fn write_solution(dir: &Path, example: &str, alpha: f64, sol: &Solution) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let control: &JumpControl = &sol.control;
    write(&dir.join("control.json"), &json(control))?;
    write(&dir.join("state.csv"), &nodal_csv(&sol.state))?;
    write(&dir.join("adjoint.csv"), &nodal_csv(&sol.adjoint))?;
    write(&dir.join("phi.csv"), &nodal_pairs_csv(sol.phi.mesh().nodes(), sol.phi.nodal()))?;
    let summary = Summary {
        example,
        scheme: sol.scheme,
        n: sol.mesh().element_count(),
        alpha,
        objective: sol.objective,
        objective_at_zero: sol.objective_at_zero,
        outer_iterations: sol.outer_iterations,
        jumps: control.active_jumps().count(),
        offset: control.offset(),
        jump_positions: control.positions(),
        jump_heights: control.jumps().iter().map(|j| j.c).collect(),
        plateaus: control.segments().1,
        step_history: sol.step_history.iter().map(|s| s.is_finite().then_some(*s)).collect(),
        optimality: &sol.optimality,
        inner: &sol.inner_report,
    };
    write(&dir.join("summary.json"), &json(&summary))
}

fn run_solve(args: &SolveArgs) -> Result<(), Failure> {
    let mut spec = match args.example.as_str() {
        "1" => example1().0,
        _ => example2(),
    };
    if let Some(a) = args.solver.alpha {
        spec.alpha = a;
    }
    let mesh = Mesh::uniform(args.n).map_err(at("mesh"))?;
    let sol = solve(&spec, &mesh, &args.solver.config(), args.scheme.into()).map_err(at("solve"))?;
    write_solution(&args.out, &args.example, spec.alpha, &sol).map_err(at("output"))?;
    println!(
        "{} jumps, objective {:.6e}, {} outer iterations -> {}",
        sol.control.active_jumps().count(),
        sol.objective,
        sol.outer_iterations,
        args.out.display()
    );
    Ok(())
}

fn run_study_cmd(args: &StudyArgs) -> Result<(), Failure> {
    let example: Example = args.example.parse().map_err(at("arguments"))?;
    if args.solver.alpha.is_some() {
        return Err(at("arguments")(Error::InvalidArgument(
            "studies use the example's own alpha; --alpha is only accepted by solve".into(),
        )));
    }
    let mut cfg = StudyConfig::new(example, args.scheme.into(), args.levels.0, args.levels.1);
    if example == Example::Unknown {
        cfg.reference_level = Some(args.reference_level);
    }
    if let Some(names) = &args.metrics {
        cfg.metrics = names
            .iter()
            .map(|m| m.parse::<Metric>())
            .collect::<Result<_, _>>()
            .map_err(at("arguments"))?;
    }
    cfg.samples_per_element = args.samples;
    cfg.jobs = args.jobs;
    cfg.solver = args.solver.config();
    cfg.output_dir = Some(args.out.clone());
    cfg.validate().map_err(at("arguments"))?;

    let report = run_study(&cfg).map_err(|e| {
        let stage = match &e {
            Error::StudyLevel { level, .. } => format!("study level {level}"),
            _ => "study".into(),
        };
        at(stage)(e)
    })?;
    for row in &report.rows {
        eprintln!("n = {:>7}  outer = {:>3}  {:.3} s", row.n, row.outer_iters, row.wall_time);
    }
    let paths = write_report(&report, &args.out).map_err(at("output"))?;
    for p in paths {
        println!("{}", p.display());
    }
    Ok(())
}

fn run_verify(args: &VerifyArgs) -> Result<bool, Failure> {
    let suite: Suite = args.suite.parse().map_err(at("arguments"))?;
    let results = run_suite(suite, args.seed).map_err(at(format!("verify {}", suite.name())))?;
    let width = results.iter().map(|r| r.check.len()).max().unwrap_or(0);
    let mut all = true;
    for r in &results {
        all &= r.passed();
        println!(
            "{:<4}  {:<10}  {:<width$}  {:>4}/{:<4}  worst {:+.3e}",
            if r.passed() { "PASS" } else { "FAIL" },
            r.suite,
            r.check,
            r.cases - r.failures,
            r.cases,
            r.worst,
        );
    }
    Ok(all)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Solve(a) => run_solve(a).map(|_| true),
        Command::Study(a) => run_study_cmd(a).map(|_| true),
        Command::Verify(a) => run_verify(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            eprintln!("error [{}]: {}", f.stage, f.error);
            ExitCode::from(exit_code(&f.error))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_ranges() {
        assert_eq!(parse_levels("4..9"), Ok((4, 9)));
        assert_eq!(parse_levels("4..=9"), Ok((4, 9)));
        assert_eq!(parse_levels("6"), Ok((6, 6)));
        assert!(parse_levels("9..4").is_err());
        assert!(parse_levels("a..b").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
