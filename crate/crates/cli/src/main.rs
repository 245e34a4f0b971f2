//! `cgerr`: instrumented (P)CG solves with adaptive A-norm error estimates.
//!
//! Exit codes: 0 when the stopping policy was met or the residual was
//! exhausted, 1 on I/O and validation errors, 2 when the iteration cap was
//! reached, 3 on solver or IC(0) breakdown and on estimator failure.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use cgerr::estimator::{EstimatorConfig, StopKind, StopPolicy};
use cgerr::oracle::{self, Extremes, TruthTrace, TruthTracker, CAP_ENV, DEFAULT_CAP};
use cgerr::precond::{PrecondError, PrecondKind, Preconditioner};
use cgerr::report::{self, IterationRecord};
use cgerr::session::{run_session, SessionConfig, SessionEnd, SessionResult};
use cgerr::sparse::{read_matrix_market_file, read_rhs, write_matrix_market, CsrMatrix, RhsSpec};
use cgerr::synth::{self, Spectrum};

#[derive(Parser)]
#[command(name = "cgerr", version, about = "Conjugate gradients with adaptive A-norm error estimates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve `Ax = b` and write one record per accepted estimate.
    Solve(RunArgs),
    /// Solve with ground truth from a dense solve and add truth columns.
    Compare(CompareArgs),
    /// Write a synthetic SPD matrix with a prescribed spectrum.
    Gen(GenArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Stop {
    Never,
    Absolute,
    Relative,
}

#[derive(Args)]
struct RunArgs {
    /// Matrix Market file holding a symmetric positive definite matrix.
    #[arg(long)]
    matrix: PathBuf,
    /// `equal`, `uniform-random`, or a file with one real per line.
    #[arg(long, default_value = "equal")]
    rhs: RhsSpec,
    /// Seed for the random right-hand side.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `none`, `jacobi` or `ic0`.
    #[arg(long, default_value = "none")]
    precond: PrecondKind,
    /// Diagonal shift applied to A before the IC(0) factorization.
    #[arg(long, default_value_t = 0.0)]
    shift: f64,
    /// Relative accuracy demanded of accepted estimates.
    #[arg(long, default_value_t = 0.25)]
    tau: f64,
    /// Tolerance for the start of the safety-factor window.
    #[arg(long, default_value_t = 1e-4)]
    window_tol: f64,
    /// Smallest delay at which estimates are accepted.
    #[arg(long, default_value_t = 0)]
    d_min: usize,
    /// Hold back the first estimate until the early terms are trustworthy.
    #[arg(long)]
    initial_phase: bool,
    /// Gauss-Radau node, at most the smallest eigenvalue of the operator.
    #[arg(long, conflicts_with = "mu_from_oracle")]
    mu: Option<f64>,
    /// Take the Gauss-Radau node from a dense eigensolve.
    #[arg(long)]
    mu_from_oracle: bool,
    #[arg(long, value_enum, default_value_t = Stop::Never)]
    stop: Stop,
    /// Threshold on the estimated A-norm of the error (absolute) or on its
    /// ratio to the estimated A-norm of the solution (relative).
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Output file; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Largest order handed to the dense oracle.
    #[arg(long, env = CAP_ENV, default_value_t = DEFAULT_CAP)]
    oracle_cap: usize,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct GenArgs {
    /// `geometric:λmin:λmax:n`, `strakos:λmin:λmax:ρ:n`,
    /// `clustered:λmin:λmax:clusters:width:n` or `staircase:λmin:λmax:plateaus:n`.
    #[arg(long)]
    spectrum: String,
    /// Random plane rotations applied to the diagonal matrix.
    #[arg(long, default_value_t = 0)]
    rotations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write the unit right-hand side with equal components in the eigenbasis.
    #[arg(long)]
    rhs_output: Option<PathBuf>,
}

struct Problem {
    a: CsrMatrix,
    b: Vec<f64>,
    precond: Preconditioner,
}

impl RunArgs {
    fn policy(&self) -> Result<StopPolicy> {
        let kind = match self.stop {
            Stop::Never => return Ok(StopPolicy::Never),
            Stop::Absolute => StopKind::Absolute,
            Stop::Relative => StopKind::Relative,
        };
        let Some(threshold) = self.threshold else {
            bail!("--stop {kind} needs --threshold");
        };
        ensure!(threshold > 0.0 && threshold.is_finite(), "--threshold must be positive, got {threshold}");
        Ok(StopPolicy::new(kind, threshold))
    }

    fn validate(&self) -> Result<()> {
        ensure!(self.tau > 0.0 && self.tau < 1.0, "--tau must lie in (0, 1), got {}", self.tau);
        ensure!(
            self.window_tol > 0.0 && self.window_tol < 1.0,
            "--window-tol must lie in (0, 1), got {}",
            self.window_tol
        );
        ensure!(self.max_iter > 0, "--max-iter must be positive");
        ensure!(self.shift >= 0.0 && self.shift.is_finite(), "--shift must be nonnegative, got {}", self.shift);
        if let Some(mu) = self.mu {
            ensure!(mu > 0.0 && mu.is_finite(), "--mu must be positive, got {mu}");
        }
        Ok(())
    }

    fn load(&self) -> Result<Problem> {
        let a = read_matrix_market_file(&self.matrix).with_context(|| format!("reading {}", self.matrix.display()))?;
        let b = read_rhs(&self.rhs, a.n(), self.seed).context("building the right-hand side")?;
        let precond = Preconditioner::build(self.precond, &a, self.shift)
            .with_context(|| format!("building {} preconditioner", self.precond))?;
        Ok(Problem { a, b, precond })
    }

    fn session_config(&self, mu: Option<f64>) -> Result<SessionConfig> {
        Ok(SessionConfig {
            estimator: EstimatorConfig {
                tau: self.tau,
                window_tol: self.window_tol,
                d_min: self.d_min,
                initial_phase: self.initial_phase,
                mu,
            },
            stop: self.policy()?,
            max_iter: self.max_iter,
        })
    }

    fn extremes(&self, p: &Problem) -> Result<Extremes> {
        oracle::eig_extremes(&p.a, &p.precond, self.oracle_cap).context("oracle eigensolve")
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit(args: &RunArgs, records: &[IterationRecord], with_truth: bool) -> Result<()> {
    let mut out = output(args.output.as_deref())?;
    match args.format {
        Format::Csv => report::write_csv(&mut out, records, with_truth)?,
        Format::Jsonl => report::write_jsonl(&mut out, records)?,
    }
    out.flush().context("writing records")?;
    Ok(())
}

fn exit_code(end: &SessionEnd) -> u8 {
    match end {
        SessionEnd::Estimate | SessionEnd::ResidualExhausted => 0,
        SessionEnd::MaxIter => 2,
        SessionEnd::Breakdown(_) | SessionEnd::EstimatorFailure(_) => 3,
    }
}

fn summarize(result: &SessionResult) {
    let end = match &result.end {
        SessionEnd::Estimate => "stopping policy met".to_string(),
        SessionEnd::ResidualExhausted => "residual exhausted".to_string(),
        SessionEnd::MaxIter => "iteration cap reached".to_string(),
        SessionEnd::Breakdown(e) => format!("breakdown: {e}"),
        SessionEnd::EstimatorFailure(e) => format!("estimator failure: {e}"),
    };
    eprintln!("{end} after {} iterations", result.iterations);
    let chosen = result.stop_estimate.map(|i| &result.estimator.accepted()[i]).or(result.estimator.latest());
    match chosen {
        Some(est) => eprintln!(
            "error estimate at k={} (d={}): {:.6e} <= ||x - x_k||_A <~ {:.6e}",
            est.k,
            est.d_used,
            est.delta_plus.sqrt(),
            est.upper_heuristic.sqrt()
        ),
        None => eprintln!("no estimate accepted"),
    }
}

fn cmd_solve(args: &RunArgs) -> Result<u8> {
    args.validate()?;
    let p = args.load()?;
    let mu = if args.mu_from_oracle { Some(args.extremes(&p)?.mu) } else { args.mu };
    let config = args.session_config(mu)?;
    let result = run_session(&p.a, &p.b, &vec![0.0; p.a.n()], &p.precond, &config, None)?;
    emit(args, &report::records(&result), false)?;
    summarize(&result);
    Ok(exit_code(&result.end))
}

fn cmd_compare(args: &CompareArgs) -> Result<u8> {
    let args = &args.run;
    args.validate()?;
    let p = args.load()?;
    let n = p.a.n();
    ensure!(
        n <= args.oracle_cap,
        "order {n} exceeds the oracle cap {} (set --oracle-cap or {CAP_ENV})",
        args.oracle_cap
    );
    let extremes = args.extremes(&p)?;
    let mu = args.mu.unwrap_or(extremes.mu);
    let mut truth = TruthTracker::new(&p.a, &p.b, args.oracle_cap).context("oracle solve")?;
    let result = run_session(&p.a, &p.b, &vec![0.0; n], &p.precond, &args.session_config(Some(mu))?, Some(&mut truth))?;
    emit(args, &report::records(&result), true)?;
    summarize(&result);
    let trace = TruthTrace::new(result.eps.clone().unwrap_or_default(), extremes);
    let quality = oracle::bound_quality(&trace, result.estimator.accepted(), args.tau)?;
    eprintln!(
        "kappa {:.3e}; {} estimates before the accuracy plateau: fraction within tau {:.3}, within 10x {:.3}, delay tracking {:.3}",
        trace.kappa, quality.counted, quality.fraction_within_tau, quality.fraction_same_magnitude, quality.fraction_tracking
    );
    Ok(exit_code(&result.end))
}

fn write_vector(path: &Path, v: &[f64]) -> Result<()> {
    let mut out = output(Some(path))?;
    for x in v {
        writeln!(out, "{x:.16e}")?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_gen(args: &GenArgs) -> Result<u8> {
    let spectrum: Spectrum = args.spectrum.parse()?;
    let generated = synth::generate(&spectrum, args.rotations, args.seed)?;
    let mut out = output(args.output.as_deref())?;
    write_matrix_market(&generated.matrix, &mut out)?;
    out.flush().context("writing matrix")?;
    if let Some(path) = &args.rhs_output {
        write_vector(path, &generated.equal_eigen_rhs())?;
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let outcome = match &cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Gen(args) => cmd_gen(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let breakdown = e.chain().any(|c| matches!(c.downcast_ref(), Some(PrecondError::Breakdown { .. })));
            ExitCode::from(if breakdown { 3 } else { 1 })
        }
    }
}
