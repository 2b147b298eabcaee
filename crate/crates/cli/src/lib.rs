//! Command-line front end: generate problems, run solvers, certify traces,
//! check CG identities and sweep noisy-matvec experiments.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use unipot::perturb::{sweep, DetectionOptions};
use unipot::potential::{
    certificate_csv, certify, hs_identity_battery, CertificateReport, CertifyOptions,
    IdentityTolerances,
};
use unipot::problem::{read_json, to_json_string, trace_csv, write_json, ProblemSpec};
use unipot::quadratic_gen::{generate, Layout, SpectrumSpec};
use unipot::solvers::{run_in, Method, Precision, Trace};

#[derive(Debug, Parser)]
#[command(name = "unipot", version, about = "Potential-based certificates for AG and CG")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a random SPD quadratic with known minimizer.
    Gen(GenArgs),
    /// Run a solver and write the per-iteration CSV trace.
    Run(RunArgs),
    /// Check the potential certificate on a stored iterate trace.
    Certify(CertifyArgs),
    /// Check the Hestenes-Stiefel identities on a stored CG trace.
    Identities(IdentitiesArgs),
    /// Sweep noise levels and seeds for CG with an inexact matvec.
    Perturb(PerturbArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub dim: u64,
    #[arg(long)]
    pub ell: f64,
    #[arg(long)]
    pub lip: f64,
    #[arg(long, default_value = "log_uniform")]
    pub layout: Layout,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub problem: PathBuf,
    #[arg(long, default_value = "cg")]
    pub method: Method,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub iters: u64,
    /// Stop once `f − f*` falls to this fraction of its initial value
    /// (gradient norm ratio when the minimizer is unknown). Negative disables.
    #[arg(long, default_value_t = 1e-10, allow_negative_numbers = true)]
    pub stop_gap: f64,
    #[arg(long)]
    pub tol_cert: Option<f64>,
    /// Working precision: double, extended (double-double) or mp<bits>.
    /// The wider settings apply to the CG methods.
    #[arg(long, default_value = "double")]
    pub precision: Precision,
    /// CSV trace output.
    #[arg(long)]
    pub out: PathBuf,
    /// Full iterate trace (JSON) for `certify` and `identities`.
    #[arg(long)]
    pub states: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[arg(long)]
    pub problem: PathBuf,
    /// Iterate trace written by `run --states`.
    #[arg(long)]
    pub trace: PathBuf,
    /// Overrides the method recorded in the trace.
    #[arg(long)]
    pub method: Option<Method>,
    #[arg(long)]
    pub tol_cert: Option<f64>,
    /// Report JSON; a CSV companion is written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IdentitiesArgs {
    #[arg(long)]
    pub problem: PathBuf,
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long, default_value_t = 1e-8)]
    pub tol_id: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    #[arg(long)]
    pub problem: PathBuf,
    /// Comma-separated noise magnitudes.
    #[arg(long, value_delimiter = ',', required = true)]
    pub eta: Vec<f64>,
    /// First noise seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of consecutive seeds per magnitude.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub seeds: u64,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub iters: u64,
    #[arg(long)]
    pub tol_cert: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Outcome of a command: success, or a check that ran but failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    CheckFailed,
}

fn check_tol(name: &str, value: Option<f64>) -> Result<()> {
    match value {
        Some(t) if !(t > 0.0 && t.is_finite()) => bail!("--{name} must be positive, got {t}"),
        _ => Ok(()),
    }
}

fn load_problem(path: &Path) -> Result<ProblemSpec> {
    read_json(path).with_context(|| format!("reading problem {}", path.display()))
}

pub fn execute(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Run(args) => cmd_run(args),
        Command::Certify(args) => cmd_certify(args),
        Command::Identities(args) => cmd_identities(args),
        Command::Perturb(args) => cmd_perturb(args),
    }
}

pub fn cmd_gen(args: GenArgs) -> Result<Outcome> {
    let spec = SpectrumSpec {
        dim: args.dim as usize,
        ell: args.ell,
        lip: args.lip,
        layout: args.layout,
        seed: args.seed,
    };
    let problem = generate(&spec)?;
    write_json(&args.out, &ProblemSpec::from_generated(&problem, args.seed))?;
    Ok(Outcome::Ok)
}

pub fn cmd_run(args: RunArgs) -> Result<Outcome> {
    check_tol("tol-cert", args.tol_cert)?;
    let spec = load_problem(&args.problem)?;
    let model = spec.to_model()?;
    if args.method.family() == unipot::solvers::Family::Ag && model.lip() == model.ell() {
        eprintln!("warning: L = ell, accelerated gradient reduces to gradient descent");
    }
    let stop = if args.stop_gap < 0.0 {
        -1.0
    } else if model.minimizer().is_some() {
        args.stop_gap * model.gap(&spec.x0)?
    } else {
        args.stop_gap
    };
    let trace = run_in(&model, args.method, &spec.x0, args.iters as usize, stop, args.precision)?;
    if let unipot::solvers::Termination::Failed { k, message } = &trace.termination {
        eprintln!("warning: {} stopped at k = {k}: {message}", args.method);
    }
    let csv = trace_csv(&model, args.method.family(), &trace.states, args.tol_cert)?;
    std::fs::write(&args.out, csv).with_context(|| format!("writing {}", args.out.display()))?;
    if let Some(path) = &args.states {
        write_json(path, &trace)?;
    }
    Ok(Outcome::Ok)
}

fn load_trace(path: &Path) -> Result<Trace> {
    read_json(path).with_context(|| format!("reading trace {}", path.display()))
}

pub fn certify_files(problem: &Path, trace: &Path, method: Option<Method>, tol_cert: Option<f64>) -> Result<CertificateReport> {
    check_tol("tol-cert", tol_cert)?;
    let spec = load_problem(problem)?;
    let model = spec.to_model()?;
    let file = load_trace(trace)?;
    let method = method.unwrap_or(file.method);
    let options = CertifyOptions {
        tol_cert,
        check_looseness: model.as_quadratic().is_some(),
    };
    Ok(certify(&file.states, &model, method.family(), options)?)
}

pub fn cmd_certify(args: CertifyArgs) -> Result<Outcome> {
    let report = certify_files(&args.problem, &args.trace, args.method, args.tol_cert)?;
    match &args.out {
        Some(path) => {
            write_json(path, &report)?;
            std::fs::write(path.with_extension("csv"), certificate_csv(&report))?;
        }
        None => print!("{}", to_json_string(&report)?),
    }
    match report.first_violation {
        None => Ok(Outcome::Ok),
        Some(k) => {
            eprintln!(
                "certificate violated at k = {k} ({} violation(s))",
                report.violations()
            );
            Ok(Outcome::CheckFailed)
        }
    }
}

pub fn cmd_identities(args: IdentitiesArgs) -> Result<Outcome> {
    check_tol("tol-id", Some(args.tol_id))?;
    let spec = load_problem(&args.problem)?;
    let model = spec.to_model()?;
    let q = model
        .as_quadratic()
        .context("the identity battery needs a quadratic problem")?;
    let truth = spec.ground_truth(&model)?;
    let file = load_trace(&args.trace)?;
    if file.method.family() != unipot::solvers::Family::Cg {
        bail!("the identity battery needs a CG trace, got {}", file.method);
    }
    let report = hs_identity_battery(
        &file.states,
        q,
        &truth,
        IdentityTolerances::with_relative(args.tol_id),
    )?;
    match &args.out {
        Some(path) => write_json(path, &report)?,
        None => print!("{}", to_json_string(&report)?),
    }
    Ok(if report.passed() {
        Outcome::Ok
    } else {
        Outcome::CheckFailed
    })
}

pub fn cmd_perturb(args: PerturbArgs) -> Result<Outcome> {
    check_tol("tol-cert", args.tol_cert)?;
    let spec = load_problem(&args.problem)?;
    let model = spec.to_model()?;
    let q = model
        .as_quadratic()
        .context("perturbation sweeps need a quadratic problem")?;
    let truth = spec.ground_truth(&model)?;
    let seeds: Vec<u64> = (0..args.seeds).map(|i| args.seed.wrapping_add(i)).collect();
    let options = DetectionOptions {
        tol_cert: args.tol_cert,
        ..DetectionOptions::default()
    };
    let reports = sweep(q, &truth, &spec.x0, &args.eta, &seeds, args.iters as usize, options)?;
    write_json(&args.out, &reports)?;
    Ok(Outcome::Ok)
}
