//! The `bethe` command line: model files in, one JSON report out.
//!
//! Exit status is 0 on success, 1 when a check fails or BP does not converge
//! where convergence is required, and 2 on usage or input errors.

pub mod checks;
pub mod format;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use crate::bp::{run_bp, BpConfig, BpResult, Schedule};
use crate::exact::{is_acyclic, ExactOracle, DEFAULT_STATE_CAP};
use crate::local::{beliefs, bethe_entropy, bethe_log_partition, EntropyForm};
use crate::model::{Model, TableVector};

pub use checks::{CheckHooks, CheckKind};
pub use format::{parse_model, serialize_model};
pub use report::{CommandReport, Node, Value, Verdict};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "bethe", version, about = "Belief propagation as reparameterization, checked against brute force")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Structure summary of a model file.
    Info { file: PathBuf },
    /// Exact log-partition function, marginals and entropy by enumeration.
    Exact {
        file: PathBuf,
        #[command(flatten)]
        cap: CapArgs,
    },
    /// Run belief propagation.
    Bp {
        file: PathBuf,
        #[command(flatten)]
        bp: BpArgs,
    },
    /// Compare BP output with the exact oracle.
    Compare {
        file: PathBuf,
        #[command(flatten)]
        bp: BpArgs,
        #[command(flatten)]
        cap: CapArgs,
    },
    /// Numerical checks of the gradient, Hessian, saddle and conjugacy identities.
    Check {
        file: PathBuf,
        #[arg(long, value_enum)]
        what: CheckKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fixed-point tolerance for the BP run the check relies on. Several
        /// checked identities are first order in the residual.
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long = "max-sweeps", default_value_t = 1000)]
        max_sweeps: usize,
        #[command(flatten)]
        cap: CapArgs,
    },
}

#[derive(Debug, Args, Clone)]
pub struct CapArgs {
    /// Largest state space the oracle will enumerate.
    #[arg(long, default_value_t = DEFAULT_STATE_CAP)]
    pub cap: u128,
    /// Enumerate regardless of the cap.
    #[arg(long)]
    pub force: bool,
}

impl CapArgs {
    fn oracle(&self) -> ExactOracle {
        if self.force {
            ExactOracle::unbounded()
        } else {
            ExactOracle::with_cap(self.cap)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScheduleArg {
    Roundrobin,
    Random,
}

#[derive(Debug, Args, Clone)]
pub struct BpArgs {
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long = "max-sweeps", default_value_t = 1000)]
    pub max_sweeps: usize,
    #[arg(long, default_value_t = 0.0)]
    pub damping: f64,
    #[arg(long, value_enum, default_value_t = ScheduleArg::Roundrobin)]
    pub schedule: ScheduleArg,
    /// Seed of the random schedule.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl BpArgs {
    pub fn config(&self) -> BpConfig {
        BpConfig {
            tolerance: self.tol,
            max_sweeps: self.max_sweeps,
            damping: self.damping,
            schedule: match self.schedule {
                ScheduleArg::Roundrobin => Schedule::RoundRobin,
                ScheduleArg::Random => Schedule::RandomPermutation { seed: self.seed },
            },
        }
    }

    fn record_seed(&self, seeds: &mut Node) {
        if self.schedule == ScheduleArg::Random {
            seeds.insert("schedule", self.seed);
        }
    }
}

/// What a command wrote and how it ended.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutcome {
    pub exit_code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl CommandOutcome {
    fn usage(message: String) -> Self {
        Self { exit_code: EXIT_USAGE, stdout: String::new(), stderr: message }
    }
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run_command<I, T>(argv: I) -> CommandOutcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_command_with(argv, &CheckHooks::default())
}

/// [`run_command`] with replaceable internals, used to run negative
/// controls of the checks.
pub fn run_command_with<I, T>(argv: I, hooks: &CheckHooks) -> CommandOutcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    CommandOutcome { exit_code: EXIT_PASS, stdout: text, stderr: String::new() }
                }
                _ => CommandOutcome::usage(text),
            };
        }
    };
    let start = Instant::now();
    match execute(&cli.command, hooks) {
        Ok((mut report, exit_code)) => {
            report.wall_time_seconds = start.elapsed().as_secs_f64();
            CommandOutcome { exit_code, stdout: report.render(), stderr: String::new() }
        }
        Err(message) => CommandOutcome::usage(format!("error: {message}\n")),
    }
}

fn load(file: &PathBuf) -> Result<(Model, String), String> {
    let bytes = std::fs::read(file).map_err(|e| format!("cannot read {}: {e}", file.display()))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| format!("{} is not valid UTF-8", file.display()))?;
    let model = parse_model(&text).map_err(|e| format!("{}: {e}", file.display()))?;
    Ok((model, hex::encode(Sha256::digest(&bytes))))
}

fn tables(t: &TableVector) -> Node {
    Node::new().with("unary", &t.unary).with("higher", &t.higher)
}

fn execute(command: &Command, hooks: &CheckHooks) -> Result<(CommandReport, i32), String> {
    match command {
        Command::Info { file } => {
            let (model, digest) = load(file)?;
            let mut report = CommandReport::new("info", digest);
            info(&model, &mut report.results);
            Ok((report, EXIT_PASS))
        }
        Command::Exact { file, cap } => {
            let (model, digest) = load(file)?;
            let oracle = cap.oracle();
            let mut report = CommandReport::new("exact", digest);
            let r = &mut report.results;
            r.insert("log_partition", oracle.log_partition(&model).map_err(|e| e.to_string())?);
            r.insert("entropy", oracle.entropy(&model).map_err(|e| e.to_string())?);
            r.insert("marginals", tables(&oracle.marginals(&model).map_err(|e| e.to_string())?));
            Ok((report, EXIT_PASS))
        }
        Command::Bp { file, bp } => {
            let (model, digest) = load(file)?;
            let mut report = CommandReport::new("bp", digest);
            bp.record_seed(&mut report.seeds);
            let result = run_bp(&model, &bp.config()).map_err(|e| e.to_string())?;
            bp_results(&result, &mut report.results);
            report.verdicts.push(Verdict::at_most("bp_residual", result.final_residual, bp.tol));
            let code = if result.converged() { EXIT_PASS } else { EXIT_FAIL };
            Ok((report, code))
        }
        Command::Compare { file, bp, cap } => {
            let (model, digest) = load(file)?;
            let oracle = cap.oracle();
            let exact_f = oracle.log_partition(&model).map_err(|e| e.to_string())?;
            let exact_mu = oracle.marginals(&model).map_err(|e| e.to_string())?;
            let mut report = CommandReport::new("compare", digest);
            bp.record_seed(&mut report.seeds);
            let result = run_bp(&model, &bp.config()).map_err(|e| e.to_string())?;
            let bethe_f = bethe_log_partition(&result.final_model);
            let mu = beliefs(&result.final_model);
            let max_unary = mu
                .unary
                .iter()
                .flatten()
                .zip(exact_mu.unary.iter().flatten())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            let r = &mut report.results;
            r.insert("status", status_name(&result));
            r.insert("sweeps", result.sweeps_used);
            r.insert("final_residual", result.final_residual);
            r.insert("log_partition", exact_f);
            r.insert("bethe_log_partition", bethe_f);
            r.insert("log_partition_abs_error", (bethe_f - exact_f).abs());
            r.insert("max_belief_error", mu.max_abs_diff(&exact_mu));
            r.insert("max_variable_belief_error", max_unary);
            r.insert("acyclic", is_acyclic(model.graph()));
            report.verdicts.push(Verdict::at_most("bp_residual", result.final_residual, bp.tol));
            let code = if result.converged() { EXIT_PASS } else { EXIT_FAIL };
            Ok((report, code))
        }
        Command::Check { file, what, seed, tol, max_sweeps, cap } => {
            let (model, digest) = load(file)?;
            let mut report = CommandReport::new("check", digest);
            report.seeds.insert("check", *seed);
            let ctx = checks::CheckContext {
                bp: BpConfig { tolerance: *tol, max_sweeps: *max_sweeps, ..BpConfig::default() },
                oracle: cap.oracle(),
                seed: *seed,
                hooks,
            };
            report.results.insert("what", what.name());
            checks::run(*what, &model, &ctx, &mut report)?;
            let code = if report.all_pass() { EXIT_PASS } else { EXIT_FAIL };
            Ok((report, code))
        }
    }
}

fn info(model: &Model, r: &mut Node) {
    let g = model.graph();
    let max_arity = g.edges().iter().map(Vec::len).max().unwrap_or(0);
    let mut histogram = Node::new();
    for k in 2..=max_arity {
        let count = g.edges().iter().filter(|e| e.len() == k).count();
        if count > 0 {
            histogram.insert(&k.to_string(), count);
        }
    }
    r.insert("num_vars", g.num_vars());
    r.insert("num_edges", g.num_edges());
    r.insert("arity_histogram", histogram);
    r.insert("acyclic", is_acyclic(g));
    r.insert("state_space_size", g.state_space_size());
    r.insert("degenerate_vars", g.degenerate_vars().as_slice());
}

fn status_name(result: &BpResult) -> &'static str {
    if result.converged() {
        "converged"
    } else {
        "max_sweeps_reached"
    }
}

fn bp_results(result: &BpResult, r: &mut Node) {
    let model = &result.final_model;
    let mu = beliefs(model);
    r.insert("status", status_name(result));
    r.insert("sweeps", result.sweeps_used);
    r.insert("final_residual", result.final_residual);
    r.insert("residual_trace", result.residual_trace.as_slice());
    r.insert("bethe_log_partition", bethe_log_partition(model));
    let h = |form| bethe_entropy(model.graph(), &mu, form).map_or(f64::NAN, |v| v);
    r.insert("bethe_entropy_counting", h(EntropyForm::Counting));
    r.insert("bethe_entropy_kl", h(EntropyForm::Kl));
    r.insert("beliefs", tables(&mu));
}
