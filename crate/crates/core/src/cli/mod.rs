pub mod check;
pub mod oracle;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use qcomply::replay::{load_replay, Replay};
use qcomply::schema::{load_policy, PolicyBundle};

#[derive(Parser, Debug)]
#[command(name = "qcomply", version, about = "Check SQL query traces against a view-based access policy")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Replay requests and decide each query
    Check(CheckArgs),
    /// Replay requests and print the decision templates they produce
    Template(CheckArgs),
    /// Decide each query of a replay by brute-force enumeration of small databases
    Oracle(OracleArgs),
}

#[derive(Args, Debug)]
pub struct Common {
    /// Replay file (JSON lines)
    pub replay: PathBuf,
    /// Policy file; defaults to the policy named in the replay header
    #[arg(long)]
    pub policy: Option<PathBuf>,
    /// Emit one JSON object per line
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[command(flatten)]
    pub common: Common,
    /// Solver command line reading SMT-LIB on stdin; repeat to race several
    #[arg(long = "solver", value_name = "CMD")]
    pub solvers: Vec<String>,
    #[arg(long, default_value_t = 2000)]
    pub timeout_check_ms: u64,
    #[arg(long, default_value_t = 10000)]
    pub timeout_template_ms: u64,
    /// Do not look up or generate decision templates
    #[arg(long)]
    pub no_cache: bool,
    /// Empty the template cache at the start of every request
    #[arg(long)]
    pub cold_cache: bool,
    /// Write the template cache to this file when done
    #[arg(long, value_name = "PATH")]
    pub cache_dump: Option<PathBuf>,
    /// Load (and re-verify) templates from this file before replaying
    #[arg(long, value_name = "PATH")]
    pub cache_load: Option<PathBuf>,
    /// Allow every query and report the ones that would be denied
    #[arg(long)]
    pub log_only: bool,
    /// Run up to this many requests concurrently
    #[arg(long, default_value_t = 1)]
    pub parallel_requests: usize,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[command(flatten)]
    pub common: Common,
    /// Values per type in the enumeration domain (query and trace constants included)
    #[arg(long, default_value_t = 3)]
    pub dom_consts: usize,
    /// Maximum rows per table
    #[arg(long, default_value_t = 2)]
    pub dom_rows: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Replay(#[from] qcomply::replay::ReplayError),
    #[error(transparent)]
    Policy(#[from] qcomply::schema::PolicyError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

pub fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

/// The replay and its policy; `None` for a replay without requests and policy.
pub fn load_inputs(c: &Common) -> Result<Option<(Replay, PolicyBundle)>, CliError> {
    let replay = load_replay(&c.replay)?;
    if replay.requests.is_empty() && replay.policy.is_none() && c.policy.is_none() {
        return Ok(None);
    }
    let path = c
        .policy
        .clone()
        .or_else(|| replay.policy.clone())
        .ok_or_else(|| CliError::Usage("no policy: pass --policy or name one in the replay header".into()))?;
    let policy = load_policy(&path)?;
    Ok(Some((replay, policy)))
}

/// Exit status: 0 when everything was allowed, 1 when something was denied.
pub fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Check(a) => check::run(&a, false),
        Command::Template(a) => check::run(&a, true),
        Command::Oracle(a) => oracle::run(&a),
    }
}
