//! `simgrade` command-line entry point.
//!
//! Exit codes: 0 success, 2 usage error, 3 domain error, 4 I/O error.

mod commands;
mod config;
mod output;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use simgrade::{Algorithm, ErrorKind};

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "simgrade", version, about = "Similarity-aware grader assignment and simulation")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every stochastic stage.
    #[arg(long, global = true, env = "SIMGRADE_SEED")]
    seed: Option<u64>,
    /// Worker threads for similarity, simulation and bootstrap.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample labeled programs from a grammar.
    Synth(SynthArgs),
    /// Train token embeddings and embed every submission.
    Embed(EmbedArgs),
    /// Assign submissions to graders.
    Assign(AssignArgs),
    /// Simulate grading error for one assignment or compare algorithms.
    Simulate(SimulateArgs),
    /// Grader accuracy and similarity-window analysis of grading logs.
    Analyze(AnalyzeArgs),
    /// Render a comparison JSON as a text table.
    Report(ReportArgs),
    /// Regress label overlap on embedding similarity.
    Semantics(SemanticsArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Grammar JSON; the built-in demo grammar when omitted.
    #[arg(long)]
    grammar: Option<PathBuf>,
    /// Number of programs.
    #[arg(short = 'n', long)]
    count: usize,
    #[arg(long, default_value = "p1")]
    problem_id: String,
    #[arg(long)]
    out_dir: PathBuf,
    /// Also write the grammar used, as JSON.
    #[arg(long)]
    write_grammar: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EmbedArgs {
    #[arg(long)]
    submissions: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    min_count: Option<usize>,
    #[arg(long)]
    max_string_len: Option<usize>,
}

#[derive(Debug, Args, Default)]
struct AssignFlags {
    /// Number of graders.
    #[arg(short = 'k', long)]
    graders: Option<usize>,
    #[arg(long)]
    validations: Option<usize>,
    #[arg(long)]
    mcmc_iterations: Option<usize>,
    #[arg(long)]
    mcmc_initial_temp: Option<f64>,
    #[arg(long)]
    mcmc_cooling: Option<f64>,
    #[arg(long)]
    kmeans_max_iters: Option<usize>,
}

#[derive(Debug, Args)]
struct AssignArgs {
    /// Program embeddings (JSONL).
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long, value_parser = parse_algorithm)]
    algorithm: Option<Algorithm>,
    #[command(flatten)]
    flags: AssignFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Default)]
struct SimulationFlags {
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    cold_start: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    intercept: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    slope: Option<f64>,
    #[arg(long)]
    min_error: Option<f64>,
    #[arg(long)]
    max_error: Option<f64>,
    /// Do not count validation entries as window history.
    #[arg(long)]
    exclude_validation_history: bool,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Program embeddings, one file per problem.
    #[arg(long, required = true)]
    embeddings: Vec<PathBuf>,
    /// Simulate this assignment instead of comparing algorithms.
    #[arg(long)]
    assignment: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', value_parser = parse_algorithm)]
    algorithms: Option<Vec<Algorithm>>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    bootstrap_trials: Option<usize>,
    #[command(flatten)]
    assign: AssignFlags,
    #[command(flatten)]
    sim: SimulationFlags,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long)]
    logs: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    exclude_validation_history: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// `comparison.json` written by `simulate`.
    #[arg(long)]
    comparison: PathBuf,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SemanticsArgs {
    /// `labels.jsonl` written by `synth`.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    pairs: Option<usize>,
    #[arg(long)]
    bootstrap_trials: Option<usize>,
    #[arg(long)]
    out_dir: PathBuf,
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: simgrade::assign::AssignError| e.to_string())
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Domain(String),
    Io(String),
}

impl Failure {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Failure::Io(format!("{}: {e}", path.display()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Domain(_) => 3,
            Failure::Io(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Domain(m) | Failure::Io(m) => f.write_str(m),
        }
    }
}

pub fn core<E: Into<simgrade::Error>>(e: E) -> Failure {
    let e = e.into();
    let msg = format!("{}: {e}", e.code());
    match e.kind() {
        ErrorKind::Io => Failure::Io(msg),
        ErrorKind::Domain => Failure::Domain(msg),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.sync_seeds();
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    if let Some(t) = cfg.threads {
        if t == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::Synth(a) => commands::synth(a, cfg),
        Command::Embed(a) => commands::embed(a, cfg),
        Command::Assign(a) => commands::assign(a, cfg),
        Command::Simulate(a) => commands::simulate(a, cfg),
        Command::Analyze(a) => commands::analyze(a, cfg),
        Command::Report(a) => commands::report(a),
        Command::Semantics(a) => commands::semantics(a, cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
