//! `dsnbench`: synthesize inputs, replay them through a bot network, and
//! compare measured forwarding delay with the analytical model.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dsnbench_core::harness::{ForwardClock, Mode, NetworkModel};
use dsnbench_core::Timestamp;

mod commands;

#[derive(Debug, Parser)]
#[command(name = "dsnbench", version, about = "Pull-based DSN emulation and Extra Forwarding Delay analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Random follower graph.
    SynthTopology(SynthTopologyArgs),
    /// Activity trace drawn from a delay/length model.
    SynthTrace(SynthTraceArgs),
    /// Replay a trace over the topology and write a SimLog.
    Run(RunArgs),
    /// Fit delay and chain-length laws to a trace.
    Fit(FitArgs),
    /// Analytical EFD over a sweep of query gaps.
    Predict(PredictArgs),
    /// EFD and resource reports for one or more SimLogs.
    Analyze(AnalyzeArgs),
    /// Empirical vs analytical EFD table; exits 2 if any row is flagged.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
struct SynthTopologyArgs {
    #[arg(long)]
    users: usize,
    #[arg(long, default_value_t = 20.0)]
    mean_followees: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthTraceArgs {
    #[arg(long)]
    topology: PathBuf,
    #[arg(long)]
    roots: usize,
    /// Root updates fall uniformly in `[0, span]` seconds.
    #[arg(long, default_value = "86400")]
    span: Timestamp,
    /// Model file from `fit`; the baseline constants when absent.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    topology: PathBuf,
    /// Query gap in seconds.
    #[arg(long, required_unless_present = "sweep", conflicts_with = "sweep")]
    h: Option<Timestamp>,
    /// Comma-separated query gaps; one SimLog per value, `--out` names a directory.
    #[arg(long, value_delimiter = ',')]
    sweep: Vec<Timestamp>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "virtual")]
    mode: Mode,
    /// Trace seconds per wall-clock second in real mode.
    #[arg(long, default_value_t = 1.0)]
    accel: f64,
    /// `ideal` or `latency:<mean seconds per query>`.
    #[arg(long, default_value = "ideal")]
    network: NetworkModel,
    /// `relative` (parent's replayed time plus the trace gap) or `absolute`.
    #[arg(long, default_value = "relative")]
    forward_clock: ForwardClock,
    /// Run start in trace seconds; the first trace event when absent.
    #[arg(long)]
    start: Option<Timestamp>,
    /// Run length in seconds; long enough to drain the trace when absent.
    #[arg(long)]
    duration: Option<Timestamp>,
    #[arg(long, default_value_t = 100)]
    feed_limit: usize,
    /// Concurrent polls in real mode.
    #[arg(long, default_value_t = 64)]
    workers: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Log bins per decade for the delay histogram.
    #[arg(long, default_value_t = dsnbench_core::analytics::DEFAULT_BINS_PER_DECADE)]
    bins: u32,
    /// Model file to write.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    /// Comma-separated query gaps in seconds.
    #[arg(long, value_delimiter = ',', required = true)]
    sweep: Vec<f64>,
    /// Override the model's mean chain length.
    #[arg(long)]
    mean_l: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Trace the SimLogs replayed.
    #[arg(long)]
    trace: PathBuf,
    /// Model file; the baseline constants when absent.
    #[arg(long)]
    model: Option<PathBuf>,
    /// SimLog files.
    #[arg(long = "log", required = true, num_args = 1..)]
    logs: Vec<PathBuf>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    inputs: ModelArgs,
    /// Report directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    inputs: ModelArgs,
    /// Relative gap above which a row is flagged.
    #[arg(long, default_value_t = dsnbench_core::analytics::DEFAULT_GAP_THRESHOLD)]
    threshold: f64,
    /// CSV file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::SynthTopology(a) => commands::synth_topology(a),
        Command::SynthTrace(a) => commands::synth_trace(a),
        Command::Run(a) => commands::run(a),
        Command::Fit(a) => commands::fit(a),
        Command::Predict(a) => commands::predict(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Compare(a) => commands::compare(a),
    };
    match result {
        Ok(commands::Outcome::Done) => ExitCode::SUCCESS,
        Ok(commands::Outcome::Flagged) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
