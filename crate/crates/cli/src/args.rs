use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use scmc_core::analysis::DEFAULT_ORACLE_BOUND;
use scmc_core::checker::DEFAULT_MAX_STATES;
use scmc_core::protocol::DEFAULT_QUEUE_BOUND;

#[derive(Debug, Parser)]
#[command(
    name = "scmc",
    version,
    about = "Sequential-consistency checking for memory traces and cache-coherence protocols"
)]
pub struct Cli {
    /// Print the resolved configuration as JSON and exit.
    #[arg(long, global = true)]
    pub print_config: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Model-check a protocol for canonical k-nice cycles.
    Check(CheckArgs),
    /// Analyze a trace file through its constraint graph.
    Analyze(TraceArgs),
    /// Decide sequential consistency of a trace file by exhaustive search.
    Oracle(OracleArgs),
    /// Replay a run file on a protocol.
    Replay(ReplayArgs),
    /// Enumerate bounded runs and check causality and symmetry.
    ValidateAssumptions(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Search {
    Bfs,
    Dfs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Interleaving,
    Permutation,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ProtocolArgs {
    /// `piranha` or `piranha-buggy`.
    #[arg(long, default_value = "piranha")]
    pub protocol: String,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..=255))]
    pub n: u32,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..=255))]
    pub m: u32,
    /// Capacity of each processor's input queue.
    #[arg(long, default_value_t = DEFAULT_QUEUE_BOUND, value_parser = positive())]
    pub queue_bound: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KSpec {
    All,
    One(u32),
}

fn parse_k(s: &str) -> Result<KSpec, String> {
    if s == "all" {
        return Ok(KSpec::All);
    }
    match s.parse::<u32>() {
        Ok(k) if k >= 1 => Ok(KSpec::One(k)),
        _ => Err(format!("expected a positive integer or \"all\", got {s:?}")),
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CheckArgs {
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    /// Cycle size to check, or `all` for every k up to min(n, m).
    #[arg(long, default_value = "all", value_parser = parse_k)]
    #[serde(serialize_with = "serialize_k")]
    pub k: KSpec,
    #[arg(long, default_value_t = DEFAULT_MAX_STATES)]
    pub max_states: usize,
    #[arg(long, value_enum, default_value_t = Search::Bfs)]
    pub search: Search,
    #[arg(long, default_value_t = 1, value_parser = positive())]
    pub threads: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn serialize_k<S: serde::Serializer>(k: &KSpec, s: S) -> Result<S::Ok, S::Error> {
    match k {
        KSpec::All => s.serialize_str("all"),
        KSpec::One(k) => s.serialize_u32(*k),
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TraceArgs {
    /// JSON Lines trace or run file.
    pub file: PathBuf,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OracleArgs {
    #[command(flatten)]
    pub trace: TraceArgs,
    /// Largest trace the oracle will attempt.
    #[arg(long, default_value_t = DEFAULT_ORACLE_BOUND)]
    pub bound: usize,
    #[arg(long, value_enum, default_value_t = Engine::Interleaving)]
    pub engine: Engine,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReplayArgs {
    /// JSON Lines run file; its header fixes n, m and v.
    pub file: PathBuf,
    #[arg(long, default_value = "piranha")]
    pub protocol: String,
    #[arg(long, default_value_t = DEFAULT_QUEUE_BOUND, value_parser = positive())]
    pub queue_bound: usize,
    /// Initial owner of each location, comma separated (default: all 1).
    #[arg(long, value_delimiter = ',')]
    pub owners: Option<Vec<u32>>,
    /// Also report the unambiguous trace with fresh write values.
    #[arg(long)]
    pub unambiguous: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    /// Maximum run length to enumerate.
    #[arg(long, default_value_t = 10)]
    pub depth: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn positive() -> clap::builder::RangedU64ValueParser<usize> {
    clap::builder::RangedU64ValueParser::new().range(1..)
}
