//! Command-line surface. Every subcommand reads its inputs, writes JSONL/CSV
//! artifacts into `--out` and prints a short summary on stdout.
//!
//! Exit status: 0 on success, 1 on processing errors, 2 on usage errors.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::PipelineConfig;

use crate::error::Error;

#[derive(Debug, Parser)]
#[command(name = "ampscope", version, about = "Reflection-attack analysis for sampled DNS traces")]
pub struct Cli {
    /// Worker threads for internal parallelism (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Pipeline config file (TOML); flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse, sanitize, annotate and time-sort a raw trace.
    Ingest {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trace: Option<PathBuf>,
        /// CSV prefix,asn for AS annotation.
        #[arg(long)]
        prefix_table: Option<PathBuf>,
        #[arg(long)]
        sampling: Option<u32>,
        #[arg(long)]
        truncation: Option<u32>,
    },
    /// Rank candidate names with three selectors and build the consensus list.
    SelectNames {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        k_max: Option<usize>,
        /// Honeypot request CSV for the ground-truth selector.
        #[arg(long)]
        honeypot: Option<PathBuf>,
        #[arg(long)]
        slack: Option<f64>,
    },
    /// Detect attacks per (victim, day).
    Detect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Misused-name list from select-names.
        #[arg(long)]
        names: Option<PathBuf>,
        #[arg(long)]
        share_threshold: Option<f64>,
        #[arg(long)]
        min_packets: Option<u64>,
        #[arg(long)]
        sampling: Option<u32>,
    },
    /// Header cardinality, DNS-ID patterns, name timeline and attribution.
    Fingerprint {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        attacks: Option<PathBuf>,
        /// JSON {name_suffixes, id_patterns}.
        #[arg(long)]
        fingerprint_spec: Option<PathBuf>,
        #[arg(long)]
        min_segment: Option<usize>,
    },
    /// Cluster attacks by amplifier set; churn, recency and roles.
    Cluster {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        attacks: Option<PathBuf>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        min_pts: Option<usize>,
        #[arg(long)]
        min_attacks: Option<usize>,
        #[arg(long)]
        min_amps: Option<usize>,
        /// CSV ip,first_seen,last_seen.
        #[arg(long)]
        seen_table: Option<PathBuf>,
        /// CSV ip,ns_name.
        #[arg(long)]
        ns_table: Option<PathBuf>,
    },
    /// ANY-response size estimates, ranking and rollover plateaus.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        records: Option<PathBuf>,
        /// File with one name per line, or a comma-separated list.
        #[arg(long)]
        reference_names: Option<String>,
        #[arg(long)]
        min_step: Option<u64>,
        #[arg(long)]
        min_days: Option<usize>,
        /// Count an EDNS OPT record in the request size.
        #[arg(long)]
        edns: bool,
    },
    /// Classify recorded probe responses.
    Snoop {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        responses: Option<PathBuf>,
        /// CSV qname,ttl.
        #[arg(long)]
        ttl_table: Option<PathBuf>,
        /// File of known resolver addresses, one per line.
        #[arg(long)]
        resolvers: Option<PathBuf>,
        /// Comma-separated names that must never be cached.
        #[arg(long, value_delimiter = ',')]
        anchors: Vec<String>,
    },
    /// Generate a synthetic scenario.
    Synth {
        /// Scenario config (TOML, or JSON for a .json file).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Probe scenario config (TOML); also emits probe responses.
        #[arg(long)]
        probe_config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Infer honeypot attacks and compare them with detected attacks.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        attacks: Option<PathBuf>,
        #[arg(long)]
        honeypot: Option<PathBuf>,
        #[arg(long)]
        min_requests: Option<usize>,
        #[arg(long)]
        max_gap: Option<f64>,
        #[arg(long)]
        slack: Option<f64>,
    },
    /// Summarize the artifacts found in a directory.
    Report {
        #[command(flatten)]
        common: Common,
        /// Directory holding earlier outputs (default: --out).
        #[arg(long)]
        dir: Option<PathBuf>,
    },
}

#[derive(Debug)]
pub(crate) enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Run(e.into())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Run(e.into())
    }
}

impl From<config::MissingArg> for Failure {
    fn from(e: config::MissingArg) -> Self {
        Failure::Usage(e.0)
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("ampscope: --threads must be >= 1");
            return 2;
        }
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("ampscope: {e}");
            return 1;
        }
    };
    match pool.install(|| commands::dispatch(cli.command)) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("ampscope: {msg}");
            2
        }
        Err(Failure::Run(e)) => {
            eprintln!("ampscope: {e}");
            1
        }
    }
}
