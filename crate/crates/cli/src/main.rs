//! `gain`: convert datasets, train, evaluate, embed and inspect sampling.
//!
//! Every invocation ends with one JSON summary line on stdout. Exit codes:
//! 0 success, 2 usage or configuration, 3 data, 4 numeric fault.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gain_core::graph::convert::Format;
use gain_core::graph::Split;
use gain_core::trainer::TrainError;
use serde_json::{json, Value};

use config::ConfigFlags;

#[derive(Parser, Debug)]
#[command(name = "gain", version, about = "Inductive graph neural network with aggregator attention")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train on a canonical graph directory.
    Train {
        /// Directory holding topology.tsv, features.bin, labels.tsv, splits.tsv.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Train once per seed into OUT/seed-N and report mean and std of
        /// the test metric. Overrides --seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Also write attention weights of the selected model on the test
        /// nodes to attention.jsonl.
        #[arg(long)]
        attention: bool,
        #[command(flatten)]
        flags: ConfigFlags,
    },
    /// Recompute metrics of a checkpoint on one split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export L2-normalized embeddings, possibly for an unseen graph.
    Embed {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Text file with one node index per line; all nodes when omitted.
        #[arg(long)]
        nodes: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump the sampled minibatch for the given nodes as JSON.
    Sample {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        node: Vec<usize>,
        /// Number of layers; sample sizes are truncated or padded with their
        /// last entry to match.
        #[arg(long)]
        hops: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        flags: ConfigFlags,
    },
    /// Generate a synthetic graph in canonical form.
    Synth {
        /// block (node classification) or bipartite (edge classification).
        #[arg(long, default_value = "block")]
        kind: commands::SynthKind,
        /// JSON object with generator parameters.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert a public raw dataset into canonical files.
    Convert {
        /// pubmed or ppi
        #[arg(long)]
        format: Format,
        /// Directory with the raw files.
        #[arg(long)]
        raw: PathBuf,
        /// Pubmed only: `paper_id split` lines replacing the seeded split.
        #[arg(long)]
        split_file: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Embed { .. } => "embed",
            Command::Sample { .. } => "sample",
            Command::Synth { .. } => "synth",
            Command::Convert { .. } => "convert",
        }
    }
}

#[derive(Debug)]
pub enum Fail {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl Fail {
    fn code(&self) -> u8 {
        match self {
            Fail::Usage(_) => 2,
            Fail::Data(_) => 3,
            Fail::Numeric(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Fail::Usage(_) => "usage",
            Fail::Data(_) => "data",
            Fail::Numeric(_) => "numeric",
        }
    }

    fn message(&self) -> &str {
        match self {
            Fail::Usage(m) | Fail::Data(m) | Fail::Numeric(m) => m,
        }
    }
}

impl From<TrainError> for Fail {
    fn from(e: TrainError) -> Self {
        if e.is_numeric() {
            Fail::Numeric(e.to_string())
        } else if e.is_config() {
            Fail::Usage(e.to_string())
        } else {
            Fail::Data(e.to_string())
        }
    }
}

impl From<gain_core::graph::GraphError> for Fail {
    fn from(e: gain_core::graph::GraphError) -> Self {
        Fail::Data(e.to_string())
    }
}

fn run(cmd: Command) -> Result<Value, Fail> {
    match cmd {
        Command::Train {
            data,
            out,
            seeds,
            attention,
            flags,
        } => commands::train(&data, &out, seeds.as_deref(), attention, &flags),
        Command::Eval {
            checkpoint,
            data,
            split,
            out,
        } => commands::eval(&checkpoint, &data, split, out.as_deref()),
        Command::Embed {
            checkpoint,
            data,
            nodes,
            out,
        } => commands::embed(&checkpoint, &data, nodes.as_deref(), &out),
        Command::Sample {
            data,
            node,
            hops,
            out,
            flags,
        } => commands::sample(&data, &node, hops, out.as_deref(), &flags),
        Command::Synth {
            kind,
            config,
            set,
            seed,
            out,
        } => commands::synth(kind, config.as_deref(), &set, seed, &out),
        Command::Convert {
            format,
            raw,
            split_file,
            seed,
            out,
        } => commands::convert(format, &raw, split_file, seed, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version land here too, with exit code 0
            let code = e.exit_code();
            let _ = e.print();
            if code != 0 {
                let message = e.kind().as_str().unwrap_or("invalid arguments");
                println!("{}", json!({ "status": "error", "kind": "usage", "code": 2, "message": message }));
                return ExitCode::from(2);
            }
            return ExitCode::SUCCESS;
        }
    };
    let name = cli.command.name();
    match run(cli.command) {
        Ok(mut summary) => {
            if let Value::Object(m) = &mut summary {
                m.insert("command".into(), name.into());
                m.insert("status".into(), "ok".into());
            }
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(fail) => {
            eprintln!("gain {name}: {}", fail.message());
            println!(
                "{}",
                json!({
                    "command": name,
                    "status": "error",
                    "kind": fail.kind(),
                    "code": fail.code(),
                    "message": fail.message(),
                })
            );
            ExitCode::from(fail.code())
        }
    }
}
