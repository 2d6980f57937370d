use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lnsforge::config::{InitChoice, PolicyChoice, RunConfig};
use lnsforge::generate::Split;
use lnsforge::pipeline::{self, SolveArgs};
use lnsforge::{Error, Result};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "lnsforge", version, about = "Learned large neighborhood search for binary MIPs")]
struct Cli {
    /// JSON run config; omitted fields take their defaults.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config and LNSFORGE_OUT).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed (overrides the config and LNSFORGE_SEED).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 runs everything on the calling thread.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the instance dataset.
    Gen,
    /// Solve every instance with branch-and-bound for reference objectives.
    BestKnown,
    /// Record local-branching expert trajectories.
    ExpertData,
    /// Train the diving model on best-known solutions.
    TrainDiving,
    /// Train the neighborhood policy by imitating the expert.
    TrainNns,
    /// Run LNS episodes on a split.
    Solve {
        #[arg(long, value_enum, default_value_t = PolicyArg::Neural)]
        policy: PolicyArg,
        #[arg(long, value_enum, default_value_t = InitArg::Bnb)]
        init: InitArg,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        /// Run label under runs/ (default: <policy>-<init>).
        #[arg(long)]
        label: Option<String>,
    },
    /// Average-gap and survival curves for finished runs.
    Evaluate {
        /// Run labels; all runs when omitted.
        labels: Vec<String>,
    },
    /// Initial assignment × neighborhood selection grid on the test split.
    Ablate,
    /// Print the resolved config.
    ShowConfig,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Random,
    Neural,
    Expert,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Bnb,
    Dive,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Valid,
    Test,
}

fn print<T: Serialize>(value: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Internal(format!("serializing output: {e}")))?;
    println!("{s}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers.max(1))
        .build_global()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_env()?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.out = o;
    }
    match cli.command {
        Command::Gen => print(&pipeline::gen(&cfg)?.files),
        Command::BestKnown => print(&pipeline::best_known(&cfg)?),
        Command::ExpertData => {
            let m = pipeline::expert_data(&cfg)?;
            let counts: Vec<(usize, usize)> = m
                .iter()
                .map(|m| (m.entries.len(), m.entries.iter().map(|e| e.steps).sum()))
                .collect();
            print(&serde_json::json!({ "train": counts[0], "valid": counts[1] }))
        }
        Command::TrainDiving => print(&pipeline::train_diving(&cfg)?.log.last()),
        Command::TrainNns => print(&pipeline::train_nns(&cfg)?.log.last()),
        Command::Solve {
            policy,
            init,
            split,
            label,
        } => {
            let args = SolveArgs {
                policy: match policy {
                    PolicyArg::Random => PolicyChoice::Random,
                    PolicyArg::Neural => PolicyChoice::Neural,
                    PolicyArg::Expert => PolicyChoice::Expert,
                },
                init: match init {
                    InitArg::Bnb => InitChoice::Bnb,
                    InitArg::Dive => InitChoice::Dive,
                },
                split: match split {
                    SplitArg::Train => Split::Train,
                    SplitArg::Valid => Split::Valid,
                    SplitArg::Test => Split::Test,
                },
                label,
            };
            print(&pipeline::solve(&cfg, &args)?)
        }
        Command::Evaluate { labels } => print(&pipeline::evaluate(&cfg, &labels)?),
        Command::Ablate => print(&pipeline::ablate(&cfg)?),
        Command::ShowConfig => print(&cfg.seeded()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: kind={} msg={msg}", e.kind());
            ExitCode::FAILURE
        }
    }
}
