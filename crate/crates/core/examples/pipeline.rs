//! The full command-line workflow driven from code: generate, label, train,
//! solve and evaluate.
//!
//! `cargo run --release --example pipeline -- [out_dir]`

use std::path::PathBuf;

use lnsforge::config::{InitChoice, PolicyChoice, RunConfig};
use lnsforge::generate::Split;
use lnsforge::pipeline::{self, SolveArgs};

fn main() -> lnsforge::Result<()> {
    let mut cfg = RunConfig::default();
    cfg.out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/example-pipeline".into()));
    cfg.generator.count = 20;
    cfg.nns.epochs = 60;
    cfg.diving.epochs = 60;
    cfg.validate()?;

    pipeline::gen(&cfg)?;
    let table = pipeline::best_known(&cfg)?;
    println!("best-known objectives for {} instances", table.entries.len());
    pipeline::train_diving(&cfg)?;
    let manifests = pipeline::expert_data(&cfg)?;
    println!("expert trajectories: {}", manifests[0].entries.len());
    pipeline::train_nns(&cfg)?;

    let mut labels = Vec::new();
    for (policy, init) in [
        (PolicyChoice::Neural, InitChoice::Dive),
        (PolicyChoice::Random, InitChoice::Bnb),
    ] {
        let args = SolveArgs { policy, init, split: Split::Test, label: None };
        let s = pipeline::solve(&cfg, &args)?;
        println!("{}: {} episodes", s.label, s.episodes);
        labels.push(s.label);
    }
    let summary = pipeline::evaluate(&cfg, &labels)?;
    for m in &summary.methods {
        println!("{:<14} final mean gap {:.4}", m.label, m.final_mean_gap);
    }
    println!("results in {}", cfg.out.join("eval").display());
    Ok(())
}
