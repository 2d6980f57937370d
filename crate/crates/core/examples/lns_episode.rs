//! Run LNS episodes with each neighborhood policy and save one as JSONL.
//!
//! `cargo run --release --example lns_episode -- [out_dir]`

use std::path::PathBuf;

use lnsforge::bnb::{solve_mip, SolveBudget};
use lnsforge::generate::{generate_one, Family, GeneratorConfig};
use lnsforge::lns::{run_episode, run_parallel, EpisodeConfig, EpisodeRecord, Init, Policy};
use lnsforge::neural::{PolicyConfig, PolicyParams};

fn main() -> lnsforge::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/example-episodes".into()));
    let gen = GeneratorConfig {
        family: Family::GeneralizedAssignment,
        n_vars: 80,
        n_cons: 8,
        density: 0.1,
        seed: 21,
        ..GeneratorConfig::default()
    };
    let inst = generate_one(&gen, 1)?;
    let best = solve_mip(&inst, &SolveBudget::nodes(200_000), None)?.objective;
    let cfg = EpisodeConfig {
        max_steps: 8,
        step_budget: SolveBudget::nodes(200),
        record_wall_time: false,
        ..EpisodeConfig::default()
    };
    let init = Init::BnbIncumbent(SolveBudget::nodes(2_000));
    // An untrained policy is valid input; see train_policy for a trained one.
    let untrained = PolicyParams::init(&PolicyConfig::default())?;
    let policies = [
        Policy::Random,
        Policy::Neural(untrained),
        Policy::Expert(SolveBudget::nodes(20_000)),
    ];
    for policy in &policies {
        let rec = run_episode(&inst, policy, &init, &cfg, 1, best)?;
        let curve: Vec<String> = rec.steps.iter().map(|s| format!("{:.0}", s.objective)).collect();
        println!("{:<7} {}", policy.label(), curve.join(" "));
        if let Policy::Random = policy {
            let path = rec.write(&out)?;
            assert_eq!(EpisodeRecord::read(&path)?, rec);
            println!("        saved to {}", path.display());
        }
    }

    let par = run_parallel(&inst, 4, 100, &Policy::Random, &init, &cfg, best)?;
    let agg: Vec<String> = par.aggregate.iter().map(|p| format!("{:.0}", p.objective)).collect();
    println!("4 random runs, best per step: {}", agg.join(" "));
    println!("optimum {best:?}");
    Ok(())
}
