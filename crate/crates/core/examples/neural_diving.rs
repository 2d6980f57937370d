//! Train the diving model on solved instances, then dive on unseen ones.
//!
//! `cargo run --release --example neural_diving`

use lnsforge::bnb::{first_incumbent, solve_mip, SolveBudget};
use lnsforge::diving::{dive, train_diving, DiveConfig};
use lnsforge::eval::primal_gap;
use lnsforge::generate::{generate, Family, GeneratorConfig};
use lnsforge::mip::Assignment;
use lnsforge::neural::{PolicyConfig, TrainConfig};

fn main() -> lnsforge::Result<()> {
    let gen = GeneratorConfig {
        family: Family::SetCover,
        count: 40,
        seed: 5,
        ..GeneratorConfig::default()
    };
    let insts = generate(&gen)?;
    let (train, test) = insts.split_at(30);

    let solved: Vec<(_, Vec<Assignment>)> = train
        .iter()
        .filter_map(|i| {
            let x = solve_mip(i, &SolveBudget::nodes(50_000), None).ok()?.incumbent?;
            Some((i.clone(), vec![x]))
        })
        .collect();
    let cfg = TrainConfig {
        policy: PolicyConfig {
            window: 0,
            embed: 16,
            hidden: 16,
            ..PolicyConfig::default()
        },
        epochs: 100,
        ..TrainConfig::default()
    };
    let out = train_diving(&solved, &[], &cfg)?;
    let losses = out.losses("train");
    println!("diving loss {:.3} -> {:.3}", losses[0], losses[losses.len() - 1]);

    let dive_cfg = DiveConfig {
        n_samples: 8,
        coverage: 0.5,
        ..DiveConfig::default()
    };
    println!("{:<28} {:>10} {:>10}", "instance", "dive gap", "dfs gap");
    for inst in test {
        let best = solve_mip(inst, &SolveBudget::nodes(100_000), None)?.objective.unwrap();
        let d = dive(inst, &out.params, &dive_cfg)?;
        let dfs = first_incumbent(inst, &SolveBudget::nodes(2_000))?.objective;
        println!("{:<28} {:>10.4} {:>10.4}", inst.name(), primal_gap(Some(d.objective), best), primal_gap(dfs, best));
    }
    Ok(())
}
