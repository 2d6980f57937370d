//! Imitation-train the neighborhood policy on expert trajectories and
//! round-trip the checkpoint.
//!
//! `cargo run --release --example train_policy -- [checkpoint_path]`

use std::path::PathBuf;

use lnsforge::bnb::SolveBudget;
use lnsforge::expert::{generate_trajectories, imitation_samples, EtaSchedule, ExpertConfig, InitialPolicy};
use lnsforge::generate::{generate, Family, GeneratorConfig};
use lnsforge::neural::{evaluate_loss, load_checkpoint, save_checkpoint, train, PolicyConfig, TrainConfig};

fn main() -> lnsforge::Result<()> {
    let path = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/example-nns.json".into()));
    let gen = GeneratorConfig {
        family: Family::GeneralizedAssignment,
        n_vars: 60,
        n_cons: 6,
        density: 0.1,
        count: 48,
        seed: 11,
        ..GeneratorConfig::default()
    };
    let insts = generate(&gen)?;
    let expert = ExpertConfig {
        eta: EtaSchedule::Fraction(0.2),
        t_max: 6,
        budget: SolveBudget::nodes(10_000),
        init_budget: SolveBudget::nodes(2_000),
    };
    let (trajs, skipped) = generate_trajectories(&insts, &expert, &InitialPolicy::BnbIncumbent)?;
    println!("{} trajectories, {} instances skipped", trajs.len(), skipped.len());

    let window = 3;
    let mut samples = Vec::new();
    for t in &trajs {
        let inst = insts.iter().find(|i| i.name() == t.instance_id).unwrap();
        samples.extend(imitation_samples(inst, &t.records(inst.integer_indices()), window)?);
    }
    let cut = samples.len() * 4 / 5;
    let (tr, va) = samples.split_at(cut);
    let cfg = TrainConfig {
        policy: PolicyConfig {
            window,
            embed: 16,
            hidden: 16,
            ..PolicyConfig::default()
        },
        epochs: 60,
        ..TrainConfig::default()
    };
    let out = train(tr, va, &cfg)?;
    let (lt, lv) = (out.losses("train"), out.losses("valid"));
    println!("train NLL {:.3} -> {:.3}, valid NLL {:.3} -> {:.3}", lt[0], lt[lt.len() - 1], lv[0], lv[lv.len() - 1]);

    save_checkpoint(&path, &out.params)?;
    let back = load_checkpoint(&path)?;
    assert_eq!(back, out.params);
    println!("checkpoint {} ({} parameters), valid NLL after reload {:.3}", path.display(), back.n_params(), evaluate_loss(&back, va)?);
    Ok(())
}
