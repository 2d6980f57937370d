//! Compare random and expert neighborhoods with average-gap and survival curves.
//!
//! `cargo run --release --example evaluate_curves -- [out_dir]`

use std::path::PathBuf;

use lnsforge::bnb::SolveBudget;
use lnsforge::eval::{average_gap_curve, compute_best_known, survival_curve, write_gap_csv, write_svg, Grid, Series};
use lnsforge::generate::{generate, Family, GeneratorConfig};
use lnsforge::lns::{run_episode, EpisodeConfig, Init, Policy};

fn main() -> lnsforge::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/example-eval".into()));
    let gen = GeneratorConfig {
        family: Family::GeneralizedAssignment,
        n_vars: 60,
        n_cons: 6,
        density: 0.1,
        count: 12,
        seed: 4,
        ..GeneratorConfig::default()
    };
    let insts = generate(&gen)?;
    let (table, _) = compute_best_known(&insts, &SolveBudget::nodes(100_000))?;
    let cfg = EpisodeConfig {
        max_steps: 6,
        step_budget: SolveBudget::nodes(200),
        record_wall_time: false,
        ..EpisodeConfig::default()
    };
    let init = Init::BnbIncumbent(SolveBudget::nodes(2_000));
    let grid = Grid::steps(cfg.max_steps);
    let mut gap_series = Vec::new();
    let mut surv_series = Vec::new();
    for policy in [Policy::Random, Policy::Expert(SolveBudget::nodes(20_000))] {
        let mut records = Vec::new();
        for inst in &insts {
            match run_episode(inst, &policy, &init, &cfg, 0, table.get(inst.name()).ok()) {
                Ok(r) => records.push(r),
                Err(lnsforge::Error::NoInitialAssignment(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        let gaps = average_gap_curve(&records, &table, &grid)?;
        let surv = survival_curve(&records, &table, 0.01, &grid)?;
        write_gap_csv(&out.join(format!("{}_gap.csv", policy.label())), &gaps)?;
        let last = gaps.last().unwrap();
        println!("{:<7} mean gap at step {}: {:.4}, solved within 1%: {:.2}", policy.label(), last.x, last.mean_gap, surv.last().unwrap().fraction);
        gap_series.push(Series { label: policy.label().into(), points: gaps.iter().map(|p| (p.x, p.mean_gap)).collect() });
        surv_series.push(Series { label: policy.label().into(), points: surv.iter().map(|p| (p.x, p.fraction)).collect() });
    }
    write_svg(&out.join("gap.svg"), "Average primal gap", "step", &gap_series, false)?;
    write_svg(&out.join("survival.svg"), "Fraction within 1% of best known", "step", &surv_series, false)?;
    println!("curves written under {}", out.display());
    Ok(())
}
