//! Follow the local-branching expert from a first feasible solution.
//!
//! `cargo run --example local_branching_expert`

use lnsforge::bnb::{first_incumbent, solve_mip, SolveBudget};
use lnsforge::expert::{expert_step, expert_trajectory, EtaSchedule, ExpertConfig, InitialSource};
use lnsforge::generate::{generate_one, Family, GeneratorConfig};

fn main() -> lnsforge::Result<()> {
    let gen = GeneratorConfig {
        family: Family::GeneralizedAssignment,
        n_vars: 60,
        n_cons: 6,
        density: 0.1,
        seed: 3,
        ..GeneratorConfig::default()
    };
    let inst = generate_one(&gen, 0)?;
    let x0 = first_incumbent(&inst, &SolveBudget::nodes(2_000))?
        .incumbent
        .expect("generated instance has a feasible point");
    let optimum = solve_mip(&inst, &SolveBudget::nodes(200_000), None)?.objective;
    println!("{}: optimum {:?}", inst.name(), optimum);

    // A single step: best solution within Hamming distance 5 of x0.
    let step = expert_step(&inst, &x0, 5, &SolveBudget::nodes(20_000))?;
    println!("one step, eta 5: {} -> {}, changed {:?}", step.objective_t, step.objective_next, step.action);

    let cfg = ExpertConfig {
        eta: EtaSchedule::Fraction(0.2),
        t_max: 10,
        budget: SolveBudget::nodes(20_000),
        ..ExpertConfig::default()
    };
    let traj = expert_trajectory(&inst, x0, InitialSource::BnbIncumbent, &cfg)?;
    println!("{:>3} {:>5} {:>10} {:>10} {:>8}", "t", "|a|", "f(x_t)", "f(x_t+1)", "status");
    for (t, s) in traj.steps.iter().enumerate() {
        println!("{t:>3} {:>5} {:>10.1} {:>10.1} {:>8?}", s.action.len(), s.objective_t, s.objective_next, s.status);
    }
    Ok(())
}
