//! Build a small MIP by hand and solve it with branch-and-bound.
//!
//! `cargo run --example solve_mip`

use lnsforge::bnb::{first_incumbent, solve_mip, SolveBudget};
use lnsforge::lp::root_relaxation;
use lnsforge::mip::{check_feasibility, evaluate_objective, Row, Sense, Variable, MipInstance, FEAS_TOL};

fn main() -> lnsforge::Result<()> {
    // Knapsack with a side constraint, written as a minimization.
    let values = [10.0, 13.0, 7.0, 8.0, 4.0, 9.0];
    let weights = [5.0, 7.0, 4.0, 4.0, 2.0, 5.0];
    let vars = values
        .iter()
        .enumerate()
        .map(|(j, v)| Variable::binary(format!("take{j}"), -v))
        .collect();
    let rows = vec![
        Row::new("capacity", weights.iter().copied().enumerate().collect(), Sense::Le, 14.0),
        Row::new("pick_one_of_0_1", vec![(0, 1.0), (1, 1.0)], Sense::Eq, 1.0),
        Row::new("at_least_two", (0..6).map(|j| (j, 1.0)).collect(), Sense::Ge, 2.0),
    ];
    let inst = MipInstance::from_rows("knapsack", vars, rows)?;
    println!("{}: {} vars, {} normalized rows", inst.name(), inst.n_vars(), inst.n_cons());

    if let Some(lp) = root_relaxation(&inst)? {
        println!("LP relaxation bound: {:.3}", evaluate_objective(&inst, &lp)?);
    }

    let first = first_incumbent(&inst, &SolveBudget::nodes(1_000))?;
    if let Some(obj) = first.objective {
        println!("first incumbent: {obj} after {} nodes", first.nodes_expanded);
    }

    let res = solve_mip(&inst, &SolveBudget::nodes(10_000), first.incumbent.as_ref())?;
    println!("status {:?}, objective {:?}, {} nodes", res.status, res.objective, res.nodes_expanded);
    if let Some(x) = &res.incumbent {
        let report = check_feasibility(&inst, x, FEAS_TOL)?;
        println!("x = {:?}, feasible: {}", x.values(), report.is_feasible());
    }
    Ok(())
}
