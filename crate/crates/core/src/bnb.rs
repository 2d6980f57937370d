//! LP-based branch-and-bound for mixed integer programs.
//!
//! Best-bound node selection, most-fractional branching (lowest index on
//! ties), and an incumbent that only moves on strict improvement. A
//! depth-first mode that stops at the first incumbent is available for
//! producing quick initial assignments.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{default_iteration_limit, solve_lp_with_bounds, LpStatus};
use crate::mip::{check_feasibility, evaluate_objective, Assignment, MipInstance, FEAS_TOL};

/// Minimum objective decrease for a new incumbent to replace the old one.
pub const IMPROVEMENT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveBudget {
    pub max_nodes: usize,
    /// Wall-clock limit, checked between node expansions.
    pub max_time_ms: u64,
    /// Relative gap at which the search stops and reports `Optimal`.
    pub gap_tol: f64,
}

impl SolveBudget {
    /// A node-only budget; the time limit is effectively disabled so runs are
    /// reproducible.
    pub fn nodes(max_nodes: usize) -> Self {
        SolveBudget {
            max_nodes,
            max_time_ms: u64::MAX,
            gap_tol: 0.0,
        }
    }

    pub fn with_time_ms(mut self, ms: u64) -> Self {
        self.max_time_ms = ms;
        self
    }

    pub fn with_gap_tol(mut self, gap_tol: f64) -> Self {
        self.gap_tol = gap_tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_nodes == 0 || self.max_time_ms == 0 {
            return Err(Error::InvalidParameter(
                "solve budget needs positive node and time limits".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.gap_tol) {
            return Err(Error::InvalidParameter(format!(
                "gap_tol {} outside [0, 1)",
                self.gap_tol
            )));
        }
        Ok(())
    }
}

impl Default for SolveBudget {
    fn default() -> Self {
        SolveBudget {
            max_nodes: 10_000,
            max_time_ms: 2_000,
            gap_tol: 1e-6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MipStatus {
    Optimal,
    FeasibleBudgetExhausted,
    Infeasible,
    NoSolutionBudgetExhausted,
}

impl MipStatus {
    pub fn is_optimal(self) -> bool {
        self == MipStatus::Optimal
    }

    pub fn budget_exhausted(self) -> bool {
        matches!(
            self,
            MipStatus::FeasibleBudgetExhausted | MipStatus::NoSolutionBudgetExhausted
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MipSolveResult {
    pub status: MipStatus,
    pub incumbent: Option<Assignment>,
    pub objective: Option<f64>,
    pub lower_bound: f64,
    pub nodes_expanded: usize,
}

/// Solves `inst` to optimality within `budget`. A warm start, if given, is
/// installed as the incumbent before the root is processed.
pub fn solve_mip(
    inst: &MipInstance,
    budget: &SolveBudget,
    warm_start: Option<&Assignment>,
) -> Result<MipSolveResult> {
    Search::new(inst, budget, warm_start, Mode::BestBound)?.run()
}

/// Depth-first search that returns as soon as any feasible assignment is found.
pub fn first_incumbent(inst: &MipInstance, budget: &SolveBudget) -> Result<MipSolveResult> {
    Search::new(inst, budget, None, Mode::FirstIncumbent)?.run()
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    BestBound,
    FirstIncumbent,
}

struct Node {
    bound: f64,
    id: u64,
    /// Bound changes relative to the root: (variable, lb, ub).
    fixings: Vec<(usize, f64, f64)>,
}

// Max-heap order: smaller bound first, then older node first.
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

enum Frontier {
    Heap(BinaryHeap<Node>),
    Stack(Vec<Node>),
}

impl Frontier {
    fn push(&mut self, node: Node) {
        match self {
            Frontier::Heap(h) => h.push(node),
            Frontier::Stack(s) => s.push(node),
        }
    }

    fn pop(&mut self) -> Option<Node> {
        match self {
            Frontier::Heap(h) => h.pop(),
            Frontier::Stack(s) => s.pop(),
        }
    }

    fn min_bound(&self) -> Option<f64> {
        match self {
            Frontier::Heap(h) => h.peek().map(|n| n.bound),
            Frontier::Stack(s) => s.iter().map(|n| n.bound).min_by(f64::total_cmp),
        }
    }
}

struct Search<'a> {
    inst: &'a MipInstance,
    budget: SolveBudget,
    mode: Mode,
    root_lb: Vec<f64>,
    root_ub: Vec<f64>,
    incumbent: Option<(Assignment, f64)>,
    frontier: Frontier,
    next_id: u64,
    nodes_expanded: usize,
    /// Set when some node could not be resolved (LP iteration limit), which
    /// rules out an optimality proof.
    incomplete: bool,
    iteration_limit: usize,
}

impl<'a> Search<'a> {
    fn new(
        inst: &'a MipInstance,
        budget: &SolveBudget,
        warm_start: Option<&Assignment>,
        mode: Mode,
    ) -> Result<Self> {
        budget.validate()?;
        let incumbent = match warm_start {
            Some(w) => {
                let report = check_feasibility(inst, w, FEAS_TOL)?;
                if !report.is_feasible() {
                    return Err(Error::Precondition(format!(
                        "warm start is not integral-feasible for {} (max violation {:.3e})",
                        inst.name(),
                        report.max_violation()
                    )));
                }
                Some((w.clone(), evaluate_objective(inst, w)?))
            }
            None => None,
        };
        let frontier = match mode {
            Mode::BestBound => Frontier::Heap(BinaryHeap::new()),
            Mode::FirstIncumbent => Frontier::Stack(Vec::new()),
        };
        Ok(Search {
            inst,
            budget: *budget,
            mode,
            root_lb: inst.variables().iter().map(|v| v.lb).collect(),
            root_ub: inst.variables().iter().map(|v| v.ub).collect(),
            incumbent,
            frontier,
            next_id: 0,
            nodes_expanded: 0,
            incomplete: false,
            iteration_limit: default_iteration_limit(inst),
        })
    }

    fn push(&mut self, bound: f64, fixings: Vec<(usize, f64, f64)>) {
        let id = self.next_id;
        self.next_id += 1;
        self.frontier.push(Node { bound, id, fixings });
    }

    fn incumbent_value(&self) -> f64 {
        self.incumbent.as_ref().map_or(f64::INFINITY, |(_, f)| *f)
    }

    fn gap_closed(&self, lower_bound: f64) -> bool {
        match &self.incumbent {
            Some((_, f)) => (f - lower_bound) / f.abs().max(1e-9) <= self.budget.gap_tol,
            None => false,
        }
    }

    fn run(mut self) -> Result<MipSolveResult> {
        let start = Instant::now();
        self.push(f64::NEG_INFINITY, Vec::new());
        let mut lower_bound = f64::NEG_INFINITY;

        let exhausted = loop {
            let Some(open_min) = self.frontier.min_bound() else {
                break false;
            };
            lower_bound = lower_bound.max(open_min.min(self.incumbent_value()));
            if self.gap_closed(lower_bound) {
                break false;
            }
            if self.mode == Mode::FirstIncumbent && self.incumbent.is_some() {
                break true;
            }
            if self.nodes_expanded >= self.budget.max_nodes
                || start.elapsed().as_millis() >= u128::from(self.budget.max_time_ms)
            {
                break true;
            }
            let node = self.frontier.pop().expect("frontier is non-empty");
            if node.bound >= self.incumbent_value() - IMPROVEMENT_TOL {
                continue;
            }
            self.expand(node)?;
        };

        let proved = !exhausted && !self.incomplete;
        if proved {
            match &self.incumbent {
                Some((_, f)) if self.frontier.min_bound().is_none() => lower_bound = *f,
                None => lower_bound = f64::INFINITY,
                _ => {}
            }
        }
        let status = match (&self.incumbent, proved) {
            (Some(_), true) => MipStatus::Optimal,
            (Some(_), false) => MipStatus::FeasibleBudgetExhausted,
            (None, true) => MipStatus::Infeasible,
            (None, false) => MipStatus::NoSolutionBudgetExhausted,
        };
        let (incumbent, objective) = match self.incumbent {
            Some((x, f)) => (Some(x), Some(f)),
            None => (None, None),
        };
        Ok(MipSolveResult {
            status,
            incumbent,
            objective,
            lower_bound,
            nodes_expanded: self.nodes_expanded,
        })
    }

    fn expand(&mut self, node: Node) -> Result<()> {
        let mut lb = self.root_lb.clone();
        let mut ub = self.root_ub.clone();
        for &(j, l, u) in &node.fixings {
            lb[j] = l;
            ub[j] = u;
        }
        self.nodes_expanded += 1;
        let lp = solve_lp_with_bounds(self.inst, &lb, &ub, self.iteration_limit)?;
        match lp.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => return Ok(()),
            LpStatus::Unbounded | LpStatus::IterationLimit => {
                self.incomplete = true;
                return Ok(());
            }
        }
        let bound = lp.objective.expect("optimal LP has an objective");
        if bound >= self.incumbent_value() - IMPROVEMENT_TOL {
            return Ok(());
        }
        let x = lp.x.expect("optimal LP has a solution");

        let mut branch: Option<(usize, f64)> = None;
        for &j in self.inst.integer_indices() {
            let v = x[j];
            let frac = (v - v.floor()).min(v.ceil() - v);
            if frac > FEAS_TOL && branch.map_or(true, |(_, best)| frac > best) {
                branch = Some((j, frac));
            }
        }

        let Some((j, _)) = branch else {
            self.consider_candidate(x)?;
            return Ok(());
        };

        let v = x[j];
        let mut down = node.fixings.clone();
        down.push((j, lb[j], v.floor()));
        let mut up = node.fixings;
        up.push((j, v.ceil(), ub[j]));
        match self.mode {
            Mode::BestBound => {
                self.push(bound, down);
                self.push(bound, up);
            }
            Mode::FirstIncumbent => {
                // Stack: the child on the rounding side of the LP value is
                // explored first.
                if v - v.floor() >= 0.5 {
                    self.push(bound, down);
                    self.push(bound, up);
                } else {
                    self.push(bound, up);
                    self.push(bound, down);
                }
            }
        }
        Ok(())
    }

    fn consider_candidate(&mut self, x: Assignment) -> Result<()> {
        let mut values = x.into_values();
        for &j in self.inst.integer_indices() {
            values[j] = values[j].round();
        }
        let candidate = Assignment::new(values);
        if !check_feasibility(self.inst, &candidate, FEAS_TOL)?.is_feasible() {
            self.incomplete = true;
            return Ok(());
        }
        let f = evaluate_objective(self.inst, &candidate)?;
        if f < self.incumbent_value() - IMPROVEMENT_TOL {
            self.incumbent = Some((candidate, f));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mip::{Constraint, Variable};

    fn knapsack_min(values: &[f64], weights: &[f64], cap: f64) -> MipInstance {
        let vars = values
            .iter()
            .enumerate()
            .map(|(i, &v)| Variable::binary(format!("x{i}"), -v))
            .collect();
        let terms = weights.iter().copied().enumerate().collect();
        MipInstance::new("knap", vars, vec![Constraint::new("cap", terms, cap)]).unwrap()
    }

    #[test]
    fn integral_relaxation_solves_at_root() {
        let inst = MipInstance::new(
            "tight",
            vec![Variable::binary("a", 1.0), Variable::binary("b", 2.0)],
            vec![Constraint::new("c", vec![(0, -1.0), (1, -1.0)], -1.0)],
        )
        .unwrap();
        let r = solve_mip(&inst, &SolveBudget::nodes(100), None).unwrap();
        assert_eq!(r.status, MipStatus::Optimal);
        assert_eq!(r.nodes_expanded, 1);
        assert_eq!(r.objective, Some(1.0));
        assert_eq!(r.lower_bound, 1.0);
    }

    #[test]
    fn single_node_budget_keeps_warm_start() {
        let inst = knapsack_min(&[10.0, 13.0, 7.0, 8.0], &[5.0, 7.0, 4.0, 3.0], 10.0);
        let warm = Assignment::new(vec![0.0, 0.0, 0.0, 0.0]);
        let r = solve_mip(&inst, &SolveBudget::nodes(1), Some(&warm)).unwrap();
        assert_eq!(r.status, MipStatus::FeasibleBudgetExhausted);
        assert_eq!(r.incumbent, Some(warm));
        assert_eq!(r.nodes_expanded, 1);
    }

    #[test]
    fn infeasible_instance_is_reported() {
        let inst = MipInstance::new(
            "inf",
            vec![Variable::binary("a", 1.0), Variable::binary("b", 1.0)],
            vec![
                Constraint::new("c1", vec![(0, 1.0), (1, 1.0)], 0.5),
                Constraint::new("c2", vec![(0, -1.0), (1, -1.0)], -1.0),
            ],
        )
        .unwrap();
        let r = solve_mip(&inst, &SolveBudget::nodes(100), None).unwrap();
        assert_eq!(r.status, MipStatus::Infeasible);
        assert!(r.incumbent.is_none());
    }

    #[test]
    fn infeasible_warm_start_is_rejected() {
        let inst = knapsack_min(&[1.0, 1.0], &[1.0, 1.0], 1.0);
        let warm = Assignment::new(vec![1.0, 1.0]);
        assert!(matches!(
            solve_mip(&inst, &SolveBudget::nodes(10), Some(&warm)),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn first_incumbent_stops_early() {
        let inst = knapsack_min(
            &[10.0, 13.0, 7.0, 8.0, 9.0, 4.0],
            &[5.0, 7.0, 4.0, 3.0, 6.0, 2.0],
            13.0,
        );
        let r = first_incumbent(&inst, &SolveBudget::nodes(1000)).unwrap();
        assert!(r.incumbent.is_some());
        let full = solve_mip(&inst, &SolveBudget::nodes(1000), None).unwrap();
        assert!(r.nodes_expanded <= full.nodes_expanded);
        assert!(r.objective.unwrap() >= full.objective.unwrap() - 1e-9);
    }

    #[test]
    fn budget_validation() {
        assert!(SolveBudget::nodes(0).validate().is_err());
        assert!(SolveBudget::nodes(5).with_gap_tol(1.0).validate().is_err());
        assert!(SolveBudget::default().validate().is_ok());
    }
}
