//! Dense two-phase primal simplex for LP relaxations with bounded variables.
//!
//! Structural variables are shifted to `x' = x - lb` so every column has lower
//! bound zero. Each `<=` row gets a slack; rows whose right-hand side is
//! negative at `x' = 0` are negated and receive an artificial variable for
//! phase 1. Nonbasic columns sit at either bound, so box constraints never
//! become rows. Pricing is Dantzig's rule until too many consecutive
//! degenerate pivots have been made, after which Bland's rule takes over.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mip::{Assignment, MipInstance};

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const DEGENERATE_STEP: f64 = 1e-12;
/// Phase-1 infeasibility above which the LP is declared infeasible.
pub const PHASE1_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpResult {
    pub status: LpStatus,
    /// Primal solution, present when `status == Optimal`.
    pub x: Option<Assignment>,
    /// `c^T x`, present when `status == Optimal`.
    pub objective: Option<f64>,
    pub iterations: usize,
}

impl LpResult {
    fn without_solution(status: LpStatus, iterations: usize) -> Self {
        LpResult {
            status,
            x: None,
            objective: None,
            iterations,
        }
    }
}

/// Default pivot budget for an instance of the given shape.
pub fn default_iteration_limit(inst: &MipInstance) -> usize {
    10_000 + 50 * (inst.n_vars() + inst.n_cons())
}

/// Solves the LP relaxation of `inst` (integrality dropped).
pub fn solve_lp(inst: &MipInstance, iteration_limit: usize) -> Result<LpResult> {
    let lb: Vec<f64> = inst.variables().iter().map(|v| v.lb).collect();
    let ub: Vec<f64> = inst.variables().iter().map(|v| v.ub).collect();
    solve_lp_with_bounds(inst, &lb, &ub, iteration_limit)
}

/// Optimal point of the root relaxation, or `None` if the LP did not solve to
/// optimality.
pub fn root_relaxation(inst: &MipInstance) -> Result<Option<Assignment>> {
    Ok(solve_lp(inst, default_iteration_limit(inst))?.x)
}

/// Solves the LP relaxation with the variable bounds replaced by `lb`/`ub`.
pub fn solve_lp_with_bounds(
    inst: &MipInstance,
    lb: &[f64],
    ub: &[f64],
    iteration_limit: usize,
) -> Result<LpResult> {
    let n = inst.n_vars();
    if lb.len() != n || ub.len() != n {
        return Err(Error::Dimension {
            context: "solve_lp bounds",
            expected: n,
            got: lb.len().min(ub.len()),
        });
    }
    if let Some(j) = (0..n).find(|&j| !lb[j].is_finite()) {
        return Err(Error::InvalidInstance(format!(
            "variable {} has an infinite lower bound",
            inst.variables()[j].name
        )));
    }
    if (0..n).any(|j| lb[j] > ub[j]) {
        return Ok(LpResult::without_solution(LpStatus::Infeasible, 0));
    }
    let mut tableau = Tableau::build(inst, lb, ub);
    let status = tableau.solve(iteration_limit);
    if status != LpStatus::Optimal {
        return Ok(LpResult::without_solution(status, tableau.iterations));
    }
    let x = tableau.primal(lb, ub);
    let objective = inst
        .variables()
        .iter()
        .zip(&x)
        .map(|(v, &xi)| v.obj_coef * xi)
        .sum();
    Ok(LpResult {
        status,
        x: Some(Assignment::new(x)),
        objective: Some(objective),
        iterations: tableau.iterations,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ColState {
    Basic,
    Lower,
    Upper,
}

struct Tableau {
    rows: usize,
    cols: usize,
    n_struct: usize,
    first_artificial: usize,
    /// Row-major `B^-1 A`.
    t: Vec<f64>,
    beta: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<ColState>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    structural_costs: Vec<f64>,
    reduced: Vec<f64>,
    allow_artificial: bool,
    bland: bool,
    degenerate_run: usize,
    iterations: usize,
}

impl Tableau {
    fn build(inst: &MipInstance, lb: &[f64], ub: &[f64]) -> Self {
        let n = inst.n_vars();
        let m = inst.n_cons();
        let mut rhs = Vec::with_capacity(m);
        for c in inst.constraints() {
            let shift: f64 = c.terms.iter().map(|&(j, a)| a * lb[j]).sum();
            rhs.push(c.rhs - shift);
        }
        let n_art = rhs.iter().filter(|&&r| r < 0.0).count();
        let cols = n + m + n_art;
        let mut t = vec![0.0; m * cols];
        let mut beta = vec![0.0; m];
        let mut basis = vec![0; m];
        let mut state = vec![ColState::Lower; cols];
        let mut upper = vec![f64::INFINITY; cols];
        for j in 0..n {
            upper[j] = ub[j] - lb[j];
        }

        let mut art = n + m;
        for (i, c) in inst.constraints().iter().enumerate() {
            let row = &mut t[i * cols..(i + 1) * cols];
            let sign = if rhs[i] < 0.0 { -1.0 } else { 1.0 };
            for &(j, a) in &c.terms {
                row[j] = sign * a;
            }
            row[n + i] = sign;
            beta[i] = sign * rhs[i];
            if sign < 0.0 {
                row[art] = 1.0;
                basis[i] = art;
                art += 1;
            } else {
                basis[i] = n + i;
            }
            state[basis[i]] = ColState::Basic;
        }

        let mut cost = vec![0.0; cols];
        for c in cost.iter_mut().skip(n + m) {
            *c = 1.0;
        }

        let mut tab = Tableau {
            rows: m,
            cols,
            n_struct: n,
            first_artificial: n + m,
            t,
            beta,
            basis,
            state,
            upper,
            cost,
            structural_costs: inst.objective(),
            reduced: vec![0.0; cols],
            allow_artificial: true,
            bland: false,
            degenerate_run: 0,
            iterations: 0,
        };
        tab.price_all();
        tab
    }

    fn solve(&mut self, limit: usize) -> LpStatus {
        if self.cols > self.first_artificial {
            match self.run(limit) {
                LpStatus::Optimal => {}
                other => return other,
            }
            let infeasibility: f64 = (0..self.rows)
                .filter(|&i| self.basis[i] >= self.first_artificial)
                .map(|i| self.beta[i])
                .sum();
            if infeasibility > PHASE1_TOL {
                return LpStatus::Infeasible;
            }
            // Artificials are pinned at zero for phase 2; basic ones can stay in
            // the basis on redundant rows.
            for j in self.first_artificial..self.cols {
                self.upper[j] = 0.0;
                self.cost[j] = 0.0;
            }
            for i in 0..self.rows {
                if self.basis[i] >= self.first_artificial {
                    self.beta[i] = 0.0;
                }
            }
            self.allow_artificial = false;
        }
        let n = self.n_struct;
        for j in 0..self.first_artificial {
            self.cost[j] = 0.0;
        }
        self.cost[..n].copy_from_slice(&self.structural_costs);
        self.bland = false;
        self.degenerate_run = 0;
        self.price_all();
        self.run(limit)
    }

    fn price_all(&mut self) {
        for j in 0..self.cols {
            let mut d = self.cost[j];
            if self.state[j] != ColState::Basic {
                for i in 0..self.rows {
                    let a = self.t[i * self.cols + j];
                    if a != 0.0 {
                        d -= self.cost[self.basis[i]] * a;
                    }
                }
            } else {
                d = 0.0;
            }
            self.reduced[j] = d;
        }
    }

    fn choose_entering(&self) -> Option<usize> {
        let limit = if self.allow_artificial {
            self.cols
        } else {
            self.first_artificial
        };
        let mut best: Option<(usize, f64)> = None;
        for j in 0..limit {
            let score = match self.state[j] {
                ColState::Basic => continue,
                ColState::Lower if self.upper[j] > 0.0 => -self.reduced[j],
                ColState::Lower => continue,
                ColState::Upper => self.reduced[j],
            };
            if score <= COST_TOL {
                continue;
            }
            if self.bland {
                return Some(j);
            }
            if best.map_or(true, |(_, s)| score > s) {
                best = Some((j, score));
            }
        }
        best.map(|(j, _)| j)
    }

    fn run(&mut self, limit: usize) -> LpStatus {
        let cols = self.cols;
        let switch_after = 3 * (self.n_struct + self.rows).max(1);
        loop {
            let Some(j) = self.choose_entering() else {
                return LpStatus::Optimal;
            };
            if self.iterations >= limit {
                return LpStatus::IterationLimit;
            }
            self.iterations += 1;

            let delta = if self.state[j] == ColState::Lower { 1.0 } else { -1.0 };
            let mut step = self.upper[j];
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let alpha = self.t[i * cols + j];
                if alpha.abs() < PIVOT_TOL {
                    continue;
                }
                let rate = -alpha * delta;
                let room = if rate < 0.0 {
                    self.beta[i] / -rate
                } else {
                    let ub = self.upper[self.basis[i]];
                    if !ub.is_finite() {
                        continue;
                    }
                    (ub - self.beta[i]) / rate
                };
                let room = room.max(0.0);
                let better = if room < step - 1e-12 {
                    true
                } else if room <= step + 1e-12 {
                    // Ties: Bland wants the lowest basic index, otherwise
                    // the largest pivot element is the stable choice.
                    match leave {
                        Some((p, _)) if self.bland => self.basis[i] < self.basis[p],
                        Some((p, _)) => alpha.abs() > self.t[p * cols + j].abs(),
                        None => false,
                    }
                } else {
                    false
                };
                if better {
                    step = room.min(step);
                    leave = Some((i, rate));
                }
            }
            if !step.is_finite() {
                return LpStatus::Unbounded;
            }

            if step < DEGENERATE_STEP {
                self.degenerate_run += 1;
                if self.degenerate_run > switch_after {
                    self.bland = true;
                }
            } else {
                self.degenerate_run = 0;
            }

            for i in 0..self.rows {
                let alpha = self.t[i * cols + j];
                if alpha != 0.0 {
                    self.beta[i] -= alpha * delta * step;
                }
            }

            match leave {
                None => {
                    self.state[j] = if delta > 0.0 {
                        ColState::Upper
                    } else {
                        ColState::Lower
                    };
                }
                Some((p, rate)) => {
                    let entering_value = if delta > 0.0 {
                        step
                    } else {
                        self.upper[j] - step
                    };
                    let leaving = self.basis[p];
                    self.state[leaving] = if rate < 0.0 {
                        ColState::Lower
                    } else {
                        ColState::Upper
                    };
                    self.pivot(p, j);
                    self.beta[p] = entering_value;
                    self.basis[p] = j;
                    self.state[j] = ColState::Basic;
                }
            }
        }
    }

    fn pivot(&mut self, p: usize, j: usize) {
        let cols = self.cols;
        let piv = self.t[p * cols + j];
        let (before, rest) = self.t.split_at_mut(p * cols);
        let (prow, after) = rest.split_at_mut(cols);
        for v in prow.iter_mut() {
            *v /= piv;
        }
        let eliminate = |row: &mut [f64]| {
            let f = row[j];
            if f != 0.0 {
                for (r, &pv) in row.iter_mut().zip(prow.iter()) {
                    *r -= f * pv;
                }
                row[j] = 0.0;
            }
        };
        before.chunks_mut(cols).for_each(eliminate);
        after.chunks_mut(cols).for_each(eliminate);
        let f = self.reduced[j];
        if f != 0.0 {
            for (r, &pv) in self.reduced.iter_mut().zip(prow.iter()) {
                *r -= f * pv;
            }
            self.reduced[j] = 0.0;
        }
    }

    fn primal(&self, lb: &[f64], ub: &[f64]) -> Vec<f64> {
        let mut shifted = vec![0.0; self.cols];
        for j in 0..self.cols {
            if self.state[j] == ColState::Upper {
                shifted[j] = self.upper[j];
            }
        }
        for i in 0..self.rows {
            shifted[self.basis[i]] = self.beta[i];
        }
        (0..self.n_struct)
            .map(|j| (lb[j] + shifted[j]).clamp(lb[j], ub[j]))
            .collect()
    }
}
