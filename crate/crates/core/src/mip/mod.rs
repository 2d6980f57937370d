//! Mixed integer programs in `min c^T x  s.t.  Ax <= b, lb <= x <= ub` form.
//!
//! Every constraint is stored as a `<=` row. Rows read with `>=` or `=` senses
//! are normalized when the instance is built (see [`MipInstance::from_rows`]).

mod io;

use std::collections::BTreeSet;
use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{read_instance, write_instance, InstanceFile};

/// Absolute tolerance for bounds, rows and integrality.
pub const FEAS_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub lb: f64,
    pub ub: f64,
    pub is_integer: bool,
    pub obj_coef: f64,
}

impl Variable {
    pub fn binary(name: impl Into<String>, obj_coef: f64) -> Self {
        Variable {
            name: name.into(),
            lb: 0.0,
            ub: 1.0,
            is_integer: true,
            obj_coef,
        }
    }

    pub fn continuous(name: impl Into<String>, lb: f64, ub: f64, obj_coef: f64) -> Self {
        Variable {
            name: name.into(),
            lb,
            ub,
            is_integer: false,
            obj_coef,
        }
    }

    pub fn is_binary(&self) -> bool {
        self.is_integer && self.lb == 0.0 && self.ub == 1.0
    }
}

/// A single `terms · x <= rhs` row.
#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(name: impl Into<String>, terms: Vec<(usize, f64)>, rhs: f64) -> Self {
        Constraint {
            name: name.into(),
            terms,
            rhs,
        }
    }

    pub fn activity(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, a)| a * values[j]).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

/// A row as it appears in an input file, before normalization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Row {
    pub fn new(name: impl Into<String>, terms: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> Self {
        Row {
            name: name.into(),
            terms,
            sense,
            rhs,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MipInstance {
    name: String,
    variables: Vec<Variable>,
    constraints: Vec<Constraint>,
    integer_indices: Vec<usize>,
}

impl MipInstance {
    /// Builds an instance from `<=` rows, validating every structural invariant.
    /// Exact zero coefficients are dropped.
    pub fn new(
        name: impl Into<String>,
        variables: Vec<Variable>,
        constraints: Vec<Constraint>,
    ) -> Result<Self> {
        let n = variables.len();
        for v in &variables {
            if !(v.lb <= v.ub) {
                return Err(Error::InvalidInstance(format!(
                    "variable {} has lb {} > ub {}",
                    v.name, v.lb, v.ub
                )));
            }
            if !v.obj_coef.is_finite() {
                return Err(Error::InvalidInstance(format!(
                    "variable {} has non-finite objective coefficient",
                    v.name
                )));
            }
            if v.is_integer && (v.lb.fract() != 0.0 || v.ub.fract() != 0.0) {
                return Err(Error::InvalidInstance(format!(
                    "integer variable {} has fractional bounds",
                    v.name
                )));
            }
        }

        let mut constraints = constraints;
        for c in &mut constraints {
            c.terms.retain(|&(_, a)| a != 0.0);
            let mut seen = BTreeSet::new();
            for &(j, a) in &c.terms {
                if j >= n {
                    return Err(Error::InvalidInstance(format!(
                        "constraint {} references variable {} of {}",
                        c.name, j, n
                    )));
                }
                if !seen.insert(j) {
                    return Err(Error::InvalidInstance(format!(
                        "constraint {} repeats variable {}",
                        c.name, j
                    )));
                }
                if !a.is_finite() {
                    return Err(Error::InvalidInstance(format!(
                        "constraint {} has a non-finite coefficient",
                        c.name
                    )));
                }
            }
            if !c.rhs.is_finite() {
                return Err(Error::InvalidInstance(format!(
                    "constraint {} has a non-finite rhs",
                    c.name
                )));
            }
        }

        let integer_indices = variables
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_integer)
            .map(|(i, _)| i)
            .collect();

        Ok(MipInstance {
            name: name.into(),
            variables,
            constraints,
            integer_indices,
        })
    }

    /// Builds an instance from rows of any sense: `>=` rows are negated and
    /// `=` rows become a `<=` and a negated `>=` row.
    pub fn from_rows(
        name: impl Into<String>,
        variables: Vec<Variable>,
        rows: Vec<Row>,
    ) -> Result<Self> {
        let mut constraints = Vec::with_capacity(rows.len());
        for row in rows {
            let negated = || row.terms.iter().map(|&(j, a)| (j, -a)).collect::<Vec<_>>();
            match row.sense {
                Sense::Le => constraints.push(Constraint::new(row.name, row.terms, row.rhs)),
                Sense::Ge => constraints.push(Constraint::new(row.name.clone(), negated(), -row.rhs)),
                Sense::Eq => {
                    let ge = Constraint::new(format!("{}[ge]", row.name), negated(), -row.rhs);
                    constraints.push(Constraint::new(
                        format!("{}[le]", row.name),
                        row.terms,
                        row.rhs,
                    ));
                    constraints.push(ge);
                }
            }
        }
        Self::new(name, variables, constraints)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// Sorted indices of the integer variables.
    pub fn integer_indices(&self) -> &[usize] {
        &self.integer_indices
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn n_cons(&self) -> usize {
        self.constraints.len()
    }

    /// Dense objective vector `c`.
    pub fn objective(&self) -> Vec<f64> {
        self.variables.iter().map(|v| v.obj_coef).collect()
    }

    pub fn all_integers_binary(&self) -> bool {
        self.integer_indices
            .iter()
            .all(|&i| self.variables[i].is_binary())
    }

    pub(crate) fn with_constraint(&self, constraint: Constraint) -> Result<MipInstance> {
        let mut constraints = self.constraints.clone();
        constraints.push(constraint);
        MipInstance::new(self.name.clone(), self.variables.clone(), constraints)
    }

    /// Relabels variables: variable `i` of `self` becomes variable `perm[i]`.
    /// Constraint order is permuted by `con_perm` in the same way.
    pub fn permuted(&self, perm: &[usize], con_perm: &[usize]) -> Result<MipInstance> {
        check_permutation(perm, self.n_vars())?;
        check_permutation(con_perm, self.n_cons())?;
        let mut variables = self.variables.clone();
        for (i, v) in self.variables.iter().enumerate() {
            variables[perm[i]] = v.clone();
        }
        let mut constraints = self.constraints.clone();
        for (r, c) in self.constraints.iter().enumerate() {
            constraints[con_perm[r]] = Constraint::new(
                c.name.clone(),
                c.terms.iter().map(|&(j, a)| (perm[j], a)).collect(),
                c.rhs,
            );
        }
        MipInstance::new(self.name.clone(), variables, constraints)
    }
}

fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let distinct: BTreeSet<_> = perm.iter().copied().filter(|&p| p < n).collect();
    if perm.len() != n || distinct.len() != n {
        return Err(Error::InvalidParameter(format!(
            "not a permutation of 0..{n}"
        )));
    }
    Ok(())
}

/// One value per variable of an instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignment(Vec<f64>);

impl Assignment {
    pub fn new(values: Vec<f64>) -> Self {
        Assignment(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Values at the given indices, in order.
    pub fn restrict(&self, indices: &[usize]) -> Vec<f64> {
        indices.iter().map(|&i| self.0[i]).collect()
    }

    /// Number of listed coordinates on which the two assignments differ by
    /// more than the integrality tolerance.
    pub fn hamming(&self, other: &Assignment, indices: &[usize]) -> usize {
        indices
            .iter()
            .filter(|&&i| (self.0[i] - other.0[i]).abs() > FEAS_TOL)
            .count()
    }

    pub fn permuted(&self, perm: &[usize]) -> Assignment {
        let mut out = vec![0.0; self.0.len()];
        for (i, &v) in self.0.iter().enumerate() {
            out[perm[i]] = v;
        }
        Assignment(out)
    }
}

impl Index<usize> for Assignment {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

fn check_len(inst: &MipInstance, x: &Assignment, context: &'static str) -> Result<()> {
    if x.len() != inst.n_vars() {
        return Err(Error::Dimension {
            context,
            expected: inst.n_vars(),
            got: x.len(),
        });
    }
    Ok(())
}

/// `c^T x`.
pub fn evaluate_objective(inst: &MipInstance, x: &Assignment) -> Result<f64> {
    check_len(inst, x, "evaluate_objective")?;
    Ok(inst
        .variables
        .iter()
        .zip(x.values())
        .map(|(v, &xi)| v.obj_coef * xi)
        .sum())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub index: usize,
    pub amount: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeasibilityReport {
    /// Variables outside `[lb, ub]`.
    pub bounds: Vec<Violation>,
    /// Rows with activity above `rhs`.
    pub constraints: Vec<Violation>,
    /// Integer variables at fractional values.
    pub integrality: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.bounds.is_empty() && self.constraints.is_empty() && self.integrality.is_empty()
    }

    pub fn max_violation(&self) -> f64 {
        self.bounds
            .iter()
            .chain(&self.constraints)
            .chain(&self.integrality)
            .map(|v| v.amount)
            .fold(0.0, f64::max)
    }
}

pub fn check_feasibility(inst: &MipInstance, x: &Assignment, tol: f64) -> Result<FeasibilityReport> {
    check_len(inst, x, "check_feasibility")?;
    let mut report = FeasibilityReport::default();
    for (i, (v, &xi)) in inst.variables.iter().zip(x.values()).enumerate() {
        let amount = (v.lb - xi).max(xi - v.ub);
        if amount > tol || xi.is_nan() {
            report.bounds.push(Violation { index: i, amount });
        }
        if v.is_integer {
            let frac = (xi - xi.round()).abs();
            if frac > tol {
                report.integrality.push(Violation {
                    index: i,
                    amount: frac,
                });
            }
        }
    }
    for (r, c) in inst.constraints.iter().enumerate() {
        let amount = c.activity(x.values()) - c.rhs;
        if amount > tol || amount.is_nan() {
            report.constraints.push(Violation { index: r, amount });
        }
    }
    Ok(report)
}

/// Shorthand for a feasibility check at [`FEAS_TOL`].
pub fn is_feasible(inst: &MipInstance, x: &Assignment) -> bool {
    check_feasibility(inst, x, FEAS_TOL)
        .map(|r| r.is_feasible())
        .unwrap_or(false)
}

/// The reduced problem left after fixing some variables of a parent instance.
#[derive(Clone, Debug, PartialEq)]
pub struct SubMip {
    pub instance: MipInstance,
    /// `free_to_parent[k]` is the parent index of sub-problem variable `k`.
    pub free_to_parent: Vec<usize>,
    /// Objective contribution of the fixed variables.
    pub fixed_offset: f64,
    parent_n_vars: usize,
}

impl SubMip {
    pub fn parent_n_vars(&self) -> usize {
        self.parent_n_vars
    }

    /// Restriction of a parent assignment to the free variables.
    pub fn restrict(&self, parent_x: &Assignment) -> Assignment {
        Assignment::new(parent_x.restrict(&self.free_to_parent))
    }
}

/// Substitutes `values` for every variable with `free[j] == false`.
///
/// Returns `None` when a row loses all its terms and is violated by the fixed
/// values, i.e. the partial assignment is trivially infeasible.
fn fix_variables(
    inst: &MipInstance,
    values: &[f64],
    free: &[bool],
) -> Result<Option<SubMip>> {
    let mut parent_to_free = vec![usize::MAX; inst.n_vars()];
    let mut free_to_parent = Vec::new();
    let mut variables = Vec::new();
    let mut fixed_offset = 0.0;
    for (j, v) in inst.variables.iter().enumerate() {
        if free[j] {
            parent_to_free[j] = free_to_parent.len();
            free_to_parent.push(j);
            variables.push(v.clone());
        } else {
            fixed_offset += v.obj_coef * values[j];
        }
    }

    let mut constraints = Vec::new();
    for c in &inst.constraints {
        let mut rhs = c.rhs;
        let mut terms = Vec::with_capacity(c.terms.len());
        for &(j, a) in &c.terms {
            if free[j] {
                terms.push((parent_to_free[j], a));
            } else {
                rhs -= a * values[j];
            }
        }
        if terms.is_empty() {
            if rhs < -FEAS_TOL {
                return Ok(None);
            }
            continue;
        }
        constraints.push(Constraint::new(c.name.clone(), terms, rhs));
    }

    Ok(Some(SubMip {
        instance: MipInstance::new(inst.name.clone(), variables, constraints)?,
        free_to_parent,
        fixed_offset,
        parent_n_vars: inst.n_vars(),
    }))
}

/// Fixes every integer variable outside `unassign` to its value in `x`.
/// Continuous variables always stay free.
pub fn derive_submip(inst: &MipInstance, x: &Assignment, unassign: &[usize]) -> Result<SubMip> {
    check_len(inst, x, "derive_submip")?;
    let mut free: Vec<bool> = inst.variables.iter().map(|v| !v.is_integer).collect();
    for &j in unassign {
        if j >= inst.n_vars() {
            return Err(Error::InvalidAction(format!(
                "variable {j} out of range for {} variables",
                inst.n_vars()
            )));
        }
        if !inst.variables[j].is_integer {
            return Err(Error::InvalidAction(format!(
                "variable {j} is continuous and cannot be unassigned"
            )));
        }
        free[j] = true;
    }
    let report = check_feasibility(inst, x, FEAS_TOL)?;
    if !report.is_feasible() {
        return Err(Error::Precondition(format!(
            "assignment is infeasible for {} (max violation {:.3e})",
            inst.name,
            report.max_violation()
        )));
    }
    fix_variables(inst, x.values(), &free)?.ok_or_else(|| {
        Error::Internal("a feasible assignment emptied a violated row".to_string())
    })
}

/// Fixes the listed integer variables to the given values and leaves every
/// other variable free. `Ok(None)` means the fixings already violate a row
/// that has no free variable left.
pub fn derive_partial_submip(inst: &MipInstance, fixed: &[(usize, f64)]) -> Result<Option<SubMip>> {
    let mut free = vec![true; inst.n_vars()];
    let mut values = vec![0.0; inst.n_vars()];
    for &(j, v) in fixed {
        let var = inst.variables.get(j).ok_or_else(|| {
            Error::InvalidAction(format!(
                "variable {j} out of range for {} variables",
                inst.n_vars()
            ))
        })?;
        if !var.is_integer {
            return Err(Error::InvalidAction(format!(
                "variable {j} is continuous and cannot be fixed"
            )));
        }
        if v < var.lb - FEAS_TOL || v > var.ub + FEAS_TOL || (v - v.round()).abs() > FEAS_TOL {
            return Err(Error::InvalidAction(format!(
                "value {v} is not an admissible integer for variable {j}"
            )));
        }
        free[j] = false;
        values[j] = v;
    }
    fix_variables(inst, &values, &free)
}

/// Maps a sub-problem assignment back into the parent space.
pub fn lift_assignment(sub: &SubMip, y: &Assignment, parent_x: &Assignment) -> Result<Assignment> {
    check_len(&sub.instance, y, "lift_assignment")?;
    if parent_x.len() != sub.parent_n_vars {
        return Err(Error::Dimension {
            context: "lift_assignment",
            expected: sub.parent_n_vars,
            got: parent_x.len(),
        });
    }
    let report = check_feasibility(&sub.instance, y, FEAS_TOL)?;
    if !report.is_feasible() {
        return Err(Error::Precondition(format!(
            "sub-problem assignment is infeasible (max violation {:.3e})",
            report.max_violation()
        )));
    }
    let mut values = parent_x.values().to_vec();
    for (k, &j) in sub.free_to_parent.iter().enumerate() {
        values[j] = y[k];
    }
    Ok(Assignment::new(values))
}

/// Restricts the feasible set to the Hamming ball of radius `eta` around the
/// integer part of `x`:
///
/// `sum_{i: x_i = 0} x'_i + sum_{i: x_i = 1} (1 - x'_i) <= eta`,
/// stored as `sum_{x_i=0} x'_i - sum_{x_i=1} x'_i <= eta - |{i: x_i = 1}|`.
pub fn add_local_branching_constraint(
    inst: &MipInstance,
    x: &Assignment,
    eta: usize,
) -> Result<MipInstance> {
    check_len(inst, x, "add_local_branching_constraint")?;
    if eta < 1 {
        return Err(Error::InvalidParameter(
            "local branching radius must be at least 1".to_string(),
        ));
    }
    if let Some(&i) = inst
        .integer_indices
        .iter()
        .find(|&&i| !inst.variables[i].is_binary())
    {
        return Err(Error::Unsupported(format!(
            "local branching on non-binary integer variable {}",
            inst.variables[i].name
        )));
    }
    let mut terms = Vec::with_capacity(inst.integer_indices.len());
    let mut ones = 0usize;
    for &i in &inst.integer_indices {
        let xi = x[i];
        if (xi - 1.0).abs() <= FEAS_TOL {
            terms.push((i, -1.0));
            ones += 1;
        } else if xi.abs() <= FEAS_TOL {
            terms.push((i, 1.0));
        } else {
            return Err(Error::Precondition(format!(
                "variable {i} has non-binary value {xi}"
            )));
        }
    }
    let rhs = eta as f64 - ones as f64;
    inst.with_constraint(Constraint::new("local_branching", terms, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn knap3() -> MipInstance {
        MipInstance::new(
            "k3",
            vec![
                Variable::binary("x1", -1.0),
                Variable::binary("x2", -2.0),
                Variable::binary("x3", -3.0),
            ],
            vec![Constraint::new("cap", vec![(0, 1.0), (1, 1.0), (2, 1.0)], 2.0)],
        )
        .unwrap()
    }

    #[test]
    fn objective_is_dot_product() {
        let inst = MipInstance::new(
            "o",
            vec![
                Variable::continuous("a", 0.0, 10.0, 1.0),
                Variable::continuous("b", 0.0, 10.0, 2.0),
            ],
            vec![],
        )
        .unwrap();
        let x = Assignment::new(vec![3.0, 4.0]);
        assert_eq!(evaluate_objective(&inst, &x).unwrap(), 11.0);
        assert!(matches!(
            evaluate_objective(&inst, &Assignment::new(vec![1.0])),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn zero_objective_is_zero() {
        let inst = MipInstance::new(
            "z",
            (0..4).map(|i| Variable::binary(format!("x{i}"), 0.0)).collect(),
            vec![],
        )
        .unwrap();
        let x = Assignment::new(vec![1.0, 0.0, 1.0, 1.0]);
        assert_eq!(evaluate_objective(&inst, &x).unwrap(), 0.0);
    }

    #[test]
    fn feasibility_reports_each_kind() {
        let inst = MipInstance::new(
            "f",
            vec![Variable::binary("x1", 0.0), Variable::binary("x2", 0.0)],
            vec![Constraint::new("c", vec![(0, 1.0), (1, 1.0)], 1.0)],
        )
        .unwrap();
        let ok = check_feasibility(&inst, &Assignment::new(vec![1.0, 0.0]), FEAS_TOL).unwrap();
        assert!(ok.is_feasible());

        let both = check_feasibility(&inst, &Assignment::new(vec![1.0, 1.0]), FEAS_TOL).unwrap();
        assert_eq!(both.constraints, vec![Violation { index: 0, amount: 1.0 }]);
        assert!(both.bounds.is_empty() && both.integrality.is_empty());

        let half = check_feasibility(&inst, &Assignment::new(vec![0.5, 0.0]), FEAS_TOL).unwrap();
        assert_eq!(half.integrality, vec![Violation { index: 0, amount: 0.5 }]);

        let out = check_feasibility(&inst, &Assignment::new(vec![-1.0, 0.0]), FEAS_TOL).unwrap();
        assert_eq!(out.bounds.len(), 1);
    }

    #[test]
    fn senses_are_normalized() {
        let inst = MipInstance::from_rows(
            "s",
            vec![Variable::binary("a", 1.0), Variable::binary("b", 1.0)],
            vec![
                Row::new("g", vec![(0, 1.0), (1, 2.0)], Sense::Ge, 1.0),
                Row::new("e", vec![(0, 1.0), (1, -1.0)], Sense::Eq, 0.0),
            ],
        )
        .unwrap();
        assert_eq!(inst.n_cons(), 3);
        assert_eq!(inst.constraints()[0].terms, vec![(0, -1.0), (1, -2.0)]);
        assert_eq!(inst.constraints()[0].rhs, -1.0);
        assert_eq!(inst.constraints()[1].name, "e[le]");
        assert_eq!(inst.constraints()[2].terms, vec![(0, -1.0), (1, 1.0)]);
    }

    #[test]
    fn invalid_instances_are_rejected() {
        let bad_idx = MipInstance::new(
            "b",
            vec![Variable::binary("a", 1.0)],
            vec![Constraint::new("c", vec![(3, 1.0)], 1.0)],
        );
        assert!(matches!(bad_idx, Err(Error::InvalidInstance(_))));
        let dup = MipInstance::new(
            "b",
            vec![Variable::binary("a", 1.0)],
            vec![Constraint::new("c", vec![(0, 1.0), (0, 2.0)], 1.0)],
        );
        assert!(dup.is_err());
        let bounds = MipInstance::new("b", vec![Variable::continuous("a", 2.0, 1.0, 0.0)], vec![]);
        assert!(bounds.is_err());
    }

    #[test]
    fn submip_substitutes_fixed_values() {
        let inst = knap3();
        let x = Assignment::new(vec![1.0, 1.0, 0.0]);
        let sub = derive_submip(&inst, &x, &[1, 2]).unwrap();
        assert_eq!(sub.free_to_parent, vec![1, 2]);
        assert_eq!(sub.instance.constraints()[0].terms, vec![(0, 1.0), (1, 1.0)]);
        assert_eq!(sub.instance.constraints()[0].rhs, 1.0);
        assert_eq!(sub.fixed_offset, -1.0);
    }

    #[test]
    fn unassigning_everything_is_identity() {
        let inst = knap3();
        let x = Assignment::new(vec![0.0, 1.0, 1.0]);
        let sub = derive_submip(&inst, &x, inst.integer_indices()).unwrap();
        assert_eq!(sub.instance, inst);
        assert_eq!(sub.fixed_offset, 0.0);
    }

    #[test]
    fn submip_rejects_bad_actions() {
        let inst = MipInstance::new(
            "m",
            vec![Variable::binary("a", 1.0), Variable::continuous("y", 0.0, 1.0, 1.0)],
            vec![],
        )
        .unwrap();
        let x = Assignment::new(vec![0.0, 0.0]);
        assert!(matches!(derive_submip(&inst, &x, &[1]), Err(Error::InvalidAction(_))));
        assert!(matches!(derive_submip(&inst, &x, &[7]), Err(Error::InvalidAction(_))));
        let bad = Assignment::new(vec![0.5, 0.0]);
        assert!(matches!(derive_submip(&inst, &bad, &[0]), Err(Error::Precondition(_))));
    }

    #[test]
    fn continuous_variables_stay_free() {
        let inst = MipInstance::new(
            "m",
            vec![Variable::binary("a", 1.0), Variable::continuous("y", 0.0, 4.0, 1.0)],
            vec![Constraint::new("c", vec![(0, 2.0), (1, 1.0)], 3.0)],
        )
        .unwrap();
        let x = Assignment::new(vec![1.0, 0.5]);
        let sub = derive_submip(&inst, &x, &[]).unwrap();
        assert_eq!(sub.free_to_parent, vec![1]);
        assert_eq!(sub.instance.constraints()[0].rhs, 1.0);
    }

    #[test]
    fn lift_of_restriction_is_identity() {
        let inst = knap3();
        let x = Assignment::new(vec![1.0, 0.0, 1.0]);
        let sub = derive_submip(&inst, &x, &[0, 2]).unwrap();
        let y = sub.restrict(&x);
        let lifted = lift_assignment(&sub, &y, &x).unwrap();
        assert_eq!(lifted, x);
        let parent_obj = evaluate_objective(&inst, &lifted).unwrap();
        let sub_obj = evaluate_objective(&sub.instance, &y).unwrap();
        assert_eq!(parent_obj, sub_obj + sub.fixed_offset);
    }

    #[test]
    fn lift_rejects_infeasible_sub_assignment() {
        let inst = knap3();
        let x = Assignment::new(vec![1.0, 1.0, 0.0]);
        let sub = derive_submip(&inst, &x, &[1, 2]).unwrap();
        let y = Assignment::new(vec![1.0, 1.0]);
        assert!(matches!(lift_assignment(&sub, &y, &x), Err(Error::Precondition(_))));
    }

    #[test]
    fn local_branching_row_matches_hamming_form() {
        let inst = MipInstance::new(
            "lb",
            (0..3).map(|i| Variable::binary(format!("x{i}"), 1.0)).collect(),
            vec![],
        )
        .unwrap();
        let x = Assignment::new(vec![0.0, 1.0, 1.0]);
        let aug = add_local_branching_constraint(&inst, &x, 1).unwrap();
        let row = aug.constraints().last().unwrap();
        assert_eq!(row.terms, vec![(0, 1.0), (1, -1.0), (2, -1.0)]);
        assert_eq!(row.rhs, -1.0);
        assert!(matches!(
            add_local_branching_constraint(&inst, &x, 0),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn local_branching_rejects_general_integers() {
        let mut v = Variable::binary("g", 1.0);
        v.ub = 3.0;
        let inst = MipInstance::new("g", vec![v], vec![]).unwrap();
        let x = Assignment::new(vec![0.0]);
        assert!(matches!(
            add_local_branching_constraint(&inst, &x, 1),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn full_radius_admits_whole_cube() {
        let n = 5;
        let inst = MipInstance::new(
            "cube",
            (0..n).map(|i| Variable::binary(format!("x{i}"), 1.0)).collect(),
            vec![],
        )
        .unwrap();
        let x = Assignment::new(vec![1.0, 0.0, 1.0, 1.0, 0.0]);
        let aug = add_local_branching_constraint(&inst, &x, n).unwrap();
        for mask in 0..(1u32 << n) {
            let p = Assignment::new((0..n).map(|i| ((mask >> i) & 1) as f64).collect());
            assert!(is_feasible(&aug, &p));
        }
    }
}
