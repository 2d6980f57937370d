//! Local-branching expert and offline trajectory generation.
//!
//! The expert searches the Hamming ball of radius `eta` around the current
//! assignment with branch-and-bound; the variables that changed form the
//! action to imitate.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bnb::{first_incumbent, solve_mip, MipStatus, SolveBudget, IMPROVEMENT_TOL};
use crate::diving::{dive, DiveConfig};
use crate::error::{Error, Result};
use crate::graph::{encode, HistoryWindow};
use crate::io::{read_jsonl, write_json, write_jsonl};
use crate::lp::root_relaxation;
use crate::mip::{
    add_local_branching_constraint, check_feasibility, evaluate_objective, Assignment,
    MipInstance, FEAS_TOL,
};
use crate::neural::{PolicyParams, TrainSample};

/// Version of the trajectory JSON-lines layout and its manifest.
pub const TRAJECTORY_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct ExpertStep {
    pub x_t: Assignment,
    /// Variable indices whose value changed, ascending.
    pub action: Vec<usize>,
    pub x_next: Assignment,
    pub eta: usize,
    pub status: MipStatus,
    /// The solve ran out of budget without improving on `x_t`.
    pub stalled: bool,
    pub objective_t: f64,
    pub objective_next: f64,
}

impl ExpertStep {
    /// Action as a 0/1 vector over the instance's integer variables.
    pub fn action_vector(&self, integer_indices: &[usize]) -> Vec<f64> {
        integer_indices
            .iter()
            .map(|i| self.action.binary_search(i).is_ok() as u8 as f64)
            .collect()
    }
}

fn check_binary_start(inst: &MipInstance, x: &Assignment) -> Result<f64> {
    if !inst.all_integers_binary() {
        return Err(Error::Unsupported(format!(
            "{}: the local-branching expert needs binary integer variables",
            inst.name()
        )));
    }
    let report = check_feasibility(inst, x, FEAS_TOL)?;
    if !report.is_feasible() {
        return Err(Error::Precondition(format!(
            "{}: expert start assignment is infeasible (max violation {:.3e})",
            inst.name(),
            report.max_violation()
        )));
    }
    evaluate_objective(inst, x)
}

/// One expert move: the best assignment within Hamming distance `eta` of
/// `x_t` that the budget allows.
pub fn expert_step(
    inst: &MipInstance,
    x_t: &Assignment,
    eta: usize,
    budget: &SolveBudget,
) -> Result<ExpertStep> {
    let objective_t = check_binary_start(inst, x_t)?;
    let ball = add_local_branching_constraint(inst, x_t, eta)?;
    let res = solve_mip(&ball, budget, Some(x_t))?;
    let (x_next, objective_next) = match (res.incumbent, res.objective) {
        (Some(x), Some(f)) => (x, f),
        _ => {
            return Err(Error::Internal(format!(
                "{}: warm-started expert solve lost its incumbent",
                inst.name()
            )))
        }
    };
    let improved = objective_next < objective_t - IMPROVEMENT_TOL;
    let stalled = !res.status.is_optimal() && !improved;
    let (x_next, objective_next) = if stalled || !improved {
        (x_t.clone(), objective_t)
    } else {
        (x_next, objective_next)
    };
    let action = inst
        .integer_indices()
        .iter()
        .copied()
        .filter(|&i| (x_t[i] - x_next[i]).abs() > 0.5)
        .collect();
    Ok(ExpertStep {
        x_t: x_t.clone(),
        action,
        x_next,
        eta,
        status: res.status,
        stalled,
        objective_t,
        objective_next,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialSource {
    Diving,
    BnbIncumbent,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub instance_id: String,
    pub initial_source: InitialSource,
    pub steps: Vec<ExpertStep>,
}

/// Neighborhood radius used by the expert.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaSchedule {
    /// `max(1, ⌈f·|I|⌉)`
    Fraction(f64),
    Fixed(usize),
}

impl EtaSchedule {
    pub fn eta(&self, n_int: usize) -> usize {
        let eta = match *self {
            EtaSchedule::Fraction(f) => (f * n_int as f64).ceil() as usize,
            EtaSchedule::Fixed(k) => k,
        };
        eta.clamp(1, n_int.max(1))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpertConfig {
    pub eta: EtaSchedule,
    pub t_max: usize,
    /// Budget for every local-branching solve.
    pub budget: SolveBudget,
    /// Budget for the first-incumbent start.
    pub init_budget: SolveBudget,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        ExpertConfig {
            eta: EtaSchedule::Fraction(0.2),
            t_max: 20,
            budget: SolveBudget::nodes(50_000),
            init_budget: SolveBudget::nodes(10_000),
        }
    }
}

/// How the first assignment of each trajectory is obtained.
#[derive(Clone, Debug)]
pub enum InitialPolicy {
    BnbIncumbent,
    Dive(PolicyParams, DiveConfig),
}

pub(crate) fn initial_assignment(
    inst: &MipInstance,
    init: &InitialPolicy,
    bnb_budget: &SolveBudget,
) -> Result<(Assignment, InitialSource)> {
    match init {
        InitialPolicy::BnbIncumbent => {
            let res = first_incumbent(inst, bnb_budget)?;
            res.incumbent
                .map(|x| (x, InitialSource::BnbIncumbent))
                .ok_or_else(|| {
                    Error::NoInitialAssignment(format!(
                        "{}: first-incumbent search ended with {:?}",
                        inst.name(),
                        res.status
                    ))
                })
        }
        InitialPolicy::Dive(params, cfg) => {
            Ok((dive(inst, params, cfg)?.best, InitialSource::Diving))
        }
    }
}

/// Runs the expert from `x0` until `t_max` steps, two stalled steps in a
/// row, or a step that proves `x_t` optimal within its ball.
pub fn expert_trajectory(
    inst: &MipInstance,
    x0: Assignment,
    source: InitialSource,
    cfg: &ExpertConfig,
) -> Result<Trajectory> {
    let eta = cfg.eta.eta(inst.integer_indices().len());
    let mut steps: Vec<ExpertStep> = Vec::new();
    let mut x = x0;
    let mut stalled_run = 0;
    while steps.len() < cfg.t_max {
        let step = expert_step(inst, &x, eta, &cfg.budget)?;
        stalled_run = if step.stalled { stalled_run + 1 } else { 0 };
        let fixed_point = step.status.is_optimal() && step.action.is_empty();
        x = step.x_next.clone();
        steps.push(step);
        if fixed_point || stalled_run >= 2 {
            break;
        }
    }
    Ok(Trajectory {
        instance_id: inst.name().to_string(),
        initial_source: source,
        steps,
    })
}

/// One trajectory per instance, computed in parallel. Instances without an
/// initial assignment are skipped and reported with the reason.
pub fn generate_trajectories(
    instances: &[MipInstance],
    cfg: &ExpertConfig,
    init: &InitialPolicy,
) -> Result<(Vec<Trajectory>, Vec<(String, String)>)> {
    let results: Vec<Result<std::result::Result<Trajectory, (String, String)>>> = instances
        .par_iter()
        .map(|inst| match initial_assignment(inst, init, &cfg.init_budget) {
            Ok((x0, source)) => expert_trajectory(inst, x0, source, cfg).map(Ok),
            Err(e @ Error::NoInitialAssignment(_)) => {
                log::warn!("skipping {}: {e}", inst.name());
                Ok(Err((inst.name().to_string(), e.to_string())))
            }
            Err(e) => Err(e),
        })
        .collect();
    let mut trajectories = Vec::new();
    let mut skipped = Vec::new();
    for r in results {
        match r? {
            Ok(t) => trajectories.push(t),
            Err(s) => skipped.push(s),
        }
    }
    Ok((trajectories, skipped))
}

/// One line of a trajectory file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// Values of the integer variables, in index order.
    pub x_t: Vec<f64>,
    /// Variable indices unassigned by the expert.
    pub a_t: Vec<usize>,
    pub objective_t: f64,
    pub objective_next: f64,
    pub eta: usize,
    pub status: MipStatus,
    pub stalled: bool,
}

impl Trajectory {
    pub fn records(&self, integer_indices: &[usize]) -> Vec<StepRecord> {
        self.steps
            .iter()
            .enumerate()
            .map(|(t, s)| StepRecord {
                step: t,
                x_t: s.x_t.restrict(integer_indices),
                a_t: s.action.clone(),
                objective_t: s.objective_t,
                objective_next: s.objective_next,
                eta: s.eta,
                status: s.status,
                stalled: s.stalled,
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEntry {
    pub instance: String,
    /// Instance file, relative to the manifest's `instance_root`.
    pub instance_file: String,
    /// Trajectory file, relative to the manifest's directory.
    pub trajectory_file: String,
    pub initial_source: InitialSource,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryManifest {
    pub schema_version: u32,
    pub instance_root: String,
    pub config: ExpertConfig,
    pub entries: Vec<TrajectoryEntry>,
    pub skipped: Vec<(String, String)>,
}

/// Writes `<dir>/trajectories/<instance>.jsonl` for each trajectory and
/// returns the manifest (also written to `<dir>/manifest.json`). Each item is
/// a trajectory, its instance's integer indices, and the instance file
/// relative to `instance_root`.
pub fn write_trajectories(
    dir: &Path,
    instance_root: &str,
    items: &[(&Trajectory, &[usize], &str)],
    skipped: Vec<(String, String)>,
    cfg: &ExpertConfig,
) -> Result<TrajectoryManifest> {
    let mut entries = Vec::with_capacity(items.len());
    for &(traj, int_idx, instance_file) in items {
        let rel = format!("trajectories/{}.jsonl", traj.instance_id);
        write_jsonl(&dir.join(&rel), &traj.records(int_idx))?;
        entries.push(TrajectoryEntry {
            instance: traj.instance_id.clone(),
            instance_file: instance_file.to_string(),
            trajectory_file: rel,
            initial_source: traj.initial_source,
            steps: traj.steps.len(),
        });
    }
    let manifest = TrajectoryManifest {
        schema_version: TRAJECTORY_SCHEMA_VERSION,
        instance_root: instance_root.to_string(),
        config: cfg.clone(),
        entries,
        skipped,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

pub fn read_trajectory_manifest(dir: &Path) -> Result<TrajectoryManifest> {
    let m: TrajectoryManifest = crate::io::read_json(&dir.join("manifest.json"))?;
    if m.schema_version != TRAJECTORY_SCHEMA_VERSION {
        return Err(Error::InvalidParameter(format!(
            "{}: trajectory schema {} (expected {})",
            dir.display(),
            m.schema_version,
            TRAJECTORY_SCHEMA_VERSION
        )));
    }
    Ok(m)
}

pub fn read_step_records(path: &Path) -> Result<Vec<StepRecord>> {
    read_jsonl(path)
}

/// Imitation samples for one instance: step `t` is encoded with the history
/// window ending at `x_t`, labelled with the expert's action.
pub fn imitation_samples(
    inst: &MipInstance,
    records: &[StepRecord],
    window: usize,
) -> Result<Vec<TrainSample>> {
    let idx = inst.integer_indices();
    let lp = root_relaxation(inst)?;
    let mut history = HistoryWindow::new(window);
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        if r.x_t.len() != idx.len() {
            return Err(Error::Dimension {
                context: "trajectory x_t",
                expected: idx.len(),
                got: r.x_t.len(),
            });
        }
        let mut full = vec![0.0; inst.n_vars()];
        for (&i, &v) in idx.iter().zip(&r.x_t) {
            full[i] = v;
        }
        history.push(Assignment::new(full));
        let mut action = vec![0.0; idx.len()];
        for &a in &r.a_t {
            let pos = idx.binary_search(&a).map_err(|_| {
                Error::InvalidAction(format!("{}: action index {a} is not an integer variable", inst.name()))
            })?;
            action[pos] = 1.0;
        }
        out.push(TrainSample {
            id: format!("{}#{:04}", inst.name(), r.step),
            graph: encode(inst, lp.as_ref(), Some(&history))?,
            integer_indices: idx.to_vec(),
            action,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mip::{Constraint, Variable};

    fn knap() -> MipInstance {
        MipInstance::new(
            "k",
            vec![
                Variable::binary("a", -3.0),
                Variable::binary("b", -4.0),
                Variable::binary("c", -2.0),
                Variable::binary("d", -1.0),
            ],
            vec![Constraint::new("w", vec![(0, 2.0), (1, 3.0), (2, 1.0), (3, 1.0)], 4.0)],
        )
        .unwrap()
    }

    #[test]
    fn optimal_start_is_a_fixed_point() {
        let inst = knap();
        // -3 - 2 - 1 = -6 is optimal (b alone gives -4, b + c gives -6 too).
        let x = Assignment::new(vec![1.0, 0.0, 1.0, 1.0]);
        let step = expert_step(&inst, &x, 2, &SolveBudget::nodes(1_000)).unwrap();
        assert!(step.action.is_empty());
        assert_eq!(step.x_next, x);
        assert!(step.status.is_optimal());
        let t = expert_trajectory(&inst, x, InitialSource::BnbIncumbent, &ExpertConfig::default()).unwrap();
        assert_eq!(t.steps.len(), 1);
    }

    #[test]
    fn action_is_the_diff() {
        let inst = knap();
        let x = Assignment::new(vec![0.0; 4]);
        let step = expert_step(&inst, &x, 1, &SolveBudget::nodes(1_000)).unwrap();
        assert_eq!(step.action, vec![1]);
        assert_eq!(step.objective_next, -4.0);
        assert_eq!(step.action_vector(inst.integer_indices()), vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn eta_schedule() {
        assert_eq!(EtaSchedule::Fraction(0.2).eta(30), 6);
        assert_eq!(EtaSchedule::Fraction(0.2).eta(3), 1);
        assert_eq!(EtaSchedule::Fixed(50).eta(10), 10);
        assert_eq!(EtaSchedule::Fixed(0).eta(10), 1);
    }

    #[test]
    fn infeasible_start_is_rejected() {
        let inst = knap();
        let x = Assignment::new(vec![1.0; 4]);
        assert!(matches!(
            expert_step(&inst, &x, 2, &SolveBudget::nodes(10)),
            Err(Error::Precondition(_))
        ));
    }
}
