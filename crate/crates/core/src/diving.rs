//! Neural diving: sample partial assignments from a Bernoulli model, keep the
//! most confident values, and let branch-and-bound complete the rest.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bnb::{solve_mip, SolveBudget};
use crate::error::{Error, Result};
use crate::graph::encode;
use crate::lp::{default_iteration_limit, root_relaxation, solve_lp_with_bounds, LpStatus};
use crate::mip::{
    derive_partial_submip, evaluate_objective, is_feasible, lift_assignment, Assignment,
    MipInstance, FEAS_TOL,
};
use crate::neural::{policy_forward, train, PolicyParams, TrainConfig, TrainOutcome, TrainSample};

/// `f̂(x_I)`: the LP optimum over the continuous variables once the integer
/// variables are fixed to `x_int` (given in `integer_indices` order), or
/// `+∞` when that LP is infeasible.
pub fn diving_energy(inst: &MipInstance, x_int: &[f64]) -> Result<f64> {
    let idx = inst.integer_indices();
    if x_int.len() != idx.len() {
        return Err(Error::Dimension {
            context: "integer assignment",
            expected: idx.len(),
            got: x_int.len(),
        });
    }
    let mut lb: Vec<f64> = inst.variables().iter().map(|v| v.lb).collect();
    let mut ub: Vec<f64> = inst.variables().iter().map(|v| v.ub).collect();
    for (&i, &v) in idx.iter().zip(x_int) {
        if (v - v.round()).abs() > FEAS_TOL {
            return Err(Error::Precondition(format!(
                "value {v} for integer variable {i} is fractional"
            )));
        }
        lb[i] = v.round();
        ub[i] = v.round();
    }
    let res = solve_lp_with_bounds(inst, &lb, &ub, default_iteration_limit(inst))?;
    Ok(match res.status {
        LpStatus::Optimal => res.objective.expect("optimal LP has an objective"),
        LpStatus::Infeasible => f64::INFINITY,
        LpStatus::Unbounded => f64::NEG_INFINITY,
        LpStatus::IterationLimit => {
            log::warn!(
                "{}: LP completion hit the iteration limit, energy treated as +inf",
                inst.name()
            );
            f64::INFINITY
        }
    })
}

/// Labelled diving examples for one instance: each target's integer part is
/// one sample. Targets must be feasible.
pub fn diving_samples(inst: &MipInstance, targets: &[Assignment]) -> Result<Vec<TrainSample>> {
    let lp = root_relaxation(inst)?;
    let graph = encode(inst, lp.as_ref(), None)?;
    targets
        .iter()
        .enumerate()
        .map(|(k, x)| {
            if !is_feasible(inst, x) {
                return Err(Error::Precondition(format!(
                    "diving target {k} for {} is infeasible",
                    inst.name()
                )));
            }
            Ok(TrainSample {
                id: format!("{}#{k:03}", inst.name()),
                graph: graph.clone(),
                integer_indices: inst.integer_indices().to_vec(),
                action: x.restrict(inst.integer_indices()),
            })
        })
        .collect()
}

/// Trains a diving model (no history features) by maximum likelihood of the
/// target assignments.
pub fn train_diving(
    train_set: &[(MipInstance, Vec<Assignment>)],
    valid_set: &[(MipInstance, Vec<Assignment>)],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let build = |set: &[(MipInstance, Vec<Assignment>)]| -> Result<Vec<TrainSample>> {
        let parts: Vec<Result<Vec<TrainSample>>> = set
            .par_iter()
            .map(|(inst, targets)| diving_samples(inst, targets))
            .collect();
        let mut out = Vec::new();
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    };
    let mut config = config.clone();
    config.policy.window = 0;
    train(&build(train_set)?, &build(valid_set)?, &config)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivingSample {
    /// Variable index to fixed value.
    pub partial: BTreeMap<usize, u8>,
    /// Variable index to the model probability of its fixed value.
    pub confidence: BTreeMap<usize, f64>,
    pub completed: Option<Assignment>,
    pub objective: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiveConfig {
    pub n_samples: usize,
    /// Fraction of integer variables fixed per sample.
    pub coverage: f64,
    /// Budget for each sub-MIP completion, and for the fallback solve.
    pub budget: SolveBudget,
    pub seed: u64,
}

impl Default for DiveConfig {
    fn default() -> Self {
        DiveConfig {
            n_samples: 4,
            coverage: 0.5,
            budget: SolveBudget::nodes(2_000),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiveOutcome {
    pub best: Assignment,
    pub objective: f64,
    /// Index of the sample that produced `best`, or `None` for the fallback.
    pub best_sample: Option<usize>,
    pub samples: Vec<DivingSample>,
}

/// Probability per integer variable (in `integer_indices` order).
pub fn diving_probabilities(inst: &MipInstance, params: &PolicyParams) -> Result<Vec<f64>> {
    if params.window != 0 {
        return Err(Error::InvalidParameter(format!(
            "diving needs a model without history features (window {})",
            params.window
        )));
    }
    let lp = root_relaxation(inst)?;
    let graph = encode(inst, lp.as_ref(), None)?;
    Ok(policy_forward(params, &graph, inst.integer_indices())?.mu)
}

/// Draws one sample. Sample `k` always uses stream `k` of the seed, so a run
/// with more samples repeats the samples of a run with fewer.
fn draw_partial(
    inst: &MipInstance,
    mu: &[f64],
    keep: usize,
    seed: u64,
    k: usize,
) -> (BTreeMap<usize, u8>, BTreeMap<usize, f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    let idx = inst.integer_indices();
    let mut draws: Vec<(usize, u8, f64)> = idx
        .iter()
        .zip(mu)
        .map(|(&i, &p)| {
            let v = rng.gen::<f64>() < p;
            (i, v as u8, if v { p } else { 1.0 - p })
        })
        .collect();
    draws.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
    draws.truncate(keep);
    let partial = draws.iter().map(|&(i, v, _)| (i, v)).collect();
    let confidence = draws.iter().map(|&(i, _, c)| (i, c)).collect();
    (partial, confidence)
}

fn complete(
    inst: &MipInstance,
    partial: &BTreeMap<usize, u8>,
    budget: &SolveBudget,
) -> Result<Option<(Assignment, f64)>> {
    let fixed: Vec<(usize, f64)> = partial.iter().map(|(&i, &v)| (i, v as f64)).collect();
    let Some(sub) = derive_partial_submip(inst, &fixed)? else {
        return Ok(None);
    };
    let res = solve_mip(&sub.instance, budget, None)?;
    let Some(y) = res.incumbent else {
        return Ok(None);
    };
    let mut parent = vec![0.0; inst.n_vars()];
    for &(i, v) in &fixed {
        parent[i] = v;
    }
    let x = lift_assignment(&sub, &y, &Assignment::new(parent))?;
    if !is_feasible(inst, &x) {
        return Err(Error::Internal(format!(
            "{}: lifted diving completion is infeasible",
            inst.name()
        )));
    }
    let obj = evaluate_objective(inst, &x)?;
    Ok(Some((x, obj)))
}

/// Runs neural diving and returns the best completed assignment. If no sample
/// completes, the full instance is solved with the same budget instead.
pub fn dive(inst: &MipInstance, params: &PolicyParams, config: &DiveConfig) -> Result<DiveOutcome> {
    if config.n_samples == 0 {
        return Err(Error::InvalidParameter("n_samples must be positive".into()));
    }
    if !(0.0..=1.0).contains(&config.coverage) {
        return Err(Error::InvalidParameter(format!(
            "coverage {} outside [0, 1]",
            config.coverage
        )));
    }
    config.budget.validate()?;
    let mu = diving_probabilities(inst, params)?;
    let keep = (config.coverage * mu.len() as f64).ceil() as usize;
    // Nothing is fixed, so every sample would be the same full solve.
    let n_samples = if keep == 0 { 1 } else { config.n_samples };

    let results: Vec<Result<DivingSample>> = (0..n_samples)
        .into_par_iter()
        .map(|k| {
            let (partial, confidence) = draw_partial(inst, &mu, keep, config.seed, k);
            let done = complete(inst, &partial, &config.budget)?;
            Ok(DivingSample {
                partial,
                confidence,
                objective: done.as_ref().map(|d| d.1),
                completed: done.map(|d| d.0),
            })
        })
        .collect();
    let samples = results.into_iter().collect::<Result<Vec<_>>>()?;

    let mut best: Option<(usize, f64)> = None;
    for (k, s) in samples.iter().enumerate() {
        if let Some(obj) = s.objective {
            if best.map_or(true, |(_, b)| obj < b) {
                best = Some((k, obj));
            }
        }
    }
    if let Some((k, obj)) = best {
        return Ok(DiveOutcome {
            best: samples[k].completed.clone().expect("objective implies completion"),
            objective: obj,
            best_sample: Some(k),
            samples,
        });
    }

    log::info!("{}: no diving sample completed, solving the full instance", inst.name());
    let res = solve_mip(inst, &config.budget, None)?;
    match (res.incumbent, res.objective) {
        (Some(x), Some(obj)) => Ok(DiveOutcome {
            best: x,
            objective: obj,
            best_sample: None,
            samples,
        }),
        _ => Err(Error::NoInitialAssignment(format!(
            "{}: all {} diving samples failed and the fallback solve found nothing ({:?})",
            inst.name(),
            n_samples,
            res.status
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mip::{Constraint, Variable};
    use crate::neural::PolicyConfig;

    fn knap() -> MipInstance {
        MipInstance::new(
            "k",
            vec![
                Variable::binary("a", -3.0),
                Variable::binary("b", -4.0),
                Variable::binary("c", -2.0),
            ],
            vec![Constraint::new("w", vec![(0, 2.0), (1, 3.0), (2, 1.0)], 4.0)],
        )
        .unwrap()
    }

    fn diving_params() -> PolicyParams {
        PolicyParams::init(&PolicyConfig {
            gcn_layers: 1,
            embed: 4,
            hidden: 4,
            window: 0,
            seed: 3,
        })
        .unwrap()
    }

    #[test]
    fn energy_of_pure_integer_point() {
        let inst = knap();
        assert_eq!(diving_energy(&inst, &[1.0, 0.0, 1.0]).unwrap(), -5.0);
        assert_eq!(diving_energy(&inst, &[1.0, 1.0, 0.0]).unwrap(), f64::INFINITY);
        assert!(diving_energy(&inst, &[1.0]).is_err());
    }

    #[test]
    fn zero_coverage_is_a_single_full_solve() {
        let inst = knap();
        let out = dive(
            &inst,
            &diving_params(),
            &DiveConfig {
                n_samples: 5,
                coverage: 0.0,
                ..DiveConfig::default()
            },
        )
        .unwrap();
        assert_eq!(out.samples.len(), 1);
        assert!(out.samples[0].partial.is_empty());
        assert_eq!(out.objective, -6.0);
    }

    #[test]
    fn history_model_is_rejected() {
        let p = PolicyParams::init(&PolicyConfig {
            embed: 4,
            hidden: 4,
            ..PolicyConfig::default()
        })
        .unwrap();
        assert!(matches!(
            dive(&knap(), &p, &DiveConfig::default()),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn full_coverage_still_returns_feasible_point() {
        let inst = knap();
        let out = dive(
            &inst,
            &diving_params(),
            &DiveConfig {
                n_samples: 6,
                coverage: 1.0,
                ..DiveConfig::default()
            },
        )
        .unwrap();
        assert!(is_feasible(&inst, &out.best));
        for s in &out.samples {
            assert_eq!(s.partial.len(), 3);
            assert!(s.confidence.values().all(|&c| c >= 0.0 && c <= 1.0));
        }
    }
}
