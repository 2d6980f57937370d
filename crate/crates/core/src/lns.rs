//! Large neighborhood search episodes.
//!
//! Each step picks a set of integer variables to unassign (by a learned
//! policy, uniformly at random, or by the local-branching expert), solves the
//! sub-MIP warm-started at the current assignment, and adapts the
//! neighborhood size to how the solve went.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bnb::{first_incumbent, solve_mip, MipStatus, SolveBudget};
use crate::diving::{dive, DiveConfig};
use crate::error::{Error, Result};
use crate::eval::primal_gap;
use crate::expert::expert_step;
use crate::graph::{encode, HistoryWindow};
use crate::io::write_jsonl;
use crate::lp::root_relaxation;
use crate::mip::{
    check_feasibility, derive_submip, evaluate_objective, lift_assignment, Assignment,
    MipInstance, FEAS_TOL,
};
use crate::neural::{policy_forward, PolicyParams};

/// Version of the episode JSON-lines layout.
pub const EPISODE_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub epsilon: f64,
    /// Temperature; weights are `(μ + ε)^(1/τ)`.
    pub tau: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            epsilon: 0.01,
            tau: 0.5,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.tau > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sampler needs epsilon > 0 and tau > 0 (got {}, {})",
                self.epsilon, self.tau
            )));
        }
        Ok(())
    }

    pub fn weight(&self, mu: f64) -> f64 {
        (mu + self.epsilon).powf(1.0 / self.tau)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptiveSizeConfig {
    pub initial_fraction: f64,
    pub alpha: f64,
    pub min_fraction: f64,
    pub max_fraction: f64,
}

impl Default for AdaptiveSizeConfig {
    fn default() -> Self {
        AdaptiveSizeConfig {
            initial_fraction: 0.2,
            alpha: 1.5,
            min_fraction: 0.01,
            max_fraction: 0.5,
        }
    }
}

impl AdaptiveSizeConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha > 1.0
            && self.min_fraction > 0.0
            && self.min_fraction <= self.initial_fraction
            && self.initial_fraction <= self.max_fraction
            && self.max_fraction <= 1.0;
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "adaptive size needs alpha > 1 and 0 < min <= initial <= max <= 1: {self:?}"
            )));
        }
        Ok(())
    }

    /// `η = max(1, ⌈f·|I|⌉)`, never above `|I|`.
    pub fn eta(fraction: f64, n_int: usize) -> usize {
        ((fraction * n_int as f64).ceil() as usize).clamp(1, n_int.max(1))
    }
}

/// Grows the fraction after a proven-optimal sub-MIP and shrinks it after a
/// budget-limited one.
pub fn update_fraction(fraction: f64, status: MipStatus, cfg: &AdaptiveSizeConfig) -> f64 {
    let next = match status {
        MipStatus::Optimal => fraction * cfg.alpha,
        MipStatus::FeasibleBudgetExhausted | MipStatus::NoSolutionBudgetExhausted => {
            fraction / cfg.alpha
        }
        MipStatus::Infeasible => fraction,
    };
    next.clamp(cfg.min_fraction, cfg.max_fraction)
}

/// Draws `eta` distinct positions of `mu` one at a time, each with
/// probability proportional to `(μ_i + ε)^(1/τ)` among those not yet drawn.
/// The result is sorted.
pub fn select_neighborhood(
    mu: &[f64],
    eta: usize,
    cfg: &SamplerConfig,
    rng: &mut impl Rng,
) -> Result<Vec<usize>> {
    cfg.validate()?;
    if eta > mu.len() {
        return Err(Error::InvalidParameter(format!(
            "neighborhood size {eta} exceeds {} integer variables",
            mu.len()
        )));
    }
    if let Some(bad) = mu.iter().find(|m| !(0.0..=1.0).contains(*m)) {
        return Err(Error::InvalidParameter(format!("probability {bad} outside [0, 1]")));
    }
    let mut weights: Vec<f64> = mu.iter().map(|&m| cfg.weight(m)).collect();
    let mut picked = Vec::with_capacity(eta);
    for _ in 0..eta {
        let total: f64 = weights.iter().sum();
        let mut r = rng.gen::<f64>() * total;
        let mut choice = None;
        for (i, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            choice = Some(i);
            if r < w {
                break;
            }
            r -= w;
        }
        let i = choice.expect("remaining weight is positive");
        weights[i] = 0.0;
        picked.push(i);
    }
    picked.sort_unstable();
    Ok(picked)
}

/// Uniform sample of `eta` distinct positions out of `n`, sorted.
pub fn random_neighborhood(n: usize, eta: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    if eta > n {
        return Err(Error::InvalidParameter(format!(
            "neighborhood size {eta} exceeds {n} integer variables"
        )));
    }
    let mut v = index::sample(rng, n, eta).into_vec();
    v.sort_unstable();
    Ok(v)
}

/// Re-optimizes the variables in `action` with everything else fixed at
/// `x_t`. The solve is warm-started at `x_t`, so the result is never worse.
pub fn lns_step(
    inst: &MipInstance,
    x_t: &Assignment,
    action: &[usize],
    budget: &SolveBudget,
) -> Result<(Assignment, MipStatus)> {
    if action.is_empty() {
        return Ok((x_t.clone(), MipStatus::Optimal));
    }
    let sub = derive_submip(inst, x_t, action)?;
    let warm = sub.restrict(x_t);
    let res = solve_mip(&sub.instance, budget, Some(&warm))?;
    let y = res.incumbent.ok_or_else(|| {
        Error::Internal(format!("{}: warm-started sub-MIP lost its incumbent", inst.name()))
    })?;
    Ok((lift_assignment(&sub, &y, x_t)?, res.status))
}

#[derive(Clone, Debug)]
pub enum Policy {
    Neural(PolicyParams),
    Random,
    /// Local-branching expert with its own solve budget.
    Expert(SolveBudget),
}

impl Policy {
    pub fn label(&self) -> &'static str {
        match self {
            Policy::Neural(_) => "neural",
            Policy::Random => "random",
            Policy::Expert(_) => "expert",
        }
    }
}

#[derive(Clone, Debug)]
pub enum Init {
    Dive(PolicyParams, DiveConfig),
    BnbIncumbent(SolveBudget),
    /// A given feasible assignment.
    Assignment(Assignment),
}

impl Init {
    pub fn label(&self) -> &'static str {
        match self {
            Init::Dive(..) => "dive",
            Init::BnbIncumbent(_) => "bnb-incumbent",
            Init::Assignment(_) => "given",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    pub sampler: SamplerConfig,
    pub adaptive: AdaptiveSizeConfig,
    /// Budget for each sub-MIP solve.
    pub step_budget: SolveBudget,
    pub max_steps: usize,
    /// Optional wall-clock limit for the whole episode, init included.
    pub time_limit_ms: Option<u64>,
    /// Record elapsed wall time per step. Off, every `elapsed_ms` is 0 and
    /// records are reproducible byte for byte.
    pub record_wall_time: bool,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            sampler: SamplerConfig::default(),
            adaptive: AdaptiveSizeConfig::default(),
            step_budget: SolveBudget::nodes(500),
            max_steps: 20,
            time_limit_ms: None,
            record_wall_time: true,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        self.adaptive.validate()?;
        self.step_budget.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub schema_version: u32,
    pub instance_id: String,
    pub run_seed: u64,
    pub policy: String,
    pub init: String,
    pub best_known: Option<f64>,
    pub config: EpisodeConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Step 0 is the initial assignment.
    pub t: usize,
    pub eta: usize,
    pub fraction: f64,
    /// Unassigned variable indices.
    pub action: Vec<usize>,
    /// Sub-MIP status; absent for step 0.
    pub status: Option<MipStatus>,
    pub objective: f64,
    /// Gap to the best-known objective, when one was given.
    pub primal_gap: Option<f64>,
    /// `-primal_gap`.
    pub reward: Option<f64>,
    pub elapsed_ms: u64,
    pub x: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub header: EpisodeHeader,
    pub steps: Vec<StepRecord>,
}

/// One line of an episode file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EpisodeLine {
    Header(EpisodeHeader),
    Step(StepRecord),
}

impl EpisodeRecord {
    pub fn final_objective(&self) -> f64 {
        self.steps.last().map_or(f64::INFINITY, |s| s.objective)
    }

    pub fn lines(&self) -> Vec<EpisodeLine> {
        std::iter::once(EpisodeLine::Header(self.header.clone()))
            .chain(self.steps.iter().cloned().map(EpisodeLine::Step))
            .collect()
    }

    pub fn from_lines(lines: Vec<EpisodeLine>) -> Result<Self> {
        let mut it = lines.into_iter();
        let header = match it.next() {
            Some(EpisodeLine::Header(h)) => h,
            _ => {
                return Err(Error::InvalidParameter(
                    "episode file does not start with a header line".into(),
                ))
            }
        };
        if header.schema_version != EPISODE_SCHEMA_VERSION {
            return Err(Error::InvalidParameter(format!(
                "episode schema {} (expected {EPISODE_SCHEMA_VERSION})",
                header.schema_version
            )));
        }
        let steps = it
            .map(|l| match l {
                EpisodeLine::Step(s) => Ok(s),
                EpisodeLine::Header(_) => Err(Error::InvalidParameter(
                    "second header line in episode file".into(),
                )),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EpisodeRecord { header, steps })
    }

    /// `<out>/episodes/<instance>/<seed>.jsonl`
    pub fn path(out: &Path, instance: &str, seed: u64) -> PathBuf {
        out.join("episodes").join(instance).join(format!("{seed}.jsonl"))
    }

    pub fn write(&self, out: &Path) -> Result<PathBuf> {
        let path = Self::path(out, &self.header.instance_id, self.header.run_seed);
        write_jsonl(&path, &self.lines())?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_lines(crate::io::read_jsonl(path)?)
    }
}

/// Reads every episode file below `<out>/episodes`, sorted by path.
pub fn read_episodes(out: &Path) -> Result<Vec<EpisodeRecord>> {
    let root = out.join("episodes");
    let mut paths = Vec::new();
    let dirs = std::fs::read_dir(&root).map_err(|e| Error::io(&root, e))?;
    for d in dirs {
        let d = d.map_err(|e| Error::io(&root, e))?.path();
        if d.is_dir() {
            for f in std::fs::read_dir(&d).map_err(|e| Error::io(&d, e))? {
                let f = f.map_err(|e| Error::io(&d, e))?.path();
                if f.extension().is_some_and(|e| e == "jsonl") {
                    paths.push(f);
                }
            }
        }
    }
    paths.sort();
    paths.iter().map(|p| EpisodeRecord::read(p)).collect()
}

fn resolve_init(inst: &MipInstance, init: &Init) -> Result<Assignment> {
    let x = match init {
        Init::Assignment(x) => x.clone(),
        Init::BnbIncumbent(budget) => {
            let res = first_incumbent(inst, budget)?;
            res.incumbent.ok_or_else(|| {
                Error::NoInitialAssignment(format!(
                    "{}: first-incumbent search ended with {:?}",
                    inst.name(),
                    res.status
                ))
            })?
        }
        Init::Dive(params, cfg) => dive(inst, params, cfg)?.best,
    };
    let report = check_feasibility(inst, &x, FEAS_TOL)?;
    if !report.is_feasible() {
        return Err(Error::Precondition(format!(
            "{}: initial assignment is infeasible (max violation {:.3e})",
            inst.name(),
            report.max_violation()
        )));
    }
    Ok(x)
}

/// Runs one episode. Gaps and rewards are filled in when `best_known` is
/// given.
pub fn run_episode(
    inst: &MipInstance,
    policy: &Policy,
    init: &Init,
    cfg: &EpisodeConfig,
    seed: u64,
    best_known: Option<f64>,
) -> Result<EpisodeRecord> {
    cfg.validate()?;
    let start = Instant::now();
    let x0 = resolve_init(inst, init)?;
    episode_from(inst, policy, init.label(), x0, start, cfg, seed, best_known)
}

#[allow(clippy::too_many_arguments)]
fn episode_from(
    inst: &MipInstance,
    policy: &Policy,
    init_label: &str,
    x0: Assignment,
    start: Instant,
    cfg: &EpisodeConfig,
    seed: u64,
    best_known: Option<f64>,
) -> Result<EpisodeRecord> {
    let int_idx = inst.integer_indices();
    let n_int = int_idx.len();
    if let Policy::Neural(p) = policy {
        if p.window == 0 {
            return Err(Error::InvalidParameter(
                "neighborhood policy must be a history-window model".into(),
            ));
        }
    }
    let lp = match policy {
        Policy::Neural(_) => root_relaxation(inst)?,
        _ => None,
    };
    let window = match policy {
        Policy::Neural(p) => p.window,
        _ => 0,
    };
    let mut history = HistoryWindow::new(window);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let elapsed = |start: &Instant| {
        if cfg.record_wall_time {
            start.elapsed().as_millis() as u64
        } else {
            0
        }
    };
    let gap_of = |obj: f64| best_known.map(|b| primal_gap(Some(obj), b));

    let mut fraction = cfg.adaptive.initial_fraction;
    let mut x = x0;
    let mut objective = evaluate_objective(inst, &x)?;
    let g0 = gap_of(objective);
    let mut steps = vec![StepRecord {
        t: 0,
        eta: AdaptiveSizeConfig::eta(fraction, n_int),
        fraction,
        action: Vec::new(),
        status: None,
        objective,
        primal_gap: g0,
        reward: g0.map(|g| -g),
        elapsed_ms: elapsed(&start),
        x: x.values().to_vec(),
    }];

    for t in 1..=cfg.max_steps {
        if n_int == 0 {
            break;
        }
        if let Some(limit) = cfg.time_limit_ms {
            if start.elapsed().as_millis() as u64 >= limit {
                break;
            }
        }
        let eta = AdaptiveSizeConfig::eta(fraction, n_int);
        let action: Vec<usize> = match policy {
            Policy::Random => random_neighborhood(n_int, eta, &mut rng)?
                .into_iter()
                .map(|p| int_idx[p])
                .collect(),
            Policy::Neural(params) => {
                history.push(x.clone());
                let graph = encode(inst, lp.as_ref(), Some(&history))?;
                let out = policy_forward(params, &graph, int_idx)?;
                select_neighborhood(&out.mu, eta, &cfg.sampler, &mut rng)?
                    .into_iter()
                    .map(|p| int_idx[p])
                    .collect()
            }
            Policy::Expert(budget) => expert_step(inst, &x, eta, budget)?.action,
        };
        let (next, status) = lns_step(inst, &x, &action, &cfg.step_budget)?;
        let next_obj = evaluate_objective(inst, &next)?;
        if next_obj > objective + 1e-9 {
            return Err(Error::Internal(format!(
                "{}: LNS step {t} increased the objective",
                inst.name()
            )));
        }
        x = next;
        objective = next_obj;
        let covers_all = action.len() == n_int;
        let g = gap_of(objective);
        steps.push(StepRecord {
            t,
            eta,
            fraction,
            action,
            status: Some(status),
            objective,
            primal_gap: g,
            reward: g.map(|g| -g),
            elapsed_ms: elapsed(&start),
            x: x.values().to_vec(),
        });
        fraction = update_fraction(fraction, status, &cfg.adaptive);
        if covers_all && status.is_optimal() {
            break;
        }
    }

    Ok(EpisodeRecord {
        header: EpisodeHeader {
            schema_version: EPISODE_SCHEMA_VERSION,
            instance_id: inst.name().to_string(),
            run_seed: seed,
            policy: policy.label().to_string(),
            init: init_label.to_string(),
            best_known,
            config: cfg.clone(),
        },
        steps,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregatePoint {
    pub t: usize,
    pub objective: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParallelOutcome {
    pub runs: Vec<EpisodeRecord>,
    /// Best objective over all runs after each step count.
    pub aggregate: Vec<AggregatePoint>,
}

/// Objective after `t` steps; a run that stopped early keeps its last value.
pub fn objective_at(record: &EpisodeRecord, t: usize) -> f64 {
    record
        .steps
        .iter()
        .take_while(|s| s.t <= t)
        .last()
        .map_or(f64::INFINITY, |s| s.objective)
}

pub fn aggregate_runs(runs: &[EpisodeRecord]) -> Vec<AggregatePoint> {
    let len = runs.iter().map(|r| r.steps.last().map_or(0, |s| s.t)).max().unwrap_or(0);
    (0..=len)
        .map(|t| AggregatePoint {
            t,
            objective: runs
                .iter()
                .map(|r| objective_at(r, t))
                .fold(f64::INFINITY, f64::min),
        })
        .collect()
}

/// Runs `n_runs` independent episodes with seeds `base_seed + k`. With a
/// diving init, the diving samples are dealt round-robin to the runs and each
/// run starts from the best completion in its share.
pub fn run_parallel(
    inst: &MipInstance,
    n_runs: usize,
    base_seed: u64,
    policy: &Policy,
    init: &Init,
    cfg: &EpisodeConfig,
    best_known: Option<f64>,
) -> Result<ParallelOutcome> {
    if n_runs == 0 {
        return Err(Error::InvalidParameter("n_runs must be at least 1".into()));
    }
    cfg.validate()?;
    let start = Instant::now();
    let starts: Vec<Result<Assignment>> = match init {
        Init::Dive(params, dcfg) => {
            let out = dive(inst, params, dcfg)?;
            (0..n_runs)
                .map(|k| {
                    let mut best: Option<(f64, &Assignment)> = None;
                    for s in out.samples.iter().skip(k).step_by(n_runs) {
                        if let (Some(obj), Some(x)) = (s.objective, s.completed.as_ref()) {
                            if best.map_or(true, |(b, _)| obj < b) {
                                best = Some((obj, x));
                            }
                        }
                    }
                    Ok(best.map_or_else(|| out.best.clone(), |(_, x)| x.clone()))
                })
                .collect()
        }
        other => {
            let x = resolve_init(inst, other)?;
            (0..n_runs).map(|_| Ok(x.clone())).collect()
        }
    };
    let runs: Vec<Result<EpisodeRecord>> = starts
        .into_par_iter()
        .enumerate()
        .map(|(k, x0)| {
            episode_from(
                inst,
                policy,
                init.label(),
                x0?,
                start,
                cfg,
                base_seed + k as u64,
                best_known,
            )
        })
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let aggregate = aggregate_runs(&runs);
    Ok(ParallelOutcome { runs, aggregate })
}
