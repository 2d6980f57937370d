//! File-based pipeline stages behind the command-line subcommands.
//!
//! Layout under the configured output directory:
//!
//! ```text
//! data/                     instances per split + manifest.json
//! best_known/               table.json, solutions/<instance>.json
//! diving/                   policy.json, train_log.csv
//! expert/{train,valid}/     trajectory manifest + trajectories/*.jsonl
//! nns/                      policy.json, train_log.csv
//! runs/<label>/episodes/    one JSON-lines file per instance and seed
//! eval/                     curves, plots, summary.json
//! ```
//!
//! Every stage writes `config.resolved.json` and `versions.json` next to its
//! outputs and never modifies the outputs of earlier stages.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{InitChoice, PolicyChoice, RunConfig};
use crate::diving::train_diving as fit_diving;
use crate::error::{Error, Result};
use crate::eval::{
    average_gap_curve, compute_best_known, merge_runs, survival_curve, write_gap_csv,
    write_survival_csv, write_svg, Axis, BestKnownTable, Grid, Series,
};
use crate::expert::{
    generate_trajectories, imitation_samples, read_step_records, read_trajectory_manifest,
    write_trajectories, InitialPolicy, TrajectoryManifest, TRAJECTORY_SCHEMA_VERSION,
};
use crate::generate::{write_dataset, DatasetManifest, Split};
use crate::graph::FEATURE_VERSION;
use crate::io::{read_json, write_json};
use crate::lns::{read_episodes, run_parallel, EpisodeRecord, Init, Policy, EPISODE_SCHEMA_VERSION};
use crate::mip::{read_instance, Assignment, MipInstance};
use crate::neural::{
    load_checkpoint, save_checkpoint, train, write_log_csv, PolicyParams, TrainOutcome,
    TrainSample, CHECKPOINT_FORMAT,
};

#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }
    pub fn data(&self) -> PathBuf {
        self.root.join("data")
    }
    pub fn best_known(&self) -> PathBuf {
        self.root.join("best_known")
    }
    pub fn best_known_table(&self) -> PathBuf {
        self.best_known().join("table.json")
    }
    pub fn diving(&self) -> PathBuf {
        self.root.join("diving")
    }
    pub fn expert(&self, split: Split) -> PathBuf {
        self.root.join("expert").join(split.dir_name())
    }
    pub fn nns(&self) -> PathBuf {
        self.root.join("nns")
    }
    pub fn runs(&self) -> PathBuf {
        self.root.join("runs")
    }
    pub fn run(&self, label: &str) -> PathBuf {
        self.runs().join(label)
    }
    pub fn eval(&self) -> PathBuf {
        self.root.join("eval")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Versions {
    pub package: String,
    pub feature_version: u32,
    pub trajectory_schema_version: u32,
    pub episode_schema_version: u32,
    pub checkpoint_format: String,
}

pub fn versions() -> Versions {
    Versions {
        package: env!("CARGO_PKG_VERSION").to_string(),
        feature_version: FEATURE_VERSION,
        trajectory_schema_version: TRAJECTORY_SCHEMA_VERSION,
        episode_schema_version: EPISODE_SCHEMA_VERSION,
        checkpoint_format: CHECKPOINT_FORMAT.to_string(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub command: String,
    /// Subcommand arguments beyond the config file.
    pub args: BTreeMap<String, String>,
    pub config: RunConfig,
}

fn write_metadata(dir: &Path, command: &str, args: BTreeMap<String, String>, cfg: &RunConfig) -> Result<()> {
    write_json(
        &dir.join("config.resolved.json"),
        &ResolvedConfig {
            command: command.to_string(),
            args,
            config: cfg.clone(),
        },
    )?;
    write_json(&dir.join("versions.json"), &versions())
}

fn prepare(cfg: &RunConfig) -> Result<(RunConfig, Layout)> {
    let cfg = cfg.seeded();
    cfg.validate()?;
    let layout = Layout::new(&cfg.out);
    Ok((cfg, layout))
}

fn load_split(layout: &Layout, split: Split) -> Result<Vec<MipInstance>> {
    let dir = layout.data();
    DatasetManifest::read(&dir)?.load_split(&dir, split)
}

fn instance_files(layout: &Layout, split: Split) -> Result<Vec<(MipInstance, String)>> {
    let dir = layout.data();
    let m = DatasetManifest::read(&dir)?;
    let files = m.files.get(&split).cloned().unwrap_or_default();
    files
        .into_iter()
        .map(|f| Ok((read_instance(dir.join(&f))?, f)))
        .collect()
}

pub fn read_best_known(layout: &Layout) -> Result<BestKnownTable> {
    read_json(&layout.best_known_table())
}

/// `gen`: writes the instance dataset.
pub fn gen(cfg: &RunConfig) -> Result<DatasetManifest> {
    let (cfg, layout) = prepare(cfg)?;
    let dir = layout.data();
    let manifest = write_dataset(&cfg.generator, &dir)?;
    write_metadata(&dir, "gen", BTreeMap::new(), &cfg)?;
    info!(
        "generated {} instances into {}",
        manifest.files.values().map(Vec::len).sum::<usize>(),
        dir.display()
    );
    Ok(manifest)
}

/// `best-known`: B&B over every split; keeps the incumbents as solutions.
pub fn best_known(cfg: &RunConfig) -> Result<BestKnownTable> {
    let (cfg, layout) = prepare(cfg)?;
    let mut all = Vec::new();
    for split in Split::ALL {
        all.extend(load_split(&layout, split)?);
    }
    let (table, solutions) = compute_best_known(&all, &cfg.best_known_budget)?;
    let dir = layout.best_known();
    for (name, x) in &solutions {
        write_json(&dir.join("solutions").join(format!("{name}.json")), x)?;
    }
    write_json(&layout.best_known_table(), &table)?;
    write_metadata(&dir, "best-known", BTreeMap::new(), &cfg)?;
    info!(
        "best-known values for {} instances ({} excluded)",
        table.entries.len(),
        table.excluded.len()
    );
    Ok(table)
}

fn solutions_for(layout: &Layout, split: Split) -> Result<Vec<(MipInstance, Vec<Assignment>)>> {
    load_split(layout, split)?
        .into_iter()
        .filter_map(|inst| {
            let p = layout
                .best_known()
                .join("solutions")
                .join(format!("{}.json", inst.name()));
            p.exists().then(|| Ok((read_json::<Assignment>(&p)?, inst)))
        })
        .map(|r: Result<(Assignment, MipInstance)>| r.map(|(x, i)| (i, vec![x])))
        .collect()
}

fn save_training(dir: &Path, outcome: &TrainOutcome) -> Result<()> {
    save_checkpoint(&dir.join("policy.json"), &outcome.params)?;
    write_log_csv(&dir.join("train_log.csv"), &outcome.log)
}

/// `train-diving`: fits the diving model to the best-known solutions.
pub fn train_diving(cfg: &RunConfig) -> Result<TrainOutcome> {
    let (cfg, layout) = prepare(cfg)?;
    let train_set = solutions_for(&layout, Split::Train)?;
    if train_set.is_empty() {
        return Err(Error::Precondition(format!(
            "no best-known solutions for the training split under {}",
            layout.best_known().display()
        )));
    }
    let valid_set = solutions_for(&layout, Split::Valid)?;
    let outcome = fit_diving(&train_set, &valid_set, &cfg.diving)?;
    let dir = layout.diving();
    save_training(&dir, &outcome)?;
    write_metadata(&dir, "train-diving", BTreeMap::new(), &cfg)?;
    Ok(outcome)
}

fn diving_model(layout: &Layout) -> Result<PolicyParams> {
    load_checkpoint(&layout.diving().join("policy.json"))
}

/// `expert-data`: local-branching trajectories for the train and valid splits.
pub fn expert_data(cfg: &RunConfig) -> Result<Vec<TrajectoryManifest>> {
    let (cfg, layout) = prepare(cfg)?;
    let init = match cfg.expert_data.init {
        InitChoice::Bnb => InitialPolicy::BnbIncumbent,
        InitChoice::Dive => InitialPolicy::Dive(diving_model(&layout)?, cfg.solve.dive),
    };
    let mut manifests = Vec::new();
    for split in [Split::Train, Split::Valid] {
        let items = instance_files(&layout, split)?;
        let insts: Vec<MipInstance> = items.iter().map(|(i, _)| i.clone()).collect();
        let (trajs, skipped) = generate_trajectories(&insts, &cfg.expert_data.expert, &init)?;
        let refs: Vec<(&_, &[usize], &str)> = trajs
            .iter()
            .map(|t| {
                let (inst, file) = items
                    .iter()
                    .find(|(i, _)| i.name() == t.instance_id)
                    .expect("trajectory comes from a loaded instance");
                (t, inst.integer_indices(), file.as_str())
            })
            .collect();
        let dir = layout.expert(split);
        // expert/<split>/ sits two levels below the output root.
        manifests.push(write_trajectories(&dir, "../../data", &refs, skipped, &cfg.expert_data.expert)?);
        write_metadata(&dir, "expert-data", BTreeMap::new(), &cfg)?;
    }
    info!(
        "expert trajectories: {} train, {} valid",
        manifests[0].entries.len(),
        manifests[1].entries.len()
    );
    Ok(manifests)
}

/// Imitation samples for every trajectory in an expert directory.
pub fn load_imitation_samples(dir: &Path, window: usize) -> Result<Vec<TrainSample>> {
    let m = read_trajectory_manifest(dir)?;
    let root = dir.join(&m.instance_root);
    let parts: Vec<Result<Vec<TrainSample>>> = m
        .entries
        .par_iter()
        .map(|e| {
            let inst = read_instance(root.join(&e.instance_file))?;
            let records = read_step_records(&dir.join(&e.trajectory_file))?;
            imitation_samples(&inst, &records, window)
        })
        .collect();
    let mut out = Vec::new();
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// `train-nns`: imitation learning of the neighborhood policy.
pub fn train_nns(cfg: &RunConfig) -> Result<TrainOutcome> {
    let (cfg, layout) = prepare(cfg)?;
    let window = cfg.nns.policy.window;
    let train_samples = load_imitation_samples(&layout.expert(Split::Train), window)?;
    if train_samples.is_empty() {
        return Err(Error::Precondition(format!(
            "no expert steps under {}",
            layout.expert(Split::Train).display()
        )));
    }
    let valid_dir = layout.expert(Split::Valid);
    let valid_samples = if valid_dir.join("manifest.json").exists() {
        load_imitation_samples(&valid_dir, window)?
    } else {
        Vec::new()
    };
    info!(
        "training on {} expert steps ({} validation)",
        train_samples.len(),
        valid_samples.len()
    );
    let outcome = train(&train_samples, &valid_samples, &cfg.nns)?;
    let dir = layout.nns();
    save_training(&dir, &outcome)?;
    write_metadata(&dir, "train-nns", BTreeMap::new(), &cfg)?;
    Ok(outcome)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveArgs {
    pub policy: PolicyChoice,
    pub init: InitChoice,
    pub split: Split,
    /// Output label under `runs/`; defaults to `<policy>-<init>`.
    pub label: Option<String>,
}

impl SolveArgs {
    pub fn label(&self) -> String {
        self.label
            .clone()
            .unwrap_or_else(|| format!("{}-{}", self.policy.label(), self.init.label()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub label: String,
    pub episodes: usize,
    pub instances: usize,
    /// Instances without an initial assignment, with the reason.
    pub skipped: Vec<(String, String)>,
}

/// `solve`: runs LNS episodes on one split.
pub fn solve(cfg: &RunConfig, args: &SolveArgs) -> Result<SolveSummary> {
    let (cfg, layout) = prepare(cfg)?;
    let insts = load_split(&layout, args.split)?;
    let table = if layout.best_known_table().exists() {
        Some(read_best_known(&layout)?)
    } else {
        None
    };
    let policy = match args.policy {
        PolicyChoice::Random => Policy::Random,
        PolicyChoice::Neural => Policy::Neural(load_checkpoint(&layout.nns().join("policy.json"))?),
        PolicyChoice::Expert => Policy::Expert(cfg.solve.expert_budget),
    };
    let init = match args.init {
        InitChoice::Bnb => Init::BnbIncumbent(cfg.solve.init_budget),
        InitChoice::Dive => Init::Dive(diving_model(&layout)?, cfg.solve.dive),
    };
    let label = args.label();
    let dir = layout.run(&label);
    let outcomes: Vec<Result<Vec<EpisodeRecord>>> = insts
        .par_iter()
        .map(|inst| {
            let best = table.as_ref().and_then(|t| t.get(inst.name()).ok());
            let out = run_parallel(inst, cfg.solve.n_runs, cfg.seed, &policy, &init, &cfg.solve.episode, best)?;
            Ok(out.runs)
        })
        .collect();
    let mut episodes = 0;
    let mut skipped = Vec::new();
    for (inst, o) in insts.iter().zip(outcomes) {
        match o {
            Ok(runs) => {
                for rec in runs {
                    rec.write(&dir)?;
                    episodes += 1;
                }
            }
            Err(e @ Error::NoInitialAssignment(_)) => {
                log::warn!("skipping {}: {e}", inst.name());
                skipped.push((inst.name().to_string(), e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    let mut a = BTreeMap::new();
    a.insert("policy".into(), args.policy.label().into());
    a.insert("init".into(), args.init.label().into());
    a.insert("split".into(), args.split.dir_name().into());
    a.insert("label".into(), label.clone());
    write_metadata(&dir, "solve", a, &cfg)?;
    info!("{label}: {episodes} episodes on {} instances", insts.len());
    Ok(SolveSummary {
        label,
        episodes,
        instances: insts.len(),
        skipped,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub label: String,
    pub instances: usize,
    pub episodes: usize,
    pub final_mean_gap: f64,
    /// Final survival fraction per threshold.
    pub final_survival: Vec<(f64, f64)>,
    /// True when every survival curve is nondecreasing.
    pub survival_monotone: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub axis: Axis,
    /// Instances whose best-known value a run improved; their older gaps
    /// are stale.
    pub refreshed: Vec<String>,
    pub methods: Vec<MethodSummary>,
}

fn run_labels(layout: &Layout) -> Result<Vec<String>> {
    let runs = layout.runs();
    let mut labels = Vec::new();
    for e in std::fs::read_dir(&runs).map_err(|e| Error::io(&runs, e))? {
        let p = e.map_err(|e| Error::io(&runs, e))?.path();
        if p.join("episodes").is_dir() {
            labels.push(p.file_name().expect("dir entry").to_string_lossy().into_owned());
        }
    }
    labels.sort();
    Ok(labels)
}

/// `evaluate`: curves for the given run labels (all runs when empty),
/// written to `eval/`.
pub fn evaluate(cfg: &RunConfig, labels: &[String]) -> Result<EvalSummary> {
    let layout = Layout::new(&cfg.seeded().out);
    evaluate_into(cfg, labels, &layout.eval())
}

pub fn evaluate_into(cfg: &RunConfig, labels: &[String], out: &Path) -> Result<EvalSummary> {
    let (cfg, layout) = prepare(cfg)?;
    let labels = if labels.is_empty() {
        run_labels(&layout)?
    } else {
        labels.to_vec()
    };
    let mut records: BTreeMap<String, Vec<EpisodeRecord>> = BTreeMap::new();
    for l in &labels {
        records.insert(l.clone(), read_episodes(&layout.run(l))?);
    }
    let mut table = read_best_known(&layout)?;
    let mut refreshed = Vec::new();
    for (l, recs) in &records {
        for id in table.refresh(recs, l) {
            if !refreshed.contains(&id) {
                refreshed.push(id);
            }
        }
    }
    write_json(&out.join("best_known.json"), &table)?;

    let grid = match cfg.eval.axis {
        Axis::Step => {
            let max_t = records
                .values()
                .flatten()
                .flat_map(|r| r.steps.last().map(|s| s.t))
                .max()
                .unwrap_or(0);
            Grid::steps(max_t)
        }
        Axis::Time => Grid::geometric(Axis::Time, 1.0, cfg.eval.time_horizon_ms, cfg.eval.grid_points)?,
    };
    let mut methods = Vec::new();
    let mut gap_series = Vec::new();
    let mut surv_series = Vec::new();
    for (l, recs) in &records {
        let merged = merge_runs(recs);
        let curve = average_gap_curve(&merged, &table, &grid)?;
        let surv: Vec<_> = cfg
            .eval
            .thresholds
            .iter()
            .map(|&th| survival_curve(&merged, &table, th, &grid))
            .collect::<Result<_>>()?;
        let dir = out.join(l);
        write_gap_csv(&dir.join("gap_curve.csv"), &curve)?;
        write_survival_csv(&dir.join("survival.csv"), &surv)?;
        gap_series.push(Series {
            label: l.clone(),
            points: curve.iter().map(|p| (p.x, p.mean_gap)).collect(),
        });
        if let Some(first) = surv.first() {
            surv_series.push(Series {
                label: l.clone(),
                points: first.iter().map(|p| (p.x, p.fraction)).collect(),
            });
        }
        methods.push(MethodSummary {
            label: l.clone(),
            instances: merged.len(),
            episodes: recs.len(),
            final_mean_gap: curve.last().map_or(1.0, |p| p.mean_gap),
            final_survival: surv
                .iter()
                .map(|c| (c[0].threshold, c.last().map_or(0.0, |p| p.fraction)))
                .collect(),
            survival_monotone: surv
                .iter()
                .all(|c| c.windows(2).all(|w| w[1].fraction >= w[0].fraction)),
        });
    }
    let (x_label, log_x) = match cfg.eval.axis {
        Axis::Step => ("step", false),
        Axis::Time => ("ms", true),
    };
    write_svg(&out.join("gap_curve.svg"), "average primal gap", x_label, &gap_series, log_x)?;
    if let Some(th) = cfg.eval.thresholds.first() {
        write_svg(
            &out.join("survival.svg"),
            &format!("solved fraction, gap <= {th}"),
            x_label,
            &surv_series,
            log_x,
        )?;
    }
    let summary = EvalSummary {
        axis: cfg.eval.axis,
        refreshed,
        methods,
    };
    write_json(&out.join("summary.json"), &summary)?;
    let mut a = BTreeMap::new();
    a.insert("labels".into(), labels.join(","));
    write_metadata(out, "evaluate", a, &cfg)?;
    Ok(summary)
}

/// `ablate`: {first incumbent, diving} × {random, neural} on the test split.
pub fn ablate(cfg: &RunConfig) -> Result<EvalSummary> {
    let (cfg, layout) = prepare(cfg)?;
    let mut labels = Vec::new();
    for init in [InitChoice::Bnb, InitChoice::Dive] {
        for policy in [PolicyChoice::Random, PolicyChoice::Neural] {
            let args = SolveArgs {
                policy,
                init,
                split: Split::Test,
                label: Some(format!("ablate-{}-{}", init.label(), policy.label())),
            };
            labels.push(solve(&cfg, &args)?.label);
        }
    }
    evaluate_into(&cfg, &labels, &layout.root.join("ablate"))
}
