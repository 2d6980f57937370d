//! Seeded generators for small binary MIP families, plus dataset splitting
//! and the on-disk dataset layout.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_json, write_json};
use crate::mip::{
    check_feasibility, read_instance, write_instance, Assignment, MipInstance, Row, Sense,
    Variable, FEAS_TOL,
};

const MAX_RETRIES: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    SetCover,
    CombinatorialAuction,
    GeneralizedAssignment,
}

impl Family {
    pub fn slug(self) -> &'static str {
        match self {
            Family::SetCover => "setcover",
            Family::CombinatorialAuction => "cauction",
            Family::GeneralizedAssignment => "gap",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub family: Family,
    /// Number of binary variables (for generalized assignment, rounded down to
    /// a multiple of the agent count).
    pub n_vars: usize,
    /// Number of elements, items or agents, depending on the family.
    pub n_cons: usize,
    /// Probability that a variable appears in a given row.
    pub density: f64,
    pub seed: u64,
    pub count: usize,
    /// (train, valid, test) fractions.
    pub split: (f64, f64, f64),
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            family: Family::SetCover,
            n_vars: 40,
            n_cons: 25,
            density: 0.15,
            seed: 0,
            count: 20,
            split: (0.70, 0.15, 0.15),
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let (a, b, c) = self.split;
        if a < 0.0 || b < 0.0 || c < 0.0 || ((a + b + c) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "split fractions {:?} must be non-negative and sum to 1",
                self.split
            )));
        }
        if self.n_vars < 4 {
            return Err(Error::InvalidParameter("n_vars must be at least 4".into()));
        }
        if self.n_cons < 1 {
            return Err(Error::InvalidParameter("n_cons must be at least 1".into()));
        }
        if self.count < 1 {
            return Err(Error::InvalidParameter("count must be at least 1".into()));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "density {} outside (0, 1]",
                self.density
            )));
        }
        Ok(())
    }

    pub fn instance_name(&self, index: usize) -> String {
        format!("{}-s{}-i{:04}", self.family.slug(), self.seed, index)
    }
}

/// Generates `config.count` feasible instances; instance `i` is seeded with
/// `seed ^ i`.
pub fn generate(config: &GeneratorConfig) -> Result<Vec<MipInstance>> {
    config.validate()?;
    (0..config.count)
        .into_par_iter()
        .map(|i| generate_one(config, i))
        .collect()
}

pub fn generate_one(config: &GeneratorConfig, index: usize) -> Result<MipInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ index as u64);
    let name = config.instance_name(index);
    for _ in 0..MAX_RETRIES {
        let (inst, witness) = match config.family {
            Family::SetCover => set_cover(&mut rng, config, &name)?,
            Family::CombinatorialAuction => auction(&mut rng, config, &name)?,
            Family::GeneralizedAssignment => assignment(&mut rng, config, &name)?,
        };
        if check_feasibility(&inst, &witness, FEAS_TOL)?.is_feasible() {
            return Ok(inst);
        }
    }
    Err(Error::Generation(format!(
        "{name}: no feasible instance after {MAX_RETRIES} attempts"
    )))
}

/// Minimize the cost of chosen sets such that every element is covered.
/// Every element is forced into at least one set, so choosing all sets works.
fn set_cover(
    rng: &mut ChaCha8Rng,
    cfg: &GeneratorConfig,
    name: &str,
) -> Result<(MipInstance, Assignment)> {
    let n = cfg.n_vars;
    let vars = (0..n)
        .map(|j| Variable::binary(format!("set{j}"), rng.gen_range(1..=100) as f64))
        .collect();
    let mut rows = Vec::with_capacity(cfg.n_cons);
    for e in 0..cfg.n_cons {
        let mut members: Vec<usize> = (0..n).filter(|_| rng.gen_bool(cfg.density)).collect();
        if members.is_empty() {
            members.push(rng.gen_range(0..n));
        }
        rows.push(Row::new(
            format!("cover{e}"),
            members.into_iter().map(|j| (j, 1.0)).collect(),
            Sense::Ge,
            1.0,
        ));
    }
    let inst = MipInstance::from_rows(name, vars, rows)?;
    Ok((inst, Assignment::new(vec![1.0; n])))
}

/// Maximize accepted bid revenue (as a minimization of `-price`) with each
/// item sold at most once. Rejecting every bid is feasible.
fn auction(
    rng: &mut ChaCha8Rng,
    cfg: &GeneratorConfig,
    name: &str,
) -> Result<(MipInstance, Assignment)> {
    let n = cfg.n_vars;
    let items = cfg.n_cons;
    let item_value: Vec<f64> = (0..items).map(|_| rng.gen_range(1..=20) as f64).collect();
    let mut bundles: Vec<Vec<usize>> = (0..n)
        .map(|_| {
            let mut b: Vec<usize> = (0..items).filter(|_| rng.gen_bool(cfg.density)).collect();
            if b.is_empty() {
                b.push(rng.gen_range(0..items));
            }
            b
        })
        .collect();
    for item in 0..items {
        if !bundles.iter().any(|b| b.contains(&item)) {
            let bid = rng.gen_range(0..n);
            bundles[bid].push(item);
            bundles[bid].sort_unstable();
        }
    }
    let vars = bundles
        .iter()
        .enumerate()
        .map(|(j, b)| {
            let base: f64 = b.iter().map(|&i| item_value[i]).sum();
            let price = (base * rng.gen_range(0.8..1.2)).round().max(1.0);
            Variable::binary(format!("bid{j}"), -price)
        })
        .collect();
    let rows = (0..items)
        .map(|item| {
            let terms = (0..n)
                .filter(|&j| bundles[j].contains(&item))
                .map(|j| (j, 1.0))
                .collect();
            Row::new(format!("item{item}"), terms, Sense::Le, 1.0)
        })
        .collect();
    let inst = MipInstance::from_rows(name, vars, rows)?;
    Ok((inst, Assignment::new(vec![0.0; n])))
}

/// Assign every job to exactly one agent within agent capacities at minimum
/// cost. Capacities are set from a hidden random assignment so it stays
/// feasible; `density` scales how much spare capacity agents get.
fn assignment(
    rng: &mut ChaCha8Rng,
    cfg: &GeneratorConfig,
    name: &str,
) -> Result<(MipInstance, Assignment)> {
    let agents = cfg.n_cons.clamp(2, cfg.n_vars / 2);
    let jobs = cfg.n_vars / agents;
    let var = |a: usize, j: usize| a * jobs + j;
    let mut vars = Vec::with_capacity(agents * jobs);
    let mut weight = vec![vec![0.0; jobs]; agents];
    for (a, w_row) in weight.iter_mut().enumerate() {
        for (j, w) in w_row.iter_mut().enumerate() {
            *w = rng.gen_range(5..=25) as f64;
            vars.push(Variable::binary(
                format!("a{a}j{j}"),
                rng.gen_range(10..=50) as f64,
            ));
        }
    }
    let mut witness = vec![0.0; agents * jobs];
    let mut load = vec![0.0; agents];
    for j in 0..jobs {
        let a = rng.gen_range(0..agents);
        witness[var(a, j)] = 1.0;
        load[a] += weight[a][j];
    }

    let mut rows = Vec::with_capacity(jobs + agents);
    for j in 0..jobs {
        rows.push(Row::new(
            format!("job{j}"),
            (0..agents).map(|a| (var(a, j), 1.0)).collect(),
            Sense::Eq,
            1.0,
        ));
    }
    for a in 0..agents {
        let mean_share: f64 = weight[a].iter().sum::<f64>() / agents as f64;
        let cap = load[a].max((mean_share * (0.8 + cfg.density)).round());
        rows.push(Row::new(
            format!("cap{a}"),
            (0..jobs).map(|j| (var(a, j), weight[a][j])).collect(),
            Sense::Le,
            cap,
        ));
    }
    let inst = MipInstance::from_rows(name, vars, rows)?;
    Ok((inst, Assignment::new(witness)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

/// Split sizes for `count` instances: train and valid are rounded, test takes
/// the remainder.
pub fn split_sizes(count: usize, split: (f64, f64, f64)) -> (usize, usize, usize) {
    let train = ((count as f64) * split.0).round() as usize;
    let train = train.min(count);
    let valid = (((count as f64) * split.1).round() as usize).min(count - train);
    (train, valid, count - train - valid)
}

/// Assigns each instance index to a split. The index order is shuffled with
/// the generator seed so splits do not depend on generation order.
pub fn split_indices(config: &GeneratorConfig) -> BTreeMap<Split, Vec<usize>> {
    let (train, valid, _) = split_sizes(config.count, config.split);
    let mut order: Vec<usize> = (0..config.count).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed.rotate_left(17) ^ 0x5eed));
    let mut out = BTreeMap::new();
    out.insert(Split::Train, order[..train].to_vec());
    out.insert(Split::Valid, order[train..train + valid].to_vec());
    out.insert(Split::Test, order[train + valid..].to_vec());
    for v in out.values_mut() {
        v.sort_unstable();
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub family: Family,
    pub seed: u64,
    pub config: GeneratorConfig,
    /// Split name to instance files, relative to the dataset directory.
    pub files: BTreeMap<Split, Vec<String>>,
}

impl DatasetManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        read_json(&dir.join("manifest.json"))
    }

    pub fn load_split(&self, dir: &Path, split: Split) -> Result<Vec<MipInstance>> {
        self.files
            .get(&split)
            .map(|files| files.iter().map(|f| read_instance(dir.join(f))).collect())
            .unwrap_or_else(|| Ok(Vec::new()))
    }
}

/// Writes `<dir>/{train,valid,test}/<name>.json` and `<dir>/manifest.json`.
pub fn write_dataset(config: &GeneratorConfig, dir: &Path) -> Result<DatasetManifest> {
    let instances = generate(config)?;
    let mut files = BTreeMap::new();
    for (split, indices) in split_indices(config) {
        let mut names = Vec::with_capacity(indices.len());
        for i in indices {
            let rel = format!("{}/{}.json", split.dir_name(), instances[i].name());
            write_instance(dir.join(&rel), &instances[i])?;
            names.push(rel);
        }
        files.insert(split, names);
    }
    let manifest = DatasetManifest {
        family: config.family,
        seed: config.seed,
        config: config.clone(),
        files,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}
