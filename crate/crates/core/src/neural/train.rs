use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{backward, policy_forward, log_prob, Adam, PolicyConfig, PolicyParams};
use crate::error::{Error, Result};
use crate::graph::BipartiteGraph;

/// One labelled step: the encoded state and the target action over the
/// instance's integer variables.
#[derive(Clone, Debug)]
pub struct TrainSample {
    pub id: String,
    pub graph: BipartiteGraph,
    pub integer_indices: Vec<usize>,
    pub action: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub policy: PolicyConfig,
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// `None` for full-batch updates.
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            policy: PolicyConfig::default(),
            epochs: 100,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            batch_size: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: usize,
    pub split: String,
    /// Mean loss per sample.
    pub loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: PolicyParams,
    pub log: Vec<LogRow>,
}

impl TrainOutcome {
    pub fn losses(&self, split: &str) -> Vec<f64> {
        self.log
            .iter()
            .filter(|r| r.split == split)
            .map(|r| r.loss)
            .collect()
    }
}

/// Initializes parameters from `config.policy` and trains.
pub fn train(train: &[TrainSample], valid: &[TrainSample], config: &TrainConfig) -> Result<TrainOutcome> {
    let params = PolicyParams::init(&config.policy)?;
    train_from(params, train, valid, config)
}

fn sorted(samples: &[TrainSample]) -> Vec<&TrainSample> {
    let mut v: Vec<&TrainSample> = samples.iter().collect();
    v.sort_by(|a, b| a.id.cmp(&b.id));
    v
}

/// Mean loss and summed gradient over a batch. Per-sample work runs in
/// parallel; the reduction happens in batch order.
fn batch_gradient(
    params: &PolicyParams,
    batch: &[&TrainSample],
    epoch: usize,
) -> Result<(f64, PolicyParams)> {
    let parts: Vec<Result<(f64, PolicyParams)>> = batch
        .par_iter()
        .map(|s| backward(params, &s.graph, &s.integer_indices, &s.action))
        .collect();
    let mut total = params.zeros_like();
    let mut loss = 0.0;
    for (s, part) in batch.iter().zip(parts) {
        let (l, g) = part?;
        if !l.is_finite() || !g.is_finite() {
            return Err(Error::NanLoss {
                epoch,
                sample: s.id.clone(),
            });
        }
        loss += l;
        total.add_assign(&g);
    }
    let n = batch.len().max(1) as f64;
    total.scale(1.0 / n);
    Ok((loss / n, total))
}

/// Mean per-sample loss of `params` on `samples`.
pub fn evaluate_loss(params: &PolicyParams, samples: &[TrainSample]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let parts: Vec<Result<f64>> = sorted(samples)
        .par_iter()
        .map(|s| {
            let out = policy_forward(params, &s.graph, &s.integer_indices)?;
            Ok(-log_prob(&out, &s.action)?)
        })
        .collect();
    let mut total = 0.0;
    for p in parts {
        total += p?;
    }
    Ok(total / samples.len() as f64)
}

/// Trains starting from `params`. Log rows for epoch `e` hold the loss after
/// `e` updates passes, so epoch 0 is the initial loss.
pub fn train_from(
    mut params: PolicyParams,
    train: &[TrainSample],
    valid: &[TrainSample],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(Error::InvalidParameter("empty training set".into()));
    }
    if !(config.lr >= 0.0) || !(0.0..1.0).contains(&config.beta1) || !(0.0..1.0).contains(&config.beta2) {
        return Err(Error::InvalidParameter(format!(
            "bad optimizer settings lr={} betas=({}, {})",
            config.lr, config.beta1, config.beta2
        )));
    }
    if config.batch_size == Some(0) {
        return Err(Error::InvalidParameter("batch_size must be positive".into()));
    }
    let samples = sorted(train);
    let mut adam = Adam::new(config.lr, config.beta1, config.beta2);
    let mut log = Vec::new();
    let mut record = |epoch: usize, loss: f64, params: &PolicyParams| -> Result<()> {
        log::debug!("epoch {epoch} train loss {loss:.6}");
        log.push(LogRow {
            epoch,
            split: "train".into(),
            loss,
        });
        if !valid.is_empty() {
            log.push(LogRow {
                epoch,
                split: "valid".into(),
                loss: evaluate_loss(params, valid)?,
            });
        }
        Ok(())
    };

    for epoch in 0..config.epochs {
        match config.batch_size {
            None => {
                let (loss, grads) = batch_gradient(&params, &samples, epoch)?;
                record(epoch, loss, &params)?;
                adam.step(&mut params, &grads)?;
            }
            Some(size) => {
                let loss = evaluate_loss(&params, train)?;
                if !loss.is_finite() {
                    return Err(Error::NanLoss {
                        epoch,
                        sample: "<batch>".into(),
                    });
                }
                record(epoch, loss, &params)?;
                let mut order = samples.clone();
                order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(epoch as u64)));
                for chunk in order.chunks(size) {
                    let (_, grads) = batch_gradient(&params, chunk, epoch)?;
                    adam.step(&mut params, &grads)?;
                }
            }
        }
    }
    let final_loss = evaluate_loss(&params, train)?;
    if !final_loss.is_finite() {
        return Err(Error::NanLoss {
            epoch: config.epochs,
            sample: "<final>".into(),
        });
    }
    record(config.epochs, final_loss, &params)?;
    Ok(TrainOutcome { params, log })
}

/// `epoch,split,loss` with a header line.
pub fn write_log_csv(path: &Path, rows: &[LogRow]) -> Result<()> {
    let mut out = String::from("epoch,split,loss\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.epoch, r.split, r.loss);
    }
    crate::io::write_atomic(path, out.as_bytes())
}
