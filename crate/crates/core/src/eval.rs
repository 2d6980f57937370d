//! Primal gap, best-known objectives, and average-gap / survival curves.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bnb::{solve_mip, SolveBudget};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::lns::EpisodeRecord;
use crate::mip::{Assignment, MipInstance};

/// Gap thresholds offered as survival-curve presets.
pub const GAP_THRESHOLD_PRESETS: [f64; 5] = [0.05, 0.01, 0.03, 0.0001, 0.0];

/// Primal gap of `f_xt` against `f_star`, in `[0, 1]`. No solution or a sign
/// mismatch gives 1; two zeros give 0.
pub fn primal_gap(f_xt: Option<f64>, f_star: f64) -> f64 {
    let Some(f) = f_xt else { return 1.0 };
    if !f.is_finite() || f * f_star < 0.0 {
        return 1.0;
    }
    let denom = f.abs().max(f_star.abs());
    if denom == 0.0 {
        return 0.0;
    }
    ((f - f_star).abs() / denom).min(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    BnbProvedOptimal,
    BestIncumbentAnyMethod,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestKnown {
    pub objective: f64,
    pub provenance: Provenance,
    /// Where the value came from, e.g. `bnb` or a run directory.
    pub source: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BestKnownTable {
    pub entries: BTreeMap<String, BestKnown>,
    /// Instances left out, with the reason.
    pub excluded: BTreeMap<String, String>,
}

impl BestKnownTable {
    pub fn get(&self, instance: &str) -> Result<f64> {
        self.entries
            .get(instance)
            .map(|e| e.objective)
            .ok_or_else(|| Error::MissingInstance(instance.to_string()))
    }

    pub fn insert(&mut self, instance: impl Into<String>, entry: BestKnown) {
        self.entries.insert(instance.into(), entry);
    }

    /// Lowers non-proved entries that some record beats. Returns the updated
    /// instance ids; gaps computed before the refresh are stale for those.
    pub fn refresh(&mut self, records: &[EpisodeRecord], source: &str) -> Vec<String> {
        let mut updated = Vec::new();
        for r in records {
            let id = &r.header.instance_id;
            let Some(entry) = self.entries.get_mut(id) else { continue };
            let best = r
                .steps
                .iter()
                .map(|s| s.objective)
                .fold(f64::INFINITY, f64::min);
            if entry.provenance == Provenance::BestIncumbentAnyMethod
                && best < entry.objective - 1e-9
            {
                warn!(
                    "{id}: best-known objective improved from {} to {best} by {source}; earlier gaps are stale",
                    entry.objective
                );
                entry.objective = best;
                entry.source = source.to_string();
                if !updated.contains(id) {
                    updated.push(id.clone());
                }
            }
        }
        updated
    }
}

/// Solves every instance with B&B under `budget`. Also returns the incumbent
/// for each instance that has one.
pub fn compute_best_known(
    instances: &[MipInstance],
    budget: &SolveBudget,
) -> Result<(BestKnownTable, BTreeMap<String, Assignment>)> {
    budget.validate()?;
    let results: Vec<_> = instances
        .par_iter()
        .map(|inst| (inst.name().to_string(), solve_mip(inst, budget, None)))
        .collect();
    let mut table = BestKnownTable::default();
    let mut solutions = BTreeMap::new();
    for (name, res) in results {
        let res = res?;
        match res.incumbent {
            Some(x) => {
                let provenance = if res.status.is_optimal() {
                    Provenance::BnbProvedOptimal
                } else {
                    Provenance::BestIncumbentAnyMethod
                };
                table.insert(
                    name.clone(),
                    BestKnown {
                        objective: res.objective.expect("incumbent has an objective"),
                        provenance,
                        source: "bnb".into(),
                    },
                );
                solutions.insert(name, x);
            }
            None => {
                let reason = format!("no feasible assignment found ({:?})", res.status);
                warn!("{name}: excluded from best-known table: {reason}");
                table.excluded.insert(name, reason);
            }
        }
    }
    Ok((table, solutions))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    /// LNS step index.
    Step,
    /// Recorded wall-clock milliseconds.
    Time,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub axis: Axis,
    pub points: Vec<f64>,
}

impl Grid {
    /// `0, 1, ..., max_step`.
    pub fn steps(max_step: usize) -> Self {
        Grid {
            axis: Axis::Step,
            points: (0..=max_step).map(|t| t as f64).collect(),
        }
    }

    pub fn linear(axis: Axis, lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 || !(lo < hi) {
            return Err(Error::InvalidParameter(format!(
                "linear grid needs n >= 2 and lo < hi (got {n}, {lo}, {hi})"
            )));
        }
        let points = (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect();
        Ok(Grid { axis, points })
    }

    pub fn geometric(axis: Axis, lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 || !(lo > 0.0 && lo < hi) {
            return Err(Error::InvalidParameter(format!(
                "geometric grid needs n >= 2 and 0 < lo < hi (got {n}, {lo}, {hi})"
            )));
        }
        let ratio = (hi / lo).ln() / (n - 1) as f64;
        let points = (0..n).map(|i| lo * (ratio * i as f64).exp()).collect();
        Ok(Grid { axis, points })
    }
}

fn coordinate(axis: Axis, step: &crate::lns::StepRecord) -> f64 {
    match axis {
        Axis::Step => step.t as f64,
        Axis::Time => step.elapsed_ms as f64,
    }
}

/// Best-so-far gap of one record at each grid point; 1 before its first
/// recorded point.
pub fn gap_profile(record: &EpisodeRecord, f_star: f64, grid: &Grid) -> Vec<f64> {
    let mut steps: Vec<(f64, f64)> = record
        .steps
        .iter()
        .map(|s| (coordinate(grid.axis, s), s.objective))
        .collect();
    steps.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::with_capacity(grid.points.len());
    let mut best: Option<f64> = None;
    let mut k = 0;
    for &g in &grid.points {
        while k < steps.len() && steps[k].0 <= g {
            best = Some(best.map_or(steps[k].1, |b: f64| b.min(steps[k].1)));
            k += 1;
        }
        out.push(primal_gap(best, f_star));
    }
    out
}

fn profiles(records: &[EpisodeRecord], table: &BestKnownTable, grid: &Grid) -> Result<Vec<Vec<f64>>> {
    records
        .iter()
        .map(|r| Ok(gap_profile(r, table.get(&r.header.instance_id)?, grid)))
        .collect()
}

/// Folds all records of each instance into one, so parallel runs count as a
/// single heuristic whose incumbent is the best over its runs. Output is
/// sorted by instance id.
pub fn merge_runs(records: &[EpisodeRecord]) -> Vec<EpisodeRecord> {
    let mut by_id: BTreeMap<&str, EpisodeRecord> = BTreeMap::new();
    for r in records {
        by_id
            .entry(r.header.instance_id.as_str())
            .and_modify(|m| m.steps.extend(r.steps.iter().cloned()))
            .or_insert_with(|| r.clone());
    }
    by_id.into_values().collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapPoint {
    pub x: f64,
    pub mean_gap: f64,
    pub n: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalPoint {
    pub x: f64,
    pub fraction: f64,
    pub threshold: f64,
    pub n: usize,
}

/// Mean best-so-far gap over records at each grid point. Each record (one
/// instance and seed) counts once.
pub fn average_gap_curve(
    records: &[EpisodeRecord],
    table: &BestKnownTable,
    grid: &Grid,
) -> Result<Vec<GapPoint>> {
    let p = profiles(records, table, grid)?;
    let n = records.len();
    Ok(grid
        .points
        .iter()
        .enumerate()
        .map(|(i, &x)| GapPoint {
            x,
            mean_gap: if n == 0 {
                0.0
            } else {
                p.iter().map(|v| v[i]).sum::<f64>() / n as f64
            },
            n,
        })
        .collect())
}

/// Fraction of records whose best-so-far gap is at most `threshold`.
pub fn survival_curve(
    records: &[EpisodeRecord],
    table: &BestKnownTable,
    threshold: f64,
    grid: &Grid,
) -> Result<Vec<SurvivalPoint>> {
    if !(threshold >= 0.0) {
        return Err(Error::InvalidParameter(format!("gap threshold {threshold} < 0")));
    }
    let p = profiles(records, table, grid)?;
    let n = records.len();
    Ok(grid
        .points
        .iter()
        .enumerate()
        .map(|(i, &x)| SurvivalPoint {
            x,
            fraction: if n == 0 {
                0.0
            } else {
                p.iter().filter(|v| v[i] <= threshold).count() as f64 / n as f64
            },
            threshold,
            n,
        })
        .collect())
}

pub fn write_gap_csv(path: &Path, curve: &[GapPoint]) -> Result<()> {
    let mut s = String::from("grid_point,mean_gap,n\n");
    for p in curve {
        writeln!(s, "{},{},{}", p.x, p.mean_gap, p.n).expect("write to String");
    }
    write_atomic(path, s.as_bytes())
}

pub fn write_survival_csv(path: &Path, curves: &[Vec<SurvivalPoint>]) -> Result<()> {
    let mut s = String::from("grid_point,fraction,threshold\n");
    for p in curves.iter().flatten() {
        writeln!(s, "{},{},{}", p.x, p.fraction, p.threshold).expect("write to String");
    }
    write_atomic(path, s.as_bytes())
}

/// A named polyline for [`write_svg`].
#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Plots step-function series on a y range of `[0, 1]`. With `log_x`,
/// points with x <= 0 are skipped.
pub fn write_svg(path: &Path, title: &str, x_label: &str, series: &[Series], log_x: bool) -> Result<()> {
    let (w, h, m) = (640.0, 400.0, 50.0);
    let tx = |x: f64| if log_x { x.log10() } else { x };
    let xs: Vec<f64> = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .filter(|&x| !log_x || x > 0.0)
        .map(tx)
        .collect();
    let (lo, hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
        (a.min(x), b.max(x))
    });
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (0.0, 1.0) };
    let px = |x: f64| m + (tx(x) - lo) / (hi - lo) * (w - 2.0 * m);
    let py = |y: f64| h - m - y.clamp(0.0, 1.0) * (h - 2.0 * m);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">{title}</text>"#, w / 2.0);
    let _ = writeln!(
        s,
        r#"<path d="M{m} {m} V{} H{}" stroke="black" fill="none"/>"#,
        h - m,
        w - m
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{x_label}{}</text>"#,
        w / 2.0,
        h - 12.0,
        if log_x { " (log)" } else { "" }
    );
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut d = String::new();
        let mut prev_y = None;
        for &(x, y) in ser.points.iter().filter(|p| !log_x || p.0 > 0.0) {
            match prev_y {
                None => {
                    let _ = write!(d, "M{:.2} {:.2}", px(x), py(y));
                }
                Some(_) => {
                    let _ = write!(d, " H{:.2} V{:.2}", px(x), py(y));
                }
            }
            prev_y = Some(y);
        }
        let _ = writeln!(s, r#"<path d="{d}" stroke="{color}" fill="none" stroke-width="1.5"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            w - m - 120.0,
            m + 15.0 * (i as f64 + 1.0),
            ser.label
        );
    }
    s.push_str("</svg>\n");
    write_atomic(path, s.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_cases() {
        assert_eq!(primal_gap(Some(5.0), 5.0), 0.0);
        assert_eq!(primal_gap(Some(-1.0), 1.0), 1.0);
        assert_eq!(primal_gap(Some(2.0), 1.0), 0.5);
        assert_eq!(primal_gap(None, 1.0), 1.0);
        assert_eq!(primal_gap(Some(0.0), 0.0), 0.0);
        assert_eq!(primal_gap(Some(0.0), -3.0), 1.0);
    }

    #[test]
    fn grids() {
        let g = Grid::geometric(Axis::Time, 1.0, 1000.0, 4).unwrap();
        for (a, b) in g.points.iter().zip([1.0, 10.0, 100.0, 1000.0]) {
            assert!((a - b).abs() < 1e-9 * b);
        }
        assert_eq!(Grid::linear(Axis::Step, 0.0, 4.0, 5).unwrap().points, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        assert!(Grid::geometric(Axis::Time, 0.0, 1.0, 3).is_err());
        assert_eq!(Grid::steps(2).points, vec![0.0, 1.0, 2.0]);
    }
}
