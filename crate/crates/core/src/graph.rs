//! Bipartite variable/constraint graph with node and edge features.
//!
//! The feature layout is described in `docs/features.md`; bump
//! [`FEATURE_VERSION`] whenever it changes.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mip::{Assignment, MipInstance};
use crate::tensor::Matrix;

pub const FEATURE_VERSION: u32 = 1;
pub const DEFAULT_WINDOW: usize = 3;
/// Variable features before the history slots.
pub const VAR_BASE_FEATURES: usize = 7;
pub const CON_FEATURES: usize = 2;
/// Infinite or huge bounds are clipped to this magnitude in the features.
pub const BOUND_CLIP: f64 = 1e6;

pub fn var_feature_width(window: usize) -> usize {
    VAR_BASE_FEATURES + 2 * window
}

/// Width of a row of [`BipartiteGraph::node_features`]:
/// `[is_var, log1p(degree), var features.., con features..]`.
pub fn node_feature_width(window: usize) -> usize {
    2 + var_feature_width(window) + CON_FEATURES
}

/// The last `window` assignments, newest last.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryWindow {
    window: usize,
    past: VecDeque<Assignment>,
}

impl HistoryWindow {
    pub fn new(window: usize) -> Self {
        HistoryWindow {
            window,
            past: VecDeque::with_capacity(window + 1),
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.past.len()
    }

    pub fn is_empty(&self) -> bool {
        self.past.is_empty()
    }

    pub fn push(&mut self, x: Assignment) {
        self.past.push_back(x);
        while self.past.len() > self.window {
            self.past.pop_front();
        }
    }

    /// Newest first, so slot 0 is the current assignment.
    pub fn newest_first(&self) -> impl Iterator<Item = &Assignment> {
        self.past.iter().rev()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub var: usize,
    pub con: usize,
    /// Coefficient divided by the row's infinity norm.
    pub coef: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BipartiteGraph {
    pub n_var_nodes: usize,
    pub n_con_nodes: usize,
    pub window: usize,
    pub var_features: Matrix,
    pub con_features: Matrix,
    pub edges: Vec<Edge>,
    /// `‖c‖∞`, or 1 when the objective is zero.
    pub obj_scale: f64,
    /// Infinity norm of each constraint row (1 for empty rows).
    pub row_scales: Vec<f64>,
    neighbors: Vec<Vec<usize>>,
}

pub fn encode(
    inst: &MipInstance,
    lp_solution: Option<&Assignment>,
    history: Option<&HistoryWindow>,
) -> Result<BipartiteGraph> {
    let n = inst.n_vars();
    let m = inst.n_cons();
    let window = history.map_or(0, HistoryWindow::window);
    if let Some(lp) = lp_solution {
        if lp.len() != n {
            return Err(Error::Dimension {
                context: "LP solution",
                expected: n,
                got: lp.len(),
            });
        }
    }
    if let Some(h) = history {
        for x in h.newest_first() {
            if x.len() != n {
                return Err(Error::Dimension {
                    context: "history entry",
                    expected: n,
                    got: x.len(),
                });
            }
        }
    }

    let cmax = inst
        .variables()
        .iter()
        .fold(0.0f64, |a, v| a.max(v.obj_coef.abs()));
    let obj_scale = if cmax > 0.0 { cmax } else { 1.0 };

    let dv = var_feature_width(window);
    let mut var_features = Matrix::zeros(n, dv);
    for (i, v) in inst.variables().iter().enumerate() {
        let f = var_features.row_mut(i);
        f[0] = v.obj_coef / obj_scale;
        f[1] = v.lb.clamp(-BOUND_CLIP, BOUND_CLIP);
        f[2] = v.ub.clamp(-BOUND_CLIP, BOUND_CLIP);
        f[3] = if v.is_integer { 1.0 } else { 0.0 };
        if let Some(lp) = lp_solution {
            let val = lp[i];
            f[4] = val.clamp(-BOUND_CLIP, BOUND_CLIP);
            f[5] = 1.0;
            f[6] = if v.is_integer { (val - val.round()).abs() } else { 0.0 };
        }
        if let Some(h) = history {
            if v.is_integer {
                for (slot, x) in h.newest_first().enumerate() {
                    f[VAR_BASE_FEATURES + 2 * slot] = x[i];
                    f[VAR_BASE_FEATURES + 2 * slot + 1] = 1.0;
                }
            }
        }
    }

    let mut con_features = Matrix::zeros(m, CON_FEATURES);
    let mut row_scales = Vec::with_capacity(m);
    let mut edges = Vec::new();
    let mut neighbors = vec![Vec::new(); n + m];
    for (j, c) in inst.constraints().iter().enumerate() {
        let norm = c.terms.iter().fold(0.0f64, |a, &(_, v)| a.max(v.abs()));
        let scale = if norm > 0.0 { norm } else { 1.0 };
        row_scales.push(scale);
        let f = con_features.row_mut(j);
        f[0] = c.rhs / scale.max(1.0);
        f[1] = scale.ln_1p();
        for &(i, a) in &c.terms {
            edges.push(Edge {
                var: i,
                con: j,
                coef: a / scale,
            });
            neighbors[i].push(n + j);
            neighbors[n + j].push(i);
        }
    }
    for list in &mut neighbors {
        list.sort_unstable();
        list.dedup();
    }

    Ok(BipartiteGraph {
        n_var_nodes: n,
        n_con_nodes: m,
        window,
        var_features,
        con_features,
        edges,
        obj_scale,
        row_scales,
        neighbors,
    })
}

/// What [`BipartiteGraph::decode`] recovers: objective, rows and right-hand
/// sides of the `≤` form.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodedProblem {
    pub objective: Vec<f64>,
    pub rows: Vec<Vec<(usize, f64)>>,
    pub rhs: Vec<f64>,
}

impl BipartiteGraph {
    pub fn n_nodes(&self) -> usize {
        self.n_var_nodes + self.n_con_nodes
    }

    /// Neighbors of a node, excluding itself. Variable nodes come first, then
    /// constraint node `j` has index `n_var_nodes + j`.
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.neighbors[node].len()
    }

    /// Dense `K×K` adjacency with ones on the diagonal.
    pub fn adjacency(&self) -> Matrix {
        let k = self.n_nodes();
        let mut a = Matrix::identity(k);
        for (i, list) in self.neighbors.iter().enumerate() {
            for &j in list {
                a[(i, j)] = 1.0;
            }
        }
        a
    }

    /// One padded input row per node.
    pub fn node_features(&self) -> Matrix {
        let dv = var_feature_width(self.window);
        let mut u = Matrix::zeros(self.n_nodes(), node_feature_width(self.window));
        for i in 0..self.n_var_nodes {
            let row = u.row_mut(i);
            row[0] = 1.0;
            row[1] = (self.neighbors[i].len() as f64).ln_1p();
            row[2..2 + dv].copy_from_slice(self.var_features.row(i));
        }
        for j in 0..self.n_con_nodes {
            let node = self.n_var_nodes + j;
            let row = u.row_mut(node);
            row[1] = (self.neighbors[node].len() as f64).ln_1p();
            row[2 + dv..].copy_from_slice(self.con_features.row(j));
        }
        u
    }

    pub fn is_finite(&self) -> bool {
        self.var_features.is_finite()
            && self.con_features.is_finite()
            && self.edges.iter().all(|e| e.coef.is_finite())
    }

    /// Rebuilds `(c, A, b)` from the features and the recorded scales.
    pub fn decode(&self) -> DecodedProblem {
        let objective = (0..self.n_var_nodes)
            .map(|i| self.var_features[(i, 0)] * self.obj_scale)
            .collect();
        let mut rows = vec![Vec::new(); self.n_con_nodes];
        for e in &self.edges {
            rows[e.con].push((e.var, e.coef * self.row_scales[e.con]));
        }
        let rhs = (0..self.n_con_nodes)
            .map(|j| self.con_features[(j, 0)] * self.row_scales[j].max(1.0))
            .collect();
        DecodedProblem {
            objective,
            rows,
            rhs,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mip::{Constraint, Variable};

    fn small() -> MipInstance {
        let vars = vec![
            Variable::binary("x0", 3.0),
            Variable::binary("x1", -6.0),
            Variable::continuous("y", 0.0, f64::INFINITY, 1.5),
        ];
        let cons = vec![
            Constraint::new("c0", vec![(1, 2.0), (2, -1.0)], 4.0),
            Constraint::new("c1", vec![(0, 1.0)], 1.0),
            Constraint::new("c2", vec![(1, -0.5), (0, 5.0)], -2.0),
        ];
        MipInstance::new("g", vars, cons).unwrap()
    }

    #[test]
    fn degree_counts_constraints() {
        let g = encode(&small(), None, None).unwrap();
        assert_eq!(g.degree(1), 2);
        assert_eq!(g.neighbors(1), &[3, 5]);
        let a = g.adjacency();
        assert_eq!(a.row(1).iter().sum::<f64>(), 3.0);
        for i in 0..g.n_nodes() {
            assert_eq!(a[(i, i)], 1.0);
            for j in 0..g.n_nodes() {
                assert_eq!(a[(i, j)], a[(j, i)]);
            }
        }
    }

    #[test]
    fn empty_history_has_zero_slots() {
        let inst = small();
        let g = encode(&inst, None, Some(&HistoryWindow::new(3))).unwrap();
        assert_eq!(g.var_features.cols(), 13);
        for i in 0..3 {
            assert!(g.var_features.row(i)[VAR_BASE_FEATURES..].iter().all(|&v| v == 0.0));
        }
        assert!(g.is_finite());
        assert_eq!(g.node_features().cols(), node_feature_width(3));
    }

    #[test]
    fn history_slots_newest_first() {
        let inst = small();
        let mut h = HistoryWindow::new(2);
        h.push(Assignment::new(vec![1.0, 0.0, 0.5]));
        h.push(Assignment::new(vec![0.0, 1.0, 0.5]));
        h.push(Assignment::new(vec![1.0, 1.0, 0.5]));
        let g = encode(&inst, None, Some(&h)).unwrap();
        assert_eq!(&g.var_features.row(1)[VAR_BASE_FEATURES..], &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(&g.var_features.row(0)[VAR_BASE_FEATURES..], &[1.0, 1.0, 0.0, 1.0]);
        assert_eq!(&g.var_features.row(2)[VAR_BASE_FEATURES..], &[0.0; 4]);
        h.push(Assignment::new(vec![1.0]));
        assert!(matches!(
            encode(&inst, None, Some(&h)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn lp_features_and_fractionality() {
        let inst = small();
        let lp = Assignment::new(vec![0.25, 1.0, 3.0]);
        let g = encode(&inst, Some(&lp), None).unwrap();
        assert_eq!(&g.var_features.row(0)[4..7], &[0.25, 1.0, 0.25]);
        assert_eq!(&g.var_features.row(2)[4..7], &[3.0, 1.0, 0.0]);
        assert_eq!(g.var_features[(2, 2)], BOUND_CLIP);
    }
}
