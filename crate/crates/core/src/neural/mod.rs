//! Graph convolution network, Bernoulli policy head, hand-written gradients.

mod checkpoint;
mod optim;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT};
pub use optim::Adam;
pub use train::{
    evaluate_loss, train, train_from, write_log_csv, LogRow, TrainConfig, TrainOutcome,
    TrainSample,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{node_feature_width, BipartiteGraph, FEATURE_VERSION};
use crate::tensor::Matrix;

/// Log arguments in the likelihood are clamped below at this value.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `n_in × n_out`, row-major.
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// Fully connected layers, ReLU between them and identity on the output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Dense>,
}

struct MlpCache {
    /// Input to each layer.
    inputs: Vec<Matrix>,
    /// Pre-activation output of each layer.
    pre: Vec<Matrix>,
}

impl MlpParams {
    /// Uniform Glorot initialization, zero biases.
    pub fn init(sizes: &[usize], rng: &mut impl Rng) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                let data = (0..w[0] * w[1]).map(|_| rng.gen_range(-limit..limit)).collect();
                Dense {
                    weights: Matrix::from_vec(w[0], w[1], data).expect("sizes match"),
                    bias: vec![0.0; w[1]],
                }
            })
            .collect();
        MlpParams { layers }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        MlpParams {
            layers: sizes
                .windows(2)
                .map(|w| Dense {
                    weights: Matrix::zeros(w[0], w[1]),
                    bias: vec![0.0; w[1]],
                })
                .collect(),
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.layers.iter().map(|l| l.weights.rows()).collect();
        s.extend(self.layers.last().map(|l| l.weights.cols()));
        s
    }

    pub fn input_width(&self) -> usize {
        self.layers.first().map_or(0, |l| l.weights.rows())
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weights.cols())
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward_cached(x)?.output())
    }

    fn forward_cached(&self, x: &Matrix) -> Result<MlpCache> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut y = h.matmul(&layer.weights)?;
            y.add_row_vector(&layer.bias)?;
            inputs.push(h);
            h = if k + 1 < self.layers.len() {
                let mut a = y.clone();
                a.data_mut().iter_mut().for_each(|v| {
                    if *v < 0.0 {
                        *v = 0.0
                    }
                });
                a
            } else {
                y.clone()
            };
            pre.push(y);
        }
        if self.layers.is_empty() {
            inputs.push(h.clone());
            pre.push(h);
        }
        Ok(MlpCache { inputs, pre })
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the input.
    fn backward(&self, cache: &MlpCache, d_out: Matrix, grads: &mut MlpParams) -> Result<Matrix> {
        let mut dy = d_out;
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let g = &mut grads.layers[k];
            g.weights.add_assign(&cache.inputs[k].t_matmul(&dy)?)?;
            for (b, s) in g.bias.iter_mut().zip(dy.column_sums()) {
                *b += s;
            }
            let mut dx = dy.matmul_t(&layer.weights)?;
            if k > 0 {
                for (d, p) in dx.data_mut().iter_mut().zip(cache.pre[k - 1].data()) {
                    if *p <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            dy = dx;
        }
        Ok(dy)
    }

    fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.data(), l.bias.as_slice()])
            .collect()
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.data_mut(), l.bias.as_mut_slice()])
            .collect()
    }
}

impl MlpCache {
    fn output(mut self) -> Matrix {
        let last = self.pre.pop().expect("at least one layer");
        last
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub gcn_layers: usize,
    pub embed: usize,
    pub hidden: usize,
    /// History window; 0 for diving models.
    pub window: usize,
    pub seed: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            gcn_layers: 2,
            embed: 64,
            hidden: 64,
            window: crate::graph::DEFAULT_WINDOW,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub feature_version: u32,
    pub window: usize,
    pub gcn: Vec<MlpParams>,
    pub head: MlpParams,
}

impl PolicyParams {
    pub fn init(cfg: &PolicyConfig) -> Result<Self> {
        if cfg.gcn_layers == 0 || cfg.embed == 0 || cfg.hidden == 0 {
            return Err(Error::InvalidParameter(
                "gcn_layers, embed and hidden must be positive".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut width = node_feature_width(cfg.window);
        let mut gcn = Vec::with_capacity(cfg.gcn_layers);
        for _ in 0..cfg.gcn_layers {
            gcn.push(MlpParams::init(&[width, cfg.hidden, cfg.embed], &mut rng));
            width = cfg.embed;
        }
        let head = MlpParams::init(&[cfg.embed, cfg.hidden, 1], &mut rng);
        Ok(PolicyParams {
            feature_version: FEATURE_VERSION,
            window: cfg.window,
            gcn,
            head,
        })
    }

    pub fn zeros_like(&self) -> Self {
        PolicyParams {
            feature_version: self.feature_version,
            window: self.window,
            gcn: self.gcn.iter().map(|m| MlpParams::zeros(&m.sizes())).collect(),
            head: MlpParams::zeros(&self.head.sizes()),
        }
    }

    pub fn input_width(&self) -> usize {
        self.gcn.first().map_or(0, MlpParams::input_width)
    }

    /// Parameter arrays in checkpoint order: each GCN layer's MLP, then the
    /// head; within an MLP each layer's weights then bias.
    pub fn slices(&self) -> Vec<&[f64]> {
        self.gcn
            .iter()
            .chain(std::iter::once(&self.head))
            .flat_map(MlpParams::slices)
            .collect()
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.gcn
            .iter_mut()
            .chain(std::iter::once(&mut self.head))
            .flat_map(MlpParams::slices_mut)
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.n_params() {
            return Err(Error::Dimension {
                context: "flat parameter vector",
                expected: self.n_params(),
                got: values.len(),
            });
        }
        let mut offset = 0;
        for s in self.slices_mut() {
            s.copy_from_slice(&values[offset..offset + s.len()]);
            offset += s.len();
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &PolicyParams) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in self.slices_mut() {
            a.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn norm(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|x| x.is_finite()))
    }

    fn check_graph(&self, graph: &BipartiteGraph) -> Result<()> {
        if graph.window != self.window {
            return Err(Error::Dimension {
                context: "history window of graph vs model",
                expected: self.window,
                got: graph.window,
            });
        }
        let width = node_feature_width(graph.window);
        if width != self.input_width() {
            return Err(Error::Dimension {
                context: "node feature width",
                expected: self.input_width(),
                got: width,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyOutput {
    pub mu: Vec<f64>,
    pub logits: Vec<f64>,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    p.ln() - (-p).ln_1p()
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Sums `m` over each node's closed neighborhood. Each output entry adds its
/// terms in ascending order, so the result does not depend on node labels.
fn aggregate(graph: &BipartiteGraph, m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), m.cols());
    let mut buf = Vec::new();
    for i in 0..m.rows() {
        let nbrs = graph.neighbors(i);
        let row = out.row_mut(i);
        for (h, o) in row.iter_mut().enumerate() {
            buf.clear();
            buf.push(m[(i, h)]);
            buf.extend(nbrs.iter().map(|&j| m[(j, h)]));
            buf.sort_unstable_by(f64::total_cmp);
            *o = buf.iter().sum();
        }
    }
    out
}

struct Forward {
    caches: Vec<MlpCache>,
    head_cache: MlpCache,
    logits: Vec<f64>,
}

fn forward_full(
    params: &PolicyParams,
    graph: &BipartiteGraph,
    integer_indices: &[usize],
) -> Result<Forward> {
    params.check_graph(graph)?;
    if let Some(&bad) = integer_indices.iter().find(|&&i| i >= graph.n_var_nodes) {
        return Err(Error::Dimension {
            context: "integer index vs variable nodes",
            expected: graph.n_var_nodes,
            got: bad,
        });
    }
    let mut z = graph.node_features();
    let mut caches = Vec::with_capacity(params.gcn.len());
    for mlp in &params.gcn {
        let cache = mlp.forward_cached(&z)?;
        z = aggregate(graph, cache.pre.last().expect("non-empty mlp"));
        caches.push(cache);
    }
    let v = z.select_rows(integer_indices);
    let head_cache = params.head.forward_cached(&v)?;
    let logits = head_cache.pre.last().expect("non-empty head").data().to_vec();
    Ok(Forward {
        caches,
        head_cache,
        logits,
    })
}

/// Node embeddings after all GCN layers (`K × H`).
pub fn gcn_forward(params: &PolicyParams, graph: &BipartiteGraph) -> Result<Matrix> {
    params.check_graph(graph)?;
    let mut z = graph.node_features();
    for mlp in &params.gcn {
        z = aggregate(graph, &mlp.forward(&z)?);
    }
    Ok(z)
}

pub fn policy_forward(
    params: &PolicyParams,
    graph: &BipartiteGraph,
    integer_indices: &[usize],
) -> Result<PolicyOutput> {
    let f = forward_full(params, graph, integer_indices)?;
    let mu = f.logits.iter().map(|&g| sigmoid(g)).collect();
    Ok(PolicyOutput {
        mu,
        logits: f.logits,
    })
}

/// Negative log-likelihood of one Bernoulli label and its derivative with
/// respect to the logit.
fn bernoulli_nll(logit: f64, a: f64) -> (f64, f64) {
    let cap = -LOG_CLAMP.ln();
    let mut loss = 0.0;
    let mut grad = 0.0;
    if a != 0.0 {
        let t = softplus(-logit);
        if t < cap {
            loss += a * t;
            grad += a * (sigmoid(logit) - 1.0);
        } else {
            loss += a * cap;
        }
    }
    if a != 1.0 {
        let t = softplus(logit);
        if t < cap {
            loss += (1.0 - a) * t;
            grad += (1.0 - a) * sigmoid(logit);
        } else {
            loss += (1.0 - a) * cap;
        }
    }
    (loss, grad)
}

fn check_action(output: &PolicyOutput, action: &[f64]) -> Result<()> {
    if output.logits.len() != action.len() {
        return Err(Error::Dimension {
            context: "action length vs policy output",
            expected: output.logits.len(),
            got: action.len(),
        });
    }
    Ok(())
}

/// `ln π(a)` under the factorized Bernoulli policy.
pub fn log_prob(output: &PolicyOutput, action: &[f64]) -> Result<f64> {
    check_action(output, action)?;
    Ok(-output
        .logits
        .iter()
        .zip(action)
        .map(|(&g, &a)| bernoulli_nll(g, a).0)
        .sum::<f64>())
}

/// Summed negative log-likelihood over all steps.
pub fn nll_loss(outputs: &[PolicyOutput], actions: &[Vec<f64>]) -> Result<f64> {
    if outputs.len() != actions.len() {
        return Err(Error::Dimension {
            context: "number of actions vs outputs",
            expected: outputs.len(),
            got: actions.len(),
        });
    }
    let mut total = 0.0;
    for (o, a) in outputs.iter().zip(actions) {
        total -= log_prob(o, a)?;
    }
    Ok(total)
}

/// Loss of one labelled step and its gradient with respect to every
/// parameter.
pub fn backward(
    params: &PolicyParams,
    graph: &BipartiteGraph,
    integer_indices: &[usize],
    action: &[f64],
) -> Result<(f64, PolicyParams)> {
    let f = forward_full(params, graph, integer_indices)?;
    if action.len() != f.logits.len() {
        return Err(Error::Dimension {
            context: "action length vs integer variables",
            expected: f.logits.len(),
            got: action.len(),
        });
    }
    let mut loss = 0.0;
    let mut dlogits = Vec::with_capacity(action.len());
    for (&g, &a) in f.logits.iter().zip(action) {
        let (l, d) = bernoulli_nll(g, a);
        loss += l;
        dlogits.push(d);
    }
    let mut grads = params.zeros_like();
    let dv = params.head.backward(
        &f.head_cache,
        Matrix::from_vec(dlogits.len(), 1, dlogits)?,
        &mut grads.head,
    )?;
    let embed = params.head.input_width();
    let mut dz = Matrix::zeros(graph.n_nodes(), embed);
    for (r, &i) in integer_indices.iter().enumerate() {
        for (d, s) in dz.row_mut(i).iter_mut().zip(dv.row(r)) {
            *d += s;
        }
    }
    for l in (0..params.gcn.len()).rev() {
        let dm = aggregate(graph, &dz);
        dz = params.gcn[l].backward(&f.caches[l], dm, &mut grads.gcn[l])?;
    }
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::encode;
    use crate::mip::{Constraint, MipInstance, Variable};

    fn tiny() -> MipInstance {
        MipInstance::new(
            "t",
            vec![
                Variable::binary("a", 1.0),
                Variable::binary("b", -2.0),
                Variable::binary("c", 0.5),
            ],
            vec![
                Constraint::new("r0", vec![(0, 1.0), (1, 1.0)], 1.0),
                Constraint::new("r1", vec![(1, 2.0), (2, -1.0)], 1.0),
            ],
        )
        .unwrap()
    }

    fn small_cfg(window: usize) -> PolicyConfig {
        PolicyConfig {
            gcn_layers: 2,
            embed: 5,
            hidden: 6,
            window,
            seed: 4,
        }
    }

    #[test]
    fn sigmoid_and_logit_round_trip() {
        for i in -300..=300 {
            let g = i as f64 / 10.0;
            let p = sigmoid(g);
            assert!(p > 0.0 && p < 1.0);
            assert!((logit(p) - g).abs() < 1e-2, "{g}");
        }
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(1000.0), 1000.0);
    }

    #[test]
    fn zero_head_gives_half() {
        let g = encode(&tiny(), None, Some(&crate::graph::HistoryWindow::new(2))).unwrap();
        let mut p = PolicyParams::init(&small_cfg(2)).unwrap();
        for s in p.head.slices_mut() {
            s.iter_mut().for_each(|x| *x = 0.0);
        }
        let out = policy_forward(&p, &g, &[0, 1, 2]).unwrap();
        assert_eq!(out.mu, vec![0.5; 3]);
        let last = p.head.layers.len() - 1;
        p.head.layers[last].bias[0] = 10.0;
        let out = policy_forward(&p, &g, &[0, 2]).unwrap();
        assert!(out.mu.iter().all(|&m| m > 0.9999));
    }

    #[test]
    fn uniform_loss_is_k_ln2() {
        let out = PolicyOutput {
            mu: vec![0.5; 7],
            logits: vec![0.0; 7],
        };
        let a = vec![1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0];
        let l = nll_loss(&[out], &[a]).unwrap();
        assert!((l - 7.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn saturated_correct_prediction_has_tiny_loss() {
        let (l, d) = bernoulli_nll(60.0, 1.0);
        assert!(l < 1e-20 && d.abs() < 1e-20);
        let (l, d) = bernoulli_nll(60.0, 0.0);
        assert_eq!(l, -LOG_CLAMP.ln());
        assert_eq!(d, 0.0);
    }

    #[test]
    fn window_mismatch_is_a_dimension_error() {
        let g = encode(&tiny(), None, None).unwrap();
        let p = PolicyParams::init(&small_cfg(3)).unwrap();
        assert!(matches!(
            policy_forward(&p, &g, &[0]),
            Err(Error::Dimension { .. })
        ));
        let p0 = PolicyParams::init(&small_cfg(0)).unwrap();
        assert!(policy_forward(&p0, &g, &[3]).is_err());
    }

    #[test]
    fn flat_round_trip() {
        let p = PolicyParams::init(&small_cfg(1)).unwrap();
        let mut q = p.zeros_like();
        q.set_flat(&p.flat()).unwrap();
        assert_eq!(p, q);
        assert!(q.set_flat(&[1.0]).is_err());
    }

    #[test]
    fn no_integer_variables_means_zero_gradient() {
        let g = encode(&tiny(), None, None).unwrap();
        let p = PolicyParams::init(&small_cfg(0)).unwrap();
        let (loss, grads) = backward(&p, &g, &[], &[]).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(grads.norm(), 0.0);
    }
}
