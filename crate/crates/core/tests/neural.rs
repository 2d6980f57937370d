mod common;

use lnsforge::graph::{encode, node_feature_width, BipartiteGraph, HistoryWindow};
use lnsforge::mip::{Assignment, Constraint, MipInstance, Variable};
use lnsforge::neural::{
    backward, gcn_forward, log_prob, logit, nll_loss, policy_forward, sigmoid, train, Dense,
    MlpParams, PolicyConfig, PolicyOutput, PolicyParams, TrainConfig, TrainSample,
};
use lnsforge::tensor::Matrix;
use lnsforge::Error;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn cfg(window: usize, seed: u64) -> PolicyConfig {
    PolicyConfig {
        gcn_layers: 2,
        embed: 6,
        hidden: 7,
        window,
        seed,
    }
}

fn graph_for(inst: &MipInstance, window: usize) -> BipartiteGraph {
    let mut h = HistoryWindow::new(window);
    if window > 0 {
        h.push(Assignment::new((0..inst.n_vars()).map(|i| (i % 2) as f64).collect()));
    }
    encode(inst, None, Some(&h)).unwrap()
}

#[test]
fn identity_layer_on_isolated_nodes_returns_inputs() {
    let inst = MipInstance::new(
        "iso",
        vec![Variable::binary("a", 1.0), Variable::binary("b", -3.0)],
        vec![],
    )
    .unwrap();
    let g = encode(&inst, None, None).unwrap();
    let f = node_feature_width(0);
    let params = PolicyParams {
        feature_version: lnsforge::graph::FEATURE_VERSION,
        window: 0,
        gcn: vec![MlpParams {
            layers: vec![Dense {
                weights: Matrix::identity(f),
                bias: vec![0.0; f],
            }],
        }],
        head: MlpParams::zeros(&[f, 1]),
    };
    assert_eq!(gcn_forward(&params, &g).unwrap(), g.node_features());
}

#[test]
fn single_layer_matches_hand_computation() {
    // x0 and x1 share one constraint: nodes 0, 1 (variables) and 2 (row).
    let inst = MipInstance::new(
        "three",
        vec![Variable::binary("a", 2.0), Variable::binary("b", -1.0)],
        vec![Constraint::new("r", vec![(0, 1.0), (1, 3.0)], 2.0)],
    )
    .unwrap();
    let g = encode(&inst, None, None).unwrap();
    let mut rng = common::rng(11);
    let mut params = PolicyParams::init(&PolicyConfig {
        gcn_layers: 1,
        embed: 3,
        hidden: 4,
        window: 0,
        seed: 2,
    })
    .unwrap();
    for layer in &mut params.gcn[0].layers {
        for b in &mut layer.bias {
            *b = rng.gen_range(-0.5..0.5);
        }
    }
    let u = g.node_features();
    let mlp = &params.gcn[0].layers;
    let mut m = vec![vec![0.0; 3]; 3];
    for node in 0..3 {
        let mut h = vec![0.0; 4];
        for (k, hk) in h.iter_mut().enumerate() {
            let mut s = mlp[0].bias[k];
            for (i, ui) in u.row(node).iter().enumerate() {
                s += ui * mlp[0].weights[(i, k)];
            }
            *hk = s.max(0.0);
        }
        for (o, mo) in m[node].iter_mut().enumerate() {
            let mut s = mlp[1].bias[o];
            for (k, hk) in h.iter().enumerate() {
                s += hk * mlp[1].weights[(k, o)];
            }
            *mo = s;
        }
    }
    let adj = [[1.0, 0.0, 1.0], [0.0, 1.0, 1.0], [1.0, 1.0, 1.0]];
    let z = gcn_forward(&params, &g).unwrap();
    for i in 0..3 {
        for o in 0..3 {
            let expect: f64 = (0..3).map(|j| adj[i][j] * m[j][o]).sum();
            assert!((z[(i, o)] - expect).abs() < 1e-12);
        }
    }
    assert_eq!(g.adjacency().row(2), &[1.0, 1.0, 1.0]);
}

#[test]
fn log_prob_is_product_of_bernoullis() {
    let mu = [0.1, 0.7, 0.45, 0.999, 0.3];
    let out = PolicyOutput {
        mu: mu.to_vec(),
        logits: mu.iter().map(|&m| logit(m)).collect(),
    };
    let a = [0.0, 1.0, 1.0, 1.0, 0.0];
    let product: f64 = mu
        .iter()
        .zip(&a)
        .map(|(&m, &ai)| if ai == 1.0 { m } else { 1.0 - m })
        .product();
    assert!((log_prob(&out, &a).unwrap() - product.ln()).abs() < 1e-12);
}

#[test]
fn nll_matches_naive_loop() {
    let mut rng = common::rng(5);
    let mut outputs = Vec::new();
    let mut actions = Vec::new();
    let mut naive = 0.0;
    for _ in 0..6 {
        let k = rng.gen_range(1..12);
        let mu: Vec<f64> = (0..k).map(|_| rng.gen_range(0.001..0.999)).collect();
        let a: Vec<f64> = (0..k).map(|_| rng.gen_range(0..2) as f64).collect();
        for (m, ai) in mu.iter().zip(&a) {
            naive -= ai * m.max(1e-12).ln() + (1.0 - ai) * (1.0 - m).max(1e-12).ln();
        }
        outputs.push(PolicyOutput {
            logits: mu.iter().map(|&m| logit(m)).collect(),
            mu,
        });
        actions.push(a);
    }
    let l = nll_loss(&outputs, &actions).unwrap();
    assert!((l - naive).abs() < 1e-12 * naive.max(1.0), "{l} vs {naive}");
    assert!(matches!(
        nll_loss(&outputs, &actions[..2]),
        Err(Error::Dimension { .. })
    ));
}

fn total_loss(p: &PolicyParams, g: &BipartiteGraph, idx: &[usize], a: &[f64]) -> f64 {
    let out = policy_forward(p, g, idx).unwrap();
    -log_prob(&out, a).unwrap()
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = common::rng(21);
    let inst = common::random_binary_instance(&mut rng, 10, 5);
    let g = graph_for(&inst, 3);
    let idx: Vec<usize> = (0..10).collect();
    let a: Vec<f64> = (0..10).map(|i| ((i * 7) % 3 == 0) as u8 as f64).collect();
    let params = PolicyParams::init(&cfg(3, 8)).unwrap();
    let (loss, grads) = backward(&params, &g, &idx, &a).unwrap();
    assert!((loss - total_loss(&params, &g, &idx, &a)).abs() < 1e-10);
    let base = params.flat();
    let analytic = grads.flat();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for k in 0..base.len() {
        let mut q = params.clone();
        let mut v = base.clone();
        v[k] += h;
        q.set_flat(&v).unwrap();
        let up = total_loss(&q, &g, &idx, &a);
        v[k] -= 2.0 * h;
        q.set_flat(&v).unwrap();
        let down = total_loss(&q, &g, &idx, &a);
        let fd = (up - down) / (2.0 * h);
        let err = (fd - analytic[k]).abs();
        let tol = 1e-4f64.max(1e-3 * fd.abs().max(analytic[k].abs()));
        assert!(err <= tol, "param {k}: fd {fd} analytic {}", analytic[k]);
        worst = worst.max(err);
    }
    assert!(worst.is_finite());
}

#[test]
fn saturated_correct_policy_has_near_zero_gradient() {
    let mut rng = common::rng(2);
    let inst = common::random_binary_instance(&mut rng, 10, 4);
    let g = graph_for(&inst, 3);
    let mut p = PolicyParams::init(&cfg(3, 1)).unwrap();
    let last = p.head.layers.len() - 1;
    p.head.layers[last].weights.data_mut().iter_mut().for_each(|w| *w = 0.0);
    p.head.layers[last].bias[0] = 40.0;
    let idx: Vec<usize> = (0..10).collect();
    let (loss, grads) = backward(&p, &g, &idx, &[1.0; 10]).unwrap();
    assert!(loss < 1e-12);
    assert!(grads.norm() < 1e-6);
}

#[test]
fn same_params_evaluate_any_size() {
    let p = PolicyParams::init(&cfg(3, 3)).unwrap();
    let mut rng = common::rng(9);
    for (n, m) in [(4, 2), (13, 9), (30, 1)] {
        let inst = common::random_binary_instance(&mut rng, n, m);
        let out = policy_forward(&p, &graph_for(&inst, 3), inst.integer_indices()).unwrap();
        assert_eq!(out.mu.len(), n);
        assert!(out.mu.iter().zip(&out.logits).all(|(&m, &l)| m == sigmoid(l) && m > 0.0 && m < 1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn policy_is_permutation_equivariant(seed in any::<u64>(), n in 2usize..10, m in 1usize..6) {
        let mut rng = common::rng(seed);
        let inst = common::random_binary_instance(&mut rng, n, m);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let mut con_perm: Vec<usize> = (0..m).collect();
        con_perm.shuffle(&mut rng);
        let p = PolicyParams::init(&cfg(3, seed)).unwrap();
        let x = Assignment::new((0..n).map(|_| rng.gen_range(0..2) as f64).collect());
        let mut h = HistoryWindow::new(3);
        h.push(x.clone());
        let mut hp = HistoryWindow::new(3);
        hp.push(x.permuted(&perm));
        let pinst = inst.permuted(&perm, &con_perm).unwrap();
        let out = policy_forward(&p, &encode(&inst, None, Some(&h)).unwrap(), inst.integer_indices()).unwrap();
        let outp = policy_forward(&p, &encode(&pinst, None, Some(&hp)).unwrap(), pinst.integer_indices()).unwrap();
        for i in 0..n {
            prop_assert_eq!(out.mu[i].to_bits(), outp.mu[perm[i]].to_bits());
        }
    }
}

fn smoke_samples(count: usize, seed: u64) -> Vec<TrainSample> {
    let mut rng = common::rng(seed);
    (0..count)
        .map(|k| {
            let inst = common::random_binary_instance(&mut rng, 12, 6);
            let action = (0..12).map(|i| (inst.variables()[i].obj_coef > 0.0) as u8 as f64).collect();
            TrainSample {
                id: format!("s{k:03}"),
                graph: graph_for(&inst, 3),
                integer_indices: inst.integer_indices().to_vec(),
                action,
            }
        })
        .collect()
}

fn train_cfg(epochs: usize, lr: f64) -> TrainConfig {
    TrainConfig {
        policy: cfg(3, 17),
        epochs,
        lr,
        ..TrainConfig::default()
    }
}

#[test]
fn single_sample_training_decreases_after_warmup() {
    // Adam shows isolated one-epoch upticks, so compare ten-epoch means.
    let samples = smoke_samples(1, 30);
    let config = TrainConfig {
        policy: PolicyConfig {
            window: 3,
            seed: 17,
            ..PolicyConfig::default()
        },
        epochs: 200,
        ..TrainConfig::default()
    };
    let losses = train(&samples, &[], &config).unwrap().losses("train");
    assert_eq!(losses.len(), 201);
    let blocks: Vec<f64> = (1..20)
        .map(|b| losses[b * 10 + 1..=b * 10 + 10].iter().sum::<f64>() / 10.0)
        .collect();
    for w in blocks.windows(2) {
        assert!(w[1] < w[0], "{blocks:?}");
    }
    assert!(losses[200] < 0.05 * losses[0]);
}

#[test]
fn zero_learning_rate_leaves_params_untouched() {
    let samples = smoke_samples(3, 31);
    let out = train(&samples, &[], &train_cfg(5, 0.0)).unwrap();
    let init = PolicyParams::init(&cfg(3, 17)).unwrap();
    assert_eq!(out.params.flat(), init.flat());
}

#[test]
fn full_batch_training_ignores_sample_order() {
    let samples = smoke_samples(6, 32);
    let mut shuffled = samples.clone();
    shuffled.shuffle(&mut common::rng(1));
    let a = train(&samples, &samples[..2], &train_cfg(15, 1e-2)).unwrap();
    let b = train(&shuffled, &samples[..2], &train_cfg(15, 1e-2)).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.log, b.log);
}

#[test]
fn nan_parameters_abort_training() {
    let samples = smoke_samples(2, 33);
    let mut p = PolicyParams::init(&cfg(3, 17)).unwrap();
    p.head.layers[0].bias[0] = f64::NAN;
    let err = lnsforge::neural::train_from(p, &samples, &[], &train_cfg(3, 1e-3)).unwrap_err();
    match err {
        Error::NanLoss { epoch, sample } => {
            assert_eq!(epoch, 0);
            assert_eq!(sample, "s000");
        }
        other => panic!("unexpected {other}"),
    }
}
