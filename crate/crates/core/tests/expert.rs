mod common;

use common::{brute_force_min, hamming_ball_min, random_binary_instance, rng};
use lnsforge::bnb::{first_incumbent, SolveBudget};
use lnsforge::expert::{
    expert_step, expert_trajectory, generate_trajectories, imitation_samples,
    read_step_records, read_trajectory_manifest, write_trajectories, EtaSchedule, ExpertConfig,
    InitialPolicy, InitialSource,
};
use lnsforge::graph::node_feature_width;
use lnsforge::mip::{evaluate_objective, is_feasible, MipInstance};
use rand::Rng;

fn start(inst: &MipInstance) -> lnsforge::mip::Assignment {
    first_incumbent(inst, &SolveBudget::nodes(10_000))
        .unwrap()
        .incumbent
        .unwrap()
}

fn instances(seed: u64, count: usize, n: usize) -> Vec<MipInstance> {
    let mut g = rng(seed);
    (0..count)
        .map(|_| {
            let m = g.gen_range(2..=6);
            random_binary_instance(&mut g, n, m)
        })
        .collect()
}

#[test]
fn step_finds_the_ball_minimum() {
    for (k, inst) in instances(11, 25, 10).iter().enumerate() {
        let x = start(inst);
        let eta = 1 + k % 3;
        let s = expert_step(inst, &x, eta, &SolveBudget::nodes(100_000)).unwrap();
        let oracle = hamming_ball_min(inst, &x, eta).unwrap();
        assert!((s.objective_next - oracle).abs() < 1e-6, "{k}: {} vs {oracle}", s.objective_next);
        assert!(is_feasible(inst, &s.x_next));
        let idx = inst.integer_indices();
        assert_eq!(s.action.len(), x.hamming(&s.x_next, idx));
        assert!(s.action.len() <= eta);
    }
}

#[test]
fn full_radius_reaches_the_global_optimum() {
    for inst in instances(12, 10, 9) {
        let x = start(&inst);
        let n = inst.integer_indices().len();
        let s = expert_step(&inst, &x, n, &SolveBudget::nodes(100_000)).unwrap();
        assert!((s.objective_next - brute_force_min(&inst).unwrap()).abs() < 1e-6);
    }
}

#[test]
fn trajectories_chain_and_improve() {
    let cfg = ExpertConfig {
        eta: EtaSchedule::Fixed(2),
        t_max: 10,
        ..ExpertConfig::default()
    };
    for inst in instances(13, 8, 12) {
        let x0 = start(&inst);
        let traj = expert_trajectory(&inst, x0.clone(), InitialSource::BnbIncumbent, &cfg).unwrap();
        assert!(!traj.steps.is_empty() && traj.steps.len() <= 10);
        assert_eq!(traj.steps[0].x_t, x0);
        for w in traj.steps.windows(2) {
            assert_eq!(w[0].x_next, w[1].x_t);
        }
        for s in &traj.steps {
            assert!(s.objective_next <= s.objective_t + 1e-9);
            assert_eq!(s.objective_t, evaluate_objective(&inst, &s.x_t).unwrap());
        }
    }
}

#[test]
fn trajectory_files_are_reproducible() {
    let insts = instances(14, 5, 10);
    let cfg = ExpertConfig {
        t_max: 5,
        ..ExpertConfig::default()
    };
    let dirs: Vec<_> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for d in &dirs {
        let (trajs, skipped) = generate_trajectories(&insts, &cfg, &InitialPolicy::BnbIncumbent).unwrap();
        assert!(skipped.is_empty());
        let files: Vec<String> = insts.iter().map(|i| format!("{}.json", i.name())).collect();
        let items: Vec<_> = trajs
            .iter()
            .zip(&insts)
            .zip(&files)
            .map(|((t, i), f)| (t, i.integer_indices(), f.as_str()))
            .collect();
        write_trajectories(d.path(), "../instances", &items, skipped, &cfg).unwrap();
    }
    let m = read_trajectory_manifest(dirs[0].path()).unwrap();
    assert_eq!(m.entries.len(), 5);
    for e in &m.entries {
        let a = std::fs::read(dirs[0].path().join(&e.trajectory_file)).unwrap();
        let b = std::fs::read(dirs[1].path().join(&e.trajectory_file)).unwrap();
        assert_eq!(a, b);
    }
    assert_eq!(
        std::fs::read(dirs[0].path().join("manifest.json")).unwrap(),
        std::fs::read(dirs[1].path().join("manifest.json")).unwrap()
    );

    // Records decode into imitation samples with the expected shapes.
    let e = &m.entries[0];
    let inst = insts.iter().find(|i| i.name() == e.instance).unwrap();
    let records = read_step_records(&dirs[0].path().join(&e.trajectory_file)).unwrap();
    let samples = imitation_samples(inst, &records, 3).unwrap();
    assert_eq!(samples.len(), records.len());
    for (s, r) in samples.iter().zip(&records) {
        assert_eq!(s.action.iter().filter(|&&a| a == 1.0).count(), r.a_t.len());
        assert_eq!(s.graph.node_features().cols(), node_feature_width(3));
    }
}
