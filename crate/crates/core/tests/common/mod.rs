//! Independent brute-force oracles and random instance builders shared by the
//! integration tests. Nothing here calls the simplex or branch-and-bound code.
#![allow(dead_code)]

use lnsforge::mip::{Assignment, Constraint, MipInstance, Variable, FEAS_TOL};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random pure-binary instance that is feasible by construction: rows are
/// built around a hidden witness with a small random slack.
pub fn random_binary_instance(rng: &mut impl Rng, n: usize, m: usize) -> MipInstance {
    let witness: Vec<f64> = (0..n).map(|_| rng.gen_range(0..2) as f64).collect();
    let vars = (0..n)
        .map(|i| Variable::binary(format!("x{i}"), rng.gen_range(-10..=10) as f64))
        .collect();
    let mut cons = Vec::new();
    for r in 0..m {
        let mut terms = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.5) {
                let a = rng.gen_range(-6..=6) as f64;
                if a != 0.0 {
                    terms.push((j, a));
                }
            }
        }
        if terms.is_empty() {
            terms.push((rng.gen_range(0..n), 1.0));
        }
        let act: f64 = terms.iter().map(|&(j, a)| a * witness[j]).sum();
        let rhs = act + rng.gen_range(0..3) as f64;
        cons.push(Constraint::new(format!("r{r}"), terms, rhs));
    }
    MipInstance::new(format!("rand-{n}x{m}"), vars, cons).unwrap()
}

/// All points of `{0,1}^n`, lowest mask first.
pub fn cube(n: usize) -> impl Iterator<Item = Vec<f64>> {
    (0u64..(1u64 << n)).map(move |mask| (0..n).map(|i| ((mask >> i) & 1) as f64).collect())
}

pub fn feasible(inst: &MipInstance, x: &[f64]) -> bool {
    inst.constraints()
        .iter()
        .all(|c| c.terms.iter().map(|&(j, a)| a * x[j]).sum::<f64>() <= c.rhs + FEAS_TOL)
}

fn objective(inst: &MipInstance, x: &[f64]) -> f64 {
    inst.variables().iter().zip(x).map(|(v, xi)| v.obj_coef * xi).sum()
}

/// Minimum objective over all feasible binary points of a pure-binary instance.
pub fn brute_force_min(inst: &MipInstance) -> Option<f64> {
    cube(inst.n_vars())
        .filter(|x| feasible(inst, x))
        .map(|x| objective(inst, &x))
        .min_by(f64::total_cmp)
}

/// Minimum over feasible binary points within Hamming distance `eta` of `center`.
pub fn hamming_ball_min(inst: &MipInstance, center: &Assignment, eta: usize) -> Option<f64> {
    cube(inst.n_vars())
        .filter(|x| {
            x.iter()
                .zip(center.values())
                .filter(|(a, b)| (*a - *b).abs() > 0.5)
                .count()
                <= eta
        })
        .filter(|x| feasible(inst, x))
        .map(|x| objective(inst, &x))
        .min_by(f64::total_cmp)
}

/// Minimum over feasible binary points that agree with `center` outside `free`.
pub fn neighborhood_min(inst: &MipInstance, center: &Assignment, free: &[usize]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for mask in 0u64..(1u64 << free.len()) {
        let mut x = center.values().to_vec();
        for (k, &j) in free.iter().enumerate() {
            x[j] = ((mask >> k) & 1) as f64;
        }
        if feasible(inst, &x) {
            let f = objective(inst, &x);
            best = Some(best.map_or(f, |b: f64| b.min(f)));
        }
    }
    best
}

/// Dense LP `min c^T x, A x <= b, lb <= x <= ub` for the vertex oracle.
pub struct DenseLp {
    pub c: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
}

impl DenseLp {
    pub fn random(rng: &mut impl Rng, n: usize, m: usize) -> Self {
        let c = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let lb: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..1.0)).collect();
        let ub = lb.iter().map(|l| l + rng.gen_range(0.5..4.0)).collect();
        let a = (0..m)
            .map(|_| (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect())
            .collect();
        let b = (0..m).map(|_| rng.gen_range(-2.0..6.0)).collect();
        DenseLp { c, a, b, lb, ub }
    }

    pub fn to_instance(&self) -> MipInstance {
        let vars = (0..self.c.len())
            .map(|j| Variable::continuous(format!("y{j}"), self.lb[j], self.ub[j], self.c[j]))
            .collect();
        let cons = self
            .a
            .iter()
            .zip(&self.b)
            .enumerate()
            .map(|(i, (row, &b))| {
                Constraint::new(format!("r{i}"), row.iter().copied().enumerate().collect(), b)
            })
            .collect();
        MipInstance::new("lp", vars, cons).unwrap()
    }

    /// Enumerates every basic point (n active constraints among rows and
    /// bounds), keeping the feasible ones. Returns the minimum objective.
    pub fn vertex_min(&self) -> Option<f64> {
        let n = self.c.len();
        let mut rows: Vec<(Vec<f64>, f64)> = self.a.iter().cloned().zip(self.b.iter().copied()).collect();
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            rows.push((e.clone(), self.ub[j]));
            e[j] = -1.0;
            rows.push((e, -self.lb[j]));
        }
        let mut best: Option<f64> = None;
        let mut chosen = Vec::with_capacity(n);
        self.visit(&rows, 0, &mut chosen, &mut best);
        best
    }

    fn visit(&self, rows: &[(Vec<f64>, f64)], start: usize, chosen: &mut Vec<usize>, best: &mut Option<f64>) {
        let n = self.c.len();
        if chosen.len() == n {
            if let Some(x) = solve_square(rows, chosen, n) {
                let ok = rows.iter().all(|(r, b)| dot(r, &x) <= b + 1e-9);
                if ok {
                    let f = dot(&self.c, &x);
                    *best = Some(best.map_or(f, |v: f64| v.min(f)));
                }
            }
            return;
        }
        for i in start..rows.len() {
            if rows.len() - i < n - chosen.len() {
                break;
            }
            chosen.push(i);
            self.visit(rows, i + 1, chosen, best);
            chosen.pop();
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn solve_square(rows: &[(Vec<f64>, f64)], chosen: &[usize], n: usize) -> Option<Vec<f64>> {
    let mut m: Vec<Vec<f64>> = chosen
        .iter()
        .map(|&i| {
            let mut r = rows[i].0.clone();
            r.push(rows[i].1);
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[piv][col].abs() < 1e-10 {
            return None;
        }
        m.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = m[r][col] / m[col][col];
                if f != 0.0 {
                    for k in col..=n {
                        m[r][k] -= f * m[col][k];
                    }
                }
            }
        }
    }
    Some((0..n).map(|i| m[i][n] / m[i][i]).collect())
}
