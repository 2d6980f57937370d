use serde::{Deserialize, Serialize};

use super::PolicyParams;
use crate::error::{Error, Result};

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut PolicyParams, grads: &PolicyParams) -> Result<()> {
        let n = params.n_params();
        if grads.n_params() != n {
            return Err(Error::Dimension {
                context: "gradient size",
                expected: n,
                got: grads.n_params(),
            });
        }
        if self.m.is_empty() {
            self.m = vec![0.0; n];
            self.v = vec![0.0; n];
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let mut k = 0;
        for (p, g) in params.slices_mut().into_iter().zip(grads.slices()) {
            for (pi, &gi) in p.iter_mut().zip(g) {
                self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * gi;
                self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * gi * gi;
                if self.lr != 0.0 {
                    let mhat = self.m[k] / c1;
                    let vhat = self.v[k] / c2;
                    *pi -= self.lr * mhat / (vhat.sqrt() + self.eps);
                }
                k += 1;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{PolicyConfig, PolicyParams};

    #[test]
    fn first_step_moves_each_parameter_by_lr() {
        let cfg = PolicyConfig {
            gcn_layers: 1,
            embed: 2,
            hidden: 2,
            window: 0,
            seed: 1,
        };
        let mut p = PolicyParams::init(&cfg).unwrap();
        let before = p.flat();
        let mut g = p.zeros_like();
        let ones = vec![1.0; g.n_params()];
        g.set_flat(&ones).unwrap();
        let mut adam = Adam::new(0.01, 0.9, 0.999);
        adam.step(&mut p, &g).unwrap();
        for (a, b) in before.iter().zip(p.flat()) {
            assert!((a - b - 0.01).abs() < 1e-8);
        }
    }
}
