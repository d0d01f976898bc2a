//! First-order optimizers shared by initial-condition fitting and the
//! implicit time step.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam { beta1: default_beta1(), beta2: default_beta2(), eps: default_eps() }
    }
}

/// Geometric learning-rate schedule from `lr` down to `lr · final_factor`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub lr: f64,
    #[serde(default = "one")]
    pub final_factor: f64,
}

fn one() -> f64 {
    1.0
}

impl Schedule {
    pub fn constant(lr: f64) -> Self {
        Schedule { lr, final_factor: 1.0 }
    }

    pub fn at(&self, iteration: usize, total: usize) -> f64 {
        if total <= 1 || self.final_factor == 1.0 {
            return self.lr;
        }
        self.lr * self.final_factor.powf(iteration as f64 / (total - 1) as f64)
    }
}

#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, len: usize) -> Self {
        Optimizer { kind, m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    /// Applies one descent step to `x` in place.
    pub fn step(&mut self, x: &mut [f64], grad: &[f64], lr: f64) {
        match self.kind {
            OptimizerKind::Sgd => {
                for (x, g) in x.iter_mut().zip(grad) {
                    *x -= lr * g;
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                self.t += 1;
                let c1 = 1.0 - beta1.powi(self.t as i32);
                let c2 = 1.0 - beta2.powi(self.t as i32);
                for i in 0..x.len() {
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grad[i];
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grad[i] * grad[i];
                    let mh = self.m[i] / c1;
                    let vh = self.v[i] / c2;
                    x[i] -= lr * mh / (vh.sqrt() + eps);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut x = vec![3.0, -2.0];
        let mut opt = Optimizer::new(OptimizerKind::adam(), 2);
        let sched = Schedule { lr: 0.1, final_factor: 1e-3 };
        for k in 0..3000 {
            let g = vec![2.0 * x[0], 20.0 * x[1]];
            opt.step(&mut x, &g, sched.at(k, 3000));
        }
        assert!(x[0].abs() < 1e-6 && x[1].abs() < 1e-6, "{x:?}");
    }

    #[test]
    fn zero_gradient_does_not_move() {
        let mut x = vec![1.0];
        let mut opt = Optimizer::new(OptimizerKind::adam(), 1);
        opt.step(&mut x, &[0.0], 0.1);
        assert_eq!(x, vec![1.0]);
    }
}
