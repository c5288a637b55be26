use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Real, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    Sgd { lr: f64, momentum: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Adam {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn build<T: Real>(&self) -> Optimizer<T> {
        match *self {
            OptimizerConfig::Sgd { lr, momentum } => Optimizer::Sgd(Sgd::new(lr, momentum)),
            OptimizerConfig::Adam { lr, beta1, beta2, eps } => Optimizer::Adam(Adam::new(lr, beta1, beta2, eps)),
        }
    }
}

/// SGD with optional heavy-ball momentum: `v = mu*v + g; p -= lr*v`.
#[derive(Clone, Debug)]
pub struct Sgd<T> {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<Vec<T>>,
}

impl<T: Real> Sgd<T> {
    pub fn new(lr: f64, momentum: f64) -> Self {
        Self {
            lr,
            momentum,
            velocity: Vec::new(),
        }
    }

    pub fn step(&mut self, params: &mut [(String, &mut Tensor<T>)]) -> Result<()> {
        ensure_state(&mut self.velocity, params)?;
        let (lr, mu) = (T::lit(self.lr), T::lit(self.momentum));
        for ((name, p), vel) in params.iter_mut().zip(&mut self.velocity) {
            let (data, grad) = p.data_and_grad_mut();
            let grad = grad.ok_or_else(|| no_grad(name))?;
            for ((w, &g), v) in data.iter_mut().zip(grad.iter()).zip(vel.iter_mut()) {
                *v = mu * *v + g;
                *w -= lr * *v;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, params: &mut [(String, &mut Tensor<T>)]) -> Result<()> {
        ensure_state(&mut self.m, params)?;
        ensure_state(&mut self.v, params)?;
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let bc1 = T::lit(1.0 - self.beta1.powi(t));
        let bc2 = T::lit(1.0 - self.beta2.powi(t));
        let (lr, eps) = (T::lit(self.lr), T::lit(self.eps));
        for (((name, p), m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let (data, grad) = p.data_and_grad_mut();
            let grad = grad.ok_or_else(|| no_grad(name))?;
            for (((w, &g), mi), vi) in data.iter_mut().zip(grad.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (T::one() - b1) * g;
                *vi = b2 * *vi + (T::one() - b2) * g * g;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub enum Optimizer<T> {
    Sgd(Sgd<T>),
    Adam(Adam<T>),
}

impl<T: Real> Optimizer<T> {
    pub fn step(&mut self, params: &mut [(String, &mut Tensor<T>)]) -> Result<()> {
        match self {
            Optimizer::Sgd(o) => o.step(params),
            Optimizer::Adam(o) => o.step(params),
        }
    }

    /// Number of updates applied so far (always 0 for SGD, which keeps no
    /// step counter).
    pub fn steps(&self) -> u64 {
        match self {
            Optimizer::Sgd(_) => 0,
            Optimizer::Adam(a) => a.step,
        }
    }

    /// Moment buffers keyed by slot name, for checkpointing.
    pub fn state(&self, param_names: &[String]) -> Vec<(String, Vec<T>)> {
        let mut out = Vec::new();
        match self {
            Optimizer::Sgd(o) => {
                for (n, v) in param_names.iter().zip(&o.velocity) {
                    out.push((format!("optim.velocity.{n}"), v.clone()));
                }
            }
            Optimizer::Adam(o) => {
                for (n, m) in param_names.iter().zip(&o.m) {
                    out.push((format!("optim.m.{n}"), m.clone()));
                }
                for (n, v) in param_names.iter().zip(&o.v) {
                    out.push((format!("optim.v.{n}"), v.clone()));
                }
            }
        }
        out
    }

    /// Restores moment buffers written by [`Optimizer::state`].
    pub fn load_state(&mut self, param_names: &[String], steps: u64, lookup: impl Fn(&str) -> Option<Vec<T>>) -> Result<()> {
        let fetch = |slot: &str, n: &String| {
            lookup(&format!("optim.{slot}.{n}"))
                .ok_or_else(|| Error::State(format!("optimizer state for `{n}` missing from checkpoint")))
        };
        match self {
            Optimizer::Sgd(o) => {
                o.velocity = param_names.iter().map(|n| fetch("velocity", n)).collect::<Result<_>>()?;
            }
            Optimizer::Adam(o) => {
                o.m = param_names.iter().map(|n| fetch("m", n)).collect::<Result<_>>()?;
                o.v = param_names.iter().map(|n| fetch("v", n)).collect::<Result<_>>()?;
                o.step = steps;
            }
        }
        Ok(())
    }
}

fn ensure_state<T: Real>(state: &mut Vec<Vec<T>>, params: &[(String, &mut Tensor<T>)]) -> Result<()> {
    if state.is_empty() {
        *state = params.iter().map(|(_, p)| vec![T::zero(); p.len()]).collect();
    }
    if state.len() != params.len() || state.iter().zip(params).any(|(s, (_, p))| s.len() != p.len()) {
        return Err(Error::State("optimizer state does not match parameter set".into()));
    }
    Ok(())
}

fn no_grad(name: &str) -> Error {
    Error::State(format!("parameter `{name}` has no gradient buffer"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(values: &[f64], grads: &[f64]) -> Tensor<f64> {
        let mut t = Tensor::from_vec(&[values.len()], values.to_vec()).unwrap().requires_grad();
        t.grad_mut().unwrap().copy_from_slice(grads);
        t
    }

    #[test]
    fn plain_sgd_step() {
        let mut p = param(&[1.0, -2.0], &[0.5, -0.25]);
        let mut opt = Optimizer::Sgd(Sgd::new(0.1, 0.0));
        opt.step(&mut [("p".into(), &mut p)]).unwrap();
        assert_eq!(p.data(), &[1.0 - 0.05, -2.0 + 0.025]);
    }

    #[test]
    fn first_adam_step_moves_by_lr_against_gradient_sign() {
        let mut p = param(&[1.0, 1.0, 1.0], &[3.0, -0.02, 1e-3]);
        let mut opt = OptimizerConfig::default().build::<f64>();
        opt.step(&mut [("p".into(), &mut p)]).unwrap();
        let expect = [1.0 - 1e-3, 1.0 + 1e-3, 1.0 - 1e-3];
        for (a, b) in p.data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-7, "{a} vs {b}");
        }
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut p = param(&[0.3, -0.7], &[0.0, 0.0]);
            let mut opt = OptimizerConfig::default().build::<f64>();
            for i in 0..20 {
                let g = [p.data()[0] * 2.0 + i as f64 * 0.01, p.data()[1].sin()];
                p.grad_mut().unwrap().copy_from_slice(&g);
                opt.step(&mut [("p".into(), &mut p)]).unwrap();
            }
            p.data().to_vec()
        };
        assert_eq!(run(), run());
    }
}
