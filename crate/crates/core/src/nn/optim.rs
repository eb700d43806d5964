use super::model::{same_shapes, Dense};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// SGD with heavy-ball momentum: `v ← μ·v + g`, `p ← p − lr·v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd<T> {
    pub lr: T,
    pub momentum: T,
    velocity: Vec<Dense<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(lr: T, momentum: T, params: &[Dense<T>]) -> Result<Self> {
        if !(lr > T::zero()) {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        if !(momentum >= T::zero() && momentum < T::one()) {
            return Err(Error::Config(format!("momentum must lie in [0, 1), got {momentum}")));
        }
        Ok(Self { lr, momentum, velocity: params.iter().map(Dense::zeros_like).collect() })
    }

    pub fn velocity(&self) -> &[Dense<T>] {
        &self.velocity
    }

    /// Applies one update. Tensor ids count weights then bias per layer in
    /// forward order (layer `i` owns ids `2i` and `2i + 1`).
    pub fn step(&mut self, params: &mut [Dense<T>], grads: &[Dense<T>]) -> Result<()> {
        if !same_shapes(params, grads) || !same_shapes(params, &self.velocity) {
            return Err(Error::Config("parameter, gradient, and velocity shapes differ".into()));
        }
        for (i, g) in grads.iter().enumerate() {
            if !g.weights.is_finite() {
                return Err(Error::Numeric { tensor: 2 * i, reason: "non-finite gradient".into() });
            }
            if g.bias.iter().any(|b| !b.is_finite()) {
                return Err(Error::Numeric { tensor: 2 * i + 1, reason: "non-finite gradient".into() });
            }
        }
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            update(p.weights.as_mut_slice(), g.weights.as_slice(), v.weights.as_mut_slice(), self.lr, self.momentum);
            update(&mut p.bias, &g.bias, &mut v.bias, self.lr, self.momentum);
        }
        Ok(())
    }
}

fn update<T: Scalar>(p: &mut [T], g: &[T], v: &mut [T], lr: T, momentum: T) {
    for ((p, &g), v) in p.iter_mut().zip(g).zip(v) {
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
}
