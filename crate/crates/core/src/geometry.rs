//! Flat-vector gradient geometry: flattening, cosine, angular deviation, and
//! dispersion statistics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::nn::{Dense, Matrix};
use crate::scalar::Scalar;

/// Vectors with Euclidean norm at or below this are degenerate: they have no
/// direction and are excluded from scoring and selection.
pub const EPS_NORM: f64 = 1e-12;

/// A client's flattened server-side parameter gradient for one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientVector<T> {
    pub client_id: usize,
    pub round: u32,
    pub values: Vec<T>,
}

impl<T: Scalar> GradientVector<T> {
    pub fn new(client_id: usize, round: u32, values: Vec<T>) -> Self {
        Self { client_id, round, values }
    }

    pub fn from_layers(client_id: usize, round: u32, grads: &[Dense<T>]) -> Self {
        Self::new(client_id, round, flatten(grads))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> T {
        norm(&self.values)
    }

    pub fn is_degenerate(&self) -> bool {
        is_degenerate(&self.values)
    }

    pub fn cast<U: Scalar>(&self) -> GradientVector<U> {
        GradientVector { client_id: self.client_id, round: self.round, values: self.values.iter().map(|v| v.cast()).collect() }
    }
}

/// Raised when an angle involves a vector of (near) zero norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("degenerate gradient: norm at or below {EPS_NORM:e}")]
pub struct Degenerate;

/// Layers in forward order; within a layer the weights row-major, then the bias.
pub fn flatten<T: Scalar>(layers: &[Dense<T>]) -> Vec<T> {
    let mut out = Vec::with_capacity(crate::nn::param_count(layers));
    for l in layers {
        out.extend_from_slice(l.weights.as_slice());
        out.extend_from_slice(&l.bias);
    }
    out
}

/// Inverse of [`flatten`], shaped like `template`.
pub fn unflatten<T: Scalar>(values: &[T], template: &[Dense<T>]) -> Result<Vec<Dense<T>>> {
    let expected = crate::nn::param_count(template);
    if values.len() != expected {
        return Err(Error::Config(format!("flat vector has {} values, layers need {expected}", values.len())));
    }
    let mut rest = values;
    let mut out = Vec::with_capacity(template.len());
    for l in template {
        let (rows, cols) = l.weights.shape();
        let (w, tail) = rest.split_at(rows * cols);
        let (b, tail) = tail.split_at(cols);
        out.push(Dense { weights: Matrix::from_vec(rows, cols, w.to_vec())?, bias: b.to_vec() });
        rest = tail;
    }
    Ok(out)
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

pub fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn is_degenerate<T: Scalar>(a: &[T]) -> bool {
    !(norm(a) > T::lit(EPS_NORM))
}

/// Cosine similarity clamped to `[-1, 1]`.
pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> Result<T, Degenerate> {
    let (na, nb) = (norm(a), norm(b));
    let eps = T::lit(EPS_NORM);
    if !(na > eps) || !(nb > eps) {
        return Err(Degenerate);
    }
    Ok((dot(a, b) / (na * nb)).max(-T::one()).min(T::one()))
}

/// Angle between two vectors, in `[0, π]`.
///
/// Equal to the arccosine of [`cosine`], but evaluated as
/// `2·atan2(‖â − b̂‖, ‖â + b̂‖)` on the unit vectors: arccosine loses about
/// half the significant digits near 0 and π.
pub fn angular_deviation<T: Scalar>(a: &[T], b: &[T]) -> Result<T, Degenerate> {
    debug_assert_eq!(a.len(), b.len());
    let (na, nb) = (norm(a), norm(b));
    let eps = T::lit(EPS_NORM);
    if !(na > eps) || !(nb > eps) {
        return Err(Degenerate);
    }
    let (mut diff, mut sum) = (T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        let (u, v) = (x / na, y / nb);
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    Ok(T::lit(2.0) * diff.sqrt().atan2(sum.sqrt()))
}

/// Mean angle over all unordered pairs of non-degenerate cohort members;
/// `None` when fewer than two remain.
pub fn pairwise_mean_deviation<T: Scalar>(cohort: &[GradientVector<T>]) -> Option<T> {
    let usable: Vec<&GradientVector<T>> = cohort.iter().filter(|g| !g.is_degenerate()).collect();
    if usable.len() < 2 {
        return None;
    }
    let mut sum = T::zero();
    let mut pairs = 0usize;
    for (i, a) in usable.iter().enumerate() {
        for b in &usable[i + 1..] {
            sum += angular_deviation(&a.values, &b.values).expect("non-degenerate");
            pairs += 1;
        }
    }
    Some(sum / T::lit(pairs as f64))
}

/// Mean and population standard deviation (Welford's update).
pub fn mean_std<T: Scalar>(values: &[T]) -> Option<(T, T)> {
    if values.is_empty() {
        return None;
    }
    let mut mean = T::zero();
    let mut m2 = T::zero();
    for (k, &x) in values.iter().enumerate() {
        let n = T::lit((k + 1) as f64);
        let delta = x - mean;
        mean += delta / n;
        m2 += delta * (x - mean);
    }
    let var = (m2 / T::lit(values.len() as f64)).max(T::zero());
    Some((mean, var.sqrt()))
}
