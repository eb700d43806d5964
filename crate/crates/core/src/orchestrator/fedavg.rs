use crate::error::{Error, Result};
use crate::nn::{same_shapes, Dense};
use crate::scalar::Scalar;

/// Weighted average of parameter sets. Weights are normalised to sum to one;
/// accumulation runs in `f64` whatever the storage type.
pub fn fedavg<T: Scalar>(models: &[&[Dense<T>]], weights: &[f64]) -> Result<Vec<Dense<T>>> {
    let first = *models.first().ok_or_else(|| Error::Config("fedavg of no models".into()))?;
    if models.len() != weights.len() {
        return Err(Error::Config(format!("{} models but {} weights", models.len(), weights.len())));
    }
    if models.iter().any(|m| !same_shapes(first, m)) {
        return Err(Error::Config("fedavg over models of different shapes".into()));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::Config("fedavg weights must be finite and non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::Config("fedavg weights are all zero".into()));
    }
    let mix = |pick: &dyn Fn(&[Dense<T>]) -> &[T], len: usize| -> Vec<T> {
        let mut acc = vec![0.0f64; len];
        for (m, &w) in models.iter().zip(weights) {
            let w = w / total;
            for (a, v) in acc.iter_mut().zip(pick(m)) {
                *a += w * v.as_f64();
            }
        }
        acc.into_iter().map(T::lit).collect()
    };
    Ok((0..first.len())
        .map(|l| {
            let shape = first[l].weights.shape();
            let w = mix(&|m| m[l].weights.as_slice(), shape.0 * shape.1);
            let b = mix(&|m| &m[l].bias, first[l].bias.len());
            let mut d = Dense::zeros(shape.0, shape.1);
            d.weights.as_mut_slice().copy_from_slice(&w);
            d.bias = b;
            d
        })
        .collect())
}
