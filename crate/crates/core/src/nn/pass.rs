//! Forward and backward passes over the two halves of a split network.

use super::model::{Activation, ClientModel, Dense, ServerModel};
use super::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-layer values retained by a forward pass.
#[derive(Debug, Clone)]
struct StackCache<T> {
    /// Input to each layer.
    inputs: Vec<Matrix<T>>,
    /// Pre-activation output of each layer.
    pre: Vec<Matrix<T>>,
}

fn shapes<T: Scalar>(layers: &[Dense<T>]) -> Vec<(usize, usize)> {
    layers.iter().map(|l| l.weights.shape()).collect()
}

fn affine<T: Scalar>(layer: &Dense<T>, x: &Matrix<T>) -> Matrix<T> {
    let mut z = x.matmul(&layer.weights);
    for r in 0..z.rows() {
        for (v, &b) in z.row_mut(r).iter_mut().zip(&layer.bias) {
            *v += b;
        }
    }
    z
}

fn forward_stack<T: Scalar>(
    layers: &[Dense<T>],
    activation: Activation,
    input: &Matrix<T>,
    activate_last: bool,
) -> (Matrix<T>, StackCache<T>) {
    let mut cache = StackCache { inputs: Vec::with_capacity(layers.len()), pre: Vec::with_capacity(layers.len()) };
    let mut x = input.clone();
    for (i, layer) in layers.iter().enumerate() {
        let z = affine(layer, &x);
        let out = if activate_last || i + 1 < layers.len() { z.map(|v| activation.apply(v)) } else { z.clone() };
        cache.inputs.push(x);
        cache.pre.push(z);
        x = out;
    }
    (x, cache)
}

fn backward_stack<T: Scalar>(
    layers: &[Dense<T>],
    activation: Activation,
    cache: &StackCache<T>,
    grad_out: &Matrix<T>,
    activate_last: bool,
) -> (Vec<Dense<T>>, Matrix<T>) {
    let n = layers.len();
    let mut grads: Vec<Dense<T>> = layers.iter().map(Dense::zeros_like).collect();
    let mut upstream = grad_out.clone();
    for i in (0..n).rev() {
        let dz = if activate_last || i + 1 < n {
            let pre = cache.pre[i].as_slice();
            let mut d = upstream;
            for (g, &z) in d.as_mut_slice().iter_mut().zip(pre) {
                *g *= activation.derivative(z);
            }
            d
        } else {
            upstream
        };
        grads[i].weights = cache.inputs[i].t_matmul(&dz);
        let mut db = vec![T::zero(); dz.cols()];
        for r in 0..dz.rows() {
            for (b, &g) in db.iter_mut().zip(dz.row(r)) {
                *b += g;
            }
        }
        grads[i].bias = db;
        upstream = dz.matmul_t(&layers[i].weights);
    }
    (grads, upstream)
}

/// State kept by [`forward_client`] for the matching [`backward_client`].
#[derive(Debug, Clone)]
pub struct ClientCache<T> {
    stack: StackCache<T>,
    signature: Vec<(usize, usize)>,
}

/// State kept by [`forward_server`] for the matching [`backward_server`].
#[derive(Debug, Clone)]
pub struct ServerCache<T> {
    stack: StackCache<T>,
    signature: Vec<(usize, usize)>,
    probs: Matrix<T>,
    labels: Vec<usize>,
    example_weights: Vec<T>,
}

impl<T: Scalar> ServerCache<T> {
    /// Softmax probabilities, one row per example.
    pub fn probabilities(&self) -> &Matrix<T> {
        &self.probs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Weight of each example's loss in the backward pass (default `1/batch`).
    pub fn example_weights(&self) -> &[T] {
        &self.example_weights
    }

    pub fn set_example_weights(&mut self, weights: Vec<T>) -> Result<()> {
        if weights.len() != self.labels.len() {
            return Err(Error::Protocol(format!(
                "{} example weights for a batch of {}",
                weights.len(),
                self.labels.len()
            )));
        }
        self.example_weights = weights;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ServerForward<T> {
    pub per_example_losses: Vec<T>,
    pub mean_loss: T,
    pub cache: ServerCache<T>,
}

pub fn forward_client<T: Scalar>(client: &ClientModel<T>, inputs: &Matrix<T>) -> Result<(Matrix<T>, ClientCache<T>)> {
    if inputs.cols() != client.input_dim() {
        return Err(Error::Config(format!(
            "input width {} does not match client input {}",
            inputs.cols(),
            client.input_dim()
        )));
    }
    let (out, stack) = forward_stack(&client.layers, client.activation, inputs, true);
    if let Some(i) = out.first_non_finite() {
        return Err(Error::Numeric { tensor: i, reason: "non-finite activation".into() });
    }
    Ok((out, ClientCache { stack, signature: shapes(&client.layers) }))
}

pub fn forward_server<T: Scalar>(
    server: &ServerModel<T>,
    activations: &Matrix<T>,
    labels: &[usize],
) -> Result<ServerForward<T>> {
    if activations.cols() != server.input_dim() {
        return Err(Error::Config(format!(
            "activation width {} does not match server input {}",
            activations.cols(),
            server.input_dim()
        )));
    }
    if activations.rows() != labels.len() || labels.is_empty() {
        return Err(Error::Data(format!("{} activation rows for {} labels", activations.rows(), labels.len())));
    }
    let classes = server.num_classes();
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::Data(format!("label {bad} out of range for {classes} classes")));
    }
    let (logits, stack) = forward_stack(&server.layers, server.activation, activations, false);
    let mut probs = Matrix::zeros(logits.rows(), classes);
    let mut losses = Vec::with_capacity(labels.len());
    for (r, &y) in labels.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let denom: T = row.iter().map(|&z| (z - max).exp()).sum();
        for (p, &z) in probs.row_mut(r).iter_mut().zip(row) {
            *p = (z - max).exp() / denom;
        }
        losses.push(denom.ln() - (row[y] - max));
    }
    let n = T::lit(labels.len() as f64);
    let mean_loss = losses.iter().copied().sum::<T>() / n;
    if !mean_loss.is_finite() {
        return Err(Error::Numeric { tensor: 0, reason: "non-finite loss".into() });
    }
    Ok(ServerForward {
        per_example_losses: losses,
        mean_loss,
        cache: ServerCache {
            stack,
            signature: shapes(&server.layers),
            probs,
            labels: labels.to_vec(),
            example_weights: vec![T::one() / n; labels.len()],
        },
    })
}

/// Gradients of the weighted cross-entropy with respect to the server
/// parameters and to the incoming activations.
pub fn backward_server<T: Scalar>(
    server: &ServerModel<T>,
    cache: &ServerCache<T>,
) -> Result<(Vec<Dense<T>>, Matrix<T>)> {
    if cache.signature != shapes(&server.layers) {
        return Err(Error::Protocol("server cache does not match server model".into()));
    }
    let mut dlogits = cache.probs.clone();
    for (r, (&y, &w)) in cache.labels.iter().zip(&cache.example_weights).enumerate() {
        let row = dlogits.row_mut(r);
        row[y] -= T::one();
        row.iter_mut().for_each(|g| *g *= w);
    }
    Ok(backward_stack(&server.layers, server.activation, &cache.stack, &dlogits, false))
}

pub fn backward_client<T: Scalar>(
    client: &ClientModel<T>,
    cache: &ClientCache<T>,
    activation_grads: &Matrix<T>,
) -> Result<Vec<Dense<T>>> {
    if cache.signature != shapes(&client.layers) {
        return Err(Error::Protocol("client cache does not match client model".into()));
    }
    let out_shape = cache.stack.pre.last().map(Matrix::shape).unwrap_or_default();
    if activation_grads.shape() != out_shape {
        return Err(Error::Protocol(format!(
            "activation gradient shape {:?} does not match activations {:?}",
            activation_grads.shape(),
            out_shape
        )));
    }
    Ok(backward_stack(&client.layers, client.activation, &cache.stack, activation_grads, true).0)
}

/// Forward pass through an unsplit stack: activation after every layer but the last.
pub fn forward_layers<'a, T: Scalar>(
    layers: impl IntoIterator<Item = &'a Dense<T>>,
    activation: Activation,
    inputs: &Matrix<T>,
) -> Matrix<T> {
    let layers: Vec<Dense<T>> = layers.into_iter().cloned().collect();
    forward_stack(&layers, activation, inputs, false).0
}

/// Row-wise argmax; ties resolve to the lowest class index.
pub fn argmax_rows<T: Scalar>(logits: &Matrix<T>) -> Vec<usize> {
    (0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Logits of the server half for a batch of cut-layer activations.
pub fn server_logits<T: Scalar>(server: &ServerModel<T>, activations: &Matrix<T>) -> Matrix<T> {
    forward_stack(&server.layers, server.activation, activations, false).0
}
