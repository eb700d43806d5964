use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation value.
    pub fn derivative<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                T::one() - t * t
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Config(format!("unknown activation '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    SoftmaxCrossEntropy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Input width, hidden widths, output width (number of classes).
    pub layer_dims: Vec<usize>,
    pub activation: Activation,
    pub loss: Loss,
}

impl ModelSpec {
    pub fn new(layer_dims: Vec<usize>, activation: Activation) -> Self {
        Self { layer_dims, activation, loss: Loss::SoftmaxCrossEntropy }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 3 {
            return Err(Error::Config(format!(
                "layer_dims needs at least 3 entries for a split, got {}",
                self.layer_dims.len()
            )));
        }
        if self.layer_dims.contains(&0) {
            return Err(Error::Config("layer_dims entries must be >= 1".into()));
        }
        Ok(())
    }

    pub fn num_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_dims.last().expect("validated")
    }
}

/// Fully connected layer computing `x · W + b` with `W` stored `[fan_in × fan_out]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense<T> {
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self { weights: Matrix::zeros(fan_in, fan_out), bias: vec![T::zero(); fan_out] }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| T::lit(rng.random_range(-a..=a))).collect();
        Self {
            weights: Matrix::from_vec(fan_in, fan_out, data).expect("shape"),
            bias: vec![T::zero(); fan_out],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.cols()
    }

    pub fn param_count(&self) -> usize {
        self.weights.rows() * self.weights.cols() + self.bias.len()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.fan_in(), self.fan_out())
    }

    pub fn cast<U: Scalar>(&self) -> Dense<U> {
        Dense { weights: self.weights.cast(), bias: self.bias.iter().map(|b| b.cast()).collect() }
    }

    pub fn scale(&mut self, k: T) {
        self.weights.as_mut_slice().iter_mut().for_each(|w| *w *= k);
        self.bias.iter_mut().for_each(|b| *b *= k);
    }
}

pub fn param_count<T: Scalar>(layers: &[Dense<T>]) -> usize {
    layers.iter().map(Dense::param_count).sum()
}

pub fn same_shapes<T: Scalar>(a: &[Dense<T>], b: &[Dense<T>]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| x.weights.shape() == y.weights.shape() && x.bias.len() == y.bias.len())
}

/// Client-side submodel: every layer is followed by the hidden activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientModel<T> {
    pub layers: Vec<Dense<T>>,
    pub activation: Activation,
}

/// Server-side submodel: hidden activation after every layer but the last,
/// which emits logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerModel<T> {
    pub layers: Vec<Dense<T>>,
    pub activation: Activation,
}

impl<T: Scalar> ClientModel<T> {
    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").fan_out()
    }

    pub fn param_count(&self) -> usize {
        param_count(&self.layers)
    }
}

impl<T: Scalar> ServerModel<T> {
    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().expect("non-empty").fan_out()
    }

    pub fn param_count(&self) -> usize {
        param_count(&self.layers)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitModel<T> {
    pub client: ClientModel<T>,
    pub server: ServerModel<T>,
    pub cut_index: usize,
}

impl<T: Scalar> SplitModel<T> {
    /// Full layer stack in forward order.
    pub fn layers(&self) -> impl Iterator<Item = &Dense<T>> {
        self.client.layers.iter().chain(&self.server.layers)
    }

    pub fn cast<U: Scalar>(&self) -> SplitModel<U> {
        SplitModel {
            client: ClientModel {
                layers: self.client.layers.iter().map(Dense::cast).collect(),
                activation: self.client.activation,
            },
            server: ServerModel {
                layers: self.server.layers.iter().map(Dense::cast).collect(),
                activation: self.server.activation,
            },
            cut_index: self.cut_index,
        }
    }
}

/// Builds a seeded Glorot-initialized network and partitions it after layer `cut_index`.
///
/// Weights are drawn in `f64` before conversion, so the `f32` and `f64`
/// instantiations of the same `(spec, cut, seed)` agree up to rounding.
pub fn split_model<T: Scalar>(spec: &ModelSpec, cut_index: usize, seed: u64) -> Result<SplitModel<T>> {
    spec.validate()?;
    let n = spec.num_layers();
    if cut_index < 1 || cut_index > n - 1 {
        return Err(Error::Config(format!("cut_index {cut_index} outside [1, {}]", n - 1)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers: Vec<Dense<T>> = spec
        .layer_dims
        .windows(2)
        .map(|w| Dense::glorot(w[0], w[1], &mut rng))
        .collect();
    let server_layers = layers.split_off(cut_index);
    Ok(SplitModel {
        client: ClientModel { layers, activation: spec.activation },
        server: ServerModel { layers: server_layers, activation: spec.activation },
        cut_index,
    })
}
