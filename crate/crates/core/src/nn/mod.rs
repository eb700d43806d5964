//! Dense network engine with split execution.
//!
//! Parameters are grouped per layer as [`Dense`] values; gradients use the
//! same type so that optimizers, flattening, and aggregation share one shape.

mod matrix;
mod model;
mod optim;
mod pass;

pub use matrix::Matrix;
pub use model::{
    param_count, same_shapes, split_model, Activation, ClientModel, Dense, Loss, ModelSpec, ServerModel, SplitModel,
};
pub use optim::Sgd;
pub use pass::{
    argmax_rows, backward_client, backward_server, forward_client, forward_layers, forward_server, server_logits,
    ClientCache, ServerCache, ServerForward,
};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Fraction of examples whose arg-max prediction matches the label.
pub fn evaluate<T: Scalar>(model: &SplitModel<T>, test: &Dataset<T>) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Data("empty test set".into()));
    }
    let (act, _) = forward_client(&model.client, &test.inputs)?;
    Ok(accuracy(&server_logits(&model.server, &act), &test.labels))
}

pub fn accuracy<T: Scalar>(logits: &Matrix<T>, labels: &[usize]) -> f64 {
    let correct = argmax_rows(logits).iter().zip(labels).filter(|(p, y)| p == y).count();
    correct as f64 / labels.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_predictor_on_single_class_set_is_perfect() {
        let spec = ModelSpec::new(vec![2, 3, 3], Activation::Relu);
        let mut m = split_model::<f64>(&spec, 1, 0).unwrap();
        m.server.layers[0] = Dense::zeros(3, 3);
        m.server.layers[0].bias = vec![0.0, 0.0, 1.0];
        let test = Dataset::new(Matrix::from_rows(&[&[1.0, 2.0], &[-3.0, 0.5], &[0.0, 0.0]]).unwrap(), vec![2, 2, 2], 3).unwrap();
        assert_eq!(evaluate(&m, &test).unwrap(), 1.0);
    }
}
