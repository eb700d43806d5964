//! Datasets and client partitioning.

mod idx;
mod partition;
mod synth;

pub use idx::{load_idx, parse_idx, IdxArray, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use partition::{dirichlet_partition, iid_partition, label_skew, Partition};
pub use synth::synth_gaussian_mixture;

use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::scalar::Scalar;

/// Labelled classification data, one example per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub inputs: Matrix<T>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(inputs: Matrix<T>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::Data(format!("{} input rows for {} labels", inputs.rows(), labels.len())));
        }
        if labels.len() < num_classes {
            return Err(Error::Data(format!("{} samples for {num_classes} classes", labels.len())));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::Data(format!("label {y} out of range for {num_classes} classes")));
        }
        Ok(Self { inputs, labels, num_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    /// Rows and labels for the given indices, in order.
    pub fn gather(&self, indices: &[usize]) -> (Matrix<T>, Vec<usize>) {
        (self.inputs.select_rows(indices), indices.iter().map(|&i| self.labels[i]).collect())
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    pub fn cast<U: Scalar>(&self) -> Dataset<U> {
        Dataset { inputs: self.inputs.cast(), labels: self.labels.clone(), num_classes: self.num_classes }
    }
}
