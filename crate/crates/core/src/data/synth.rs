use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::Dataset;
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::scalar::Scalar;

/// Isotropic Gaussian mixture with one component per class.
///
/// Class means have independent standard-normal coordinates; samples add
/// `spread`-scaled standard-normal noise. The first 80% (integer floor) of
/// each class goes to the training set, the rest to the test set; both are
/// ordered class by class.
pub fn synth_gaussian_mixture<T: Scalar>(
    num_classes: usize,
    dim: usize,
    samples_per_class: usize,
    spread: f64,
    seed: u64,
) -> Result<(Dataset<T>, Dataset<T>)> {
    if num_classes == 0 || dim == 0 || !(spread >= 0.0) || !spread.is_finite() {
        return Err(Error::Config("gaussian mixture needs positive classes, dim, and a finite spread".into()));
    }
    if samples_per_class < 2 {
        return Err(Error::Config("samples_per_class must be at least 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let n_train = samples_per_class * 4 / 5;
    let (mut train_x, mut train_y, mut test_x, mut test_y) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (c, mean) in means.iter().enumerate() {
        for s in 0..samples_per_class {
            let (xs, ys) = if s < n_train { (&mut train_x, &mut train_y) } else { (&mut test_x, &mut test_y) };
            xs.extend(mean.iter().map(|&m| T::lit(m + spread * rng.sample::<f64, _>(StandardNormal))));
            ys.push(c);
        }
    }
    let train = Dataset::new(Matrix::from_vec(train_y.len(), dim, train_x)?, train_y, num_classes)?;
    let test = Dataset::new(Matrix::from_vec(test_y.len(), dim, test_x)?, test_y, num_classes)?;
    Ok((train, test))
}
