use nalgebra::DMatrix;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-feature z-scoring; zero-variance features are only centered.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer<T: Scalar> {
    pub means: Vec<T>,
    /// Sample standard deviations (divisor `n - 1`); `1` for constant features.
    pub deviations: Vec<T>,
    pub constant: Vec<bool>,
}

impl<T: Scalar> Standardizer<T> {
    pub fn transform(&self, x: &DMatrix<T>) -> Result<DMatrix<T>> {
        if x.ncols() != self.means.len() {
            return Err(Error::DimensionMismatch { expected: self.means.len(), found: x.ncols() });
        }
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, k| (x[(i, k)] - self.means[k]) / self.deviations[k]))
    }

    pub fn constant_features(&self) -> Vec<usize> {
        self.constant.iter().enumerate().filter(|(_, c)| **c).map(|(k, _)| k).collect()
    }
}

pub fn standardize_fit<T: Scalar>(data: &Dataset<T>) -> Standardizer<T> {
    let x = data.instances();
    let n = x.nrows();
    let denom = T::of_usize(n.saturating_sub(1).max(1));
    let mut means = Vec::with_capacity(x.ncols());
    let mut deviations = Vec::with_capacity(x.ncols());
    let mut constant = Vec::with_capacity(x.ncols());
    for col in x.column_iter() {
        let mean = col.sum() / T::of_usize(n);
        let var = col.iter().fold(T::zero(), |acc, &v| acc + (v - mean) * (v - mean)) / denom;
        let sd = var.sqrt();
        let flat = sd <= T::default_epsilon() * (T::one() + mean.abs());
        means.push(mean);
        deviations.push(if flat { T::one() } else { sd });
        constant.push(flat);
    }
    Standardizer { means, deviations, constant }
}

pub fn standardize_apply<T: Scalar>(standardizer: &Standardizer<T>, data: &Dataset<T>) -> Result<Dataset<T>> {
    data.with_instances(standardizer.transform(data.instances())?)
}
