use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::scalar::Scalar;

/// How many principal components to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaRetain {
    /// Fixed count, capped at the input dimension.
    Components(usize),
    /// Smallest count whose cumulative explained-variance ratio reaches the fraction.
    Variance(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel<T: Scalar> {
    pub mean: DVector<T>,
    /// `r × d`, orthonormal rows ordered by decreasing variance.
    pub components: DMatrix<T>,
    pub explained_variance_ratio: Vec<T>,
    /// All covariance eigenvalues, descending (including the discarded ones).
    pub eigenvalues: Vec<T>,
}

impl<T: Scalar> PcaModel<T> {
    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    /// Maps reduced coordinates back to the input space.
    pub fn inverse_transform(&self, reduced: &DMatrix<T>) -> Result<DMatrix<T>> {
        if reduced.ncols() != self.n_components() {
            return Err(Error::DimensionMismatch { expected: self.n_components(), found: reduced.ncols() });
        }
        let mut out = reduced * &self.components;
        for mut row in out.row_iter_mut() {
            row += self.mean.transpose();
        }
        Ok(out)
    }
}

/// Principal components of the sample covariance (divisor `n - 1`).
pub fn pca_fit<T: Scalar>(x: &DMatrix<T>, retain: PcaRetain) -> Result<PcaModel<T>> {
    let (n, d) = x.shape();
    if n < 2 {
        return Err(contract("pca needs at least two instances"));
    }
    match retain {
        PcaRetain::Components(0) => return Err(contract("pca must retain at least one component")),
        PcaRetain::Variance(v) if !(v > 0.0 && v <= 1.0) => {
            return Err(contract(format!("variance fraction {v} is outside (0, 1]")))
        }
        _ => {}
    }
    let mean = x.row_mean().transpose();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = (centered.transpose() * &centered) / T::of_usize(n - 1);
    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).expect("finite eigenvalues"));
    let eigenvalues: Vec<T> = order.iter().map(|&k| eig.eigenvalues[k].max(T::zero())).collect();
    let total = eigenvalues.iter().fold(T::zero(), |a, &b| a + b);
    if total <= T::zero() {
        return Err(Error::Numeric("covariance is zero; all instances are identical".into()));
    }
    let ratios: Vec<T> = eigenvalues.iter().map(|&l| l / total).collect();
    let r = match retain {
        PcaRetain::Components(r) => r.min(d),
        PcaRetain::Variance(v) => {
            let target = T::of(v) - T::of(1e-12);
            let mut cum = T::zero();
            let mut r = d;
            for (k, ratio) in ratios.iter().enumerate() {
                cum += *ratio;
                if cum >= target {
                    r = k + 1;
                    break;
                }
            }
            r
        }
    };
    let mut components = DMatrix::zeros(r, d);
    for (row, &k) in order.iter().take(r).enumerate() {
        let v = eig.eigenvectors.column(k);
        // sign convention: largest-magnitude entry positive
        let pivot = v.iter().fold(T::zero(), |acc, &e| if e.abs() > acc.abs() { e } else { acc });
        let sign = if pivot < T::zero() { -T::one() } else { T::one() };
        for c in 0..d {
            components[(row, c)] = v[c] * sign;
        }
    }
    Ok(PcaModel { mean, components, explained_variance_ratio: ratios[..r].to_vec(), eigenvalues })
}

/// `(x - mean) · componentsᵀ` for every row.
pub fn pca_transform<T: Scalar>(model: &PcaModel<T>, x: &DMatrix<T>) -> Result<DMatrix<T>> {
    if x.ncols() != model.input_dim() {
        return Err(Error::DimensionMismatch { expected: model.input_dim(), found: x.ncols() });
    }
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= model.mean.transpose();
    }
    Ok(centered * model.components.transpose())
}
