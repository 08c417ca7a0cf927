use nalgebra::{DMatrix, DVector, RowDVector};

use crate::error::{contract, Error, Result};
use crate::scalar::Scalar;

/// Labeled instances. Row `i` of `instances` is `x_i`; labels are class ids in `1..=n_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T: Scalar> {
    instances: DMatrix<T>,
    labels: Vec<usize>,
    n_classes: usize,
    feature_names: Option<Vec<String>>,
    class_names: Option<Vec<String>>,
}

impl<T: Scalar> Dataset<T> {
    /// Validates `n >= 2`, finite features, and labels covering `1..=c` without gaps.
    pub fn new(instances: DMatrix<T>, labels: Vec<usize>) -> Result<Self> {
        if instances.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: instances.nrows(),
                found: labels.len(),
            });
        }
        if labels.len() < 2 {
            return Err(contract(format!("a dataset needs at least 2 instances, got {}", labels.len())));
        }
        if let Some(pos) = instances.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos % instances.nrows(), pos / instances.nrows());
            return Err(contract(format!("non-finite feature value at row {r}, column {c}")));
        }
        if labels.contains(&0) {
            return Err(contract("class labels start at 1"));
        }
        let n_classes = labels.iter().copied().max().unwrap_or(0);
        let mut seen = vec![false; n_classes];
        for &y in &labels {
            seen[y - 1] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(contract(format!("class {} has no instances", missing + 1)));
        }
        Ok(Self {
            instances,
            labels,
            n_classes,
            feature_names: None,
            class_names: None,
        })
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: names.len() });
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_classes {
            return Err(Error::DimensionMismatch { expected: self.n_classes, found: names.len() });
        }
        self.class_names = Some(names);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.instances.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn instances(&self) -> &DMatrix<T> {
        &self.instances
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn row(&self, i: usize) -> RowDVector<T> {
        self.instances.row(i).into_owned()
    }

    pub fn point(&self, i: usize) -> DVector<T> {
        self.instances.row(i).transpose()
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    pub fn same_class(&self, i: usize, j: usize) -> bool {
        self.labels[i] == self.labels[j]
    }

    /// Instance counts per class, indexed by `label - 1`.
    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_classes];
        for &y in &self.labels {
            sizes[y - 1] += 1;
        }
        sizes
    }

    /// Rows selected by `indices`, in that order. The class universe is kept, so a
    /// subset may leave some classes empty.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let instances = self.instances.select_rows(indices.iter());
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self {
            instances,
            labels,
            n_classes: self.n_classes,
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
        }
    }

    /// Same labels, new feature matrix (e.g. after a transform). Feature names are dropped
    /// when the width changes.
    pub fn with_instances(&self, instances: DMatrix<T>) -> Result<Self> {
        if instances.nrows() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), found: instances.nrows() });
        }
        let feature_names = if instances.ncols() == self.dim() { self.feature_names.clone() } else { None };
        Ok(Self {
            instances,
            labels: self.labels.clone(),
            n_classes: self.n_classes,
            feature_names,
            class_names: self.class_names.clone(),
        })
    }

    /// Casts the features to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Dataset<U> {
        Dataset {
            instances: self.instances.map(|v| U::of(v.as_f64())),
            labels: self.labels.clone(),
            n_classes: self.n_classes,
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_gaps_and_zero_labels() {
        let x = DMatrix::<f64>::zeros(3, 2);
        assert!(Dataset::new(x.clone(), vec![1, 3, 1]).is_err());
        assert!(Dataset::new(x.clone(), vec![0, 1, 1]).is_err());
        assert!(Dataset::new(x, vec![1, 2, 1]).is_ok());
    }

    #[test]
    fn rejects_non_finite_and_tiny() {
        let mut x = DMatrix::<f64>::zeros(3, 2);
        x[(1, 1)] = f64::NAN;
        assert!(Dataset::new(x, vec![1, 1, 2]).is_err());
        assert!(Dataset::new(DMatrix::<f64>::zeros(1, 2), vec![1]).is_err());
    }

    #[test]
    fn subset_keeps_class_universe() {
        let x = DMatrix::from_row_slice(4, 1, &[0.0, 1.0, 2.0, 3.0]);
        let d = Dataset::new(x, vec![1, 2, 2, 3]).unwrap();
        let s = d.subset(&[1, 2]);
        assert_eq!(s.n_classes(), 3);
        assert_eq!(s.class_sizes(), vec![0, 2, 0]);
        assert_eq!(s.point(1)[0], 2.0);
    }
}
