//! Mahalanobis metrics and the distance kernels shared by the learners.
//!
//! All distances are squared: `D_M(a, b) = (a - b)ᵀ M (a - b)`. No square root is taken
//! anywhere in the crate.

use nalgebra::{DMatrix, DVector};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Symmetric positive semidefinite `d × d` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricMatrix<T: Scalar> {
    entries: DMatrix<T>,
}

impl<T: Scalar> MetricMatrix<T> {
    /// Checks symmetry and the eigenvalue floor before accepting `entries`.
    pub fn new(entries: DMatrix<T>) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::DimensionMismatch { expected: entries.nrows(), found: entries.ncols() });
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("metric contains non-finite entries".into()));
        }
        let scale = entries.iter().fold(T::one(), |acc, v| acc.max(v.abs()));
        let sym_tol = T::of(T::SYMMETRY_TOL) * scale;
        let d = entries.nrows();
        for i in 0..d {
            for j in (i + 1)..d {
                if (entries[(i, j)] - entries[(j, i)]).abs() > sym_tol {
                    return Err(Error::Contract(format!("metric is not symmetric at ({i}, {j})")));
                }
            }
        }
        let metric = Self { entries };
        let min_eig = metric.eigenvalues().iter().copied().fold(T::max_value().unwrap(), |a, b| a.min(b));
        if min_eig < -T::of(T::PSD_TOL) * scale {
            return Err(Error::Contract(format!("metric has negative eigenvalue {min_eig}")));
        }
        Ok(metric)
    }

    pub fn identity(d: usize) -> Self {
        Self { entries: DMatrix::identity(d, d) }
    }

    /// `diag(weights)`; weights must be nonnegative.
    pub fn diagonal(weights: &[T]) -> Result<Self> {
        if weights.iter().any(|w| *w < T::zero() || !w.is_finite()) {
            return Err(Error::Contract("diagonal metric weights must be finite and nonnegative".into()));
        }
        Ok(Self { entries: DMatrix::from_diagonal(&DVector::from_column_slice(weights)) })
    }

    pub(crate) fn from_trusted(entries: DMatrix<T>) -> Self {
        Self { entries }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<T> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<T> {
        self.entries
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<T> {
        let mut values: Vec<T> = self.entries.clone().symmetric_eigenvalues().iter().copied().collect();
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
        values
    }

    pub fn min_eigenvalue(&self) -> T {
        self.eigenvalues().first().copied().unwrap_or_else(T::zero)
    }

    /// `t · M` for `t >= 0`.
    pub fn scaled(&self, t: T) -> Result<Self> {
        if t < T::zero() {
            return Err(Error::Contract("metric scale must be nonnegative".into()));
        }
        Ok(Self { entries: &self.entries * t })
    }

    /// Factor `L` with `M = L Lᵀ`, columns scaled by the square roots of the clamped eigenvalues.
    pub fn factor(&self) -> DMatrix<T> {
        let eig = self.entries.clone().symmetric_eigen();
        let mut l = eig.eigenvectors;
        for (k, lambda) in eig.eigenvalues.iter().enumerate() {
            let s = lambda.max(T::zero()).sqrt();
            l.column_mut(k).scale_mut(s);
        }
        l
    }
}

/// `(a - b)ᵀ M (a - b)`, clamped at zero.
pub fn mahalanobis_distance<T: Scalar>(m: &MetricMatrix<T>, a: &DVector<T>, b: &DVector<T>) -> Result<T> {
    if a.len() != m.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), found: a.len() });
    }
    if b.len() != m.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), found: b.len() });
    }
    let diff = a - b;
    let value = diff.dot(&(m.entries() * &diff));
    Ok(value.max(T::zero()))
}

/// Nearest PSD matrix in Frobenius norm: symmetrize, clamp negative eigenvalues to zero, rebuild.
pub fn project_psd<T: Scalar>(s: &DMatrix<T>) -> Result<MetricMatrix<T>> {
    if !s.is_square() {
        return Err(Error::DimensionMismatch { expected: s.nrows(), found: s.ncols() });
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("cannot project a matrix with non-finite entries".into()));
    }
    let half = T::of(0.5);
    let sym = (s + s.transpose()) * half;
    let eig = sym.symmetric_eigen();
    let clamped = eig.eigenvalues.map(|l| l.max(T::zero()));
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (k, l) in clamped.iter().enumerate() {
        scaled.column_mut(k).scale_mut(*l);
    }
    let rebuilt = &scaled * v.transpose();
    let out = (&rebuilt + rebuilt.transpose()) * half;
    Ok(MetricMatrix::from_trusted(out))
}

/// Matrix of `D_M(x_i, x_j)` over all instance pairs; zero diagonal, exactly symmetric.
pub fn pairwise_squared_distances<T: Scalar>(m: &MetricMatrix<T>, data: &Dataset<T>) -> Result<DMatrix<T>> {
    if data.dim() != m.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), found: data.dim() });
    }
    Ok(pairwise_from_instances(m, data.instances()))
}

pub(crate) fn pairwise_from_instances<T: Scalar>(m: &MetricMatrix<T>, x: &DMatrix<T>) -> DMatrix<T> {
    let n = x.nrows();
    // points as columns so each one is a contiguous slice
    let zt = (x * m.factor()).transpose();
    let d = zt.nrows();
    let points = zt.as_slice();
    let mut out = DMatrix::zeros(n, n);
    for (j, col) in out.as_mut_slice().chunks_exact_mut(n).enumerate() {
        let zj = &points[j * d..(j + 1) * d];
        for (i, zi) in points.chunks_exact(d).take(j).enumerate() {
            col[i] = zi.iter().zip(zj).fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
        }
    }
    out.fill_lower_triangle_with_upper_triangle();
    out
}

/// Squared distances from each query row to each reference row.
pub(crate) fn cross_distances<T: Scalar>(m: &MetricMatrix<T>, queries: &DMatrix<T>, refs: &DMatrix<T>) -> DMatrix<T> {
    let l = m.factor();
    let zq = queries * &l;
    let zr = refs * &l;
    DMatrix::from_fn(queries.nrows(), refs.nrows(), |i, j| {
        let mut acc = T::zero();
        for k in 0..l.ncols() {
            let t = zq[(i, k)] - zr[(j, k)];
            acc += t * t;
        }
        acc
    })
}

/// `Σ_ab w_ab (x_a - x_b)(x_a - x_b)ᵀ`, evaluated as `Xᵀ diag(r + c) X - A - Aᵀ` with
/// `A = Xᵀ W X` and `r`, `c` the row and column sums of `W`.
pub(crate) fn weighted_outer_sum<T: Scalar>(x: &DMatrix<T>, weights: &DMatrix<T>) -> DMatrix<T> {
    weighted_outer_sum_columns(x, weights, |_| true)
}

/// [`weighted_outer_sum`] over the columns `b` of `weights` accepted by `keep`.
///
/// Expands to `Xᵀ diag(r + c) X − Xᵀ W X − (Xᵀ W X)ᵀ` with row sums `r` and column sums `c`,
/// accumulated in one pass over the columns of `W`.
pub(crate) fn weighted_outer_sum_columns<T: Scalar>(x: &DMatrix<T>, weights: &DMatrix<T>, keep: impl Fn(usize) -> bool) -> DMatrix<T> {
    let (n, d) = x.shape();
    let mut degree = vec![T::zero(); n];
    // column b of `xtw` is Xᵀ W[:, b]
    let mut xtw = DMatrix::zeros(d, n);
    for (b, col) in weights.as_slice().chunks_exact(n).enumerate() {
        if !keep(b) {
            continue;
        }
        let mut col_sum = T::zero();
        for (deg, &w) in degree.iter_mut().zip(col) {
            *deg += w;
            col_sum += w;
        }
        degree[b] += col_sum;
        for (f, feature) in x.as_slice().chunks_exact(n).enumerate() {
            xtw[(f, b)] = feature.iter().zip(col).fold(T::zero(), |acc, (&v, &w)| acc + v * w);
        }
    }
    let a = &xtw * x;
    let mut scaled = x.transpose();
    for (mut col, s) in scaled.column_iter_mut().zip(degree) {
        col *= s;
    }
    let g = scaled * x - &a - a.transpose();
    (&g + g.transpose()) * T::of(0.5)
}

/// Outer product `(a - b)(a - b)ᵀ`.
pub fn difference_outer<T: Scalar>(a: &DVector<T>, b: &DVector<T>) -> DMatrix<T> {
    let diff = a - b;
    &diff * diff.transpose()
}
