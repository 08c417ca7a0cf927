//! Collapsing-classes metric learning (softmax neighbor selection, KL objective).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::assignment::{NeighborhoodAssignment, PairCostTable};
use crate::dataset::Dataset;
use crate::error::{contract, Error, Result};
use crate::metric::{pairwise_from_instances, pairwise_squared_distances, weighted_outer_sum_columns, MetricMatrix};
use crate::optim::{projected_descent, DescentSettings, FitTrace, Objective};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmlConfig {
    pub max_iters: usize,
    /// Initial step, applied to the gradient divided by the number of instances.
    pub step_size: f64,
    pub step_decay: f64,
    /// Factor applied to the step after an accepted iteration when no spectral step is available.
    pub step_growth: f64,
    pub tol: f64,
    /// After an accepted step, take the next step length from the Barzilai-Borwein ratio
    /// `⟨s,s⟩/⟨s,y⟩` of the last move `s` and gradient change `y`.
    pub spectral_steps: bool,
}

impl Default for McmlConfig {
    fn default() -> Self {
        Self { max_iters: 200, step_size: 1e-3, step_decay: 0.5, step_growth: 1.0, tol: 1e-5, spectral_steps: true }
    }
}

/// Iterations between relative-decrease checks.
const TOL_WINDOW: usize = 10;

impl McmlConfig {
    pub fn validate(&self) -> Result<()> {
        if ![self.step_size, self.step_decay, self.step_growth, self.tol].iter().all(|v| v.is_finite()) {
            return Err(contract("mcml config values must be finite"));
        }
        if self.step_size <= 0.0 || self.tol <= 0.0 {
            return Err(contract("step_size and tol must be positive"));
        }
        if !(self.step_decay > 0.0 && self.step_decay <= 1.0) {
            return Err(contract(format!("step_decay = {} is outside (0, 1]", self.step_decay)));
        }
        if self.step_growth < 1.0 {
            return Err(contract("step_growth must be at least 1"));
        }
        Ok(())
    }

    fn descent(&self) -> DescentSettings {
        DescentSettings {
            max_iters: self.max_iters,
            step_size: self.step_size,
            step_decay: self.step_decay,
            step_growth: self.step_growth,
            tol: self.tol,
            refresh_every: TOL_WINDOW,
            spectral: self.spectral_steps,
        }
    }
}

/// Row-stochastic `p_M(j|i) = exp(-D(i,j)) / Z_i` with zero diagonal, plus `log Z_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionProbabilities<T: Scalar> {
    /// Column `i` holds `p_M(·|i)`; distributions are stored as columns for contiguous access.
    by_column: DMatrix<T>,
    log_normalizers: Vec<T>,
}

impl<T: Scalar> SelectionProbabilities<T> {
    fn from_distances(dist: &DMatrix<T>) -> Self {
        // `dist` is symmetric, so row i is read as column i
        let n = dist.nrows();
        let mut by_column = DMatrix::zeros(n, n);
        let mut log_normalizers = Vec::with_capacity(n);
        for (i, (col, out)) in dist.as_slice().chunks_exact(n).zip(by_column.as_mut_slice().chunks_exact_mut(n)).enumerate() {
            // log-sum-exp over -D(i,k), shifted by the smallest off-diagonal distance
            let nearest = col[..i].iter().chain(&col[i + 1..]).fold(T::max_value().unwrap(), |a, &d| a.min(d));
            // branch-free loop; the diagonal entry is overwritten afterwards
            for (&d, o) in col.iter().zip(out.iter_mut()) {
                *o = (nearest - d).exp();
            }
            out[i] = T::zero();
            let sum = out.iter().fold(T::zero(), |a, &o| a + o);
            let inv = T::one() / sum;
            out.iter_mut().for_each(|o| *o *= inv);
            log_normalizers.push(sum.ln() - nearest);
        }
        Self { by_column, log_normalizers }
    }

    /// The `n × n` matrix with row `i` equal to `p_M(·|i)`.
    pub fn matrix(&self) -> DMatrix<T> {
        self.by_column.transpose()
    }

    /// `p_M(·|i)` as a slice.
    pub fn row(&self, i: usize) -> &[T] {
        let n = self.by_column.nrows();
        &self.by_column.as_slice()[i * n..(i + 1) * n]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.by_column[(j, i)]
    }

    pub fn log_normalizers(&self) -> &[T] {
        &self.log_normalizers
    }
}

pub fn selection_probabilities<T: Scalar>(m: &MetricMatrix<T>, data: &Dataset<T>) -> Result<SelectionProbabilities<T>> {
    if data.len() < 2 {
        return Err(contract("selection probabilities need at least two instances"));
    }
    let dist = pairwise_squared_distances(m, data)?;
    Ok(SelectionProbabilities::from_distances(&dist))
}

fn check_assignment<T: Scalar>(p: &NeighborhoodAssignment, data: &Dataset<T>) -> Result<()> {
    if p.n_instances() != data.len() {
        return Err(Error::DimensionMismatch { expected: data.len(), found: p.n_instances() });
    }
    for (i, j) in p.pairs() {
        if j >= data.len() || i == j || !data.same_class(i, j) {
            return Err(contract(format!("target pair ({i}, {j}) is not a same-class pair")));
        }
    }
    Ok(())
}

fn check_uniform(p: &NeighborhoodAssignment, k_av: usize) -> Result<()> {
    if k_av == 0 {
        return Err(contract("k_av must be at least 1"));
    }
    if let Some(i) = p.rows().iter().position(|r| r.len() != k_av) {
        return Err(contract(format!(
            "instance {i} has {} target neighbors, expected exactly {k_av}",
            p.neighbors(i).len()
        )));
    }
    Ok(())
}

/// `Σ_i Σ_{j ∈ P_i} (D(i,j) + log Z_i) / |P_i|`; rows without neighbors contribute nothing.
fn normalized_loss<T: Scalar>(dist: &DMatrix<T>, sel: &SelectionProbabilities<T>, p: &NeighborhoodAssignment) -> T {
    let mut total = T::zero();
    for (i, row) in p.rows().iter().enumerate() {
        if row.is_empty() {
            continue;
        }
        let mut acc = T::zero();
        for &j in row {
            acc += dist[(i, j)] + sel.log_normalizers[i];
        }
        total += acc / T::of_usize(row.len());
    }
    total
}

fn normalized_gradient<T: Scalar>(x: &DMatrix<T>, sel: &SelectionProbabilities<T>, p: &NeighborhoodAssignment) -> DMatrix<T> {
    // weights are p0(j|i) − p_M(j|i); the outer sum is symmetric in W, so column i of
    // the transposed probabilities can stand for row i, and the sparse p0 part is summed
    // over pairs directly. Rows without neighbors do not enter the objective.
    let d = x.ncols();
    let mut pull = DMatrix::zeros(d, d);
    for (i, row) in p.rows().iter().enumerate() {
        if row.is_empty() {
            continue;
        }
        let share = T::one() / T::of_usize(row.len());
        for &j in row {
            let diff = (x.row(i) - x.row(j)).transpose();
            pull.ger(share, &diff, &diff, T::one());
        }
    }
    pull - weighted_outer_sum_columns(x, &sel.by_column, |i| !p.neighbors(i).is_empty())
}

/// KL objective for a uniform neighborhood of size `k_av`, without the `p_0` entropy constant:
/// `Σ_{(i,j)∈P} (D(i,j) + log Z_i) / k_av`.
pub fn mcml_loss<T: Scalar>(m: &MetricMatrix<T>, p: &NeighborhoodAssignment, data: &Dataset<T>, k_av: usize) -> Result<T> {
    check_assignment(p, data)?;
    check_uniform(p, k_av)?;
    let dist = pairwise_squared_distances(m, data)?;
    Ok(normalized_loss(&dist, &SelectionProbabilities::from_distances(&dist), p))
}

/// Same objective with each row normalized by its own neighbor count; used for the
/// global (all same-class pairs) neighborhood.
pub fn mcml_loss_normalized<T: Scalar>(m: &MetricMatrix<T>, p: &NeighborhoodAssignment, data: &Dataset<T>) -> Result<T> {
    check_assignment(p, data)?;
    let dist = pairwise_squared_distances(m, data)?;
    Ok(normalized_loss(&dist, &SelectionProbabilities::from_distances(&dist), p))
}

/// `(1/k_av) Σ_i [Σ_{j∈P_i} C_ij - k_av Σ_{k≠i} p_M(k|i) C_ik]`.
pub fn mcml_gradient<T: Scalar>(
    m: &MetricMatrix<T>,
    p: &NeighborhoodAssignment,
    data: &Dataset<T>,
    k_av: usize,
) -> Result<DMatrix<T>> {
    check_assignment(p, data)?;
    check_uniform(p, k_av)?;
    let dist = pairwise_squared_distances(m, data)?;
    Ok(normalized_gradient(data.instances(), &SelectionProbabilities::from_distances(&dist), p))
}

/// `F_ij = (D(i,j) + log Z_i) / k_av` for every same-class ordered pair. Costs may be negative.
pub fn mcml_pair_costs<T: Scalar>(m: &MetricMatrix<T>, data: &Dataset<T>, k_av: usize) -> Result<PairCostTable<T>> {
    if k_av == 0 {
        return Err(contract("k_av must be at least 1"));
    }
    let dist = pairwise_squared_distances(m, data)?;
    let sel = SelectionProbabilities::from_distances(&dist);
    let k = T::of_usize(k_av);
    PairCostTable::from_fn(data.labels(), |i, j| (dist[(i, j)] + sel.log_normalizers[i]) / k)
}

struct McmlObjective<'a, T: Scalar> {
    data: &'a Dataset<T>,
    p: &'a NeighborhoodAssignment,
}

impl<T: Scalar> Objective<T> for McmlObjective<'_, T> {
    type Eval = (DMatrix<T>, SelectionProbabilities<T>);

    fn refresh(&mut self, _m: &MetricMatrix<T>) {}

    fn evaluate(&self, m: &MetricMatrix<T>) -> (T, Self::Eval) {
        let dist = pairwise_from_instances(m, self.data.instances());
        let sel = SelectionProbabilities::from_distances(&dist);
        (normalized_loss(&dist, &sel, self.p), (dist, sel))
    }

    fn gradient(&self, eval: &Self::Eval) -> DMatrix<T> {
        normalized_gradient(self.data.instances(), &eval.1, self.p)
    }

    fn full_loss(&self, m: &MetricMatrix<T>) -> T {
        self.evaluate(m).0
    }

    fn surrogate_is_exact(&self) -> bool {
        true
    }

    fn normalizer(&self) -> T {
        T::of_usize(self.p.rows().iter().filter(|r| !r.is_empty()).count())
    }
}

/// Projected gradient descent on the row-normalized objective from `m0`.
///
/// For a uniform assignment this minimizes [`mcml_loss`]; for the all-same-class assignment
/// it is the global-neighborhood baseline.
pub fn mcml_fit<T: Scalar>(
    data: &Dataset<T>,
    p: &NeighborhoodAssignment,
    m0: &MetricMatrix<T>,
    config: &McmlConfig,
) -> Result<(MetricMatrix<T>, FitTrace<T>)> {
    config.validate()?;
    check_assignment(p, data)?;
    if m0.dim() != data.dim() {
        return Err(Error::DimensionMismatch { expected: data.dim(), found: m0.dim() });
    }
    let mut objective = McmlObjective { data, p };
    projected_descent(&mut objective, m0, &config.descent())
}
