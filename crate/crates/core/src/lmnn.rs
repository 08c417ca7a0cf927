//! Large-margin nearest neighbor metric learning under a fixed target neighborhood.
//!
//! Slacks never appear as variables: at a fixed metric each slack's optimum is the hinge
//! `max(0, 1 + D(i,j) - D(i,l))`, so the loss and the pair costs are functions of `M` alone.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::assignment::{NeighborhoodAssignment, PairCostTable};
use crate::dataset::Dataset;
use crate::error::{contract, Error, Result};
use crate::metric::{pairwise_from_instances, pairwise_squared_distances, weighted_outer_sum, MetricMatrix};
use crate::optim::{projected_descent, DescentSettings, FitTrace, Objective};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmnnConfig {
    /// Weight of the impostor hinge term against the pull term.
    pub mu: f64,
    pub max_iters: usize,
    /// Initial step, applied to the gradient divided by the number of target pairs.
    pub step_size: f64,
    pub step_decay: f64,
    /// Factor applied to the step after an accepted iteration; 1 keeps it unchanged.
    pub step_growth: f64,
    pub tol: f64,
    pub impostor_refresh_every: usize,
}

impl Default for LmnnConfig {
    fn default() -> Self {
        Self {
            mu: 0.5,
            max_iters: 200,
            step_size: 1e-3,
            step_decay: 0.5,
            step_growth: 1.0,
            tol: 1e-5,
            impostor_refresh_every: 10,
        }
    }
}

impl LmnnConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.mu, self.step_size, self.step_decay, self.step_growth, self.tol]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(contract("lmnn config values must be finite"));
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(contract(format!("mu = {} is outside [0, 1]", self.mu)));
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
        if self.impostor_refresh_every == 0 {
            return Err(contract("impostor_refresh_every must be at least 1"));
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
            refresh_every: self.impostor_refresh_every,
            spectral: false,
        }
    }
}

/// Triplets `(i, j, l)`: `(i, j)` a target pair, `l` of a different class than `i`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TripletSet {
    triplets: Vec<(usize, usize, usize)>,
}

impl TripletSet {
    pub fn as_slice(&self) -> &[(usize, usize, usize)] {
        &self.triplets
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }
}

/// Total LMNN loss and its per-pair breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct LmnnLoss<T: Scalar> {
    pub total: T,
    /// `(i, j, F_ij)` for every pair of the assignment.
    pub per_pair: Vec<(usize, usize, T)>,
}

fn check_shapes<T: Scalar>(m: &MetricMatrix<T>, p: &NeighborhoodAssignment, data: &Dataset<T>) -> Result<()> {
    if m.dim() != data.dim() {
        return Err(Error::DimensionMismatch { expected: data.dim(), found: m.dim() });
    }
    if p.n_instances() != data.len() {
        return Err(Error::DimensionMismatch { expected: data.len(), found: p.n_instances() });
    }
    for (i, j) in p.pairs() {
        if j >= data.len() || !data.same_class(i, j) || i == j {
            return Err(contract(format!("target pair ({i}, {j}) is not a same-class pair")));
        }
    }
    Ok(())
}

fn check_mu(mu: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(contract(format!("mu = {mu} is outside [0, 1]")));
    }
    Ok(())
}

/// Per-instance sorted distances to different-class points with prefix sums, so that
/// `Σ_l max(0, t - D(i,l))` costs one binary search.
struct ImpostorProfile<T: Scalar> {
    sorted: Vec<Vec<T>>,
    prefix: Vec<Vec<T>>,
}

impl<T: Scalar> ImpostorProfile<T> {
    fn new(dist: &DMatrix<T>, labels: &[usize]) -> Self {
        let n = labels.len();
        let mut sorted = Vec::with_capacity(n);
        let mut prefix = Vec::with_capacity(n);
        for i in 0..n {
            let mut row: Vec<T> = (0..n).filter(|&l| labels[l] != labels[i]).map(|l| dist[(i, l)]).collect();
            row.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
            let mut acc = T::zero();
            let mut pre = Vec::with_capacity(row.len() + 1);
            pre.push(acc);
            for v in &row {
                acc += *v;
                pre.push(acc);
            }
            sorted.push(row);
            prefix.push(pre);
        }
        Self { sorted, prefix }
    }

    /// `Σ_l max(0, threshold - D(i,l))` over different-class `l`.
    fn hinge_sum(&self, i: usize, threshold: T) -> T {
        let row = &self.sorted[i];
        let count = row.partition_point(|&v| v < threshold);
        T::of_usize(count) * threshold - self.prefix[i][count]
    }
}

fn pair_cost<T: Scalar>(dist: &DMatrix<T>, profile: &ImpostorProfile<T>, mu: T, i: usize, j: usize) -> T {
    let d = dist[(i, j)];
    (T::one() - mu) * d + mu * profile.hinge_sum(i, T::one() + d)
}

/// Loss `Σ_{(i,j)∈P} (1-μ) D(i,j) + μ Σ_l [y_l ≠ y_i] max(0, 1 + D(i,j) - D(i,l))`.
pub fn lmnn_loss<T: Scalar>(
    m: &MetricMatrix<T>,
    p: &NeighborhoodAssignment,
    data: &Dataset<T>,
    mu: f64,
) -> Result<LmnnLoss<T>> {
    check_shapes(m, p, data)?;
    check_mu(mu)?;
    let dist = pairwise_squared_distances(m, data)?;
    let profile = ImpostorProfile::new(&dist, data.labels());
    let mu = T::of(mu);
    let per_pair: Vec<(usize, usize, T)> =
        p.pairs().map(|(i, j)| (i, j, pair_cost(&dist, &profile, mu, i, j))).collect();
    let total = per_pair.iter().fold(T::zero(), |acc, &(_, _, c)| acc + c);
    Ok(LmnnLoss { total, per_pair })
}

/// Triplets whose hinge argument `1 + D(i,j) - D(i,l)` is strictly positive.
pub fn active_triplets<T: Scalar>(
    m: &MetricMatrix<T>,
    p: &NeighborhoodAssignment,
    data: &Dataset<T>,
) -> Result<TripletSet> {
    check_shapes(m, p, data)?;
    let dist = pairwise_squared_distances(m, data)?;
    Ok(collect_active(&dist, p, data.labels()))
}

fn collect_active<T: Scalar>(dist: &DMatrix<T>, p: &NeighborhoodAssignment, labels: &[usize]) -> TripletSet {
    let n = labels.len();
    let mut triplets = Vec::new();
    for (i, j) in p.pairs() {
        let threshold = T::one() + dist[(i, j)];
        for l in 0..n {
            if labels[l] != labels[i] && threshold - dist[(i, l)] > T::zero() {
                triplets.push((i, j, l));
            }
        }
    }
    TripletSet { triplets }
}

fn gradient_weights<T: Scalar>(
    dist: &DMatrix<T>,
    p: &NeighborhoodAssignment,
    triplets: &[(usize, usize, usize)],
    mu: T,
) -> DMatrix<T> {
    let n = p.n_instances();
    let mut w = DMatrix::zeros(n, n);
    for (i, j) in p.pairs() {
        w[(i, j)] += T::one() - mu;
    }
    for &(i, j, l) in triplets {
        if T::one() + dist[(i, j)] - dist[(i, l)] > T::zero() {
            w[(i, j)] += mu;
            w[(i, l)] -= mu;
        }
    }
    w
}

/// Gradient of [`lmnn_loss`] with respect to `M`. At a hinge kink the zero subgradient is used.
pub fn lmnn_gradient<T: Scalar>(
    m: &MetricMatrix<T>,
    p: &NeighborhoodAssignment,
    data: &Dataset<T>,
    mu: f64,
) -> Result<DMatrix<T>> {
    check_shapes(m, p, data)?;
    check_mu(mu)?;
    let dist = pairwise_squared_distances(m, data)?;
    let active = collect_active(&dist, p, data.labels());
    let w = gradient_weights(&dist, p, active.as_slice(), T::of(mu));
    Ok(weighted_outer_sum(data.instances(), &w))
}

/// `F_ij(M)` for every same-class ordered pair, slacks at their hinge optimum.
pub fn lmnn_pair_costs<T: Scalar>(m: &MetricMatrix<T>, data: &Dataset<T>, mu: f64) -> Result<PairCostTable<T>> {
    check_mu(mu)?;
    let dist = pairwise_squared_distances(m, data)?;
    let profile = ImpostorProfile::new(&dist, data.labels());
    let mu = T::of(mu);
    PairCostTable::from_fn(data.labels(), |i, j| pair_cost(&dist, &profile, mu, i, j))
}

/// The `k` nearest same-class instances of every point under `M`; ties go to the lower index.
pub fn nearest_same_class<T: Scalar>(m: &MetricMatrix<T>, data: &Dataset<T>, k: usize) -> Result<NeighborhoodAssignment> {
    let dist = pairwise_squared_distances(m, data)?;
    let n = data.len();
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut cands: Vec<usize> = (0..n).filter(|&j| j != i && data.same_class(i, j)).collect();
        if cands.len() < k {
            return Err(contract(format!("instance {i} has only {} same-class candidates, need {k}", cands.len())));
        }
        cands.sort_by(|&a, &b| dist[(i, a)].partial_cmp(&dist[(i, b)]).expect("finite").then(a.cmp(&b)));
        cands.truncate(k);
        rows.push(cands);
    }
    NeighborhoodAssignment::from_rows(data.labels(), rows)
}

struct LmnnObjective<'a, T: Scalar> {
    data: &'a Dataset<T>,
    p: &'a NeighborhoodAssignment,
    mu: T,
    cache: TripletSet,
}

impl<T: Scalar> LmnnObjective<'_, T> {
    fn distances(&self, m: &MetricMatrix<T>) -> DMatrix<T> {
        pairwise_from_instances(m, self.data.instances())
    }

    fn pull(&self, dist: &DMatrix<T>) -> T {
        self.p.pairs().fold(T::zero(), |acc, (i, j)| acc + dist[(i, j)])
    }
}

impl<T: Scalar> Objective<T> for LmnnObjective<'_, T> {
    type Eval = DMatrix<T>;

    fn refresh(&mut self, m: &MetricMatrix<T>) {
        let dist = self.distances(m);
        self.cache = collect_active(&dist, self.p, self.data.labels());
    }

    fn evaluate(&self, m: &MetricMatrix<T>) -> (T, DMatrix<T>) {
        let dist = self.distances(m);
        let hinge = self.cache.as_slice().iter().fold(T::zero(), |acc, &(i, j, l)| {
            acc + (T::one() + dist[(i, j)] - dist[(i, l)]).max(T::zero())
        });
        ((T::one() - self.mu) * self.pull(&dist) + self.mu * hinge, dist)
    }

    fn gradient(&self, dist: &DMatrix<T>) -> DMatrix<T> {
        let w = gradient_weights(dist, self.p, self.cache.as_slice(), self.mu);
        weighted_outer_sum(self.data.instances(), &w)
    }

    fn full_loss(&self, m: &MetricMatrix<T>) -> T {
        let dist = self.distances(m);
        let profile = ImpostorProfile::new(&dist, self.data.labels());
        self.p.pairs().fold(T::zero(), |acc, (i, j)| acc + pair_cost(&dist, &profile, self.mu, i, j))
    }

    fn normalizer(&self) -> T {
        T::of_usize(self.p.total())
    }
}

/// Fits `M` by projected gradient descent from `m0` with `P` held fixed.
///
/// The active-triplet set is rebuilt every `impostor_refresh_every` iterations; the exact
/// loss at each rebuild must not exceed the previous one, otherwise the block is discarded.
pub fn lmnn_fit<T: Scalar>(
    data: &Dataset<T>,
    p: &NeighborhoodAssignment,
    m0: &MetricMatrix<T>,
    config: &LmnnConfig,
) -> Result<(MetricMatrix<T>, FitTrace<T>)> {
    config.validate()?;
    check_shapes(m0, p, data)?;
    let mut objective = LmnnObjective { data, p, mu: T::of(config.mu), cache: TripletSet::default() };
    projected_descent(&mut objective, m0, &config.descent())
}
