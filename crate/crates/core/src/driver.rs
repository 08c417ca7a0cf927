//! Alternating optimization of the target neighborhood and the metric.
//!
//! Each outer step first solves for the assignment at the current metric (exact, via
//! [`solve_assignment`]) and then refits the metric under that assignment, warm-started from
//! the previous metric. Slacks are implicit in the metric, so no slack state is carried.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::assignment::{NeighborhoodAssignment, NeighborhoodBudget, PairCostTable};
use crate::dataset::Dataset;
use crate::error::{contract, Error, Result};
use crate::lmnn::{lmnn_fit, lmnn_pair_costs, LmnnConfig};
use crate::mcml::{mcml_fit, mcml_pair_costs, McmlConfig};
use crate::metric::MetricMatrix;
use crate::neighborhood::solve_assignment;
use crate::optim::FitTrace;
use crate::scalar::Scalar;

/// Metric learner wrapped by the alternation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Learner {
    Lmnn(LmnnConfig),
    Mcml(McmlConfig),
}

impl Learner {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Lmnn(_) => "ln-lmnn",
            Self::Mcml(_) => "ln-mcml",
        }
    }

    /// `F_ij(M)` for all same-class pairs.
    pub fn pair_costs<T: Scalar>(&self, m: &MetricMatrix<T>, data: &Dataset<T>, k_av: usize) -> Result<PairCostTable<T>> {
        match self {
            Self::Lmnn(cfg) => lmnn_pair_costs(m, data, cfg.mu),
            Self::Mcml(_) => mcml_pair_costs(m, data, k_av),
        }
    }

    /// Runs the wrapped learner under a fixed assignment.
    pub fn fit<T: Scalar>(
        &self,
        data: &Dataset<T>,
        p: &NeighborhoodAssignment,
        m0: &MetricMatrix<T>,
    ) -> Result<(MetricMatrix<T>, FitTrace<T>)> {
        match self {
            Self::Lmnn(cfg) => lmnn_fit(data, p, m0, cfg),
            Self::Mcml(cfg) => mcml_fit(data, p, m0, cfg),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LnmlConfig {
    pub learner: Learner,
    pub budget: NeighborhoodBudget,
    #[serde(default = "default_outer_iters")]
    pub max_outer_iters: usize,
    #[serde(default = "default_outer_tol")]
    pub outer_tol: f64,
}

fn default_outer_iters() -> usize {
    20
}

fn default_outer_tol() -> f64 {
    1e-6
}

impl LnmlConfig {
    pub fn new(learner: Learner, budget: NeighborhoodBudget) -> Self {
        Self { learner, budget, max_outer_iters: default_outer_iters(), outer_tol: default_outer_tol() }
    }

    pub fn validate(&self) -> Result<()> {
        self.budget.validate()?;
        if let Learner::Mcml(cfg) = &self.learner {
            cfg.validate()?;
            if !self.budget.is_uniform() {
                return Err(contract(format!(
                    "ln-mcml needs k_min = k_max = k_av, got budget {}",
                    self.budget
                )));
            }
        }
        if let Learner::Lmnn(cfg) = &self.learner {
            cfg.validate()?;
        }
        if !(self.outer_tol.is_finite() && self.outer_tol >= 0.0) {
            return Err(contract("outer_tol must be finite and nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterStop {
    /// Relative objective decrease fell below `outer_tol`.
    Tolerance,
    /// The assignment step reproduced the previous assignment.
    AssignmentStable,
    MaxIterations,
}

/// One record per completed outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProgressRecord {
    pub iteration: usize,
    pub objective: f64,
    pub pairs_changed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LnmlReport<T: Scalar> {
    pub final_metric: MetricMatrix<T>,
    pub final_assignment: NeighborhoodAssignment,
    /// Joint objective `Σ P^(k) F(M^(k))` after each outer iteration.
    pub outer_objective_trace: Vec<T>,
    pub outer_iterations_used: usize,
    /// Pairs that entered or left the assignment at each outer iteration (the first entry
    /// counts every pair of `P^(1)`).
    pub assignment_change_trace: Vec<usize>,
    pub inner_traces: Vec<FitTrace<T>>,
    pub stop: OuterStop,
}

/// Failure of the alternation, with whatever iterations completed before it.
#[derive(Debug)]
pub struct LnmlFailure<T: Scalar> {
    pub error: Error,
    pub partial: Option<LnmlReport<T>>,
}

impl<T: Scalar> fmt::Display for LnmlFailure<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.partial {
            Some(r) => write!(f, "{} (after {} outer iterations)", self.error, r.outer_iterations_used),
            None => write!(f, "{}", self.error),
        }
    }
}

impl<T: Scalar> std::error::Error for LnmlFailure<T> {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl<T: Scalar> From<Error> for LnmlFailure<T> {
    fn from(error: Error) -> Self {
        Self { error, partial: None }
    }
}

impl<T: Scalar> From<LnmlFailure<T>> for Error {
    fn from(f: LnmlFailure<T>) -> Self {
        f.error
    }
}

/// `Σ_{(i,j)∈P} F_ij(M)` under the learner's cost.
pub fn joint_objective<T: Scalar>(
    p: &NeighborhoodAssignment,
    m: &MetricMatrix<T>,
    learner: &Learner,
    data: &Dataset<T>,
    k_av: usize,
) -> Result<T> {
    learner.pair_costs(m, data, k_av)?.restricted_sum(p)
}

/// Runs the alternation without progress reporting.
pub fn lnml_fit<T: Scalar>(
    data: &Dataset<T>,
    config: &LnmlConfig,
    initial_metric: &MetricMatrix<T>,
) -> std::result::Result<LnmlReport<T>, LnmlFailure<T>> {
    lnml_fit_with_progress(data, config, initial_metric, |_| {})
}

/// Runs the alternation, calling `progress` after every outer iteration.
pub fn lnml_fit_with_progress<T: Scalar>(
    data: &Dataset<T>,
    config: &LnmlConfig,
    initial_metric: &MetricMatrix<T>,
    mut progress: impl FnMut(&ProgressRecord),
) -> std::result::Result<LnmlReport<T>, LnmlFailure<T>> {
    config.validate()?;
    if initial_metric.dim() != data.dim() {
        return Err(Error::DimensionMismatch { expected: data.dim(), found: initial_metric.dim() }.into());
    }
    let k_av = config.budget.k_av;
    let mut report = LnmlReport {
        final_metric: initial_metric.clone(),
        final_assignment: NeighborhoodAssignment::empty(data.len()),
        outer_objective_trace: Vec::new(),
        outer_iterations_used: 0,
        assignment_change_trace: Vec::new(),
        inner_traces: Vec::new(),
        stop: OuterStop::MaxIterations,
    };
    let partial = |error: Error, report: &LnmlReport<T>| LnmlFailure {
        error,
        partial: (report.outer_iterations_used > 0).then(|| report.clone()),
    };

    for iteration in 1..=config.max_outer_iters {
        let costs = config
            .learner
            .pair_costs(&report.final_metric, data, k_av)
            .map_err(|e| partial(e, &report))?;
        let (p, _) = solve_assignment(&costs, &config.budget).map_err(|e| partial(e, &report))?;
        if report.outer_iterations_used > 0 && p == report.final_assignment {
            report.stop = OuterStop::AssignmentStable;
            return Ok(report);
        }
        let changed = if report.outer_iterations_used == 0 { p.total() } else { p.pairs_changed(&report.final_assignment) };

        let (m, trace) = config
            .learner
            .fit(data, &p, &report.final_metric)
            .map_err(|e| partial(e, &report))?;
        let objective = joint_objective(&p, &m, &config.learner, data, k_av).map_err(|e| partial(e, &report))?;

        let previous = report.outer_objective_trace.last().copied();
        report.final_metric = m;
        report.final_assignment = p;
        report.outer_objective_trace.push(objective);
        report.assignment_change_trace.push(changed);
        report.inner_traces.push(trace);
        report.outer_iterations_used = iteration;
        progress(&ProgressRecord { iteration, objective: objective.as_f64(), pairs_changed: changed });

        if let Some(prev) = previous {
            let rel = (prev - objective) / prev.abs().max(T::of(1e-300));
            if rel < T::of(config.outer_tol) {
                report.stop = OuterStop::Tolerance;
                return Ok(report);
            }
        }
    }
    Ok(report)
}
