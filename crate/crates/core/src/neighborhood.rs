//! Exact target-neighborhood selection at a fixed metric.
//!
//! The selection problem picks a binary `P` over same-class pairs minimizing `Σ P_ij F_ij`,
//! with per-instance counts in `[k_min, k_max]` and exactly `k_av · n` pairs overall. It has a
//! totally unimodular constraint matrix, so its LP relaxation is integral. The same structure
//! makes it a minimum-weight basis problem on a truncated partition matroid once every
//! instance holds its `k_min` cheapest candidates, which the greedy below solves exactly
//! without building the constraint matrix.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use crate::assignment::{NeighborhoodAssignment, NeighborhoodBudget, PairCostTable};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest candidate-pair count the enumeration oracle accepts.
pub const ORACLE_PAIR_LIMIT: usize = 25;

/// Why a budget cannot be met on a given candidate structure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Infeasibility {
    /// Budget triple itself is malformed.
    InvalidBudget(String),
    /// Instance has fewer same-class candidates than `k_min`.
    TooFewCandidates { instance: usize, candidates: usize, k_min: usize },
    /// `Σ_i min(m_i, k_max)` falls short of `k_av · n`.
    CapacityBelowTarget { capacity: usize, target: usize },
    /// `n · k_min` exceeds `k_av · n`.
    MinimumAboveTarget { minimum: usize, target: usize },
    /// Exhaustive enumeration found no assignment meeting the budget.
    NoFeasibleAssignment,
}

impl fmt::Display for Infeasibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvalidBudget(msg) => write!(f, "{msg}"),
            Self::TooFewCandidates { instance, candidates, k_min } => write!(
                f,
                "instance {instance} has {candidates} same-class candidates but k_min = {k_min}"
            ),
            Self::CapacityBelowTarget { capacity, target } => {
                write!(f, "at most {capacity} pairs can be selected but k_av * n = {target}")
            }
            Self::MinimumAboveTarget { minimum, target } => {
                write!(f, "k_min forces at least {minimum} pairs but k_av * n = {target}")
            }
            Self::NoFeasibleAssignment => write!(f, "no binary assignment satisfies the budget"),
        }
    }
}

/// Summary of a solved assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveDiagnostics<T: Scalar> {
    pub objective_value: T,
    pub selected_count: usize,
    pub per_instance_histogram: BTreeMap<usize, usize>,
}

impl<T: Scalar> SolveDiagnostics<T> {
    fn of(assignment: &NeighborhoodAssignment, costs: &PairCostTable<T>) -> Result<Self> {
        Ok(Self {
            objective_value: costs.restricted_sum(assignment)?,
            selected_count: assignment.total(),
            per_instance_histogram: assignment.histogram(),
        })
    }
}

/// Checks whether `budget` can be met: every `m_i >= k_min` and
/// `Σ_i min(m_i, k_max) >= k_av·n >= n·k_min`.
pub fn check_feasibility<T: Scalar>(
    costs: &PairCostTable<T>,
    budget: &NeighborhoodBudget,
) -> std::result::Result<(), Infeasibility> {
    feasible_for_counts((0..costs.n_instances()).map(|i| costs.candidate_count(i)), budget)
}

/// [`check_feasibility`] from class sizes alone: a class of size `s` contributes `s`
/// instances with `s - 1` candidates each.
pub fn budget_feasible_for_sizes(
    class_sizes: &[usize],
    budget: &NeighborhoodBudget,
) -> std::result::Result<(), Infeasibility> {
    let counts = class_sizes.iter().flat_map(|&s| std::iter::repeat_n(s.saturating_sub(1), s));
    feasible_for_counts(counts, budget)
}

fn feasible_for_counts(
    candidate_counts: impl Iterator<Item = usize>,
    budget: &NeighborhoodBudget,
) -> std::result::Result<(), Infeasibility> {
    budget.validate().map_err(|e| Infeasibility::InvalidBudget(e.to_string()))?;
    let mut n = 0;
    let mut capacity = 0;
    for (i, m) in candidate_counts.enumerate() {
        if m < budget.k_min {
            return Err(Infeasibility::TooFewCandidates { instance: i, candidates: m, k_min: budget.k_min });
        }
        capacity += m.min(budget.k_max);
        n += 1;
    }
    let target = budget.k_av * n;
    if capacity < target {
        return Err(Infeasibility::CapacityBelowTarget { capacity, target });
    }
    let minimum = budget.k_min * n;
    if minimum > target {
        return Err(Infeasibility::MinimumAboveTarget { minimum, target });
    }
    Ok(())
}

fn cmp_cost<T: Scalar>(a: T, b: T) -> Ordering {
    a.partial_cmp(&b).expect("costs are finite")
}

/// Minimum-cost binary assignment under `budget`.
///
/// Each instance first takes its `k_min` cheapest candidates; the remaining pairs are then
/// added cheapest-first, skipping instances already at `k_max`, until `k_av · n` pairs are
/// selected. Equal costs prefer the lower candidate index `j`, then the lower instance `i`.
pub fn solve_assignment<T: Scalar>(
    costs: &PairCostTable<T>,
    budget: &NeighborhoodBudget,
) -> Result<(NeighborhoodAssignment, SolveDiagnostics<T>)> {
    check_feasibility(costs, budget).map_err(Error::Budget)?;
    let n = costs.n_instances();
    let target = budget.k_av * n;

    let mut rows: Vec<Vec<usize>> = Vec::with_capacity(n);
    let mut rest: Vec<(T, usize, usize)> = Vec::with_capacity(costs.total_candidates());
    for i in 0..n {
        let mut row: Vec<(usize, T)> = costs.row(i).to_vec();
        row.sort_by(|a, b| cmp_cost(a.1, b.1).then(a.0.cmp(&b.0)));
        rows.push(row[..budget.k_min].iter().map(|&(j, _)| j).collect());
        rest.extend(row[budget.k_min..].iter().map(|&(j, c)| (c, j, i)));
    }

    let mut selected = budget.k_min * n;
    if selected < target {
        rest.sort_by(|a, b| cmp_cost(a.0, b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        for (_, j, i) in rest {
            if selected == target {
                break;
            }
            if rows[i].len() < budget.k_max {
                rows[i].push(j);
                selected += 1;
            }
        }
    }
    debug_assert_eq!(selected, target);

    for row in &mut rows {
        row.sort_unstable();
    }
    let assignment = NeighborhoodAssignment::from_sorted_rows(rows);
    let diagnostics = SolveDiagnostics::of(&assignment, costs)?;
    Ok((assignment, diagnostics))
}

/// Exhaustive reference solver for small instances.
///
/// Enumerates every binary assignment meeting the budget directly (no greedy, no feasibility
/// shortcut) and keeps the cheapest. Ties are resolved the way [`solve_assignment`] resolves
/// them: pairs are ranked by `(j, i)` and the assignment whose rank bitmask is smallest wins,
/// which is the limit of perturbing each cost by `ε · 2^rank`.
pub fn solve_assignment_oracle<T: Scalar>(
    costs: &PairCostTable<T>,
    budget: &NeighborhoodBudget,
) -> Result<(NeighborhoodAssignment, SolveDiagnostics<T>)> {
    budget.validate()?;
    let pair_count = costs.total_candidates();
    if pair_count > ORACLE_PAIR_LIMIT {
        return Err(Error::TooLarge { pairs: pair_count, limit: ORACLE_PAIR_LIMIT });
    }
    let n = costs.n_instances();
    let mut pairs: Vec<(usize, usize, T)> = (0..n)
        .flat_map(|i| costs.row(i).iter().map(move |&(j, c)| (j, i, c)))
        .collect();
    pairs.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));

    struct Search<'a, T: Scalar> {
        pairs: &'a [(usize, usize, T)],
        budget: NeighborhoodBudget,
        target: usize,
        counts: Vec<usize>,
        best: Option<(T, u32)>,
    }

    impl<T: Scalar> Search<'_, T> {
        fn visit(&mut self, pos: usize, chosen: usize, mask: u32, objective: T) {
            if chosen == self.target {
                if self.counts.iter().all(|&c| c >= self.budget.k_min) {
                    let better = match self.best {
                        None => true,
                        Some((best, best_mask)) => {
                            let tol = T::default_epsilon() * T::of(64.0) * (T::one() + best.abs());
                            objective < best - tol || ((objective - best).abs() <= tol && mask < best_mask)
                        }
                    };
                    if better {
                        self.best = Some((objective, mask));
                    }
                }
                return;
            }
            if pos == self.pairs.len() || self.pairs.len() - pos < self.target - chosen {
                return;
            }
            let (_, i, c) = self.pairs[pos];
            if self.counts[i] < self.budget.k_max {
                self.counts[i] += 1;
                self.visit(pos + 1, chosen + 1, mask | (1 << pos), objective + c);
                self.counts[i] -= 1;
            }
            self.visit(pos + 1, chosen, mask, objective);
        }
    }

    let mut search = Search {
        pairs: &pairs,
        budget: *budget,
        target: budget.k_av * n,
        counts: vec![0; n],
        best: None,
    };
    search.visit(0, 0, 0, T::zero());
    let (_, mask) = search.best.ok_or(Error::Budget(Infeasibility::NoFeasibleAssignment))?;

    let mut rows = vec![Vec::new(); n];
    for (bit, &(j, i, _)) in pairs.iter().enumerate() {
        if mask & (1 << bit) != 0 {
            rows[i].push(j);
        }
    }
    for row in &mut rows {
        row.sort_unstable();
    }
    let assignment = NeighborhoodAssignment::from_sorted_rows(rows);
    let diagnostics = SolveDiagnostics::of(&assignment, costs)?;
    Ok((assignment, diagnostics))
}

/// Writes `i,j,cost` rows for every selected pair.
pub fn write_assignment_csv<T: Scalar, W: Write>(
    out: W,
    assignment: &NeighborhoodAssignment,
    costs: &PairCostTable<T>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io { path: "<assignment csv>".into(), source: e.into() };
    w.write_record(["i", "j", "cost"]).map_err(io)?;
    for (i, j) in assignment.pairs() {
        let cost = costs.cost(i, j).map(|c| c.to_string()).unwrap_or_default();
        w.write_record([i.to_string(), j.to_string(), cost]).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io { path: "<assignment csv>".into(), source: e })?;
    Ok(())
}
