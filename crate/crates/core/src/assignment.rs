use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::scalar::Scalar;

/// Bounds on target-neighborhood sizes: each instance gets between `k_min` and `k_max`
/// neighbors, and the total is exactly `k_av · n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NeighborhoodBudget {
    pub k_min: usize,
    pub k_max: usize,
    pub k_av: usize,
}

impl NeighborhoodBudget {
    pub fn new(k_min: usize, k_max: usize, k_av: usize) -> Result<Self> {
        let budget = Self { k_min, k_max, k_av };
        budget.validate()?;
        Ok(budget)
    }

    /// `(k, k, k)`: every instance gets exactly `k` neighbors.
    pub fn uniform(k: usize) -> Result<Self> {
        Self::new(k, k, k)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_max < 1 || self.k_av < 1 {
            return Err(contract(format!("budget {self}: k_max and k_av must be at least 1")));
        }
        if !(self.k_max >= self.k_av && self.k_av >= self.k_min) {
            return Err(contract(format!("budget {self}: need k_max >= k_av >= k_min")));
        }
        Ok(())
    }

    pub fn is_uniform(&self) -> bool {
        self.k_min == self.k_max && self.k_max == self.k_av
    }
}

impl fmt::Display for NeighborhoodBudget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.k_min, self.k_max, self.k_av)
    }
}

/// Same-class candidate lists, one per instance, in increasing candidate index.
pub(crate) fn candidate_lists(labels: &[usize]) -> Vec<Vec<usize>> {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &y) in labels.iter().enumerate() {
        by_class.entry(y).or_default().push(i);
    }
    labels
        .iter()
        .enumerate()
        .map(|(i, y)| by_class[y].iter().copied().filter(|&j| j != i).collect())
        .collect()
}

/// Binary target-neighbor relation over ordered same-class pairs.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NeighborhoodAssignment {
    rows: Vec<Vec<usize>>,
}

impl NeighborhoodAssignment {
    /// `rows[i]` lists the targets of instance `i`. Each must be a distinct same-class index
    /// other than `i`.
    pub fn from_rows(labels: &[usize], mut rows: Vec<Vec<usize>>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch { expected: labels.len(), found: rows.len() });
        }
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_unstable();
            for w in row.windows(2) {
                if w[0] == w[1] {
                    return Err(contract(format!("pair ({i}, {}) appears twice", w[0])));
                }
            }
            for &j in row.iter() {
                if j >= labels.len() {
                    return Err(contract(format!("pair ({i}, {j}) is out of range")));
                }
                if j == i {
                    return Err(contract(format!("diagonal pair ({i}, {i})")));
                }
                if labels[i] != labels[j] {
                    return Err(contract(format!("pair ({i}, {j}) crosses classes")));
                }
            }
        }
        Ok(Self { rows })
    }

    pub fn from_pairs(labels: &[usize], pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut rows = vec![Vec::new(); labels.len()];
        for (i, j) in pairs {
            if i >= labels.len() {
                return Err(contract(format!("pair ({i}, {j}) is out of range")));
            }
            rows[i].push(j);
        }
        Self::from_rows(labels, rows)
    }

    /// Every same-class pair; the global neighborhood.
    pub fn all_same_class(labels: &[usize]) -> Self {
        Self { rows: candidate_lists(labels) }
    }

    /// An assignment with no pairs.
    pub fn empty(n: usize) -> Self {
        Self { rows: vec![Vec::new(); n] }
    }

    pub(crate) fn from_sorted_rows(rows: Vec<Vec<usize>>) -> Self {
        Self { rows }
    }

    pub fn n_instances(&self) -> usize {
        self.rows.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.rows.get(i).is_some_and(|r| r.binary_search(&j).is_ok())
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows.iter().enumerate().flat_map(|(i, r)| r.iter().map(move |&j| (i, j)))
    }

    pub fn per_instance_counts(&self) -> Vec<usize> {
        self.rows.iter().map(Vec::len).collect()
    }

    pub fn total(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Instances per neighbor count.
    pub fn histogram(&self) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for r in &self.rows {
            *h.entry(r.len()).or_insert(0) += 1;
        }
        h
    }

    /// Size of the symmetric difference with `other`.
    pub fn pairs_changed(&self, other: &Self) -> usize {
        let mut changed = 0;
        for (a, b) in self.rows.iter().zip(&other.rows) {
            let (mut x, mut y) = (0, 0);
            while x < a.len() && y < b.len() {
                match a[x].cmp(&b[y]) {
                    std::cmp::Ordering::Equal => {
                        x += 1;
                        y += 1;
                    }
                    std::cmp::Ordering::Less => {
                        changed += 1;
                        x += 1;
                    }
                    std::cmp::Ordering::Greater => {
                        changed += 1;
                        y += 1;
                    }
                }
            }
            changed += (a.len() - x) + (b.len() - y);
        }
        changed
    }

    /// Count of `i` equal for every instance, if uniform.
    pub fn uniform_count(&self) -> Option<usize> {
        let first = self.rows.first()?.len();
        self.rows.iter().all(|r| r.len() == first).then_some(first)
    }
}

/// Per-instance candidate costs `F_ij` over all same-class `j != i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCostTable<T: Scalar> {
    rows: Vec<Vec<(usize, T)>>,
}

impl<T: Scalar> PairCostTable<T> {
    /// Builds the table by evaluating `cost(i, j)` over every same-class ordered pair.
    pub fn from_fn(labels: &[usize], mut cost: impl FnMut(usize, usize) -> T) -> Result<Self> {
        let rows: Vec<Vec<(usize, T)>> = candidate_lists(labels)
            .into_iter()
            .enumerate()
            .map(|(i, cands)| cands.into_iter().map(|j| (j, cost(i, j))).collect())
            .collect();
        Self::from_rows(labels, rows)
    }

    /// Validates that each row holds exactly the same-class candidates with finite costs.
    pub fn from_rows(labels: &[usize], mut rows: Vec<Vec<(usize, T)>>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch { expected: labels.len(), found: rows.len() });
        }
        let expected = candidate_lists(labels);
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_by_key(|&(j, _)| j);
            if row.len() != expected[i].len() || row.iter().zip(&expected[i]).any(|(&(j, _), &e)| j != e) {
                return Err(contract(format!("cost row {i} does not match its same-class candidates")));
            }
            if let Some(&(j, _)) = row.iter().find(|(_, c)| !c.is_finite()) {
                return Err(Error::Numeric(format!("cost ({i}, {j}) is not finite")));
            }
        }
        Ok(Self { rows })
    }

    pub fn n_instances(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, T)] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<(usize, T)>] {
        &self.rows
    }

    pub fn candidate_count(&self, i: usize) -> usize {
        self.rows[i].len()
    }

    pub fn total_candidates(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn cost(&self, i: usize, j: usize) -> Option<T> {
        let row = self.rows.get(i)?;
        row.binary_search_by_key(&j, |&(c, _)| c).ok().map(|k| row[k].1)
    }

    /// `Σ_{(i,j) ∈ P} F_ij`. Fails if `P` uses a pair outside the table.
    pub fn restricted_sum(&self, assignment: &NeighborhoodAssignment) -> Result<T> {
        let mut total = T::zero();
        for (i, j) in assignment.pairs() {
            total += self
                .cost(i, j)
                .ok_or_else(|| contract(format!("pair ({i}, {j}) has no cost entry")))?;
        }
        Ok(total)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows.iter().map(|r| r.iter().map(|&(j, c)| (j, f(c))).collect()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_ordering_is_enforced() {
        assert!(NeighborhoodBudget::new(1, 3, 2).is_ok());
        assert!(NeighborhoodBudget::new(3, 2, 2).is_err());
        assert!(NeighborhoodBudget::new(0, 1, 0).is_err());
        assert!(NeighborhoodBudget::new(2, 5, 1).is_err());
    }

    #[test]
    fn assignment_rejects_bad_pairs() {
        let labels = [1, 1, 2, 2];
        assert!(NeighborhoodAssignment::from_pairs(&labels, [(0, 1), (2, 3)]).is_ok());
        assert!(NeighborhoodAssignment::from_pairs(&labels, [(0, 2)]).is_err());
        assert!(NeighborhoodAssignment::from_pairs(&labels, [(0, 0)]).is_err());
        assert!(NeighborhoodAssignment::from_pairs(&labels, [(0, 1), (0, 1)]).is_err());
    }

    #[test]
    fn counts_histogram_and_changes() {
        let labels = [1, 1, 1, 2, 2];
        let a = NeighborhoodAssignment::from_pairs(&labels, [(0, 1), (0, 2), (1, 0), (3, 4)]).unwrap();
        let b = NeighborhoodAssignment::from_pairs(&labels, [(0, 1), (1, 2), (3, 4), (4, 3)]).unwrap();
        assert_eq!(a.per_instance_counts(), vec![2, 1, 0, 1, 0]);
        assert_eq!(a.histogram(), BTreeMap::from([(0, 2), (1, 2), (2, 1)]));
        assert_eq!(a.pairs_changed(&b), 4);
        assert_eq!(a.pairs_changed(&a), 0);
    }

    #[test]
    fn cost_table_candidates_are_exact() {
        let labels = [1, 2, 1, 1];
        let t = PairCostTable::from_fn(&labels, |i, j| (i * 10 + j) as f64).unwrap();
        assert_eq!(t.row(0), &[(2, 2.0), (3, 3.0)]);
        assert_eq!(t.row(1), &[]);
        assert_eq!(t.cost(3, 2), Some(32.0));
        assert_eq!(t.cost(0, 1), None);
        assert!(PairCostTable::<f64>::from_rows(&labels, vec![vec![(2, 1.0)], vec![], vec![], vec![]]).is_err());
    }
}
