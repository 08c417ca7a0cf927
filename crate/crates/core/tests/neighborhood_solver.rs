mod common;

use lnml_core::neighborhood::Infeasibility;
use lnml_core::{
    solve_assignment, solve_assignment_oracle, CostTable64, Error, NeighborhoodAssignment, NeighborhoodBudget,
};
use rand::Rng;

fn random_labels(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    let classes = rng.random_range(1..=3usize.min(n));
    let mut labels: Vec<usize> = (0..n).map(|i| if i < classes { i + 1 } else { rng.random_range(1..=classes) }).collect();
    // keep the labels gap-free but not sorted
    for i in (1..n).rev() {
        labels.swap(i, rng.random_range(0..=i));
    }
    labels
}

fn pair_count(labels: &[usize]) -> usize {
    labels.iter().map(|&c| labels.iter().filter(|&&d| d == c).count() - 1).sum()
}

fn assert_budget(p: &NeighborhoodAssignment, budget: &NeighborhoodBudget, labels: &[usize]) {
    let counts = p.per_instance_counts();
    assert_eq!(counts.iter().sum::<usize>(), budget.k_av * labels.len());
    assert!(counts.iter().all(|&c| budget.k_min <= c && c <= budget.k_max));
    for (i, j) in p.pairs() {
        assert!(i != j && labels[i] == labels[j]);
    }
    let mut seen: Vec<(usize, usize)> = p.pairs().collect();
    seen.sort_unstable();
    seen.dedup();
    assert_eq!(seen.len(), p.total(), "a pair was selected twice");
}

#[test]
fn greedy_matches_exhaustive_oracle_on_500_instances() {
    let mut rng = common::rng(7);
    let mut solved = 0;
    let mut infeasible = 0;
    while solved < 500 {
        let n = rng.random_range(2..=8);
        let labels = random_labels(&mut rng, n);
        if pair_count(&labels) > 25 {
            continue;
        }
        // coarse costs produce exact ties, fine ones exercise negative values
        let coarse = rng.random_bool(0.3);
        let costs = CostTable64::from_fn(&labels, |_, _| {
            if coarse {
                rng.random_range(-2..=2) as f64 * 0.5
            } else {
                rng.random_range(-1.0..=1.0)
            }
        })
        .unwrap();
        let k_max = rng.random_range(1..=4);
        let k_min = rng.random_range(0..=k_max);
        let k_av = rng.random_range(k_min.max(1)..=k_max);
        let budget = NeighborhoodBudget::new(k_min, k_max, k_av).unwrap();

        match (solve_assignment(&costs, &budget), solve_assignment_oracle(&costs, &budget)) {
            (Ok((p, diag)), Ok((q, oracle))) => {
                assert!((diag.objective_value - oracle.objective_value).abs() <= 1e-12);
                assert_eq!(p, q, "tie-break differs for labels {labels:?}, budget {budget}");
                assert_budget(&p, &budget, &labels);
                assert_eq!(diag.selected_count, budget.k_av * n);
                solved += 1;
            }
            (Err(Error::Budget(_)), Err(Error::Budget(Infeasibility::NoFeasibleAssignment))) => infeasible += 1,
            (a, b) => panic!("solvers disagree on feasibility: {:?} vs {:?}", a.map(|r| r.1), b.map(|r| r.1)),
        }
    }
    assert!(infeasible > 0, "random budgets should include infeasible ones");
}

/// Best assignment by dynamic programming over rows; state is the running pair count.
/// Ties keep the smaller rank bitmask with pairs ranked by `(j, i)`, which compares
/// partial solutions consistently because rows own disjoint bits.
fn dp_oracle(costs: &[Vec<(usize, f64)>], budget: &NeighborhoodBudget) -> (f64, u128) {
    let n = costs.len();
    let mut ranked: Vec<(usize, usize)> = costs.iter().enumerate().flat_map(|(i, r)| r.iter().map(move |&(j, _)| (j, i))).collect();
    ranked.sort_unstable();
    let rank = |i: usize, j: usize| ranked.iter().position(|&p| p == (j, i)).unwrap();
    let better = |a: (f64, u128), b: (f64, u128)| a.0 < b.0 || (a.0 == b.0 && a.1 < b.1);

    let target = budget.k_av * n;
    let mut best: Vec<Option<(f64, u128)>> = vec![None; target + 1];
    best[0] = Some((0.0, 0));
    for (i, row) in costs.iter().enumerate() {
        let mut next: Vec<Option<(f64, u128)>> = vec![None; target + 1];
        for subset in 0u32..(1 << row.len()) {
            let size = subset.count_ones() as usize;
            if size < budget.k_min || size > budget.k_max {
                continue;
            }
            let (mut cost, mut mask) = (0.0, 0u128);
            for (b, &(j, c)) in row.iter().enumerate() {
                if subset >> b & 1 == 1 {
                    cost += c;
                    mask |= 1 << rank(i, j);
                }
            }
            for total in 0..=target - size.min(target) {
                if let Some((c0, m0)) = best[total] {
                    let cand = (c0 + cost, m0 | mask);
                    if size + total <= target && next[total + size].is_none_or(|cur| better(cand, cur)) {
                        next[total + size] = Some(cand);
                    }
                }
            }
        }
        best = next;
    }
    best[target].expect("feasible budget")
}

#[test]
fn six_points_on_a_line_match_enumeration() {
    let labels = vec![1; 6];
    let costs = CostTable64::from_fn(&labels, |i, j| (i as f64 - j as f64).abs()).unwrap();
    let budget = NeighborhoodBudget::new(1, 3, 2).unwrap();
    let (p, diag) = solve_assignment(&costs, &budget).unwrap();
    let (objective, mask) = dp_oracle(costs.rows(), &budget);
    assert_eq!(diag.objective_value, objective);

    let mut ranked: Vec<(usize, usize)> = p.pairs().map(|(i, j)| (j, i)).collect();
    let mut all: Vec<(usize, usize)> =
        (0..6).flat_map(|i| (0..6).filter(move |&j| j != i).map(move |j| (j, i))).collect();
    all.sort_unstable();
    ranked.sort_unstable();
    let solver_mask = ranked.iter().fold(0u128, |m, p| m | 1 << all.iter().position(|q| q == p).unwrap());
    assert_eq!(solver_mask, mask);
    assert_budget(&p, &budget, &labels);
}

#[test]
fn dp_oracle_agrees_with_library_oracle() {
    let mut rng = common::rng(11);
    for _ in 0..100 {
        let n = rng.random_range(2..=6);
        let labels = random_labels(&mut rng, n);
        if pair_count(&labels) > 25 {
            continue;
        }
        let costs = CostTable64::from_fn(&labels, |_, _| rng.random_range(-1..=1) as f64).unwrap();
        let budget = NeighborhoodBudget::new(1, 2, 1).unwrap();
        let Ok((_, diag)) = solve_assignment_oracle(&costs, &budget) else { continue };
        assert_eq!(dp_oracle(costs.rows(), &budget).0, diag.objective_value);
    }
}

#[test]
fn lowering_the_cheapest_cost_keeps_it_selected() {
    let mut rng = common::rng(3);
    for _ in 0..200 {
        let labels = random_labels(&mut rng, 8);
        let mut costs = CostTable64::from_fn(&labels, |_, _| rng.random_range(-1.0..=1.0)).unwrap();
        let budget = NeighborhoodBudget::new(0, 2, 1).unwrap();
        let Ok((p, _)) = solve_assignment(&costs, &budget) else { continue };
        let (i, j, c) = costs
            .rows()
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().map(move |&(j, c)| (i, j, c)))
            .min_by(|a, b| a.2.total_cmp(&b.2))
            .unwrap();
        assert!(p.contains(i, j));
        costs = costs.map(|v| if v == c { v - 1.0 } else { v });
        assert!(solve_assignment(&costs, &budget).unwrap().0.contains(i, j));
    }
}
