use lnml_core::mcml::selection_probabilities;
use lnml_core::{
    mahalanobis_distance, pairwise_squared_distances, project_psd, solve_assignment, CostTable64, Dataset64,
    Metric64, NeighborhoodBudget,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn square(d: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-3.0..3.0f64, d * d).prop_map(move |v| DMatrix::from_vec(d, d, v))
}

fn metric(d: usize) -> impl Strategy<Value = Metric64> {
    square(d).prop_map(|a| Metric64::new(&a * a.transpose()).unwrap())
}

fn dataset(n: usize, d: usize) -> impl Strategy<Value = Dataset64> {
    prop::collection::vec(-5.0..5.0f64, n * d).prop_map(move |v| {
        let labels = (0..n).map(|i| i % 2 + 1).collect();
        Dataset64::new(DMatrix::from_vec(n, d, v), labels).unwrap()
    })
}

proptest! {
    #[test]
    fn distance_is_symmetric_and_nonnegative(m in metric(3), a in prop::collection::vec(-5.0..5.0f64, 3), b in prop::collection::vec(-5.0..5.0f64, 3)) {
        let (a, b) = (DVector::from_vec(a), DVector::from_vec(b));
        let ab = mahalanobis_distance(&m, &a, &b).unwrap();
        let ba = mahalanobis_distance(&m, &b, &a).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-12 * ab.max(1.0));
        prop_assert_eq!(mahalanobis_distance(&m, &a, &a).unwrap(), 0.0);
    }

    #[test]
    fn pairwise_matches_scalar_distance(m in metric(2), data in dataset(5, 2)) {
        let dist = pairwise_squared_distances(&m, &data).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let direct = mahalanobis_distance(&m, &data.point(i), &data.point(j)).unwrap();
                prop_assert!((dist[(i, j)] - direct).abs() <= 1e-9 * direct.max(1.0));
            }
        }
    }

    #[test]
    fn projection_is_idempotent_and_psd(a in square(4)) {
        let sym = (&a + a.transpose()) * 0.5;
        let once = project_psd(&sym).unwrap();
        prop_assert!(once.min_eigenvalue() >= -1e-8);
        let twice = project_psd(once.entries()).unwrap();
        prop_assert!((once.entries() - twice.entries()).amax() <= 1e-10);
    }

    #[test]
    fn projection_is_nearest_among_sampled_psd(a in square(3), b in square(3)) {
        let sym = (&a + a.transpose()) * 0.5;
        let nearest = project_psd(&sym).unwrap();
        let other = &b * b.transpose();
        prop_assert!((&sym - nearest.entries()).norm() <= (&sym - other).norm() + 1e-9);
    }

    #[test]
    fn projection_keeps_psd_input(m in metric(3)) {
        let p = project_psd(m.entries()).unwrap();
        prop_assert!((p.entries() - m.entries()).amax() <= 1e-9 * m.entries().amax().max(1.0));
    }

    #[test]
    fn selection_rows_are_distributions(m in metric(2), data in dataset(6, 2)) {
        let sel = selection_probabilities(&m, &data).unwrap();
        for i in 0..6 {
            let row = sel.row(i);
            prop_assert_eq!(row[i], 0.0);
            prop_assert!(row.iter().all(|p| (0.0..=1.0).contains(p)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn solver_output_meets_budget(costs in prop::collection::vec(-1.0..1.0f64, 7 * 7), k_min in 0usize..3, extra in 0usize..3, avg in 0usize..3) {
        let labels = vec![1, 1, 1, 1, 2, 2, 2];
        let k_max = k_min + extra;
        let k_av = (k_min + avg.min(extra)).max(1);
        prop_assume!(k_av <= k_max);
        let budget = NeighborhoodBudget::new(k_min, k_max, k_av).unwrap();
        let table = CostTable64::from_fn(&labels, |i, j| costs[i * 7 + j]).unwrap();
        if let Ok((p, diag)) = solve_assignment(&table, &budget) {
            let counts = p.per_instance_counts();
            prop_assert_eq!(counts.iter().sum::<usize>(), k_av * 7);
            prop_assert!(counts.iter().all(|&c| k_min <= c && c <= k_max));
            prop_assert!((table.restricted_sum(&p).unwrap() - diag.objective_value).abs() <= 1e-12);
        }
    }
}
