mod common;

use approx::assert_relative_eq;
use lnml_core::lmnn::{active_triplets, lmnn_fit, lmnn_gradient, lmnn_loss, lmnn_pair_costs, nearest_same_class};
use lnml_core::mcml::{mcml_fit, mcml_gradient, mcml_loss, mcml_pair_costs, selection_probabilities};
use lnml_core::metric::difference_outer;
use lnml_core::{
    mahalanobis_distance, pairwise_squared_distances, Dataset64, LmnnConfig, McmlConfig, Metric64,
    NeighborhoodAssignment,
};
use nalgebra::{dmatrix, DMatrix};

fn four_points() -> Dataset64 {
    Dataset64::new(dmatrix![0.0, 0.0; 0.5, 0.2; 0.3, 0.9; 1.1, 0.4], vec![1, 1, 2, 2]).unwrap()
}

fn all_pairs(data: &Dataset64) -> NeighborhoodAssignment {
    NeighborhoodAssignment::all_same_class(data.labels())
}

/// Direct scan over every (i, j, l) with plain loops.
fn lmnn_scan(m: &Metric64, p: &NeighborhoodAssignment, data: &Dataset64, mu: f64) -> f64 {
    let d = |a: usize, b: usize| mahalanobis_distance(m, &data.point(a), &data.point(b)).unwrap();
    let mut total = 0.0;
    for (i, j) in p.pairs() {
        total += (1.0 - mu) * d(i, j);
        for l in 0..data.len() {
            if data.label(l) != data.label(i) {
                total += mu * (1.0 + d(i, j) - d(i, l)).max(0.0);
            }
        }
    }
    total
}

#[test]
fn lmnn_loss_matches_triplet_scan() {
    let data = four_points();
    let m = Metric64::new(dmatrix![2.0, 0.3; 0.3, 0.5]).unwrap();
    let p = all_pairs(&data);
    for mu in [0.0, 0.25, 0.5, 1.0] {
        let loss = lmnn_loss(&m, &p, &data, mu).unwrap();
        assert_relative_eq!(loss.total, lmnn_scan(&m, &p, &data, mu), epsilon = 1e-12);
        let costs = lmnn_pair_costs(&m, &data, mu).unwrap();
        for &(i, j, c) in &loss.per_pair {
            assert_relative_eq!(costs.cost(i, j).unwrap(), c, epsilon = 1e-12);
        }
        assert_relative_eq!(costs.restricted_sum(&p).unwrap(), loss.total, epsilon = 1e-12);
    }
}

#[test]
fn lmnn_without_hinge_is_pull_term() {
    let mut rng = common::rng(5);
    let data = common::blobs(&mut rng, &[5, 6], 3, 1.0);
    let m = common::random_metric(&mut rng, 3, 0.5, 0.1);
    let p = nearest_same_class(&Metric64::identity(3), &data, 2).unwrap();
    let dist = pairwise_squared_distances(&m, &data).unwrap();
    let pull: f64 = p.pairs().map(|(i, j)| dist[(i, j)]).sum();
    assert_relative_eq!(lmnn_loss(&m, &p, &data, 0.0).unwrap().total, pull, epsilon = 1e-10);
    let costs = lmnn_pair_costs(&m, &data, 0.0).unwrap();
    for (i, row) in costs.rows().iter().enumerate() {
        for &(j, c) in row {
            assert_relative_eq!(c, dist[(i, j)], epsilon = 1e-12);
        }
    }
}

#[test]
fn lmnn_pair_costs_are_nonnegative() {
    let mut rng = common::rng(6);
    for _ in 0..20 {
        let data = common::blobs(&mut rng, &[4, 4, 3], 2, 0.5);
        let m = common::random_metric(&mut rng, 2, 1.0, 0.0);
        let costs = lmnn_pair_costs(&m, &data, 0.5).unwrap();
        assert!(costs.rows().iter().flatten().all(|&(_, c)| c >= 0.0));
    }
}

#[test]
fn lmnn_gradient_special_cases() {
    // far-apart classes: no triplet is active
    let data = Dataset64::new(dmatrix![0.0; 0.1; 10.0; 10.1], vec![1, 1, 2, 2]).unwrap();
    let m = Metric64::identity(1);
    let p = all_pairs(&data);
    assert!(active_triplets(&m, &p, &data).unwrap().is_empty());
    assert_eq!(lmnn_gradient(&m, &p, &data, 1.0).unwrap(), DMatrix::zeros(1, 1));
    assert_eq!(lmnn_loss(&m, &p, &data, 1.0).unwrap().total, 0.0);

    let data = four_points();
    let single = NeighborhoodAssignment::from_pairs(data.labels(), [(0, 1)]).unwrap();
    let expected = difference_outer(&data.point(0), &data.point(1));
    assert_relative_eq!(lmnn_gradient(&Metric64::identity(2), &single, &data, 0.0).unwrap(), expected, epsilon = 1e-14);
}

#[test]
fn lmnn_fit_is_stationary_when_margins_hold() {
    let data = Dataset64::new(dmatrix![0.0; 0.1; 10.0; 10.1], vec![1, 1, 2, 2]).unwrap();
    let m0 = Metric64::identity(1);
    let config = LmnnConfig { mu: 1.0, ..LmnnConfig::default() };
    let (m, trace) = lmnn_fit(&data, &all_pairs(&data), &m0, &config).unwrap();
    assert_eq!(m, m0);
    assert_eq!(trace.final_loss(), 0.0);
}

#[test]
fn lmnn_fit_descends_and_stays_psd() {
    let mut rng = common::rng(8);
    let data = common::blobs(&mut rng, &[10, 10], 3, 0.6);
    let p = nearest_same_class(&Metric64::identity(3), &data, 3).unwrap();
    let (m, trace) = lmnn_fit(&data, &p, &Metric64::identity(3), &LmnnConfig::default()).unwrap();
    assert!(trace.final_loss() <= trace.initial_loss());
    assert!(trace.losses.windows(2).all(|w| w[1] <= w[0]));
    assert!(m.min_eigenvalue() >= -1e-8);
    assert_relative_eq!(lmnn_loss(&m, &p, &data, 0.5).unwrap().total, trace.final_loss(), epsilon = 1e-9);
}

#[test]
fn selection_probabilities_match_naive_softmax() {
    let mut rng = common::rng(9);
    let data = common::blobs(&mut rng, &[3, 3], 2, 0.5);
    let m = Metric64::identity(2);
    let sel = selection_probabilities(&m, &data).unwrap();
    let dist = pairwise_squared_distances(&m, &data).unwrap();
    for i in 0..6 {
        let z: f64 = (0..6).filter(|&k| k != i).map(|k| (-dist[(i, k)]).exp()).sum();
        for j in 0..6 {
            let naive = if i == j { 0.0 } else { (-dist[(i, j)]).exp() / z };
            assert!((sel.get(i, j) - naive).abs() <= 1e-12);
        }
        assert_relative_eq!(sel.log_normalizers()[i], z.ln(), epsilon = 1e-12);
    }
}

#[test]
fn equidistant_points_split_probability() {
    let data = Dataset64::new(dmatrix![0.0, 0.0; 1.0, 0.0; -1.0, 0.0], vec![1, 1, 2]).unwrap();
    let sel = selection_probabilities(&Metric64::identity(2), &data).unwrap();
    assert_relative_eq!(sel.get(0, 1), 0.5, epsilon = 1e-15);
    assert_relative_eq!(sel.get(0, 2), 0.5, epsilon = 1e-15);
}

#[test]
fn selection_rows_stay_stochastic_at_large_distances() {
    let mut rng = common::rng(10);
    for scale in [1.0, 1e2, 1e4] {
        let data = common::blobs(&mut rng, &[8, 8], 3, 30.0);
        // rescale so the largest squared distance is about `scale`
        let raw = pairwise_squared_distances(&Metric64::identity(3), &data).unwrap();
        let m = Metric64::identity(3).scaled(scale / common::max_abs(&raw)).unwrap();
        let sel = selection_probabilities(&m, &data).unwrap();
        for i in 0..data.len() {
            let row = sel.row(i);
            assert_eq!(row[i], 0.0);
            assert!(row.iter().all(|p| p.is_finite() && (0.0..=1.0).contains(p)));
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12, "row {i} sums to {}", row.iter().sum::<f64>());
        }
    }
}

/// `Σ_i KL(p0(·|i) ‖ p_M(·|i))` with `p0` uniform over `P_i`, minus the entropy constant.
fn kl_oracle(m: &Metric64, p: &NeighborhoodAssignment, data: &Dataset64) -> f64 {
    let n = data.len();
    let dist = pairwise_squared_distances(m, data).unwrap();
    let mut kl = 0.0;
    let mut constant = 0.0;
    for i in 0..n {
        let z: f64 = (0..n).filter(|&k| k != i).map(|k| (-dist[(i, k)]).exp()).sum();
        let k = p.neighbors(i).len() as f64;
        for &j in p.neighbors(i) {
            let p0 = 1.0 / k;
            let pm = (-dist[(i, j)]).exp() / z;
            kl += p0 * (p0 / pm).ln();
            constant += p0 * p0.ln();
        }
    }
    kl - constant
}

#[test]
fn mcml_loss_matches_kl_sum() {
    let mut rng = common::rng(12);
    let data = common::blobs(&mut rng, &[4, 4], 2, 1.0);
    let m = common::random_metric(&mut rng, 2, 0.5, 0.1);
    let p = nearest_same_class(&Metric64::identity(2), &data, 2).unwrap();
    assert_relative_eq!(mcml_loss(&m, &p, &data, 2).unwrap(), kl_oracle(&m, &p, &data), epsilon = 1e-10);
}

#[test]
fn mcml_loss_limits() {
    let two = Dataset64::new(dmatrix![0.0, 1.0; 2.0, -1.0], vec![1, 1]).unwrap();
    let p = all_pairs(&two);
    let m = Metric64::identity(2);
    assert_relative_eq!(mcml_loss(&m, &p, &two, 1).unwrap(), 0.0, epsilon = 1e-12);
    assert_eq!(mcml_gradient(&m, &p, &two, 1).unwrap(), DMatrix::zeros(2, 2));
    let costs = mcml_pair_costs(&m, &two, 1).unwrap();
    assert_relative_eq!(costs.cost(0, 1).unwrap(), 0.0, epsilon = 1e-12);

    let mut rng = common::rng(13);
    let data = common::blobs(&mut rng, &[5, 4], 3, 1.0);
    let p = nearest_same_class(&Metric64::identity(3), &data, 2).unwrap();
    let zero = Metric64::new(DMatrix::zeros(3, 3)).unwrap();
    let n = data.len() as f64;
    assert_relative_eq!(mcml_loss(&zero, &p, &data, 2).unwrap(), n * (n - 1.0).ln(), epsilon = 1e-12);
    assert!(mcml_loss(&m, &p, &data, 3).is_err(), "non-uniform k_av must be rejected");
}

#[test]
fn mcml_pair_costs_scale_and_restrict() {
    let mut rng = common::rng(14);
    let data = common::blobs(&mut rng, &[5, 5], 2, 1.0);
    let m = common::random_metric(&mut rng, 2, 0.5, 0.1);
    let one = mcml_pair_costs(&m, &data, 2).unwrap();
    let two = mcml_pair_costs(&m, &data, 4).unwrap();
    for (a, b) in one.rows().iter().flatten().zip(two.rows().iter().flatten()) {
        assert_relative_eq!(a.1 / 2.0, b.1, epsilon = 1e-14);
    }
    let p = nearest_same_class(&m, &data, 2).unwrap();
    assert_relative_eq!(one.restricted_sum(&p).unwrap(), mcml_loss(&m, &p, &data, 2).unwrap(), epsilon = 1e-12);
}

#[test]
fn mcml_fit_behaviour() {
    let mut rng = common::rng(15);
    let data = common::blobs(&mut rng, &[10, 10], 2, 2.0);
    let p = nearest_same_class(&Metric64::identity(2), &data, 3).unwrap();
    let m0 = Metric64::identity(2);
    let frozen = McmlConfig { max_iters: 0, ..McmlConfig::default() };
    let (m, trace) = mcml_fit(&data, &p, &m0, &frozen).unwrap();
    assert_eq!(m, m0);
    assert_eq!(trace.losses.len(), 1);

    let (m, trace) = mcml_fit(&data, &p, &m0, &McmlConfig::default()).unwrap();
    assert!(trace.final_loss() < trace.initial_loss());
    assert!(trace.losses.windows(2).all(|w| w[1] <= w[0]));
    assert!(m.min_eigenvalue() >= -1e-8);
    // for a uniform P the row-normalized objective is mcml_loss itself
    assert_relative_eq!(mcml_loss(&m, &p, &data, 3).unwrap(), trace.final_loss(), epsilon = 1e-9);
}
