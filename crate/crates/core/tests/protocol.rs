mod common;

use approx::assert_relative_eq;
use lnml_core::data::{load_csv, pca_fit, pca_transform, standardize_apply, standardize_fit, write_csv, LabelColumn, PcaRetain};
use lnml_core::eval::{knn_predict, mcnemar_from_counts, mcnemar_test, rank_scores, FoldPlan, PairComparison};
use lnml_core::{Dataset64, Metric64};
use nalgebra::DMatrix;
use rand::Rng;

#[test]
fn csv_round_trip_preserves_values_and_names() {
    let mut rng = common::rng(41);
    let data = common::blobs(&mut rng, &[4, 5, 3], 3, 1.0)
        .with_feature_names(vec!["a".into(), "b".into(), "c".into()])
        .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("round.csv");
    write_csv(&data, &path).unwrap();
    let back: Dataset64 = load_csv(&path, &LabelColumn::Name("label".into()), true).unwrap();
    assert_eq!(back.labels(), data.labels());
    assert_eq!(back.instances(), data.instances());
    assert_eq!(back.feature_names().unwrap(), data.feature_names().unwrap());
}

#[test]
fn pca_reconstruction_error_matches_discarded_eigenvalues() {
    let mut rng = common::rng(42);
    let x = DMatrix::from_fn(40, 5, |_, j| common::gaussian(&mut rng) * (j + 1) as f64);
    for keep in 1..=5 {
        let model = pca_fit(&x, PcaRetain::Components(keep)).unwrap();
        let z = pca_transform(&model, &x).unwrap();
        let back = model.inverse_transform(&z).unwrap();
        let err = (&x - back).norm_squared();
        let discarded: f64 = model.eigenvalues[keep..].iter().sum::<f64>() * (x.nrows() as f64 - 1.0);
        assert_relative_eq!(err, discarded, max_relative = 1e-6, epsilon = 1e-9);
    }
}

#[test]
fn pca_variance_rule_picks_smallest_count() {
    let mut rng = common::rng(43);
    let x = DMatrix::from_fn(50, 4, |_, j| common::gaussian(&mut rng) * [5.0, 3.0, 1.0, 0.1][j]);
    let model = pca_fit(&x, PcaRetain::Variance(0.9)).unwrap();
    let cumulative: Vec<f64> = model
        .explained_variance_ratio
        .iter()
        .scan(0.0, |acc, r| {
            *acc += r;
            Some(*acc)
        })
        .collect();
    let k = model.n_components();
    assert!(cumulative[k - 1] >= 0.9);
    assert!(k == 1 || cumulative[k - 2] < 0.9);
}

#[test]
fn standardization_uses_training_statistics_only() {
    let mut rng = common::rng(44);
    let data = common::blobs(&mut rng, &[10, 10], 3, 2.0);
    let train = data.subset(&(0..15).collect::<Vec<_>>());
    let fitted = standardize_fit(&train);
    let z = standardize_apply(&fitted, &train).unwrap();
    for col in z.instances().column_iter() {
        assert_relative_eq!(col.mean(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(col.variance() * 15.0 / 14.0, 1.0, epsilon = 1e-12);
    }
}

#[test]
fn knn_ignores_metric_scale() {
    let mut rng = common::rng(45);
    let data = common::blobs(&mut rng, &[15, 15, 15], 3, 1.0);
    let queries = DMatrix::from_fn(20, 3, |_, _| common::gaussian(&mut rng));
    let m = common::random_metric(&mut rng, 3, 1.0, 0.1);
    let base = knn_predict(&m, &data, &queries, 1).unwrap();
    for t in [0.01, 3.0, 1e3] {
        assert_eq!(knn_predict(&m.scaled(t).unwrap(), &data, &queries, 1).unwrap(), base);
    }
    let three = knn_predict(&Metric64::identity(3), &data, &queries, 3).unwrap();
    assert_eq!(three.len(), 20);
}

#[test]
fn knn_breaks_ties_toward_lower_index() {
    let data = Dataset64::new(nalgebra::dmatrix![-1.0; 1.0; 5.0], vec![2, 1, 1]).unwrap();
    let q = nalgebra::dmatrix![0.0];
    assert_eq!(knn_predict(&Metric64::identity(1), &data, &q, 1).unwrap(), vec![2]);
    // one vote each for labels 2 and 1: the smaller label wins
    assert_eq!(knn_predict(&Metric64::identity(1), &data, &q, 2).unwrap(), vec![1]);
}

#[test]
fn mcnemar_is_symmetric_and_trivial_on_identical_predictions() {
    let mut rng = common::rng(46);
    for _ in 0..50 {
        let b = rng.random_range(0..60);
        let c = rng.random_range(0..60);
        assert_eq!(mcnemar_from_counts(b, c), mcnemar_from_counts(c, b));
        assert!((0.0..=1.0).contains(&mcnemar_from_counts(b, c)));
    }
    let truth: Vec<usize> = (0..30).map(|i| i % 3 + 1).collect();
    let preds: Vec<usize> = truth.iter().map(|&t| if t == 2 { 1 } else { t }).collect();
    assert_eq!(mcnemar_test(&preds, &preds, &truth).unwrap(), 1.0);
}

#[test]
fn rank_scores_sum_to_number_of_pairs() {
    let mut rng = common::rng(47);
    for a in 2..7 {
        let mut comparisons = Vec::new();
        for x in 0..a {
            for y in (x + 1)..a {
                comparisons.push(PairComparison {
                    a: x,
                    b: y,
                    accuracy_a: rng.random(),
                    accuracy_b: rng.random(),
                    p_value: rng.random(),
                });
            }
        }
        let scores = rank_scores(a, &comparisons, 0.05);
        assert_relative_eq!(scores.iter().sum::<f64>(), (a * (a - 1)) as f64 / 2.0, epsilon = 1e-12);
    }
}

#[test]
fn fold_plan_is_stratified_and_seeded() {
    let labels: Vec<usize> = (0..103).map(|i| if i < 50 { 1 } else if i < 90 { 2 } else { 3 }).collect();
    let plan = FoldPlan::stratified(&labels, 10, 5).unwrap();
    assert_eq!(plan, FoldPlan::stratified(&labels, 10, 5).unwrap());
    assert_ne!(plan.folds, FoldPlan::stratified(&labels, 10, 6).unwrap().folds);
    let sizes: Vec<usize> = (1..=10).map(|f| plan.test_indices(f).len()).collect();
    assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    for class in 1..=3 {
        let per_fold: Vec<usize> = (1..=10)
            .map(|f| plan.test_indices(f).iter().filter(|&&i| labels[i] == class).count())
            .collect();
        assert!(per_fold.iter().max().unwrap() - per_fold.iter().min().unwrap() <= 1);
    }
}
