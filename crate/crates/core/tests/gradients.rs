mod common;

use lnml_core::lmnn::{lmnn_gradient, lmnn_loss};
use lnml_core::mcml::{mcml_gradient, mcml_loss};
use lnml_core::{pairwise_squared_distances, Dataset64, Metric64, NeighborhoodAssignment};
use nalgebra::DMatrix;
use rand::Rng;

const H: f64 = 1e-6;

/// Central differences over symmetric perturbations. For `a ≠ b` the entries `(a,b)` and
/// `(b,a)` move together, so the directional derivative is twice the gradient entry.
fn finite_difference(m: &Metric64, loss: impl Fn(&Metric64) -> f64) -> DMatrix<f64> {
    let d = m.dim();
    let mut g = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in a..d {
            let mut e = DMatrix::zeros(d, d);
            e[(a, b)] = H;
            e[(b, a)] = H;
            let plus = Metric64::new(m.entries() + &e).unwrap();
            let minus = Metric64::new(m.entries() - &e).unwrap();
            let slope = (loss(&plus) - loss(&minus)) / (2.0 * H);
            let v = if a == b { slope } else { slope / 2.0 };
            g[(a, b)] = v;
            g[(b, a)] = v;
        }
    }
    g
}

fn relative_error(analytic: &DMatrix<f64>, numeric: &DMatrix<f64>) -> f64 {
    (analytic - numeric).norm() / analytic.norm().max(1e-12)
}

fn random_assignment(rng: &mut impl Rng, data: &Dataset64, per_row: usize) -> NeighborhoodAssignment {
    let rows = (0..data.len())
        .map(|i| {
            let mut same: Vec<usize> = (0..data.len()).filter(|&j| j != i && data.same_class(i, j)).collect();
            for t in (1..same.len()).rev() {
                same.swap(t, rng.random_range(0..=t));
            }
            same.truncate(per_row);
            same
        })
        .collect();
    NeighborhoodAssignment::from_rows(data.labels(), rows).unwrap()
}

/// True when some triplet sits within `margin` of its hinge kink.
fn near_kink(m: &Metric64, p: &NeighborhoodAssignment, data: &Dataset64, margin: f64) -> bool {
    let dist = pairwise_squared_distances(m, data).unwrap();
    p.pairs().any(|(i, j)| {
        (0..data.len())
            .filter(|&l| !data.same_class(i, l))
            .any(|l| (1.0 + dist[(i, j)] - dist[(i, l)]).abs() < margin)
    })
}

#[test]
fn lmnn_gradient_matches_finite_differences() {
    let mut rng = common::rng(21);
    let mut checked = 0;
    let mut discarded = 0;
    while checked < 50 {
        let dim = rng.random_range(2..=4);
        let data = common::blobs(&mut rng, &[5, 5], dim, 0.8);
        let m = common::random_metric(&mut rng, dim, 0.3, 0.2);
        let p = random_assignment(&mut rng, &data, 2);
        let mu = rng.random_range(0.0..=1.0);
        if near_kink(&m, &p, &data, 1e-4) {
            discarded += 1;
            continue;
        }
        let analytic = lmnn_gradient(&m, &p, &data, mu).unwrap();
        let numeric = finite_difference(&m, |mm| lmnn_loss(mm, &p, &data, mu).unwrap().total);
        let err = relative_error(&analytic, &numeric);
        assert!(err < 1e-5, "draw {checked}: relative error {err:e}");
        checked += 1;
    }
    assert!(discarded < 50, "kink exclusion discarded {discarded} draws");
}

#[test]
fn mcml_gradient_matches_finite_differences() {
    let mut rng = common::rng(22);
    for draw in 0..50 {
        let dim = rng.random_range(2..=4);
        let data = common::blobs(&mut rng, &[4, 5, 4], dim, 1.0);
        let m = common::random_metric(&mut rng, dim, 0.3, 0.1);
        let k_av = rng.random_range(1..=3);
        let p = random_assignment(&mut rng, &data, k_av);
        let analytic = mcml_gradient(&m, &p, &data, k_av).unwrap();
        let numeric = finite_difference(&m, |mm| mcml_loss(mm, &p, &data, k_av).unwrap());
        let err = relative_error(&analytic, &numeric);
        assert!(err < 1e-5, "draw {draw}: relative error {err:e}");
    }
}

#[test]
fn lmnn_descends_along_negative_gradient() {
    let mut rng = common::rng(23);
    let data = common::blobs(&mut rng, &[6, 6], 3, 0.7);
    let m = Metric64::identity(3);
    let p = random_assignment(&mut rng, &data, 2);
    let g = lmnn_gradient(&m, &p, &data, 0.5).unwrap();
    let before = lmnn_loss(&m, &p, &data, 0.5).unwrap().total;
    let stepped = lnml_core::project_psd(&(m.entries() - g * 1e-4)).unwrap();
    assert!(lmnn_loss(&stepped, &p, &data, 0.5).unwrap().total < before);
}
