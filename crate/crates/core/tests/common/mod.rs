#![allow(dead_code)]

use lnml_core::{Dataset64, Metric64};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal draw (Box-Muller).
pub fn gaussian(rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.random_range(f64::EPSILON..1.0);
    let v: f64 = rng.random();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

/// Gaussian blobs, one per class, centers drawn with spread `separation`.
pub fn blobs(rng: &mut impl Rng, sizes: &[usize], dim: usize, separation: f64) -> Dataset64 {
    let n: usize = sizes.iter().sum();
    let mut x = DMatrix::zeros(n, dim);
    let mut labels = Vec::with_capacity(n);
    let mut row = 0;
    for (c, &size) in sizes.iter().enumerate() {
        let center: Vec<f64> = (0..dim).map(|_| gaussian(rng) * separation).collect();
        for _ in 0..size {
            for f in 0..dim {
                x[(row, f)] = center[f] + gaussian(rng);
            }
            labels.push(c + 1);
            row += 1;
        }
    }
    Dataset64::new(x, labels).unwrap()
}

/// `A Aᵀ + floor · I` with Gaussian `A`, scaled by `scale`.
pub fn random_metric(rng: &mut impl Rng, dim: usize, scale: f64, floor: f64) -> Metric64 {
    let a = DMatrix::from_fn(dim, dim, |_, _| gaussian(rng));
    let m = (&a * a.transpose()) * scale + DMatrix::identity(dim, dim) * floor;
    Metric64::new((&m + m.transpose()) * 0.5).unwrap()
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}
