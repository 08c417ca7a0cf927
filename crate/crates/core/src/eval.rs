//! 1-NN evaluation protocol: stratified cross-validation, McNemar tests and pairwise scoring.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dataset::Dataset;
use crate::error::{contract, Error, Result};
use crate::metric::{cross_distances, MetricMatrix};
use crate::scalar::Scalar;

/// Discordant-pair count below which McNemar uses the exact binomial test.
pub const MCNEMAR_EXACT_BELOW: u64 = 25;

/// Labels each query by majority vote of its `k` nearest training instances under `M`.
/// Distance ties go to the lower training index, vote ties to the smaller label.
pub fn knn_predict<T: Scalar>(
    m: &MetricMatrix<T>,
    train: &Dataset<T>,
    queries: &DMatrix<T>,
    k: usize,
) -> Result<Vec<usize>> {
    if train.is_empty() {
        return Err(contract("knn needs a non-empty training set"));
    }
    if k == 0 || k > train.len() {
        return Err(contract(format!("k = {k} must lie in 1..={}", train.len())));
    }
    if queries.ncols() != train.dim() {
        return Err(Error::DimensionMismatch { expected: train.dim(), found: queries.ncols() });
    }
    if m.dim() != train.dim() {
        return Err(Error::DimensionMismatch { expected: train.dim(), found: m.dim() });
    }
    let dist = cross_distances(m, queries, train.instances());
    let n_classes = train.n_classes();
    let predictions = (0..queries.nrows())
        .map(|q| {
            let row = dist.row(q);
            let mut order: Vec<usize> = (0..train.len()).collect();
            let by_distance = |a: &usize, b: &usize| row[*a].partial_cmp(&row[*b]).expect("finite").then(a.cmp(b));
            if k < order.len() {
                order.select_nth_unstable_by(k - 1, by_distance);
                order.truncate(k);
            }
            let mut votes = vec![0usize; n_classes];
            for &t in &order {
                votes[train.label(t) - 1] += 1;
            }
            // first maximum = smallest label
            let best = votes.iter().copied().max().unwrap_or(0);
            votes.iter().position(|&v| v == best).unwrap() + 1
        })
        .collect();
    Ok(predictions)
}

pub fn accuracy(predictions: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let hits = predictions.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len() as f64
}

/// Stratified assignment of instances to folds `1..=F`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<usize>,
    pub n_folds: usize,
    pub seed: u64,
}

impl FoldPlan {
    /// Shuffles each class with a seeded generator and deals its members round-robin,
    /// continuing the rotation across classes so fold sizes stay balanced overall.
    pub fn stratified(labels: &[usize], n_folds: usize, seed: u64) -> Result<Self> {
        if n_folds < 2 {
            return Err(contract("cross-validation needs at least 2 folds"));
        }
        if n_folds > labels.len() {
            return Err(contract(format!("{n_folds} folds for only {} instances", labels.len())));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_classes = labels.iter().copied().max().unwrap_or(0);
        let mut folds = vec![0; labels.len()];
        let mut offset = 0;
        for class in 1..=n_classes {
            let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
            if members.is_empty() {
                continue;
            }
            if members.len() < n_folds {
                log::warn!("class {class} has {} instances for {n_folds} folds; some folds lack it", members.len());
            }
            members.shuffle(&mut rng);
            for (t, &i) in members.iter().enumerate() {
                folds[i] = (offset + t) % n_folds + 1;
            }
            offset = (offset + members.len()) % n_folds;
        }
        Ok(Self { folds, n_folds, seed })
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] != fold).collect()
    }
}

/// A trained classifier.
pub trait Predictor<T: Scalar>: Send + Sync {
    fn predict(&self, queries: &DMatrix<T>) -> Result<Vec<usize>>;

    /// Free-form note about the fit, e.g. a selected grid point.
    fn note(&self) -> Option<String> {
        None
    }

    /// Objective values recorded while fitting, if any.
    fn trace(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// Something that turns a training set into a [`Predictor`].
pub trait TrainProcedure<T: Scalar>: Send + Sync {
    fn fit(&self, train: &Dataset<T>) -> Result<Box<dyn Predictor<T>>>;

    /// Reason this procedure cannot be trained on `train`, checked before any fitting.
    fn inadmissible(&self, _train: &Dataset<T>) -> Option<String> {
        None
    }
}

/// Out-of-fold predictions of one cross-validation run.
#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub predictions: Vec<usize>,
    pub accuracy: f64,
    pub plan: FoldPlan,
    /// Per-fold predictor notes, in fold order.
    pub notes: Vec<Option<String>>,
    /// Per-fold fit traces, in fold order.
    pub traces: Vec<Vec<f64>>,
}

pub fn cross_validate<T: Scalar>(
    data: &Dataset<T>,
    pipeline: &dyn TrainProcedure<T>,
    folds: usize,
    seed: u64,
) -> Result<CvOutcome> {
    let plan = FoldPlan::stratified(data.labels(), folds, seed)?;
    cross_validate_with_plan(data, pipeline, &plan)
}

/// Trains on each fold's complement and predicts the fold. Folds run in parallel; the
/// result does not depend on completion order.
pub fn cross_validate_with_plan<T: Scalar>(
    data: &Dataset<T>,
    pipeline: &dyn TrainProcedure<T>,
    plan: &FoldPlan,
) -> Result<CvOutcome> {
    if plan.folds.len() != data.len() {
        return Err(Error::DimensionMismatch { expected: data.len(), found: plan.folds.len() });
    }
    type FoldResult = (Vec<usize>, Vec<usize>, Option<String>, Vec<f64>);
    let per_fold: Vec<Result<FoldResult>> = (1..=plan.n_folds)
        .into_par_iter()
        .map(|fold| {
            let test = plan.test_indices(fold);
            if test.is_empty() {
                return Ok((test, Vec::new(), None, Vec::new()));
            }
            let train = data.subset(&plan.train_indices(fold));
            let wrap = |e: Error| Error::Fold { fold, source: Box::new(e) };
            let model = pipeline.fit(&train).map_err(wrap)?;
            let queries = data.instances().select_rows(test.iter());
            let preds = model.predict(&queries).map_err(wrap)?;
            Ok((test, preds, model.note(), model.trace()))
        })
        .collect();

    let mut predictions = vec![0; data.len()];
    let mut notes = Vec::with_capacity(plan.n_folds);
    let mut traces = Vec::with_capacity(plan.n_folds);
    for outcome in per_fold {
        let (test, preds, note, trace) = outcome?;
        for (i, p) in test.into_iter().zip(preds) {
            predictions[i] = p;
        }
        notes.push(note);
        traces.push(trace);
    }
    let accuracy = accuracy(&predictions, data.labels());
    Ok(CvOutcome { predictions, accuracy, plan: plan.clone(), notes, traces })
}

/// Two-sided p-value from discordant counts: `b` (A right, B wrong) and `c` (A wrong, B right).
pub fn mcnemar_from_counts(b: u64, c: u64) -> f64 {
    let n = b + c;
    if n == 0 {
        return 1.0;
    }
    if n < MCNEMAR_EXACT_BELOW {
        let k = b.min(c);
        let mut tail = 0.0;
        let mut coef = 1.0f64;
        for i in 0..=k {
            if i > 0 {
                coef = coef * (n - i + 1) as f64 / i as f64;
            }
            tail += coef;
        }
        (2.0 * tail * 0.5f64.powi(n as i32)).min(1.0)
    } else {
        let diff = (b as f64 - c as f64).abs() - 1.0;
        let stat = diff * diff / n as f64;
        ChiSquared::new(1.0).expect("one degree of freedom").sf(stat)
    }
}

pub fn mcnemar_test(preds_a: &[usize], preds_b: &[usize], truth: &[usize]) -> Result<f64> {
    if preds_a.len() != truth.len() || preds_b.len() != truth.len() {
        return Err(contract("prediction vectors and truth must have equal length"));
    }
    let (mut b, mut c) = (0u64, 0u64);
    for ((a, bb), t) in preds_a.iter().zip(preds_b).zip(truth) {
        match (a == t, bb == t) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    Ok(mcnemar_from_counts(b, c))
}

/// One pairwise comparison between algorithms `a` and `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairComparison {
    pub a: usize,
    pub b: usize,
    pub accuracy_a: f64,
    pub accuracy_b: f64,
    pub p_value: f64,
}

/// One point for a significant win, half a point each for no significant difference.
pub fn rank_scores(n_algorithms: usize, comparisons: &[PairComparison], alpha: f64) -> Vec<f64> {
    let mut scores = vec![0.0; n_algorithms];
    for cmp in comparisons {
        if cmp.p_value < alpha && cmp.accuracy_a != cmp.accuracy_b {
            let winner = if cmp.accuracy_a > cmp.accuracy_b { cmp.a } else { cmp.b };
            scores[winner] += 1.0;
        } else {
            scores[cmp.a] += 0.5;
            scores[cmp.b] += 0.5;
        }
    }
    scores
}

/// Accuracies, pairwise McNemar p-values and rank scores of several algorithms on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonMatrix {
    pub algorithms: Vec<String>,
    pub accuracies: Vec<f64>,
    pub p_values: Vec<Vec<f64>>,
    pub scores: Vec<f64>,
    pub alpha: f64,
}

impl ComparisonMatrix {
    pub fn from_predictions(
        algorithms: Vec<String>,
        predictions: &[Vec<usize>],
        truth: &[usize],
        alpha: f64,
    ) -> Result<Self> {
        if algorithms.len() != predictions.len() {
            return Err(Error::DimensionMismatch { expected: algorithms.len(), found: predictions.len() });
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(contract(format!("alpha = {alpha} is outside (0, 1)")));
        }
        let a = algorithms.len();
        let accuracies: Vec<f64> = predictions.iter().map(|p| accuracy(p, truth)).collect();
        let mut p_values = vec![vec![1.0; a]; a];
        let mut comparisons = Vec::new();
        for x in 0..a {
            for y in (x + 1)..a {
                let p = mcnemar_test(&predictions[x], &predictions[y], truth)?;
                p_values[x][y] = p;
                p_values[y][x] = p;
                comparisons.push(PairComparison {
                    a: x,
                    b: y,
                    accuracy_a: accuracies[x],
                    accuracy_b: accuracies[y],
                    p_value: p,
                });
            }
        }
        let scores = rank_scores(a, &comparisons, alpha);
        Ok(Self { algorithms, accuracies, p_values, scores, alpha })
    }

    /// `+`, `-` or `=`: outcome of row algorithm `x` against `y`.
    pub fn outcome(&self, x: usize, y: usize) -> char {
        if self.p_values[x][y] >= self.alpha || self.accuracies[x] == self.accuracies[y] {
            '='
        } else if self.accuracies[x] > self.accuracies[y] {
            '+'
        } else {
            '-'
        }
    }

    /// Text table: accuracy in percent, score in parentheses, `*` when not significantly
    /// different from the best accuracy, then the pairwise outcome grid.
    pub fn to_text_table(&self, dataset: &str) -> String {
        let a = self.algorithms.len();
        let best = (0..a)
            .max_by(|&x, &y| self.accuracies[x].partial_cmp(&self.accuracies[y]).unwrap().then(y.cmp(&x)))
            .unwrap_or(0);
        let width = self.algorithms.iter().map(String::len).max().unwrap_or(0).max(14) + 2;
        let mut out = String::new();
        let _ = write!(out, "{:<12}", "Dataset");
        for name in &self.algorithms {
            let _ = write!(out, "{name:>width$}");
        }
        out.push('\n');
        let _ = write!(out, "{dataset:<12}");
        for x in 0..a {
            let mark = if x == best || self.outcome(best, x) == '=' { "*" } else { " " };
            let cell = format!("{:.2}{mark}({:.1})", 100.0 * self.accuracies[x], self.scores[x]);
            let _ = write!(out, "{cell:>width$}");
        }
        out.push_str("\n\n");
        let _ = write!(out, "{:<12}", "vs");
        for name in &self.algorithms {
            let _ = write!(out, "{name:>width$}");
        }
        out.push('\n');
        for x in 0..a {
            let _ = write!(out, "{:<12}", truncate(&self.algorithms[x], 12));
            for y in 0..a {
                let cell = if x == y { "".to_string() } else { format!("{} p={:.3}", self.outcome(x, y), self.p_values[x][y]) };
                let _ = write!(out, "{cell:>width$}");
            }
            out.push('\n');
        }
        out
    }
}

fn truncate(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((idx, _)) => &s[..idx],
        None => s,
    }
}
