//! Training procedures used by cross-validation and the command line: optional
//! standardization and PCA (fitted on the training data only), a metric learner, and a
//! k-NN classifier on top.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::assignment::{NeighborhoodAssignment, NeighborhoodBudget};
use crate::data::{pca_fit, pca_transform, standardize_apply, standardize_fit, PcaModel, PcaRetain, Standardizer};
use crate::dataset::Dataset;
use crate::driver::{lnml_fit, Learner, LnmlConfig, OuterStop};
use crate::error::{Error, Result};
use crate::eval::{cross_validate_with_plan, knn_predict, FoldPlan, Predictor, TrainProcedure};
use crate::lmnn::{lmnn_fit, nearest_same_class, LmnnConfig};
use crate::mcml::{mcml_fit, McmlConfig};
use crate::metric::MetricMatrix;
use crate::neighborhood::budget_feasible_for_sizes;
use crate::scalar::Scalar;

/// Metric used by the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Method {
    /// Identity metric.
    Euclidean,
    /// LMNN with the `k` same-class Euclidean nearest neighbors as targets.
    Lmnn { config: LmnnConfig, k: usize },
    /// LMNN inside the alternating neighborhood learner.
    LnLmnn { config: LnmlConfig },
    /// MCML with the global neighborhood (all same-class pairs).
    Mcml { config: McmlConfig },
    /// MCML inside the alternating neighborhood learner (uniform budget).
    LnMcml { config: LnmlConfig },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Euclidean => "euclidean",
            Self::Lmnn { .. } => "lmnn",
            Self::LnLmnn { .. } => "ln-lmnn",
            Self::Mcml { .. } => "mcml",
            Self::LnMcml { .. } => "ln-mcml",
        }
    }

    pub fn ln_lmnn(lmnn: LmnnConfig, budget: NeighborhoodBudget) -> Self {
        Self::LnLmnn { config: LnmlConfig::new(Learner::Lmnn(lmnn), budget) }
    }

    pub fn ln_mcml(mcml: McmlConfig, k_av: usize) -> Result<Self> {
        Ok(Self::LnMcml { config: LnmlConfig::new(Learner::Mcml(mcml), NeighborhoodBudget::uniform(k_av)?) })
    }

    fn budget(&self) -> Option<NeighborhoodBudget> {
        match self {
            Self::Lmnn { k, .. } => Some(NeighborhoodBudget { k_min: *k, k_max: *k, k_av: *k }),
            Self::LnLmnn { config } | Self::LnMcml { config } => Some(config.budget),
            Self::Euclidean | Self::Mcml { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Preprocessing {
    pub standardize: bool,
    pub pca: Option<PcaRetain>,
}

/// Everything learned while fitting a pipeline, kept for reports and model files.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary<T: Scalar> {
    pub assignment: Option<NeighborhoodAssignment>,
    /// Inner loss trace (plain learners) or outer objective trace (alternating learners).
    pub objective_trace: Vec<T>,
    pub assignment_changes: Vec<usize>,
    pub outer_stop: Option<OuterStop>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub preprocessing: Preprocessing,
    pub method: Method,
    /// Neighbors used by the classifier.
    pub k: usize,
}

impl Pipeline {
    pub fn new(method: Method, preprocessing: Preprocessing) -> Self {
        Self { preprocessing, method, k: 1 }
    }

    /// Fits on `train` and keeps the concrete model.
    pub fn fit_model<T: Scalar>(&self, train: &Dataset<T>) -> Result<FittedPipeline<T>> {
        let standardizer = self.preprocessing.standardize.then(|| standardize_fit(train));
        let mut working = match &standardizer {
            Some(s) => standardize_apply(s, train)?,
            None => train.clone(),
        };
        let pca = match self.preprocessing.pca {
            Some(retain) => {
                let model = pca_fit(working.instances(), retain)?;
                working = working.with_instances(pca_transform(&model, working.instances())?)?;
                Some(model)
            }
            None => None,
        };
        let identity = MetricMatrix::identity(working.dim());
        let (metric, summary) = match &self.method {
            Method::Euclidean => (identity, FitSummary::empty()),
            Method::Lmnn { config, k } => {
                let p = nearest_same_class(&identity, &working, *k)?;
                let (m, trace) = lmnn_fit(&working, &p, &identity, config)?;
                (m, FitSummary { assignment: Some(p), objective_trace: trace.losses, ..FitSummary::empty() })
            }
            Method::Mcml { config } => {
                let p = NeighborhoodAssignment::all_same_class(working.labels());
                let (m, trace) = mcml_fit(&working, &p, &identity, config)?;
                (m, FitSummary { assignment: None, objective_trace: trace.losses, ..FitSummary::empty() })
            }
            Method::LnLmnn { config } | Method::LnMcml { config } => {
                let report = lnml_fit(&working, config, &identity).map_err(Error::from)?;
                let summary = FitSummary {
                    assignment: Some(report.final_assignment),
                    objective_trace: report.outer_objective_trace,
                    assignment_changes: report.assignment_change_trace,
                    outer_stop: Some(report.stop),
                };
                (report.final_metric, summary)
            }
        };
        Ok(FittedPipeline { standardizer, pca, metric, train: working, k: self.k, summary })
    }
}

impl<T: Scalar> FitSummary<T> {
    fn empty() -> Self {
        Self { assignment: None, objective_trace: Vec::new(), assignment_changes: Vec::new(), outer_stop: None }
    }
}

impl<T: Scalar> TrainProcedure<T> for Pipeline {
    fn fit(&self, train: &Dataset<T>) -> Result<Box<dyn Predictor<T>>> {
        Ok(Box::new(self.fit_model(train)?))
    }

    fn inadmissible(&self, train: &Dataset<T>) -> Option<String> {
        let budget = self.method.budget()?;
        budget_feasible_for_sizes(&train.class_sizes(), &budget)
            .err()
            .map(|why| format!("budget {budget}: {why}"))
    }
}

/// A trained pipeline: the transforms, the metric in the transformed space, and the
/// transformed training set used for neighbor search.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedPipeline<T: Scalar> {
    pub standardizer: Option<Standardizer<T>>,
    pub pca: Option<PcaModel<T>>,
    pub metric: MetricMatrix<T>,
    pub train: Dataset<T>,
    pub k: usize,
    pub summary: FitSummary<T>,
}

impl<T: Scalar> FittedPipeline<T> {
    pub fn transform(&self, x: &DMatrix<T>) -> Result<DMatrix<T>> {
        let mut out = match &self.standardizer {
            Some(s) => s.transform(x)?,
            None => x.clone(),
        };
        if let Some(p) = &self.pca {
            out = pca_transform(p, &out)?;
        }
        Ok(out)
    }
}

impl<T: Scalar> Predictor<T> for FittedPipeline<T> {
    fn predict(&self, queries: &DMatrix<T>) -> Result<Vec<usize>> {
        let z = self.transform(queries)?;
        knn_predict(&self.metric, &self.train, &z, self.k)
    }

    fn trace(&self) -> Vec<f64> {
        self.summary.objective_trace.iter().map(|v| v.as_f64()).collect()
    }
}

/// Picks among candidate procedures by inner cross-validation accuracy on the training
/// data, then refits the winner on all of it. Candidates that cannot be trained on some
/// inner fold are skipped.
pub struct GridSearch<T: Scalar> {
    pub candidates: Vec<(String, Box<dyn TrainProcedure<T>>)>,
    pub inner_folds: usize,
    pub seed: u64,
}

/// A predictor together with the grid point that produced it.
struct Selected<T: Scalar> {
    label: String,
    inner_accuracy: f64,
    inner: Box<dyn Predictor<T>>,
}

impl<T: Scalar> Predictor<T> for Selected<T> {
    fn predict(&self, queries: &DMatrix<T>) -> Result<Vec<usize>> {
        self.inner.predict(queries)
    }

    fn note(&self) -> Option<String> {
        Some(format!("selected {} (inner accuracy {:.4})", self.label, self.inner_accuracy))
    }

    fn trace(&self) -> Vec<f64> {
        self.inner.trace()
    }
}

impl<T: Scalar> GridSearch<T> {
    /// Inner accuracy of every admissible candidate, in candidate order; `None` for skipped ones.
    pub fn evaluate(&self, train: &Dataset<T>) -> Result<Vec<Option<f64>>> {
        let plan = FoldPlan::stratified(train.labels(), self.inner_folds, self.seed)?;
        let mut scores = Vec::with_capacity(self.candidates.len());
        for (label, candidate) in &self.candidates {
            let blocked = std::iter::once(candidate.inadmissible(train))
                .chain((1..=plan.n_folds).map(|f| candidate.inadmissible(&train.subset(&plan.train_indices(f)))))
                .flatten()
                .next();
            if let Some(why) = blocked {
                log::info!("grid point {label} skipped: {why}");
                scores.push(None);
                continue;
            }
            let outcome = cross_validate_with_plan(train, candidate.as_ref(), &plan)?;
            log::debug!("grid point {label}: inner accuracy {:.4}", outcome.accuracy);
            scores.push(Some(outcome.accuracy));
        }
        Ok(scores)
    }
}

impl<T: Scalar> TrainProcedure<T> for GridSearch<T> {
    fn fit(&self, train: &Dataset<T>) -> Result<Box<dyn Predictor<T>>> {
        let scores = self.evaluate(train)?;
        let mut best: Option<(usize, f64)> = None;
        for (idx, score) in scores.iter().enumerate() {
            if let Some(s) = *score {
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((idx, s));
                }
            }
        }
        let (idx, inner_accuracy) = best.ok_or(Error::EmptyGrid)?;
        let (label, candidate) = &self.candidates[idx];
        let inner = candidate.fit(train)?;
        Ok(Box::new(Selected { label: label.clone(), inner_accuracy, inner }))
    }

    fn inadmissible(&self, train: &Dataset<T>) -> Option<String> {
        let reasons: Vec<String> = self.candidates.iter().filter_map(|(_, c)| c.inadmissible(train)).collect();
        (reasons.len() == self.candidates.len() && !reasons.is_empty()).then(|| reasons.join("; "))
    }
}
