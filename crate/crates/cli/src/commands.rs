use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use lnml_core::data::load_csv;
use lnml_core::eval::{cross_validate_with_plan, ComparisonMatrix, FoldPlan, TrainProcedure};
use lnml_core::neighborhood::write_assignment_csv;
use lnml_core::pipeline::{FittedPipeline, GridSearch, Method};
use lnml_core::Dataset64;

use crate::config::{ExperimentConfig, MethodKind};
use crate::error::{CliError, CliResult};
use crate::model::ModelFile;
use crate::report::{DatasetInfo, ExperimentReport, MethodResult, MethodStatus, REPORT_VERSION};

pub fn load_dataset(config: &ExperimentConfig) -> CliResult<Dataset64> {
    let label = config
        .dataset
        .label_column
        .as_ref()
        .ok_or_else(|| CliError::validation("dataset.label_column", "required"))?;
    Ok(load_csv(&config.dataset.path, label, config.dataset.header)?)
}

fn dataset_name(config: &ExperimentConfig) -> String {
    config.dataset.path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into())
}

/// Fits the single configured method on the whole dataset. Grid methods are resolved by
/// inner cross-validation first.
pub fn train(config: &ExperimentConfig) -> CliResult<(ModelFile, FittedPipeline<f64>)> {
    config.validate()?;
    if config.methods.len() != 1 {
        return Err(CliError::validation("methods", format!("train needs exactly one method, got {}", config.methods.len())));
    }
    let resolved = config.resolved();
    let data = load_dataset(&resolved)?;
    let mut candidates = resolved.candidates(0)?;
    let (selected, pipeline) = if candidates.len() == 1 {
        (None, candidates.pop().unwrap().1)
    } else {
        let grid = GridSearch {
            candidates: candidates.iter().map(|(l, p)| (l.clone(), Box::new(p.clone()) as Box<dyn TrainProcedure<f64>>)).collect(),
            inner_folds: resolved.protocol.inner_folds,
            seed: resolved.protocol.seed,
        };
        let scores = grid.evaluate(&data)?;
        let mut best: Option<(usize, f64)> = None;
        for (idx, s) in scores.iter().enumerate() {
            if let Some(s) = *s {
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((idx, s));
                }
            }
        }
        let (idx, score) = best.ok_or(lnml_core::Error::EmptyGrid)?;
        log::info!("selected {} (inner accuracy {score:.4})", candidates[idx].0);
        let (label, pipeline) = candidates.swap_remove(idx);
        (Some(label), pipeline)
    };
    let fit = pipeline.fit_model(&data)?;
    let model = ModelFile::from_fit(
        &fit,
        resolved.methods[0].clone(),
        selected,
        dataset_name(&resolved),
        data.dim(),
        data.class_names().map(<[String]>::to_vec),
    );
    Ok((model, fit))
}

/// Cross-validates every method on one shared fold plan and compares them. A failing
/// method is marked in the report and left out of the comparison.
pub fn benchmark(config: &ExperimentConfig) -> CliResult<ExperimentReport> {
    config.validate()?;
    if config.methods.len() < 2 {
        return Err(CliError::validation("methods", "benchmark needs at least two methods"));
    }
    let resolved = config.resolved();
    let data = load_dataset(&resolved)?;
    let plan = FoldPlan::stratified(data.labels(), resolved.protocol.folds, resolved.protocol.seed)?;
    let mut notes = Vec::new();
    let mut timings = BTreeMap::new();
    let mut results = Vec::with_capacity(resolved.methods.len());
    for (index, spec) in resolved.methods.iter().enumerate() {
        let name = spec.display_name();
        log::info!("method {name}: {}-fold cross-validation", plan.n_folds);
        let started = Instant::now();
        let outcome = resolved.procedure(index).and_then(|p| Ok(cross_validate_with_plan(&data, p.as_ref(), &plan)?));
        timings.insert(format!("{index}:{name}"), started.elapsed().as_secs_f64());
        results.push(match outcome {
            Ok(cv) => MethodResult {
                name,
                kind: spec.kind.to_string(),
                status: MethodStatus::Ok,
                error: None,
                accuracy: Some(cv.accuracy),
                score: None,
                predictions: cv.predictions,
                fold_notes: cv.notes,
                traces: cv.traces,
            },
            Err(e) => {
                log::error!("method {name} failed: {e}");
                notes.push(format!("method {name} failed and is excluded from the comparison"));
                MethodResult {
                    name,
                    kind: spec.kind.to_string(),
                    status: MethodStatus::Failed,
                    error: Some(e.to_string()),
                    accuracy: None,
                    score: None,
                    predictions: Vec::new(),
                    fold_notes: Vec::new(),
                    traces: Vec::new(),
                }
            }
        });
    }

    let completed: Vec<usize> = (0..results.len()).filter(|&i| results[i].status == MethodStatus::Ok).collect();
    let comparison = if completed.is_empty() {
        None
    } else {
        let names = completed.iter().map(|&i| results[i].name.clone()).collect();
        let preds: Vec<Vec<usize>> = completed.iter().map(|&i| results[i].predictions.clone()).collect();
        let matrix = ComparisonMatrix::from_predictions(names, &preds, data.labels(), resolved.protocol.alpha)?;
        for (slot, &i) in completed.iter().enumerate() {
            results[i].score = Some(matrix.scores[slot]);
        }
        Some(matrix)
    };

    Ok(ExperimentReport {
        report_version: REPORT_VERSION,
        toolkit_version: env!("CARGO_PKG_VERSION").into(),
        dataset: DatasetInfo {
            name: dataset_name(&resolved),
            instances: data.len(),
            features: data.dim(),
            class_sizes: data.class_sizes(),
        },
        config: resolved,
        methods: results,
        comparison,
        notes,
        timings,
    })
}

/// Fits the single alternating method on the whole dataset and writes its learned target
/// neighborhood as `i,j,cost` rows, costs taken at the final metric.
pub fn neighborhood<W: Write>(config: &ExperimentConfig, out: W) -> CliResult<()> {
    let kind = config.methods.first().map(|m| m.kind);
    if !matches!(kind, Some(MethodKind::LnLmnn | MethodKind::LnMcml)) || config.methods.len() != 1 {
        return Err(CliError::validation("methods", "neighborhood needs exactly one ln-lmnn or ln-mcml method"));
    }
    let (_, fit) = train(config)?;
    let candidates = config.resolved().candidates(0)?;
    let Some(Method::LnLmnn { config: lnml } | Method::LnMcml { config: lnml }) = candidates.first().map(|(_, p)| p.method) else {
        unreachable!("checked above")
    };
    let assignment = fit.summary.assignment.as_ref().expect("alternating fits store an assignment");
    let k_av = assignment.total() / assignment.n_instances().max(1);
    let costs = lnml.learner.pair_costs(&fit.metric, &fit.train, k_av)?;
    write_assignment_csv(out, assignment, &costs)?;
    Ok(())
}

pub fn inspect(path: &Path, json: bool) -> CliResult<String> {
    let model = ModelFile::load(path)?;
    let summary = model.summary()?;
    Ok(if json { serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n" } else { summary.to_text() })
}
