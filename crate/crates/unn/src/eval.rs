//! Risks, confusion matrices, mean per-class accuracy, cross-validation,
//! and margin statistics.

use std::fmt::Write as _;

use serde::Serialize;

use crate::boost::{train, TrainConfig, TrainDiagnostics};
use crate::classify::{
    filter_model, filter_model_per_class, predict_dataset, predict_dataset_classic, FilterSpec,
    Prediction,
};
use crate::dataset::{kfold_cells, Dataset};
use crate::error::{Error, Result};
use crate::model::LeveragedModel;
use crate::neighbors::{build_graph, Backend, MetricSpec};

/// Which voting rule an evaluation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Classic,
    Leveraged,
}

impl EvalMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "classic" => Ok(EvalMode::Classic),
            "leveraged" => Ok(EvalMode::Leveraged),
            other => Err(Error::domain(format!(
                "unknown mode '{other}' (expected classic | leveraged)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EvalMode::Classic => "classic",
            EvalMode::Leveraged => "leveraged",
        }
    }
}

/// Evaluation summary over one query set.
///
/// `map` is the mean per-class accuracy: the unweighted mean of the
/// confusion-matrix diagonal rates. It is not ranked-retrieval average
/// precision; the field keeps the conventional short name as an alias for
/// [`EvalReport::mean_per_class_accuracy`].
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub mode: String,
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<usize>>,
    pub per_class_rate: Vec<f64>,
    #[serde(rename = "mAP")]
    pub map: f64,
    /// Mean over (example, class) pairs of the negative-edge indicator.
    pub empirical_risk: f64,
    /// Fraction of queries whose argmax label is wrong.
    pub error_rate: f64,
    /// Surrogate risk over the model's own training graph; only present
    /// when the evaluated set is the training set.
    pub surrogate_risk: Option<f64>,
    /// Queries whose argmax was a tie.
    pub tie_count: usize,
    pub n_queries: usize,
}

impl EvalReport {
    pub fn mean_per_class_accuracy(&self) -> f64 {
        self.map
    }
}

/// Empirical 0/1 risk of a score matrix (`scores[i][c]`) against a
/// dataset's class vectors: the mean of `[y_ic * h_c(o_i) < 0]`. An edge of
/// exactly zero is not an error.
pub fn empirical_risk(scores: &[Vec<f64>], dataset: &Dataset) -> Result<f64> {
    if scores.len() != dataset.len() {
        return Err(Error::domain(format!(
            "{} score rows for {} examples",
            scores.len(),
            dataset.len()
        )));
    }
    let c_count = dataset.class_count();
    let mut errors = 0usize;
    for (i, row) in scores.iter().enumerate() {
        if row.len() != c_count {
            return Err(Error::domain("score row width must equal class count"));
        }
        for (c, &s) in row.iter().enumerate() {
            if dataset.y(i, c) * s < 0.0 {
                errors += 1;
            }
        }
    }
    Ok(errors as f64 / (dataset.len() * c_count) as f64)
}

/// Summarize predictions against ground truth.
pub fn report_from_predictions(
    predictions: &[Prediction],
    test_set: &Dataset,
    mode: EvalMode,
) -> Result<EvalReport> {
    if predictions.len() != test_set.len() {
        return Err(Error::domain("one prediction per query required"));
    }
    if test_set.is_empty() {
        return Err(Error::domain("empty test set"));
    }
    let c_count = test_set.class_count();
    let mut confusion = vec![vec![0usize; c_count]; c_count];
    let mut tie_count = 0usize;
    for (i, p) in predictions.iter().enumerate() {
        confusion[test_set.label(i)][p.label] += 1;
        tie_count += usize::from(p.tie);
    }
    // Diagonal rates; a class absent from the test set contributes 0.
    let per_class_rate: Vec<f64> = confusion
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let total: usize = row.iter().sum();
            if total == 0 {
                0.0
            } else {
                row[c] as f64 / total as f64
            }
        })
        .collect();
    let map = per_class_rate.iter().sum::<f64>() / c_count as f64;
    let correct: usize = (0..c_count).map(|c| confusion[c][c]).sum();
    let error_rate = 1.0 - correct as f64 / test_set.len() as f64;
    let scores: Vec<Vec<f64>> = predictions.iter().map(|p| p.scores.clone()).collect();
    let risk = empirical_risk(&scores, test_set)?;
    Ok(EvalReport {
        schema_version: 1,
        mode: mode.name().to_string(),
        confusion,
        per_class_rate,
        map,
        empirical_risk: risk,
        error_rate,
        surrogate_risk: None,
        tie_count,
        n_queries: test_set.len(),
    })
}

/// Evaluate a model on a query set with the chosen rule. `k` overrides the
/// model's neighbor count when given.
pub fn evaluate(
    model: &LeveragedModel,
    test_set: &Dataset,
    mode: EvalMode,
    k: Option<usize>,
    backend: Backend,
) -> Result<EvalReport> {
    if test_set.is_empty() {
        return Err(Error::domain("empty test set"));
    }
    if test_set.dim() != model.prototypes().dim() {
        return Err(Error::domain(format!(
            "query dimension {} does not match prototype dimension {}",
            test_set.dim(),
            model.prototypes().dim()
        )));
    }
    let predictions = match mode {
        EvalMode::Classic => predict_dataset_classic(
            model.prototypes(),
            test_set,
            k.unwrap_or_else(|| model.k()),
            model.metric(),
        )?,
        EvalMode::Leveraged => predict_dataset(model, test_set, k, backend)?,
    };
    report_from_predictions(&predictions, test_set, mode)
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

/// What runs inside each fold.
#[derive(Debug, Clone)]
pub enum CvMode {
    /// Train, optionally filter, evaluate with the leveraged rule.
    Leveraged {
        filter: Option<FilterSpec>,
        per_class_filter: bool,
    },
    /// Plain uniform k-NN over a random prototype sample of proportion
    /// `sample_theta` (1.0 keeps every prototype).
    Classic { sample_theta: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub retained: usize,
    pub retained_fraction: f64,
    pub report: EvalReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct CvReport {
    pub schema_version: u32,
    pub folds: Vec<FoldReport>,
    #[serde(rename = "mean_mAP")]
    pub mean_map: f64,
    pub mean_error: f64,
    pub mean_retained_fraction: f64,
}

/// Cross-validate: each fold cell becomes the training set and the union of
/// the remaining cells the validation set.
pub fn cross_validate(
    dataset: &Dataset,
    folds: usize,
    train_config: &TrainConfig,
    mode: &CvMode,
    seed: u64,
    backend: Backend,
) -> Result<CvReport> {
    let cells = kfold_cells(dataset.len(), folds, seed)?;
    let mut fold_reports = Vec::with_capacity(folds);
    for (f, cell) in cells.iter().enumerate() {
        let mut in_cell = vec![false; dataset.len()];
        for &id in cell {
            in_cell[id] = true;
        }
        let rest: Vec<usize> = (0..dataset.len()).filter(|&i| !in_cell[i]).collect();
        let train_ds = dataset.subset(cell)?;
        let test_ds = dataset.subset(&rest)?;
        let (retained, report) = match mode {
            CvMode::Leveraged {
                filter,
                per_class_filter,
            } => {
                let graph = build_graph(&train_ds, train_config.k, MetricSpec::Euclidean, backend)?;
                let (model, _) = train(&train_ds, &graph, train_config)?;
                let model = match filter {
                    None => model,
                    Some(spec) if *per_class_filter => filter_model_per_class(&model, spec)?,
                    Some(spec) => filter_model(&model, spec)?,
                };
                let report =
                    evaluate(&model, &test_ds, EvalMode::Leveraged, None, backend)?;
                (model.prototypes().len(), report)
            }
            CvMode::Classic { sample_theta } => {
                let prototypes = sample_prototypes(&train_ds, *sample_theta, seed ^ (f as u64))?;
                let predictions = predict_dataset_classic(
                    &prototypes,
                    &test_ds,
                    train_config.k.min(prototypes.len()),
                    MetricSpec::Euclidean,
                )?;
                let report = report_from_predictions(&predictions, &test_ds, EvalMode::Classic)?;
                (prototypes.len(), report)
            }
        };
        fold_reports.push(FoldReport {
            fold: f,
            train_size: train_ds.len(),
            test_size: test_ds.len(),
            retained,
            retained_fraction: retained as f64 / train_ds.len() as f64,
            report,
        });
    }
    let n = fold_reports.len() as f64;
    let mean_map = fold_reports.iter().map(|f| f.report.map).sum::<f64>() / n;
    let mean_error = fold_reports.iter().map(|f| f.report.error_rate).sum::<f64>() / n;
    let mean_retained_fraction =
        fold_reports.iter().map(|f| f.retained_fraction).sum::<f64>() / n;
    Ok(CvReport {
        schema_version: 1,
        folds: fold_reports,
        mean_map,
        mean_error,
        mean_retained_fraction,
    })
}

/// Uniform random prototype sample of proportion `theta` (seeded); exactly
/// the full set at `theta = 1`.
fn sample_prototypes(train: &Dataset, theta: f64, seed: u64) -> Result<Dataset> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::domain(format!(
            "sample proportion must lie in (0, 1], got {theta}"
        )));
    }
    if theta == 1.0 {
        return Ok(train.clone());
    }
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x5A3B);
    let m = train.len();
    let keep = ((theta * m as f64).ceil() as usize).clamp(1, m);
    let mut ids: Vec<usize> = (0..m).collect();
    for i in (1..m).rev() {
        let j = rng.gen_range(0..=i);
        ids.swap(i, j);
    }
    let mut chosen: Vec<usize> = ids[..keep].to_vec();
    chosen.sort_unstable();
    train.subset(&chosen)
}

// ---------------------------------------------------------------------------
// Margin statistics
// ---------------------------------------------------------------------------

/// Five-number-ish summary of a margin distribution.
#[derive(Debug, Clone, Serialize)]
pub struct MarginSummary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MarginStats {
    /// Summary of normalized edges per class, over all examples.
    pub per_class: Vec<MarginSummary>,
    /// Summary restricted to examples whose class-c membership the model
    /// predicts correctly (positive edge), per class.
    pub per_class_correct: Vec<MarginSummary>,
}

/// Normalized leveraged edges `y_ic * h_c(o_i) / ||alpha_c||_1` of every
/// example, summarized per class. Examples retained as prototypes are
/// scored leave-self-out.
pub fn margin_stats(model: &LeveragedModel, dataset: &Dataset) -> Result<MarginStats> {
    let c_count = dataset.class_count();
    let mut position_of_id = std::collections::HashMap::new();
    for (idx, &id) in model.prototype_ids().iter().enumerate() {
        position_of_id.insert(id, idx);
    }
    let norms: Vec<f64> = (0..c_count).map(|c| model.alpha_col_norm1(c)).collect();
    let mut edges: Vec<Vec<f64>> = vec![Vec::with_capacity(dataset.len()); c_count];
    for i in 0..dataset.len() {
        let exclude = position_of_id.get(&i).copied();
        let p = crate::classify::score_leveraged_excluding(
            dataset.features(i),
            model,
            model.k(),
            exclude,
        )?;
        for c in 0..c_count {
            let norm = norms[c];
            let edge = dataset.y(i, c) * p.scores[c];
            edges[c].push(if norm > 0.0 { edge / norm } else { 0.0 });
        }
    }
    let summarize = |values: &[f64]| -> MarginSummary {
        if values.is_empty() {
            return MarginSummary {
                min: 0.0,
                q1: 0.0,
                median: 0.0,
                q3: 0.0,
                mean: 0.0,
            };
        }
        let mut sorted = values.to_vec();
        sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        let q = |p: f64| -> f64 {
            let pos = p * (sorted.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            let w = pos - lo as f64;
            sorted[lo] * (1.0 - w) + sorted[hi] * w
        };
        MarginSummary {
            min: sorted[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        }
    };
    let per_class: Vec<MarginSummary> = edges.iter().map(|v| summarize(v)).collect();
    let per_class_correct: Vec<MarginSummary> = edges
        .iter()
        .map(|v| {
            let positive: Vec<f64> = v.iter().copied().filter(|&e| e > 0.0).collect();
            summarize(&positive)
        })
        .collect();
    Ok(MarginStats {
        per_class,
        per_class_correct,
    })
}

// ---------------------------------------------------------------------------
// Human-readable rendering
// ---------------------------------------------------------------------------

/// Aligned-text rendering of an evaluation report.
pub fn render_report(report: &EvalReport, class_names: &[String]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "mode: {}", report.mode);
    let _ = writeln!(out, "queries: {}", report.n_queries);
    let _ = writeln!(out, "error rate: {:.4}", report.error_rate);
    let _ = writeln!(out, "mAP (mean per-class accuracy): {:.4}", report.map);
    let _ = writeln!(out, "empirical risk: {:.4}", report.empirical_risk);
    if let Some(s) = report.surrogate_risk {
        let _ = writeln!(out, "surrogate risk (training set): {:.6}", s);
    }
    let _ = writeln!(out, "argmax ties: {}", report.tie_count);
    let width = class_names
        .iter()
        .map(|n| n.len())
        .max()
        .unwrap_or(4)
        .max(6);
    let _ = write!(out, "{:>width$} |", "true\\pred");
    for name in class_names {
        let _ = write!(out, " {name:>width$}");
    }
    let _ = writeln!(out, " | rate");
    for (c, row) in report.confusion.iter().enumerate() {
        let _ = write!(out, "{:>width$} |", class_names[c]);
        for &v in row {
            let _ = write!(out, " {v:>width$}");
        }
        let _ = writeln!(out, " | {:.4}", report.per_class_rate[c]);
    }
    out
}

/// Re-export of the diagnostics CSV for convenience alongside the other
/// report writers.
pub fn diagnostics_csv(diag: &TrainDiagnostics) -> String {
    diag.to_csv()
}
