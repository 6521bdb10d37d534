//! Inference: classic uniform k-NN voting, the leveraged rule, and
//! prototype filtering.

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::LeveragedModel;
use crate::neighbors::{knn_search, Backend, KdTree, MetricSpec};

/// One prototype's share of a leveraged score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contribution {
    /// Original training-set id of the voting prototype.
    pub prototype_id: usize,
    /// The prototype's own class.
    pub prototype_class: usize,
    /// alpha_jc * y_jc for the scored class.
    pub value: f64,
}

/// Scores for every class plus the argmax decision.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub scores: Vec<f64>,
    /// Argmax class; ties resolved to the lowest class index.
    pub label: usize,
    /// Whether the argmax was a tie.
    pub tie: bool,
    /// Per-neighbor votes for the predicted class, when requested.
    pub contributions: Option<Vec<Contribution>>,
}

fn argmax_lowest(scores: &[f64]) -> (usize, bool) {
    let mut best = 0usize;
    for (c, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = c;
        }
    }
    let tie = scores
        .iter()
        .enumerate()
        .any(|(c, &s)| c != best && s == scores[best]);
    (best, tie)
}

/// Classic uniform k-NN vote: `scores[c]` counts the class-`c` members among
/// the k nearest prototypes.
pub fn score_classic(
    query: &[f64],
    prototypes: &Dataset,
    k: usize,
    metric: MetricSpec,
) -> Result<Prediction> {
    let neighbors = knn_search(query, prototypes, k, metric, None)?;
    let mut scores = vec![0.0; prototypes.class_count()];
    for &j in &neighbors {
        scores[prototypes.label(j)] += 1.0;
    }
    let (label, tie) = argmax_lowest(&scores);
    Ok(Prediction {
        scores,
        label,
        tie,
        contributions: None,
    })
}

/// Leveraged vote with the model's own k over its retained prototypes.
pub fn score_leveraged(query: &[f64], model: &LeveragedModel) -> Result<Prediction> {
    score_leveraged_with(query, model, model.k(), false, None)
}

/// Leveraged vote with an explicit k and optional per-neighbor contribution
/// breakdown. `contribution_class` defaults to the predicted label.
pub fn score_leveraged_with(
    query: &[f64],
    model: &LeveragedModel,
    k: usize,
    with_contributions: bool,
    contribution_class: Option<usize>,
) -> Result<Prediction> {
    scores_impl(query, model, k, None, with_contributions, contribution_class)
}

/// Same rule, excluding one prototype (by index into the model's prototype
/// set) from the search; used when scoring a training example against a
/// model that retains it.
pub(crate) fn score_leveraged_excluding(
    query: &[f64],
    model: &LeveragedModel,
    k: usize,
    exclude: Option<usize>,
) -> Result<Prediction> {
    scores_impl(query, model, k, exclude, false, None)
}

/// Leveraged score of one class over a neighbor list. Same-class and
/// off-class coefficients are summed separately and combined through the
/// two symmetric label values, so neighborhoods with identical class counts
/// and coefficients produce bitwise-identical scores regardless of where
/// the same-class neighbors sit in the list.
fn leveraged_class_score(model: &LeveragedModel, neighbors: &[usize], c: usize) -> f64 {
    let prototypes = model.prototypes();
    let mut same = 0.0;
    let mut other = 0.0;
    for &j in neighbors {
        if prototypes.label(j) == c {
            same += model.alpha(j, c);
        } else {
            other += model.alpha(j, c);
        }
    }
    same - other / (prototypes.class_count() as f64 - 1.0)
}

fn scores_impl(
    query: &[f64],
    model: &LeveragedModel,
    k: usize,
    exclude: Option<usize>,
    with_contributions: bool,
    contribution_class: Option<usize>,
) -> Result<Prediction> {
    let prototypes = model.prototypes();
    if prototypes.is_empty() {
        return Err(Error::domain("model has no retained prototypes"));
    }
    let c_count = prototypes.class_count();
    let mut scores = vec![0.0; c_count];
    let mut neighbor_sets: Vec<Vec<usize>> = Vec::new();
    match model.class_pools() {
        None => {
            let neighbors = knn_search(query, prototypes, k, model.metric(), exclude)?;
            for c in 0..c_count {
                scores[c] = leveraged_class_score(model, &neighbors, c);
            }
            neighbor_sets.push(neighbors);
        }
        Some(pools) => {
            for (c, pool) in pools.iter().enumerate() {
                let neighbors = knn_among(query, prototypes, pool, k, model.metric(), exclude)?;
                scores[c] = leveraged_class_score(model, &neighbors, c);
                neighbor_sets.push(neighbors);
            }
        }
    }
    let (label, tie) = argmax_lowest(&scores);
    let contributions = if with_contributions {
        let c = contribution_class.unwrap_or(label);
        if c >= c_count {
            return Err(Error::domain(format!("contribution class {c} out of range")));
        }
        let neighbors = if neighbor_sets.len() == 1 {
            &neighbor_sets[0]
        } else {
            &neighbor_sets[c]
        };
        Some(
            neighbors
                .iter()
                .map(|&j| Contribution {
                    prototype_id: model.prototype_ids()[j],
                    prototype_class: prototypes.label(j),
                    value: model.alpha(j, c) * prototypes.y(j, c),
                })
                .collect(),
        )
    } else {
        None
    };
    Ok(Prediction {
        scores,
        label,
        tie,
        contributions,
    })
}

/// k nearest of `query` among the candidate indices only.
fn knn_among(
    query: &[f64],
    prototypes: &Dataset,
    candidates: &[usize],
    k: usize,
    metric: MetricSpec,
    exclude: Option<usize>,
) -> Result<Vec<usize>> {
    if query.len() != prototypes.dim() {
        return Err(Error::domain(format!(
            "query has dimension {}, prototypes have {}",
            query.len(),
            prototypes.dim()
        )));
    }
    if candidates.is_empty() {
        return Err(Error::domain("empty retained pool"));
    }
    let mut keyed: Vec<(f64, usize)> = candidates
        .iter()
        .filter(|&&j| Some(j) != exclude)
        .map(|&j| (metric.distance_sq(query, prototypes.features(j)), j))
        .collect();
    let k = k.min(keyed.len());
    if k < keyed.len() {
        keyed.select_nth_unstable_by(k, |a, b| a.partial_cmp(b).unwrap());
        keyed.truncate(k);
    }
    keyed.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(keyed.into_iter().map(|(_, j)| j).collect())
}

/// Batch leveraged prediction over a dataset's observations; parallel over
/// queries with a deterministic output order.
pub fn predict_dataset(
    model: &LeveragedModel,
    queries: &Dataset,
    k: Option<usize>,
    backend: Backend,
) -> Result<Vec<Prediction>> {
    let k = k.unwrap_or_else(|| model.k());
    match (backend, model.class_pools()) {
        (Backend::KdTree, None) => {
            let tree = KdTree::build(model.prototypes());
            let c_count = model.class_count();
            (0..queries.len())
                .into_par_iter()
                .map(|q| {
                    let neighbors = tree.knn(queries.features(q), k, model.metric(), None)?;
                    let scores: Vec<f64> = (0..c_count)
                        .map(|c| leveraged_class_score(model, &neighbors, c))
                        .collect();
                    let (label, tie) = argmax_lowest(&scores);
                    Ok(Prediction {
                        scores,
                        label,
                        tie,
                        contributions: None,
                    })
                })
                .collect()
        }
        _ => (0..queries.len())
            .into_par_iter()
            .map(|q| score_leveraged_with(queries.features(q), model, k, false, None))
            .collect(),
    }
}

/// Batch classic prediction.
pub fn predict_dataset_classic(
    prototypes: &Dataset,
    queries: &Dataset,
    k: usize,
    metric: MetricSpec,
) -> Result<Vec<Prediction>> {
    (0..queries.len())
        .into_par_iter()
        .map(|q| score_classic(queries.features(q), prototypes, k, metric))
        .collect()
}

// ---------------------------------------------------------------------------
// Filtering
// ---------------------------------------------------------------------------

/// Which prototypes to keep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterSpec {
    /// Keep prototype `j` iff `max_c alpha_jc > alpha_tilde` (> 0).
    Threshold { alpha_tilde: f64 },
    /// Keep the `ceil(theta * m)` prototypes with the largest squared
    /// coefficient-row norm; all-zero rows are always dropped.
    /// `exclude_nonpositive` additionally drops rows whose largest
    /// coefficient is not positive.
    Fraction { theta: f64, exclude_nonpositive: bool },
}

impl FilterSpec {
    fn validate(&self) -> Result<()> {
        match *self {
            FilterSpec::Threshold { alpha_tilde } => {
                if alpha_tilde > 0.0 {
                    Ok(())
                } else {
                    Err(Error::domain(format!(
                        "threshold filter needs alpha_tilde > 0, got {alpha_tilde}"
                    )))
                }
            }
            FilterSpec::Fraction { theta, .. } => {
                if theta > 0.0 && theta <= 1.0 {
                    Ok(())
                } else {
                    Err(Error::domain(format!(
                        "fraction filter needs theta in (0, 1], got {theta}"
                    )))
                }
            }
        }
    }

    fn describe(&self) -> String {
        match *self {
            FilterSpec::Threshold { alpha_tilde } => format!("alpha_tilde > {alpha_tilde}"),
            FilterSpec::Fraction { theta, .. } => format!("theta = {theta}"),
        }
    }
}

/// Shrink a model to the prototypes the spec keeps. Coefficients of retained
/// prototypes are untouched; original ids are preserved.
pub fn filter_model(model: &LeveragedModel, spec: &FilterSpec) -> Result<LeveragedModel> {
    spec.validate()?;
    let m = model.prototypes().len();
    let keep: Vec<usize> = match *spec {
        FilterSpec::Threshold { alpha_tilde } => (0..m)
            .filter(|&j| {
                model
                    .alpha_row(j)
                    .iter()
                    .fold(f64::NEG_INFINITY, |a, &b| a.max(b))
                    > alpha_tilde
            })
            .collect(),
        FilterSpec::Fraction {
            theta,
            exclude_nonpositive,
        } => {
            let mut candidates: Vec<(f64, usize)> = (0..m)
                .filter(|&j| {
                    let norm = model.alpha_norm_sq(j);
                    if norm <= 0.0 {
                        return false;
                    }
                    if exclude_nonpositive {
                        let max = model
                            .alpha_row(j)
                            .iter()
                            .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                        if max <= 0.0 {
                            return false;
                        }
                    }
                    true
                })
                .map(|j| (model.alpha_norm_sq(j), j))
                .collect();
            // Largest norm first, ties by ascending index.
            candidates.sort_unstable_by(|a, b| {
                b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1))
            });
            let quota = (theta * m as f64).ceil() as usize;
            candidates.truncate(quota.min(candidates.len()));
            let mut keep: Vec<usize> = candidates.into_iter().map(|(_, j)| j).collect();
            keep.sort_unstable();
            keep
        }
    };
    if keep.is_empty() {
        return Err(Error::domain(format!(
            "filter ({}) retained no prototypes",
            spec.describe()
        )));
    }
    build_filtered(model, &keep, None)
}

/// Per-class filtering: every class keeps its own pool, and the model
/// retains the union. Threshold mode keeps `j` in pool `c` iff
/// `alpha_jc > alpha_tilde`; fraction mode ranks pool `c` by `alpha_jc^2`.
pub fn filter_model_per_class(
    model: &LeveragedModel,
    spec: &FilterSpec,
) -> Result<LeveragedModel> {
    spec.validate()?;
    let m = model.prototypes().len();
    let c_count = model.class_count();
    let mut pools_original: Vec<Vec<usize>> = Vec::with_capacity(c_count);
    for c in 0..c_count {
        let pool: Vec<usize> = match *spec {
            FilterSpec::Threshold { alpha_tilde } => {
                (0..m).filter(|&j| model.alpha(j, c) > alpha_tilde).collect()
            }
            FilterSpec::Fraction {
                theta,
                exclude_nonpositive,
            } => {
                let mut candidates: Vec<(f64, usize)> = (0..m)
                    .filter(|&j| {
                        let a = model.alpha(j, c);
                        a != 0.0 && (!exclude_nonpositive || a > 0.0)
                    })
                    .map(|j| (model.alpha(j, c) * model.alpha(j, c), j))
                    .collect();
                candidates.sort_unstable_by(|a, b| {
                    b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1))
                });
                let quota = (theta * m as f64).ceil() as usize;
                candidates.truncate(quota.min(candidates.len()));
                let mut pool: Vec<usize> = candidates.into_iter().map(|(_, j)| j).collect();
                pool.sort_unstable();
                pool
            }
        };
        if pool.is_empty() {
            return Err(Error::domain(format!(
                "per-class filter ({}) retained no prototypes for class {c}",
                spec.describe()
            )));
        }
        pools_original.push(pool);
    }
    let mut keep: Vec<usize> = pools_original.concat();
    keep.sort_unstable();
    keep.dedup();
    build_filtered(model, &keep, Some(pools_original))
}

fn build_filtered(
    model: &LeveragedModel,
    keep: &[usize],
    pools_original: Option<Vec<Vec<usize>>>,
) -> Result<LeveragedModel> {
    let prototypes = model.prototypes().subset(keep)?;
    let ids: Vec<usize> = keep.iter().map(|&j| model.prototype_ids()[j]).collect();
    let alpha: Vec<Vec<f64>> = keep.iter().map(|&j| model.alpha_row(j).to_vec()).collect();
    let pools = pools_original.map(|pools| {
        let mut position = vec![usize::MAX; model.prototypes().len()];
        for (new_idx, &old) in keep.iter().enumerate() {
            position[old] = new_idx;
        }
        pools
            .into_iter()
            .map(|pool| pool.into_iter().map(|j| position[j]).collect())
            .collect()
    });
    LeveragedModel::from_parts(
        prototypes,
        ids,
        alpha,
        model.k(),
        model.metric(),
        model.loss(),
        pools,
    )
}
