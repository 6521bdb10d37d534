//! The boosting loop that learns leveraging coefficients.
//!
//! Each class is a one-vs-all problem solved independently: a weight per
//! training example is maintained at `w_i = -ψ'(rho_i)` where `rho_i` is the
//! example's current edge for the class. One iteration picks a prototype
//! `j` (the weak-index-chooser oracle), splits the weights of `j`'s
//! reciprocal neighbors by the sign of the edge entry `r_ij`, solves a 1-D
//! step `δ`, shifts exactly those neighbors' weights, and accumulates `δ`
//! into `α_jc`. Per-iteration diagnostics record everything the convergence
//! theory talks about: the surrogate trace, the weak-index statistics
//! (γ, η), the resulting rate bound, and the Bregman decrement residual.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::losses::{
    loss_value, solve_delta_closed, solve_delta_exact, update_weight, weight_from_edge, LossKind,
};
use crate::model::LeveragedModel;
use crate::neighbors::NeighborGraph;

/// How the next prototype to leverage is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Oracle {
    /// Uniform with replacement from the seeded per-class stream.
    LazyRandom,
    /// A fixed seeded permutation, cycled; each index exactly once when
    /// the iteration budget equals m.
    LazyOrdered,
    /// Greedy: the covered prototype whose step yields the largest
    /// surrogate decrease; repeats allowed.
    Boosting,
    /// Greedy, but each prototype is leveraged at most once.
    BoostingOnce,
}

impl Oracle {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lazy-random" => Ok(Oracle::LazyRandom),
            "lazy-ordered" => Ok(Oracle::LazyOrdered),
            "boosting" => Ok(Oracle::Boosting),
            "boosting-once" => Ok(Oracle::BoostingOnce),
            other => Err(Error::domain(format!(
                "unknown oracle '{other}' (expected lazy-random | lazy-ordered | boosting | boosting-once)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Oracle::LazyRandom => "lazy-random",
            Oracle::LazyOrdered => "lazy-ordered",
            Oracle::Boosting => "boosting",
            Oracle::BoostingOnce => "boosting-once",
        }
    }
}

/// When the 1/m smoothing of the partial weight sums is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothing {
    /// Only when one of the sums is zero (the step would be infinite).
    OnZero,
    /// Before every step.
    Always,
}

impl Smoothing {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "on-zero" => Ok(Smoothing::OnZero),
            "always" => Ok(Smoothing::Always),
            other => Err(Error::domain(format!(
                "unknown smoothing '{other}' (expected on-zero | always)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Smoothing::OnZero => "on-zero",
            Smoothing::Always => "always",
        }
    }
}

pub const DEFAULT_CONVERGENCE_TOL: f64 = 1e-8;

/// Training configuration.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub k: usize,
    /// Iteration budget per class.
    pub iters: usize,
    pub oracle: Oracle,
    pub smoothing: Smoothing,
    /// Solve each step by root finding instead of the closed form.
    pub exact_delta: bool,
    /// The greedy oracles stop once the best step magnitude falls below this.
    pub convergence_tol: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(loss: LossKind, k: usize, iters: usize, seed: u64) -> Self {
        TrainConfig {
            loss,
            k,
            iters,
            oracle: Oracle::Boosting,
            smoothing: Smoothing::OnZero,
            exact_delta: false,
            convergence_tol: DEFAULT_CONVERGENCE_TOL,
            seed,
        }
    }
}

/// Add 1/m to both partial weight sums, keeping the step finite.
pub fn smooth(w_plus: f64, w_minus: f64, m: usize) -> (f64, f64) {
    let bump = 1.0 / m as f64;
    (w_plus + bump, w_minus + bump)
}

/// One iteration's diagnostics.
#[derive(Debug, Clone)]
pub struct IterRecord {
    /// 1-based iteration index within the class.
    pub t: usize,
    /// Chosen prototype.
    pub j: usize,
    pub delta: f64,
    /// Per-class surrogate risk after this iteration.
    pub surrogate: f64,
    /// |p_j - 1/2| measured from the unsmoothed partial sums.
    pub gamma: f64,
    /// (w+ + w-) / ||w||_1 measured before the update.
    pub eta: f64,
    /// exp(-2 * min_eta * min_gamma^2 * tau) over iterations where the weak
    /// index assumption held so far.
    pub bound: f64,
    /// |surrogate decrement - Bregman sum|; exponential loss with two
    /// classes only, and only meaningful on unsmoothed steps.
    pub bregman_residual: Option<f64>,
    pub smoothed: bool,
    /// The chosen index had no reciprocal neighbors; nothing changed.
    pub noop: bool,
    pub wia_held: bool,
    /// Per-class empirical 0/1 risk after this iteration.
    pub empirical01: f64,
    pub w_plus: f64,
    pub w_minus: f64,
}

/// Full trace of one class's training run.
#[derive(Debug, Clone)]
pub struct ClassTrace {
    pub class: usize,
    /// Surrogate before the first iteration (ψ(0)).
    pub initial_surrogate: f64,
    pub iters: Vec<IterRecord>,
    /// Number of iterations where the weak index assumption held.
    pub effective_tau: usize,
    pub stopped_early: bool,
    /// Iterations (squared loss) that produced at least one negative weight.
    pub negative_weight_events: usize,
}

/// Diagnostics for a whole training run, one trace per class.
#[derive(Debug, Clone)]
pub struct TrainDiagnostics {
    pub per_class: Vec<ClassTrace>,
}

impl TrainDiagnostics {
    /// CSV export: class,t,j,delta,surrogate,gamma,eta,bound,bregman_residual.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("class,t,j,delta,surrogate,gamma,eta,bound,bregman_residual\n");
        for trace in &self.per_class {
            for rec in &trace.iters {
                let bregman = rec
                    .bregman_residual
                    .map(|v| v.to_string())
                    .unwrap_or_default();
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    trace.class,
                    rec.t,
                    rec.j,
                    rec.delta,
                    rec.surrogate,
                    rec.gamma,
                    rec.eta,
                    rec.bound,
                    bregman
                ));
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Per-class trainer
// ---------------------------------------------------------------------------

/// Mutable state of one class's one-vs-all problem. Public so tests and
/// examples can drive single iterations; [`train`] is the normal entry point.
pub struct ClassTrainer<'a> {
    dataset: &'a Dataset,
    graph: &'a NeighborGraph,
    config: &'a TrainConfig,
    class: usize,
    /// Current edge of every example for this class.
    rho: Vec<f64>,
    /// Maintained weights, w_i = -ψ'(rho_i).
    w: Vec<f64>,
    alpha: Vec<f64>,
    /// (i, r_ij) for every reciprocal neighbor i of each j.
    recip_edges: Vec<Vec<(u32, f64)>>,
    rng: ChaCha8Rng,
    permutation: Vec<usize>,
    chosen: Vec<bool>,
    negative_weight_events: usize,
}

/// A solved step before it is applied.
#[derive(Debug, Clone, Copy)]
pub struct StepPlan {
    pub delta: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    pub smoothed: bool,
}

/// What one applied iteration did.
#[derive(Debug, Clone, Copy)]
pub struct StepOutcome {
    pub delta: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    pub smoothed: bool,
    pub noop: bool,
    /// Sum over touched weights of the Bregman divergence between new and
    /// old weight (exponential loss, two classes).
    pub bregman_sum: Option<f64>,
}

impl<'a> ClassTrainer<'a> {
    pub fn new(
        dataset: &'a Dataset,
        graph: &'a NeighborGraph,
        config: &'a TrainConfig,
        class: usize,
    ) -> Self {
        let m = dataset.len();
        let w0 = weight_from_edge(config.loss, 0.0);
        let recip_edges: Vec<Vec<(u32, f64)>> = (0..m)
            .map(|j| {
                graph
                    .reciprocal(j)
                    .iter()
                    .map(|&i| (i as u32, dataset.y(i, class) * dataset.y(j, class)))
                    .collect()
            })
            .collect();
        // Per-class stream: the same seed trains identically whether classes
        // run sequentially or in parallel.
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(class as u64 + 1);
        let mut permutation: Vec<usize> = (0..m).collect();
        for i in (1..m).rev() {
            let pick = rng.gen_range(0..=i);
            permutation.swap(i, pick);
        }
        ClassTrainer {
            dataset,
            graph,
            config,
            class,
            rho: vec![0.0; m],
            w: vec![w0; m],
            alpha: vec![0.0; m],
            recip_edges,
            rng,
            permutation,
            chosen: vec![false; m],
            negative_weight_events: 0,
        }
    }

    pub fn class(&self) -> usize {
        self.class
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn edges(&self) -> &[f64] {
        &self.rho
    }

    fn m(&self) -> usize {
        self.dataset.len()
    }

    /// Per-class surrogate risk of the current state. For the exponential
    /// loss this is the mean maintained weight, which keeps the Bregman
    /// decrement identity exact; otherwise it is recomputed from the edges.
    pub fn surrogate(&self) -> f64 {
        let m = self.m() as f64;
        match self.config.loss {
            LossKind::Exponential => self.w.iter().sum::<f64>() / m,
            _ => self.rho.iter().map(|&r| loss_value(self.config.loss, r)).sum::<f64>() / m,
        }
    }

    /// Per-class empirical 0/1 risk: the fraction of strictly negative edges.
    pub fn empirical01(&self) -> f64 {
        self.rho.iter().filter(|&&r| r < 0.0).count() as f64 / self.m() as f64
    }

    /// Unsmoothed partial sums and the L1 norm of the edge column.
    fn partial_sums(&self, j: usize) -> (f64, f64, f64) {
        let mut w_plus = 0.0;
        let mut w_minus = 0.0;
        let mut r_norm1 = 0.0;
        for &(i, r) in &self.recip_edges[j] {
            if r > 0.0 {
                w_plus += self.w[i as usize];
            } else {
                w_minus += self.w[i as usize];
            }
            r_norm1 += r.abs();
        }
        (w_plus, w_minus, r_norm1)
    }

    /// Solve the step the configuration would take at `j`, without applying
    /// it. `None` when `j` has no reciprocal neighbors.
    pub fn plan_step(&self, j: usize) -> Result<Option<StepPlan>> {
        let edges = &self.recip_edges[j];
        if edges.is_empty() {
            return Ok(None);
        }
        let (w_plus, w_minus, r_norm1) = self.partial_sums(j);
        let needs_smoothing = w_plus == 0.0 || w_minus == 0.0;
        let smoothed = match self.config.smoothing {
            Smoothing::Always => true,
            Smoothing::OnZero => needs_smoothing,
        };
        let delta = if self.config.exact_delta {
            let pairs: Vec<(f64, f64)> = edges
                .iter()
                .map(|&(i, r)| (r, self.rho[i as usize]))
                .collect();
            match solve_delta_exact(self.config.loss, &pairs) {
                Ok(sol) => sol.delta,
                Err(Error::Divergence(_)) => {
                    // Smooth in weight space: one virtual example of weight
                    // 1/m on each side, mirroring the 1/m sum bumps.
                    let rho_virtual = edge_for_weight(self.config.loss, 1.0 / self.m() as f64);
                    let mut padded = pairs;
                    padded.push((1.0, rho_virtual));
                    padded.push((-1.0, rho_virtual));
                    solve_delta_exact(self.config.loss, &padded)?.delta
                }
                Err(other) => return Err(other),
            }
        } else {
            let (wp, wm) = if smoothed {
                smooth(w_plus, w_minus, self.m())
            } else {
                (w_plus, w_minus)
            };
            solve_delta_closed(self.config.loss, wp, wm, r_norm1)?.delta
        };
        if !delta.is_finite() {
            return Err(Error::Internal(format!(
                "non-finite step at j={j} (w+={w_plus}, w-={w_minus})"
            )));
        }
        Ok(Some(StepPlan {
            delta,
            w_plus,
            w_minus,
            smoothed: smoothed && !self.config.exact_delta,
        }))
    }

    /// Surrogate-sum decrease that applying `delta` at `j` would produce.
    fn decrease_of(&self, j: usize, delta: f64) -> f64 {
        self.recip_edges[j]
            .iter()
            .map(|&(i, r)| {
                let rho = self.rho[i as usize];
                loss_value(self.config.loss, rho) - loss_value(self.config.loss, rho + delta * r)
            })
            .sum()
    }

    /// Apply one iteration at prototype `j`. Returns the applied step; a
    /// prototype without reciprocal neighbors is a recorded no-op.
    pub fn iterate_once(&mut self, j: usize) -> Result<StepOutcome> {
        let Some(plan) = self.plan_step(j)? else {
            return Ok(StepOutcome {
                delta: 0.0,
                w_plus: 0.0,
                w_minus: 0.0,
                smoothed: false,
                noop: true,
                bregman_sum: None,
            });
        };
        let track_bregman =
            self.config.loss == LossKind::Exponential && self.dataset.class_count() == 2;
        let mut bregman_sum = 0.0;
        let mut saw_negative = false;
        for idx in 0..self.recip_edges[j].len() {
            let (i, r) = self.recip_edges[j][idx];
            let i = i as usize;
            let old = self.w[i];
            let new = update_weight(self.config.loss, old, plan.delta, r)?;
            if track_bregman {
                // Generator x log x - x: D(p||q) = p log(p/q) - p + q.
                bregman_sum += new * (new / old).ln() - new + old;
            }
            self.w[i] = new;
            self.rho[i] += plan.delta * r;
            if new < 0.0 {
                saw_negative = true;
            }
        }
        if saw_negative {
            self.negative_weight_events += 1;
        }
        self.alpha[j] += plan.delta;
        self.chosen[j] = true;
        Ok(StepOutcome {
            delta: plan.delta,
            w_plus: plan.w_plus,
            w_minus: plan.w_minus,
            smoothed: plan.smoothed,
            noop: false,
            bregman_sum: track_bregman.then_some(bregman_sum),
        })
    }

    /// Ask the configured oracle for the next index. `None` means the greedy
    /// oracles found no useful step and training should stop.
    pub fn select_index(&mut self, t: usize) -> Result<Option<usize>> {
        match self.config.oracle {
            Oracle::LazyRandom => Ok(Some(self.rng.gen_range(0..self.m()))),
            Oracle::LazyOrdered => Ok(Some(self.permutation[(t - 1) % self.m()])),
            Oracle::Boosting => self.greedy_pick(false),
            Oracle::BoostingOnce => self.greedy_pick(true),
        }
    }

    fn greedy_pick(&mut self, once: bool) -> Result<Option<usize>> {
        let mut best: Option<(f64, f64, usize)> = None; // (decrease, delta, j)
        for j in 0..self.m() {
            if self.recip_edges[j].is_empty() || (once && self.chosen[j]) {
                continue;
            }
            let Some(plan) = self.plan_step(j)? else {
                continue;
            };
            let decrease = self.decrease_of(j, plan.delta);
            let better = match best {
                None => true,
                Some((best_dec, _, _)) => decrease > best_dec,
            };
            if better {
                best = Some((decrease, plan.delta, j));
            }
        }
        match best {
            Some((decrease, delta, j)) => {
                if decrease <= 0.0 || delta.abs() < self.config.convergence_tol {
                    Ok(None)
                } else {
                    Ok(Some(j))
                }
            }
            None => Ok(None),
        }
    }

    /// Largest disagreement between maintained weights and weights
    /// recomputed from the accumulated coefficients; a drift check.
    pub fn weight_drift(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.m() {
            let mut rho = 0.0;
            for &j in self.graph.direct(i) {
                rho += self.dataset.y(i, self.class) * self.dataset.y(j, self.class)
                    * self.alpha[j];
            }
            let expected = weight_from_edge(self.config.loss, rho);
            worst = worst.max((self.w[i] - expected).abs());
        }
        worst
    }
}

/// The edge whose maintained weight equals `w` (inverse of
/// [`weight_from_edge`]).
fn edge_for_weight(kind: LossKind, w: f64) -> f64 {
    match kind {
        LossKind::Exponential => -w.ln(),
        LossKind::Squared => 1.0 - w / 2.0,
        LossKind::Logistic => ((1.0 - w) / w).ln(),
    }
}

// ---------------------------------------------------------------------------
// Training driver
// ---------------------------------------------------------------------------

/// Train a leveraged model: the one-vs-all problems run independently (in
/// parallel) and each accumulates its coefficient column and trace.
pub fn train(
    dataset: &Dataset,
    graph: &NeighborGraph,
    config: &TrainConfig,
) -> Result<(LeveragedModel, TrainDiagnostics)> {
    if graph.len() != dataset.len() {
        return Err(Error::domain(format!(
            "graph holds {} examples, dataset has {}",
            graph.len(),
            dataset.len()
        )));
    }
    let effective_k = config.k.min(dataset.len() - 1);
    if graph.k() != effective_k {
        return Err(Error::domain(format!(
            "graph was built with k = {}, config asks for k = {}",
            graph.k(),
            effective_k
        )));
    }
    if config.iters == 0 {
        return Err(Error::domain("iteration budget must be at least 1"));
    }
    if config.convergence_tol < 0.0 {
        return Err(Error::domain("convergence tolerance must be non-negative"));
    }

    let c_count = dataset.class_count();
    let per_class: Vec<(Vec<f64>, ClassTrace)> = (0..c_count)
        .into_par_iter()
        .map(|c| train_class(dataset, graph, config, c))
        .collect::<Result<_>>()?;

    let m = dataset.len();
    let mut alpha = vec![vec![0.0; c_count]; m];
    let mut traces = Vec::with_capacity(c_count);
    for (c, (col, trace)) in per_class.into_iter().enumerate() {
        for (j, value) in col.into_iter().enumerate() {
            alpha[j][c] = value;
        }
        debug_assert_eq!(trace.class, c);
        traces.push(trace);
    }
    let model = LeveragedModel::from_parts(
        dataset.clone(),
        (0..m).collect(),
        alpha,
        graph.k(),
        crate::neighbors::MetricSpec::Euclidean,
        config.loss,
        None,
    )?;
    Ok((model, TrainDiagnostics { per_class: traces }))
}

fn train_class(
    dataset: &Dataset,
    graph: &NeighborGraph,
    config: &TrainConfig,
    class: usize,
) -> Result<(Vec<f64>, ClassTrace)> {
    let mut trainer = ClassTrainer::new(dataset, graph, config, class);
    let initial_surrogate = trainer.surrogate();
    let mut iters = Vec::new();
    let mut prev_surrogate = initial_surrogate;
    let mut min_gamma = f64::INFINITY;
    let mut min_eta = f64::INFINITY;
    let mut tau = 0usize;
    let mut stopped_early = false;

    for t in 1..=config.iters {
        let Some(j) = trainer.select_index(t)? else {
            stopped_early = true;
            break;
        };
        let weight_mass: f64 = match config.loss {
            // ||w||_1 for the coverage statistic.
            LossKind::Squared => trainer.w.iter().map(|w| w.abs()).sum(),
            _ => trainer.w.iter().sum(),
        };
        let outcome = trainer.iterate_once(j)?;
        let surrogate = trainer.surrogate();

        let coverage = outcome.w_plus + outcome.w_minus;
        let (gamma, eta) = if outcome.noop || coverage <= 0.0 || weight_mass <= 0.0 {
            (0.0, 0.0)
        } else {
            ((outcome.w_plus / coverage - 0.5).abs(), coverage / weight_mass)
        };
        let wia_held = !outcome.noop && gamma > 0.0 && eta > 0.0;
        if wia_held {
            tau += 1;
            min_gamma = min_gamma.min(gamma);
            min_eta = min_eta.min(eta);
        }
        let bound = if tau == 0 {
            1.0
        } else {
            (-2.0 * min_eta * min_gamma * min_gamma * tau as f64).exp()
        };
        let bregman_residual = outcome.bregman_sum.map(|sum| {
            let decrement = prev_surrogate - surrogate;
            (decrement - sum / dataset.len() as f64).abs()
        });
        iters.push(IterRecord {
            t,
            j,
            delta: outcome.delta,
            surrogate,
            gamma,
            eta,
            bound,
            bregman_residual,
            smoothed: outcome.smoothed,
            noop: outcome.noop,
            wia_held,
            empirical01: trainer.empirical01(),
            w_plus: outcome.w_plus,
            w_minus: outcome.w_minus,
        });
        prev_surrogate = surrogate;

        #[cfg(debug_assertions)]
        if t % 100 == 0 || dataset.len() <= 32 {
            let drift = trainer.weight_drift();
            debug_assert!(
                drift <= 1e-9,
                "weight drift {drift} at t={t}, class {class}"
            );
        }
    }

    let trace = ClassTrace {
        class,
        initial_surrogate,
        iters,
        effective_tau: tau,
        stopped_early,
        negative_weight_events: trainer.negative_weight_events,
    };
    Ok((trainer.alpha.to_vec(), trace))
}

// ---------------------------------------------------------------------------
// Risk evaluation and theory checks
// ---------------------------------------------------------------------------

/// The surrogate risk of a coefficient matrix over the training graph:
/// the mean of ψ at every example's edge, averaged over classes.
pub fn surrogate_risk(
    alpha: &[Vec<f64>],
    graph: &NeighborGraph,
    dataset: &Dataset,
    loss: LossKind,
) -> f64 {
    let m = dataset.len();
    let c_count = dataset.class_count();
    let mut total = 0.0;
    for c in 0..c_count {
        for i in 0..m {
            let rho: f64 = graph
                .direct(i)
                .iter()
                .map(|&j| dataset.y(i, c) * dataset.y(j, c) * alpha[j][c])
                .sum();
            total += loss_value(loss, rho);
        }
    }
    total / (m as f64 * c_count as f64)
}

/// One checked point of the rate bound.
#[derive(Debug, Clone)]
pub struct BoundPoint {
    pub t: usize,
    pub tau: usize,
    pub bound: f64,
    pub empirical01: f64,
    pub violated: bool,
}

#[derive(Debug, Clone)]
pub struct ClassBoundCheck {
    pub class: usize,
    pub points: Vec<BoundPoint>,
    pub violations: usize,
}

/// Result of checking the convergence-rate bound against a training run.
#[derive(Debug, Clone)]
pub struct Theorem2Report {
    pub per_class: Vec<ClassBoundCheck>,
    pub total_violations: usize,
    /// (1/C) Σ_c Π_t Z_t, the product-of-normalizers diagnostic.
    pub normalizer_bound: f64,
    /// Empirical 0/1 risk over all classes at the end of training.
    pub final_empirical01: f64,
    pub normalizer_violated: bool,
}

const BOUND_SLACK: f64 = 1e-12;

/// Check, for every class and every iteration, that the measured empirical
/// 0/1 risk stays below `exp(-2 η γ² τ)` built from the running minima over
/// iterations where the weak index assumption held; also evaluates the
/// product-of-normalizers bound.
pub fn check_theorem2(diagnostics: &TrainDiagnostics) -> Theorem2Report {
    let mut per_class = Vec::with_capacity(diagnostics.per_class.len());
    let mut total_violations = 0usize;
    let mut normalizer_sum = 0.0;
    let mut final01_sum = 0.0;
    for trace in &diagnostics.per_class {
        let mut points = Vec::with_capacity(trace.iters.len());
        let mut violations = 0usize;
        let mut tau = 0usize;
        for rec in &trace.iters {
            if rec.wia_held {
                tau += 1;
            }
            let violated = rec.empirical01 > rec.bound + BOUND_SLACK;
            if violated {
                violations += 1;
            }
            points.push(BoundPoint {
                t: rec.t,
                tau,
                bound: rec.bound,
                empirical01: rec.empirical01,
                violated,
            });
        }
        total_violations += violations;
        let last = trace.iters.last();
        let final_surrogate = last.map_or(trace.initial_surrogate, |r| r.surrogate);
        normalizer_sum += final_surrogate / trace.initial_surrogate;
        final01_sum += last.map_or(0.0, |r| r.empirical01);
        per_class.push(ClassBoundCheck {
            class: trace.class,
            points,
            violations,
        });
    }
    let c_count = diagnostics.per_class.len().max(1) as f64;
    let normalizer_bound = normalizer_sum / c_count;
    let final_empirical01 = final01_sum / c_count;
    Theorem2Report {
        per_class,
        total_violations,
        normalizer_bound,
        final_empirical01,
        normalizer_violated: final_empirical01 > normalizer_bound + BOUND_SLACK,
    }
}
