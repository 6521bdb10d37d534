//! Acceptance suite: one test per criterion, each printing a pass/fail line.
//!
//! Run with `cargo test -p unn --test acceptance -- --nocapture` to see the
//! per-criterion lines and measurements.

mod common;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use unn::boost::{check_theorem2, train, ClassTrainer, Oracle, TrainConfig, TrainDiagnostics};
use unn::classify::{filter_model, predict_dataset, score_classic, score_leveraged, FilterSpec};
use unn::dataset::{gen_blobs, gen_ripley, Dataset};
use unn::eval::{cross_validate, evaluate, CvMode, EvalMode};
use unn::losses::{
    solve_delta_closed, solve_delta_exact, update_weight, weight_from_edge, LossKind,
};
use unn::model::LeveragedModel;
use unn::neighbors::{build_graph, Backend, MetricSpec};

const MONOTONE_SLACK: f64 = 1e-12;

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

struct RipleyRun {
    unn_error: f64,
    classic_error: f64,
    diagnostics: TrainDiagnostics,
}

/// The headline two-class pipeline: 250 train / 1000 test, exponential loss,
/// greedy oracle, k = 9, quarter-fraction filtering.
fn ripley_run(seed: u64) -> RipleyRun {
    let (train_ds, test_ds) = gen_ripley(250, 1000, seed).unwrap();
    let graph = build_graph(&train_ds, 9, MetricSpec::Euclidean, Backend::KdTree).unwrap();
    let cfg = TrainConfig::new(LossKind::Exponential, 9, 5 * train_ds.len(), seed);
    let (model, diagnostics) = train(&train_ds, &graph, &cfg).unwrap();
    let filtered = filter_model(
        &model,
        &FilterSpec::Fraction {
            theta: 0.25,
            exclude_nonpositive: false,
        },
    )
    .unwrap();
    let unn = evaluate(&filtered, &test_ds, EvalMode::Leveraged, None, Backend::Exhaustive)
        .unwrap();
    let classic = evaluate(&model, &test_ds, EvalMode::Classic, Some(9), Backend::Exhaustive)
        .unwrap();
    RipleyRun {
        unn_error: unn.error_rate,
        classic_error: classic.error_rate,
        diagnostics,
    }
}

fn surrogate_is_monotone(diag: &TrainDiagnostics) -> bool {
    diag.per_class.iter().all(|trace| {
        let mut prev = trace.initial_surrogate;
        trace.iters.iter().all(|rec| {
            let ok = rec.surrogate <= prev + MONOTONE_SLACK;
            prev = rec.surrogate;
            ok
        })
    })
}

fn blobs_monotonicity_run() -> TrainDiagnostics {
    let ds = gen_blobs(8, 100, 16, 0.45, 3).unwrap();
    let graph = build_graph(&ds, 11, MetricSpec::Euclidean, Backend::KdTree).unwrap();
    let cfg = TrainConfig::new(LossKind::Exponential, 11, 2 * ds.len(), 3);
    let (_, diag) = train(&ds, &graph, &cfg).unwrap();
    diag
}

#[test]
fn acceptance_01_ripley_near_bayes_error() {
    let start = Instant::now();
    let runs: Vec<RipleyRun> = (1..=10).map(ripley_run).collect();
    let mean_unn = runs.iter().map(|r| r.unn_error).sum::<f64>() / runs.len() as f64;
    let mean_classic = runs.iter().map(|r| r.classic_error).sum::<f64>() / runs.len() as f64;
    let elapsed = start.elapsed().as_secs_f64();
    let ok = mean_unn <= 0.11 && mean_unn <= mean_classic && elapsed < 30.0;
    println!(
        "[acceptance 01] ripley near-Bayes error: {} (UNN theta=0.25 mean error {:.4}, \
         plain 9-NN mean error {:.4}, {:.1}s)",
        verdict(ok),
        mean_unn,
        mean_classic,
        elapsed
    );
    assert!(
        ok,
        "mean UNN error {mean_unn:.4} (limit 0.11), classic {mean_classic:.4}, {elapsed:.1}s"
    );
}

#[test]
fn acceptance_02_surrogate_monotonicity() {
    let ripley = ripley_run(1);
    let ripley_ok = surrogate_is_monotone(&ripley.diagnostics);
    let blobs = blobs_monotonicity_run();
    let blobs_ok = surrogate_is_monotone(&blobs);
    let ok = ripley_ok && blobs_ok;
    println!(
        "[acceptance 02] surrogate monotone under boosting oracle: {} (ripley {}, 8-class blobs {})",
        verdict(ok),
        ripley_ok,
        blobs_ok
    );
    assert!(ok);
}

#[test]
fn acceptance_03_global_optimum_matches_independent_minimizer() {
    let start = Instant::now();
    let mut worst_gap = 0.0f64;
    let mut results = Vec::new();
    for instance in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + instance);
        let m = rng.gen_range(10..=12usize);
        let k = rng.gen_range(2..=3usize);
        let dim = rng.gen_range(1..=2usize);
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let mut labels: Vec<usize> = (0..m).map(|_| rng.gen_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let ds = Dataset::from_rows(rows, labels, vec!["a".into(), "b".into()]).unwrap();
        let graph = build_graph(&ds, k, MetricSpec::Euclidean, Backend::Exhaustive).unwrap();

        let mut cfg = TrainConfig::new(LossKind::Exponential, k, 600_000, instance);
        cfg.convergence_tol = 1e-12;
        let mut trainer = ClassTrainer::new(&ds, &graph, &cfg, 0);
        for t in 1..=cfg.iters {
            let Some(j) = trainer.select_index(t).unwrap() else {
                break;
            };
            trainer.iterate_once(j).unwrap();
        }
        let trained = trainer.surrogate();
        let oracle = common::exp_coordinate_descent_min(&ds, &graph, 0);
        let gap = (trained - oracle).abs();
        worst_gap = worst_gap.max(gap);
        results.push(gap);
    }
    let elapsed = start.elapsed().as_secs_f64();
    let ok = worst_gap <= 1e-6 && elapsed < 10.0;
    println!(
        "[acceptance 03] global-optimum oracle equivalence: {} (20 instances, worst gap {:.2e}, {:.1}s)",
        verdict(ok),
        worst_gap,
        elapsed
    );
    assert!(ok, "worst gap {worst_gap:.3e}, elapsed {elapsed:.1}s, gaps {results:?}");
}

#[test]
fn acceptance_04_theorem2_bound_never_violated() {
    let mut total = 0usize;
    for seed in 1..=10 {
        let run = ripley_run(seed);
        total += check_theorem2(&run.diagnostics).total_violations;
    }
    let blobs = blobs_monotonicity_run();
    let blobs_report = check_theorem2(&blobs);
    total += blobs_report.total_violations;
    let normalizer_ok = !blobs_report.normalizer_violated;
    let ok = total == 0 && normalizer_ok;
    println!(
        "[acceptance 04] rate bound exp(-2*eta*gamma^2*tau): {} ({} violations across 11 runs, \
         normalizer bound holds: {})",
        verdict(ok),
        total,
        normalizer_ok
    );
    assert!(ok);
}

#[test]
fn acceptance_05_bregman_decrement_identity() {
    // Exponential loss, two classes, greedy oracle, full training run.
    // The identity is exact only where the applied step is the exact
    // stationary point, i.e. on unsmoothed steps; smoothed steps must still
    // strictly decrease the surrogate.
    let run = ripley_run(1);
    let mut checked = 0usize;
    let mut smoothed = 0usize;
    let mut worst = 0.0f64;
    let mut smoothed_decrease_ok = true;
    for trace in &run.diagnostics.per_class {
        let mut prev = trace.initial_surrogate;
        for rec in &trace.iters {
            if rec.noop {
                continue;
            }
            if rec.smoothed {
                smoothed += 1;
                smoothed_decrease_ok &= rec.surrogate < prev;
            } else {
                let res = rec.bregman_residual.expect("recorded for exp/C=2");
                worst = worst.max(res);
                checked += 1;
            }
            prev = rec.surrogate;
        }
    }
    let ok = checked > 0 && worst <= 1e-8 && smoothed_decrease_ok;
    println!(
        "[acceptance 05] Bregman decrement identity: {} ({} exact-step iterations, worst \
         residual {:.2e}; {} smoothed iterations, all decreasing: {})",
        verdict(ok),
        checked,
        worst,
        smoothed,
        smoothed_decrease_ok
    );
    assert!(ok, "worst residual {worst:.3e} over {checked} iterations");
}

#[test]
fn acceptance_06_step_solvers_cross_validate() {
    // Exponential: closed form vs root finder on 1000 random weight
    // configurations with unit-magnitude edges.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_exp = 0.0f64;
    for _ in 0..1000 {
        let n_pos = rng.gen_range(1..8usize);
        let n_neg = rng.gen_range(1..8usize);
        let mut edges = Vec::new();
        let mut w_plus = 0.0;
        let mut w_minus = 0.0;
        for _ in 0..n_pos {
            let w: f64 = rng.gen_range(0.001..10.0);
            edges.push((1.0, -w.ln()));
            w_plus += w;
        }
        for _ in 0..n_neg {
            let w: f64 = rng.gen_range(0.001..10.0);
            edges.push((-1.0, -w.ln()));
            w_minus += w;
        }
        let closed = solve_delta_closed(LossKind::Exponential, w_plus, w_minus, edges.len() as f64)
            .unwrap();
        let exact = solve_delta_exact(LossKind::Exponential, &edges).unwrap();
        worst_exp = worst_exp.max((closed.delta - exact.delta).abs());
    }

    // Squared: closed form vs the quadratic-formula oracle (unit edges),
    // and the root finder vs the oracle on fractional edges.
    let mut worst_squared = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(2..10usize);
        let mut edges: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                let r = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                (r, rng.gen_range(-2.0..2.0))
            })
            .collect();
        edges[0].0 = 1.0;
        edges[1].0 = -1.0;
        let w_plus: f64 = edges
            .iter()
            .filter(|e| e.0 > 0.0)
            .map(|e| 2.0 * (1.0 - e.1))
            .sum();
        let w_minus: f64 = edges
            .iter()
            .filter(|e| e.0 < 0.0)
            .map(|e| 2.0 * (1.0 - e.1))
            .sum();
        let closed =
            solve_delta_closed(LossKind::Squared, w_plus, w_minus, edges.len() as f64).unwrap();
        let a: f64 = edges.iter().map(|e| e.0 * e.0).sum();
        let b: f64 = edges.iter().map(|e| e.0 * (1.0 - e.1)).sum();
        let oracle = b / a;
        worst_squared = worst_squared.max((closed.delta - oracle).abs());

        let fractional: Vec<(f64, f64)> = edges
            .iter()
            .map(|&(r, rho)| (r * rng.gen_range(0.1..1.0), rho))
            .collect();
        let a: f64 = fractional.iter().map(|e| e.0 * e.0).sum();
        let b: f64 = fractional.iter().map(|e| e.0 * (1.0 - e.1)).sum();
        let exact = solve_delta_exact(LossKind::Squared, &fractional).unwrap();
        worst_squared = worst_squared.max((exact.delta - b / a).abs());
    }

    // Logistic: the corrected update must follow the edge-shift law on a
    // 1000-point grid.
    let mut worst_logistic = 0.0f64;
    for i in 0..10 {
        for j in 0..10 {
            for l in 0..10 {
                let rho = -4.0 + 0.889 * i as f64;
                let delta = -2.0 + 0.444 * j as f64;
                let r = -1.0 + 0.222 * l as f64;
                let w = weight_from_edge(LossKind::Logistic, rho);
                let updated = update_weight(LossKind::Logistic, w, delta, r).unwrap();
                let direct = weight_from_edge(LossKind::Logistic, rho + delta * r);
                worst_logistic = worst_logistic.max((updated - direct).abs());
            }
        }
    }

    let ok = worst_exp <= 1e-10 && worst_squared <= 1e-10 && worst_logistic <= 1e-10;
    println!(
        "[acceptance 06] step solvers agree: {} (exp closed-vs-exact {:.2e}, squared vs \
         quadratic oracle {:.2e}, logistic edge-shift {:.2e})",
        verdict(ok),
        worst_exp,
        worst_squared,
        worst_logistic
    );
    assert!(ok);
}

#[test]
fn acceptance_07_uniform_alpha_equals_classic_vote() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut mismatches = 0usize;
    let mut total = 0usize;
    for &c_count in &[2usize, 8] {
        let ds = gen_blobs(c_count, 30, 4, 1.0, 5).unwrap();
        let mut model = LeveragedModel::zeroed(
            ds.clone(),
            1,
            MetricSpec::Euclidean,
            LossKind::Exponential,
        );
        for j in 0..ds.len() {
            for c in 0..c_count {
                model.set_alpha(j, c, 1.0);
            }
        }
        for &k in &[1usize, 3, 11] {
            for _ in 0..10_000 {
                let q: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.5..2.5)).collect();
                let classic = score_classic(&q, &ds, k, MetricSpec::Euclidean).unwrap();
                let lever =
                    unn::classify::score_leveraged_with(&q, &model, k, false, None).unwrap();
                total += 1;
                if classic.label != lever.label {
                    mismatches += 1;
                }
            }
        }
    }
    let ok = mismatches == 0;
    println!(
        "[acceptance 07] uniform-coefficient rule equals classic vote: {} ({} mismatches \
         over {} queries)",
        verdict(ok),
        mismatches,
        total
    );
    assert!(ok);
}

#[test]
fn acceptance_08_filtering_speeds_up_prediction() {
    let start = Instant::now();
    let prototypes = gen_blobs(2, 5000, 64, 1.0, 11).unwrap();
    let queries = gen_blobs(2, 1000, 64, 1.2, 12).unwrap();
    let graph = build_graph(&prototypes, 3, MetricSpec::Euclidean, Backend::Exhaustive).unwrap();
    let mut cfg = TrainConfig::new(LossKind::Exponential, 3, prototypes.len(), 2);
    cfg.oracle = Oracle::LazyOrdered;
    let (model, _) = train(&prototypes, &graph, &cfg).unwrap();
    let filtered = filter_model(
        &model,
        &FilterSpec::Fraction {
            theta: 0.25,
            exclude_nonpositive: false,
        },
    )
    .unwrap();

    // Warm-up, then timed batch prediction under the exhaustive backend.
    let _ = predict_dataset(&model, &queries, None, Backend::Exhaustive).unwrap();
    let t_full = Instant::now();
    let full = predict_dataset(&model, &queries, None, Backend::Exhaustive).unwrap();
    let t_full = t_full.elapsed().as_secs_f64();
    let t_quarter = Instant::now();
    let quarter = predict_dataset(&filtered, &queries, None, Backend::Exhaustive).unwrap();
    let t_quarter = t_quarter.elapsed().as_secs_f64();
    assert_eq!(full.len(), quarter.len());

    let speedup = t_full / t_quarter;
    let elapsed = start.elapsed().as_secs_f64();
    let ok = speedup >= 3.0 && elapsed < 60.0;
    println!(
        "[acceptance 08] data-reduction speedup: {} (theta=0.25 keeps {} of {}; batch \
         prediction {:.3}s vs {:.3}s, speedup {:.2}x, total {:.1}s)",
        verdict(ok),
        filtered.prototypes().len(),
        model.prototypes().len(),
        t_full,
        t_quarter,
        speedup,
        elapsed
    );
    assert!(ok, "speedup {speedup:.2}x, total {elapsed:.1}s");
}

#[test]
fn acceptance_09_multiclass_improvement_over_classic() {
    let mut unn_maps = Vec::new();
    let mut classic_maps = Vec::new();
    for seed in 1..=5u64 {
        let ds = gen_blobs(8, 100, 16, 0.45, seed).unwrap();
        let cfg = TrainConfig::new(LossKind::Exponential, 11, 2 * (ds.len() / 3), seed);
        let unn_report = cross_validate(
            &ds,
            3,
            &cfg,
            &CvMode::Leveraged {
                filter: Some(FilterSpec::Threshold { alpha_tilde: 1e-9 }),
                per_class_filter: false,
            },
            seed,
            Backend::KdTree,
        )
        .unwrap();
        let classic_report = cross_validate(
            &ds,
            3,
            &cfg,
            &CvMode::Classic { sample_theta: 1.0 },
            seed,
            Backend::KdTree,
        )
        .unwrap();
        unn_maps.push(unn_report.mean_map);
        classic_maps.push(classic_report.mean_map);
    }
    let mean_unn = unn_maps.iter().sum::<f64>() / unn_maps.len() as f64;
    let mean_classic = classic_maps.iter().sum::<f64>() / classic_maps.len() as f64;
    let ok = mean_unn >= mean_classic;
    println!(
        "[acceptance 09] multi-class mean mAP, UNN vs classic k-NN: {} ({:.4} vs {:.4} over 5 seeds)",
        verdict(ok),
        mean_unn,
        mean_classic
    );
    assert!(ok, "UNN {mean_unn:.4} vs classic {mean_classic:.4}");
}

#[test]
fn acceptance_10_pipelines_are_bit_deterministic() {
    let run_pipeline = |dir: &std::path::Path| {
        let d = dir.to_str().unwrap().to_string();
        let args = |v: Vec<&str>| -> i32 { unn::cli::run(v.iter().map(|s| s.to_string())) };
        assert_eq!(
            args(vec![
                "unn", "gen", "ripley", "--train", "80", "--test", "120", "--seed", "4",
                "--out-dir", &d
            ]),
            0
        );
        let train_csv = format!("{d}/ripley-train.csv");
        let test_csv = format!("{d}/ripley-test.csv");
        let model = format!("{d}/m.model");
        assert_eq!(
            args(vec![
                "unn", "train", "--data", &train_csv, "--model", &model, "--k", "5",
                "--iters", "300", "--seed", "6"
            ]),
            0
        );
        let filtered = format!("{d}/f.model");
        assert_eq!(
            args(vec![
                "unn", "filter", "--model", &model, "--out", &filtered, "--theta", "0.5"
            ]),
            0
        );
        let report = format!("{d}/report.json");
        assert_eq!(
            args(vec![
                "unn", "eval", "--model", &filtered, "--data", &test_csv, "--report", &report
            ]),
            0
        );
        let pred = format!("{d}/pred.csv");
        assert_eq!(
            args(vec![
                "unn", "predict", "--model", &filtered, "--data", &test_csv, "--out", &pred
            ]),
            0
        );
        let cv = format!("{d}/cv.json");
        assert_eq!(
            args(vec![
                "unn", "cv", "--data", &train_csv, "--folds", "3", "--k", "5", "--iters",
                "100", "--seed", "2", "--theta", "1.0", "--report", &cv
            ]),
            0
        );
    };
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    run_pipeline(dir_a.path());
    run_pipeline(dir_b.path());
    let mut compared = 0usize;
    let mut all_equal = true;
    for name in [
        "ripley-train.csv",
        "ripley-test.csv",
        "ripley-meta.json",
        "m.model",
        "m.model.diagnostics.csv",
        "f.model",
        "report.json",
        "pred.csv",
        "cv.json",
    ] {
        let a = std::fs::read(dir_a.path().join(name)).unwrap();
        let b = std::fs::read(dir_b.path().join(name)).unwrap();
        if a != b {
            all_equal = false;
            eprintln!("mismatch in {name}");
        }
        compared += 1;
    }
    println!(
        "[acceptance 10] bit-identical reruns: {} ({} files compared)",
        verdict(all_equal),
        compared
    );
    assert!(all_equal);
}
