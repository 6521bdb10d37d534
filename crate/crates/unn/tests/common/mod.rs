//! Shared independent oracles for the integration suites. Nothing here may
//! call the solver paths it is used to check.

use unn::dataset::{Dataset, RIPLEY_CENTERS, RIPLEY_VARIANCE};
use unn::neighbors::NeighborGraph;

/// Density-ratio Bayes classifier for the two-class Ripley mixture,
/// computed from the generator's published parameters.
pub fn ripley_bayes_label(x: f64, y: f64) -> usize {
    let density = |class: usize| -> f64 {
        RIPLEY_CENTERS[class]
            .iter()
            .map(|&(cx, cy)| {
                let d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                (-d2 / (2.0 * RIPLEY_VARIANCE)).exp()
            })
            .sum::<f64>()
    };
    if density(0) >= density(1) {
        0
    } else {
        1
    }
}

pub fn ripley_bayes_error(ds: &Dataset) -> f64 {
    let wrong = (0..ds.len())
        .filter(|&i| {
            let f = ds.features(i);
            ripley_bayes_label(f[0], f[1]) != ds.label(i)
        })
        .count();
    wrong as f64 / ds.len() as f64
}

/// Independent minimizer of the class-`c` exponential objective
/// `(1/m) sum_i exp(-sum_j r_ij a_j)`: cyclic coordinate descent with
/// golden-section line searches over a wide fixed bracket. Returns the
/// objective value reached.
pub fn exp_coordinate_descent_min(ds: &Dataset, graph: &NeighborGraph, class: usize) -> f64 {
    let m = ds.len();
    let objective = |alpha: &[f64]| -> f64 {
        (0..m)
            .map(|i| {
                let rho: f64 = graph
                    .direct(i)
                    .iter()
                    .map(|&j| ds.y(i, class) * ds.y(j, class) * alpha[j])
                    .sum();
                (-rho).exp()
            })
            .sum::<f64>()
            / m as f64
    };
    let mut alpha = vec![0.0; m];
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    for _ in 0..4000 {
        let before = objective(&alpha);
        for j in 0..m {
            if graph.reciprocal(j).is_empty() {
                continue;
            }
            let eval = |v: f64, alpha: &mut Vec<f64>| -> f64 {
                let old = alpha[j];
                alpha[j] = v;
                let y = objective(alpha);
                alpha[j] = old;
                y
            };
            let (mut lo, mut hi) = (-60.0f64, 60.0);
            let mut x1 = hi - phi * (hi - lo);
            let mut x2 = lo + phi * (hi - lo);
            let mut f1 = eval(x1, &mut alpha);
            let mut f2 = eval(x2, &mut alpha);
            while hi - lo > 1e-12 {
                if f1 <= f2 {
                    hi = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = hi - phi * (hi - lo);
                    f1 = eval(x1, &mut alpha);
                } else {
                    lo = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = lo + phi * (hi - lo);
                    f2 = eval(x2, &mut alpha);
                }
            }
            alpha[j] = 0.5 * (lo + hi);
        }
        if before - objective(&alpha) < 1e-14 {
            break;
        }
    }
    objective(&alpha)
}
