//! Surrogate losses and the per-prototype leveraging-step solvers.
//!
//! Each loss ψ is a convex, classification-calibrated upper bound used in
//! place of the 0/1 loss. Training maintains one weight per example,
//! `w_i = -ψ'(ρ_i)` where `ρ_i` is the example's current edge, so the three
//! closed-form step rules and the three weight-update rules below are all
//! instances of a single edge-shift law: updating a weight is the same as
//! shifting its edge by `δ·r`.

use crate::error::{Error, Result};

/// The supported surrogate losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// ψ(x) = exp(-x)
    Exponential,
    /// ψ(x) = (1 - x)^2
    Squared,
    /// ψ(x) = log(1 + exp(-x)), natural log
    Logistic,
}

impl LossKind {
    /// CLI/config spelling: `exp` | `squared` | `logistic`.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "exp" => Ok(LossKind::Exponential),
            "squared" => Ok(LossKind::Squared),
            "logistic" => Ok(LossKind::Logistic),
            other => Err(Error::domain(format!(
                "unknown loss '{other}' (expected exp | squared | logistic)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Exponential => "exp",
            LossKind::Squared => "squared",
            LossKind::Logistic => "logistic",
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Weights larger than this are clamped (exponential loss only) and the
/// event is reported to the caller through [`update_weight`]'s return.
pub const WEIGHT_CLAMP: f64 = 1e300;

/// Evaluate the surrogate loss at edge `x`.
pub fn loss_value(kind: LossKind, x: f64) -> f64 {
    match kind {
        LossKind::Exponential => (-x).exp(),
        LossKind::Squared => (1.0 - x) * (1.0 - x),
        // Overflow-safe in both tails.
        LossKind::Logistic => {
            if x >= 0.0 {
                (-x).exp().ln_1p()
            } else {
                -x + x.exp().ln_1p()
            }
        }
    }
}

/// The weight an example carries at edge `rho`: `w = -ψ'(rho)`.
///
/// At `rho = 0` this gives the training initialization: 1 for exponential,
/// 2 for squared, 1/2 for logistic.
pub fn weight_from_edge(kind: LossKind, rho: f64) -> f64 {
    match kind {
        LossKind::Exponential => (-rho).exp(),
        LossKind::Squared => 2.0 * (1.0 - rho),
        LossKind::Logistic => stable_sigmoid(-rho),
    }
}

/// 1/(1+e^(-t)) computed without overflow for any t.
fn stable_sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// How a leveraging step was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeltaMethod {
    ClosedForm,
    RootFind,
}

/// A solved leveraging step.
#[derive(Debug, Clone, Copy)]
pub struct DeltaSolution {
    pub delta: f64,
    pub method: DeltaMethod,
    /// Stationarity residual; exactly 0 for closed forms.
    pub residual: f64,
}

/// Closed-form leveraging step from the two signed partial weight sums.
///
/// `r_norm1` (the L1 norm of the edge-matrix column) is only used by the
/// squared loss. Callers smooth the sums first when either is zero under
/// the exponential or logistic loss.
pub fn solve_delta_closed(
    kind: LossKind,
    w_plus: f64,
    w_minus: f64,
    r_norm1: f64,
) -> Result<DeltaSolution> {
    if w_plus == 0.0 && w_minus == 0.0 {
        return Err(Error::domain(
            "both partial weight sums are zero (no reciprocal coverage)",
        ));
    }
    let delta = match kind {
        LossKind::Exponential => 0.5 * (w_plus / w_minus).ln(),
        LossKind::Squared => {
            if r_norm1 <= 0.0 {
                return Err(Error::domain(
                    "squared-loss step needs a positive edge-column L1 norm",
                ));
            }
            (w_plus - w_minus) / (2.0 * r_norm1)
        }
        LossKind::Logistic => (w_plus / w_minus).ln(),
    };
    Ok(DeltaSolution {
        delta,
        method: DeltaMethod::ClosedForm,
        residual: 0.0,
    })
}

/// Residual tolerance for [`solve_delta_exact`].
pub const DELTA_ROOT_TOL: f64 = 1e-12;

/// Bracket expansion stops at this magnitude; beyond it the objective is
/// considered divergent and the caller must smooth.
pub const DELTA_BRACKET_LIMIT: f64 = 50.0;

/// Exact leveraging step: the root of the stationarity function
/// `g(δ) = Σ_i r_i · ψ'(rho_i + δ·r_i)`.
///
/// `edges` holds one `(r, rho)` pair per reciprocal neighbor. `g` is
/// non-decreasing (ψ is convex), so the root is found by bisection after
/// bracket expansion. Exponential and logistic objectives with single-signed
/// `r` have no stationary point and return [`Error::Divergence`].
pub fn solve_delta_exact(kind: LossKind, edges: &[(f64, f64)]) -> Result<DeltaSolution> {
    if edges.iter().all(|&(r, _)| r == 0.0) {
        return Err(Error::domain("all edge entries are zero"));
    }
    let g = |delta: f64| -> f64 {
        edges
            .iter()
            .map(|&(r, rho)| {
                if r == 0.0 {
                    0.0
                } else {
                    // ψ'(x) = -weight_from_edge(x)
                    -r * weight_from_edge(kind, rho + delta * r)
                }
            })
            .sum()
    };

    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    let (mut glo, mut ghi) = (g(lo), g(hi));
    if glo == 0.0 {
        return Ok(root_solution(lo, 0.0));
    }
    if ghi == 0.0 {
        return Ok(root_solution(hi, 0.0));
    }
    // g is non-decreasing: a sign change means glo < 0 < ghi.
    while glo > 0.0 || ghi < 0.0 {
        if lo <= -DELTA_BRACKET_LIMIT && hi >= DELTA_BRACKET_LIMIT {
            return Err(Error::Divergence(format!(
                "no stationary point within |delta| <= {DELTA_BRACKET_LIMIT} \
                 (single-signed edges; smoothing required)"
            )));
        }
        lo = (lo * 2.0).max(-DELTA_BRACKET_LIMIT);
        hi = (hi * 2.0).min(DELTA_BRACKET_LIMIT);
        glo = g(lo);
        ghi = g(hi);
        if glo == 0.0 {
            return Ok(root_solution(lo, 0.0));
        }
        if ghi == 0.0 {
            return Ok(root_solution(hi, 0.0));
        }
    }

    // Bisect to machine width, then keep whichever endpoint has the
    // smaller residual.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let gm = g(mid);
        if gm == 0.0 {
            return Ok(root_solution(mid, 0.0));
        }
        if gm < 0.0 {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
            ghi = gm;
        }
    }
    let (delta, residual) = if glo.abs() <= ghi.abs() {
        (lo, glo)
    } else {
        (hi, ghi)
    };
    Ok(root_solution(delta, residual))
}

fn root_solution(delta: f64, residual: f64) -> DeltaSolution {
    DeltaSolution {
        delta,
        method: DeltaMethod::RootFind,
        residual,
    }
}

/// Shift one maintained weight by a step `delta` along edge entry `r`.
///
/// Satisfies `update_weight(kind, weight_from_edge(kind, rho), delta, r)
/// = weight_from_edge(kind, rho + delta*r)` for every loss.
///
/// Note the logistic denominator carries `1 - w(1 - e^(-δr))`: with
/// `w = σ(-ρ)` this reproduces `σ(-(ρ + δr))` exactly, which a
/// `1 - w(1 + e^(-δr))` denominator does not.
pub fn update_weight(kind: LossKind, w: f64, delta: f64, r: f64) -> Result<f64> {
    match kind {
        LossKind::Exponential => {
            let next = w * (-delta * r).exp();
            if next > WEIGHT_CLAMP {
                log::warn!("exponential weight clamped at {WEIGHT_CLAMP:e}");
                Ok(WEIGHT_CLAMP)
            } else {
                Ok(next)
            }
        }
        LossKind::Squared => Ok(w - 2.0 * delta * r),
        LossKind::Logistic => {
            if !(w > 0.0 && w < 1.0) {
                return Err(Error::domain(format!(
                    "logistic weight must lie in (0, 1), got {w}"
                )));
            }
            let e = (-delta * r).exp();
            Ok(w * e / (1.0 - w * (1.0 - e)))
        }
    }
}
