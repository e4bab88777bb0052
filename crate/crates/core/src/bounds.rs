//! Upper bounds on iterates and function values, the adversarial one-dimensional
//! lower-bound constructions, and the two Lyapunov functions used in the analysis.
//!
//! Every bound is returned as a [`BoundReport`] listing the individual terms.
//! Terms with a vanishing step size in a denominator are dropped rather than
//! reported as infinite, and a precondition violation is reported, not raised.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::moments::NoiseStats;
use crate::recursion::{reduced_step, resolve_schedule, ScheduleKind, StepPair};
use crate::spectral::{discriminant, midpoint};
use crate::Result;

/// One labelled term of a bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundTerm {
    pub label: String,
    pub value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Combine {
    Min,
    Max,
    Sum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub value: f64,
    pub combine: Combine,
    pub components: Vec<BoundTerm>,
    pub preconditions_met: bool,
    /// The violated condition, when `preconditions_met` is false.
    pub violated: Option<String>,
}

impl BoundReport {
    fn new(combine: Combine, components: Vec<BoundTerm>, violated: Option<String>) -> Self {
        let value = match combine {
            Combine::Min => components.iter().map(|t| t.value).fold(f64::INFINITY, f64::min),
            Combine::Max => components.iter().map(|t| t.value).fold(f64::NEG_INFINITY, f64::max),
            Combine::Sum => components.iter().map(|t| t.value).sum(),
        };
        Self {
            value,
            combine,
            components,
            preconditions_met: violated.is_none(),
            violated,
        }
    }

    pub fn component(&self, label: &str) -> Option<f64> {
        self.components.iter().find(|t| t.label == label).map(|t| t.value)
    }
}

fn term(label: &str, value: f64) -> BoundTerm {
    BoundTerm {
        label: label.to_string(),
        value,
    }
}

/// Checks `0 ≤ α ≤ 1/h` and `0 ≤ β ≤ beta_cap`.
fn check_region(pair: StepPair, h: f64, beta_cap: f64, cap_text: &str) -> Option<String> {
    let StepPair { alpha, beta } = pair;
    if !(alpha >= 0.0) {
        Some(format!("alpha >= 0 (alpha = {alpha})"))
    } else if alpha > 1.0 / h {
        Some(format!("alpha <= 1/L (alpha = {alpha}, 1/L = {})", 1.0 / h))
    } else if !(beta >= 0.0) {
        Some(format!("beta >= 0 (beta = {beta})"))
    } else if beta > beta_cap {
        Some(format!("beta <= {cap_text} (beta = {beta}, cap = {beta_cap})"))
    } else {
        None
    }
}

fn deterministic_region(pair: StepPair, h: f64) -> Option<String> {
    check_region(pair, h, 2.0 / h - pair.alpha, "2/L - alpha")
}

/// Bound on `(η_n)²` for one mode, valid for `α ≤ 1/h`, `0 ≤ β ≤ 2/h − α`.
pub fn iterate_bound(pair: StepPair, h: f64, eta1: f64, n: u64) -> BoundReport {
    let StepPair { alpha, beta } = pair;
    let e2 = eta1 * eta1;
    let s = alpha + beta;
    let mut terms = Vec::new();
    if alpha > 0.0 {
        terms.push(term("alpha", 2.0 * e2 / (alpha * h)));
    }
    if s > 0.0 {
        terms.push(term("linear", 8.0 * e2 * n as f64 / (s * h)));
        terms.push(term("constant", 16.0 * e2 / (s * s * h * h)));
    }
    BoundReport::new(Combine::Min, terms, deterministic_region(pair, h))
}

/// Noiseless bound `min{r²/(αn²), 4r²/((α+β)n)}` on `f(θ_n) − f_*`.
pub fn function_bound_noiseless(pair: StepPair, l: f64, r: f64, n: u64) -> BoundReport {
    let StepPair { alpha, beta } = pair;
    let nf = n as f64;
    let r2 = r * r;
    let mut terms = Vec::new();
    if alpha > 0.0 {
        terms.push(term("accelerated", r2 / (alpha * nf * nf)));
    }
    if alpha + beta > 0.0 {
        terms.push(term("averaged", 4.0 * r2 / ((alpha + beta) * nf)));
    }
    BoundReport::new(Combine::Min, terms, deterministic_region(pair, l))
}

/// Bound on `E f(θ_N) − f_*` for noise with covariance `C`.
pub fn function_bound_unstructured(pair: StepPair, l: f64, r: f64, trace_c: f64, n: u64) -> BoundReport {
    let StepPair { alpha, beta } = pair;
    let nf = n as f64;
    let r2 = r * r;
    let w = alpha * nf + beta;
    let mut terms = Vec::new();
    if alpha > 0.0 {
        terms.push(term(
            "accelerated",
            r2 / (alpha * nf * nf) + w * w / (alpha * nf) * trace_c,
        ));
    }
    if alpha + beta > 0.0 {
        terms.push(term(
            "averaged",
            4.0 * r2 / ((alpha + beta) * nf) + 4.0 * w * w / (alpha + beta) * trace_c,
        ));
    }
    BoundReport::new(Combine::Min, terms, deterministic_region(pair, l))
}

/// Bound on `E f(θ_N) − f_*` for noise dominated by `σ²H`, valid for `β ≤ 3/(2L) − α/2`.
///
/// The second bias term is `4r²/((α+β)N)`, the noiseless averaged term; this is the
/// form that reduces to `4Lr²/N` at `(0, 1/L)`.
pub fn function_bound_structured(pair: StepPair, l: f64, r: f64, trace_c_hinv: f64, n: u64) -> BoundReport {
    let StepPair { alpha, beta } = pair;
    let nf = n as f64;
    let r2 = r * r;
    let w = alpha * nf + beta;
    let s = alpha + beta;
    let mut terms = Vec::new();
    if alpha > 0.0 && beta > 0.0 {
        terms.push(term(
            "accelerated",
            r2 / (nf * nf * alpha) + w * w / (alpha * beta * nf * nf) * trace_c_hinv,
        ));
    }
    if s > 0.0 {
        terms.push(term(
            "averaged",
            4.0 * r2 / (s * nf) + 8.0 * w * w * trace_c_hinv / (s * s * nf),
        ));
    }
    let violated = check_region(pair, l, 1.5 / l - alpha / 2.0, "3/(2L) - alpha/2");
    BoundReport::new(Combine::Min, terms, violated)
}

fn positive_inputs(items: &[(&str, f64)]) -> Option<String> {
    items
        .iter()
        .find(|(_, v)| !(*v > 0.0 && v.is_finite()))
        .map(|(name, v)| format!("{name} > 0 ({name} = {v})"))
}

/// Trade-off for unstructured noise: the pair and `2Lr²/N² + 4√(tr C)·r/√N`.
pub fn tradeoff_bound_unstructured(r: f64, trace_c: f64, n: u64, l: f64) -> Result<(StepPair, BoundReport)> {
    let pair = resolve_schedule(
        ScheduleKind::OptimalUnstructured,
        l,
        r,
        Some(&NoiseStats::unstructured(trace_c)),
        n,
    )?;
    let nf = n as f64;
    let terms = vec![
        term("bias", 2.0 * l * r * r / (nf * nf)),
        term("variance", 4.0 * trace_c.sqrt() * r / nf.sqrt()),
    ];
    let violated = positive_inputs(&[("r", r), ("L", l)]);
    Ok((pair, BoundReport::new(Combine::Sum, terms, violated)))
}

/// Trade-off for structured noise: the pair and `max{5 tr/N, 5√(tr·L)·r/N, 2r²L/N²}`.
pub fn tradeoff_bound_structured(r: f64, trace_c_hinv: f64, n: u64, l: f64) -> Result<(StepPair, BoundReport)> {
    let pair = resolve_schedule(
        ScheduleKind::OptimalStructured,
        l,
        r,
        Some(&NoiseStats::structured(trace_c_hinv)),
        n,
    )?;
    let nf = n as f64;
    let terms = vec![
        term("variance", 5.0 * trace_c_hinv / nf),
        term("mixed", 5.0 * (trace_c_hinv * l).sqrt() * r / nf),
        term("bias", 2.0 * r * r * l / (nf * nf)),
    ];
    let violated = positive_inputs(&[("r", r), ("L", l)]);
    Ok((pair, BoundReport::new(Combine::Max, terms, violated)))
}

/// Per-mode bound on `(1/n²)·h·E(η_n)²` when the mode starts at its optimum.
pub fn proposition_noise_bound(pair: StepPair, h: f64, c: f64, n: u64) -> BoundReport {
    let StepPair { alpha, beta } = pair;
    let nf = n as f64;
    let w = nf * alpha + beta;
    let s = alpha + beta;
    let margin = 4.0 - (alpha + 2.0 * beta) * h;
    let mut terms = Vec::new();
    if alpha > 0.0 && beta > 0.0 && margin > 0.0 {
        terms.push(term(
            "structured_accelerated",
            2.0 * w * w / (alpha * beta * margin * nf * nf) * c / h,
        ));
    }
    if s > 0.0 {
        terms.push(term("structured_averaged", 16.0 * w * w / (nf * s * s) * c / h));
    }
    if alpha > 0.0 {
        terms.push(term("accelerated", 2.0 * w * w / (nf * alpha) * c));
    }
    if s > 0.0 {
        terms.push(term("averaged", 8.0 * w * w / s * c));
    }
    BoundReport::new(Combine::Min, terms, deterministic_region(pair, h))
}

/// Upper bound on `Σ_k U(k)²`: `(2−βh)/(4αβh²(1−(α/4+β/2)h))`.
pub fn unit_response_energy_bound(pair: StepPair, h: f64) -> f64 {
    let StepPair { alpha, beta } = pair;
    (2.0 - beta * h) / (4.0 * alpha * beta * h * h * (1.0 - (alpha / 4.0 + beta / 2.0) * h))
}

/// Limit of `α n²·excess` for the first construction.
pub fn lower_bound_limit_first(r: f64) -> f64 {
    0.5 * r * r
}

/// Limit of `n(α+β)·excess` for the second construction.
pub fn lower_bound_limit_second(r: f64) -> f64 {
    let t = 1.0 - (-2.0f64).exp();
    t * t * r * r / 4.0
}

/// Curvature `π²/(4α n²)` making the first term of the noiseless bound tight at step `n`.
pub fn lower_bound_curvature_first(alpha: f64, n: u64) -> f64 {
    let nf = n as f64;
    PI * PI / (4.0 * alpha * nf * nf)
}

/// Curvature `2/(n(α+β)) + 4α/(α+β)²` making the second term tight at step `n`.
pub fn lower_bound_curvature_second(alpha: f64, beta: f64, n: u64) -> f64 {
    let s = alpha + beta;
    2.0 / (n as f64 * s) + 4.0 * alpha / (s * s)
}

/// Which of the two constructions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LowerBoundRegime {
    First,
    Second,
}

/// One evaluation of a lower-bound construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundPoint {
    pub n: u64,
    pub curvature: f64,
    pub scaled_excess: f64,
    pub limit: f64,
    pub rel_error: f64,
}

/// Runs the noiseless recursion for `n` on `f(θ) = ½cθ²` with the regime's curvature `c`,
/// started at distance `r`, and scales the final excess.
pub fn lower_bound_point(regime: LowerBoundRegime, pair: StepPair, r: f64, n: u64) -> LowerBoundPoint {
    let (curvature, scale, limit) = match regime {
        LowerBoundRegime::First => (
            lower_bound_curvature_first(pair.alpha, n),
            pair.alpha * (n as f64).powi(2),
            lower_bound_limit_first(r),
        ),
        LowerBoundRegime::Second => (
            lower_bound_curvature_second(pair.alpha, pair.beta, n),
            n as f64 * (pair.alpha + pair.beta),
            lower_bound_limit_second(r),
        ),
    };
    let (mut prev, mut cur) = (0.0, r);
    for k in 1..n {
        let next = reduced_step(&[cur], &[prev], pair, &[curvature], k, None)[0];
        prev = cur;
        cur = next;
    }
    let nf = n as f64;
    let excess = 0.5 * curvature * (cur / nf).powi(2);
    let scaled_excess = scale * excess;
    LowerBoundPoint {
        n,
        curvature,
        scaled_excess,
        limit,
        rel_error: if limit > 0.0 {
            (scaled_excess - limit).abs() / limit
        } else {
            scaled_excess.abs()
        },
    }
}

/// `Θᵀ G₁ Θ` with `G₁ = [[1, α−1], [α−1, 1−α]]`, for `h = 1` and `Θ = (η_n, η_{n−1})`.
pub fn lyapunov_g1(alpha: f64, eta: f64, eta_prev: f64) -> f64 {
    eta * eta + 2.0 * (alpha - 1.0) * eta * eta_prev + (1.0 - alpha) * eta_prev * eta_prev
}

/// `(η_n − rη_{n−1})² − Δη_{n−1}²`, which the noiseless recursion scales by exactly `1 − βh`.
pub fn lyapunov_g2(pair: StepPair, h: f64, eta: f64, eta_prev: f64) -> f64 {
    let r = midpoint(pair, h);
    let d = discriminant(pair, h);
    (eta - r * eta_prev).powi(2) - d * eta_prev * eta_prev
}

/// Region where `G₁` is non-increasing (`h = 1`).
pub fn lyapunov_g1_region(pair: StepPair) -> bool {
    let StepPair { alpha, beta } = pair;
    if !(0.0..=1.0).contains(&alpha) {
        return false;
    }
    let s = (1.0 - alpha).sqrt();
    beta > 1.0 - s && beta < 1.0 + s
}

/// One row of a bounds sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsCheckRow {
    pub alpha: f64,
    pub beta: f64,
    #[serde(rename = "N")]
    pub n: u64,
    pub empirical: f64,
    pub bound: f64,
    pub slack: f64,
    pub preconditions_met: bool,
}

impl BoundsCheckRow {
    pub fn new(pair: StepPair, n: u64, empirical: f64, report: &BoundReport) -> Self {
        Self {
            alpha: pair.alpha,
            beta: pair.beta,
            n,
            empirical,
            bound: report.value,
            slack: report.value - empirical,
            preconditions_met: report.preconditions_met,
        }
    }
}

/// CSV with columns `alpha,beta,N,empirical,bound,slack,preconditions_met`.
pub fn write_bounds_csv<W: Write>(rows: &[BoundsCheckRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record(["alpha", "beta", "N", "empirical", "bound", "slack", "preconditions_met"])?;
    }
    w.flush()?;
    Ok(())
}
