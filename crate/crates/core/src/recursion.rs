//! The two-step recursion
//!
//! ```text
//! θ_{n+1} = (2n/(n+1))θ_n − ((n−1)/(n+1))θ_{n−1}
//!           − ((nα+β)/(n+1)) f′( (n(α+β)/(nα+β))θ_n − ((n−1)β/(nα+β))θ_{n−1} )
//! ```
//!
//! started with `θ_1 = θ_0`. In terms of `η_n = n(θ_n − θ_*)` it is the
//! constant-coefficient recursion `η_{n+1} = (I−αH)η_n + (I−βH)(η_n − η_{n−1})`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::check_dim;
use crate::moments::NoiseStats;
use crate::oracle::GradientOracle;
use crate::quadratic::{norm, QuadraticProblem};
use crate::{Error, Result};

/// The pair `(α, β)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepPair {
    pub alpha: f64,
    pub beta: f64,
}

impl StepPair {
    pub const fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }

    /// Noise weight `nα + β`.
    #[inline]
    pub fn weight(&self, n: u64) -> f64 {
        n as f64 * self.alpha + self.beta
    }

    pub fn is_finite(&self) -> bool {
        self.alpha.is_finite() && self.beta.is_finite()
    }
}

/// Named rules producing a step pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleKind {
    /// Averaged gradient descent, `(0, γ)`.
    AvGd {
        gamma: f64,
    },
    /// Nesterov acceleration, `(γ, γ)`.
    AccGd {
        gamma: f64,
    },
    /// Heavy ball, `(γ, 0)`.
    HeavyBall {
        gamma: f64,
    },
    Custom {
        alpha: f64,
        beta: f64,
    },
    /// `(1/(L N^a), 1/L)`.
    BiasVariance {
        a: f64,
    },
    /// Optimal trade-off for noise with bounded `tr C`.
    OptimalUnstructured,
    /// Optimal trade-off for noise dominated by `σ²H`.
    OptimalStructured,
}

impl ScheduleKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScheduleKind::AvGd { .. } => "av_gd",
            ScheduleKind::AccGd { .. } => "acc_gd",
            ScheduleKind::HeavyBall { .. } => "heavy_ball",
            ScheduleKind::Custom { .. } => "custom",
            ScheduleKind::BiasVariance { .. } => "bias_variance",
            ScheduleKind::OptimalUnstructured => "optimal_unstructured",
            ScheduleKind::OptimalStructured => "optimal_structured",
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        match *self {
            ScheduleKind::AvGd { gamma } | ScheduleKind::AccGd { gamma } | ScheduleKind::HeavyBall { gamma } => {
                positive("gamma", gamma)
            }
            ScheduleKind::Custom { alpha, beta } => {
                if alpha.is_finite() && beta.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter("custom pair must be finite".into()))
                }
            }
            ScheduleKind::BiasVariance { a } => {
                if (0.0..=1.0).contains(&a) {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "bias-variance exponent must lie in [0, 1], got {a}"
                    )))
                }
            }
            ScheduleKind::OptimalUnstructured | ScheduleKind::OptimalStructured => Ok(()),
        }
    }
}

/// A schedule kind plus its horizon.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub horizon: u64,
    /// Substitute the current step index for the horizon in horizon-dependent rules.
    #[serde(default)]
    pub anytime: bool,
}

impl Schedule {
    pub fn new(kind: ScheduleKind, horizon: u64) -> Self {
        Self {
            kind,
            horizon,
            anytime: false,
        }
    }

    pub fn anytime(kind: ScheduleKind, horizon: u64) -> Self {
        Self {
            kind,
            horizon,
            anytime: true,
        }
    }

    /// Pair used at step `n`.
    pub fn pair_at(&self, l: f64, r: f64, stats: Option<&NoiseStats>, n: u64) -> Result<StepPair> {
        let index = if self.anytime { n } else { self.horizon };
        resolve_schedule(self.kind, l, r, stats, index)
    }

    /// A per-step rule with all pairs resolved up front (constant unless `anytime`).
    pub fn resolver(&self, l: f64, r: f64, stats: Option<&NoiseStats>) -> Result<impl Fn(u64) -> StepPair> {
        let fixed = self.pair_at(l, r, stats, self.horizon)?;
        // validate the anytime path once so the closure cannot fail
        if self.anytime {
            self.pair_at(l, r, stats, 1)?;
        }
        let (schedule, stats) = (*self, stats.copied());
        Ok(move |n: u64| {
            if schedule.anytime {
                resolve_schedule(schedule.kind, l, r, stats.as_ref(), n.max(1)).unwrap_or(fixed)
            } else {
                fixed
            }
        })
    }
}

/// Resolves a schedule to `(α, β)` for smoothness `l`, distance `r = ‖θ_0 − θ_*‖` and horizon `n`.
pub fn resolve_schedule(kind: ScheduleKind, l: f64, r: f64, stats: Option<&NoiseStats>, n: u64) -> Result<StepPair> {
    kind.validate()?;
    if n < 1 {
        return Err(Error::InvalidParameter("horizon must be >= 1".into()));
    }
    let nf = n as f64;
    let needs_l = !matches!(
        kind,
        ScheduleKind::AvGd { .. }
            | ScheduleKind::AccGd { .. }
            | ScheduleKind::HeavyBall { .. }
            | ScheduleKind::Custom { .. }
    );
    if needs_l && !(l > 0.0 && l.is_finite()) {
        return Err(Error::InvalidParameter(format!("L must be positive, got {l}")));
    }
    let pair = match kind {
        ScheduleKind::AvGd { gamma } => StepPair::new(0.0, gamma),
        ScheduleKind::AccGd { gamma } => StepPair::new(gamma, gamma),
        ScheduleKind::HeavyBall { gamma } => StepPair::new(gamma, 0.0),
        ScheduleKind::Custom { alpha, beta } => StepPair::new(alpha, beta),
        ScheduleKind::BiasVariance { a } => StepPair::new(1.0 / (l * nf.powf(a)), 1.0 / l),
        ScheduleKind::OptimalUnstructured => {
            let trace_c = stats.and_then(|s| s.trace_c).ok_or(Error::MissingNoiseStatistics {
                schedule: "optimal_unstructured",
                needed: "trace_c",
            })?;
            let alpha = (r / (2.0 * trace_c.sqrt() * nf.powf(1.5))).min(1.0 / l);
            StepPair::new(alpha, (nf * alpha).min(1.0 / l))
        }
        ScheduleKind::OptimalStructured => {
            let tr = stats
                .and_then(|s| s.trace_c_hinv)
                .ok_or(Error::MissingNoiseStatistics {
                    schedule: "optimal_structured",
                    needed: "trace_c_hinv",
                })?;
            let alpha = (r / ((l * tr).sqrt() * nf)).min(1.0 / l);
            StepPair::new(alpha, (nf * alpha).min(1.0 / l))
        }
    };
    Ok(pair)
}

/// `(θ_n, θ_{n−1}, n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct IterateState {
    pub current: Vec<f64>,
    pub previous: Vec<f64>,
    pub n: u64,
}

impl IterateState {
    /// `θ_1 = θ_0`.
    pub fn start(theta0: &[f64]) -> Self {
        Self {
            current: theta0.to_vec(),
            previous: theta0.to_vec(),
            n: 1,
        }
    }
}

/// Reusable buffers for [`step_in_place`].
#[derive(Clone, Debug)]
pub struct StepBuffers {
    point: Vec<f64>,
    grad: Vec<f64>,
}

impl StepBuffers {
    pub fn new(d: usize) -> Self {
        Self {
            point: vec![0.0; d],
            grad: vec![0.0; d],
        }
    }
}

/// Oracle query point coefficients `(n(α+β)/(nα+β), −(n−1)β/(nα+β))`, or `None` when `nα+β = 0`.
pub fn query_coefficients(pair: StepPair, n: u64) -> Option<(f64, f64)> {
    let w = pair.weight(n);
    if w == 0.0 {
        return None;
    }
    let nf = n as f64;
    Some((nf * (pair.alpha + pair.beta) / w, -(nf - 1.0) * pair.beta / w))
}

/// Advances `state` by one step, reusing `buf`.
pub fn step_in_place<O: GradientOracle + ?Sized>(
    oracle: &mut O,
    state: &mut IterateState,
    pair: StepPair,
    buf: &mut StepBuffers,
) -> Result<()> {
    let d = state.current.len();
    check_dim(d, state.previous.len())?;
    check_dim(oracle.dim(), d)?;
    if buf.point.len() != d {
        *buf = StepBuffers::new(d);
    }
    let n = state.n;
    let nf = n as f64;
    let c_cur = 2.0 * nf / (nf + 1.0);
    let c_prev = -(nf - 1.0) / (nf + 1.0);
    let w = pair.weight(n);
    let has_grad = if let Some((a, b)) = query_coefficients(pair, n) {
        for ((p, &x), &y) in buf.point.iter_mut().zip(&state.current).zip(&state.previous) {
            *p = a * x + b * y;
        }
        oracle.query(&buf.point, n, &mut buf.grad)?;
        if buf.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { step: n });
        }
        true
    } else {
        false
    };
    let c_grad = w / (nf + 1.0);
    // θ_{n+1} overwrites θ_{n−1}, then the two buffers swap roles
    for i in 0..d {
        let g = if has_grad { c_grad * buf.grad[i] } else { 0.0 };
        state.previous[i] = c_cur * state.current[i] + c_prev * state.previous[i] - g;
    }
    std::mem::swap(&mut state.current, &mut state.previous);
    state.n += 1;
    Ok(())
}

/// One step of the θ-form recursion.
pub fn step<O: GradientOracle + ?Sized>(oracle: &mut O, state: &IterateState, pair: StepPair) -> Result<IterateState> {
    let mut next = state.clone();
    let mut buf = StepBuffers::new(state.current.len());
    step_in_place(oracle, &mut next, pair, &mut buf)?;
    Ok(next)
}

/// Run metadata.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub label: String,
    pub seed: Option<u64>,
    pub horizon: u64,
}

/// Excess values `f(θ_n) − f_*` for `n = 0..=N` (entry 0 is the starting point).
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub excess: Vec<f64>,
    pub theta_norm: Vec<f64>,
    pub iterates: Option<Vec<Vec<f64>>>,
    pub meta: RunMeta,
    /// First step whose iterate was non-finite; later entries are `+∞`.
    pub diverged: Option<u64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.excess.len()
    }

    pub fn is_empty(&self) -> bool {
        self.excess.is_empty()
    }

    pub fn last(&self) -> f64 {
        *self.excess.last().unwrap_or(&f64::NAN)
    }

    /// CSV with columns `n,excess,theta_norm`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["n", "excess", "theta_norm"])?;
        for (n, (e, t)) in self.excess.iter().zip(&self.theta_norm).enumerate() {
            w.write_record(&[n.to_string(), e.to_string(), t.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Incrementally builds a [`Trajectory`].
#[derive(Debug)]
pub(crate) struct Recorder<'p> {
    problem: &'p QuadraticProblem,
    traj: Trajectory,
}

impl<'p> Recorder<'p> {
    pub(crate) fn new(problem: &'p QuadraticProblem, horizon: u64, keep_iterates: bool) -> Self {
        let cap = horizon as usize + 1;
        Self {
            problem,
            traj: Trajectory {
                excess: Vec::with_capacity(cap),
                theta_norm: Vec::with_capacity(cap),
                iterates: keep_iterates.then(|| Vec::with_capacity(cap)),
                meta: RunMeta {
                    horizon,
                    ..RunMeta::default()
                },
                diverged: None,
            },
        }
    }

    /// Records an iterate; returns false once the run has diverged.
    pub(crate) fn push(&mut self, theta: &[f64]) -> bool {
        let index = self.traj.excess.len() as u64;
        let e = self.problem.excess_unchecked(theta);
        let finite = e.is_finite() && theta.iter().all(|v| v.is_finite());
        if finite {
            self.traj.excess.push(e);
            self.traj.theta_norm.push(norm(theta));
        } else {
            self.traj.diverged.get_or_insert(index);
            self.traj.excess.push(f64::INFINITY);
            self.traj.theta_norm.push(f64::INFINITY);
        }
        if let Some(it) = &mut self.traj.iterates {
            it.push(theta.to_vec());
        }
        finite
    }

    pub(crate) fn mark_diverged(&mut self) {
        let index = self.traj.excess.len() as u64;
        self.traj.diverged.get_or_insert(index);
    }

    pub(crate) fn diverged(&self) -> bool {
        self.traj.diverged.is_some()
    }

    /// Pads with `+∞` up to the horizon and returns the trajectory.
    pub(crate) fn finish(mut self, label: impl Into<String>, seed: Option<u64>) -> Trajectory {
        let target = self.traj.meta.horizon as usize + 1;
        while self.traj.excess.len() < target {
            self.traj.excess.push(f64::INFINITY);
            self.traj.theta_norm.push(f64::INFINITY);
        }
        self.traj.meta.label = label.into();
        self.traj.meta.seed = seed;
        self.traj
    }
}

/// Options for [`run_with`].
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub label: String,
    pub seed: Option<u64>,
    pub keep_iterates: bool,
}

/// Runs `N − 1` steps from `θ_1 = θ_0` with a constant pair, recording `f(θ_n) − f_*`.
pub fn run<O: GradientOracle + ?Sized>(
    oracle: &mut O,
    problem: &QuadraticProblem,
    theta0: &[f64],
    pair: StepPair,
    horizon: u64,
) -> Result<Trajectory> {
    run_with(oracle, problem, theta0, |_| pair, horizon, &RunOptions::default())
}

/// As [`run`] with a per-step pair rule.
pub fn run_with<O, F>(
    oracle: &mut O,
    problem: &QuadraticProblem,
    theta0: &[f64],
    mut pair_at: F,
    horizon: u64,
    opts: &RunOptions,
) -> Result<Trajectory>
where
    O: GradientOracle + ?Sized,
    F: FnMut(u64) -> StepPair,
{
    if horizon < 1 {
        return Err(Error::InvalidParameter("horizon must be >= 1".into()));
    }
    check_dim(problem.dim(), theta0.len())?;
    let mut rec = Recorder::new(problem, horizon, opts.keep_iterates);
    let mut state = IterateState::start(theta0);
    let mut buf = StepBuffers::new(theta0.len());
    rec.push(&state.previous);
    rec.push(&state.current);
    while state.n < horizon && !rec.diverged() {
        let pair = pair_at(state.n);
        match step_in_place(oracle, &mut state, pair, &mut buf) {
            Ok(()) => {
                rec.push(&state.current);
            }
            Err(Error::NonFiniteGradient { .. }) => {
                rec.mark_diverged();
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(rec.finish(opts.label.clone(), opts.seed))
}

/// `η_{n+1} = (1−αh)η_n + (1−βh)(η_n − η_{n−1}) + (nα+β)ξ` per coordinate.
pub fn reduced_step(
    eta: &[f64],
    eta_prev: &[f64],
    pair: StepPair,
    h: &[f64],
    n: u64,
    noise: Option<&[f64]>,
) -> Vec<f64> {
    let w = pair.weight(n);
    (0..eta.len())
        .map(|i| {
            let xi = noise.map_or(0.0, |e| e[i]);
            (1.0 - pair.alpha * h[i]) * eta[i] + (1.0 - pair.beta * h[i]) * (eta[i] - eta_prev[i]) + w * xi
        })
        .collect()
}

/// Gradient descent `ψ_{n+1} = ψ_n − γ f′(ψ_n)` with online averaging of the iterates.
///
/// The averaged sequence is the unified recursion with pair `(0, γ)`; the k-th
/// gradient is requested with step index `k` so both see the same noise.
pub fn avgd_reference<O: GradientOracle + ?Sized>(
    gamma: f64,
    oracle: &mut O,
    problem: &QuadraticProblem,
    theta0: &[f64],
    horizon: u64,
) -> Result<Trajectory> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    if horizon < 1 {
        return Err(Error::InvalidParameter("horizon must be >= 1".into()));
    }
    check_dim(problem.dim(), theta0.len())?;
    let d = theta0.len();
    let mut rec = Recorder::new(problem, horizon, false);
    let mut psi = theta0.to_vec();
    let mut avg = theta0.to_vec();
    let mut grad = vec![0.0; d];
    rec.push(&avg);
    rec.push(&avg);
    for n in 1..horizon {
        if rec.diverged() {
            break;
        }
        oracle.query(&psi, n, &mut grad)?;
        let inv = 1.0 / (n as f64 + 1.0);
        for i in 0..d {
            psi[i] -= gamma * grad[i];
            avg[i] += (psi[i] - avg[i]) * inv;
        }
        rec.push(&avg);
    }
    Ok(rec.finish("av_gd_reference", None))
}
