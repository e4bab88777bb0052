//! Stochastic accelerated baselines: AC-SA, SAGE and accelerated regularized dual averaging.
//!
//! Each algorithm is implemented in its original multi-sequence form. On a
//! quadratic each one is also a momentum method
//! `x_{k+1} = y_k − δ_k g(y_k)`, `y_k = x_k + m_k(x_k − x_{k−1})`, and
//! [`reduce_to_unified`] returns the `(m_k, δ_k)` it induces.
//!
//! Trajectories record the main iterate after each gradient call: entry 0 is the
//! starting point and entry `k` follows the k-th call, which uses oracle step `k`.
//!
//! Presets (decreasing, horizon-free step sizes for noise with trace `tr C`):
//!
//! | method  | schedule |
//! |---------|----------|
//! | AC-SA   | `β_n = (n+1)/2`, `γ_n = ((n+1)/2)·min{1/(4L), (r/√tr C)(n+1)^{−3/2}}` |
//! | SAGE    | `α_n = 2/(n+1)`, `L_n = L + (√tr C / r)(n+1)^{3/2}` |
//! | Acc-RDA | `α_n = n/2`, `β_n = (√tr C / r)(n+1)^{3/2}` |
//!
//! All three induce the momentum `(n−2)/(n+1)` (Acc-RDA when `β` is constant).

use std::fmt;
use std::sync::Arc;

use crate::error::check_dim;
use crate::moments::MomentumCoeffs;
use crate::oracle::GradientOracle;
use crate::quadratic::QuadraticProblem;
use crate::recursion::{Recorder, Trajectory};
use crate::{Error, Result};

/// A positive sequence indexed from 1.
#[derive(Clone)]
pub struct Sequence {
    f: Arc<dyn Fn(u64) -> f64 + Send + Sync>,
    constant: Option<f64>,
}

impl Sequence {
    pub fn new(f: impl Fn(u64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            f: Arc::new(f),
            constant: None,
        }
    }

    pub fn constant(value: f64) -> Self {
        Self {
            f: Arc::new(move |_| value),
            constant: Some(value),
        }
    }

    #[inline]
    pub fn at(&self, n: u64) -> f64 {
        (self.f)(n)
    }

    pub fn as_constant(&self) -> Option<f64> {
        self.constant
    }
}

impl fmt::Debug for Sequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.constant {
            Some(c) => write!(f, "Sequence::constant({c})"),
            None => write!(f, "Sequence(1 ↦ {}, 2 ↦ {}, ..)", self.at(1), self.at(2)),
        }
    }
}

#[derive(Clone, Debug)]
pub enum BaselineKind {
    AcSa { gamma: Sequence, beta: Sequence },
    Sage { lipschitz: Sequence, alpha: Sequence },
    AccRda { l: f64, beta: Sequence, alpha: Sequence },
}

#[derive(Clone, Debug)]
pub struct BaselineConfig {
    pub kind: BaselineKind,
    pub horizon: u64,
    /// Record every iterate in the trajectory.
    pub keep_iterates: bool,
}

impl BaselineConfig {
    pub fn with_iterates(mut self) -> Self {
        self.keep_iterates = true;
        self
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            BaselineKind::AcSa { .. } => "ac_sa",
            BaselineKind::Sage { .. } => "sage",
            BaselineKind::AccRda { .. } => "acc_rda",
        }
    }

    /// AC-SA preset for noise of trace `trace_c`.
    pub fn acsa_preset(l: f64, r: f64, trace_c: f64, horizon: u64) -> Self {
        let ratio = r / trace_c.sqrt();
        Self {
            kind: BaselineKind::AcSa {
                beta: Sequence::new(|n| (n as f64 + 1.0) / 2.0),
                gamma: Sequence::new(move |n| {
                    let m = n as f64 + 1.0;
                    m / 2.0 * (1.0 / (4.0 * l)).min(ratio * m.powf(-1.5))
                }),
            },
            horizon,
            keep_iterates: false,
        }
    }

    /// SAGE preset for noise of trace `trace_c`.
    pub fn sage_preset(l: f64, r: f64, trace_c: f64, horizon: u64) -> Self {
        let ratio = trace_c.sqrt() / r;
        Self {
            kind: BaselineKind::Sage {
                alpha: Sequence::new(|n| 2.0 / (n as f64 + 1.0)),
                lipschitz: Sequence::new(move |n| l + ratio * (n as f64 + 1.0).powf(1.5)),
            },
            horizon,
            keep_iterates: false,
        }
    }

    /// Acc-RDA preset for noise of trace `trace_c` (time-varying regularization).
    pub fn accrda_preset(l: f64, r: f64, trace_c: f64, horizon: u64) -> Self {
        let ratio = trace_c.sqrt() / r;
        Self {
            kind: BaselineKind::AccRda {
                l,
                alpha: Sequence::new(|n| n as f64 / 2.0),
                beta: Sequence::new(move |n| ratio * (n as f64 + 1.0).powf(1.5)),
            },
            horizon,
            keep_iterates: false,
        }
    }

    /// Acc-RDA with `α_n = n/2` and constant `β`; step `δ_n = (n/(n+1))/(L+β)`.
    pub fn accrda_constant(l: f64, beta: f64, horizon: u64) -> Self {
        Self {
            kind: BaselineKind::AccRda {
                l,
                alpha: Sequence::new(|n| n as f64 / 2.0),
                beta: Sequence::constant(beta),
            },
            horizon,
            keep_iterates: false,
        }
    }
}

/// Stateful evaluator of the induced `(m_k, δ_k)`, O(1) per consecutive call.
#[derive(Debug)]
pub struct Reduction {
    config: BaselineConfig,
    /// Prefix sums `A_0..` for Acc-RDA.
    prefix: Vec<f64>,
}

impl Reduction {
    pub fn new(config: &BaselineConfig) -> Result<Self> {
        if let BaselineKind::AccRda { beta, .. } = &config.kind {
            if beta.as_constant().is_none() {
                return Err(Error::RegimeMismatch(
                    "Acc-RDA is a two-step method only for a constant beta".into(),
                ));
            }
        }
        Ok(Self {
            config: config.clone(),
            prefix: vec![0.0],
        })
    }

    fn a(&mut self, k: u64, alpha: &Sequence) -> f64 {
        while self.prefix.len() as u64 <= k {
            let j = self.prefix.len() as u64;
            let last = *self.prefix.last().unwrap_or(&0.0);
            self.prefix.push(last + alpha.at(j));
        }
        self.prefix[k as usize]
    }

    /// Coefficients of the k-th gradient call (k ≥ 1).
    pub fn coeffs(&mut self, k: u64) -> MomentumCoeffs {
        match self.config.kind.clone() {
            BaselineKind::AcSa { gamma, beta } => {
                let b = beta.at(k);
                MomentumCoeffs {
                    momentum: if k == 1 { 0.0 } else { (beta.at(k - 1) - 1.0) / b },
                    step: gamma.at(k) / b,
                }
            }
            BaselineKind::Sage { lipschitz, alpha } => {
                let momentum = if k == 1 {
                    0.0
                } else {
                    let prev = alpha.at(k - 1);
                    (1.0 - prev) * alpha.at(k) / prev
                };
                MomentumCoeffs {
                    momentum,
                    step: 1.0 / lipschitz.at(k),
                }
            }
            BaselineKind::AccRda { l, beta, alpha } => {
                let b = beta.as_constant().unwrap_or(f64::NAN);
                let ak = alpha.at(k);
                let big_a = self.a(k, &alpha);
                let momentum = if k == 1 {
                    0.0
                } else {
                    ak * self.a(k - 2, &alpha) / (alpha.at(k - 1) * big_a)
                };
                MomentumCoeffs {
                    momentum,
                    step: ak * (ak / big_a) / (l + b),
                }
            }
        }
    }
}

/// The `(m_n, δ_n)` the baseline induces at its n-th gradient call.
pub fn reduce_to_unified(config: &BaselineConfig, n: u64) -> Result<MomentumCoeffs> {
    if n < 1 {
        return Err(Error::InvalidParameter("step index must be >= 1".into()));
    }
    Ok(Reduction::new(config)?.coeffs(n))
}

fn start<'p>(problem: &'p QuadraticProblem, x1: &[f64], horizon: u64, keep: bool) -> Result<Recorder<'p>> {
    if horizon < 1 {
        return Err(Error::InvalidParameter("horizon must be >= 1".into()));
    }
    check_dim(problem.dim(), x1.len())?;
    let mut rec = Recorder::new(problem, horizon, keep);
    rec.push(x1);
    Ok(rec)
}

fn positive(name: &str, k: u64, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name}_{k} must be positive, got {v}")))
    }
}

/// AC-SA, recording the aggregated iterate `x^{ag}`.
pub fn run_acsa<O: GradientOracle + ?Sized>(
    config: &BaselineConfig,
    oracle: &mut O,
    problem: &QuadraticProblem,
    x1: &[f64],
) -> Result<Trajectory> {
    let BaselineKind::AcSa { gamma, beta } = &config.kind else {
        return Err(Error::InvalidParameter("run_acsa needs an AC-SA config".into()));
    };
    let mut rec = start(problem, x1, config.horizon, config.keep_iterates)?;
    let d = x1.len();
    let mut x = x1.to_vec();
    let mut ag = x1.to_vec();
    let mut md = vec![0.0; d];
    let mut g = vec![0.0; d];
    for k in 1..=config.horizon {
        let (b, gm) = (beta.at(k), gamma.at(k));
        if !(b >= 1.0) {
            return Err(Error::InvalidParameter(format!("beta_{k} must be >= 1, got {b}")));
        }
        positive("gamma", k, gm)?;
        let inv = 1.0 / b;
        // step 1
        for i in 0..d {
            md[i] = inv * x[i] + (1.0 - inv) * ag[i];
        }
        // step 2
        oracle.query(&md, k, &mut g)?;
        for i in 0..d {
            x[i] -= gm * g[i];
            ag[i] = inv * x[i] + (1.0 - inv) * ag[i];
        }
        if !rec.push(&ag) {
            break;
        }
    }
    Ok(rec.finish(config.name(), None))
}

/// SAGE, recording `y_n`.
pub fn run_sage<O: GradientOracle + ?Sized>(
    config: &BaselineConfig,
    oracle: &mut O,
    problem: &QuadraticProblem,
    y0: &[f64],
) -> Result<Trajectory> {
    let BaselineKind::Sage { lipschitz, alpha } = &config.kind else {
        return Err(Error::InvalidParameter("run_sage needs a SAGE config".into()));
    };
    let mut rec = start(problem, y0, config.horizon, config.keep_iterates)?;
    let d = y0.len();
    let mut y = y0.to_vec();
    let mut z = y0.to_vec();
    let mut x = vec![0.0; d];
    let mut g = vec![0.0; d];
    for k in 1..=config.horizon {
        let (a, lk) = (alpha.at(k), lipschitz.at(k));
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha_{k} must lie in (0, 1], got {a}"
            )));
        }
        positive("L", k, lk)?;
        for i in 0..d {
            x[i] = (1.0 - a) * y[i] + a * z[i];
        }
        oracle.query(&x, k, &mut g)?;
        for i in 0..d {
            y[i] = x[i] - g[i] / lk;
            z[i] -= (x[i] - y[i]) / a;
        }
        if !rec.push(&y) {
            break;
        }
    }
    Ok(rec.finish(config.name(), None))
}

/// Accelerated regularized dual averaging, recording `w_n`.
pub fn run_accrda<O: GradientOracle + ?Sized>(
    config: &BaselineConfig,
    oracle: &mut O,
    problem: &QuadraticProblem,
    w0: &[f64],
) -> Result<Trajectory> {
    let BaselineKind::AccRda { l, beta, alpha } = &config.kind else {
        return Err(Error::InvalidParameter("run_accrda needs an Acc-RDA config".into()));
    };
    let mut rec = start(problem, w0, config.horizon, config.keep_iterates)?;
    let d = w0.len();
    let v0 = w0.to_vec();
    let mut v = w0.to_vec();
    let mut w = w0.to_vec();
    let mut u = vec![0.0; d];
    let mut g = vec![0.0; d];
    let mut g_avg = vec![0.0; d];
    let mut big_a = 0.0;
    for k in 1..=config.horizon {
        let (a, b) = (alpha.at(k), beta.at(k));
        positive("alpha", k, a)?;
        if !(b >= 0.0) {
            return Err(Error::InvalidParameter(format!("beta_{k} must be >= 0, got {b}")));
        }
        // steps 1-2
        big_a += a;
        let theta = a / big_a;
        for i in 0..d {
            u[i] = (1.0 - theta) * w[i] + theta * v[i];
        }
        // step 3
        oracle.query(&u, k, &mut g)?;
        // steps 3-5
        let scale = big_a / (l + b);
        for i in 0..d {
            g_avg[i] = (1.0 - theta) * g_avg[i] + theta * g[i];
            v[i] = v0[i] - scale * g_avg[i];
            w[i] = (1.0 - theta) * w[i] + theta * v[i];
        }
        if !rec.push(&w) {
            break;
        }
    }
    Ok(rec.finish(config.name(), None))
}

/// Runs whichever baseline the config names.
pub fn run_baseline<O: GradientOracle + ?Sized>(
    config: &BaselineConfig,
    oracle: &mut O,
    problem: &QuadraticProblem,
    x1: &[f64],
) -> Result<Trajectory> {
    match config.kind {
        BaselineKind::AcSa { .. } => run_acsa(config, oracle, problem, x1),
        BaselineKind::Sage { .. } => run_sage(config, oracle, problem, x1),
        BaselineKind::AccRda { .. } => run_accrda(config, oracle, problem, x1),
    }
}

/// Momentum method `x_{k+1} = y − δ_k g(y)`, `y = x_k + m_k(x_k − x_{k−1})`, started with `x_0 = x_1`.
pub fn run_momentum_form<O, F>(
    oracle: &mut O,
    problem: &QuadraticProblem,
    x1: &[f64],
    mut coeffs_at: F,
    horizon: u64,
    keep_iterates: bool,
) -> Result<Trajectory>
where
    O: GradientOracle + ?Sized,
    F: FnMut(u64) -> MomentumCoeffs,
{
    let mut rec = start(problem, x1, horizon, keep_iterates)?;
    let d = x1.len();
    let mut prev = x1.to_vec();
    let mut cur = x1.to_vec();
    let mut y = vec![0.0; d];
    let mut g = vec![0.0; d];
    for k in 1..=horizon {
        let MomentumCoeffs { momentum, step } = coeffs_at(k);
        for i in 0..d {
            y[i] = cur[i] + momentum * (cur[i] - prev[i]);
        }
        oracle.query(&y, k, &mut g)?;
        std::mem::swap(&mut prev, &mut cur);
        for i in 0..d {
            cur[i] = y[i] - step * g[i];
        }
        if !rec.push(&cur) {
            break;
        }
    }
    Ok(rec.finish("momentum_form", None))
}
