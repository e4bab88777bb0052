//! Exact second-moment propagation under uncorrelated additive noise.
//!
//! For each eigenmode the state `Θ_n = (η_n, η_{n−1})` evolves as
//! `Θ_{n+1} = F Θ_n + ((nα+β)ε, 0)` with `F = [[2−(α+β)h, βh−1], [1, 0]]`,
//! so `E[Θ_nΘ_nᵀ]` obeys a closed 2×2 recursion and the expected excess
//! `(1/2N²) Σ h_i E(η_N^i)²` needs no sampling.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::quadratic::QuadraticProblem;
use crate::recursion::StepPair;
use crate::spectral::EigenMode;
use crate::{Error, Result};

/// Per-mode noise variances `c_i = E[(p_iᵀε)²]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    None,
    Unstructured {
        c: Vec<f64>,
    },
    /// `c_i = σ²h_i`, i.e. `E[ε⊗ε] = σ²H`.
    Structured {
        sigma_sq: f64,
        c: Vec<f64>,
    },
}

/// The two scalar summaries the bounds use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseStats {
    pub trace_c: Option<f64>,
    pub trace_c_hinv: Option<f64>,
}

impl NoiseStats {
    pub fn unstructured(trace_c: f64) -> Self {
        Self {
            trace_c: Some(trace_c),
            trace_c_hinv: None,
        }
    }

    pub fn structured(trace_c_hinv: f64) -> Self {
        Self {
            trace_c: None,
            trace_c_hinv: Some(trace_c_hinv),
        }
    }
}

impl NoiseSpec {
    pub fn unstructured(c: Vec<f64>) -> Self {
        NoiseSpec::Unstructured { c }
    }

    /// Isotropic completion `c_i = tr C / d` when only the trace is known.
    pub fn isotropic(trace_c: f64, d: usize) -> Self {
        NoiseSpec::Unstructured {
            c: vec![trace_c / d as f64; d],
        }
    }

    pub fn structured(sigma_sq: f64, eigenvalues: &[f64]) -> Self {
        NoiseSpec::Structured {
            sigma_sq,
            c: eigenvalues.iter().map(|h| sigma_sq * h).collect(),
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, NoiseSpec::None)
    }

    /// Per-mode variances, or `None` for the noiseless spec.
    pub fn per_mode(&self) -> Option<&[f64]> {
        match self {
            NoiseSpec::None => None,
            NoiseSpec::Unstructured { c } | NoiseSpec::Structured { c, .. } => Some(c),
        }
    }

    pub fn trace_c(&self) -> f64 {
        self.per_mode().map_or(0.0, |c| c.iter().sum())
    }

    pub fn trace_c_hinv(&self, eigenvalues: &[f64]) -> f64 {
        match self {
            NoiseSpec::None => 0.0,
            NoiseSpec::Structured { sigma_sq, c } => sigma_sq * c.len() as f64,
            NoiseSpec::Unstructured { c } => c.iter().zip(eigenvalues).map(|(c, h)| c / h).sum(),
        }
    }

    pub fn stats(&self, eigenvalues: &[f64]) -> NoiseStats {
        NoiseStats {
            trace_c: Some(self.trace_c()),
            trace_c_hinv: Some(self.trace_c_hinv(eigenvalues)),
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        if let Some(c) = self.per_mode() {
            crate::error::check_dim(d, c.len())?;
            if let Some(bad) = c.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
                return Err(Error::InvalidParameter(format!(
                    "noise variance {bad} must be finite and >= 0"
                )));
            }
        }
        Ok(())
    }
}

/// `E[Θ Θᵀ]` for one mode, stored as `(E η_n², E η_nη_{n−1}, E η_{n−1}²)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModeMoment {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl ModeMoment {
    /// Deterministic start `Θ_1 = (η_1, 0)`.
    pub fn start(eta1: f64) -> Self {
        Self {
            a: eta1 * eta1,
            b: 0.0,
            c: 0.0,
        }
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        [[self.a, self.b], [self.b, self.c]]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let mean = 0.5 * (self.a + self.c);
        let half_gap = (0.25 * (self.a - self.c).powi(2) + self.b * self.b).sqrt();
        mean - half_gap
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite()
    }

    /// `M ↦ G M Gᵀ + diag(q, 0)` for a companion matrix `G = [[p, s], [1, 0]]`.
    #[inline]
    fn companion(self, p: f64, s: f64, q: f64) -> Self {
        Self {
            a: p * p * self.a + 2.0 * p * s * self.b + s * s * self.c + q,
            b: p * self.a + s * self.b,
            c: self.a,
        }
    }
}

/// One moment step at index `n`: `M′ = F M Fᵀ + diag((nα+β)²c, 0)`.
pub fn moment_step(m: ModeMoment, pair: StepPair, h: f64, c: f64, n: u64) -> ModeMoment {
    let p = 2.0 - (pair.alpha + pair.beta) * h;
    let s = pair.beta * h - 1.0;
    let w = pair.weight(n);
    m.companion(p, s, w * w * c)
}

/// Per-mode second moments of the reduced iterate at step `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct SecondMoment {
    pub modes: Vec<ModeMoment>,
    pub n: u64,
}

impl SecondMoment {
    pub fn start(problem: &QuadraticProblem, theta0: &[f64]) -> Result<Self> {
        let coords = problem.displacement_coords(theta0)?;
        Ok(Self {
            modes: coords.as_slice().iter().map(|&e| ModeMoment::start(e)).collect(),
            n: 1,
        })
    }

    /// Advances from `n` to `n + 1`; `c` may be empty for no noise.
    pub fn step(&mut self, pair: StepPair, eigenvalues: &[f64], c: &[f64]) -> Result<()> {
        let n = self.n;
        for (i, (m, &h)) in self.modes.iter_mut().zip(eigenvalues).enumerate() {
            let ci = c.get(i).copied().unwrap_or(0.0);
            *m = moment_step(*m, pair, h, ci, n);
            if !m.is_finite() {
                return Err(Error::Diverged { step: n });
            }
        }
        self.n += 1;
        Ok(())
    }

    /// `(1/2n²) Σ h_i E(η_n^i)²`.
    pub fn excess(&self, eigenvalues: &[f64]) -> f64 {
        let nf = self.n as f64;
        let s: f64 = self.modes.iter().zip(eigenvalues).map(|(m, h)| h * m.a).sum();
        0.5 * s / (nf * nf)
    }
}

/// Expected excess at each of the increasing `checkpoints` (values ≥ 1) under a per-step pair rule.
pub fn expected_excess_curve<F>(
    problem: &QuadraticProblem,
    theta0: &[f64],
    mut pair_at: F,
    noise: &NoiseSpec,
    checkpoints: &[u64],
) -> Result<Vec<f64>>
where
    F: FnMut(u64) -> StepPair,
{
    noise.validate(problem.dim())?;
    let c = noise.per_mode().unwrap_or(&[]);
    let h = problem.eigenvalues();
    let mut state = SecondMoment::start(problem, theta0)?;
    let mut out = Vec::with_capacity(checkpoints.len());
    for &target in checkpoints {
        if target < state.n {
            return Err(Error::InvalidParameter(
                "checkpoints must be increasing and >= 1".into(),
            ));
        }
        while state.n < target {
            let pair = pair_at(state.n);
            state.step(pair, h, c)?;
        }
        out.push(state.excess(h));
    }
    Ok(out)
}

/// `E f(θ_N) − f_*` for a constant pair.
pub fn expected_excess(
    problem: &QuadraticProblem,
    theta0: &[f64],
    pair: StepPair,
    noise: &NoiseSpec,
    n: u64,
) -> Result<f64> {
    if n < 1 {
        return Err(Error::InvalidParameter("horizon must be >= 1".into()));
    }
    Ok(expected_excess_curve(problem, theta0, |_| pair, noise, &[n])?[0])
}

/// `(bias, variance)`: the noiseless excess and the excess started at `θ_*`.
pub fn bias_variance_split(
    problem: &QuadraticProblem,
    theta0: &[f64],
    pair: StepPair,
    noise: &NoiseSpec,
    n: u64,
) -> Result<(f64, f64)> {
    let bias = expected_excess(problem, theta0, pair, &NoiseSpec::None, n)?;
    let variance = expected_excess(problem, problem.optimum(), pair, noise, n)?;
    Ok((bias, variance))
}

/// `h·c·Σ_{k=1}^{n−1} (kα+β)² U(n−k)²` where `U(m)` is the unit response of the mode:
/// the noise injected at step `k` reaches `η_n` through `n−k` further steps.
/// Equals `E(η_n)²·h` for the recursion started at `η_1 = 0`.
pub fn variance_term_closed_form(mode: &EigenMode, c: f64, n: u64) -> f64 {
    let mut total = 0.0;
    for k in 1..n {
        let w = mode.pair.weight(k);
        let u = mode.unit_response(n - k);
        total += w * w * u * u;
    }
    mode.h * c * total
}

/// `Σ_{k=1}^{n} U(k)²`, the unweighted root sum bounded in the noise analysis.
pub fn unit_response_energy(mode: &EigenMode, n: u64) -> f64 {
    (1..=n).map(|k| mode.unit_response(k).powi(2)).sum()
}

/// One row of an expected-excess curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub n: u64,
    pub total: f64,
    pub bias: f64,
    pub variance: f64,
}

/// Bias, variance and total at each checkpoint, in two passes over the horizon.
pub fn excess_curve<F>(
    problem: &QuadraticProblem,
    theta0: &[f64],
    mut pair_at: F,
    noise: &NoiseSpec,
    checkpoints: &[u64],
) -> Result<Vec<CurveRow>>
where
    F: FnMut(u64) -> StepPair,
{
    let bias = expected_excess_curve(problem, theta0, &mut pair_at, &NoiseSpec::None, checkpoints)?;
    let variance = expected_excess_curve(problem, problem.optimum(), &mut pair_at, noise, checkpoints)?;
    Ok(checkpoints
        .iter()
        .zip(bias.iter().zip(&variance))
        .map(|(&n, (&b, &v))| CurveRow {
            n,
            total: b + v,
            bias: b,
            variance: v,
        })
        .collect())
}

/// CSV with columns `N,total,bias,variance`.
pub fn write_curve_csv<W: Write>(rows: &[CurveRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["N", "total", "bias", "variance"])?;
    for r in rows {
        w.write_record(&[
            r.n.to_string(),
            r.total.to_string(),
            r.bias.to_string(),
            r.variance.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Coefficients of a momentum step `x_{k+1} = y − δ·g(y)`, `y = x_k + m(x_k − x_{k−1})`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentumCoeffs {
    pub momentum: f64,
    pub step: f64,
}

/// Expected excess of a momentum-form method after each checkpoint number of gradient calls.
///
/// Per mode `φ_{k+1} = (1−δh)(1+m)φ_k − (1−δh)mφ_{k−1} + δε`, started at `x_0 = x_1`.
pub fn momentum_expected_excess<F>(
    problem: &QuadraticProblem,
    x1: &[f64],
    mut coeffs_at: F,
    noise: &NoiseSpec,
    checkpoints: &[u64],
) -> Result<Vec<f64>>
where
    F: FnMut(u64) -> MomentumCoeffs,
{
    noise.validate(problem.dim())?;
    let c = noise.per_mode().unwrap_or(&[]);
    let h = problem.eigenvalues();
    let coords = problem.displacement_coords(x1)?;
    let mut modes: Vec<ModeMoment> = coords
        .as_slice()
        .iter()
        .map(|&e| ModeMoment {
            a: e * e,
            b: e * e,
            c: e * e,
        })
        .collect();
    let mut k = 0u64;
    let mut out = Vec::with_capacity(checkpoints.len());
    for &target in checkpoints {
        if target < k {
            return Err(Error::InvalidParameter("checkpoints must be increasing".into()));
        }
        while k < target {
            k += 1;
            let MomentumCoeffs { momentum, step } = coeffs_at(k);
            for (i, (m, &hi)) in modes.iter_mut().zip(h).enumerate() {
                let contraction = 1.0 - step * hi;
                let ci = c.get(i).copied().unwrap_or(0.0);
                *m = m.companion(
                    contraction * (1.0 + momentum),
                    -contraction * momentum,
                    step * step * ci,
                );
                if !m.is_finite() {
                    return Err(Error::Diverged { step: k });
                }
            }
        }
        out.push(0.5 * modes.iter().zip(h).map(|(m, h)| h * m.a).sum::<f64>());
    }
    Ok(out)
}
