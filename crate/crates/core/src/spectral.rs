//! Per-eigenvalue analysis of the 2×2 companion matrix
//! `F = [[2 − (α+β)h, βh − 1], [1, 0]]` driving `η_{n+1} = (1−αh)η_n + (1−βh)(η_n − η_{n−1})`.
//!
//! The characteristic polynomial is `X² − 2rX + (1 − βh)` with midpoint
//! `r = 1 − ((α+β)/2)h` and reduced discriminant `Δ = h(((α+β)/2)²h − α)`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::quadratic::QuadraticProblem;
use crate::recursion::StepPair;
use crate::Result;

/// Tolerance on `|max root modulus − 1|` for marginal stability.
pub const MODULUS_TOL: f64 = 1e-12;

/// Root structure of the characteristic polynomial.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RootKind {
    RealDistinct {
        r_plus: f64,
        r_minus: f64,
    },
    /// Roots `ρe^{±iω}` with `ω ∈ (0, π)`.
    ComplexPair {
        rho: f64,
        omega: f64,
    },
    Coalescing {
        r_double: f64,
    },
}

impl RootKind {
    pub fn label(&self) -> &'static str {
        match self {
            RootKind::RealDistinct { .. } => "real",
            RootKind::ComplexPair { .. } => "complex",
            RootKind::Coalescing { .. } => "coalescing",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stability {
    StrictlyStable,
    MarginallyStable,
    Unstable,
}

impl Stability {
    pub fn label(&self) -> &'static str {
        match self {
            Stability::StrictlyStable => "strictly_stable",
            Stability::MarginallyStable => "marginally_stable",
            Stability::Unstable => "unstable",
        }
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self, Stability::Unstable)
    }
}

/// Spectral record for one eigenvalue `h` under a step pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenMode {
    pub h: f64,
    pub pair: StepPair,
    /// Root midpoint `r = 1 − ((α+β)/2)h`.
    pub midpoint: f64,
    pub discriminant: f64,
    pub kind: RootKind,
    pub max_root_modulus: f64,
    pub stability: Stability,
}

/// `Δ = h(((α+β)/2)²h − α)`.
pub fn discriminant(pair: StepPair, h: f64) -> f64 {
    let half = 0.5 * (pair.alpha + pair.beta);
    h * (half * half * h - pair.alpha)
}

/// The same discriminant written as `(1 − ((α+β)/2)h)² − 1 + βh`.
pub fn discriminant_expanded(pair: StepPair, h: f64) -> f64 {
    let r = midpoint(pair, h);
    r * r - 1.0 + pair.beta * h
}

pub fn midpoint(pair: StepPair, h: f64) -> f64 {
    1.0 - 0.5 * (pair.alpha + pair.beta) * h
}

/// Band `|Δ| ≤ tol` routed to the double-root branch.
pub fn coalescing_tolerance(pair: StepPair, h: f64) -> f64 {
    let scale = 0.5 * (pair.alpha + pair.beta) * h;
    1e-12 * (scale * scale).max(1.0)
}

impl EigenMode {
    /// Classifies with the default coalescing tolerance.
    pub fn new(pair: StepPair, h: f64) -> Self {
        classify(pair, h, coalescing_tolerance(pair, h))
    }

    /// Product of the two roots, `1 − βh`.
    pub fn root_product(&self) -> f64 {
        1.0 - self.pair.beta * self.h
    }

    /// Roots as `(re, im)` pairs.
    pub fn roots(&self) -> [(f64, f64); 2] {
        match self.kind {
            RootKind::RealDistinct { r_plus, r_minus } => [(r_plus, 0.0), (r_minus, 0.0)],
            RootKind::ComplexPair { rho, omega } => {
                let (s, c) = omega.sin_cos();
                [(rho * c, rho * s), (rho * c, -rho * s)]
            }
            RootKind::Coalescing { r_double } => [(r_double, 0.0), (r_double, 0.0)],
        }
    }

    /// `η_n` for `η_0 = 0`, `η_1 = 1`; equals `(r₊ⁿ − r₋ⁿ)/(r₊ − r₋)` for distinct roots.
    pub fn unit_response(&self, n: u64) -> f64 {
        if n == 0 {
            return 0.0;
        }
        let nf = n as f64;
        match self.kind {
            RootKind::Coalescing { r_double } => nf * powu(r_double, n - 1),
            RootKind::ComplexPair { rho, omega } => powu(rho, n - 1) * (nf * omega).sin() / omega.sin(),
            RootKind::RealDistinct { r_plus, r_minus } => {
                let sqrt_delta = self.discriminant.sqrt();
                let product = self.root_product();
                let a = self.midpoint.abs();
                if product > 0.0 && a > sqrt_delta {
                    // hyperbolic form: r± = sign(r)·ρe^{±τ}, free of the cancellation
                    // in r₊ⁿ − r₋ⁿ when the roots nearly coalesce
                    let rho = product.sqrt();
                    let tau = (sqrt_delta / a).atanh();
                    let log_mag = (nf - 1.0) * rho.ln() + ln_sinh(nf * tau) - ln_sinh(tau);
                    let sign = if self.midpoint < 0.0 && n.is_multiple_of(2) {
                        -1.0
                    } else {
                        1.0
                    };
                    sign * log_mag.exp()
                } else {
                    (powu(r_plus, n) - powu(r_minus, n)) / (2.0 * sqrt_delta)
                }
            }
        }
    }
}

fn powu(x: f64, n: u64) -> f64 {
    if n <= i32::MAX as u64 {
        x.powi(n as i32)
    } else {
        x.powf(n as f64)
    }
}

fn ln_sinh(x: f64) -> f64 {
    x + (-(-2.0 * x).exp_m1()).ln() - std::f64::consts::LN_2
}

/// Classifies the roots by the sign of `Δ` against `tol`.
pub fn classify(pair: StepPair, h: f64, tol: f64) -> EigenMode {
    let r = midpoint(pair, h);
    let delta = discriminant(pair, h);
    let (kind, max_root_modulus) = if delta > tol {
        let s = delta.sqrt();
        (
            RootKind::RealDistinct {
                r_plus: r + s,
                r_minus: r - s,
            },
            r.abs() + s,
        )
    } else if delta < -tol {
        let rho = (1.0 - pair.beta * h).sqrt();
        let omega = (-delta).sqrt().atan2(r);
        (RootKind::ComplexPair { rho, omega }, rho)
    } else {
        (RootKind::Coalescing { r_double: r }, r.abs())
    };
    EigenMode {
        h,
        pair,
        midpoint: r,
        discriminant: delta,
        kind,
        max_root_modulus,
        stability: stability_of_modulus(max_root_modulus),
    }
}

fn stability_of_modulus(modulus: f64) -> Stability {
    if !modulus.is_finite() {
        Stability::Unstable
    } else if (modulus - 1.0).abs() <= MODULUS_TOL {
        Stability::MarginallyStable
    } else if modulus < 1.0 {
        Stability::StrictlyStable
    } else {
        Stability::Unstable
    }
}

/// Stability of the `(α, β)` pair for eigenvalue `h`, from the exact root moduli.
pub fn stability_region(pair: StepPair, h: f64) -> Stability {
    EigenMode::new(pair, h).stability
}

/// `η_n` in closed form given `η_0 = 0` and `η_1 = eta1`.
pub fn closed_form_eta(mode: &EigenMode, eta1: f64, n: u64) -> f64 {
    eta1 * mode.unit_response(n)
}

/// Noiseless `f(θ_n) − f(θ_*) = (1/2n²) Σ h_i (η_n^i)²` from the closed forms.
pub fn closed_form_excess(problem: &QuadraticProblem, theta0: &[f64], pair: StepPair, n: u64) -> Result<f64> {
    let coords = problem.displacement_coords(theta0)?;
    let n = n.max(1);
    let nf = n as f64;
    let mut total = 0.0;
    for (&h, &eta1) in problem.eigenvalues().iter().zip(coords.as_slice()) {
        let eta = closed_form_eta(&EigenMode::new(pair, h), eta1, n) / nf;
        total += h * eta * eta;
    }
    Ok(0.5 * total)
}

/// One cell of a stability raster.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StabilityCell {
    pub alpha: f64,
    pub beta: f64,
    pub mode: EigenMode,
}

/// Classifies every `(α, β)` in the product of the two grids (β varies fastest).
pub fn stability_map(alpha_grid: &[f64], beta_grid: &[f64], h: f64) -> Vec<StabilityCell> {
    alpha_grid
        .iter()
        .flat_map(|&alpha| {
            beta_grid.iter().map(move |&beta| {
                let pair = StepPair::new(alpha, beta);
                StabilityCell {
                    alpha,
                    beta,
                    mode: EigenMode::new(pair, h),
                }
            })
        })
        .collect()
}

/// `count` evenly spaced points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// CSV with columns `alpha,beta,class,stability,max_root_modulus`.
pub fn write_stability_csv<W: Write>(cells: &[StabilityCell], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["alpha", "beta", "class", "stability", "max_root_modulus"])?;
    for cell in cells {
        w.write_record(&[
            cell.alpha.to_string(),
            cell.beta.to_string(),
            cell.mode.kind.label().to_string(),
            cell.mode.stability.label().to_string(),
            cell.mode.max_root_modulus.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
