//! Gradient oracles.
//!
//! Every stochastic draw is keyed by `(seed, step)`: the oracle seeds a fresh
//! ChaCha stream per step, so two algorithms that query the same step index see
//! the same noise regardless of how many other queries they made.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::check_dim;
use crate::moments::NoiseSpec;
use crate::quadratic::{dot, QuadraticProblem};
use crate::{Error, Result};

/// A (possibly noisy) gradient oracle for a quadratic objective.
pub trait GradientOracle {
    fn dim(&self) -> usize;

    /// Writes the reply at `point` for iteration `step` into `out`.
    fn query(&mut self, point: &[f64], step: u64, out: &mut [f64]) -> Result<()>;

    /// Declared noise statistics, used when evaluating bounds.
    fn noise(&self) -> NoiseSpec;

    /// True when the declared noise is not covered by the theorems (full SGD).
    fn conjectural(&self) -> bool {
        false
    }
}

fn step_rng(seed: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step);
    rng
}

/// Returns `Hθ − q` exactly.
#[derive(Clone, Debug)]
pub struct ExactOracle<'a> {
    problem: &'a QuadraticProblem,
    scratch: Vec<f64>,
}

impl<'a> ExactOracle<'a> {
    pub fn new(problem: &'a QuadraticProblem) -> Self {
        Self {
            problem,
            scratch: vec![0.0; problem.dim()],
        }
    }
}

impl GradientOracle for ExactOracle<'_> {
    fn dim(&self) -> usize {
        self.problem.dim()
    }

    fn query(&mut self, point: &[f64], _step: u64, out: &mut [f64]) -> Result<()> {
        check_dim(self.dim(), point.len())?;
        check_dim(self.dim(), out.len())?;
        self.problem.gradient_into(point, &mut self.scratch, out);
        Ok(())
    }

    fn noise(&self) -> NoiseSpec {
        NoiseSpec::None
    }
}

/// `gradient(θ) − ε_n` with `ε_n = Σ_i √c_i g_i p_i`, `g_i` standard Gaussian.
#[derive(Clone, Debug)]
pub struct AdditiveNoiseOracle<'a> {
    problem: &'a QuadraticProblem,
    variances: Vec<f64>,
    sqrt_c: Vec<f64>,
    seed: u64,
    scratch: Vec<f64>,
    coords: Vec<f64>,
}

impl<'a> AdditiveNoiseOracle<'a> {
    /// `variances[i]` is the noise variance along the i-th eigenvector (ascending eigenvalue order).
    pub fn new(problem: &'a QuadraticProblem, variances: Vec<f64>, seed: u64) -> Result<Self> {
        check_dim(problem.dim(), variances.len())?;
        if let Some(c) = variances.iter().find(|c| !(**c >= 0.0 && c.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "noise variance {c} must be finite and >= 0"
            )));
        }
        let sqrt_c = variances.iter().map(|c| c.sqrt()).collect();
        Ok(Self {
            problem,
            variances,
            sqrt_c,
            seed,
            scratch: vec![0.0; problem.dim()],
            coords: vec![0.0; problem.dim()],
        })
    }

    /// Noise `ε_n` in the eigenbasis.
    pub fn noise_coords(&self, step: u64) -> Vec<f64> {
        let mut rng = step_rng(self.seed, step);
        self.sqrt_c
            .iter()
            .map(|s| {
                let g: f64 = StandardNormal.sample(&mut rng);
                s * g
            })
            .collect()
    }
}

impl GradientOracle for AdditiveNoiseOracle<'_> {
    fn dim(&self) -> usize {
        self.problem.dim()
    }

    fn query(&mut self, point: &[f64], step: u64, out: &mut [f64]) -> Result<()> {
        check_dim(self.dim(), point.len())?;
        check_dim(self.dim(), out.len())?;
        self.problem.gradient_into(point, &mut self.scratch, out);
        let mut rng = step_rng(self.seed, step);
        for (c, s) in self.coords.iter_mut().zip(&self.sqrt_c) {
            let g: f64 = StandardNormal.sample(&mut rng);
            *c = s * g;
        }
        let d = self.dim();
        for (i, &c) in self.coords.iter().enumerate() {
            if c != 0.0 {
                let p = &self.problem.basis()[i * d..(i + 1) * d];
                for (o, &pj) in out.iter_mut().zip(p) {
                    *o -= c * pj;
                }
            }
        }
        Ok(())
    }

    fn noise(&self) -> NoiseSpec {
        NoiseSpec::unstructured(self.variances.clone())
    }
}

#[derive(Clone, Debug)]
enum StreamSource {
    Generated {
        sqrt_h: Vec<f64>,
        basis: Vec<f64>,
        seed: u64,
    },
    Recorded {
        rows: Vec<(Vec<f64>, f64)>,
    },
}

/// Pairs `(x_n, y_n)` with `x_n ~ N(0, H)` and `y_n = ⟨θ_*, x_n⟩ + r_n`, `r_n ~ N(0, σ²)`.
#[derive(Clone, Debug)]
pub struct RegressionStream {
    optimum: Vec<f64>,
    eigenvalues: Vec<f64>,
    sigma: f64,
    source: StreamSource,
}

impl RegressionStream {
    pub fn new(problem: &QuadraticProblem, sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sigma must be finite and >= 0, got {sigma}"
            )));
        }
        Ok(Self {
            optimum: problem.optimum().to_vec(),
            eigenvalues: problem.eigenvalues().to_vec(),
            sigma,
            source: StreamSource::Generated {
                sqrt_h: problem.eigenvalues().iter().map(|h| h.sqrt()).collect(),
                basis: problem.basis().to_vec(),
                seed,
            },
        })
    }

    pub fn dim(&self) -> usize {
        self.optimum.len()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn optimum(&self) -> &[f64] {
        &self.optimum
    }

    /// The n-th pair (n ≥ 1) as `(x_n, y_n)`.
    pub fn sample(&self, n: u64) -> Result<(Vec<f64>, f64)> {
        let mut x = vec![0.0; self.dim()];
        let y = self.sample_into(n, &mut x)?;
        Ok((x, y))
    }

    fn sample_into(&self, n: u64, x: &mut [f64]) -> Result<f64> {
        match &self.source {
            StreamSource::Generated { sqrt_h, basis, seed } => {
                let d = self.dim();
                let mut rng = step_rng(*seed, n);
                x.iter_mut().for_each(|v| *v = 0.0);
                for (i, s) in sqrt_h.iter().enumerate() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let w = s * z;
                    for (xj, pj) in x.iter_mut().zip(&basis[i * d..(i + 1) * d]) {
                        *xj += w * pj;
                    }
                }
                let r: f64 = StandardNormal.sample(&mut rng);
                Ok(dot(&self.optimum, x) + self.sigma * r)
            }
            StreamSource::Recorded { rows } => {
                let (xs, y) = n.checked_sub(1).and_then(|i| rows.get(i as usize)).ok_or_else(|| {
                    Error::InvalidParameter(format!("recorded stream has {} rows, sample {n} requested", rows.len()))
                })?;
                x.copy_from_slice(xs);
                Ok(*y)
            }
        }
    }

    /// Writes samples `1..=count` as CSV with columns `x0..x{d-1},y`.
    pub fn write_csv<W: Write>(&self, count: u64, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.dim()).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        w.write_record(&header)?;
        let mut x = vec![0.0; self.dim()];
        for n in 1..=count {
            let y = self.sample_into(n, &mut x)?;
            let mut row: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            row.push(y.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Replays a CSV written by [`write_csv`](Self::write_csv); the problem supplies `θ_*` and `H`.
    pub fn replay<R: Read>(problem: &QuadraticProblem, sigma: f64, reader: R) -> Result<Self> {
        let d = problem.dim();
        let mut rdr = csv::Reader::from_reader(reader);
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record?;
            check_dim(d + 1, record.len())?;
            let vals = record
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|e| Error::InvalidParameter(format!("bad number {s:?}: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            let y = vals[d];
            rows.push((vals[..d].to_vec(), y));
        }
        Ok(Self {
            optimum: problem.optimum().to_vec(),
            eigenvalues: problem.eigenvalues().to_vec(),
            sigma,
            source: StreamSource::Recorded { rows },
        })
    }

    fn structured_spec(&self) -> NoiseSpec {
        NoiseSpec::structured(self.sigma * self.sigma, &self.eigenvalues)
    }
}

/// `H(θ − θ_*) − r_n x_n`: exact curvature, sampled residual.
#[derive(Clone, Debug)]
pub struct SemiStochasticOracle<'a> {
    problem: &'a QuadraticProblem,
    stream: RegressionStream,
    scratch: Vec<f64>,
    x: Vec<f64>,
}

impl<'a> SemiStochasticOracle<'a> {
    pub fn new(problem: &'a QuadraticProblem, sigma: f64, seed: u64) -> Result<Self> {
        Ok(Self {
            problem,
            stream: RegressionStream::new(problem, sigma, seed)?,
            scratch: vec![0.0; problem.dim()],
            x: vec![0.0; problem.dim()],
        })
    }
}

impl GradientOracle for SemiStochasticOracle<'_> {
    fn dim(&self) -> usize {
        self.problem.dim()
    }

    fn query(&mut self, point: &[f64], step: u64, out: &mut [f64]) -> Result<()> {
        check_dim(self.dim(), point.len())?;
        check_dim(self.dim(), out.len())?;
        self.problem.gradient_into(point, &mut self.scratch, out);
        if self.stream.sigma == 0.0 {
            return Ok(());
        }
        let y = self.stream.sample_into(step, &mut self.x)?;
        let residual = y - dot(&self.stream.optimum, &self.x);
        for (o, xj) in out.iter_mut().zip(&self.x) {
            *o -= residual * xj;
        }
        Ok(())
    }

    fn noise(&self) -> NoiseSpec {
        self.stream.structured_spec()
    }
}

/// Full least-squares SGD: `x_n⟨x_n, θ⟩ − y_n x_n`.
#[derive(Clone, Debug)]
pub struct SgdOracle {
    stream: RegressionStream,
    x: Vec<f64>,
}

impl SgdOracle {
    pub fn new(stream: RegressionStream) -> Self {
        let d = stream.dim();
        Self {
            stream,
            x: vec![0.0; d],
        }
    }
}

impl GradientOracle for SgdOracle {
    fn dim(&self) -> usize {
        self.stream.dim()
    }

    fn query(&mut self, point: &[f64], step: u64, out: &mut [f64]) -> Result<()> {
        check_dim(self.dim(), point.len())?;
        check_dim(self.dim(), out.len())?;
        let y = self.stream.sample_into(step, &mut self.x)?;
        let scale = dot(&self.x, point) - y;
        for (o, xj) in out.iter_mut().zip(&self.x) {
            *o = scale * xj;
        }
        Ok(())
    }

    fn noise(&self) -> NoiseSpec {
        self.stream.structured_spec()
    }

    fn conjectural(&self) -> bool {
        true
    }
}
