//! Quadratic objectives `f(θ) = ½⟨θ, Hθ⟩ − ⟨q, θ⟩` stored in eigen-decomposed form.
//!
//! The Hessian is kept as `(h, P)` with `H = P·Diag(h)·Pᵀ`; every product goes
//! through the decomposition so per-eigenmode quantities are exact.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

const ORTHO_TOL: f64 = 1e-12;

/// Coordinates `η_i = p_iᵀη` of a vector in the eigenbasis of `H`.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenCoords(pub Vec<f64>);

impl EigenCoords {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Positive-definite quadratic with known spectrum and optimum.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticProblem {
    eigenvalues: Vec<f64>,
    // column-major: basis[i * d + j] is the j-th entry of eigenvector p_i
    basis: Vec<f64>,
    optimum: Vec<f64>,
    linear_term: Vec<f64>,
    seed: Option<u64>,
}

impl QuadraticProblem {
    /// Builds a problem from eigenvalues, a column-major orthogonal basis and the optimum.
    ///
    /// Eigenvalues are sorted ascending (the basis columns are permuted along).
    pub fn new(eigenvalues: Vec<f64>, basis: Vec<f64>, optimum: Vec<f64>) -> Result<Self> {
        let d = eigenvalues.len();
        if d == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        check_dim(d * d, basis.len())?;
        check_dim(d, optimum.len())?;
        for (index, &value) in eigenvalues.iter().enumerate() {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::NonPositiveEigenvalue { index, value });
            }
        }

        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eigenvalues[a].total_cmp(&eigenvalues[b]));
        let sorted: Vec<f64> = order.iter().map(|&i| eigenvalues[i]).collect();
        let mut columns = Vec::with_capacity(d * d);
        for &i in &order {
            columns.extend_from_slice(&basis[i * d..(i + 1) * d]);
        }

        let mut problem = Self {
            eigenvalues: sorted,
            basis: columns,
            optimum,
            linear_term: vec![0.0; d],
            seed: None,
        };
        let deviation = problem.orthogonality_defect();
        if !(deviation <= ORTHO_TOL) {
            return Err(Error::NonOrthogonalBasis { deviation });
        }
        problem.linear_term = problem.hessian_apply(&problem.optimum);
        Ok(problem)
    }

    /// Problem with `P = I`.
    pub fn diagonal(eigenvalues: Vec<f64>, optimum: Vec<f64>) -> Result<Self> {
        let d = eigenvalues.len();
        let mut basis = vec![0.0; d * d];
        for i in 0..d {
            basis[i * d + i] = 1.0;
        }
        Self::new(eigenvalues, basis, optimum)
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `L`, the largest eigenvalue.
    pub fn largest(&self) -> f64 {
        *self.eigenvalues.last().expect("non-empty spectrum")
    }

    /// `μ`, the smallest eigenvalue.
    pub fn smallest(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Eigenvector `p_i` (matching `eigenvalues()[i]`).
    pub fn eigenvector(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.basis[i * d..(i + 1) * d]
    }

    /// Flattened column-major basis.
    pub fn basis(&self) -> &[f64] {
        &self.basis
    }

    pub fn optimum(&self) -> &[f64] {
        &self.optimum
    }

    /// `q = Hθ_*`.
    pub fn linear_term(&self) -> &[f64] {
        &self.linear_term
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// `‖PᵀP − I‖_max`.
    pub fn orthogonality_defect(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in i..d {
                let dot = dot(self.eigenvector(i), self.eigenvector(j));
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    fn to_coords_unchecked(&self, v: &[f64], out: &mut [f64]) {
        for (i, c) in out.iter_mut().enumerate() {
            *c = dot(self.eigenvector(i), v);
        }
    }

    fn coords_into_unchecked(&self, coords: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (i, &c) in coords.iter().enumerate() {
            if c != 0.0 {
                for (o, p) in out.iter_mut().zip(self.eigenvector(i)) {
                    *o += c * p;
                }
            }
        }
    }

    pub fn to_eigenbasis(&self, v: &[f64]) -> Result<EigenCoords> {
        check_dim(self.dim(), v.len())?;
        let mut coords = vec![0.0; self.dim()];
        self.to_coords_unchecked(v, &mut coords);
        Ok(EigenCoords(coords))
    }

    pub fn from_eigenbasis(&self, coords: &EigenCoords) -> Result<Vec<f64>> {
        check_dim(self.dim(), coords.len())?;
        let mut v = vec![0.0; self.dim()];
        self.coords_into_unchecked(coords.as_slice(), &mut v);
        Ok(v)
    }

    /// `Hv` computed through the decomposition.
    pub fn hessian_apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        let mut scratch = vec![0.0; self.dim()];
        self.hessian_apply_into(v, &mut scratch, &mut out);
        out
    }

    pub(crate) fn hessian_apply_into(&self, v: &[f64], scratch: &mut [f64], out: &mut [f64]) {
        self.to_coords_unchecked(v, scratch);
        for (c, h) in scratch.iter_mut().zip(&self.eigenvalues) {
            *c *= h;
        }
        self.coords_into_unchecked(scratch, out);
    }

    /// Gradient `Hθ − q = H(θ − θ_*)`.
    pub fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), theta.len())?;
        let mut out = vec![0.0; self.dim()];
        let mut scratch = vec![0.0; self.dim()];
        self.gradient_into(theta, &mut scratch, &mut out);
        Ok(out)
    }

    pub(crate) fn gradient_into(&self, theta: &[f64], scratch: &mut [f64], out: &mut [f64]) {
        for (o, (t, s)) in out.iter_mut().zip(theta.iter().zip(&self.optimum)) {
            *o = t - s;
        }
        // out doubles as the displacement buffer
        self.to_coords_unchecked(out, scratch);
        for (c, h) in scratch.iter_mut().zip(&self.eigenvalues) {
            *c *= h;
        }
        self.coords_into_unchecked(scratch, out);
    }

    /// Objective value `½⟨θ, Hθ⟩ − ⟨q, θ⟩`.
    pub fn value(&self, theta: &[f64]) -> Result<f64> {
        check_dim(self.dim(), theta.len())?;
        let h_theta = self.hessian_apply(theta);
        Ok(0.5 * dot(theta, &h_theta) - dot(&self.linear_term, theta))
    }

    /// Excess cost `f(θ) − f(θ_*) = ½ Σ h_i (p_iᵀ(θ − θ_*))²`.
    pub fn excess(&self, theta: &[f64]) -> Result<f64> {
        check_dim(self.dim(), theta.len())?;
        Ok(self.excess_unchecked(theta))
    }

    pub(crate) fn excess_unchecked(&self, theta: &[f64]) -> f64 {
        let mut total = 0.0;
        for (i, h) in self.eigenvalues.iter().enumerate() {
            let c: f64 = self
                .eigenvector(i)
                .iter()
                .zip(theta.iter().zip(&self.optimum))
                .map(|(p, (t, s))| p * (t - s))
                .sum();
            total += h * c * c;
        }
        0.5 * total
    }

    /// Eigen-coordinates of `θ − θ_*`.
    pub fn displacement_coords(&self, theta: &[f64]) -> Result<EigenCoords> {
        check_dim(self.dim(), theta.len())?;
        let diff: Vec<f64> = theta.iter().zip(&self.optimum).map(|(t, s)| t - s).collect();
        self.to_eigenbasis(&diff)
    }

    /// `tr(H)`, which equals `E‖x‖²` for Gaussian inputs with covariance `H`.
    pub fn input_radius_sq(&self) -> f64 {
        self.trace()
    }

    pub fn to_file(&self) -> ProblemFile {
        ProblemFile {
            eigenvalues: self.eigenvalues.clone(),
            basis_column_major: self.basis.clone(),
            optimum: self.optimum.clone(),
            seed: self.seed,
        }
    }

    pub fn from_file(file: ProblemFile) -> Result<Self> {
        let mut problem = Self::new(file.eigenvalues, file.basis_column_major, file.optimum)?;
        problem.seed = file.seed;
        Ok(problem)
    }

    /// Writes the problem as JSON for exact replay.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let writer = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(writer, &self.to_file())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let file: ProblemFile = serde_json::from_reader(reader)?;
        Self::from_file(file)
    }
}

/// On-disk representation of a [`QuadraticProblem`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    pub eigenvalues: Vec<f64>,
    /// `d·d` entries; entries `i·d .. (i+1)·d` hold eigenvector `p_i`.
    pub basis_column_major: Vec<f64>,
    pub optimum: Vec<f64>,
    pub seed: Option<u64>,
}

/// Eigenvalues `1/k^m` for `k = 1..=d`, in that (descending) order.
pub fn spectrum_power_law(d: usize, m: u32) -> Vec<f64> {
    (1..=d).map(|k| 1.0 / (k as f64).powi(m as i32)).collect()
}

/// Random problem with the given spectrum.
///
/// The basis is a Haar-distributed orthogonal matrix (QR of a Gaussian matrix
/// with sign-corrected columns), `θ_*` is a uniformly random unit vector and
/// `θ_0 = θ_* + r·u` with `u` another uniformly random unit vector.
pub fn make_problem(eigenvalues: &[f64], optimum_distance: f64, seed: u64) -> Result<(QuadraticProblem, Vec<f64>)> {
    if !(optimum_distance > 0.0) || !optimum_distance.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "optimum distance must be positive, got {optimum_distance}"
        )));
    }
    let d = eigenvalues.len();
    if d == 0 {
        return Err(Error::InvalidParameter("dimension must be at least 1".into()));
    }
    for (index, &value) in eigenvalues.iter().enumerate() {
        if !(value > 0.0) {
            return Err(Error::NonPositiveEigenvalue { index, value });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaussian = DMatrix::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
    let qr = gaussian.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    // nalgebra stores column-major, which is the layout used here
    let basis = q.as_slice().to_vec();

    let optimum = random_unit(&mut rng, d);
    let direction = random_unit(&mut rng, d);
    let theta0: Vec<f64> = optimum
        .iter()
        .zip(&direction)
        .map(|(s, u)| s + optimum_distance * u)
        .collect();

    let mut problem = QuadraticProblem::new(eigenvalues.to_vec(), basis, optimum)?;
    problem.seed = Some(seed);
    Ok((problem, theta0))
}

fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut *rng)).collect();
        let norm = norm(&v);
        if norm > 1e-8 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
