//! A two-parameter gradient recursion on quadratics that contains averaged
//! gradient descent and accelerated gradient descent as special cases.
//!
//! The iteration is
//!
//! ```text
//! θ_{n+1} = (2n/(n+1))θ_n − ((n−1)/(n+1))θ_{n−1} − ((nα+β)/(n+1)) ∇f(query)
//! ```
//!
//! with the gradient evaluated at an extrapolated point. Per eigen-direction the
//! rescaled error `η_n = n(θ_n − θ_*)` follows a linear two-step recurrence whose
//! roots decide stability and convergence. [`spectral`] classifies those roots and
//! [`moments`] propagates exact second moments when the gradient is noisy.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod bounds;
pub mod error;
pub mod experiment;
pub mod moments;
pub mod oracle;
pub mod quadratic;
pub mod recursion;
pub mod spectral;

pub use baselines::{BaselineConfig, BaselineKind, Sequence};
pub use bounds::{BoundReport, BoundTerm, Combine};
pub use error::{Error, Result};
pub use experiment::{AlgorithmSpec, CompareSpec, Instance, NoiseModel, ProblemSpec, Summary};
pub use moments::{MomentumCoeffs, NoiseSpec, NoiseStats};
pub use oracle::{AdditiveNoiseOracle, ExactOracle, GradientOracle, SemiStochasticOracle, SgdOracle};
pub use quadratic::{EigenCoords, QuadraticProblem};
pub use recursion::{RunOptions, Schedule, ScheduleKind, StepPair, Trajectory};
pub use spectral::{EigenMode, RootKind, Stability};
