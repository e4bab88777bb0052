//! Fixtures shared by the benchmarks.

use avacc_core::quadratic::{make_problem, spectrum_power_law};
use avacc_core::QuadraticProblem;

/// Problem with spectrum `1/k²`, unit initial distance and a fixed seed.
pub fn fixture(d: usize) -> (QuadraticProblem, Vec<f64>) {
    make_problem(&spectrum_power_law(d, 2), 1.0, 42).expect("valid spectrum")
}
