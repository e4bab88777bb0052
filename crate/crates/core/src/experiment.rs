//! Seeded replications, slope fitting and the algorithm comparison harness.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{run_baseline, BaselineConfig, Reduction};
use crate::moments::{expected_excess_curve, momentum_expected_excess, NoiseSpec, NoiseStats};
use crate::oracle::{
    AdditiveNoiseOracle, ExactOracle, GradientOracle, RegressionStream, SemiStochasticOracle, SgdOracle,
};
use crate::quadratic::{make_problem, spectrum_power_law, QuadraticProblem};
use crate::recursion::{avgd_reference, run_with, RunOptions, Schedule, ScheduleKind, StepPair, Trajectory};
use crate::{Error, Result};

/// SplitMix64 finalizer applied to `master + (index+1)·golden`.
pub fn replication_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add((index.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `count` distinct integers spaced evenly in log scale over `[lo, hi]`.
pub fn log_spaced(lo: u64, hi: u64, count: usize) -> Vec<u64> {
    let lo = lo.max(1);
    if count == 0 || hi < lo {
        return Vec::new();
    }
    if count == 1 || hi == lo {
        return vec![hi];
    }
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut out: Vec<u64> = (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp().round() as u64)
        .map(|n| n.clamp(lo, hi))
        .collect();
    out.dedup();
    out
}

/// The slope-fit grid: 50 log-spaced integers in `[N/10, N]`.
pub fn last_decade(horizon: u64) -> Vec<u64> {
    log_spaced((horizon / 10).max(1), horizon, 50)
}

/// Least-squares slope of `log value` against `log n`.
pub fn loglog_slope(ns: &[u64], values: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = ns
        .iter()
        .zip(values)
        .filter(|(_, v)| **v > 0.0 && v.is_finite())
        .map(|(&n, &v)| ((n as f64).ln(), v.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Slope over the last decade of a curve indexed by `n`.
pub fn last_decade_slope(curve: &[f64]) -> f64 {
    let horizon = curve.len().saturating_sub(1) as u64;
    let ns = last_decade(horizon);
    let vals: Vec<f64> = ns.iter().map(|&n| curve[n as usize]).collect();
    loglog_slope(&ns, &vals)
}

/// Problem construction parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub d: usize,
    /// Power-law exponent `m` of the spectrum `1/k^m`; ignored when `eigenvalues` is set.
    #[serde(default)]
    pub spectrum_m: u32,
    #[serde(default)]
    pub eigenvalues: Option<Vec<f64>>,
    /// `‖θ_0 − θ_*‖`.
    pub r: f64,
    pub seed: u64,
}

impl ProblemSpec {
    pub fn build(&self) -> Result<(QuadraticProblem, Vec<f64>)> {
        let h = match &self.eigenvalues {
            Some(h) => {
                if h.len() != self.d {
                    return Err(Error::DimensionMismatch {
                        expected: self.d,
                        got: h.len(),
                    });
                }
                h.clone()
            }
            None => {
                if self.d == 0 {
                    return Err(Error::InvalidParameter("d must be >= 1".into()));
                }
                spectrum_power_law(self.d, self.spectrum_m)
            }
        };
        make_problem(&h, self.r, self.seed)
    }
}

/// Gradient noise model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    None,
    /// Additive Gaussian noise, isotropic with the given trace unless per-mode variances are given.
    Additive {
        #[serde(default)]
        trace_c: f64,
        #[serde(default)]
        variances: Option<Vec<f64>>,
    },
    /// Semi-stochastic least squares: `H(θ−θ_*) − r_n x_n`.
    Structured {
        sigma: f64,
    },
    /// Full least-squares SGD.
    Sgd {
        sigma: f64,
    },
}

impl NoiseModel {
    pub fn spec(&self, problem: &QuadraticProblem) -> Result<NoiseSpec> {
        Ok(match self {
            NoiseModel::None => NoiseSpec::None,
            NoiseModel::Additive { trace_c, variances } => match variances {
                Some(c) => {
                    crate::error::check_dim(problem.dim(), c.len())?;
                    NoiseSpec::unstructured(c.clone())
                }
                None => NoiseSpec::isotropic(*trace_c, problem.dim()),
            },
            NoiseModel::Structured { sigma } | NoiseModel::Sgd { sigma } => {
                NoiseSpec::structured(sigma * sigma, problem.eigenvalues())
            }
        })
    }

    /// True when the moment engine gives the exact expectation.
    pub fn exact_moments(&self) -> bool {
        !matches!(self, NoiseModel::Sgd { .. })
    }

    pub fn oracle<'a>(&self, problem: &'a QuadraticProblem, seed: u64) -> Result<Box<dyn GradientOracle + 'a>> {
        Ok(match self {
            NoiseModel::None => Box::new(ExactOracle::new(problem)),
            NoiseModel::Additive { .. } => {
                let c = self.spec(problem)?.per_mode().map(<[f64]>::to_vec).unwrap_or_default();
                Box::new(AdditiveNoiseOracle::new(problem, c, seed)?)
            }
            NoiseModel::Structured { sigma } => Box::new(SemiStochasticOracle::new(problem, *sigma, seed)?),
            NoiseModel::Sgd { sigma } => Box::new(SgdOracle::new(RegressionStream::new(problem, *sigma, seed)?)),
        })
    }
}

/// An algorithm in a run or comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum AlgorithmSpec {
    Unified {
        #[serde(default)]
        name: Option<String>,
        schedule: ScheduleKind,
        #[serde(default)]
        anytime: bool,
    },
    /// Averaged gradient descent through its primal-averaging form.
    AvgdReference {
        gamma: f64,
    },
    AcSa,
    Sage,
    AccRda,
    /// Acc-RDA with constant regularization `β`.
    AccRdaConstant {
        beta: f64,
    },
}

impl AlgorithmSpec {
    pub fn name(&self) -> String {
        match self {
            AlgorithmSpec::Unified { name: Some(n), .. } => n.clone(),
            AlgorithmSpec::Unified { schedule, anytime, .. } => {
                if *anytime {
                    format!("{}_anytime", schedule.name())
                } else {
                    schedule.name().to_string()
                }
            }
            AlgorithmSpec::AvgdReference { .. } => "av_gd_reference".into(),
            AlgorithmSpec::AcSa => "ac_sa".into(),
            AlgorithmSpec::Sage => "sage".into(),
            AlgorithmSpec::AccRda => "acc_rda".into(),
            AlgorithmSpec::AccRdaConstant { .. } => "acc_rda_constant".into(),
        }
    }
}

/// Everything an algorithm needs from the instance.
#[derive(Clone, Debug)]
pub struct Instance {
    pub problem: QuadraticProblem,
    pub theta0: Vec<f64>,
    pub r: f64,
    pub noise: NoiseModel,
    pub spec: NoiseSpec,
}

impl Instance {
    pub fn new(problem: ProblemSpec, noise: NoiseModel) -> Result<Self> {
        let (p, theta0) = problem.build()?;
        let spec = noise.spec(&p)?;
        Ok(Self {
            problem: p,
            theta0,
            r: problem.r,
            noise,
            spec,
        })
    }

    pub fn l(&self) -> f64 {
        self.problem.largest()
    }

    pub fn stats(&self) -> NoiseStats {
        self.spec.stats(self.problem.eigenvalues())
    }

    fn baseline(&self, alg: &AlgorithmSpec, horizon: u64) -> Option<BaselineConfig> {
        let (l, r, tr) = (self.l(), self.r, self.spec.trace_c());
        Some(match alg {
            AlgorithmSpec::AcSa => BaselineConfig::acsa_preset(l, r, tr, horizon),
            AlgorithmSpec::Sage => BaselineConfig::sage_preset(l, r, tr, horizon),
            AlgorithmSpec::AccRda => BaselineConfig::accrda_preset(l, r, tr, horizon),
            AlgorithmSpec::AccRdaConstant { beta } => BaselineConfig::accrda_constant(l, *beta, horizon),
            _ => return None,
        })
    }

    fn unified_rule(&self, schedule: ScheduleKind, anytime: bool, horizon: u64) -> Result<impl Fn(u64) -> StepPair> {
        let s = Schedule {
            kind: schedule,
            horizon,
            anytime,
        };
        s.resolver(self.l(), self.r, Some(&self.stats()))
    }

    /// One replication of `alg` with oracle seed `seed`.
    pub fn run(&self, alg: &AlgorithmSpec, horizon: u64, seed: u64) -> Result<Trajectory> {
        let mut oracle = self.noise.oracle(&self.problem, seed)?;
        let mut traj = match alg {
            AlgorithmSpec::Unified { schedule, anytime, .. } => {
                let rule = self.unified_rule(*schedule, *anytime, horizon)?;
                let opts = RunOptions {
                    label: alg.name(),
                    seed: Some(seed),
                    keep_iterates: false,
                };
                run_with(oracle.as_mut(), &self.problem, &self.theta0, rule, horizon, &opts)?
            }
            AlgorithmSpec::AvgdReference { gamma } => {
                avgd_reference(*gamma, oracle.as_mut(), &self.problem, &self.theta0, horizon)?
            }
            _ => {
                let cfg = self.baseline(alg, horizon).expect("baseline algorithm");
                run_baseline(&cfg, oracle.as_mut(), &self.problem, &self.theta0)?
            }
        };
        traj.meta.label = alg.name();
        traj.meta.seed = Some(seed);
        Ok(traj)
    }

    /// Exact expected excess at `checkpoints`, when the moment engine covers the algorithm.
    pub fn expected(&self, alg: &AlgorithmSpec, horizon: u64, checkpoints: &[u64]) -> Result<Option<Vec<f64>>> {
        if !self.noise.exact_moments() {
            return Ok(None);
        }
        match alg {
            AlgorithmSpec::Unified { schedule, anytime, .. } => {
                let rule = self.unified_rule(*schedule, *anytime, horizon)?;
                let pts: Vec<u64> = checkpoints.iter().map(|&n| n.max(1)).collect();
                expected_excess_curve(&self.problem, &self.theta0, rule, &self.spec, &pts).map(Some)
            }
            AlgorithmSpec::AvgdReference { gamma } => {
                let pts: Vec<u64> = checkpoints.iter().map(|&n| n.max(1)).collect();
                let pair = StepPair::new(0.0, *gamma);
                expected_excess_curve(&self.problem, &self.theta0, |_| pair, &self.spec, &pts).map(Some)
            }
            _ => {
                let cfg = self.baseline(alg, horizon).expect("baseline algorithm");
                match Reduction::new(&cfg) {
                    Ok(mut red) => momentum_expected_excess(
                        &self.problem,
                        &self.theta0,
                        |k| red.coeffs(k),
                        &self.spec,
                        checkpoints,
                    )
                    .map(Some),
                    Err(Error::RegimeMismatch(_)) => Ok(None),
                    Err(e) => Err(e),
                }
            }
        }
    }
}

/// Pointwise mean and standard error over replications.
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Number of replications non-finite at each index.
    pub diverged: Vec<usize>,
    pub reps: usize,
}

impl Summary {
    pub fn from_trajectories(trajs: &[Trajectory]) -> Self {
        let reps = trajs.len();
        let len = trajs.iter().map(Trajectory::len).max().unwrap_or(0);
        let mut mean = vec![0.0; len];
        let mut stderr = vec![0.0; len];
        let mut diverged = vec![0usize; len];
        for i in 0..len {
            let vals: Vec<f64> = trajs
                .iter()
                .map(|t| t.excess.get(i).copied().unwrap_or(f64::INFINITY))
                .collect();
            diverged[i] = vals.iter().filter(|v| !v.is_finite()).count();
            let m = vals.iter().sum::<f64>() / reps as f64;
            mean[i] = m;
            stderr[i] = if reps > 1 && m.is_finite() {
                let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (reps - 1) as f64;
                (var / reps as f64).sqrt()
            } else {
                0.0
            };
        }
        Self {
            mean,
            stderr,
            diverged,
            reps,
        }
    }

    /// CSV with columns `n,mean,stderr,diverged`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["n", "mean", "stderr", "diverged"])?;
        for (n, ((m, s), d)) in self.mean.iter().zip(&self.stderr).zip(&self.diverged).enumerate() {
            w.write_record(&[n.to_string(), m.to_string(), s.to_string(), d.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `reps` replications in parallel; results are ordered by replication index.
pub fn replicate(
    instance: &Instance,
    alg: &AlgorithmSpec,
    horizon: u64,
    reps: usize,
    master_seed: u64,
) -> Result<Vec<Trajectory>> {
    (0..reps as u64)
        .into_par_iter()
        .map(|i| instance.run(alg, horizon, replication_seed(master_seed, i)))
        .collect()
}

/// Comparison settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareSpec {
    pub problem: ProblemSpec,
    pub noise: NoiseModel,
    pub horizon: u64,
    pub reps: usize,
    pub master_seed: u64,
    /// Use the step-dependent variant of the horizon-dependent unified schedule.
    #[serde(default)]
    pub anytime: bool,
}

impl CompareSpec {
    /// Structured-noise comparison on a `1/k²` spectrum of dimension 20 over `10⁴` steps.
    pub fn structured(sigma: f64, r: f64, reps: usize, master_seed: u64) -> Self {
        Self {
            problem: ProblemSpec {
                d: 20,
                spectrum_m: 2,
                eigenvalues: None,
                r,
                seed: master_seed,
            },
            noise: NoiseModel::Structured { sigma },
            horizon: 10_000,
            reps,
            master_seed,
            anytime: false,
        }
    }

    /// Unified (optimal schedule), Av-GD with step `1/(4 tr H)`, Acc-GD with `1/L`, and the three baselines.
    pub fn algorithms(&self, instance: &Instance) -> Vec<AlgorithmSpec> {
        let schedule = match self.noise {
            NoiseModel::Additive { .. } => ScheduleKind::OptimalUnstructured,
            _ => ScheduleKind::OptimalStructured,
        };
        vec![
            AlgorithmSpec::Unified {
                name: Some("unified".into()),
                schedule,
                anytime: self.anytime,
            },
            AlgorithmSpec::Unified {
                name: Some("av_gd".into()),
                schedule: ScheduleKind::AvGd {
                    gamma: 1.0 / (4.0 * instance.problem.input_radius_sq()),
                },
                anytime: false,
            },
            AlgorithmSpec::Unified {
                name: Some("acc_gd".into()),
                schedule: ScheduleKind::AccGd {
                    gamma: 1.0 / instance.l(),
                },
                anytime: false,
            },
            AlgorithmSpec::AcSa,
            AlgorithmSpec::Sage,
            AlgorithmSpec::AccRda,
        ]
    }
}

/// Per-algorithm comparison output.
#[derive(Clone, Debug)]
pub struct AlgorithmCurve {
    pub name: String,
    pub summary: Summary,
    /// Exact expectation on [`CompareResult::grid`], where available.
    pub exact: Option<Vec<f64>>,
    pub slope: f64,
    pub exact_slope: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct CompareResult {
    pub grid: Vec<u64>,
    pub curves: Vec<AlgorithmCurve>,
    /// True when the noise model is outside the theorems' assumptions.
    pub conjectural: bool,
}

impl CompareResult {
    pub fn curve(&self, name: &str) -> Option<&AlgorithmCurve> {
        self.curves.iter().find(|c| c.name == name)
    }

    /// Long-format CSV `algorithm,n,log10_n,mean,stderr,log10_mean,exact,diverged` on the log grid.
    pub fn write_curves_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "algorithm",
            "n",
            "log10_n",
            "mean",
            "stderr",
            "log10_mean",
            "exact",
            "diverged",
        ])?;
        for c in &self.curves {
            for (j, &n) in self.grid.iter().enumerate() {
                let i = n as usize;
                let m = c.summary.mean[i];
                let exact = c.exact.as_ref().map_or(String::new(), |e| e[j].to_string());
                w.write_record(&[
                    c.name.clone(),
                    n.to_string(),
                    (n as f64).log10().to_string(),
                    m.to_string(),
                    c.summary.stderr[i].to_string(),
                    m.log10().to_string(),
                    exact,
                    c.summary.diverged[i].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// CSV `algorithm,slope,exact_slope,final_mean,final_stderr,diverged_runs`.
    pub fn write_slopes_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "algorithm",
            "slope",
            "exact_slope",
            "final_mean",
            "final_stderr",
            "diverged_runs",
        ])?;
        for c in &self.curves {
            w.write_record(&[
                c.name.clone(),
                c.slope.to_string(),
                c.exact_slope.map_or(String::new(), |s| s.to_string()),
                c.summary.mean.last().copied().unwrap_or(f64::NAN).to_string(),
                c.summary.stderr.last().copied().unwrap_or(f64::NAN).to_string(),
                c.summary.diverged.last().copied().unwrap_or(0).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs every algorithm of `spec` on a shared problem and shared per-replication noise.
pub fn compare(spec: &CompareSpec) -> Result<CompareResult> {
    if spec.reps == 0 {
        return Err(Error::InvalidParameter("reps must be >= 1".into()));
    }
    if spec.horizon < 10 {
        return Err(Error::InvalidParameter("compare needs a horizon of at least 10".into()));
    }
    let instance = Instance::new(spec.problem.clone(), spec.noise.clone())?;
    let algorithms = spec.algorithms(&instance);
    let decade = last_decade(spec.horizon);
    let mut grid = log_spaced(1, spec.horizon, 200);
    grid.extend(&decade);
    grid.sort_unstable();
    grid.dedup();

    let curves = algorithms
        .par_iter()
        .map(|alg| {
            let trajs = replicate(&instance, alg, spec.horizon, spec.reps, spec.master_seed)?;
            let summary = Summary::from_trajectories(&trajs);
            let slope = last_decade_slope(&summary.mean);
            let exact = instance.expected(alg, spec.horizon, &grid).or_else(|e| match e {
                // an unstable method has no finite expectation to report
                Error::Diverged { .. } => Ok(None),
                e => Err(e),
            })?;
            let exact_slope = exact.as_ref().map(|e| {
                let vals: Vec<f64> = decade
                    .iter()
                    .map(|n| e[grid.binary_search(n).expect("decade is in the grid")])
                    .collect();
                loglog_slope(&decade, &vals)
            });
            Ok(AlgorithmCurve {
                name: alg.name(),
                summary,
                exact,
                slope,
                exact_slope,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CompareResult {
        grid,
        curves,
        conjectural: matches!(spec.noise, NoiseModel::Sgd { .. }),
    })
}
