use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use avacc_core::bounds::{
    function_bound_noiseless, function_bound_structured, function_bound_unstructured, iterate_bound, lower_bound_point,
    write_bounds_csv, BoundsCheckRow, LowerBoundRegime,
};
use avacc_core::experiment::{compare, replicate, Instance, NoiseModel, ProblemSpec, Summary};
use avacc_core::moments::expected_excess;
use avacc_core::spectral::{closed_form_excess, linspace, stability_map, write_stability_csv, EigenMode};
use avacc_core::{Error, NoiseSpec, StepPair};

use crate::config::{load, CompareConfig, RunConfig};
use crate::{CliError, Common};

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

pub fn run(common: &Common) -> Result<(), CliError> {
    let path = common
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("`run` needs --config".into()))?;
    let mut cfg: RunConfig = load(path)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(reps) = common.reps {
        cfg.reps = reps;
    }
    if common.anytime {
        for alg in &mut cfg.algorithms {
            if let avacc_core::AlgorithmSpec::Unified { anytime, .. } = alg {
                *anytime = true;
            }
        }
    }
    cfg.validate()?;
    let instance = Instance::new(cfg.problem.clone(), cfg.noise.clone())?;
    let summaries = cfg
        .algorithms
        .par_iter()
        .map(|alg| {
            let trajs = replicate(&instance, alg, cfg.horizon, cfg.reps, cfg.seed)?;
            Ok((alg.name(), Summary::from_trajectories(&trajs)))
        })
        .collect::<Result<Vec<_>, Error>>()?;

    let mut diverged = Vec::new();
    for (name, summary) in &summaries {
        summary.write_csv(create(&common.out, &format!("{name}.csv"))?)?;
        let count = summary.diverged.last().copied().unwrap_or(0);
        if count > 0 {
            diverged.push(format!("{name} ({count}/{} runs)", cfg.reps));
        }
        println!(
            "{name}: final mean excess {:.6e} ± {:.2e}",
            summary.mean.last().copied().unwrap_or(f64::NAN),
            summary.stderr.last().copied().unwrap_or(f64::NAN)
        );
    }
    serde_json::to_writer_pretty(create(&common.out, "run_config.json")?, &cfg)?;
    if !diverged.is_empty() && !cfg.expect_divergence {
        return Err(CliError::Diverged(diverged.join(", ")));
    }
    Ok(())
}

#[derive(Clone, Debug, clap::Args)]
pub struct MapArgs {
    /// Range of α·h as `lo,hi`.
    #[arg(long, default_value = "-0.5,4.5", value_parser = parse_range)]
    pub alpha: (f64, f64),
    /// Range of β·h as `lo,hi`.
    #[arg(long, default_value = "-0.5,4.5", value_parser = parse_range)]
    pub beta: (f64, f64),
    /// Eigenvalue `h`; grid values are divided by it.
    #[arg(long, default_value_t = 1.0)]
    pub h: f64,
    /// Points per axis.
    #[arg(long, default_value_t = 200)]
    pub resolution: usize,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected `lo,hi`")?;
    let lo: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((lo, hi))
}

pub fn stability(common: &Common, args: &MapArgs) -> Result<(), CliError> {
    let (alo, ahi) = args.alpha;
    let (blo, bhi) = args.beta;
    if !(alo < ahi && blo < bhi) || args.resolution < 2 {
        return Err(CliError::Config("empty range: need lo < hi and resolution >= 2".into()));
    }
    if !(args.h > 0.0 && args.h.is_finite()) {
        return Err(CliError::Config("h must be positive".into()));
    }
    let alphas: Vec<f64> = linspace(alo, ahi, args.resolution).iter().map(|v| v / args.h).collect();
    let betas: Vec<f64> = linspace(blo, bhi, args.resolution).iter().map(|v| v / args.h).collect();
    let cells = stability_map(&alphas, &betas, args.h);
    write_stability_csv(&cells, create(&common.out, "stability_map.csv")?)?;
    let stable = cells.iter().filter(|c| c.mode.stability.is_bounded()).count();
    println!("{} cells, {stable} bounded", cells.len());
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    /// Iterate bound on the top mode, started at η₁ = r.
    Iterate,
    /// Noiseless function-value bound.
    Noiseless,
    /// Expected excess under unstructured noise.
    Unstructured,
    /// Expected excess under structured noise.
    Structured,
}

/// Grid and instance for `bounds-check`. Step ranges are in units of `1/L`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsConfig {
    pub problem: ProblemSpec,
    pub noise: NoiseModel,
    pub horizon: u64,
    pub resolution: usize,
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            problem: ProblemSpec {
                d: 20,
                spectrum_m: 2,
                eigenvalues: None,
                r: 1.0,
                seed: 0,
            },
            noise: NoiseModel::Structured { sigma: 1.0 },
            horizon: 1000,
            resolution: 20,
            alpha: [0.0, 1.0],
            beta: [0.0, 2.0],
        }
    }
}

#[derive(Clone, Debug, clap::Args)]
pub struct BoundsArgs {
    #[arg(long, value_enum)]
    pub theorem: Theorem,
    /// Overrides the configured horizon.
    #[arg(long)]
    pub horizon: Option<u64>,
    /// Overrides the configured points per axis.
    #[arg(long)]
    pub resolution: Option<usize>,
}

pub fn bounds(common: &Common, args: &BoundsArgs) -> Result<(), CliError> {
    let mut cfg: BoundsConfig = match &common.config {
        Some(p) => load(p)?,
        None => BoundsConfig::default(),
    };
    if let Some(n) = args.horizon {
        cfg.horizon = n;
    }
    if let Some(r) = args.resolution {
        cfg.resolution = r;
    }
    if let Some(seed) = common.seed {
        cfg.problem.seed = seed;
    }
    if cfg.horizon < 1 || cfg.resolution < 1 {
        return Err(CliError::Config("horizon and resolution must be >= 1".into()));
    }
    let instance = Instance::new(cfg.problem.clone(), cfg.noise.clone())?;
    let (l, r, n) = (instance.l(), instance.r, cfg.horizon);
    let eigs = instance.problem.eigenvalues();
    match (args.theorem, &instance.spec) {
        (Theorem::Unstructured, NoiseSpec::Unstructured { .. })
        | (Theorem::Structured, NoiseSpec::Structured { .. }) => {}
        (Theorem::Unstructured | Theorem::Structured, _) => {
            return Err(CliError::Config(format!(
                "theorem `{:?}` needs matching noise in the config",
                args.theorem
            )))
        }
        _ => {}
    }
    let axis = |range: [f64; 2]| {
        if cfg.resolution == 1 {
            vec![range[0] / l]
        } else {
            linspace(range[0], range[1], cfg.resolution)
                .iter()
                .map(|v| v / l)
                .collect::<Vec<_>>()
        }
    };
    let pairs: Vec<StepPair> = axis(cfg.alpha)
        .iter()
        .flat_map(|&a| axis(cfg.beta).into_iter().map(move |b| StepPair::new(a, b)))
        .collect();

    let rows = pairs
        .par_iter()
        .map(|&pair| {
            let finite_or_inf = |v: avacc_core::Result<f64>| match v {
                Ok(v) => Ok(v),
                Err(Error::Diverged { .. }) => Ok(f64::INFINITY),
                Err(e) => Err(e),
            };
            let (empirical, report) = match args.theorem {
                Theorem::Iterate => {
                    let eta = r * EigenMode::new(pair, l).unit_response(n);
                    (eta * eta, iterate_bound(pair, l, r, n))
                }
                Theorem::Noiseless => (
                    closed_form_excess(&instance.problem, &instance.theta0, pair, n)?,
                    function_bound_noiseless(pair, l, r, n),
                ),
                Theorem::Unstructured => (
                    finite_or_inf(expected_excess(
                        &instance.problem,
                        &instance.theta0,
                        pair,
                        &instance.spec,
                        n,
                    ))?,
                    function_bound_unstructured(pair, l, r, instance.spec.trace_c(), n),
                ),
                Theorem::Structured => (
                    finite_or_inf(expected_excess(
                        &instance.problem,
                        &instance.theta0,
                        pair,
                        &instance.spec,
                        n,
                    ))?,
                    function_bound_structured(pair, l, r, instance.spec.trace_c_hinv(eigs), n),
                ),
            };
            Ok(BoundsCheckRow::new(pair, n, empirical, &report))
        })
        .collect::<Result<Vec<_>, Error>>()?;
    write_bounds_csv(&rows, create(&common.out, "bounds_check.csv")?)?;
    let valid: Vec<&BoundsCheckRow> = rows.iter().filter(|r| r.preconditions_met).collect();
    let violations = valid.iter().filter(|r| r.slack < 0.0).count();
    println!(
        "{} cells, {} within the bound's validity region, {violations} violations",
        rows.len(),
        valid.len()
    );
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Regime {
    First,
    Second,
}

#[derive(Clone, Debug, clap::Args)]
pub struct LowerArgs {
    #[arg(long, value_enum)]
    pub regime: Regime,
    /// Comma-separated step counts; defaults to powers of ten up to 10⁵ (first) or 10⁴ (second).
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<u64>,
    /// Step size α; the second regime defaults to 1/n² per row.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Initial distance to the optimum.
    #[arg(long, default_value_t = 1.0)]
    pub r: f64,
}

pub fn lower(common: &Common, args: &LowerArgs) -> Result<(), CliError> {
    let (regime, top) = match args.regime {
        Regime::First => (LowerBoundRegime::First, 5),
        Regime::Second => (LowerBoundRegime::Second, 4),
    };
    let ns: Vec<u64> = if args.n.is_empty() {
        (0..=top).map(|k| 10u64.pow(k)).collect()
    } else {
        args.n.clone()
    };
    if ns.contains(&0) {
        return Err(CliError::Config("n must be >= 1".into()));
    }
    let alpha_at = |n: u64| match (args.alpha, args.regime) {
        (Some(a), _) => a,
        (None, Regime::First) => args.beta,
        (None, Regime::Second) => 1.0 / (n as f64).powi(2),
    };
    if let Some(a) = args.alpha {
        if a.is_nan() || a <= 0.0 {
            return Err(CliError::Config("alpha must be positive".into()));
        }
    }
    if args.beta.is_nan() || args.r.is_nan() || args.beta < 0.0 || args.r < 0.0 {
        return Err(CliError::Config("beta and r must be non-negative".into()));
    }
    let points: Vec<_> = ns
        .par_iter()
        .map(|&n| lower_bound_point(regime, StepPair::new(alpha_at(n), args.beta), args.r, n))
        .collect();
    let mut w = csv::Writer::from_writer(create(&common.out, "lower_bound.csv")?);
    w.write_record(["n", "curvature", "scaled_excess", "limit", "rel_error"])?;
    for p in &points {
        w.write_record(&[
            p.n.to_string(),
            p.curvature.to_string(),
            p.scaled_excess.to_string(),
            p.limit.to_string(),
            p.rel_error.to_string(),
        ])?;
        println!(
            "n = {:>7}: scaled excess {:.6}, limit {:.6}, rel. error {:.3e}",
            p.n, p.scaled_excess, p.limit, p.rel_error
        );
    }
    w.flush()?;
    Ok(())
}

pub fn compare_cmd(common: &Common) -> Result<(), CliError> {
    let mut cfg: CompareConfig = match &common.config {
        Some(p) => load(p)?,
        None => CompareConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(reps) = common.reps {
        cfg.reps = reps;
    }
    cfg.anytime |= common.anytime;
    if cfg.reps < 1 {
        return Err(CliError::Config("reps must be >= 1".into()));
    }
    let res = compare(&cfg.to_spec())?;
    res.write_curves_csv(create(&common.out, "compare_curves.csv")?)?;
    res.write_slopes_csv(create(&common.out, "compare_slopes.csv")?)?;
    if res.conjectural {
        println!("note: the SGD oracle is outside the proven setting; results are conjectural");
    }
    println!(
        "{:<10} {:>12} {:>12} {:>14}",
        "algorithm", "slope", "exact slope", "final mean"
    );
    for c in &res.curves {
        println!(
            "{:<10} {:>12.3} {:>12} {:>14.4e}",
            c.name,
            c.slope,
            c.exact_slope.map_or("-".into(), |s| format!("{s:.3}")),
            c.summary.mean.last().copied().unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

/// Where outputs go when `--out` is not given.
pub fn default_out() -> PathBuf {
    PathBuf::from(".")
}
