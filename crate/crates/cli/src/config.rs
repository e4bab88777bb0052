use std::path::Path;

use serde::{Deserialize, Serialize};

use avacc_core::experiment::{AlgorithmSpec, CompareSpec, NoiseModel, ProblemSpec};

use crate::CliError;

/// Configuration of `avacc run`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub horizon: u64,
    pub reps: usize,
    pub seed: u64,
    pub problem: ProblemSpec,
    pub noise: NoiseModel,
    pub algorithms: Vec<AlgorithmSpec>,
    /// Divergence is reported in the CSV either way; unless this is set it also fails the command.
    #[serde(default)]
    pub expect_divergence: bool,
}

/// Configuration of `avacc compare`; every field has the documented default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareConfig {
    pub horizon: u64,
    pub reps: usize,
    pub seed: u64,
    pub d: usize,
    pub spectrum_m: u32,
    pub r: f64,
    pub noise: NoiseModel,
    pub anytime: bool,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            horizon: 10_000,
            reps: 10,
            seed: 0,
            d: 20,
            spectrum_m: 2,
            r: 1.0,
            noise: NoiseModel::Structured { sigma: 1.0 },
            anytime: false,
        }
    }
}

impl CompareConfig {
    pub fn to_spec(&self) -> CompareSpec {
        CompareSpec {
            problem: ProblemSpec {
                d: self.d,
                spectrum_m: self.spectrum_m,
                eigenvalues: None,
                r: self.r,
                seed: self.seed,
            },
            noise: self.noise.clone(),
            horizon: self.horizon,
            reps: self.reps,
            master_seed: self.seed,
            anytime: self.anytime,
        }
    }
}

pub fn load<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.reps < 1 {
            return Err(CliError::Config("reps must be >= 1".into()));
        }
        if self.horizon < 1 {
            return Err(CliError::Config("horizon must be >= 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(CliError::Config("at least one algorithm is required".into()));
        }
        let mut names: Vec<String> = self.algorithms.iter().map(AlgorithmSpec::name).collect();
        names.sort();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(CliError::Config(format!(
                "two algorithms share the output name `{}`; set `name` to distinguish them",
                w[0]
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use avacc_core::ScheduleKind;

    #[test]
    fn parses_run_config() {
        let text = r#"
            horizon = 100
            reps = 3
            seed = 7

            [problem]
            d = 4
            spectrum_m = 2
            r = 1.0
            seed = 1

            [noise]
            kind = "structured"
            sigma = 0.5

            [[algorithms]]
            algorithm = "unified"
            schedule = { kind = "av_gd", gamma = 0.25 }

            [[algorithms]]
            algorithm = "sage"
        "#;
        let cfg: RunConfig = toml::from_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.algorithms.len(), 2);
        assert!(matches!(
            cfg.algorithms[0],
            AlgorithmSpec::Unified {
                schedule: ScheduleKind::AvGd { gamma },
                anytime: false,
                ..
            } if gamma == 0.25
        ));
    }

    #[test]
    fn duplicate_names_rejected() {
        let text = r#"
            horizon = 10
            reps = 1
            seed = 0
            problem = { d = 2, r = 1.0, seed = 0 }
            noise = { kind = "none" }
            algorithms = [{ algorithm = "sage" }, { algorithm = "sage" }]
        "#;
        let cfg: RunConfig = toml::from_str(text).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn compare_defaults() {
        let cfg: CompareConfig = toml::from_str("seed = 3").unwrap();
        assert_eq!(cfg.horizon, 10_000);
        assert_eq!(cfg.d, 20);
        assert_eq!(cfg.to_spec().master_seed, 3);
    }
}
