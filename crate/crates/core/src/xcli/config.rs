//! Run configuration, read from a TOML document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::SignalKind;
use crate::regularizers::Regularizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    IdentifiabilitySweep,
    NoiseRobustness,
    ModelIdentification,
    ConsistencySweep,
    SureCurve,
    FbTrace,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::IdentifiabilitySweep,
        Experiment::NoiseRobustness,
        Experiment::ModelIdentification,
        Experiment::ConsistencySweep,
        Experiment::SureCurve,
        Experiment::FbTrace,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::IdentifiabilitySweep => "identifiability-sweep",
            Experiment::NoiseRobustness => "noise-robustness",
            Experiment::ModelIdentification => "model-identification",
            Experiment::ConsistencySweep => "consistency-sweep",
            Experiment::SureCurve => "sure-curve",
            Experiment::FbTrace => "fb-trace",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegularizerKind {
    #[default]
    L1,
    Group,
    Linf,
    Nuclear,
    /// Analysis ℓ1 with the 1-D forward-difference operator.
    Tv,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dimensions {
    pub n: Option<usize>,
    pub p: Option<usize>,
    pub p_grid: Option<Vec<usize>>,
    pub k: Option<usize>,
    pub k_grid: Option<Vec<usize>>,
    pub n0: Option<usize>,
    pub block_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum LambdaRule {
    Fixed { value: f64 },
    /// `λ = c·‖w‖`.
    NoiseMultiple { c: f64 },
    Grid { values: Vec<f64> },
    /// `λ_P = scale·P^a`.
    PPower {
        a: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// Small-noise caps found by bisection on a pilot set.
    Calibrated,
}

fn one() -> f64 {
    1.0
}

/// Experiment knobs; unset fields take per-experiment defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Options {
    pub normalize: Option<bool>,
    pub accelerate: Option<bool>,
    pub tol_rel: Option<f64>,
    pub max_iter: Option<usize>,
    pub max_attempts: Option<usize>,
    pub controls: Option<bool>,
    pub control_trials: Option<usize>,
    pub control_lambda: Option<f64>,
    pub pilot_trials: Option<usize>,
    pub cap_fraction: Option<f64>,
    pub noise_ratio: Option<f64>,
    pub rho: Option<f64>,
    pub control_exponents: Option<Vec<f64>>,
    pub mc_probes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub dimensions: Dimensions,
    #[serde(default)]
    pub regularizer: RegularizerKind,
    #[serde(default)]
    pub noise_levels: Vec<f64>,
    pub lambda_rule: Option<LambdaRule>,
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub options: Options,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is serializable")
    }

    /// Signal length, `n0²` for the nuclear norm.
    pub fn n(&self) -> Result<usize> {
        match (self.regularizer, self.dimensions.n, self.dimensions.n0) {
            (RegularizerKind::Nuclear, n, Some(n0)) => {
                if n.is_some_and(|n| n != n0 * n0) {
                    return Err(config_err(format!("dimensions.n must equal n0² = {}", n0 * n0)));
                }
                Ok(n0 * n0)
            }
            (RegularizerKind::Nuclear, _, None) => Err(config_err("nuclear regularizer needs dimensions.n0")),
            (_, Some(n), _) if n > 0 => Ok(n),
            _ => Err(config_err("dimensions.n must be set and positive")),
        }
    }

    pub fn p(&self) -> Result<usize> {
        match self.dimensions.p {
            Some(p) if p > 0 => Ok(p),
            _ => Err(config_err("dimensions.p must be set and positive")),
        }
    }

    pub fn k(&self) -> Result<usize> {
        self.dimensions.k.ok_or_else(|| config_err("dimensions.k must be set"))
    }

    /// `p_grid`, or the single `p`.
    pub fn p_grid(&self) -> Result<Vec<usize>> {
        let grid = match (&self.dimensions.p_grid, self.dimensions.p) {
            (Some(g), _) => g.clone(),
            (None, Some(p)) => vec![p],
            (None, None) => return Err(config_err("dimensions.p_grid (or p) must be set")),
        };
        if grid.is_empty() || grid.contains(&0) {
            return Err(config_err("dimensions.p_grid must be nonempty and positive"));
        }
        Ok(grid)
    }

    pub fn k_grid(&self) -> Result<Vec<usize>> {
        let grid = match (&self.dimensions.k_grid, self.dimensions.k) {
            (Some(g), _) => g.clone(),
            (None, Some(k)) => vec![k],
            (None, None) => return Err(config_err("dimensions.k_grid (or k) must be set")),
        };
        if grid.is_empty() {
            return Err(config_err("dimensions.k_grid must be nonempty"));
        }
        Ok(grid)
    }

    pub fn build_regularizer(&self) -> Result<Regularizer> {
        let n = self.n()?;
        match self.regularizer {
            RegularizerKind::L1 => Ok(Regularizer::L1),
            RegularizerKind::Linf => Ok(Regularizer::Linf),
            RegularizerKind::Group => {
                let b = self
                    .dimensions
                    .block_size
                    .ok_or_else(|| config_err("group regularizer needs dimensions.block_size"))?;
                Regularizer::uniform_groups(n, b).map_err(|e| config_err(e.to_string()))
            }
            RegularizerKind::Nuclear => Regularizer::nuclear(self.dimensions.n0.unwrap_or(0)),
            RegularizerKind::Tv => Regularizer::total_variation(n),
        }
    }

    /// Signal family matching the regularizer, with complexity `k`.
    pub fn signal_kind(&self, k: usize) -> SignalKind {
        match self.regularizer {
            RegularizerKind::L1 => SignalKind::sparse(k),
            RegularizerKind::Group => SignalKind::GroupSparse {
                block_size: self.dimensions.block_size.unwrap_or(1),
                active: k,
            },
            RegularizerKind::Linf => SignalKind::FlatSaturated { saturated: k },
            RegularizerKind::Nuclear => SignalKind::LowRank {
                n0: self.dimensions.n0.unwrap_or(0),
                r: k,
            },
            RegularizerKind::Tv => SignalKind::PiecewiseConstant { jumps: k },
        }
    }

    /// Checks the fields each experiment needs and the λ rule it accepts.
    pub fn validate(&self) -> Result<()> {
        use Experiment::*;
        let n = self.n()?;
        self.build_regularizer()?;
        let rule = self.lambda_rule.as_ref();
        let bad_rule = || {
            config_err(format!(
                "lambda_rule {:?} is not compatible with {}",
                rule,
                self.experiment.name()
            ))
        };
        match self.experiment {
            IdentifiabilitySweep => {
                self.p_grid()?;
                self.k_grid()?;
                if rule.is_some() {
                    return Err(bad_rule());
                }
            }
            NoiseRobustness => {
                self.p()?;
                self.k()?;
                if self.noise_levels.is_empty() || self.noise_levels.iter().any(|s| !(*s >= 0.0)) {
                    return Err(config_err("noise_levels must be nonempty and ≥ 0"));
                }
                match rule {
                    None | Some(LambdaRule::NoiseMultiple { .. }) => {}
                    _ => return Err(bad_rule()),
                }
            }
            ModelIdentification => {
                self.p()?;
                self.k()?;
                match rule {
                    None | Some(LambdaRule::Calibrated) | Some(LambdaRule::Fixed { .. }) => {}
                    _ => return Err(bad_rule()),
                }
            }
            ConsistencySweep => {
                self.p_grid()?;
                self.k()?;
                match rule {
                    None | Some(LambdaRule::PPower { .. }) => {}
                    _ => return Err(bad_rule()),
                }
            }
            SureCurve => {
                self.p()?;
                self.k()?;
                if self.noise_levels.len() != 1 || !(self.noise_levels[0] >= 0.0) {
                    return Err(config_err("sure-curve needs exactly one noise level σ ≥ 0"));
                }
                match rule {
                    Some(LambdaRule::Grid { values }) if !values.is_empty() => {}
                    _ => return Err(config_err("sure-curve needs a nonempty lambda_rule grid")),
                }
            }
            FbTrace => {
                self.p()?;
                self.k()?;
                match rule {
                    Some(LambdaRule::Fixed { .. }) => {}
                    _ => return Err(config_err("fb-trace needs lambda_rule = { rule = \"fixed\", value = ... }")),
                }
                if !self.build_regularizer()?.prox_supported() {
                    return Err(config_err("fb-trace needs a regularizer with a closed-form prox"));
                }
            }
        }
        match rule {
            Some(LambdaRule::Fixed { value }) if !(*value > 0.0) => Err(config_err("fixed λ must be > 0")),
            Some(LambdaRule::NoiseMultiple { c }) if !(*c > 0.0) => Err(config_err("λ multiple c must be > 0")),
            Some(LambdaRule::Grid { values }) if values.iter().any(|v| !(*v > 0.0)) => {
                Err(config_err("λ grid entries must be > 0"))
            }
            Some(LambdaRule::PPower { scale, .. }) if !(*scale > 0.0) => Err(config_err("λ scale must be > 0")),
            _ => {
                if let Some(k) = self.dimensions.k.into_iter().chain(self.dimensions.k_grid.iter().flatten().copied()).max() {
                    if k > n {
                        return Err(config_err(format!("k = {k} exceeds N = {n}")));
                    }
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_round_trips() {
        let text = r#"
            experiment = "consistency-sweep"
            trials = 4
            master_seed = 9
            dimensions = { n = 20, k = 3, p_grid = [50, 100] }
            lambda_rule = { rule = "p-power", a = 0.7 }
            [options]
            rho = 0.3
        "#;
        let cfg = RunConfig::from_toml(text).unwrap();
        assert_eq!(cfg.lambda_rule, Some(LambdaRule::PPower { a: 0.7, scale: 1.0 }));
        assert_eq!(cfg.options.rho, Some(0.3));
        let again = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn rejects_bad_configs() {
        let base = "experiment = \"sure-curve\"\ntrials = 1\ndimensions = { n = 8, p = 8, k = 2 }\nnoise_levels = [0.1]\n";
        assert!(RunConfig::from_toml(base).is_err());
        let ok = format!("{base}lambda_rule = {{ rule = \"grid\", values = [0.1, 0.2] }}\n");
        assert!(RunConfig::from_toml(&ok).is_ok());
        let wrong = format!("{base}lambda_rule = {{ rule = \"fixed\", value = 0.1 }}\n");
        assert!(RunConfig::from_toml(&wrong).is_err());
        assert!(RunConfig::from_toml(&format!("{ok}bogus = 1\n")).is_err());
        let big_k = ok.replace("k = 2", "k = 9");
        assert!(RunConfig::from_toml(&big_k).is_err());
        assert!(matches!(RunConfig::from_toml("trials = ").unwrap_err(), Error::Config(_)));
    }

    #[test]
    fn nuclear_dimension_from_side() {
        let text = "experiment = \"model-identification\"\ntrials = 1\nregularizer = \"nuclear\"\ndimensions = { n0 = 4, p = 12, k = 1 }\n";
        let cfg = RunConfig::from_toml(text).unwrap();
        assert_eq!(cfg.n().unwrap(), 16);
    }

    #[test]
    fn experiment_names() {
        for e in Experiment::ALL {
            assert_eq!(Experiment::from_name(e.name()), Some(e));
        }
    }
}
