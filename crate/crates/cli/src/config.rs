//! Experiment configuration files (TOML or JSON).

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use smagda::bounds::{GeneratorSpec, SearchSpec};
use smagda::dro::{parse_libsvm, DroProblem, DroSettings, IngestReport};
use smagda::harness::{InitMode, TuneGrid};
use smagda::ncpl::NcplConfig;
use smagda::optimizer::{derive_params, SmAgdaParams};
use smagda::{NoiseSpec, ProblemConstants};

use crate::Failure;

/// Reads a config file; `.json` files are parsed as JSON, anything else as
/// TOML.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    parse(&text, path.extension().and_then(|e| e.to_str()) == Some("json"))
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

pub fn parse<T: DeserializeOwned>(text: &str, json: bool) -> Result<T, String> {
    if json {
        serde_json::from_str(text).map_err(|e| e.to_string())
    } else {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemConfig {
    Ncpl(NcplConfig),
    Dro(DroDataConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DroDataConfig {
    /// LIBSVM file; relative paths resolve against the config file.
    pub data: PathBuf,
    #[serde(default)]
    pub min_d1: Option<usize>,
    /// Scale features by their largest absolute value.
    #[serde(default)]
    pub normalize: bool,
    #[serde(default)]
    pub settings: DroSettings,
}

impl DroDataConfig {
    pub fn load(&self, base: &Path) -> Result<(DroProblem, IngestReport), Failure> {
        let path = if self.data.is_absolute() { self.data.clone() } else { base.join(&self.data) };
        let (mut data, report) = parse_libsvm(&path, self.min_d1)?;
        if self.normalize {
            data.normalize_max_abs();
        }
        Ok((DroProblem::new(data, self.settings)?, report))
    }
}

fn default_alpha() -> f64 {
    1.0 / 1600.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ParamsConfig {
    /// `p = 2ℓ`, `τ₂ = τ₁/48`, `β = αμτ₂`. The primal step is `tau1` if
    /// given, else `tau1_times_ell / ℓ`, else the horizon rule when
    /// `horizon_delta0_b0` is set, else `1/(3ℓ)`.
    Theory {
        #[serde(rename = "T")]
        iterations: usize,
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default)]
        tau1: Option<f64>,
        #[serde(default)]
        tau1_times_ell: Option<f64>,
        #[serde(default)]
        horizon_delta0_b0: Option<f64>,
    },
    Free {
        #[serde(rename = "T")]
        iterations: usize,
        tau1: f64,
        tau2: f64,
        beta: f64,
        p: f64,
    },
}

impl ParamsConfig {
    pub fn resolve(&self, constants: &ProblemConstants, noise: &NoiseSpec) -> Result<SmAgdaParams, Failure> {
        let params = match *self {
            ParamsConfig::Theory {
                iterations,
                alpha,
                tau1,
                tau1_times_ell,
                horizon_delta0_b0,
            } => {
                let set = [tau1.is_some(), tau1_times_ell.is_some(), horizon_delta0_b0.is_some()];
                if set.iter().filter(|&&b| b).count() > 1 {
                    return Err(Failure::Config(
                        "params: set at most one of tau1, tau1_times_ell, horizon_delta0_b0".into(),
                    ));
                }
                if let Some(d) = horizon_delta0_b0 {
                    derive_params(constants, iterations, d, noise.total(), alpha)?
                } else {
                    let tau1 = tau1
                        .or(tau1_times_ell.map(|c| c / constants.ell()))
                        .unwrap_or(1.0 / (3.0 * constants.ell()));
                    SmAgdaParams::theory(constants, tau1, alpha, iterations)?
                }
            }
            ParamsConfig::Free {
                iterations,
                tau1,
                tau2,
                beta,
                p,
            } => SmAgdaParams::free(tau1, tau2, beta, p, iterations)?,
        };
        Ok(params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricName {
    #[serde(rename = "M_kappa")]
    MKappa,
    #[serde(rename = "distance")]
    Distance,
    #[serde(rename = "constrained_stationarity")]
    ConstrainedStationarity,
}

fn default_metrics() -> Vec<MetricName> {
    vec![MetricName::MKappa]
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSection {
    /// Use this value instead of estimating `Δ₀ + b₀`.
    #[serde(default)]
    pub delta0_b0: Option<f64>,
    #[serde(default)]
    pub search: SearchSpec,
    /// Confidence levels `q̄`; the default is the 2e−4 grid.
    #[serde(default)]
    pub mesh: Option<Vec<f64>>,
}

/// Shared by `run-ensemble`, `bound` and `compare`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub params: ParamsConfig,
    pub num_paths: usize,
    pub base_seed: u64,
    pub init: InitMode,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<MetricName>,
    /// Record metrics only at these iterations (default: every iteration).
    #[serde(default)]
    pub checkpoints: Option<Vec<usize>>,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub bound: BoundSection,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), Failure> {
        if self.num_paths == 0 {
            return Err(Failure::Config("num_paths: must be at least 1".into()));
        }
        if self.metrics.is_empty() {
            return Err(Failure::Config("metrics: must not be empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedParams {
    pub tau1: f64,
    /// Defaults to `tau1 / 48`.
    #[serde(default)]
    pub tau2: Option<f64>,
    pub beta: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneSection {
    #[serde(default)]
    pub grid: TuneGrid,
    pub epochs: usize,
    pub paths: usize,
}

fn default_runs() -> usize {
    20
}

fn default_epochs() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DroRunConfig {
    pub problem: DroDataConfig,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    pub seed: u64,
    /// Grid search for the parameters; the winner is used for the runs.
    #[serde(default)]
    pub tune: Option<TuneSection>,
    /// Used when `tune` is absent.
    #[serde(default)]
    pub params: Option<FixedParams>,
    /// Epochs at which the metric is recorded (default: every epoch).
    #[serde(default)]
    pub checkpoint_epochs: Option<Vec<usize>>,
    #[serde(default)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcentrationConfig {
    /// `σ_C²` and `σ_D²` of the inequality being checked.
    pub sigma_c_sq: f64,
    pub sigma_d_sq: f64,
    pub tau1: f64,
    #[serde(rename = "T")]
    pub iterations: usize,
    pub qbar: f64,
    pub trials: usize,
    pub seed: u64,
    /// Defaults to the maximal generator for the given `σ` values.
    #[serde(default)]
    pub generator: Option<GeneratorSpec>,
}
