//! JSON experiment configuration.
//!
//! ```json
//! {
//!   "experiment": "gmm-fit",
//!   "parameters": { "mixture": "2comp-gap4", "alphas": [0.6, 1.0] },
//!   "output_dir": "out/gmm-fit",
//!   "seed": 7
//! }
//! ```
//!
//! `parameters` may be omitted; every parameter has a default. Unknown keys
//! are rejected at every level.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::distributions::{GaussianMixtureSpec, MixtureComponent, QuadratureConfig};
use crate::error::{Error, Result};
use crate::gmm_fit::{standard_config, Axis};
use crate::trainer::DatasetMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConfig", into = "RawConfig")]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: String,
    #[serde(default)]
    parameters: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output_dir: Option<PathBuf>,
    #[serde(default)]
    seed: u64,
}

impl TryFrom<RawConfig> for ExperimentConfig {
    type Error = Error;

    fn try_from(raw: RawConfig) -> Result<Self> {
        let parameters = match raw.parameters {
            serde_json::Value::Null => serde_json::Value::Object(Default::default()),
            v => v,
        };
        let tagged = serde_json::json!({ "experiment": raw.experiment, "parameters": parameters });
        let experiment = serde_json::from_value(tagged).map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self {
            experiment,
            output_dir: raw.output_dir,
            seed: raw.seed,
        })
    }
}

impl From<ExperimentConfig> for RawConfig {
    fn from(cfg: ExperimentConfig) -> Self {
        let mut tagged = serde_json::to_value(&cfg.experiment).expect("parameters serialize");
        let obj = tagged.as_object_mut().expect("adjacently tagged");
        Self {
            experiment: obj["experiment"].as_str().expect("tag").to_string(),
            parameters: obj.remove("parameters").unwrap_or_default(),
            output_dir: cfg.output_dir,
            seed: cfg.seed,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            output_dir: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", content = "parameters", rename_all = "kebab-case")]
pub enum Experiment {
    GmmFit(GmmFitParams),
    GmmHeatmap(GmmHeatmapParams),
    Train(TrainParams),
    EntropySweep(EntropySweepParams),
    BetaScan(BetaScanParams),
    MetricsDemo(MetricsDemoParams),
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::GmmFit(_) => "gmm-fit",
            Experiment::GmmHeatmap(_) => "gmm-heatmap",
            Experiment::Train(_) => "train",
            Experiment::EntropySweep(_) => "entropy-sweep",
            Experiment::BetaScan(_) => "beta-scan",
            Experiment::MetricsDemo(_) => "metrics-demo",
        }
    }
}

/// A named standard mixture such as `"2comp-gap4"`, or explicit components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MixtureSource {
    Named(String),
    Components(Vec<MixtureComponent>),
}

impl Default for MixtureSource {
    fn default() -> Self {
        MixtureSource::Named("2comp-gap4".to_string())
    }
}

impl MixtureSource {
    pub fn resolve(&self) -> Result<GaussianMixtureSpec> {
        match self {
            MixtureSource::Named(name) => standard_config(name).ok_or_else(|| Error::Config(format!("unknown mixture `{name}`"))),
            MixtureSource::Components(c) => GaussianMixtureSpec::new(c.clone()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            MixtureSource::Named(name) => name.clone(),
            MixtureSource::Components(_) => "custom".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmmFitParams {
    pub mixture: MixtureSource,
    pub alphas: Vec<f64>,
    /// Search grids; default to the box around the mixture.
    pub mu_grid: Option<Axis>,
    pub sigma_grid: Option<Axis>,
    pub quadrature: QuadratureConfig,
}

impl Default for GmmFitParams {
    fn default() -> Self {
        Self {
            mixture: MixtureSource::default(),
            alphas: vec![0.6, 1.0],
            mu_grid: None,
            sigma_grid: None,
            quadrature: QuadratureConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmmHeatmapParams {
    pub mixture: MixtureSource,
    pub alpha: f64,
    /// Heatmap axes; default to 200 x 200 over the fit search box.
    pub mu_range: Option<Axis>,
    pub sigma_range: Option<Axis>,
    pub quadrature: QuadratureConfig,
}

impl Default for GmmHeatmapParams {
    fn default() -> Self {
        Self {
            mixture: MixtureSource::default(),
            alpha: 0.6,
            mu_range: None,
            sigma_range: None,
            quadrature: QuadratureConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceKind {
    /// Softmax of i.i.d. standard normal logits.
    #[default]
    Random,
    Uniform,
}

/// A random task: rewards i.i.d. N(0, 1), uniform prompt weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskParams {
    pub n_prompts: usize,
    pub n_completions: usize,
    pub reference: ReferenceKind,
}

impl Default for TaskParams {
    fn default() -> Self {
        Self {
            n_prompts: 3,
            n_completions: 6,
            reference: ReferenceKind::Random,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub learning_rate: f64,
    pub max_steps: usize,
    pub grad_norm_tol: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let d = crate::trainer::TrainConfig::default();
        Self {
            learning_rate: d.learning_rate,
            max_steps: d.max_steps,
            grad_norm_tol: d.grad_norm_tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainParams {
    pub task: TaskParams,
    pub alpha: f64,
    pub beta: f64,
    pub dataset: DatasetMode,
    pub training: TrainSettings,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            task: TaskParams::default(),
            alpha: 1.0,
            beta: 1.0,
            dataset: DatasetMode::Population,
            training: TrainSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntropySweepParams {
    pub task: TaskParams,
    pub alphas: Vec<f64>,
    pub beta: f64,
    pub training: TrainSettings,
}

impl Default for EntropySweepParams {
    fn default() -> Self {
        Self {
            task: TaskParams::default(),
            alphas: vec![0.8, 0.9, 0.95, 1.0, 1.1, 1.2],
            beta: 1.0,
            training: TrainSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanInstance {
    /// One prompt, reference (0.5, 0.49, 0.01), rewards (0, 0, 0.05).
    #[default]
    Designated,
    /// A random task as configured by `task`.
    Task,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BetaScanParams {
    pub instance: ScanInstance,
    pub task: TaskParams,
    pub alpha: f64,
    pub beta: f64,
    pub beta_grid: Axis,
    /// Adds `alpha * beta` to the grid.
    pub include_alpha_beta: bool,
}

impl Default for BetaScanParams {
    fn default() -> Self {
        Self {
            instance: ScanInstance::Designated,
            task: TaskParams::default(),
            alpha: 0.9,
            beta: 0.01,
            beta_grid: Axis::linear(0.001, 0.1, 200),
            include_alpha_beta: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsDemoParams {
    pub vocab_size: usize,
    pub logit_scale: f64,
    pub stop_bias: f64,
    pub temperatures: Vec<f64>,
    pub n_prompts: usize,
    pub responses_per_prompt: usize,
    pub max_len: usize,
    pub ks: Vec<usize>,
}

impl Default for MetricsDemoParams {
    fn default() -> Self {
        Self {
            vocab_size: 8,
            logit_scale: 1.0,
            stop_bias: 0.0,
            temperatures: vec![0.25, 0.5, 0.75, 1.0],
            n_prompts: 40,
            responses_per_prompt: 25,
            max_len: 20,
            ks: vec![1, 5, 10, 25],
        }
    }
}
