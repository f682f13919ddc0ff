//! JSON configs for each command. Unknown keys are rejected; relative paths
//! are resolved against the config file's directory.

use std::path::{Path, PathBuf};

use mrbm::constraints::ConstraintSet;
use mrbm::diagnostics::MmdKernel;
use mrbm::geometry::Manifold;
use mrbm::samplers::Sampler;
use mrbm::scorenet::TrainConfig;
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::CliError;

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn default_seed() -> u64 {
    0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Density1d {
    #[serde(default = "half")]
    pub x0: f64,
    pub times: Vec<f64>,
    pub gammas: Vec<f64>,
    #[serde(default = "default_samplers")]
    pub samplers: Vec<Sampler>,
    pub chains: usize,
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Every slice at the smallest γ must come in under this TV.
    pub tv_target: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn half() -> f64 {
    0.5
}

fn default_bins() -> usize {
    50
}

fn default_samplers() -> Vec<Sampler> {
    vec![Sampler::Metropolis, Sampler::Reflected]
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scaling {
    pub dims: Vec<usize>,
    #[serde(default = "default_samplers")]
    pub samplers: Vec<Sampler>,
    pub gamma: f64,
    pub tv_threshold: f64,
    /// Starting point; every coordinate is set to this value.
    #[serde(default)]
    pub x0: f64,
    #[serde(default)]
    pub convergence: Option<ConvergenceSpec>,
    /// Exponent targets; missing any of them exits with code 4.
    #[serde(default)]
    pub targets: Option<ScalingTargets>,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSpec {
    pub chains: Option<usize>,
    pub checkpoint_every: Option<usize>,
    pub bins: Option<usize>,
    pub max_steps: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingTargets {
    pub metropolis_max: Option<f64>,
    pub reflected_min: Option<f64>,
    pub gap_min: Option<f64>,
}

/// Where the training data comes from.
#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Bimodal {
        manifold: Manifold,
        constraint: ConstraintSet,
        n: usize,
        #[serde(default = "default_seed")]
        seed: u64,
    },
    SpdEllipsoids {
        n: usize,
        bound: f64,
        #[serde(default = "default_seed")]
        seed: u64,
    },
    Geo {
        points: PathBuf,
        polygon: PathBuf,
    },
    /// A dataset manifest written by an earlier run.
    Manifest {
        path: PathBuf,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_beta0")]
    pub beta0: f64,
    /// A number, or absent to tune it.
    pub beta1: Option<f64>,
    #[serde(default = "default_tune_tv")]
    pub tune_tv: f64,
    pub steps: usize,
}

fn default_beta0() -> f64 {
    1e-3
}

fn default_tune_tv() -> f64 {
    0.05
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Train {
    pub dataset: DatasetSpec,
    pub grid: GridSpec,
    pub train: TrainConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sample {
    /// Directory written by `mrbm train`.
    pub run: PathBuf,
    pub n: usize,
    /// Draw from the uniform initial law instead of the model.
    #[serde(default)]
    pub uniform: bool,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mmd {
    /// Points CSV files with header `x0,x1,…`.
    pub a: PathBuf,
    pub b: PathBuf,
    /// Explicit kernel, or the matched kernel of a dataset manifest.
    pub kernel: Option<MmdKernel>,
    pub dataset: Option<PathBuf>,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_bootstrap() -> usize {
    200
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Polycheck {
    pub polygon: PathBuf,
    pub points: PathBuf,
}
