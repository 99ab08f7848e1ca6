//! One TOML config file drives every pipeline stage; command-line flags
//! override file values. Missing sections and keys fall back to defaults.

use std::path::Path;

use serde::Deserialize;

use cwsynth::cramer_wold::{Bandwidth, CwConfig, KernelMode};
use cwsynth::error::{Error, Result};
use cwsynth::metrics::{EvaluateConfig, VarPredConfig};
use cwsynth::prior::KdeBandwidth;
use cwsynth::trainer::Step1Config;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub cw: CwSection,
    #[serde(default)]
    pub classifier: ClassifierSection,
    #[serde(default)]
    pub prior: PriorSection,
    #[serde(default)]
    pub evaluate: EvaluateSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub latent_dim: Option<usize>,
    pub hidden: Option<Vec<usize>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
    pub entropy_reg: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CwSection {
    /// Smoothing bandwidth; omit for the automatic rule.
    pub kappa: Option<f64>,
    /// "exact" | "asymptotic" | "auto"
    pub kernel_mode: Option<String>,
    pub mc_projections: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierSection {
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    /// "gmm" | "kde"
    pub kind: Option<String>,
    pub components: Option<usize>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    /// KDE bandwidth; omit for the automatic rule.
    pub bandwidth: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSection {
    pub log_cluster_groups: Option<usize>,
    pub var_pred_epochs: Option<usize>,
    pub var_pred_learning_rate: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<FileConfig> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    pub fn cw_config(&self, seed: u64) -> Result<CwConfig> {
        let kernel_mode = match self.cw.kernel_mode.as_deref() {
            None | Some("auto") => KernelMode::Auto,
            Some("exact") => KernelMode::ExactSeries,
            Some("asymptotic") => KernelMode::Asymptotic,
            Some(other) => {
                return Err(Error::InvalidConfig(format!(
                    "unknown kernel_mode '{other}' (expected exact | asymptotic | auto)"
                )))
            }
        };
        Ok(CwConfig {
            kappa: match self.cw.kappa {
                None => Bandwidth::Auto,
                Some(k) => Bandwidth::Fixed(k),
            },
            kernel_mode,
            mc_projections: self.cw.mc_projections.unwrap_or(10_000),
            seed,
        })
    }

    pub fn step1_config(&self, seed: u64) -> Result<Step1Config> {
        let defaults = Step1Config::default();
        Ok(Step1Config {
            latent_dim: self.model.latent_dim.unwrap_or(defaults.latent_dim),
            hidden: self.model.hidden.clone().unwrap_or(defaults.hidden),
            epochs: self.train.epochs.unwrap_or(defaults.epochs),
            batch_size: self.train.batch_size.unwrap_or(defaults.batch_size),
            learning_rate: self.train.learning_rate.unwrap_or(defaults.learning_rate),
            lambda: self.train.lambda.unwrap_or(defaults.lambda),
            gamma: self.train.gamma.unwrap_or(defaults.gamma),
            use_entropy_reg: self.train.entropy_reg.unwrap_or(defaults.use_entropy_reg),
            cw: self.cw_config(seed)?,
            seed,
        })
    }

    pub fn classifier_params(&self) -> (usize, f64) {
        (
            self.classifier.epochs.unwrap_or(60),
            self.classifier.learning_rate.unwrap_or(0.1),
        )
    }

    pub fn prior_kind(&self) -> Result<PriorKind> {
        match self.prior.kind.as_deref() {
            None | Some("gmm") => Ok(PriorKind::Gmm {
                components: self.prior.components.unwrap_or(10),
                max_iters: self.prior.max_iters.unwrap_or(200),
                tol: self.prior.tol.unwrap_or(1e-6),
            }),
            Some("kde") => Ok(PriorKind::Kde {
                bandwidth: match self.prior.bandwidth {
                    None => KdeBandwidth::Auto,
                    Some(h) => KdeBandwidth::Fixed(h),
                },
            }),
            Some(other) => Err(Error::InvalidConfig(format!(
                "unknown prior kind '{other}' (expected gmm | kde)"
            ))),
        }
    }

    pub fn evaluate_config(&self, seed: u64) -> EvaluateConfig {
        let defaults = VarPredConfig::default();
        EvaluateConfig {
            log_cluster_groups: self.evaluate.log_cluster_groups.unwrap_or(20),
            var_pred: VarPredConfig {
                epochs: self.evaluate.var_pred_epochs.unwrap_or(defaults.epochs),
                learning_rate: self
                    .evaluate
                    .var_pred_learning_rate
                    .unwrap_or(defaults.learning_rate),
                seed,
            },
            seed,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum PriorKind {
    Gmm {
        components: usize,
        max_iters: usize,
        tol: f64,
    },
    Kde {
        bandwidth: KdeBandwidth,
    },
}
