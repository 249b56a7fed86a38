//! Run configuration: one JSON document, unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic, load_wide_csv, PanelDataset, SyntheticSpec, WideSchema};
use crate::error::{Error, Result};
use crate::glm::FitOptions;
use crate::preprocess::Retain;
use crate::recommend::Policy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Either a wide CSV file with its schema, or a synthetic panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<WideSchema>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaOn {
    /// One row per unique case.
    #[default]
    Cases,
    /// One row per assessment (cases weighted by panel size).
    Assessments,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessConfig {
    #[serde(default)]
    pub retain: Retain,
    #[serde(default)]
    pub pca_on: PcaOn,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            retain: Retain::default(),
            pca_on: PcaOn::Cases,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub lambda: f64,
    pub tau: f64,
    /// Threshold for the per-expert threshold policy; defaults to `tau`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub indep_tau: Option<f64>,
    pub calibrate: bool,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let f = FitOptions::default();
        ModelConfig {
            lambda: f.lambda,
            tau: f.tau,
            indep_tau: None,
            calibrate: false,
            tol: f.tol,
            max_iter: f.max_iter,
        }
    }
}

impl ModelConfig {
    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            lambda: self.lambda,
            tol: self.tol,
            max_iter: self.max_iter,
            tau: self.tau,
            best_effort: false,
        }
    }

    pub fn indep_tau(&self) -> f64 {
        self.indep_tau.unwrap_or(self.tau)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub n_folds: usize,
    pub seed: u64,
    pub grouped_folds: bool,
    pub policies: Vec<Policy>,
    /// Worker threads for fold fitting; defaults to the number of folds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_folds: 3,
            seed: 42,
            grouped_folds: true,
            policies: Policy::ALL.to_vec(),
            threads: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; a relative data path is resolved against the
    /// config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let (Some(p), Some(dir)) = (cfg.data.path.as_mut(), path.parent()) {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| Error::Config(e.to_string());
        match (&self.data.path, &self.data.schema, &self.data.synthetic) {
            (Some(_), Some(_), None) => {}
            (None, None, Some(s)) => s.validate().map_err(cfg_err)?,
            _ => {
                return Err(Error::Config(
                    "data needs either `path` with `schema`, or `synthetic`".into(),
                ))
            }
        }
        self.model.fit_options().validate().map_err(cfg_err)?;
        if let Some(t) = self.model.indep_tau {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::Config(format!(
                    "model.indep_tau must lie in (0, 1), got {t}"
                )));
            }
        }
        match self.preprocess.retain {
            Retain::Fraction(f) if !(f > 0.0 && f <= 1.0) => {
                return Err(Error::Config(format!(
                    "preprocess.retain must lie in (0, 1], got {f}"
                )))
            }
            Retain::Components { components: 0 } => {
                return Err(Error::Config(
                    "preprocess.retain.components must be >= 1".into(),
                ))
            }
            _ => {}
        }
        if self.eval.n_folds < 2 {
            return Err(Error::Config(format!(
                "eval.n_folds must be >= 2, got {}",
                self.eval.n_folds
            )));
        }
        if self.eval.threads == Some(0) {
            return Err(Error::Config("eval.threads must be >= 1".into()));
        }
        if self.eval.policies.is_empty() {
            return Err(Error::Config("eval.policies must not be empty".into()));
        }
        Ok(())
    }

    pub fn load_dataset(&self) -> Result<PanelDataset> {
        match (&self.data.path, &self.data.schema, &self.data.synthetic) {
            (Some(path), Some(schema), _) => load_wide_csv(path, schema),
            (_, _, Some(spec)) => Ok(generate_synthetic(spec)?.dataset),
            _ => Err(Error::Config("no data source configured".into())),
        }
    }
}
