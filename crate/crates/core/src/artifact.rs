//! Versioned JSON model artifacts.
//!
//! An artifact carries everything needed to score raw feature vectors: the
//! fitted pipeline, coefficients, optional calibration, and for the pooled
//! model the cached influence state. Floats round-trip exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::ExpertId;
use crate::error::{Error, Result};
use crate::glm::{FitReport, LogisticModel, PlattScaling};
use crate::influence::{InfluenceCache, InfluenceEngine};
use crate::preprocess::Pipeline;

pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelRole {
    Pooled,
    Expert { expert: ExpertId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub role: ModelRole,
    pub feature_names: Vec<String>,
    pub pipeline: Pipeline,
    pub model: LogisticModel,
    pub calibration: Option<PlattScaling>,
    pub fit: FitReport,
    pub n_train_rows: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub influence: Option<InfluenceCache>,
}

impl ModelArtifact {
    pub fn transform(&self, x_raw: &[f64]) -> Result<Vec<f64>> {
        self.pipeline.transform(x_raw)
    }

    /// Probability for a feature vector already passed through the pipeline.
    pub fn predict_proba_transformed(&self, z: &[f64]) -> Result<f64> {
        match &self.calibration {
            Some(c) => Ok(c.apply(self.model.logit(z)?)),
            None => self.model.predict_proba(z),
        }
    }

    pub fn predict_proba(&self, x_raw: &[f64]) -> Result<f64> {
        self.predict_proba_transformed(&self.transform(x_raw)?)
    }

    pub fn decide(&self, proba: f64) -> u8 {
        self.model.decide(proba)
    }

    pub fn influence_engine(&self) -> Result<InfluenceEngine> {
        let cache = self
            .influence
            .as_ref()
            .ok_or_else(|| Error::Artifact("artifact carries no influence state".into()))?;
        InfluenceEngine::from_cache(&self.model, cache)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let a: ModelArtifact =
            serde_json::from_str(text).map_err(|e| Error::Artifact(e.to_string()))?;
        if a.format_version != ARTIFACT_VERSION {
            return Err(Error::Artifact(format!(
                "unsupported artifact version {} (expected {ARTIFACT_VERSION})",
                a.format_version
            )));
        }
        if a.pipeline.output_dim() != a.model.n_features()
            || a.pipeline.input_dim() != a.feature_names.len()
        {
            return Err(Error::Artifact(
                "pipeline and model dimensions disagree".into(),
            ));
        }
        Ok(a)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
