//! Second-opinion recommendation for expert panels.
//!
//! Given historical binary assessments from a panel of experts and a pooled
//! logistic model trained on all of them, pick the expert most likely to
//! disagree with the model on a new case. Two routes are provided:
//!
//! - one logistic model per expert, choosing the most opposed prediction;
//! - the group influence of each expert's training assessments on the pooled
//!   model's probability, choosing the expert whose up-weighting would push
//!   the prediction furthest the other way.
//!
//! [`eval`] runs the cross-validated disagreement-retrieval experiment and
//! writes the report files; [`cli`] wires it to the `second-opinion` binary.

// `!(x > 0.0)` is used on purpose so NaN fails validation; index loops keep
// the accumulation order explicit.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod artifact;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod glm;
pub mod influence;
pub mod preprocess;
pub mod recommend;

pub use artifact::{ModelArtifact, ModelRole};
pub use config::RunConfig;
pub use data::{
    disagreement_cases, generate_synthetic, load_wide_csv, AssessmentRecord, CaseId, ExpertId,
    PanelDataset, SyntheticSpec, WideSchema,
};
pub use error::{Error, ErrorKind, Result};
pub use eval::{emit_report, make_folds, run_experiment, EvaluationSummary, ExperimentOutcome};
pub use glm::{fit_weighted, FitOptions, FitReport, LogisticModel, TrainingSet};
pub use influence::{
    finite_difference_oracle, group_gradient, prediction_influence, InfluenceEngine,
    InfluenceReport,
};
pub use preprocess::{Pipeline, Retain};
pub use recommend::{Policy, Recommendation};
