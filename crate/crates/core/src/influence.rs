//! Group influence of each expert on the pooled model's predicted probability.
//!
//! Up-weighting every row labeled by expert h by (1 + ε) and differentiating
//! the stationarity condition of the weighted objective at ε = 0 gives
//!
//! ```text
//! dθ̂/dε = −H⁻¹ g_h,   g_h = (1/m) Σ_{j: a_j = h} ∇ℓ_j(θ̂)
//! I_h(x) = ∇_θ p(x; θ̂)ᵀ dθ̂/dε = −∇_θ pᵀ H⁻¹ g_h
//! ```
//!
//! where p(x; θ) = σ(θᵀx̃) is the probability of class 1. A positive value
//! means up-weighting h pushes the prediction toward 1.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{CaseId, ExpertId};
use crate::error::{Error, Result};
use crate::glm::{
    augment, fit_weighted, objective_hessian, sigmoid, spd_factor, spd_solve, FitOptions,
    LogisticModel, TrainingSet,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationSpec {
    pub expert: usize,
    pub epsilon: f64,
}

/// Up-weighting vector: 1 + ε on the expert's rows, 1 elsewhere.
pub fn perturbation_weights(labelers: &[usize], spec: PerturbationSpec) -> Vec<f64> {
    labelers
        .iter()
        .map(|&a| {
            if a == spec.expert {
                1.0 + spec.epsilon
            } else {
                1.0
            }
        })
        .collect()
}

fn check_labelers(set: &TrainingSet, labelers: &[usize]) -> Result<()> {
    if labelers.len() != set.len() {
        return Err(Error::DimensionMismatch {
            expected: set.len(),
            got: labelers.len(),
        });
    }
    Ok(())
}

/// g_h at the model's θ, normalized by the full row count m.
///
/// `None` when the expert has no rows.
pub fn group_gradient(
    model: &LogisticModel,
    set: &TrainingSet,
    labelers: &[usize],
    expert: usize,
) -> Result<Option<DVector<f64>>> {
    check_labelers(set, labelers)?;
    let theta = model.theta_vector();
    if theta.len() != set.n_params() {
        return Err(Error::DimensionMismatch {
            expected: set.n_params(),
            got: theta.len(),
        });
    }
    let mut g = DVector::zeros(set.n_params());
    let mut any = false;
    for (j, &a) in labelers.iter().enumerate() {
        if a != expert {
            continue;
        }
        any = true;
        let x = set.augmented_row(j);
        let r = sigmoid(theta.dot(&x)) - set.label(j);
        g.axpy(r, &x, 1.0);
    }
    Ok(any.then(|| g / set.len() as f64))
}

/// Serializable state of an [`InfluenceEngine`]: the Hessian's Cholesky
/// factor and the per-expert group gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceCache {
    /// Lower-triangular factor, row-major.
    pub hessian_cholesky: Vec<Vec<f64>>,
    /// Indexed by expert; `None` for experts without training rows.
    pub group_gradients: Vec<Option<Vec<f64>>>,
}

/// Influence of every expert for a fitted pooled model.
///
/// The Hessian is factored once; each query costs one triangular solve pair
/// plus k dot products.
#[derive(Debug, Clone)]
pub struct InfluenceEngine {
    model: LogisticModel,
    factor: DMatrix<f64>,
    group_gradients: Vec<Option<DVector<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceValues {
    /// Influence per expert present in training.
    pub values: BTreeMap<usize, f64>,
    /// Experts without training rows.
    pub absent: Vec<usize>,
}

impl InfluenceEngine {
    pub fn new(
        model: &LogisticModel,
        set: &TrainingSet,
        labelers: &[usize],
        n_experts: usize,
    ) -> Result<Self> {
        check_labelers(set, labelers)?;
        if let Some(&a) = labelers.iter().find(|&&a| a >= n_experts) {
            return Err(Error::validation(format!(
                "labeler {a} is outside 0..{n_experts}"
            )));
        }
        let theta = model.theta_vector();
        let hessian = objective_hessian(&theta, set, &vec![1.0; set.len()], model.lambda)?;
        let factor = spd_factor(&hessian)?;
        let group_gradients = (0..n_experts)
            .map(|h| group_gradient(model, set, labelers, h))
            .collect::<Result<Vec<_>>>()?;
        for (h, g) in group_gradients.iter().enumerate() {
            if g.is_none() {
                log::warn!("expert {h} has no training rows; excluded from influence");
            }
        }
        Ok(InfluenceEngine {
            model: model.clone(),
            factor,
            group_gradients,
        })
    }

    pub fn from_cache(model: &LogisticModel, cache: &InfluenceCache) -> Result<Self> {
        let d = model.theta.len();
        if cache.hessian_cholesky.len() != d || cache.hessian_cholesky.iter().any(|r| r.len() != d)
        {
            return Err(Error::Artifact(format!(
                "cached Hessian factor is not {d}x{d}"
            )));
        }
        let factor = DMatrix::from_fn(d, d, |i, j| cache.hessian_cholesky[i][j]);
        if factor.diagonal().iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Artifact(
                "cached Hessian factor has a non-positive pivot".into(),
            ));
        }
        let group_gradients = cache
            .group_gradients
            .iter()
            .map(|g| match g {
                Some(v) if v.len() == d => Ok(Some(DVector::from_column_slice(v))),
                Some(v) => Err(Error::Artifact(format!(
                    "group gradient has length {}, expected {d}",
                    v.len()
                ))),
                None => Ok(None),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(InfluenceEngine {
            model: model.clone(),
            factor,
            group_gradients,
        })
    }

    pub fn cache(&self) -> InfluenceCache {
        InfluenceCache {
            hessian_cholesky: self
                .factor
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            group_gradients: self
                .group_gradients
                .iter()
                .map(|g| g.as_ref().map(|v| v.iter().copied().collect()))
                .collect(),
        }
    }

    pub fn model(&self) -> &LogisticModel {
        &self.model
    }

    pub fn n_experts(&self) -> usize {
        self.group_gradients.len()
    }

    /// ∇_θ p(x; θ̂) = σ(1 − σ)·x̃.
    pub fn probability_gradient(&self, x: &[f64]) -> Result<DVector<f64>> {
        let p = self.model.predict_proba(x)?;
        Ok(augment(x) * (p * (1.0 - p)))
    }

    /// Influence of each expert at a transformed feature vector `x`.
    pub fn influence(&self, x: &[f64]) -> Result<InfluenceValues> {
        let grad_p = self.probability_gradient(x)?;
        let v = spd_solve(&self.factor, &grad_p);
        let mut values = BTreeMap::new();
        let mut absent = Vec::new();
        for (h, g) in self.group_gradients.iter().enumerate() {
            match g {
                Some(g) => {
                    values.insert(h, -v.dot(g));
                }
                None => absent.push(h),
            }
        }
        Ok(InfluenceValues { values, absent })
    }
}

/// Per-expert influence for one test case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceReport {
    pub case: Option<CaseId>,
    pub values: BTreeMap<usize, f64>,
    pub absent: Vec<usize>,
    pub model_proba: f64,
    pub model_pred: u8,
}

/// Fits nothing: builds the engine for an already fitted pooled model and
/// evaluates it at `x`. Use [`InfluenceEngine`] directly for many points.
pub fn prediction_influence(
    model: &LogisticModel,
    set: &TrainingSet,
    labelers: &[usize],
    n_experts: usize,
    x: &[f64],
) -> Result<InfluenceReport> {
    let engine = InfluenceEngine::new(model, set, labelers, n_experts)?;
    let InfluenceValues { values, absent } = engine.influence(x)?;
    let proba = model.predict_proba(x)?;
    Ok(InfluenceReport {
        case: None,
        values,
        absent,
        model_proba: proba,
        model_pred: model.decide(proba),
    })
}

/// Secant estimate of the influence by refitting with the expert's rows
/// up-weighted by (1 + ε): (p_ε(x) − p_0(x)) / ε.
///
/// Both fits run to a gradient tolerance of at most 1e-12; the secant
/// difference is of order ε·|I| and a looser optimum would swamp it.
pub fn finite_difference_oracle(
    set: &TrainingSet,
    labelers: &[usize],
    x: &[f64],
    spec: PerturbationSpec,
    opts: &FitOptions,
) -> Result<f64> {
    check_labelers(set, labelers)?;
    if spec.epsilon == 0.0 || !spec.epsilon.is_finite() || spec.epsilon <= -1.0 {
        return Err(Error::validation(format!(
            "epsilon must be finite, nonzero and > -1, got {}",
            spec.epsilon
        )));
    }
    if !labelers.contains(&spec.expert) {
        return Err(Error::validation(format!(
            "expert {} has no training rows",
            spec.expert
        )));
    }
    let tight = FitOptions {
        tol: opts.tol.min(1e-12),
        best_effort: false,
        ..*opts
    };
    let base = fit_weighted(set, &vec![1.0; set.len()], &tight)?;
    let perturbed = fit_weighted(set, &perturbation_weights(labelers, spec), &tight)?;
    Ok((perturbed.model.predict_proba(x)? - base.model.predict_proba(x)?) / spec.epsilon)
}

/// One row per (case, expert): case_id, expert_id, influence, model_proba, model_pred.
pub fn write_influence_csv<W: Write>(
    reports: &[InfluenceReport],
    experts: &[ExpertId],
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "case_id",
        "expert_id",
        "influence",
        "model_proba",
        "model_pred",
    ])?;
    for r in reports {
        let case = r.case.as_ref().map(|c| c.to_string()).unwrap_or_default();
        for (&h, v) in &r.values {
            let name = experts
                .get(h)
                .map_or_else(|| h.to_string(), |e| e.name.clone());
            w.write_record([
                case.clone(),
                name,
                format!("{v:.6}"),
                format!("{:.6}", r.model_proba),
                r.model_pred.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
