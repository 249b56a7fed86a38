//! Cross-validated disagreement-retrieval experiment.
//!
//! For each fold the pipeline, pooled model and per-expert models are fit on
//! the training folds only. Every held-out case gets a pooled prediction,
//! per-expert probabilities, an influence report and one recommendation per
//! policy. Scoring is restricted to cases where the experts disagree: a
//! recommendation is correct when the chosen expert's recorded label differs
//! from the pooled prediction.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::artifact::{ModelArtifact, ModelRole, ARTIFACT_VERSION};
use crate::config::{PcaOn, RunConfig};
use crate::data::{disagreement_cases, CaseId, PanelDataset};
use crate::error::{Error, Result};
use crate::glm::{calibrate_platt, fit_weighted, FitReport, TrainingSet};
use crate::influence::{write_influence_csv, InfluenceEngine, InfluenceReport};
use crate::preprocess::Pipeline;
use crate::recommend::{
    indep_always, indep_threshold, influence_always, influence_signed, random_baseline,
    write_recommendations_csv, Policy, Recommendation,
};

/// Assignment of cases (and their assessments) to folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n_folds: usize,
    pub seed: u64,
    pub grouped: bool,
    /// Fold in which each case is evaluated, indexed by case position.
    pub case_fold: Vec<usize>,
    /// Fold of each assessment record, indexed by record position.
    pub record_fold: Vec<usize>,
}

impl FoldPlan {
    pub fn fold_of(&self, ds: &PanelDataset, case: &CaseId) -> Option<usize> {
        ds.case_position(case).map(|i| self.case_fold[i])
    }

    /// Number of evaluated cases per fold.
    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &f in &self.case_fold {
            sizes[f] += 1;
        }
        sizes
    }

    pub fn test_cases(&self, fold: usize) -> Vec<usize> {
        (0..self.case_fold.len())
            .filter(|&i| self.case_fold[i] == fold)
            .collect()
    }

    pub fn train_records(&self, fold: usize) -> Vec<usize> {
        (0..self.record_fold.len())
            .filter(|&j| self.record_fold[j] != fold)
            .collect()
    }
}

/// Grouped folds: seeded shuffle of the case list, dealt round-robin.
pub fn make_folds(ds: &PanelDataset, n_folds: usize, seed: u64) -> Result<FoldPlan> {
    let n_cases = ds.cases().len();
    if n_folds < 2 || n_cases < n_folds {
        return Err(Error::validation(format!(
            "cannot split {n_cases} cases into {n_folds} folds"
        )));
    }
    let mut order: Vec<usize> = (0..n_cases).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut case_fold = vec![0; n_cases];
    for (slot, &c) in order.iter().enumerate() {
        case_fold[c] = slot % n_folds;
    }
    let record_fold = ds
        .records()
        .iter()
        .map(|r| case_fold[ds.case_position(&r.case).expect("record case is indexed")])
        .collect();
    Ok(FoldPlan {
        n_folds,
        seed,
        grouped: true,
        case_fold,
        record_fold,
    })
}

/// Ungrouped folds: assessments are shuffled and dealt individually. A case is
/// evaluated in the fold of its first assessment, so its other assessments
/// can sit in that fold's training data.
pub fn make_assessment_folds(ds: &PanelDataset, n_folds: usize, seed: u64) -> Result<FoldPlan> {
    let m = ds.records().len();
    if n_folds < 2 || ds.cases().len() < n_folds {
        return Err(Error::validation(format!(
            "cannot split {} cases into {n_folds} folds",
            ds.cases().len()
        )));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut record_fold = vec![0; m];
    for (slot, &j) in order.iter().enumerate() {
        record_fold[j] = slot % n_folds;
    }
    let mut case_fold = vec![usize::MAX; ds.cases().len()];
    for (j, r) in ds.records().iter().enumerate() {
        let c = ds.case_position(&r.case).expect("record case is indexed");
        if case_fold[c] == usize::MAX {
            case_fold[c] = record_fold[j];
        }
    }
    Ok(FoldPlan {
        n_folds,
        seed,
        grouped: false,
        case_fold,
        record_fold,
    })
}

/// Models fit on one training split.
#[derive(Debug, Clone)]
pub struct TrainedModels {
    pub pooled: ModelArtifact,
    /// Indexed by expert; `None` for experts without training rows.
    pub experts: Vec<Option<ModelArtifact>>,
}

/// Fits the pipeline, the pooled model (with influence state) and one model
/// per expert on the given records.
///
/// With calibration enabled, a seeded third of the training cases is held
/// out to fit the Platt maps and the models are fit on the rest.
pub fn train_models(
    ds: &PanelDataset,
    records: &[usize],
    cfg: &RunConfig,
    seed: u64,
) -> Result<TrainedModels> {
    let all = ds.records();
    let k = ds.n_experts();
    let n = ds.n_features();

    let mut train_cases: Vec<&CaseId> = Vec::new();
    let mut seen = HashSet::new();
    for &j in records {
        if seen.insert(&all[j].case) {
            train_cases.push(&all[j].case);
        }
    }

    let pca_rows: Vec<&[f64]> = match cfg.preprocess.pca_on {
        PcaOn::Cases => train_cases
            .iter()
            .map(|c| ds.case(c).expect("case exists").features.as_slice())
            .collect(),
        PcaOn::Assessments => records
            .iter()
            .map(|&j| all[j].features.as_slice())
            .collect(),
    };
    let pipeline = Pipeline::fit(
        &DMatrix::from_fn(pca_rows.len(), n, |i, j| pca_rows[i][j]),
        cfg.preprocess.retain,
    )?;

    let holdout: HashSet<&CaseId> = if cfg.model.calibrate {
        let mut shuffled = train_cases.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        shuffled.into_iter().take(train_cases.len() / 3).collect()
    } else {
        HashSet::new()
    };
    let (fit_idx, cal_idx): (Vec<usize>, Vec<usize>) = records
        .iter()
        .partition(|&&j| !holdout.contains(&all[j].case));

    let p = pipeline.output_dim();
    let transform_rows = |idx: &[usize]| -> Result<(DMatrix<f64>, Vec<u8>)> {
        let mut x = DMatrix::zeros(idx.len(), p);
        for (i, &j) in idx.iter().enumerate() {
            let z = pipeline.transform(&all[j].features)?;
            x.row_mut(i).copy_from_slice(&z);
        }
        Ok((x, idx.iter().map(|&j| all[j].label).collect()))
    };

    let opts = cfg.model.fit_options();
    let make_artifact =
        |role: ModelRole, idx: &[usize], cal: &[usize], pooled: bool| -> Result<ModelArtifact> {
            let (x, y) = transform_rows(idx)?;
            let set = TrainingSet::new(&x, &y)?;
            let fit = fit_weighted(&set, &vec![1.0; set.len()], &opts)?;
            let calibration = if cfg.model.calibrate && !cal.is_empty() {
                let (cx, cy) = transform_rows(cal)?;
                Some(calibrate_platt(&fit.model, &TrainingSet::new(&cx, &cy)?)?)
            } else {
                None
            };
            let influence = if pooled {
                let labelers: Vec<usize> = idx.iter().map(|&j| all[j].expert).collect();
                Some(InfluenceEngine::new(&fit.model, &set, &labelers, k)?.cache())
            } else {
                None
            };
            Ok(ModelArtifact {
                format_version: ARTIFACT_VERSION,
                role,
                feature_names: ds.feature_names().to_vec(),
                pipeline: pipeline.clone(),
                model: fit.model,
                calibration,
                fit: fit.report,
                n_train_rows: set.len(),
                influence,
            })
        };

    let pooled = make_artifact(ModelRole::Pooled, &fit_idx, &cal_idx, true)?;
    let experts = ds
        .experts()
        .iter()
        .map(|e| {
            let idx: Vec<usize> = fit_idx
                .iter()
                .copied()
                .filter(|&j| all[j].expert == e.index)
                .collect();
            if idx.is_empty() {
                log::warn!(
                    "expert `{}` has no training assessments in this split; excluded",
                    e.name
                );
                return Ok(None);
            }
            let cal: Vec<usize> = cal_idx
                .iter()
                .copied()
                .filter(|&j| all[j].expert == e.index)
                .collect();
            make_artifact(ModelRole::Expert { expert: e.clone() }, &idx, &cal, false).map(Some)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(TrainedModels { pooled, experts })
}

/// Everything computed for one held-out case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub case: CaseId,
    pub fold: usize,
    pub model_proba: f64,
    pub model_pred: u8,
    pub expert_probas: BTreeMap<usize, f64>,
    pub influence: InfluenceReport,
    pub recommendations: Vec<Recommendation>,
}

impl CaseOutcome {
    pub fn recommendation(&self, policy: Policy) -> Option<&Recommendation> {
        self.recommendations.iter().find(|r| r.policy == policy)
    }
}

/// Pooled probability and decision, per-expert probabilities, influence
/// report and one recommendation per policy.
pub type CaseScores = (
    f64,
    u8,
    BTreeMap<usize, f64>,
    InfluenceReport,
    Vec<Recommendation>,
);

/// Scores one case under every requested policy.
pub fn recommend_case(
    case: &CaseId,
    x_raw: &[f64],
    models: &TrainedModels,
    engine: &InfluenceEngine,
    cfg: &RunConfig,
    policies: &[Policy],
) -> Result<CaseScores> {
    let z = models.pooled.transform(x_raw)?;
    let proba = models.pooled.predict_proba_transformed(&z)?;
    let pred = models.pooled.decide(proba);

    let mut expert_probas = BTreeMap::new();
    for (e, m) in models.experts.iter().enumerate() {
        if let Some(m) = m {
            expert_probas.insert(e, m.predict_proba_transformed(&z)?);
        }
    }
    let values = engine.influence(&z)?;
    let report = InfluenceReport {
        case: Some(case.clone()),
        values: values.values,
        absent: values.absent,
        model_proba: proba,
        model_pred: pred,
    };
    let present: Vec<usize> = report.values.keys().copied().collect();

    let mut recs = Vec::with_capacity(policies.len());
    for &policy in policies {
        let mut r = match policy {
            Policy::IndepAlways => indep_always(&expert_probas, pred)?,
            Policy::IndepThreshold => indep_threshold(&expert_probas, pred, cfg.model.indep_tau())?,
            Policy::InfluenceAlways => influence_always(&report)?,
            Policy::InfluenceSigned => influence_signed(&report)?,
            Policy::RandomBaseline => random_baseline(&present, cfg.eval.seed, case, pred)?,
        };
        r.case = Some(case.clone());
        recs.push(r);
    }
    Ok((proba, pred, expert_probas, report, recs))
}

/// What was scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Policy(Policy),
    /// Expected value of a uniformly random expert choice.
    AnalyticBaseline,
    /// Picks an expert whose recorded label differs; an upper bound.
    Oracle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Policy(p) => p.name(),
            Method::AnalyticBaseline => "random_analytic",
            Method::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

/// Chosen/correct tallies for one expert. Counts are expected values (and so
/// may be fractional) for the analytic baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpertTally {
    pub expert: usize,
    pub chosen: f64,
    pub correct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationSummary {
    pub method: Method,
    pub per_expert: Vec<ExpertTally>,
    pub n_eval_cases: usize,
    pub n_pred1: usize,
    pub n_pred0: usize,
    pub correct: f64,
    pub correct_pred1: f64,
    pub correct_pred0: f64,
    /// Disagreement cases with no recommendation (counted as incorrect).
    pub abstentions: usize,
    /// Chosen experts with no recorded label on the case (counted as incorrect).
    pub missing_labels: usize,
    pub config_fingerprint: String,
}

fn ratio(num: f64, den: usize) -> Option<f64> {
    (den > 0).then(|| num / den as f64)
}

impl EvaluationSummary {
    fn empty(method: Method, k: usize) -> Self {
        EvaluationSummary {
            method,
            per_expert: (0..k)
                .map(|expert| ExpertTally {
                    expert,
                    chosen: 0.0,
                    correct: 0.0,
                })
                .collect(),
            n_eval_cases: 0,
            n_pred1: 0,
            n_pred0: 0,
            correct: 0.0,
            correct_pred1: 0.0,
            correct_pred0: 0.0,
            abstentions: 0,
            missing_labels: 0,
            config_fingerprint: String::new(),
        }
    }

    pub fn accuracy_overall(&self) -> Option<f64> {
        ratio(self.correct, self.n_eval_cases)
    }

    pub fn accuracy_pred1(&self) -> Option<f64> {
        ratio(self.correct_pred1, self.n_pred1)
    }

    pub fn accuracy_pred0(&self) -> Option<f64> {
        ratio(self.correct_pred0, self.n_pred0)
    }

    pub fn abstention_rate(&self) -> Option<f64> {
        ratio(self.abstentions as f64, self.n_eval_cases)
    }

    fn add_case(&mut self, pred: u8) {
        self.n_eval_cases += 1;
        if pred == 1 {
            self.n_pred1 += 1;
        } else {
            self.n_pred0 += 1;
        }
    }

    fn add_correct(&mut self, pred: u8, amount: f64) {
        self.correct += amount;
        if pred == 1 {
            self.correct_pred1 += amount;
        } else {
            self.correct_pred0 += amount;
        }
    }

    /// Tallies one deterministic choice on a disagreement case.
    fn record_choice(&mut self, ds: &PanelDataset, case: &CaseId, pred: u8, chosen: Option<usize>) {
        self.add_case(pred);
        let Some(e) = chosen else {
            self.abstentions += 1;
            return;
        };
        self.per_expert[e].chosen += 1.0;
        match ds.label(case, e) {
            Some(label) if label != pred => {
                self.per_expert[e].correct += 1.0;
                self.add_correct(pred, 1.0);
            }
            Some(_) => {}
            None => {
                log::warn!("case `{case}`: chosen expert {e} has no recorded label");
                self.missing_labels += 1;
            }
        }
    }
}

/// Scores one policy over the disagreement cases present in `outcomes`.
pub fn score_policy(
    ds: &PanelDataset,
    disagreement: &BTreeSet<CaseId>,
    outcomes: &[CaseOutcome],
    policy: Policy,
) -> EvaluationSummary {
    let mut s = EvaluationSummary::empty(Method::Policy(policy), ds.n_experts());
    for o in outcomes.iter().filter(|o| disagreement.contains(&o.case)) {
        let chosen = o.recommendation(policy).and_then(|r| r.chosen);
        s.record_choice(ds, &o.case, o.model_pred, chosen);
    }
    s
}

fn disagreement_predictions<'a>(
    ds: &'a PanelDataset,
    predictions: &'a BTreeMap<CaseId, u8>,
) -> Result<Vec<(&'a crate::data::Case, u8)>> {
    let dis = disagreement_cases(ds)?;
    ds.cases()
        .iter()
        .filter(|c| dis.contains(&c.id))
        .map(|c| {
            predictions.get(&c.id).map(|&p| (c, p)).ok_or_else(|| {
                Error::Contract(format!("no prediction for disagreement case `{}`", c.id))
            })
        })
        .collect()
}

/// Expected score of choosing uniformly among the experts who assessed each
/// disagreement case.
pub fn score_baseline(
    ds: &PanelDataset,
    predictions: &BTreeMap<CaseId, u8>,
) -> Result<EvaluationSummary> {
    let mut s = EvaluationSummary::empty(Method::AnalyticBaseline, ds.n_experts());
    for (case, pred) in disagreement_predictions(ds, predictions)? {
        s.add_case(pred);
        let k = case.n_assessments() as f64;
        for (e, label) in case.labels.iter().enumerate() {
            let Some(label) = label else { continue };
            s.per_expert[e].chosen += 1.0 / k;
            if *label != pred {
                s.per_expert[e].correct += 1.0 / k;
                s.add_correct(pred, 1.0 / k);
            }
        }
    }
    Ok(s)
}

/// Label-peeking upper bound: the lowest-index expert whose recorded label
/// differs from the prediction.
pub fn score_oracle(
    ds: &PanelDataset,
    predictions: &BTreeMap<CaseId, u8>,
) -> Result<EvaluationSummary> {
    let mut s = EvaluationSummary::empty(Method::Oracle, ds.n_experts());
    for (case, pred) in disagreement_predictions(ds, predictions)? {
        let chosen = case
            .labels
            .iter()
            .position(|l| matches!(l, Some(l) if *l != pred));
        s.record_choice(ds, &case.id, pred, chosen);
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub n_train_records: usize,
    pub n_test_cases: usize,
    pub pca_components: usize,
    pub retained_variance: f64,
    pub pooled_fit: FitReport,
    pub pooled_calibration: Option<crate::glm::PlattScaling>,
    pub expert_fits: Vec<Option<FitReport>>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    /// In dataset case order.
    pub cases: Vec<CaseOutcome>,
    /// One per configured policy, in configuration order.
    pub summaries: Vec<EvaluationSummary>,
    pub baseline: EvaluationSummary,
    pub oracle: EvaluationSummary,
    pub folds: Vec<FoldSummary>,
    pub plan: FoldPlan,
    pub n_disagreement: usize,
    pub config_fingerprint: String,
}

impl ExperimentOutcome {
    pub fn summary(&self, policy: Policy) -> Option<&EvaluationSummary> {
        self.summaries
            .iter()
            .find(|s| s.method == Method::Policy(policy))
    }

    pub fn predictions(&self) -> BTreeMap<CaseId, u8> {
        self.cases
            .iter()
            .map(|c| (c.case.clone(), c.model_pred))
            .collect()
    }
}

pub fn config_fingerprint(cfg: &RunConfig) -> String {
    let json = serde_json::to_string(cfg).expect("config serializes");
    hex::encode(Sha256::digest(json.as_bytes()))[..16].to_string()
}

/// Per-fold training seed, derived from the run seed.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(fold as u64 + 1)
}

pub fn run_experiment(ds: &PanelDataset, cfg: &RunConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let disagreement = disagreement_cases(ds)?;
    let plan = if cfg.eval.grouped_folds {
        make_folds(ds, cfg.eval.n_folds, cfg.eval.seed)?
    } else {
        make_assessment_folds(ds, cfg.eval.n_folds, cfg.eval.seed)?
    };
    let threads = cfg.eval.threads.unwrap_or(cfg.eval.n_folds);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;

    let run_fold = |fold: usize| -> Result<(FoldSummary, Vec<(usize, CaseOutcome)>)> {
        let train = plan.train_records(fold);
        let models = train_models(ds, &train, cfg, fold_seed(cfg.eval.seed, fold))?;
        let engine = models.pooled.influence_engine()?;
        let test = plan.test_cases(fold);
        let mut outcomes = Vec::with_capacity(test.len());
        for &ci in &test {
            let case = &ds.cases()[ci];
            let (proba, pred, expert_probas, influence, recommendations) = recommend_case(
                &case.id,
                &case.features,
                &models,
                &engine,
                cfg,
                &cfg.eval.policies,
            )?;
            outcomes.push((
                ci,
                CaseOutcome {
                    case: case.id.clone(),
                    fold,
                    model_proba: proba,
                    model_pred: pred,
                    expert_probas,
                    influence,
                    recommendations,
                },
            ));
        }
        let summary = FoldSummary {
            fold,
            n_train_records: train.len(),
            n_test_cases: test.len(),
            pca_components: models.pooled.pipeline.output_dim(),
            retained_variance: models.pooled.pipeline.pca.retained_fraction,
            pooled_fit: models.pooled.fit,
            pooled_calibration: models.pooled.calibration,
            expert_fits: models
                .experts
                .iter()
                .map(|m| m.as_ref().map(|m| m.fit))
                .collect(),
        };
        Ok((summary, outcomes))
    };

    let per_fold: Vec<(FoldSummary, Vec<(usize, CaseOutcome)>)> = pool.install(|| {
        (0..plan.n_folds)
            .into_par_iter()
            .map(run_fold)
            .collect::<Result<Vec<_>>>()
    })?;

    let mut folds = Vec::with_capacity(plan.n_folds);
    let mut slots: Vec<Option<CaseOutcome>> = vec![None; ds.cases().len()];
    for (summary, outcomes) in per_fold {
        folds.push(summary);
        for (ci, o) in outcomes {
            slots[ci] = Some(o);
        }
    }
    let cases: Vec<CaseOutcome> = slots
        .into_iter()
        .map(|o| o.expect("every case is evaluated once"))
        .collect();

    let fingerprint = config_fingerprint(cfg);
    let mut summaries: Vec<EvaluationSummary> = cfg
        .eval
        .policies
        .iter()
        .map(|&p| score_policy(ds, &disagreement, &cases, p))
        .collect();
    let predictions: BTreeMap<CaseId, u8> = cases
        .iter()
        .map(|c| (c.case.clone(), c.model_pred))
        .collect();
    let mut baseline = score_baseline(ds, &predictions)?;
    let mut oracle = score_oracle(ds, &predictions)?;
    for s in summaries.iter_mut().chain([&mut baseline, &mut oracle]) {
        s.config_fingerprint = fingerprint.clone();
    }

    Ok(ExperimentOutcome {
        cases,
        summaries,
        baseline,
        oracle,
        folds,
        plan,
        n_disagreement: disagreement.len(),
        config_fingerprint: fingerprint,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_default()
}

fn write_table1<W: Write>(outcome: &ExperimentOutcome, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "policy",
        "overall",
        "pred1",
        "pred0",
        "n_eval",
        "n_pred1",
        "n_pred0",
        "abstention_rate",
    ])?;
    for s in outcome
        .summaries
        .iter()
        .chain([&outcome.baseline, &outcome.oracle])
    {
        w.write_record([
            s.method.to_string(),
            fmt_opt(s.accuracy_overall()),
            fmt_opt(s.accuracy_pred1()),
            fmt_opt(s.accuracy_pred0()),
            s.n_eval_cases.to_string(),
            s.n_pred1.to_string(),
            s.n_pred0.to_string(),
            fmt_opt(s.abstention_rate()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_figure1<W: Write>(
    outcome: &ExperimentOutcome,
    ds: &PanelDataset,
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "policy",
        "expert_id",
        "expert_name",
        "chosen_freq",
        "correct_freq",
    ])?;
    for s in outcome.summaries.iter().chain([&outcome.baseline]) {
        for t in &s.per_expert {
            w.write_record([
                s.method.to_string(),
                t.expert.to_string(),
                ds.experts()[t.expert].name.clone(),
                fmt_opt(ratio(t.chosen, s.n_eval_cases)),
                fmt_opt(ratio(t.correct, s.n_eval_cases)),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct DatasetMeta {
    n_records: usize,
    n_cases: usize,
    n_experts: usize,
    n_features: usize,
    n_disagreement: usize,
    disagreement_fraction: f64,
    experts: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
struct RunMeta<'a> {
    format_version: u32,
    config: &'a RunConfig,
    config_fingerprint: &'a str,
    seed: u64,
    dataset: DatasetMeta,
    fold_sizes: Vec<usize>,
    folds: &'a [FoldSummary],
    files: BTreeMap<&'static str, String>,
    content_hash: String,
}

#[derive(Debug, Clone)]
pub struct ReportFiles {
    pub table1: PathBuf,
    pub figure1: PathBuf,
    pub recommendations: PathBuf,
    pub influence: PathBuf,
    pub run_meta: PathBuf,
    /// SHA-256 over the report CSVs.
    pub content_hash: String,
}

/// Writes table1.csv, figure1.csv, recommendations.csv, influence.csv and
/// run_meta.json into `out_dir`.
pub fn emit_report(
    outcome: &ExperimentOutcome,
    ds: &PanelDataset,
    cfg: &RunConfig,
    out_dir: impl AsRef<Path>,
) -> Result<ReportFiles> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;

    let mut table1 = Vec::new();
    write_table1(outcome, &mut table1)?;
    let mut figure1 = Vec::new();
    write_figure1(outcome, ds, &mut figure1)?;
    let recs: Vec<Recommendation> = outcome
        .cases
        .iter()
        .flat_map(|c| c.recommendations.iter().cloned())
        .collect();
    let mut recommendations = Vec::new();
    write_recommendations_csv(&recs, ds.experts(), &mut recommendations)?;
    let reports: Vec<InfluenceReport> = outcome.cases.iter().map(|c| c.influence.clone()).collect();
    let mut influence = Vec::new();
    write_influence_csv(&reports, ds.experts(), &mut influence)?;

    let csvs: [(&'static str, &[u8]); 4] = [
        ("table1.csv", &table1),
        ("figure1.csv", &figure1),
        ("recommendations.csv", &recommendations),
        ("influence.csv", &influence),
    ];
    let mut all = Sha256::new();
    let mut files = BTreeMap::new();
    for (name, bytes) in &csvs {
        std::fs::write(out_dir.join(name), bytes)?;
        files.insert(*name, hex::encode(Sha256::digest(bytes)));
        all.update(name.as_bytes());
        all.update([0u8]);
        all.update(bytes);
    }
    let content_hash = hex::encode(all.finalize());

    let meta = RunMeta {
        format_version: ARTIFACT_VERSION,
        config: cfg,
        config_fingerprint: &outcome.config_fingerprint,
        seed: cfg.eval.seed,
        dataset: DatasetMeta {
            n_records: ds.records().len(),
            n_cases: ds.cases().len(),
            n_experts: ds.n_experts(),
            n_features: ds.n_features(),
            n_disagreement: outcome.n_disagreement,
            disagreement_fraction: outcome.n_disagreement as f64 / ds.cases().len() as f64,
            experts: ds.experts().iter().map(|e| e.name.clone()).collect(),
        },
        fold_sizes: outcome.plan.fold_sizes(),
        folds: &outcome.folds,
        files,
        content_hash: content_hash.clone(),
    };
    let run_meta = out_dir.join("run_meta.json");
    std::fs::write(&run_meta, serde_json::to_string_pretty(&meta)?)?;

    Ok(ReportFiles {
        table1: out_dir.join("table1.csv"),
        figure1: out_dir.join("figure1.csv"),
        recommendations: out_dir.join("recommendations.csv"),
        influence: out_dir.join("influence.csv"),
        run_meta,
        content_hash,
    })
}
