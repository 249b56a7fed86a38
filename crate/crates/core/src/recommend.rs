//! Second-opinion selection policies.
//!
//! Every policy looks for the expert most likely to disagree with the pooled
//! prediction: the lowest score when the model says 1, the highest when it
//! says 0. Ties go to the lowest expert index.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{CaseId, ExpertId};
use crate::error::{Error, Result};
use crate::influence::InfluenceReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// argmin/argmax of per-expert probabilities.
    IndepAlways,
    /// As `IndepAlways`, restricted to probabilities on the opposing side of τ.
    IndepThreshold,
    /// argmin/argmax of group influence.
    InfluenceAlways,
    /// As `InfluenceAlways`, restricted to influence of the opposing sign.
    InfluenceSigned,
    RandomBaseline,
}

impl Policy {
    pub const ALL: [Policy; 5] = [
        Policy::IndepAlways,
        Policy::IndepThreshold,
        Policy::InfluenceAlways,
        Policy::InfluenceSigned,
        Policy::RandomBaseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Policy::IndepAlways => "indep_always",
            Policy::IndepThreshold => "indep_threshold",
            Policy::InfluenceAlways => "influence_always",
            Policy::InfluenceSigned => "influence_signed",
            Policy::RandomBaseline => "random_baseline",
        }
    }

    /// Whether the policy is allowed to return no expert.
    pub fn may_abstain(self) -> bool {
        matches!(self, Policy::IndepThreshold | Policy::InfluenceSigned)
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Policy::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::validation(format!("unknown policy `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub case: Option<CaseId>,
    pub policy: Policy,
    pub chosen: Option<usize>,
    /// The deciding quantity of the chosen expert; `None` when no expert was
    /// chosen or the policy is random.
    pub score: Option<f64>,
    pub model_pred: u8,
}

fn check_pred(model_pred: u8) -> Result<()> {
    if model_pred > 1 {
        return Err(Error::validation(format!(
            "model prediction must be 0 or 1, got {model_pred}"
        )));
    }
    Ok(())
}

/// Extreme score among eligible experts: the minimum when the model predicts
/// 1, the maximum when it predicts 0. Strict comparison keeps the first
/// (lowest-index) expert on ties.
fn pick(
    scores: &BTreeMap<usize, f64>,
    model_pred: u8,
    eligible: impl Fn(f64) -> bool,
) -> Option<(usize, f64)> {
    let better = |a: f64, b: f64| if model_pred == 1 { a < b } else { a > b };
    scores.iter().filter(|(_, &s)| eligible(s)).fold(
        None,
        |best: Option<(usize, f64)>, (&e, &s)| match best {
            Some((_, bs)) if !better(s, bs) => best,
            _ => Some((e, s)),
        },
    )
}

fn build(policy: Policy, model_pred: u8, choice: Option<(usize, f64)>) -> Recommendation {
    Recommendation {
        case: None,
        policy,
        chosen: choice.map(|c| c.0),
        score: choice.map(|c| c.1),
        model_pred,
    }
}

pub fn indep_always(probas: &BTreeMap<usize, f64>, model_pred: u8) -> Result<Recommendation> {
    check_pred(model_pred)?;
    if probas.is_empty() {
        return Err(Error::validation("no per-expert probabilities"));
    }
    Ok(build(
        Policy::IndepAlways,
        model_pred,
        pick(probas, model_pred, |_| true),
    ))
}

/// Only experts predicted on the other side of τ are eligible (strictly).
pub fn indep_threshold(
    probas: &BTreeMap<usize, f64>,
    model_pred: u8,
    tau: f64,
) -> Result<Recommendation> {
    check_pred(model_pred)?;
    if probas.is_empty() {
        return Err(Error::validation("no per-expert probabilities"));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::validation(format!(
            "tau must lie in (0, 1), got {tau}"
        )));
    }
    let choice = if model_pred == 1 {
        pick(probas, 1, |p| p < tau)
    } else {
        pick(probas, 0, |p| p > tau)
    };
    Ok(build(Policy::IndepThreshold, model_pred, choice))
}

pub fn influence_always(report: &InfluenceReport) -> Result<Recommendation> {
    check_pred(report.model_pred)?;
    if report.values.is_empty() {
        return Err(Error::validation("influence report has no experts"));
    }
    let mut r = build(
        Policy::InfluenceAlways,
        report.model_pred,
        pick(&report.values, report.model_pred, |_| true),
    );
    r.case = report.case.clone();
    Ok(r)
}

/// Only influence of the opposing sign is eligible; exact zeros never are.
pub fn influence_signed(report: &InfluenceReport) -> Result<Recommendation> {
    check_pred(report.model_pred)?;
    if report.values.is_empty() {
        return Err(Error::validation("influence report has no experts"));
    }
    let choice = if report.model_pred == 1 {
        pick(&report.values, 1, |v| v < 0.0)
    } else {
        pick(&report.values, 0, |v| v > 0.0)
    };
    let mut r = build(Policy::InfluenceSigned, report.model_pred, choice);
    r.case = report.case.clone();
    Ok(r)
}

/// Uniform choice among `experts`, reproducible from (seed, case id).
pub fn random_baseline(
    experts: &[usize],
    seed: u64,
    case: &CaseId,
    model_pred: u8,
) -> Result<Recommendation> {
    check_pred(model_pred)?;
    if experts.is_empty() {
        return Err(Error::validation("no experts to sample from"));
    }
    let mut rng = case_rng(seed, case);
    let chosen = experts[rng.random_range(0..experts.len())];
    Ok(Recommendation {
        case: Some(case.clone()),
        policy: Policy::RandomBaseline,
        chosen: Some(chosen),
        score: None,
        model_pred,
    })
}

pub(crate) fn case_rng(seed: u64, case: &CaseId) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(case.as_str().as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    ChaCha8Rng::seed_from_u64(u64::from_le_bytes(bytes))
}

/// case_id, policy, model_pred, chosen_expert (empty when none), score.
pub fn write_recommendations_csv<W: Write>(
    recs: &[Recommendation],
    experts: &[ExpertId],
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["case_id", "policy", "model_pred", "chosen_expert", "score"])?;
    for r in recs {
        w.write_record([
            r.case.as_ref().map(|c| c.to_string()).unwrap_or_default(),
            r.policy.to_string(),
            r.model_pred.to_string(),
            r.chosen
                .map(|e| {
                    experts
                        .get(e)
                        .map_or_else(|| e.to_string(), |x| x.name.clone())
                })
                .unwrap_or_default(),
            r.score.map(|s| format!("{s:.6}")).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
