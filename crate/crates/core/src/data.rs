//! Panel data model: who assessed which case, and how.
//!
//! Storage is long format, one [`AssessmentRecord`] per (case, expert) pair.
//! A case-level view (features once, one optional label per expert) is built
//! at construction time because both preprocessing and evaluation work per
//! case.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::sigmoid;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CaseId(String);

impl CaseId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::InvalidDataset("case id must be non-empty".into()));
        }
        Ok(CaseId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExpertId {
    pub index: usize,
    pub name: String,
}

/// One expert's binary label on one case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentRecord {
    pub case: CaseId,
    /// Index into [`PanelDataset::experts`].
    pub expert: usize,
    pub features: Vec<f64>,
    pub label: u8,
}

/// Case-level view of the panel.
#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    pub id: CaseId,
    pub features: Vec<f64>,
    /// Indexed by expert; `None` where that expert did not assess the case.
    pub labels: Vec<Option<u8>>,
}

impl Case {
    pub fn n_assessments(&self) -> usize {
        self.labels.iter().flatten().count()
    }

    pub fn has_disagreement(&self) -> bool {
        let mut seen = [false; 2];
        for &l in self.labels.iter().flatten() {
            seen[l as usize] = true;
        }
        seen[0] && seen[1]
    }
}

#[derive(Debug, Clone)]
pub struct PanelDataset {
    records: Vec<AssessmentRecord>,
    n_features: usize,
    feature_names: Vec<String>,
    experts: Vec<ExpertId>,
    cases: Vec<Case>,
    case_index: HashMap<CaseId, usize>,
}

impl PanelDataset {
    pub fn new(
        records: Vec<AssessmentRecord>,
        feature_names: Vec<String>,
        experts: Vec<ExpertId>,
    ) -> Result<Self> {
        let n_features = feature_names.len();
        let k = experts.len();
        if k < 2 {
            return Err(Error::InvalidDataset(format!(
                "need at least 2 experts, got {k}"
            )));
        }
        for (i, e) in experts.iter().enumerate() {
            if e.index != i {
                return Err(Error::InvalidDataset(format!(
                    "expert indices must be contiguous from 0; position {i} holds index {}",
                    e.index
                )));
            }
        }
        if records.len() < k {
            return Err(Error::InvalidDataset(format!(
                "need at least as many records as experts ({} < {k})",
                records.len()
            )));
        }

        let mut cases: Vec<Case> = Vec::new();
        let mut case_index: HashMap<CaseId, usize> = HashMap::new();
        for (j, r) in records.iter().enumerate() {
            if r.features.len() != n_features {
                return Err(Error::InvalidDataset(format!(
                    "record {j} has {} features, expected {n_features}",
                    r.features.len()
                )));
            }
            if r.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidDataset(format!(
                    "record {j} has a non-finite feature"
                )));
            }
            if r.expert >= k {
                return Err(Error::InvalidDataset(format!(
                    "record {j} references unknown expert {}",
                    r.expert
                )));
            }
            if r.label > 1 {
                return Err(Error::InvalidDataset(format!(
                    "record {j} has non-binary label {}",
                    r.label
                )));
            }
            let ci = *case_index.entry(r.case.clone()).or_insert_with(|| {
                cases.push(Case {
                    id: r.case.clone(),
                    features: r.features.clone(),
                    labels: vec![None; k],
                });
                cases.len() - 1
            });
            let case = &mut cases[ci];
            if case.features != r.features {
                return Err(Error::InvalidDataset(format!(
                    "case `{}` has records with different feature vectors",
                    r.case
                )));
            }
            if case.labels[r.expert].is_some() {
                return Err(Error::InvalidDataset(format!(
                    "duplicate record for case `{}` and expert {}",
                    r.case, r.expert
                )));
            }
            case.labels[r.expert] = Some(r.label);
        }

        Ok(PanelDataset {
            records,
            n_features,
            feature_names,
            experts,
            cases,
            case_index,
        })
    }

    pub fn records(&self) -> &[AssessmentRecord] {
        &self.records
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn experts(&self) -> &[ExpertId] {
        &self.experts
    }

    pub fn n_experts(&self) -> usize {
        self.experts.len()
    }

    /// Cases in order of first appearance.
    pub fn cases(&self) -> &[Case] {
        &self.cases
    }

    pub fn case(&self, id: &CaseId) -> Option<&Case> {
        self.case_index.get(id).map(|&i| &self.cases[i])
    }

    pub fn case_position(&self, id: &CaseId) -> Option<usize> {
        self.case_index.get(id).copied()
    }

    /// Recorded label of `expert` on `case`, if any.
    pub fn label(&self, case: &CaseId, expert: usize) -> Option<u8> {
        self.case(case)
            .and_then(|c| c.labels.get(expert).copied().flatten())
    }

    /// Writes the panel back out in wide format: `case_id`, features, one
    /// column per expert (empty cell for a missing assessment).
    pub fn write_wide_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["case_id".to_string()];
        header.extend(self.feature_names.iter().cloned());
        header.extend(self.experts.iter().map(|e| e.name.clone()));
        w.write_record(&header)?;
        for case in &self.cases {
            let mut row = vec![case.id.to_string()];
            row.extend(case.features.iter().map(|v| v.to_string()));
            row.extend(
                case.labels
                    .iter()
                    .map(|l| l.map(|l| l.to_string()).unwrap_or_default()),
            );
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Column layout of a wide panel file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WideSchema {
    /// Feature columns in order. When omitted, every column that is not an
    /// expert, case id, or excluded column is a feature.
    #[serde(default)]
    pub feature_columns: Option<Vec<String>>,
    pub expert_columns: Vec<String>,
    #[serde(default)]
    pub case_id_column: Option<String>,
    /// Columns that are neither features nor experts (e.g. a consensus label).
    #[serde(default)]
    pub exclude_columns: Vec<String>,
}

impl WideSchema {
    fn resolve(&self, header: &csv::StringRecord) -> Result<ResolvedSchema> {
        let position = |name: &str| -> Result<usize> {
            header
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let experts = self
            .expert_columns
            .iter()
            .map(|c| position(c).map(|p| (c.clone(), p)))
            .collect::<Result<Vec<_>>>()?;
        let case_id = self.case_id_column.as_deref().map(position).transpose()?;
        for c in &self.exclude_columns {
            position(c)?;
        }
        let features = match &self.feature_columns {
            Some(cols) => cols
                .iter()
                .map(|c| position(c).map(|p| (c.clone(), p)))
                .collect::<Result<Vec<_>>>()?,
            None => header
                .iter()
                .enumerate()
                .map(|(p, h)| (h.trim().to_string(), p))
                .filter(|(h, _)| {
                    !self.expert_columns.contains(h)
                        && self.case_id_column.as_ref() != Some(h)
                        && !self.exclude_columns.contains(h)
                })
                .collect(),
        };
        Ok(ResolvedSchema {
            features,
            experts,
            case_id,
        })
    }
}

struct ResolvedSchema {
    features: Vec<(String, usize)>,
    experts: Vec<(String, usize)>,
    case_id: Option<usize>,
}

fn parse_binary(cell: &str) -> Option<u8> {
    match cell {
        "0" => Some(0),
        "1" => Some(1),
        other => match other.parse::<f64>() {
            Ok(0.0) => Some(0),
            Ok(1.0) => Some(1),
            _ => None,
        },
    }
}

/// Loads a wide panel CSV (one row per case, one column per expert).
///
/// Rows are numbered from 1 (the first data row) in parse errors. Empty
/// expert cells are skipped rather than rejected.
pub fn load_wide_csv(path: impl AsRef<Path>, schema: &WideSchema) -> Result<PanelDataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_wide_csv(file, schema)
}

pub fn read_wide_csv<R: std::io::Read>(reader: R, schema: &WideSchema) -> Result<PanelDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let cols = schema.resolve(&header)?;

    let experts: Vec<ExpertId> = cols
        .experts
        .iter()
        .enumerate()
        .map(|(index, (name, _))| ExpertId {
            index,
            name: name.clone(),
        })
        .collect();

    let mut records = Vec::new();
    for (row_idx, row) in rdr.records().enumerate() {
        let row = row?;
        let row_no = row_idx + 1;
        let case = match cols.case_id {
            Some(p) => CaseId::new(row.get(p).unwrap_or("").trim()).map_err(|_| Error::Parse {
                row: row_no,
                column: schema.case_id_column.clone().unwrap_or_default(),
                message: "empty case id".into(),
            })?,
            None => CaseId(row_idx.to_string()),
        };
        let features = cols
            .features
            .iter()
            .map(|(name, p)| {
                let cell = row.get(*p).unwrap_or("").trim();
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    row: row_no,
                    column: name.clone(),
                    message: format!("`{cell}` is not a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        row: row_no,
                        column: name.clone(),
                        message: format!("non-finite value `{cell}`"),
                    });
                }
                Ok(v)
            })
            .collect::<Result<Vec<f64>>>()?;
        for (expert, (name, p)) in cols.experts.iter().enumerate() {
            let cell = row.get(*p).unwrap_or("").trim();
            if cell.is_empty() {
                continue;
            }
            let label = parse_binary(cell).ok_or_else(|| Error::Parse {
                row: row_no,
                column: name.clone(),
                message: format!("expert label `{cell}` is not 0 or 1"),
            })?;
            records.push(AssessmentRecord {
                case: case.clone(),
                expert,
                features: features.clone(),
                label,
            });
        }
    }

    let feature_names = cols.features.into_iter().map(|(n, _)| n).collect();
    PanelDataset::new(records, feature_names, experts)
}

/// Cases on which at least two recorded labels differ.
pub fn disagreement_cases(ds: &PanelDataset) -> Result<BTreeSet<CaseId>> {
    let mut out = BTreeSet::new();
    for case in ds.cases() {
        if case.n_assessments() < 2 {
            return Err(Error::Contract(format!(
                "case `{}` has a single assessment; agreement is undefined",
                case.id
            )));
        }
        if case.has_disagreement() {
            out.insert(case.id.clone());
        }
    }
    Ok(out)
}

/// Generative description of a synthetic expert panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub k: usize,
    pub n_cases: usize,
    pub n_features: usize,
    pub base_coeffs: Vec<f64>,
    /// One offset vector per expert; empty means all-zero offsets.
    #[serde(default)]
    pub expert_offsets: Vec<Vec<f64>>,
    #[serde(default)]
    pub label_noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::validation(format!(
                "synthetic panel needs k >= 2, got {}",
                self.k
            )));
        }
        if self.n_cases == 0 {
            return Err(Error::validation("synthetic panel needs at least one case"));
        }
        if self.n_features == 0 {
            return Err(Error::validation(
                "synthetic panel needs at least one feature",
            ));
        }
        if self.base_coeffs.len() != self.n_features {
            return Err(Error::validation(format!(
                "base_coeffs has length {}, expected {}",
                self.base_coeffs.len(),
                self.n_features
            )));
        }
        if !self.expert_offsets.is_empty() {
            if self.expert_offsets.len() != self.k {
                return Err(Error::validation(format!(
                    "expert_offsets has {} entries, expected {}",
                    self.expert_offsets.len(),
                    self.k
                )));
            }
            if self
                .expert_offsets
                .iter()
                .any(|o| o.len() != self.n_features)
            {
                return Err(Error::validation(
                    "every expert offset must have n_features entries",
                ));
            }
        }
        if !(0.0..0.5).contains(&self.label_noise) {
            return Err(Error::validation(format!(
                "label_noise must lie in [0, 0.5), got {}",
                self.label_noise
            )));
        }
        Ok(())
    }

    /// Per-expert generative coefficient vectors (base + offset).
    pub fn expert_coefficients(&self) -> Vec<Vec<f64>> {
        (0..self.k)
            .map(|i| {
                self.base_coeffs
                    .iter()
                    .enumerate()
                    .map(|(f, b)| b + self.expert_offsets.get(i).map_or(0.0, |o| o[f]))
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticPanel {
    pub dataset: PanelDataset,
    pub expert_coefficients: Vec<Vec<f64>>,
}

/// Draws a complete panel: every expert labels every case.
///
/// Draw order per case is fixed (features, then for each expert a label
/// uniform and a noise uniform) so the output depends only on the seed.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticPanel> {
    spec.validate()?;
    let coeffs = spec.expert_coefficients();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut records = Vec::with_capacity(spec.n_cases * spec.k);
    for c in 0..spec.n_cases {
        let features: Vec<f64> = (0..spec.n_features)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let case = CaseId(c.to_string());
        for (expert, beta) in coeffs.iter().enumerate() {
            let z: f64 = beta.iter().zip(&features).map(|(b, x)| b * x).sum();
            let u: f64 = rng.random();
            let flip: f64 = rng.random();
            let mut label = u8::from(u < sigmoid(z));
            if flip < spec.label_noise {
                label = 1 - label;
            }
            records.push(AssessmentRecord {
                case: case.clone(),
                expert,
                features: features.clone(),
                label,
            });
        }
    }
    let feature_names = (0..spec.n_features).map(|i| format!("x{i}")).collect();
    let experts = (0..spec.k)
        .map(|index| ExpertId {
            index,
            name: format!("expert_{index}"),
        })
        .collect();
    Ok(SyntheticPanel {
        dataset: PanelDataset::new(records, feature_names, experts)?,
        expert_coefficients: coeffs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema(experts: &[&str]) -> WideSchema {
        WideSchema {
            feature_columns: None,
            expert_columns: experts.iter().map(|s| s.to_string()).collect(),
            case_id_column: None,
            exclude_columns: vec![],
        }
    }

    #[test]
    fn minimal_panel_loads_two_records() {
        let csv = "f,e0,e1\n0.5,0,1\n";
        let ds = read_wide_csv(csv.as_bytes(), &schema(&["e0", "e1"])).unwrap();
        assert_eq!(ds.records().len(), 2);
        assert_eq!(ds.records()[0].features, vec![0.5]);
        assert_eq!(ds.records()[1].features, vec![0.5]);
        assert_eq!(ds.records()[0].label, 0);
        assert_eq!(ds.records()[1].label, 1);
        assert_eq!(ds.cases()[0].id.as_str(), "0");
    }

    #[test]
    fn non_binary_label_reports_cell() {
        let csv = "f,e0,e1\n0.5,0,1\n1.5,2,1\n";
        match read_wide_csv(csv.as_bytes(), &schema(&["e0", "e1"])) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "e0");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_column_is_named() {
        let csv = "f,e0\n0.5,0\n";
        match read_wide_csv(csv.as_bytes(), &schema(&["e0", "e1"])) {
            Err(Error::MissingColumn(c)) => assert_eq!(c, "e1"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_feature_rejected() {
        for bad in ["NaN", "inf", "-inf", "abc", ""] {
            let csv = format!("f,e0,e1\n{bad},0,1\n");
            assert!(
                matches!(
                    read_wide_csv(csv.as_bytes(), &schema(&["e0", "e1"])),
                    Err(Error::Parse { .. })
                ),
                "{bad}"
            );
        }
    }

    #[test]
    fn empty_expert_cell_is_skipped() {
        let csv = "f,e0,e1,e2\n0.5,0,,1\n1.0,1,1,1\n";
        let ds = read_wide_csv(csv.as_bytes(), &schema(&["e0", "e1", "e2"])).unwrap();
        assert_eq!(ds.records().len(), 5);
        assert_eq!(ds.cases()[0].labels, vec![Some(0), None, Some(1)]);
    }

    #[test]
    fn case_id_and_excluded_columns() {
        let csv = "id,a,b,consensus,e0,e1\nc1,1,2,1,1,1\nc2,3,4,0,0,1\n";
        let s = WideSchema {
            feature_columns: None,
            expert_columns: vec!["e0".into(), "e1".into()],
            case_id_column: Some("id".into()),
            exclude_columns: vec!["consensus".into()],
        };
        let ds = read_wide_csv(csv.as_bytes(), &s).unwrap();
        assert_eq!(ds.feature_names(), &["a".to_string(), "b".to_string()]);
        assert_eq!(ds.cases()[1].id.as_str(), "c2");
        let dis = disagreement_cases(&ds).unwrap();
        assert_eq!(dis.len(), 1);
        assert!(dis.contains(&CaseId::new("c2").unwrap()));
    }

    #[test]
    fn full_agreement_has_no_disagreement() {
        let csv = "f,e0,e1,e2\n0.1,1,1,1\n0.2,1,1,1\n";
        let ds = read_wide_csv(csv.as_bytes(), &schema(&["e0", "e1", "e2"])).unwrap();
        assert!(disagreement_cases(&ds).unwrap().is_empty());
    }

    #[test]
    fn single_record_case_is_a_contract_error() {
        let csv = "f,e0,e1\n0.1,1,\n0.2,1,0\n";
        let ds = read_wide_csv(csv.as_bytes(), &schema(&["e0", "e1"])).unwrap();
        assert!(matches!(disagreement_cases(&ds), Err(Error::Contract(_))));
    }

    #[test]
    fn dataset_rejects_duplicate_pairs() {
        let rec = |expert, label| AssessmentRecord {
            case: CaseId::new("a").unwrap(),
            expert,
            features: vec![0.0],
            label,
        };
        let experts = vec![
            ExpertId {
                index: 0,
                name: "a".into(),
            },
            ExpertId {
                index: 1,
                name: "b".into(),
            },
        ];
        let err = PanelDataset::new(vec![rec(0, 0), rec(0, 1)], vec!["f".into()], experts);
        assert!(matches!(err, Err(Error::InvalidDataset(_))));
    }

    fn spec(offsets: Vec<Vec<f64>>, noise: f64, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            k: 3,
            n_cases: 50,
            n_features: 2,
            base_coeffs: vec![25.0, 0.0],
            expert_offsets: offsets,
            label_noise: noise,
            seed,
        }
    }

    #[test]
    fn identical_experts_rarely_disagree() {
        let panel = generate_synthetic(&spec(vec![], 0.0, 3)).unwrap();
        let dis = disagreement_cases(&panel.dataset).unwrap();
        // Only cases with |25 x| tiny can split; with 50 cases that is a handful at most.
        assert!(dis.len() <= 3, "{}", dis.len());
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = generate_synthetic(&spec(vec![], 0.1, 11)).unwrap();
        let b = generate_synthetic(&spec(vec![], 0.1, 11)).unwrap();
        let mut wa = Vec::new();
        let mut wb = Vec::new();
        a.dataset.write_wide_csv(&mut wa).unwrap();
        b.dataset.write_wide_csv(&mut wb).unwrap();
        assert_eq!(wa, wb);
        let c = generate_synthetic(&spec(vec![], 0.1, 12)).unwrap();
        let mut wc = Vec::new();
        c.dataset.write_wide_csv(&mut wc).unwrap();
        assert_ne!(wa, wc);
    }

    #[test]
    fn synthetic_validation() {
        let mut s = spec(vec![], 0.0, 1);
        s.k = 1;
        assert!(generate_synthetic(&s).is_err());
        let mut s = spec(vec![], 0.0, 1);
        s.n_cases = 0;
        assert!(generate_synthetic(&s).is_err());
        assert!(generate_synthetic(&spec(vec![], 0.5, 1)).is_err());
        assert!(generate_synthetic(&spec(vec![vec![0.0, 0.0]], 0.0, 1)).is_err());
    }
}
