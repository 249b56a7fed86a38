#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use second_opinion_core::data::{generate_synthetic, PanelDataset, SyntheticSpec};
use second_opinion_core::glm::TrainingSet;

/// A random panel whose experts differ on a few coordinates.
pub fn random_spec(
    rng: &mut ChaCha8Rng,
    k: usize,
    n_features: usize,
    n_cases: usize,
) -> SyntheticSpec {
    let base_coeffs = (0..n_features)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let expert_offsets = (0..k)
        .map(|_| {
            (0..n_features)
                .map(|_| 0.8 * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    SyntheticSpec {
        k,
        n_cases,
        n_features,
        base_coeffs,
        expert_offsets,
        label_noise: 0.1,
        seed: rng.random(),
    }
}

pub fn panel(spec: &SyntheticSpec) -> PanelDataset {
    generate_synthetic(spec)
        .expect("valid synthetic spec")
        .dataset
}

/// Pooled training rows on raw features, plus who labeled each row.
pub fn pooled_set(ds: &PanelDataset) -> (TrainingSet, Vec<usize>) {
    let rows: Vec<Vec<f64>> = ds.records().iter().map(|r| r.features.clone()).collect();
    let labels: Vec<u8> = ds.records().iter().map(|r| r.label).collect();
    let labelers = ds.records().iter().map(|r| r.expert).collect();
    (
        TrainingSet::from_rows(&rows, &labels).expect("rows are consistent"),
        labelers,
    )
}

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn sup(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |a, b| a.max(b.abs()))
}

/// A small synthetic run config writing into `out`.
pub fn synthetic_config_json(out: &std::path::Path, seed: u64) -> String {
    format!(
        r#"{{
  "data": {{"synthetic": {{"k": 4, "n_cases": 60, "n_features": 5,
    "base_coeffs": [1.2, -0.8, 0.5, 0.0, 0.3],
    "expert_offsets": [[0,0,0,1,0],[0,0,0,-1,0],[0,0.7,0,0,0],[0,-0.7,0,0,0]],
    "label_noise": 0.05, "seed": 11}}}},
  "eval": {{"n_folds": 3, "seed": {seed}}},
  "output": {{"dir": {out:?}}}
}}"#
    )
}
