mod common;

use std::collections::BTreeMap;

use rand::Rng;

use second_opinion_core::config::RunConfig;
use second_opinion_core::data::{disagreement_cases, PanelDataset};
use second_opinion_core::eval::{
    emit_report, make_folds, run_experiment, score_baseline, score_policy, train_models,
};
use second_opinion_core::recommend::Policy;

fn config(seed: u64) -> RunConfig {
    RunConfig::from_json(&common::synthetic_config_json(
        std::path::Path::new("unused"),
        seed,
    ))
    .unwrap()
}

#[test]
fn held_out_features_never_reach_training() {
    let cfg = config(42);
    let ds = cfg.load_dataset().unwrap();
    let plan = make_folds(&ds, 3, 42).unwrap();
    let held_out = &ds.cases()[plan.test_cases(0)[0]].id;
    let records = ds
        .records()
        .iter()
        .cloned()
        .map(|mut r| {
            if &r.case == held_out {
                r.features.iter_mut().for_each(|v| *v = *v * 5.0 + 3.0);
            }
            r
        })
        .collect();
    let mutated =
        PanelDataset::new(records, ds.feature_names().to_vec(), ds.experts().to_vec()).unwrap();
    let train = plan.train_records(0);
    let a = train_models(&ds, &train, &cfg, 1).unwrap();
    let b = train_models(&mutated, &train, &cfg, 1).unwrap();
    assert_eq!(a.pooled, b.pooled);
    assert_eq!(a.experts, b.experts);
}

#[test]
fn folds_keep_cases_whole_and_balanced() {
    let ds = config(0).load_dataset().unwrap();
    for seed in 0..5 {
        let plan = make_folds(&ds, 3, seed).unwrap();
        let sizes = plan.fold_sizes();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for f in 0..3 {
            for j in plan.train_records(f) {
                assert_ne!(plan.fold_of(&ds, &ds.records()[j].case), Some(f));
            }
        }
    }
}

#[test]
fn summaries_ignore_case_order() {
    let cfg = config(3);
    let ds = cfg.load_dataset().unwrap();
    let outcome = run_experiment(&ds, &cfg).unwrap();
    let dis = disagreement_cases(&ds).unwrap();
    let mut reversed = outcome.cases.clone();
    reversed.reverse();
    for &p in &Policy::ALL {
        let mut forward = score_policy(&ds, &dis, &outcome.cases, p);
        forward.config_fingerprint = outcome.config_fingerprint.clone();
        let mut backward = score_policy(&ds, &dis, &reversed, p);
        backward.config_fingerprint = outcome.config_fingerprint.clone();
        assert_eq!(forward, backward);
        assert_eq!(Some(&forward), outcome.summary(p));
    }
}

#[test]
fn sampled_baseline_agrees_with_expectation() {
    let cfg = config(5);
    let ds = cfg.load_dataset().unwrap();
    let outcome = run_experiment(&ds, &cfg).unwrap();
    let preds = outcome.predictions();
    let analytic = score_baseline(&ds, &preds).unwrap();
    let dis: Vec<_> = ds.cases().iter().filter(|c| c.has_disagreement()).collect();
    let mut rng = common::rng(99);
    let draws = 100_000;
    let k = ds.n_experts();
    let (mut chosen, mut correct, mut total) = (vec![0usize; k], vec![0usize; k], 0usize);
    for _ in 0..draws {
        let case = dis[rng.random_range(0..dis.len())];
        let assessed: Vec<usize> = (0..k).filter(|&e| case.labels[e].is_some()).collect();
        let e = assessed[rng.random_range(0..assessed.len())];
        chosen[e] += 1;
        if case.labels[e] != Some(preds[&case.id]) {
            correct[e] += 1;
            total += 1;
        }
    }
    let n = analytic.n_eval_cases as f64;
    for t in &analytic.per_expert {
        assert!((chosen[t.expert] as f64 / draws as f64 - t.chosen / n).abs() < 0.01);
        assert!((correct[t.expert] as f64 / draws as f64 - t.correct / n).abs() < 0.01);
    }
    assert!((total as f64 / draws as f64 - analytic.accuracy_overall().unwrap()).abs() < 0.01);
}

#[test]
fn table_rows_are_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(8);
    let ds = cfg.load_dataset().unwrap();
    let outcome = run_experiment(&ds, &cfg).unwrap();
    let files = emit_report(&outcome, &ds, &cfg, dir.path()).unwrap();
    let mut reader = csv::Reader::from_path(&files.table1).unwrap();
    let mut rows = 0;
    for row in reader.records() {
        let row = row.unwrap();
        let f = |i: usize| row[i].parse::<f64>().unwrap();
        let (overall, pred1, pred0) = (f(1), f(2), f(3));
        let (n, n1, n0) = (f(4), f(5), f(6));
        for v in [overall, pred1, pred0] {
            assert!((0.0..=1.0).contains(&v));
        }
        assert_eq!(n, n1 + n0);
        // Each printed value carries at most 5e-7 of rounding.
        assert!(
            ((n1 * pred1 + n0 * pred0) / n - overall).abs() < 2e-6,
            "{row:?}"
        );
        rows += 1;
    }
    assert_eq!(rows, Policy::ALL.len() + 2);
}

#[test]
fn figure_has_one_row_per_policy_and_expert() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::from_json(
        &std::fs::read_to_string(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../runs/synthetic.json"
        ))
        .unwrap(),
    )
    .unwrap();
    cfg.eval.policies = vec![Policy::IndepAlways, Policy::InfluenceAlways];
    let ds = cfg.load_dataset().unwrap();
    assert_eq!(ds.n_experts(), 6);
    let outcome = run_experiment(&ds, &cfg).unwrap();
    let files = emit_report(&outcome, &ds, &cfg, dir.path()).unwrap();
    let rows = csv::Reader::from_path(&files.figure1)
        .unwrap()
        .records()
        .count();
    assert_eq!(rows, 2 * 6 + 6);
    for (e, t) in outcome
        .summary(Policy::InfluenceAlways)
        .unwrap()
        .per_expert
        .iter()
        .enumerate()
    {
        assert_eq!(t.expert, e);
        assert!(t.correct <= t.chosen);
    }
}

#[test]
fn identical_experts_leave_nothing_to_score() {
    let text = r#"{"data": {"synthetic": {"k": 3, "n_cases": 30, "n_features": 2,
        "base_coeffs": [1e6, 0.0], "seed": 2}}}"#;
    let cfg = RunConfig::from_json(text).unwrap();
    let ds = cfg.load_dataset().unwrap();
    let outcome = run_experiment(&ds, &cfg).unwrap();
    assert_eq!(outcome.n_disagreement, 0);
    for s in &outcome.summaries {
        assert_eq!(s.n_eval_cases, 0);
        assert_eq!(s.accuracy_overall(), None);
    }
    assert_eq!(outcome.oracle.n_eval_cases, 0);
}

#[test]
fn every_disagreement_case_has_a_dissenter() {
    for seed in 0..4 {
        let cfg = config(seed);
        let ds = cfg.load_dataset().unwrap();
        let outcome = run_experiment(&ds, &cfg).unwrap();
        assert!(outcome.n_disagreement > 0);
        assert_eq!(outcome.oracle.accuracy_overall(), Some(1.0));
        let preds: BTreeMap<_, _> = outcome.predictions();
        assert_eq!(preds.len(), ds.cases().len());
    }
}
