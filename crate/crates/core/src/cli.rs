//! `second-opinion` command line.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error, 3 numerical
//! failure. Errors print a single line on standard error.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::artifact::ModelArtifact;
use crate::config::RunConfig;
use crate::data::{generate_synthetic, CaseId, ExpertId};
use crate::error::{Error, ErrorKind, Result};
use crate::eval::{
    emit_report, fold_seed, make_assessment_folds, make_folds, recommend_case, run_experiment,
    train_models, TrainedModels,
};
use crate::preprocess::Retain;
use crate::recommend::Policy;

pub const OUT_DIR_ENV: &str = "SECOND_OPINION_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "second-opinion",
    version,
    about = "Recommend which expert to ask for a dissenting second opinion"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit pooled and per-expert models (per fold and on all data).
    Train(RunArgs),
    /// Score cases from a CSV with trained models; writes CSV to stdout.
    Recommend(RecommendArgs),
    /// Run the cross-validated evaluation and write the report files.
    Evaluate(RunArgs),
    /// Write the configured synthetic panel as a wide CSV.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct Overrides {
    /// Output directory (overrides output.dir).
    #[arg(long, env = OUT_DIR_ENV)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Retained variance fraction for PCA.
    #[arg(long)]
    pub retain: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Directory written by `train` (contains manifest.json).
    #[arg(long)]
    pub models: PathBuf,
    /// CSV with one row per case and the training feature columns.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Destination CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn exit_code(err: &Error) -> i32 {
    match err.kind() {
        ErrorKind::Config => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numerical => 3,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    match execute(cli.command, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            exit_code(&e)
        }
    }
}

pub fn execute<W: Write>(command: Command, out: &mut W) -> Result<()> {
    match command {
        Command::Train(args) => cmd_train(&load_config(&args)?).map(|_| ()),
        Command::Evaluate(args) => cmd_evaluate(&load_config(&args)?).map(|_| ()),
        Command::Recommend(args) => cmd_recommend(
            &RunConfig::load(&args.config)?,
            &args.models,
            &args.input,
            out,
        ),
        Command::Synth(args) => {
            cmd_synth(&RunConfig::load(&args.config)?, args.out.as_deref(), out)
        }
    }
}

fn load_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config)?;
    let o = &args.overrides;
    if let Some(v) = &o.out {
        cfg.output.dir = v.clone();
    }
    if let Some(v) = o.seed {
        cfg.eval.seed = v;
    }
    if let Some(v) = o.lambda {
        cfg.model.lambda = v;
    }
    if let Some(v) = o.tau {
        cfg.model.tau = v;
    }
    if let Some(v) = o.folds {
        cfg.eval.n_folds = v;
    }
    if let Some(v) = o.retain {
        cfg.preprocess.retain = Retain::Fraction(v);
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_evaluate(cfg: &RunConfig) -> Result<crate::eval::ReportFiles> {
    let ds = cfg.load_dataset()?;
    let outcome = run_experiment(&ds, cfg)?;
    let files = emit_report(&outcome, &ds, cfg, &cfg.output.dir)?;
    for s in outcome.summaries.iter().chain([&outcome.baseline]) {
        log::info!(
            "{:<18} overall {:?} pred1 {:?} pred0 {:?}",
            s.method.name(),
            s.accuracy_overall(),
            s.accuracy_pred1(),
            s.accuracy_pred0()
        );
    }
    Ok(files)
}

/// Index of trained artifacts, written next to them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experts: Vec<ExpertId>,
    pub feature_names: Vec<String>,
    pub n_folds: usize,
    /// Relative path → SHA-256 of the file.
    pub files: BTreeMap<String, String>,
}

fn save_models(
    models: &TrainedModels,
    root: &Path,
    sub: &str,
    files: &mut BTreeMap<String, String>,
) -> Result<()> {
    std::fs::create_dir_all(root.join(sub))?;
    let mut write = |name: String, a: &ModelArtifact| -> Result<()> {
        let rel = format!("{sub}/{name}");
        let json = a.to_json()?;
        std::fs::write(root.join(&rel), &json)?;
        files.insert(rel, hex::encode(Sha256::digest(json.as_bytes())));
        Ok(())
    };
    write("pooled.json".into(), &models.pooled)?;
    for (e, m) in models.experts.iter().enumerate() {
        if let Some(m) = m {
            write(format!("expert_{e}.json"), m)?;
        }
    }
    Ok(())
}

/// Trains per-fold and full-data models under `<output.dir>/models`.
pub fn cmd_train(cfg: &RunConfig) -> Result<Manifest> {
    let ds = cfg.load_dataset()?;
    let root = cfg.output.dir.join("models");
    let plan = if cfg.eval.grouped_folds {
        make_folds(&ds, cfg.eval.n_folds, cfg.eval.seed)?
    } else {
        make_assessment_folds(&ds, cfg.eval.n_folds, cfg.eval.seed)?
    };
    let mut files = BTreeMap::new();
    for fold in 0..plan.n_folds {
        let models = train_models(
            &ds,
            &plan.train_records(fold),
            cfg,
            fold_seed(cfg.eval.seed, fold),
        )?;
        save_models(&models, &root, &format!("fold_{fold}"), &mut files)?;
    }
    let all: Vec<usize> = (0..ds.records().len()).collect();
    let full = train_models(&ds, &all, cfg, cfg.eval.seed)?;
    save_models(&full, &root, "full", &mut files)?;

    let manifest = Manifest {
        experts: ds.experts().to_vec(),
        feature_names: ds.feature_names().to_vec(),
        n_folds: plan.n_folds,
        files,
    };
    std::fs::write(
        root.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

fn load_full_models(models_dir: &Path) -> Result<(Manifest, TrainedModels)> {
    let root = if models_dir.join("manifest.json").exists() {
        models_dir.to_path_buf()
    } else {
        models_dir.join("models")
    };
    let text = std::fs::read_to_string(root.join("manifest.json"))
        .map_err(|e| Error::Artifact(format!("cannot read manifest in {}: {e}", root.display())))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::Artifact(e.to_string()))?;
    let pooled = ModelArtifact::load(root.join("full/pooled.json"))?;
    let experts = (0..manifest.experts.len())
        .map(|e| {
            let p = root.join(format!("full/expert_{e}.json"));
            if p.exists() {
                ModelArtifact::load(p).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, TrainedModels { pooled, experts }))
}

const RECOMMEND_POLICIES: [Policy; 4] = [
    Policy::IndepAlways,
    Policy::IndepThreshold,
    Policy::InfluenceAlways,
    Policy::InfluenceSigned,
];

/// Writes one CSV row per input case: prediction, each policy's chosen expert
/// (empty when none), then per-expert influence and probability.
pub fn cmd_recommend<W: Write>(
    cfg: &RunConfig,
    models_dir: &Path,
    input: &Path,
    out: &mut W,
) -> Result<()> {
    let (manifest, models) = load_full_models(models_dir)?;
    let engine = models.pooled.influence_engine()?;
    let names: Vec<&str> = manifest.experts.iter().map(|e| e.name.as_str()).collect();

    let mut rdr = csv::Reader::from_path(input)?;
    let header = rdr.headers()?.clone();
    let feature_cols = models
        .pooled
        .feature_names
        .iter()
        .map(|f| {
            header
                .iter()
                .position(|h| h.trim() == f)
                .ok_or_else(|| Error::MissingColumn(f.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let id_name = cfg
        .data
        .schema
        .as_ref()
        .and_then(|s| s.case_id_column.clone())
        .unwrap_or_else(|| "case_id".into());
    let id_col = header.iter().position(|h| h.trim() == id_name);

    let mut w = csv::Writer::from_writer(out);
    let mut head = vec![
        "case_id".to_string(),
        "model_proba".into(),
        "model_pred".into(),
    ];
    head.extend(RECOMMEND_POLICIES.iter().map(|p| p.name().to_string()));
    head.extend(names.iter().map(|n| format!("influence_{n}")));
    head.extend(names.iter().map(|n| format!("proba_{n}")));
    w.write_record(&head)?;

    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        if row.len() != header.len() {
            return Err(Error::DimensionMismatch {
                expected: header.len(),
                got: row.len(),
            });
        }
        let case = CaseId::new(
            id_col
                .and_then(|c| row.get(c))
                .map_or_else(|| i.to_string(), |s| s.trim().to_string()),
        )?;
        let x = feature_cols
            .iter()
            .zip(&models.pooled.feature_names)
            .map(|(&c, name)| {
                let cell = row.get(c).unwrap_or("").trim();
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        row: i + 1,
                        column: name.clone(),
                        message: format!("`{cell}` is not a finite number"),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        let (proba, pred, probas, report, recs) =
            recommend_case(&case, &x, &models, &engine, cfg, &RECOMMEND_POLICIES)?;

        let mut rec = vec![case.to_string(), format!("{proba:.6}"), pred.to_string()];
        rec.extend(
            recs.iter()
                .map(|r| r.chosen.map(|e| names[e].to_string()).unwrap_or_default()),
        );
        rec.extend((0..names.len()).map(|e| {
            report
                .values
                .get(&e)
                .map(|v| format!("{v:.6}"))
                .unwrap_or_default()
        }));
        rec.extend((0..names.len()).map(|e| {
            probas
                .get(&e)
                .map(|v| format!("{v:.6}"))
                .unwrap_or_default()
        }));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_synth<W: Write>(cfg: &RunConfig, dest: Option<&Path>, out: &mut W) -> Result<()> {
    let spec = cfg
        .data
        .synthetic
        .as_ref()
        .ok_or_else(|| Error::Config("synth needs a `data.synthetic` section".into()))?;
    let panel = generate_synthetic(spec)?;
    match dest {
        Some(path) => panel.dataset.write_wide_csv(std::fs::File::create(path)?),
        None => panel.dataset.write_wide_csv(out),
    }
}
