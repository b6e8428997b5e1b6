//! Generalization, depth extrapolation and equation completion experiments.

mod completion;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::datagen::{DataError, Dataset, Split, SplitMode};
use crate::eval::OracleConfig;
use crate::expr::{ExprError, Grammar, Kind};
use crate::models::{Arch, Model, ModelError};
use crate::training::{evaluate_model, train_model, write_log, EpochLog, Metrics, TrainConfig, TrainError};

pub use completion::{
    check_monotone, confidence, eligible_blanks, expressible, first_correct_rank, make_completion_instances,
    numeric_candidates, rank_all, rank_candidates, symbolic_candidates, top_k_accuracy, top_k_accuracy_curve,
    top_k_min_mse, top_k_min_mse_curve, CompletionInstance, InstanceSet, RankedPredictions,
};

#[derive(Debug, Error)]
pub enum TaskError {
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// An architecture trained with or without function-evaluation data.
/// Written `treelstm` or `treelstm+data`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Variant {
    pub arch: Arch,
    pub funceval_data: bool,
}

impl Variant {
    pub fn new(arch: Arch, funceval_data: bool) -> Self {
        Self { arch, funceval_data }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.arch, if self.funceval_data { "+data" } else { "" })
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (arch, data) = match s.strip_suffix("+data") {
            Some(a) => (a, true),
            None => (s, false),
        };
        Ok(Variant::new(arch.parse()?, data))
    }
}

impl Serialize for Variant {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Variant {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Generalization,
    /// Train on every other depth, test on symbolic equations of this depth.
    ExtrapolateDepth(usize),
    Completion,
}

impl Experiment {
    pub fn slug(self) -> String {
        match self {
            Experiment::Generalization => "generalization".into(),
            Experiment::ExtrapolateDepth(k) => format!("extrapolate-depth{k}"),
            Experiment::Completion => "completion".into(),
        }
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "generalization" => Ok(Experiment::Generalization),
            "completion" => Ok(Experiment::Completion),
            _ => match s.strip_prefix("extrapolate") {
                Some(rest) => {
                    let k = rest.trim_start_matches(['-', ':']).trim_start_matches("depth");
                    let k = if k.is_empty() { 4 } else { k.parse().map_err(|_| format!("bad depth in `{s}`"))? };
                    Ok(Experiment::ExtrapolateDepth(k))
                }
                None => Err(format!("unknown experiment `{s}` (generalization, extrapolate[-depthK], completion)")),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Experiment run by `run_experiment` from the command line.
    pub name: String,
    pub variants: Vec<Variant>,
    /// Seed of the 80/20 train/test split.
    pub split_seed: u64,
    /// Largest k of the top-k curves.
    pub k_max: usize,
    /// Cap on completion instances per kind, 0 for no cap.
    pub max_instances: usize,
    /// Seed for blank selection and instance subsampling.
    pub completion_seed: u64,
    /// Worker threads for evaluation and ranking.
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let v = |a, d| Variant::new(a, d);
        Self {
            name: "generalization".into(),
            variants: vec![
                v(Arch::Rnn, false),
                v(Arch::Lstm, false),
                v(Arch::TreeNn, false),
                v(Arch::TreeLstm, false),
                v(Arch::TreeNn, true),
                v(Arch::TreeLstm, true),
            ],
            split_seed: 7,
            k_max: 25,
            max_instances: 0,
            completion_seed: 11,
            jobs: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), TaskError> {
        if self.variants.is_empty() {
            return Err(TaskError::Config("no variants".into()));
        }
        if self.k_max == 0 {
            return Err(TaskError::Config("k_max must be positive".into()));
        }
        self.experiment()?;
        Ok(())
    }

    pub fn experiment(&self) -> Result<Experiment, TaskError> {
        self.name.parse().map_err(TaskError::Config)
    }
}

pub struct TrainedModel {
    pub variant: Variant,
    pub model: Model,
    pub log: Vec<EpochLog>,
}

/// Trains each variant on `train` with `base`, switching funceval data per
/// variant.
pub fn train_variants(
    train: &Dataset,
    variants: &[Variant],
    base: &TrainConfig,
    grammar: &Grammar,
) -> Result<Vec<TrainedModel>, TaskError> {
    let mut out = Vec::with_capacity(variants.len());
    for &variant in variants {
        let cfg = TrainConfig { use_funceval_data: variant.funceval_data, ..base.clone() };
        let (model, log) = train_model(train, &cfg, variant.arch, grammar, None)?;
        out.push(TrainedModel { variant, model, log });
    }
    Ok(out)
}

/// One row of a verification table.
#[derive(Clone, Debug, PartialEq)]
pub struct TableRow {
    pub variant: Variant,
    pub metrics: Metrics,
}

pub const TABLE_HEADER: [&str; 9] = [
    "variant",
    "symbolic_accuracy",
    "funceval_mse",
    "funceval_accuracy",
    "depth1",
    "depth2",
    "depth3",
    "depth4",
    "test_size",
];

fn fmt6(x: f64) -> String {
    format!("{x:.6}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, fmt6)
}

impl TableRow {
    pub fn csv_row(&self) -> Vec<String> {
        let m = &self.metrics;
        let mut row = vec![self.variant.to_string(), fmt6(m.accuracy), fmt_opt(m.mse), fmt_opt(m.funceval_accuracy)];
        row.extend((1..=4).map(|d| fmt_opt(m.depth_accuracy(d))));
        row.push(m.confusion.total().to_string());
        row
    }
}

pub fn verification_table(test: &Dataset, models: &[TrainedModel], jobs: usize) -> Result<Vec<TableRow>, TaskError> {
    models.iter().map(|t| Ok(TableRow { variant: t.variant, metrics: evaluate_model(test, &t.model, jobs)? })).collect()
}

/// Top-k curves of one model.
#[derive(Clone, Debug, PartialEq)]
pub struct CompletionCurves {
    pub variant: Variant,
    /// Symbolic top-k accuracy, index k - 1.
    pub accuracy: Vec<f64>,
    /// Funceval top-k min MSE, index k - 1. Empty for chain models.
    pub min_mse: Vec<f64>,
    pub symbolic_instances: usize,
    pub funceval_instances: usize,
}

/// Completion instances of `test`, split by kind and capped per kind.
pub fn completion_instances(
    test: &Dataset,
    grammar: &Grammar,
    cfg: &ExperimentConfig,
) -> (Vec<CompletionInstance>, Vec<CompletionInstance>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.completion_seed);
    let set = make_completion_instances(test, &grammar.functions, &mut rng);
    let (mut sym, mut fe): (Vec<_>, Vec<_>) = set.instances.into_iter().partition(|i| i.kind() == Kind::Symbolic);
    if cfg.max_instances > 0 {
        for v in [&mut sym, &mut fe] {
            if v.len() > cfg.max_instances {
                let mut idx: Vec<usize> = rand::seq::index::sample(&mut rng, v.len(), cfg.max_instances).into_vec();
                idx.sort_unstable();
                *v = idx.into_iter().map(|i| v[i].clone()).collect();
            }
        }
    }
    (sym, fe, set.skipped)
}

/// Ranks and scores completion instances. Fails if a curve is not monotone.
pub fn completion_curves(
    model: &TrainedModel,
    symbolic: &[CompletionInstance],
    funceval: &[CompletionInstance],
    cfg: &ExperimentConfig,
    oracle: &OracleConfig,
) -> Result<CompletionCurves, TaskError> {
    let sym_rank = rank_all(symbolic, &model.model, cfg.jobs)?;
    let accuracy = top_k_accuracy_curve(symbolic, &sym_rank, cfg.k_max, oracle)?;
    check_monotone(&accuracy, true, "top-k accuracy")?;
    let min_mse = if model.model.arch.is_tree() {
        let fe_rank = rank_all(funceval, &model.model, cfg.jobs)?;
        let c = top_k_min_mse_curve(funceval, &fe_rank, cfg.k_max)?;
        check_monotone(&c, false, "top-k min MSE")?;
        c
    } else {
        Vec::new()
    };
    Ok(CompletionCurves {
        variant: model.variant,
        accuracy,
        min_mse,
        symbolic_instances: symbolic.len(),
        funceval_instances: funceval.len(),
    })
}

/// Everything an experiment produced.
pub struct ExperimentReport {
    pub experiment: Experiment,
    pub table: Vec<TableRow>,
    pub completion: Vec<CompletionCurves>,
    pub models: Vec<TrainedModel>,
    pub manifest: Manifest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestModel {
    pub variant: Variant,
    pub checkpoint_digest: String,
    pub epochs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub dataset_digest: String,
    pub train_digest: String,
    pub test_digest: String,
    pub seed: u64,
    pub train_config: TrainConfig,
    pub experiment_config: ExperimentConfig,
    pub models: Vec<ManifestModel>,
    pub files: Vec<String>,
}

pub fn checkpoint_digest(model: &Model) -> String {
    hex::encode(Sha256::digest(model.to_bytes()))
}

/// Train and test parts of `data`: its own split tags when it has any,
/// otherwise a seeded 80/20 split.
pub fn train_test_split(data: &Dataset, split_seed: u64) -> Result<(Dataset, Dataset), TaskError> {
    if data.iter().any(|r| r.split != Split::None) {
        let (train, test) = (data.with_split(Split::Train), data.with_split(Split::Test));
        if train.is_empty() || test.is_empty() {
            return Err(DataError::EmptySplit.into());
        }
        return Ok((train, test));
    }
    Ok(data.split(SplitMode::Random80_20(split_seed))?)
}

/// Splits `data` as the experiment requires.
pub fn experiment_split(
    exp: Experiment,
    data: &Dataset,
    cfg: &ExperimentConfig,
) -> Result<(Dataset, Dataset), TaskError> {
    match exp {
        Experiment::ExtrapolateDepth(k) => Ok(data.split(SplitMode::HoldOutDepth(k))?),
        _ => train_test_split(data, cfg.split_seed),
    }
}

/// Trains every configured variant and evaluates it as `exp` prescribes.
/// With `out_dir`, writes the report CSVs, per-model logs and checkpoints,
/// and a manifest.
pub fn run_experiment(
    exp: Experiment,
    data: &Dataset,
    cfg: &ExperimentConfig,
    train_cfg: &TrainConfig,
    oracle: &OracleConfig,
    grammar: &Grammar,
    out_dir: Option<&Path>,
) -> Result<ExperimentReport, TaskError> {
    cfg.validate()?;
    let (train, test) = experiment_split(exp, data, cfg)?;
    let models = train_variants(&train, &cfg.variants, train_cfg, grammar)?;
    let mut table = Vec::new();
    let mut curves = Vec::new();
    match exp {
        Experiment::Generalization | Experiment::ExtrapolateDepth(_) => {
            table = verification_table(&test, &models, cfg.jobs)?;
        }
        Experiment::Completion => {
            let (sym, fe, _) = completion_instances(&test, grammar, cfg);
            for m in &models {
                curves.push(completion_curves(m, &sym, &fe, cfg, oracle)?);
            }
        }
    }
    let manifest = Manifest {
        experiment: exp.slug(),
        dataset_digest: data.digest(),
        train_digest: train.digest(),
        test_digest: test.digest(),
        seed: train_cfg.seed,
        train_config: train_cfg.clone(),
        experiment_config: cfg.clone(),
        models: models
            .iter()
            .map(|m| ManifestModel {
                variant: m.variant,
                checkpoint_digest: checkpoint_digest(&m.model),
                epochs: m.log.len(),
            })
            .collect(),
        files: Vec::new(),
    };
    let mut report = ExperimentReport { experiment: exp, table, completion: curves, models, manifest };
    if let Some(dir) = out_dir {
        write_report(&mut report, dir)?;
    }
    Ok(report)
}

fn csv_err(e: csv::Error) -> TaskError {
    TaskError::Io(std::io::Error::other(e))
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), TaskError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_table(table: &[TableRow], path: &Path) -> Result<(), TaskError> {
    let rows: Vec<Vec<String>> = table.iter().map(TableRow::csv_row).collect();
    write_csv(path, &TABLE_HEADER, &rows)
}

/// One column per variant, one row per k. Missing curves are blank.
pub fn write_curves(
    curves: &[CompletionCurves],
    path: &Path,
    pick: fn(&CompletionCurves) -> &[f64],
) -> Result<(), TaskError> {
    let names: Vec<String> = curves.iter().map(|c| c.variant.to_string()).collect();
    let mut header = vec!["k"];
    header.extend(names.iter().map(String::as_str));
    let k_max = curves.iter().map(|c| pick(c).len()).max().unwrap_or(0);
    let rows: Vec<Vec<String>> = (0..k_max)
        .map(|k| {
            let mut row = vec![(k + 1).to_string()];
            row.extend(curves.iter().map(|c| fmt_opt(pick(c).get(k).copied())));
            row
        })
        .collect();
    write_csv(path, &header, &rows)
}

/// Writes the report files named in the manifest, then the manifest.
pub fn write_report(report: &mut ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>, TaskError> {
    fs::create_dir_all(dir)?;
    let slug = report.experiment.slug();
    let mut files = Vec::new();
    if !report.table.is_empty() {
        let p = dir.join(format!("{slug}.csv"));
        write_table(&report.table, &p)?;
        files.push(p);
    }
    if !report.completion.is_empty() {
        let p = dir.join("completion-topk-accuracy.csv");
        write_curves(&report.completion, &p, |c| &c.accuracy)?;
        files.push(p);
        let p = dir.join("completion-topk-min-mse.csv");
        write_curves(&report.completion, &p, |c| &c.min_mse)?;
        files.push(p);
    }
    for m in &report.models {
        let p = dir.join(format!("{slug}-{}.log.csv", m.variant));
        write_log(&m.log, m.variant.arch, fs::File::create(&p)?)?;
        files.push(p);
        let p = dir.join(format!("{slug}-{}.ckpt", m.variant));
        fs::write(&p, m.model.to_bytes())?;
        files.push(p);
    }
    report.manifest.files =
        files.iter().map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()).collect();
    let p = dir.join(format!("{slug}-manifest.json"));
    let json = serde_json::to_string_pretty(&report.manifest).map_err(|e| TaskError::Io(std::io::Error::other(e)))?;
    fs::write(&p, json + "\n")?;
    files.push(p);
    Ok(files)
}

#[cfg(test)]
mod tests;
