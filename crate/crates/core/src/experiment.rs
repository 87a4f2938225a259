//! Stratified cross-validation experiments and cross-model comparisons.

use std::fmt::{self, Write as _};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::baselines::{train_gbm, train_random_forest, BaselineModel, ForestConfig, GbmConfig};
use crate::blocks::Ordering;
use crate::data::{impute_missing, to_tensor, zscore, ConsumptionRecord, Dataset};
use crate::error::{Error, Result};
use crate::features::extract_features;
use crate::metrics::{auc, logloss};
use crate::model::{Architecture, KvConfig, ModelConfig, Network, Profile};
use crate::seeds;
use crate::tensor::Tensor;
use crate::train::{evaluate, train_model, History, Split, TrainConfig};

pub const DEFAULT_FOLDS: usize = 5;
pub const VALIDATION_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Rf,
    Gbm,
    Cnn,
    Densenet1d,
    MsDensenet,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] =
        [ModelKind::Rf, ModelKind::Gbm, ModelKind::Cnn, ModelKind::Densenet1d, ModelKind::MsDensenet];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Rf => "rf",
            ModelKind::Gbm => "gbm",
            ModelKind::Cnn => "cnn",
            ModelKind::Densenet1d => "densenet1d",
            ModelKind::MsDensenet => "ms-densenet",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        ModelKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| {
            let valid: Vec<&str> = ModelKind::ALL.iter().map(|k| k.as_str()).collect();
            Error::Config(format!("unknown model kind {s:?}; valid kinds: {}", valid.join(", ")))
        })
    }

    pub fn architecture(self) -> Option<Architecture> {
        match self {
            ModelKind::Rf | ModelKind::Gbm => None,
            ModelKind::Cnn => Some(Architecture::ClassicalCnn),
            ModelKind::Densenet1d => Some(Architecture::Densenet1d),
            ModelKind::MsDensenet => Some(Architecture::MultiscaleDensenet),
        }
    }

    pub fn is_neural(self) -> bool {
        self.architecture().is_some()
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Splits `0..labels.len()` into `k` folds with matching class balance.
///
/// Each class is shuffled and dealt round-robin; the second class continues
/// dealing where the first stopped, so fold sizes differ by at most one.
pub fn stratified_kfold(labels: &[u8], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for label in [0u8, 1] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == label).collect();
        if members.len() < k {
            return Err(Error::Stratification { label, count: members.len(), folds: k });
        }
        members.shuffle(&mut rng);
        for m in members {
            folds[next].push(m);
            next = (next + 1) % k;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::Config("labels must be 0 or 1".into()));
    }
    Ok(folds)
}

/// Stratified holdout of about `fraction` of `rows` (at least one row of
/// each class that has two or more members). Returns `(train, holdout)`.
pub fn stratified_holdout(rows: &[usize], labels: &[u8], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut held = Vec::new();
    for label in [0u8, 1] {
        let mut members: Vec<usize> = rows.iter().copied().filter(|&r| labels[r] == label).collect();
        members.shuffle(&mut rng);
        let mut take = (members.len() as f64 * fraction).round() as usize;
        if members.len() >= 2 {
            take = take.clamp(1, members.len() - 1);
        } else {
            take = 0;
        }
        held.extend_from_slice(&members[..take]);
        train.extend_from_slice(&members[take..]);
    }
    train.sort_unstable();
    held.sort_unstable();
    (train, held)
}

/// Records that survived imputation and standardization, in both views.
pub struct Prepared {
    pub user_ids: Vec<String>,
    pub labels: Vec<u8>,
    /// Imputed, standardized series `[n, 1, 365]`.
    pub series: Tensor<f32>,
    /// Handcrafted features of the imputed (unstandardized) series.
    pub features: Vec<Vec<f64>>,
    /// Users left out, with the reason.
    pub dropped: Vec<(String, String)>,
}

/// Imputes and standardizes every record, dropping those that fail either
/// step so all model kinds see the same users.
pub fn prepare(dataset: &Dataset) -> Result<Prepared> {
    let outcomes: Vec<Result<(ConsumptionRecord, Vec<f64>)>> = dataset
        .records
        .par_iter()
        .map(|r| {
            let imputed = impute_missing(r)?;
            let features = extract_features(&imputed)?.values;
            Ok((zscore(&imputed)?, features))
        })
        .collect();
    let mut kept = Vec::new();
    let mut features = Vec::new();
    let mut dropped = Vec::new();
    for (r, outcome) in dataset.records.iter().zip(outcomes) {
        match outcome {
            Ok((std, f)) => {
                kept.push(std);
                features.push(f);
            }
            Err(e @ (Error::Imputation { .. } | Error::Standardization(_))) => {
                dropped.push((r.user_id.clone(), e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    if kept.is_empty() {
        return Err(Error::Config("no usable records after preprocessing".into()));
    }
    let refs: Vec<&ConsumptionRecord> = kept.iter().collect();
    Ok(Prepared {
        user_ids: kept.iter().map(|r| r.user_id.clone()).collect(),
        labels: kept.iter().map(|r| r.label).collect(),
        series: to_tensor(&refs)?,
        features,
        dropped,
    })
}

/// Everything that parameterizes a cross-validation run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub profile: Profile,
    /// Architecture override for neural kinds; presets are used otherwise.
    pub model: Option<ModelConfig>,
    pub train: TrainConfig,
    pub forest: ForestConfig,
    pub gbm: GbmConfig,
    pub folds: usize,
    pub val_fraction: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            profile: Profile::Desk,
            model: None,
            train: TrainConfig::default(),
            forest: ForestConfig::default(),
            gbm: GbmConfig::default(),
            folds: DEFAULT_FOLDS,
            val_fraction: VALIDATION_FRACTION,
        }
    }
}

impl ExperimentConfig {
    /// Reads a config file: `profile`, optional model keys (when
    /// `architecture` is present), and `train.*`, `rf.*`, `gbm.*`, `cv.*`.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let profile = match kv.get("profile") {
            Some(p) => Profile::parse(p)?,
            None => Profile::Desk,
        };
        let model = match kv.get("architecture") {
            Some(_) => Some(ModelConfig::from_kv(kv, profile)?),
            None => None,
        };
        let mut known: Vec<&str> = ModelConfig::KEYS.to_vec();
        known.extend(["profile", "cv.folds", "cv.val_fraction"]);
        let unknown = kv.unknown_keys(&known, &["train.", "rf.", "gbm."]);
        if !unknown.is_empty() {
            return Err(Error::Config(format!("unknown config keys: {}", unknown.join(", "))));
        }
        let cfg = ExperimentConfig {
            profile,
            model,
            train: TrainConfig::from_kv(kv)?,
            forest: ForestConfig::from_kv(kv)?,
            gbm: GbmConfig::from_kv(kv)?,
            folds: kv.parsed_or("cv.folds", DEFAULT_FOLDS)?,
            val_fraction: kv.parsed_or("cv.val_fraction", VALIDATION_FRACTION)?,
        };
        if !(0.0..0.5).contains(&cfg.val_fraction) {
            return Err(Error::Config(format!("cv.val_fraction {} outside [0, 0.5)", cfg.val_fraction)));
        }
        Ok(cfg)
    }

    /// Architecture used for a neural kind.
    pub fn model_config(&self, kind: ModelKind) -> Result<ModelConfig> {
        let arch = kind
            .architecture()
            .ok_or_else(|| Error::Config(format!("{kind} is not a neural model")))?;
        match &self.model {
            Some(m) if m.architecture == arch => Ok(m.clone()),
            Some(m) => Err(Error::Config(format!("config describes {} but model kind is {kind}", m.architecture))),
            None => {
                let mut m = ModelConfig::preset(arch, self.profile);
                m.name = kind.as_str().to_string();
                Ok(m)
            }
        }
    }

    /// Flat echo of the settings relevant to `kind`.
    pub fn echo(&self, kind: ModelKind) -> KvConfig {
        let mut kv = match self.model_config(kind) {
            Ok(m) => m.to_kv(),
            Err(_) => KvConfig::default(),
        };
        kv.set("profile", self.profile.as_str());
        kv.set("cv.folds", self.folds);
        kv.set("cv.val_fraction", self.val_fraction);
        match kind {
            ModelKind::Rf => {
                let f = self.forest;
                kv.set("rf.n_trees", f.n_trees);
                kv.set("rf.max_depth", f.max_depth);
                kv.set("rf.min_leaf", f.min_leaf);
                kv.set("rf.max_features", f.max_features);
                kv.set("rf.bootstrap", f.bootstrap);
            }
            ModelKind::Gbm => {
                let g = self.gbm;
                kv.set("gbm.rounds", g.rounds);
                kv.set("gbm.max_depth", g.max_depth);
                kv.set("gbm.min_leaf", g.min_leaf);
                kv.set("gbm.learning_rate", g.learning_rate);
            }
            _ => self.train.write_kv(&mut kv),
        }
        kv
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldMetrics {
    pub fold: usize,
    pub logloss: f64,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub model_name: String,
    pub seed: u64,
    pub per_fold: Vec<FoldMetrics>,
    pub mean_logloss: f64,
    pub mean_auc: f64,
    pub config_echo: String,
}

impl ExperimentReport {
    pub fn new(model_name: &str, seed: u64, per_fold: Vec<FoldMetrics>, config_echo: String) -> Self {
        let n = per_fold.len() as f64;
        let mean_logloss = per_fold.iter().map(|f| f.logloss).sum::<f64>() / n;
        let mean_auc = per_fold.iter().map(|f| f.auc).sum::<f64>() / n;
        ExperimentReport { model_name: model_name.to_string(), seed, per_fold, mean_logloss, mean_auc, config_echo }
    }

    /// `model,fold,logloss,auc` rows followed by a `mean` row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("model,fold,logloss,auc\n");
        for f in &self.per_fold {
            let _ = writeln!(s, "{},{},{:.10},{:.10}", self.model_name, f.fold, f.logloss, f.auc);
        }
        let _ = writeln!(s, "{},mean,{:.10},{:.10}", self.model_name, self.mean_logloss, self.mean_auc);
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("model {} (seed {})\n{:<6} {:>10} {:>8}\n", self.model_name, self.seed, "fold", "logloss", "auc");
        for f in &self.per_fold {
            let _ = writeln!(s, "{:<6} {:>10.4} {:>8.4}", f.fold, f.logloss, f.auc);
        }
        let _ = writeln!(s, "{:<6} {:>10.4} {:>8.4}", "mean", self.mean_logloss, self.mean_auc);
        s
    }
}

/// A trained fold model.
pub enum FoldModel {
    Neural(Box<Network<f32>>),
    Baseline(BaselineModel),
}

pub struct FoldOutcome {
    pub metrics: FoldMetrics,
    pub model: FoldModel,
    pub history: Option<History>,
    pub train_rows: usize,
    pub test_rows: usize,
}

pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub folds: Vec<FoldOutcome>,
}

fn select_features(features: &[Vec<f64>], rows: &[usize]) -> Vec<Vec<f64>> {
    rows.iter().map(|&r| features[r].clone()).collect()
}

fn select_labels(labels: &[u8], rows: &[usize]) -> Vec<u8> {
    rows.iter().map(|&r| labels[r]).collect()
}

/// Trains a neural model on `train_rows` with a stratified validation split
/// for early stopping.
pub fn fit_network(
    prepared: &Prepared,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    train_rows: &[usize],
    val_fraction: f64,
    seed: u64,
) -> Result<(Network<f32>, History)> {
    let (fit_rows, val_rows) =
        stratified_holdout(train_rows, &prepared.labels, val_fraction, seeds::derive(seed, "validation", 0));
    let mut net = Network::<f32>::build(model_cfg, seeds::derive(seed, "init", 0))?;
    let x = prepared.series.select_batch(&fit_rows)?;
    let y = select_labels(&prepared.labels, &fit_rows);
    let cfg = TrainConfig { seed: seeds::derive(seed, "shuffle", 0), ..*train_cfg };
    let history = if val_rows.is_empty() {
        train_model(&mut net, &Split { x: &x, y: &y }, None, &cfg)?
    } else {
        let vx = prepared.series.select_batch(&val_rows)?;
        let vy = select_labels(&prepared.labels, &val_rows);
        train_model(&mut net, &Split { x: &x, y: &y }, Some(&Split { x: &vx, y: &vy }), &cfg)?
    };
    Ok((net, history))
}

fn run_fold(
    kind: ModelKind,
    prepared: &Prepared,
    cfg: &ExperimentConfig,
    folds: &[Vec<usize>],
    k: usize,
    seed: u64,
) -> Result<FoldOutcome> {
    let test_rows = &folds[k];
    let train_rows: Vec<usize> = folds.iter().enumerate().filter(|(i, _)| *i != k).flat_map(|(_, f)| f.iter().copied()).collect();
    let fold_seed = seeds::derive(seed, kind.as_str(), k as u64);
    let test_y = select_labels(&prepared.labels, test_rows);
    let (probs, model, history) = match kind {
        ModelKind::Rf | ModelKind::Gbm => {
            let x = select_features(&prepared.features, &train_rows);
            let y = select_labels(&prepared.labels, &train_rows);
            let model = if kind == ModelKind::Rf {
                BaselineModel::Forest(train_random_forest(&x, &y, &cfg.forest, fold_seed)?)
            } else {
                BaselineModel::Gbm(train_gbm(&x, &y, &cfg.gbm)?)
            };
            let p = model.predict_proba(&select_features(&prepared.features, test_rows))?;
            (p, FoldModel::Baseline(model), None)
        }
        _ => {
            let model_cfg = cfg.model_config(kind)?;
            let (net, history) = fit_network(prepared, &model_cfg, &cfg.train, &train_rows, cfg.val_fraction, fold_seed)?;
            let tx = prepared.series.select_batch(test_rows)?;
            let (_, p) = evaluate(&net, &Split { x: &tx, y: &test_y })?;
            (p, FoldModel::Neural(Box::new(net)), Some(history))
        }
    };
    let metrics = FoldMetrics { fold: k + 1, logloss: logloss(&probs, &test_y)?, auc: auc(&probs, &test_y)? };
    Ok(FoldOutcome { metrics, model, history, train_rows: train_rows.len(), test_rows: test_rows.len() })
}

/// Stratified k-fold cross-validation of one model kind. Folds depend only
/// on `seed` and the labels, so every kind sees identical splits; folds run
/// in parallel and results are independent of the worker count.
pub fn run_experiment(kind: ModelKind, prepared: &Prepared, cfg: &ExperimentConfig, seed: u64) -> Result<ExperimentOutcome> {
    let folds = stratified_kfold(&prepared.labels, cfg.folds, seeds::derive(seed, "folds", 0))?;
    let outcomes = (0..cfg.folds)
        .into_par_iter()
        .map(|k| run_fold(kind, prepared, cfg, &folds, k, seed))
        .collect::<Result<Vec<_>>>()?;
    let per_fold = outcomes.iter().map(|o| o.metrics).collect();
    let report = ExperimentReport::new(kind.as_str(), seed, per_fold, cfg.echo(kind).to_text());
    Ok(ExperimentOutcome { report, folds: outcomes })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSummary {
    pub model: ModelKind,
    pub mean_logloss: f64,
    pub mean_auc: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub reports: Vec<ExperimentReport>,
    /// Sorted by mean AUC, best first.
    pub ranking: Vec<ModelSummary>,
}

impl Comparison {
    pub fn from_reports(reports: Vec<ExperimentReport>) -> Result<Self> {
        let mut ranking = Vec::new();
        for kind in ModelKind::ALL {
            let mine: Vec<&ExperimentReport> = reports.iter().filter(|r| r.model_name == kind.as_str()).collect();
            if mine.is_empty() {
                continue;
            }
            let n = mine.len() as f64;
            ranking.push(ModelSummary {
                model: kind,
                mean_logloss: mine.iter().map(|r| r.mean_logloss).sum::<f64>() / n,
                mean_auc: mine.iter().map(|r| r.mean_auc).sum::<f64>() / n,
                seeds: mine.len(),
            });
        }
        ranking.sort_by(|a, b| b.mean_auc.total_cmp(&a.mean_auc));
        Ok(Comparison { reports, ranking })
    }

    pub fn summary(&self, kind: ModelKind) -> Option<&ModelSummary> {
        self.ranking.iter().find(|s| s.model == kind)
    }

    /// Per-seed fold rows and per-seed means: `model,seed,fold,logloss,auc`.
    pub fn folds_csv(&self) -> String {
        let mut s = String::from("model,seed,fold,logloss,auc\n");
        for r in &self.reports {
            for f in &r.per_fold {
                let _ = writeln!(s, "{},{},{},{:.10},{:.10}", r.model_name, r.seed, f.fold, f.logloss, f.auc);
            }
            let _ = writeln!(s, "{},{},mean,{:.10},{:.10}", r.model_name, r.seed, r.mean_logloss, r.mean_auc);
        }
        s
    }

    /// `rank,model,mean_logloss,mean_auc,seeds`.
    pub fn ranking_csv(&self) -> String {
        let mut s = String::from("rank,model,mean_logloss,mean_auc,seeds\n");
        for (i, m) in self.ranking.iter().enumerate() {
            let _ = writeln!(s, "{},{},{:.10},{:.10},{}", i + 1, m.model, m.mean_logloss, m.mean_auc, m.seeds);
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("{:<5} {:<12} {:>10} {:>8} {:>6}\n", "rank", "model", "logloss", "auc", "seeds");
        for (i, m) in self.ranking.iter().enumerate() {
            let _ = writeln!(s, "{:<5} {:<12} {:>10.4} {:>8.4} {:>6}", i + 1, m.model.as_str(), m.mean_logloss, m.mean_auc, m.seeds);
        }
        s
    }
}

/// Runs every kind in `kinds` for every seed.
pub fn compare(
    prepared: &Prepared,
    kinds: &[ModelKind],
    seeds_list: &[u64],
    cfg: &ExperimentConfig,
    mut progress: impl FnMut(&ExperimentReport),
) -> Result<Comparison> {
    let mut reports = Vec::new();
    for &seed in seeds_list {
        for &kind in kinds {
            let outcome = run_experiment(kind, prepared, cfg, seed)?;
            progress(&outcome.report);
            reports.push(outcome.report);
        }
    }
    Comparison::from_reports(reports)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRun {
    pub ordering: Ordering,
    pub val_losses: Vec<f64>,
    /// Population standard deviation of consecutive validation-loss differences.
    pub diff_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub seed: u64,
    pub epochs: usize,
    pub runs: Vec<StabilityRun>,
}

impl StabilityReport {
    pub fn to_table(&self) -> String {
        let mut s = format!("validation-loss vibration, seed {}, {} epochs\n", self.seed, self.epochs);
        for r in &self.runs {
            let _ = writeln!(s, "{:<14} std(diff) {:.6}", r.ordering.as_str(), r.diff_std);
        }
        s
    }

    /// `ordering,epoch,val_logloss` rows followed by `ordering,diff_std,value`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("ordering,epoch,val_logloss\n");
        for r in &self.runs {
            for (i, l) in r.val_losses.iter().enumerate() {
                let _ = writeln!(s, "{},{},{:.10}", r.ordering.as_str(), i + 1, l);
            }
            let _ = writeln!(s, "{},diff_std,{:.10}", r.ordering.as_str(), r.diff_std);
        }
        s
    }
}

/// Standard deviation of `v[i+1] - v[i]`.
pub fn diff_std(v: &[f64]) -> f64 {
    if v.len() < 3 {
        return 0.0;
    }
    let d: Vec<f64> = v.windows(2).map(|w| w[1] - w[0]).collect();
    let m = d.iter().sum::<f64>() / d.len() as f64;
    (d.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / d.len() as f64).sqrt()
}

/// Trains the multi-scale model under both unit orderings on the first
/// fold's training rows for exactly `epochs` epochs (no early stopping)
/// and measures how much the validation loss jumps between epochs.
pub fn stability_diagnostic(prepared: &Prepared, cfg: &ExperimentConfig, seed: u64, epochs: usize) -> Result<StabilityReport> {
    let folds = stratified_kfold(&prepared.labels, cfg.folds, seeds::derive(seed, "folds", 0))?;
    let train_rows: Vec<usize> = folds[1..].iter().flatten().copied().collect();
    let base = cfg.model_config(ModelKind::MsDensenet)?;
    let train = TrainConfig { max_epochs: epochs, patience: epochs.max(1), ..cfg.train };
    let runs = [Ordering::ConvBnRelu, Ordering::BnReluConv]
        .into_par_iter()
        .map(|ordering| {
            let mut model_cfg = base.clone();
            for b in &mut model_cfg.blocks {
                b.part.ordering = ordering;
            }
            let fold_seed = seeds::derive(seed, "stability", 0);
            let (_, history) =
                fit_network(prepared, &model_cfg, &train, &train_rows, cfg.val_fraction.max(0.05), fold_seed)?;
            let val_losses = history.val_losses();
            Ok(StabilityRun { ordering, diff_std: diff_std(&val_losses), val_losses })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StabilityReport { seed, epochs, runs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_synthetic;

    #[test]
    fn ten_balanced_into_five() {
        let labels = [0, 1, 0, 1, 0, 1, 0, 1, 0, 1];
        let folds = stratified_kfold(&labels, 5, 3).unwrap();
        for f in &folds {
            assert_eq!(f.len(), 2);
            assert_eq!(f.iter().filter(|&&i| labels[i] == 1).count(), 1);
        }
        assert_eq!(folds, stratified_kfold(&labels, 5, 3).unwrap());
    }

    #[test]
    fn folds_partition_indices() {
        let labels: Vec<u8> = (0..103).map(|i| u8::from(i % 7 == 0)).collect();
        let folds = stratified_kfold(&labels, 5, 9).unwrap();
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..103).collect::<Vec<_>>());
        let pos = labels.iter().filter(|&&l| l == 1).count() as f64 / 103.0;
        for f in &folds {
            let p = f.iter().filter(|&&i| labels[i] == 1).count() as f64;
            assert!((p - pos * f.len() as f64).abs() <= 1.0);
        }
    }

    #[test]
    fn rare_class_is_rejected() {
        let labels = [0, 0, 0, 0, 0, 0, 1, 1, 1, 1];
        assert!(matches!(stratified_kfold(&labels, 5, 0), Err(Error::Stratification { label: 1, count: 4, folds: 5 })));
    }

    #[test]
    fn holdout_is_stratified_and_disjoint() {
        let labels: Vec<u8> = (0..100).map(|i| u8::from(i < 20)).collect();
        let rows: Vec<usize> = (0..100).collect();
        let (train, held) = stratified_holdout(&rows, &labels, 0.1, 1);
        assert_eq!(held.len(), 10);
        assert_eq!(held.iter().filter(|&&r| labels[r] == 1).count(), 2);
        assert_eq!(train.len() + held.len(), 100);
        assert!(held.iter().all(|r| !train.contains(r)));
    }

    #[test]
    fn report_means_match_folds() {
        let folds: Vec<FoldMetrics> =
            (1..=5).map(|i| FoldMetrics { fold: i, logloss: 0.1 * i as f64, auc: 0.5 + 0.01 * i as f64 }).collect();
        let r = ExperimentReport::new("x", 0, folds.clone(), String::new());
        assert!((r.mean_logloss - folds.iter().map(|f| f.logloss).sum::<f64>() / 5.0).abs() < 1e-12);
        assert_eq!(r.to_csv().lines().count(), 7);
        assert!(r.to_csv().lines().last().unwrap().starts_with("x,mean,"));
    }

    #[test]
    fn baseline_experiment_is_deterministic() {
        let ds = generate_synthetic(120, 0.25, 0.02, 5).unwrap();
        let prepared = prepare(&ds).unwrap();
        let cfg = ExperimentConfig {
            forest: ForestConfig { n_trees: 10, ..ForestConfig::default() },
            gbm: GbmConfig { rounds: 20, ..GbmConfig::default() },
            ..ExperimentConfig::default()
        };
        for kind in [ModelKind::Rf, ModelKind::Gbm] {
            let a = run_experiment(kind, &prepared, &cfg, 1).unwrap();
            let b = run_experiment(kind, &prepared, &cfg, 1).unwrap();
            assert_eq!(a.report, b.report);
            assert_eq!(a.report.per_fold.len(), 5);
            assert!(a.report.per_fold.iter().all(|f| (0.0..=1.0).contains(&f.auc) && f.logloss.is_finite()));
        }
    }

    #[test]
    fn kinds_parse() {
        for k in ModelKind::ALL {
            assert_eq!(ModelKind::parse(k.as_str()).unwrap(), k);
        }
        let err = ModelKind::parse("svm").unwrap_err().to_string();
        assert!(err.contains("ms-densenet"));
    }

    #[test]
    fn diff_std_of_linear_sequence_is_zero() {
        assert!(diff_std(&[1.0, 0.9, 0.8, 0.7]) < 1e-12);
        assert!(diff_std(&[1.0, 0.5, 1.0, 0.5]) > 0.4);
    }
}
