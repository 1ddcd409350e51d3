//! Metrics, split protocols, the benchmark driver and the signed-rank test.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::balance::{
    compute_class_weights, derive_seed, resample, rng_for, SamplerConfig, SamplerKind, SvmParams,
    WeightScheme,
};
use crate::corpus::{Corpus, Label};
use crate::features::{fit_vocabulary, tokenize, vectorize, LabeledMatrix, Vocabulary};
use crate::models::{self, Hyper, ModelKind, ModelParams, TrainedModel};
use crate::text::Lemmatizer;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no instances to evaluate")]
    Empty,
    #[error("labels ({labels}) and scores ({scores}) differ in length")]
    LengthMismatch { labels: usize, scores: usize },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("signed-rank test needs at least 5 non-zero differences, found {0}")]
    TooFewPairs(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// Metric values are `None` where the denominator is zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub roc_auc: Option<f64>,
    pub confusion: ConfusionCounts,
    pub project_id: String,
    pub technique: String,
    pub model_kind: String,
    pub fold_id: usize,
    pub repetition: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    Precision,
    Recall,
    F1,
    RocAuc,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Precision, Metric::Recall, Metric::F1, Metric::RocAuc];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Precision => "precision",
            Metric::Recall => "recall",
            Metric::F1 => "f1",
            Metric::RocAuc => "roc_auc",
        }
    }

    pub fn of(self, r: &MetricsReport) -> Option<f64> {
        match self {
            Metric::Precision => r.precision,
            Metric::Recall => r.recall,
            Metric::F1 => r.f1,
            Metric::RocAuc => r.roc_auc,
        }
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn confusion(labels: &[Label], scores: &[f64], threshold: f64) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for (l, &s) in labels.iter().zip(scores) {
        match (l.is_satd(), s >= threshold) {
            (true, true) => c.tp += 1,
            (true, false) => c.fn_ += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

/// Probability that a random SATD row outscores a random non-SATD row, ties
/// counting one half. Computed from average ranks.
pub fn roc_auc(labels: &[Label], scores: &[f64]) -> Option<f64> {
    let n_pos = labels.iter().filter(|l| l.is_satd()).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 share their average.
        let avg = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            if labels[k].is_satd() {
                rank_sum_pos += avg;
            }
        }
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Some((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

pub fn compute_metrics(labels: &[Label], scores: &[f64], threshold: f64) -> Result<MetricsReport, EvalError> {
    if labels.len() != scores.len() {
        return Err(EvalError::LengthMismatch {
            labels: labels.len(),
            scores: scores.len(),
        });
    }
    if labels.is_empty() {
        return Err(EvalError::Empty);
    }
    let c = confusion(labels, scores, threshold);
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    Ok(MetricsReport {
        precision,
        recall,
        f1,
        roc_auc: roc_auc(labels, scores),
        confusion: c,
        ..Default::default()
    })
}

// ---------------------------------------------------------------------------
// Protocols and folds
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Protocol {
    Within,
    Cross,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Within => "within",
            Protocol::Cross => "cross",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "within" => Ok(Protocol::Within),
            "cross" => Ok(Protocol::Cross),
            _ => Err(format!("unknown protocol `{s}` (expected within or cross)")),
        }
    }
}

pub const N_FOLDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    /// Project the test rows come from.
    pub project_id: String,
    pub fold_id: usize,
    pub repetition: usize,
    pub seed: u64,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub protocol: Protocol,
    pub folds: Vec<Fold>,
    pub seed: u64,
}

/// WITHIN: per project, ten label-stratified folds; the nine non-test folds
/// are split again per class into train and a one-ninth validation part.
/// CROSS: per target project, train on every other project, test on the
/// target, with `repetitions` derived seeds and no validation rows.
pub fn make_folds(
    corpus: &Corpus,
    protocol: Protocol,
    seed: u64,
    repetitions: usize,
) -> Result<SplitPlan, EvalError> {
    let projects = corpus.projects();
    let mut by_project: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in corpus.records().iter().enumerate() {
        by_project.entry(r.project_id.as_str()).or_default().push(i);
    }
    let mut folds = Vec::new();
    match protocol {
        Protocol::Within => {
            for (p_idx, project) in projects.iter().enumerate() {
                let counts = &corpus.per_project_counts()[project];
                let minority = counts.satd.min(counts.total - counts.satd);
                if minority < N_FOLDS {
                    return Err(EvalError::Protocol(format!(
                        "project `{project}` has {minority} minority instances; within-project folds need at least {N_FOLDS}"
                    )));
                }
                let p_seed = derive_seed(seed, p_idx as u64);
                folds.extend(within_folds(corpus, &by_project[project.as_str()], project, p_seed));
            }
        }
        Protocol::Cross => {
            if projects.len() < 2 {
                return Err(EvalError::Protocol(format!(
                    "cross-project evaluation needs at least 2 projects, found {}",
                    projects.len()
                )));
            }
            for (p_idx, project) in projects.iter().enumerate() {
                let test = by_project[project.as_str()].clone();
                let train: Vec<usize> = (0..corpus.len())
                    .filter(|&i| corpus.records()[i].project_id != *project)
                    .collect();
                for rep in 0..repetitions.max(1) {
                    folds.push(Fold {
                        project_id: project.clone(),
                        fold_id: 0,
                        repetition: rep,
                        seed: derive_seed(derive_seed(seed, p_idx as u64), rep as u64),
                        train: train.clone(),
                        validation: Vec::new(),
                        test: test.clone(),
                    });
                }
            }
        }
    }
    Ok(SplitPlan { protocol, folds, seed })
}

fn within_folds(corpus: &Corpus, rows: &[usize], project: &str, seed: u64) -> Vec<Fold> {
    let mut rng = rng_for(seed, 0);
    let mut assign: Vec<(usize, usize)> = Vec::with_capacity(rows.len());
    let mut offset = 0;
    for label in [Label::Satd, Label::NonSatd] {
        let mut class_rows: Vec<usize> = rows
            .iter()
            .copied()
            .filter(|&i| corpus.records()[i].label == label)
            .collect();
        class_rows.shuffle(&mut rng);
        // Continue the round-robin across classes so fold sizes stay within one.
        for (k, &r) in class_rows.iter().enumerate() {
            assign.push((r, (offset + k) % N_FOLDS));
        }
        offset = (offset + class_rows.len()) % N_FOLDS;
    }
    assign.sort_unstable();

    (0..N_FOLDS)
        .map(|f| {
            let test: Vec<usize> = assign.iter().filter(|a| a.1 == f).map(|a| a.0).collect();
            let fold_seed = derive_seed(seed, 1 + f as u64);
            let mut frng = rng_for(fold_seed, 0);
            let mut train = Vec::new();
            let mut validation = Vec::new();
            for label in [Label::Satd, Label::NonSatd] {
                let mut rest: Vec<usize> = assign
                    .iter()
                    .filter(|a| a.1 != f && corpus.records()[a.0].label == label)
                    .map(|a| a.0)
                    .collect();
                rest.shuffle(&mut frng);
                let n_val = (rest.len() as f64 / 9.0).round() as usize;
                validation.extend_from_slice(&rest[..n_val]);
                train.extend_from_slice(&rest[n_val..]);
            }
            train.sort_unstable();
            validation.sort_unstable();
            Fold {
                project_id: project.to_string(),
                fold_id: f,
                repetition: 0,
                seed: fold_seed,
                train,
                validation,
                test,
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Benchmark
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Technique {
    Baseline,
    Cost,
    Sampling(SamplerKind),
}

impl Technique {
    pub const ALL: [Technique; 6] = [
        Technique::Baseline,
        Technique::Cost,
        Technique::Sampling(SamplerKind::Smote),
        Technique::Sampling(SamplerKind::Borderline),
        Technique::Sampling(SamplerKind::Adasyn),
        Technique::Sampling(SamplerKind::SvmSmote),
    ];

    pub fn name(self) -> &'static str {
        match self {
            Technique::Baseline => "baseline",
            Technique::Cost => "cost",
            Technique::Sampling(k) => k.name(),
        }
    }
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Technique {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Technique::Baseline),
            "cost" | "weighted" => Ok(Technique::Cost),
            other => other
                .parse::<SamplerKind>()
                .map(Technique::Sampling)
                .map_err(|_| format!("unknown technique `{s}` (expected baseline, cost, smote, bline, adasyn or svmsmt)")),
        }
    }
}

/// How per-cell score lists are paired for the signed-rank test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pairing {
    PerProject,
    PerFold,
}

impl FromStr for Pairing {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "per_project" | "project" => Ok(Pairing::PerProject),
            "per_fold" | "fold" => Ok(Pairing::PerFold),
            _ => Err(format!("unknown pairing `{s}` (expected project or fold)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerSettings {
    pub k_neighbors: usize,
    pub m_neighbors: usize,
    pub sampling_rate: f64,
    pub svm: SvmParams,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        let d = SamplerConfig::new(SamplerKind::Smote, 0);
        SamplerSettings {
            k_neighbors: d.k_neighbors,
            m_neighbors: d.m_neighbors,
            sampling_rate: d.sampling_rate,
            svm: d.svm,
        }
    }
}

impl SamplerSettings {
    pub fn config(&self, kind: SamplerKind, seed: u64) -> SamplerConfig {
        SamplerConfig {
            kind,
            k_neighbors: self.k_neighbors,
            m_neighbors: self.m_neighbors,
            sampling_rate: self.sampling_rate,
            seed,
            svm: self.svm.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub protocol: Protocol,
    pub techniques: Vec<Technique>,
    pub models: Vec<ModelKind>,
    pub seed: u64,
    pub hyper: Hyper,
    pub sampler: SamplerSettings,
    pub weight_scheme: WeightScheme,
    pub min_df: usize,
    pub cross_repetitions: usize,
    pub pairing: Pairing,
    pub threshold: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            protocol: Protocol::Within,
            techniques: Technique::ALL.to_vec(),
            models: ModelKind::ALL.to_vec(),
            seed: 42,
            hyper: Hyper::default(),
            sampler: SamplerSettings::default(),
            weight_scheme: WeightScheme::InverseFrequency,
            min_df: 1,
            cross_repetitions: 10,
            pairing: Pairing::PerProject,
            threshold: 0.5,
        }
    }
}

impl BenchmarkConfig {
    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        crate::config_hash(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldFailure {
    pub project_id: String,
    pub fold_id: usize,
    pub repetition: usize,
    pub message: String,
}

/// Everything a single fold produced besides its metrics.
#[derive(Debug, Clone)]
pub struct FoldArtifacts {
    pub vocabulary: Vocabulary,
    pub model: ModelParams,
    pub background_means: Vec<f64>,
    pub test: LabeledMatrix,
    pub scores: Vec<f64>,
    pub sampler_fallback: Option<String>,
}

/// Tokenized corpus shared by all folds.
pub struct Prepared<'a> {
    pub corpus: &'a Corpus,
    pub tokens: Vec<Vec<String>>,
}

impl<'a> Prepared<'a> {
    pub fn new(corpus: &'a Corpus) -> Self {
        Prepared {
            corpus,
            tokens: corpus.records().par_iter().map(|r| tokenize(&r.text)).collect(),
        }
    }

    pub fn matrix(&self, rows: &[usize], vocab: &Vocabulary) -> LabeledMatrix {
        LabeledMatrix::new(
            vocab.len(),
            rows.iter().map(|&i| vectorize(&self.tokens[i], vocab)).collect(),
            rows.iter().map(|&i| self.corpus.records()[i].label).collect(),
        )
    }
}

/// Fits vocabulary, applies the technique to the training rows only,
/// trains, and scores the test rows.
pub fn run_fold(
    data: &Prepared<'_>,
    fold: &Fold,
    technique: Technique,
    kind: ModelKind,
    cfg: &BenchmarkConfig,
) -> Result<FoldArtifacts, String> {
    let train_docs: Vec<&[String]> = fold.train.iter().map(|&i| data.tokens[i].as_slice()).collect();
    let vocabulary = fit_vocabulary(&train_docs, cfg.min_df).map_err(|e| e.to_string())?;
    let train = data.matrix(&fold.train, &vocabulary);
    let validation = data.matrix(&fold.validation, &vocabulary);
    let test = data.matrix(&fold.test, &vocabulary);
    let background_means = train.feature_means();

    let val = (!validation.is_empty()).then_some(&validation);
    let (model, sampler_fallback) = fit_technique(&train, val, technique, kind, cfg, fold.seed)?;
    let scores: Vec<f64> = test.vectors().iter().map(|v| model.score(v)).collect();
    Ok(FoldArtifacts {
        vocabulary,
        model,
        background_means,
        test,
        scores,
        sampler_fallback,
    })
}

/// Applies the technique to a training matrix and fits the model. Returns
/// the sampler's fallback note, if any.
pub fn fit_technique(
    train: &LabeledMatrix,
    validation: Option<&LabeledMatrix>,
    technique: Technique,
    kind: ModelKind,
    cfg: &BenchmarkConfig,
    seed: u64,
) -> Result<(ModelParams, Option<String>), String> {
    let mut weights = None;
    let mut sampler_fallback = None;
    let resampled;
    let fit_on = match technique {
        Technique::Baseline => train,
        Technique::Cost => {
            weights = Some(compute_class_weights(train, cfg.weight_scheme).map_err(|e| e.to_string())?);
            train
        }
        Technique::Sampling(k) => {
            let sc = cfg.sampler.config(k, derive_seed(seed, 0x5A));
            let r = resample(train, &sc).map_err(|e| e.to_string())?;
            sampler_fallback = r.fallback;
            resampled = r.matrix;
            &resampled
        }
    };
    let model = models::train(kind, fit_on, weights.as_ref(), &cfg.hyper, derive_seed(seed, 0x7E), validation)
        .map_err(|e| e.to_string())?;
    Ok((model, sampler_fallback))
}

/// Trains on every record of `corpus` and bundles the result with its
/// vocabulary and training means.
pub fn train_full(
    corpus: &Corpus,
    technique: Technique,
    kind: ModelKind,
    cfg: &BenchmarkConfig,
    lemmatizer: Lemmatizer,
) -> Result<TrainedModel, String> {
    if corpus.is_empty() {
        return Err("training corpus is empty".into());
    }
    let data = Prepared::new(corpus);
    let rows: Vec<usize> = (0..corpus.len()).collect();
    let vocabulary = fit_vocabulary(&data.tokens, cfg.min_df).map_err(|e| e.to_string())?;
    let train = data.matrix(&rows, &vocabulary);
    let (params, fallback) = fit_technique(&train, None, technique, kind, cfg, cfg.seed)?;
    if let Some(msg) = fallback {
        log::warn!("{msg}");
    }
    TrainedModel::new(
        technique.name(),
        cfg.seed,
        lemmatizer,
        vocabulary,
        Some(train.feature_means()),
        params,
    )
    .map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: Option<f64>,
    /// Fold-level values that were undefined and left out.
    pub excluded: usize,
    pub per_project: BTreeMap<String, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub technique: Technique,
    pub model: ModelKind,
    pub reports: Vec<MetricsReport>,
    pub failures: Vec<FoldFailure>,
    pub summary: BTreeMap<Metric, MetricSummary>,
}

impl CellResult {
    pub fn mean(&self, metric: Metric) -> Option<f64> {
        self.summary.get(&metric).and_then(|s| s.mean)
    }

    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for v in values {
        s += v;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

/// Mean over folds within each project, then unweighted mean over projects.
/// Undefined fold values are excluded and counted.
pub fn aggregate(reports: &[MetricsReport], metric: Metric) -> MetricSummary {
    let mut by_project: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut excluded = 0;
    for r in reports {
        let entry = by_project.entry(r.project_id.as_str()).or_default();
        match metric.of(r) {
            Some(v) => entry.push(v),
            None => excluded += 1,
        }
    }
    // Sort within project so the sum does not depend on report order.
    let per_project: BTreeMap<String, Option<f64>> = by_project
        .into_iter()
        .map(|(p, mut v)| {
            v.sort_by(f64::total_cmp);
            (p.to_string(), mean_of(v.into_iter()))
        })
        .collect();
    MetricSummary {
        mean: mean_of(per_project.values().flatten().copied()),
        excluded,
        per_project,
    }
}

pub fn summarize(reports: &[MetricsReport]) -> BTreeMap<Metric, MetricSummary> {
    Metric::ALL.iter().map(|&m| (m, aggregate(reports, m))).collect()
}

/// Runs one (technique, model) cell over every fold of a plan.
pub fn run_benchmark(
    data: &Prepared<'_>,
    plan: &SplitPlan,
    technique: Technique,
    kind: ModelKind,
    cfg: &BenchmarkConfig,
) -> CellResult {
    let outcomes: Vec<Result<MetricsReport, FoldFailure>> = plan
        .folds
        .par_iter()
        .map(|fold| fold_report(data, fold, technique, kind, cfg))
        .collect();
    cell_from(technique, kind, outcomes)
}

fn fold_report(
    data: &Prepared<'_>,
    fold: &Fold,
    technique: Technique,
    kind: ModelKind,
    cfg: &BenchmarkConfig,
) -> Result<MetricsReport, FoldFailure> {
    let fail = |message: String| FoldFailure {
        project_id: fold.project_id.clone(),
        fold_id: fold.fold_id,
        repetition: fold.repetition,
        message,
    };
    let art = run_fold(data, fold, technique, kind, cfg).map_err(&fail)?;
    if let Some(msg) = &art.sampler_fallback {
        log::warn!("{} fold {}: {msg}", fold.project_id, fold.fold_id);
    }
    let mut r = compute_metrics(art.test.labels(), &art.scores, cfg.threshold).map_err(|e| fail(e.to_string()))?;
    r.project_id = fold.project_id.clone();
    r.technique = technique.name().to_string();
    r.model_kind = kind.name().to_string();
    r.fold_id = fold.fold_id;
    r.repetition = fold.repetition;
    Ok(r)
}

fn cell_from(technique: Technique, kind: ModelKind, outcomes: Vec<Result<MetricsReport, FoldFailure>>) -> CellResult {
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => reports.push(r),
            Err(f) => {
                log::warn!(
                    "{technique}/{kind}: fold {} of {} (rep {}) failed: {}",
                    f.fold_id,
                    f.project_id,
                    f.repetition,
                    f.message
                );
                failures.push(f)
            }
        }
    }
    let summary = summarize(&reports);
    CellResult {
        technique,
        model: kind,
        reports,
        failures,
        summary,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub config: BenchmarkConfig,
    pub plan_folds: usize,
    pub cells: Vec<CellResult>,
    pub wilcoxon: Vec<WilcoxonRow>,
}

impl BenchmarkResult {
    pub fn cell(&self, technique: Technique, model: ModelKind) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.technique == technique && c.model == model)
    }

    pub fn failure_count(&self) -> usize {
        self.cells.iter().map(|c| c.failures.len()).sum()
    }
}

/// Runs the whole technique x model grid. All (cell, fold) jobs share one
/// parallel pool; results are reassembled in grid order.
pub fn run_grid(corpus: &Corpus, cfg: &BenchmarkConfig) -> Result<BenchmarkResult, EvalError> {
    let plan = make_folds(corpus, cfg.protocol, cfg.seed, cfg.cross_repetitions)?;
    let data = Prepared::new(corpus);
    let mut jobs = Vec::new();
    for &t in &cfg.techniques {
        for &m in &cfg.models {
            for (f, _) in plan.folds.iter().enumerate() {
                jobs.push((t, m, f));
            }
        }
    }
    let outcomes: Vec<Result<MetricsReport, FoldFailure>> = jobs
        .par_iter()
        .map(|&(t, m, f)| fold_report(&data, &plan.folds[f], t, m, cfg))
        .collect();
    let mut it = outcomes.into_iter();
    let mut cells = Vec::new();
    for &t in &cfg.techniques {
        for &m in &cfg.models {
            let chunk: Vec<_> = it.by_ref().take(plan.folds.len()).collect();
            cells.push(cell_from(t, m, chunk));
        }
    }
    let wilcoxon = compare_cells(&cells, cfg.pairing);
    Ok(BenchmarkResult {
        config: cfg.clone(),
        plan_folds: plan.folds.len(),
        cells,
        wilcoxon,
    })
}

// ---------------------------------------------------------------------------
// Signed-rank test
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n_effective: usize,
    pub significant_at_95: bool,
}

/// Largest number of non-zero differences for which the null distribution
/// is enumerated exactly.
pub const EXACT_MAX_N: usize = 12;

/// Average ranks (1-based) of `values`, ties sharing their mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided paired signed-rank test. Zero differences are dropped.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch {
            labels: a.len(),
            scores: b.len(),
        });
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            statistic: 0.0,
            p_value: 1.0,
            n_effective: 0,
            significant_at_95: false,
        });
    }
    if n < 5 {
        return Err(EvalError::TooFewPairs(n));
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&abs);
    let w_plus: f64 = ranks.iter().zip(&diffs).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w = w_plus.min(total - w_plus);

    let p = if n <= EXACT_MAX_N {
        exact_p(&ranks, w)
    } else {
        normal_p(&abs, w, n)
    };
    let p_value = p.clamp(0.0, 1.0);
    Ok(WilcoxonResult {
        statistic: w,
        p_value,
        n_effective: n,
        significant_at_95: p_value < 0.05,
    })
}

/// Null distribution of the positive rank sum by dynamic programming over
/// doubled (hence integral) ranks.
fn exact_p(ranks: &[f64], w: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let max: usize = doubled.iter().sum();
    let mut ways = vec![0f64; max + 1];
    ways[0] = 1.0;
    for &r in &doubled {
        for s in (r..=max).rev() {
            ways[s] += ways[s - r];
        }
    }
    let w2 = (w * 2.0).round() as usize;
    let below: f64 = ways[..=w2.min(max)].iter().sum();
    let total = 2f64.powi(ranks.len() as i32);
    (2.0 * below / total).min(1.0)
}

fn normal_p(abs: &[f64], w: f64, n: usize) -> f64 {
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut sorted = abs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = (w - mean) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * normal.cdf(z)).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonRow {
    pub metric: Metric,
    pub model: ModelKind,
    pub technique: Technique,
    pub reference: Technique,
    pub result: Option<WilcoxonResult>,
    pub note: Option<String>,
}

/// Paired value lists of two cells for one metric. Pairs missing on either
/// side are dropped.
pub fn paired_values(a: &CellResult, b: &CellResult, metric: Metric, pairing: Pairing) -> (Vec<f64>, Vec<f64>) {
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    match pairing {
        Pairing::PerProject => {
            let (pa, pb) = (&a.summary[&metric].per_project, &b.summary[&metric].per_project);
            for (p, va) in pa {
                if let (Some(x), Some(Some(y))) = (va, pb.get(p)) {
                    xs.push(*x);
                    ys.push(*y);
                }
            }
        }
        Pairing::PerFold => {
            let key = |r: &MetricsReport| (r.project_id.clone(), r.fold_id, r.repetition);
            let bmap: BTreeMap<_, _> = b.reports.iter().map(|r| (key(r), r)).collect();
            let mut ra: Vec<&MetricsReport> = a.reports.iter().collect();
            ra.sort_by_key(|r| key(r));
            for r in ra {
                if let (Some(x), Some(y)) = (metric.of(r), bmap.get(&key(r)).and_then(|rb| metric.of(rb))) {
                    xs.push(x);
                    ys.push(y);
                }
            }
        }
    }
    (xs, ys)
}

/// Compares every cell with the baseline, cost and SMOTE cells of the same
/// model, for each metric.
pub fn compare_cells(cells: &[CellResult], pairing: Pairing) -> Vec<WilcoxonRow> {
    let refs = [Technique::Baseline, Technique::Cost, Technique::Sampling(SamplerKind::Smote)];
    let mut rows = Vec::new();
    for metric in Metric::ALL {
        for cell in cells {
            for reference in refs {
                if reference == cell.technique {
                    continue;
                }
                let Some(rc) = cells.iter().find(|c| c.technique == reference && c.model == cell.model) else {
                    continue;
                };
                let (x, y) = paired_values(cell, rc, metric, pairing);
                let (result, note) = match wilcoxon_signed_rank(&x, &y) {
                    Ok(r) => (Some(r), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                rows.push(WilcoxonRow {
                    metric,
                    model: cell.model,
                    technique: cell.technique,
                    reference,
                    result,
                    note,
                });
            }
        }
    }
    rows
}

// ---------------------------------------------------------------------------
// Duplicate impact
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactRow {
    pub protocol: Protocol,
    pub project_id: String,
    pub f1_with_duplicates: Option<f64>,
    pub f1_deduplicated: Option<f64>,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuplicateImpact {
    pub technique: Technique,
    pub model: ModelKind,
    pub rows: Vec<ImpactRow>,
    /// Per protocol: (mean F1 with duplicates, mean F1 deduplicated).
    pub means: BTreeMap<Protocol, (Option<f64>, Option<f64>)>,
}

/// Runs one cell on both corpora under both protocols and reports per-project
/// F1 differences (with duplicates minus deduplicated).
pub fn duplicate_impact_run(
    with_dups: &Corpus,
    deduped: &Corpus,
    technique: Technique,
    kind: ModelKind,
    cfg: &BenchmarkConfig,
    protocols: &[Protocol],
) -> Result<DuplicateImpact, EvalError> {
    let mut rows = Vec::new();
    let mut means = BTreeMap::new();
    for &protocol in protocols {
        let cfg_p = BenchmarkConfig {
            protocol,
            ..cfg.clone()
        };
        let run = |c: &Corpus| -> Result<CellResult, EvalError> {
            let plan = make_folds(c, protocol, cfg.seed, cfg.cross_repetitions)?;
            Ok(run_benchmark(&Prepared::new(c), &plan, technique, kind, &cfg_p))
        };
        let a = run(with_dups)?;
        let b = run(deduped)?;
        let (sa, sb) = (&a.summary[&Metric::F1], &b.summary[&Metric::F1]);
        let mut projects: Vec<&String> = sa.per_project.keys().chain(sb.per_project.keys()).collect();
        projects.sort();
        projects.dedup();
        for p in projects {
            let x = sa.per_project.get(p).copied().flatten();
            let y = sb.per_project.get(p).copied().flatten();
            rows.push(ImpactRow {
                protocol,
                project_id: p.clone(),
                f1_with_duplicates: x,
                f1_deduplicated: y,
                delta: x.zip(y).map(|(x, y)| x - y),
            });
        }
        means.insert(protocol, (sa.mean, sb.mean));
    }
    Ok(DuplicateImpact {
        technique,
        model: kind,
        rows,
        means,
    })
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

pub fn manifest_header(seed: u64, config_hash: &str) -> String {
    format!("# satd {} seed={seed} config={config_hash}", env!("CARGO_PKG_VERSION"))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

/// Rows are techniques, columns are model kinds, cells are mean scores.
pub fn metric_table(result: &BenchmarkResult, metric: Metric) -> String {
    let cfg = &result.config;
    let mut s = String::from("technique");
    for m in &cfg.models {
        s.push(',');
        s.push_str(m.name());
    }
    s.push('\n');
    for &t in &cfg.techniques {
        s.push_str(t.name());
        for &m in &cfg.models {
            s.push(',');
            s.push_str(&fmt_opt(result.cell(t, m).and_then(|c| c.mean(metric))));
        }
        s.push('\n');
    }
    s
}

pub fn wilcoxon_table(rows: &[WilcoxonRow]) -> String {
    let mut s = String::from("metric,model,technique,reference,n,statistic,p_value,significant\n");
    for r in rows {
        let _ = match &r.result {
            Some(w) => writeln!(
                s,
                "{},{},{},{},{},{},{:.6},{}",
                r.metric.name(),
                r.model,
                r.technique,
                r.reference,
                w.n_effective,
                w.statistic,
                w.p_value,
                w.significant_at_95
            ),
            None => writeln!(
                s,
                "{},{},{},{},NA,NA,NA,NA",
                r.metric.name(),
                r.model,
                r.technique,
                r.reference
            ),
        };
    }
    s
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool_version: &'static str,
    config_hash: String,
    config: &'a BenchmarkConfig,
    folds_per_cell: usize,
    failures: Vec<(&'a str, &'a str, &'a FoldFailure)>,
    excluded: Vec<(&'a str, &'a str, &'static str, usize)>,
    folds: Vec<&'a MetricsReport>,
}

pub fn manifest_json(result: &BenchmarkResult) -> Result<String, EvalError> {
    let mut folds: Vec<&MetricsReport> = result.cells.iter().flat_map(|c| c.reports.iter()).collect();
    folds.sort_by(|a, b| {
        (&a.technique, &a.model_kind, &a.project_id, a.repetition, a.fold_id).cmp(&(
            &b.technique,
            &b.model_kind,
            &b.project_id,
            b.repetition,
            b.fold_id,
        ))
    });
    let m = Manifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        config_hash: result.config.hash(),
        config: &result.config,
        folds_per_cell: result.plan_folds,
        failures: result
            .cells
            .iter()
            .flat_map(|c| c.failures.iter().map(move |f| (c.technique.name(), c.model.name(), f)))
            .collect(),
        excluded: result
            .cells
            .iter()
            .flat_map(|c| {
                c.summary
                    .iter()
                    .map(move |(m, s)| (c.technique.name(), c.model.name(), m.name(), s.excluded))
            })
            .collect(),
        folds,
    };
    Ok(serde_json::to_string_pretty(&m)?)
}

/// Writes the four metric tables, the signed-rank table and the manifest
/// into `dir`, each prefixed with the manifest header line.
pub fn write_benchmark(dir: impl AsRef<Path>, result: &BenchmarkResult) -> Result<Vec<PathBuf>, EvalError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let header = manifest_header(result.config.seed, &result.config.hash());
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<(), EvalError> {
        let path = dir.join(name);
        fs::write(&path, format!("{header}\n{body}"))?;
        written.push(path);
        Ok(())
    };
    for metric in Metric::ALL {
        put(&format!("{}.csv", metric.name()), metric_table(result, metric))?;
    }
    put("wilcoxon.csv", wilcoxon_table(&result.wilcoxon))?;
    // JSON has no comment syntax, so the manifest carries its header as a field.
    let path = dir.join("manifest.json");
    fs::write(&path, manifest_json(result)? + "\n")?;
    written.push(path);
    Ok(written)
}
