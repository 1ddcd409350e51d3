//! Exact Shapley attributions for the logistic model on the margin scale,
//! plus per-feature contribution summaries.
//!
//! With independent features a linear margin decomposes as
//! `phi_j = w_j (x_j - r_j)` against a reference point `r`, and the
//! attributions sum to `margin(x) - margin(r)`.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureVector, LabeledMatrix, Vocabulary};
use crate::models::{LogRegModel, ModelParams, TrainedModel};

#[derive(Debug, Error, PartialEq)]
pub enum ExplainError {
    #[error("dimension mismatch: model has {model}, input has {input}")]
    DimensionMismatch { model: usize, input: usize },
    #[error("statistics were computed over different vocabularies")]
    VocabularyMismatch,
    #[error("no instances to explain")]
    Empty,
    #[error("attributions are only available for logistic models, not `{0}`")]
    NotLinear(String),
    #[error("model file has no stored training means; use the zero background")]
    NoBackground,
}

/// Reference point the attributions are measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Background {
    /// Feature means of the training rows before resampling.
    TrainingMeans,
    /// The all-zero vector (an empty comment).
    Zero,
}

impl std::str::FromStr for Background {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "means" | "training_means" | "mean" => Ok(Background::TrainingMeans),
            "zero" | "zeros" => Ok(Background::Zero),
            _ => Err(format!("unknown background `{s}` (expected means or zero)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapReport {
    pub instance_id: usize,
    pub base_value: f64,
    /// Nonzero attributions by feature index, ascending.
    pub attributions: Vec<(u32, f64)>,
}

impl ShapReport {
    pub fn total(&self) -> f64 {
        self.base_value + self.attributions.iter().map(|a| a.1).sum::<f64>()
    }

    pub fn get(&self, feature: usize) -> f64 {
        self.attributions
            .binary_search_by_key(&(feature as u32), |a| a.0)
            .map_or(0.0, |i| self.attributions[i].1)
    }
}

pub fn linear_shap(
    model: &LogRegModel,
    x: &FeatureVector,
    background: &[f64],
    instance_id: usize,
) -> Result<ShapReport, ExplainError> {
    let d = model.dim();
    if x.dim() != d || background.len() != d {
        return Err(ExplainError::DimensionMismatch {
            model: d,
            input: if x.dim() != d { x.dim() } else { background.len() },
        });
    }
    let base_value = model
        .weights
        .iter()
        .zip(background)
        .map(|(w, m)| w * m)
        .sum::<f64>()
        + model.bias;
    let mut attributions = Vec::new();
    let (idx, vals) = (x.indices(), x.values());
    let mut k = 0;
    for (j, (&w, &r)) in model.weights.iter().zip(background).enumerate() {
        let xj = if k < idx.len() && idx[k] as usize == j {
            k += 1;
            vals[k - 1]
        } else {
            0.0
        };
        let phi = w * (xj - r);
        if phi != 0.0 {
            attributions.push((j as u32, phi));
        }
    }
    Ok(ShapReport {
        instance_id,
        base_value,
        attributions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureContributionStats {
    pub vocabulary_hash: String,
    pub n_instances: usize,
    /// Mean absolute attribution per feature over the instances.
    pub mean_abs: Vec<f64>,
    pub contributing: Vec<usize>,
    pub non_contributing: Vec<usize>,
    /// Contributing features by descending mean absolute attribution.
    pub ranked: Vec<usize>,
}

impl FeatureContributionStats {
    pub fn top_k<'v>(&self, vocab: &'v Vocabulary, k: usize) -> Vec<(&'v str, f64)> {
        self.ranked
            .iter()
            .take(k)
            .map(|&j| (vocab.term(j), self.mean_abs[j]))
            .collect()
    }

    /// CSV of `term,mean_abs_attribution,contributing` in vocabulary order.
    pub fn to_csv(&self, vocab: &Vocabulary) -> String {
        let mut s = String::from("term,mean_abs_attribution,contributing\n");
        for (j, v) in self.mean_abs.iter().enumerate() {
            let _ = writeln!(s, "{},{:e},{}", vocab.term(j), v, *v > 0.0);
        }
        s
    }
}

fn rank_by_mean(mean_abs: &[f64], features: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut r: Vec<usize> = features.collect();
    r.sort_by(|&a, &b| mean_abs[b].total_cmp(&mean_abs[a]).then(a.cmp(&b)));
    r
}

pub fn contribution_stats(
    reports: &[ShapReport],
    vocab: &Vocabulary,
) -> Result<FeatureContributionStats, ExplainError> {
    if reports.is_empty() {
        return Err(ExplainError::Empty);
    }
    let d = vocab.len();
    let mut sum = vec![0.0; d];
    for r in reports {
        for &(j, phi) in &r.attributions {
            let j = j as usize;
            if j >= d {
                return Err(ExplainError::DimensionMismatch { model: d, input: j + 1 });
            }
            sum[j] += phi.abs();
        }
    }
    let n = reports.len() as f64;
    let mean_abs: Vec<f64> = sum.into_iter().map(|s| s / n).collect();
    let (contributing, non_contributing): (Vec<usize>, Vec<usize>) = (0..d).partition(|&j| mean_abs[j] > 0.0);
    let ranked = rank_by_mean(&mean_abs, contributing.iter().copied());
    Ok(FeatureContributionStats {
        vocabulary_hash: vocab.fingerprint(),
        n_instances: reports.len(),
        mean_abs,
        contributing,
        non_contributing,
        ranked,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDiff {
    /// Contributing for the technique but not the baseline, ranked by the
    /// technique's mean absolute attribution.
    pub new_features: Vec<usize>,
    /// `new_features.len()` over the technique's contributing count.
    pub new_fraction: f64,
}

impl FeatureDiff {
    /// CSV of `term,technique,rank` (rank is 1-based).
    pub fn to_csv(&self, vocab: &Vocabulary, technique: &str) -> String {
        let mut s = String::from("term,technique,rank\n");
        for (i, &j) in self.new_features.iter().enumerate() {
            let _ = writeln!(s, "{},{technique},{}", vocab.term(j), i + 1);
        }
        s
    }
}

pub fn feature_diff(
    technique: &FeatureContributionStats,
    baseline: &FeatureContributionStats,
) -> Result<FeatureDiff, ExplainError> {
    if technique.vocabulary_hash != baseline.vocabulary_hash || technique.mean_abs.len() != baseline.mean_abs.len() {
        return Err(ExplainError::VocabularyMismatch);
    }
    let base: BTreeSet<usize> = baseline.contributing.iter().copied().collect();
    let new_features = rank_by_mean(
        &technique.mean_abs,
        technique.contributing.iter().copied().filter(|j| !base.contains(j)),
    );
    let new_fraction = if technique.contributing.is_empty() {
        0.0
    } else {
        new_features.len() as f64 / technique.contributing.len() as f64
    };
    Ok(FeatureDiff {
        new_features,
        new_fraction,
    })
}

/// Attributions of a saved logistic model over every row of `matrix`.
pub fn explain_matrix(
    model: &TrainedModel,
    matrix: &LabeledMatrix,
    background: Background,
) -> Result<Vec<ShapReport>, ExplainError> {
    let lr = match &model.params {
        ModelParams::Logistic(m) => m,
        other => return Err(ExplainError::NotLinear(other.kind().name().to_string())),
    };
    let reference = match background {
        Background::Zero => vec![0.0; lr.dim()],
        Background::TrainingMeans => model.background_means.clone().ok_or(ExplainError::NoBackground)?,
    };
    matrix
        .vectors()
        .iter()
        .enumerate()
        .map(|(i, v)| linear_shap(lr, v, &reference, i))
        .collect()
}
