//! Classifier families, prediction and the model file format.

pub mod boost;
pub mod forest;
pub mod logistic;
pub mod tree;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::balance::ClassWeights;
use crate::corpus::{clean_tokens, Label};
use crate::features::{vectorize, FeatureVector, LabeledMatrix, Vocabulary};
use crate::text::Lemmatizer;

pub use boost::{BoostHyper, BoostedModel};
pub use forest::{ForestHyper, ForestModel};
pub use logistic::{LogRegHyper, LogRegModel};

pub const MODEL_SCHEMA: &str = "satd-model/1";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training failed: {0}")]
    Training(String),
    #[error("dimension mismatch: model expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("incompatible model file: schema `{found}`, this build reads `{MODEL_SCHEMA}`")]
    Incompatible { found: String },
    #[error("model file parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("model file is inconsistent: {0}")]
    Integrity(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    Logistic,
    Forest,
    Boosted,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Logistic, ModelKind::Forest, ModelKind::Boosted];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Logistic => "lr",
            ModelKind::Forest => "rf",
            ModelKind::Boosted => "xgb",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "lr" | "logistic" => Ok(ModelKind::Logistic),
            "rf" | "forest" => Ok(ModelKind::Forest),
            "xgb" | "gb" | "boost" | "boosted" => Ok(ModelKind::Boosted),
            _ => Err(format!("unknown model kind `{s}` (expected lr, rf or xgb)")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub logistic: LogRegHyper,
    pub forest: ForestHyper,
    pub boost: BoostHyper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum ModelParams {
    Logistic(LogRegModel),
    Forest(ForestModel),
    Boosted(BoostedModel),
}

impl ModelParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::Logistic(_) => ModelKind::Logistic,
            ModelParams::Forest(_) => ModelKind::Forest,
            ModelParams::Boosted(_) => ModelKind::Boosted,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ModelParams::Logistic(m) => m.dim(),
            ModelParams::Forest(m) => m.dim,
            ModelParams::Boosted(m) => m.dim,
        }
    }

    /// Probability of SATD. Callers check the dimension.
    pub fn score(&self, x: &FeatureVector) -> f64 {
        match self {
            ModelParams::Logistic(m) => m.score(x),
            ModelParams::Forest(m) => m.score(x),
            ModelParams::Boosted(m) => m.score(x),
        }
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<f64, ModelError> {
        check_dim(self.dim(), x.dim())?;
        Ok(self.score(x))
    }

    fn validate(&self) -> Result<(), String> {
        let finite = |v: f64| v.is_finite();
        match self {
            ModelParams::Logistic(m) => {
                if !m.weights.iter().copied().all(finite) || !m.bias.is_finite() {
                    return Err("non-finite logistic parameter".into());
                }
            }
            ModelParams::Forest(m) => {
                for t in &m.trees {
                    if t.leaves().any(|l| (l[0] + l[1] - 1.0).abs() > 1e-9) {
                        return Err("forest leaf probabilities do not sum to 1".into());
                    }
                    if t.max_feature().is_some_and(|f| f as usize >= m.dim) {
                        return Err("forest split feature out of range".into());
                    }
                }
            }
            ModelParams::Boosted(m) => {
                for t in &m.trees {
                    if !t.leaves().copied().all(finite) {
                        return Err("non-finite boosted leaf".into());
                    }
                    if t.max_feature().is_some_and(|f| f as usize >= m.dim) {
                        return Err("boosted split feature out of range".into());
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_dim(expected: usize, got: usize) -> Result<(), ModelError> {
    if expected != got {
        return Err(ModelError::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Per-row weight: the weight of the row's class, or 1.0.
pub fn instance_weights(matrix: &LabeledMatrix, weights: Option<&ClassWeights>) -> Vec<f64> {
    match weights {
        None => vec![1.0; matrix.len()],
        Some(w) => matrix.labels().iter().map(|&l| w.of(l)).collect(),
    }
}

fn check_trainable(matrix: &LabeledMatrix) -> Result<(), ModelError> {
    if matrix.is_empty() {
        return Err(ModelError::Training("empty training matrix".into()));
    }
    if matrix.count(Label::Satd) == 0 || matrix.count(Label::NonSatd) == 0 {
        return Err(ModelError::Training("training data contains a single class".into()));
    }
    Ok(())
}

pub fn train_logistic(
    matrix: &LabeledMatrix,
    weights: Option<&ClassWeights>,
    hyper: &LogRegHyper,
) -> Result<LogRegModel, ModelError> {
    check_trainable(matrix)?;
    Ok(logistic::fit(matrix, &instance_weights(matrix, weights), hyper))
}

pub fn train_forest(
    matrix: &LabeledMatrix,
    weights: Option<&ClassWeights>,
    hyper: &ForestHyper,
    seed: u64,
) -> Result<ForestModel, ModelError> {
    check_trainable(matrix)?;
    Ok(forest::fit(matrix, &instance_weights(matrix, weights), hyper, seed))
}

pub fn train_boosted(
    matrix: &LabeledMatrix,
    weights: Option<&ClassWeights>,
    hyper: &BoostHyper,
    validation: Option<&LabeledMatrix>,
) -> Result<BoostedModel, ModelError> {
    check_trainable(matrix)?;
    Ok(boost::fit(matrix, &instance_weights(matrix, weights), hyper, validation))
}

pub fn train(
    kind: ModelKind,
    matrix: &LabeledMatrix,
    weights: Option<&ClassWeights>,
    hyper: &Hyper,
    seed: u64,
    validation: Option<&LabeledMatrix>,
) -> Result<ModelParams, ModelError> {
    Ok(match kind {
        ModelKind::Logistic => ModelParams::Logistic(train_logistic(matrix, weights, &hyper.logistic)?),
        ModelKind::Forest => ModelParams::Forest(train_forest(matrix, weights, &hyper.forest, seed)?),
        ModelKind::Boosted => {
            ModelParams::Boosted(train_boosted(matrix, weights, &hyper.boost, validation)?)
        }
    })
}

/// A fitted classifier bundled with everything needed to score raw text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub technique: String,
    pub seed: u64,
    pub lemmatizer: Lemmatizer,
    pub vocabulary: Vocabulary,
    /// Mean training vector before any resampling; used as the
    /// attribution reference for logistic models.
    pub background_means: Option<Vec<f64>>,
    #[serde(flatten)]
    pub params: ModelParams,
}

#[derive(Serialize)]
struct FileOut<'a> {
    schema: &'static str,
    vocabulary_hash: String,
    #[serde(flatten)]
    model: &'a TrainedModel,
}

#[derive(Deserialize)]
struct FileIn {
    vocabulary_hash: String,
    #[serde(flatten)]
    model: TrainedModel,
}

impl TrainedModel {
    pub fn new(
        technique: impl Into<String>,
        seed: u64,
        lemmatizer: Lemmatizer,
        vocabulary: Vocabulary,
        background_means: Option<Vec<f64>>,
        params: ModelParams,
    ) -> Result<Self, ModelError> {
        let m = TrainedModel {
            technique: technique.into(),
            seed,
            lemmatizer,
            vocabulary,
            background_means,
            params,
        };
        m.check()?;
        Ok(m)
    }

    fn check(&self) -> Result<(), ModelError> {
        let v = self.vocabulary.len();
        if self.params.dim() != v {
            return Err(ModelError::Integrity(format!(
                "parameter dimension {} differs from vocabulary size {v}",
                self.params.dim()
            )));
        }
        if let Some(b) = &self.background_means {
            if b.len() != v {
                return Err(ModelError::Integrity("background length differs from vocabulary".into()));
            }
        }
        self.params.validate().map_err(ModelError::Integrity)
    }

    pub fn kind(&self) -> ModelKind {
        self.params.kind()
    }

    pub fn dim(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<f64, ModelError> {
        self.params.predict(x)
    }

    pub fn vectorize_text(&self, text: &str) -> FeatureVector {
        vectorize(&clean_tokens(text, &self.lemmatizer), &self.vocabulary)
    }

    /// Scores a raw, uncleaned comment.
    pub fn predict_text(&self, text: &str) -> (Label, f64) {
        let score = self.params.score(&self.vectorize_text(text));
        (label_for(score), score)
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        let out = FileOut {
            schema: MODEL_SCHEMA,
            vocabulary_hash: self.vocabulary.fingerprint(),
            model: self,
        };
        Ok(serde_json::to_string_pretty(&out)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("schema").and_then(|s| s.as_str()) {
            Some(MODEL_SCHEMA) => {}
            Some(other) => return Err(ModelError::Incompatible { found: other.to_string() }),
            None => return Err(ModelError::Incompatible { found: "<missing>".into() }),
        }
        let file: FileIn = serde_json::from_value(value)?;
        if file.vocabulary_hash != file.model.vocabulary.fingerprint() {
            return Err(ModelError::Integrity("vocabulary hash mismatch".into()));
        }
        file.model.check()?;
        Ok(file.model)
    }
}

pub fn label_for(score: f64) -> Label {
    if score >= 0.5 {
        Label::Satd
    } else {
        Label::NonSatd
    }
}

/// Writes to a temporary sibling and renames, so readers never observe a
/// partial file.
pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let path = path.as_ref();
    let json = model.to_json()?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, json)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel, ModelError> {
    TrainedModel::from_json(&fs::read_to_string(path)?)
}
