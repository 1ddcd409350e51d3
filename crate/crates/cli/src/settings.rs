//! Flat `key = value` settings: loaded from an optional file, then overridden
//! by `--set key=value` and dedicated flags, then validated into a config.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use satd_core::eval::BenchmarkConfig;

pub type Settings = BTreeMap<String, String>;

pub fn parse_settings(text: &str) -> Result<Settings, String> {
    let mut out = Settings::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key=value", n + 1))?;
        out.insert(normalize_key(k), v.trim().to_string());
    }
    Ok(out)
}

pub fn load_settings(path: &Path) -> Result<Settings, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    parse_settings(&text)
}

pub fn parse_assignment(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("`{s}`: expected key=value"))?;
    Ok((normalize_key(k), v.trim().to_string()))
}

fn normalize_key(k: &str) -> String {
    k.trim().to_ascii_lowercase().replace('-', "_")
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("`{key}`: cannot parse `{v}`: {e}"))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<T> = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(format!("`{key}` must list at least one value"));
    }
    Ok(items)
}

fn positive(key: &str, v: f64) -> Result<f64, String> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("`{key}` must be a positive number"))
    }
}

/// Keys every command that trains models understands.
pub const KEYS: &[&str] = &[
    "protocol",
    "techniques",
    "models",
    "seed",
    "repetitions",
    "pairing",
    "weight_scheme",
    "min_df",
    "threshold",
    "k_neighbors",
    "m_neighbors",
    "sampling_rate",
    "svm_c",
    "svm_epochs",
    "lr_lambda",
    "lr_learning_rate",
    "lr_epochs",
    "lr_tol",
    "rf_trees",
    "rf_max_depth",
    "rf_min_leaf",
    "rf_features_per_split",
    "xgb_rounds",
    "xgb_max_depth",
    "xgb_learning_rate",
    "xgb_lambda",
    "xgb_min_child_weight",
    "xgb_early_stopping",
];

/// Applies settings on top of the defaults. Unknown keys and bad values are
/// errors; nothing is silently ignored.
pub fn benchmark_config(settings: &Settings) -> Result<BenchmarkConfig, String> {
    let mut c = BenchmarkConfig::default();
    for (k, v) in settings {
        let v = v.as_str();
        let k = k.as_str();
        match k {
            "protocol" => c.protocol = parse(k, v)?,
            "techniques" => c.techniques = parse_list(k, v)?,
            "models" => c.models = parse_list(k, v)?,
            "seed" => c.seed = parse(k, v)?,
            "repetitions" => c.cross_repetitions = parse::<usize>(k, v)?.max(1),
            "pairing" => c.pairing = parse(k, v)?,
            "weight_scheme" => c.weight_scheme = parse(k, v)?,
            "min_df" => c.min_df = parse::<usize>(k, v)?.max(1),
            "threshold" => c.threshold = parse(k, v)?,
            "k_neighbors" => c.sampler.k_neighbors = parse(k, v)?,
            "m_neighbors" => c.sampler.m_neighbors = parse(k, v)?,
            "sampling_rate" => c.sampler.sampling_rate = positive(k, parse(k, v)?)?,
            "svm_c" => c.sampler.svm.c = positive(k, parse(k, v)?)?,
            "svm_epochs" => c.sampler.svm.max_epochs = parse(k, v)?,
            "lr_lambda" => c.hyper.logistic.l2_lambda = parse(k, v)?,
            "lr_learning_rate" => c.hyper.logistic.learning_rate = positive(k, parse(k, v)?)?,
            "lr_epochs" => c.hyper.logistic.epochs = parse(k, v)?,
            "lr_tol" => c.hyper.logistic.tol = parse(k, v)?,
            "rf_trees" => c.hyper.forest.n_trees = parse::<usize>(k, v)?.max(1),
            "rf_max_depth" => {
                c.hyper.forest.max_depth = match v {
                    "none" | "" => None,
                    _ => Some(parse(k, v)?),
                }
            }
            "rf_min_leaf" => c.hyper.forest.min_leaf = parse::<usize>(k, v)?.max(1),
            "rf_features_per_split" => c.hyper.forest.features_per_split = Some(parse(k, v)?),
            "xgb_rounds" => c.hyper.boost.n_rounds = parse(k, v)?,
            "xgb_max_depth" => c.hyper.boost.max_depth = parse(k, v)?,
            "xgb_learning_rate" => c.hyper.boost.learning_rate = positive(k, parse(k, v)?)?,
            "xgb_lambda" => c.hyper.boost.l2_leaf = parse(k, v)?,
            "xgb_min_child_weight" => c.hyper.boost.min_child_weight = parse(k, v)?,
            "xgb_early_stopping" => {
                c.hyper.boost.early_stopping_rounds = match v {
                    "none" | "off" | "" => None,
                    _ => Some(parse(k, v)?),
                }
            }
            _ => return Err(format!("unknown setting `{k}` (known: {})", KEYS.join(", "))),
        }
    }
    if !(0.0..=1.0).contains(&c.threshold) {
        return Err("`threshold` must be within [0, 1]".into());
    }
    Ok(c)
}
