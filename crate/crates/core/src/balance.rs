//! Data-level balancing (SMOTE family oversamplers) and class weights.
//!
//! All samplers take a [`LabeledMatrix`] and return a new matrix holding
//! every original row unchanged and in order, followed by synthetic minority
//! rows. Distances are Euclidean on the sparse TF-IDF rows. Randomness comes
//! from a ChaCha stream keyed by `(cfg.seed, sampler)`, so the output is a
//! pure function of the input matrix and the seed.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;
use crate::features::{FeatureVector, LabeledMatrix};

#[derive(Debug, Error, PartialEq)]
pub enum SamplerError {
    #[error("need at least 2 minority rows to oversample, found {0}")]
    TooFewMinority(usize),
    #[error("neighbor pool has {available} candidates but k={k}; reduce k")]
    PoolTooSmall { k: usize, available: usize },
    #[error("invalid sampler config: {0}")]
    Config(String),
    #[error("both classes must be present")]
    SingleClass,
    #[error("class weights need both classes present (SATD={satd}, NonSATD={non_satd})")]
    ZeroClassCount { satd: usize, non_satd: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SamplerKind {
    Smote,
    Borderline,
    Adasyn,
    SvmSmote,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 4] = [
        SamplerKind::Smote,
        SamplerKind::Borderline,
        SamplerKind::Adasyn,
        SamplerKind::SvmSmote,
    ];

    fn stream(self) -> u64 {
        match self {
            SamplerKind::Smote => 1,
            SamplerKind::Borderline => 2,
            SamplerKind::Adasyn => 3,
            SamplerKind::SvmSmote => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Smote => "smote",
            SamplerKind::Borderline => "bline",
            SamplerKind::Adasyn => "adasyn",
            SamplerKind::SvmSmote => "svmsmt",
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        SamplerKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown sampler `{s}`"))
    }
}

/// Linear max-margin separator settings used by SVM-SMOTE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    /// Regularization is `1 / (c * n_rows)` on the mean hinge loss.
    pub c: f64,
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub tol: f64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            max_epochs: 300,
            learning_rate: 1.0,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    pub k_neighbors: usize,
    pub m_neighbors: usize,
    /// Target minority/majority ratio after sampling.
    pub sampling_rate: f64,
    pub seed: u64,
    pub svm: SvmParams,
}

impl SamplerConfig {
    pub fn new(kind: SamplerKind, seed: u64) -> Self {
        SamplerConfig {
            kind,
            k_neighbors: 5,
            m_neighbors: 10,
            sampling_rate: 1.0,
            seed,
            svm: SvmParams::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.k_neighbors < 1 {
            return Err(SamplerError::Config("k_neighbors must be >= 1".into()));
        }
        if !(self.sampling_rate > 0.0 && self.sampling_rate <= 1.0) {
            return Err(SamplerError::Config(format!(
                "sampling_rate must be in (0, 1], got {}",
                self.sampling_rate
            )));
        }
        if self.kind == SamplerKind::Borderline && self.m_neighbors < self.k_neighbors {
            return Err(SamplerError::Config(
                "m_neighbors must be >= k_neighbors for borderline SMOTE".into(),
            ));
        }
        if self.m_neighbors < 1 {
            return Err(SamplerError::Config("m_neighbors must be >= 1".into()));
        }
        Ok(())
    }
}

/// Number of synthetics generated from each minority row (keyed by row index).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthesisPlan {
    pub per_seed_counts: BTreeMap<usize, usize>,
}

impl SynthesisPlan {
    pub fn total(&self) -> usize {
        self.per_seed_counts.values().sum()
    }

    fn bump(&mut self, row: usize) {
        *self.per_seed_counts.entry(row).or_insert(0) += 1;
    }
}

#[derive(Debug, Clone)]
pub struct Resampled {
    pub matrix: LabeledMatrix,
    pub plan: SynthesisPlan,
    /// Set when the technique had no eligible seeds and plain SMOTE ran instead.
    pub fallback: Option<String>,
}

/// Mixes a master seed with a stream id (splitmix64 finalizer).
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_for(master: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream))
}

// ---------------------------------------------------------------------------
// Neighbor search
// ---------------------------------------------------------------------------

/// Exhaustive Euclidean k-NN over a subset of matrix rows, using an inverted
/// index for the sparse dot products. Distances are `|q|^2 + |p|^2 - 2 q.p`.
pub struct NeighborIndex<'a> {
    matrix: &'a LabeledMatrix,
    pool: Vec<usize>,
    postings: Vec<Vec<(u32, f64)>>,
    sq_norms: Vec<f64>,
}

impl<'a> NeighborIndex<'a> {
    pub fn new(matrix: &'a LabeledMatrix, pool: Vec<usize>) -> Self {
        let mut postings: Vec<Vec<(u32, f64)>> = vec![Vec::new(); matrix.dim()];
        let mut sq_norms = Vec::with_capacity(pool.len());
        for (p, &row) in pool.iter().enumerate() {
            let v = matrix.vector(row);
            for (f, x) in v.iter() {
                postings[f].push((p as u32, x));
            }
            sq_norms.push(v.squared_norm());
        }
        NeighborIndex {
            matrix,
            pool,
            postings,
            sq_norms,
        }
    }

    pub fn pool(&self) -> &[usize] {
        &self.pool
    }

    /// The `k` pool rows closest to `row`, never `row` itself. Ties go to
    /// the lower row index.
    pub fn query_row(&self, row: usize, k: usize) -> Result<Vec<usize>, SamplerError> {
        self.query(self.matrix.vector(row), k, Some(row))
    }

    pub fn query(
        &self,
        v: &FeatureVector,
        k: usize,
        exclude: Option<usize>,
    ) -> Result<Vec<usize>, SamplerError> {
        let self_in_pool = exclude.is_some_and(|r| self.pool.contains(&r));
        let available = self.pool.len() - usize::from(self_in_pool);
        if available < k {
            return Err(SamplerError::PoolTooSmall { k, available });
        }
        let mut dots = vec![0.0; self.pool.len()];
        for (f, x) in v.iter() {
            for &(p, y) in &self.postings[f] {
                dots[p as usize] += x * y;
            }
        }
        let qn = v.squared_norm();
        let mut cand: Vec<(f64, usize)> = dots
            .iter()
            .enumerate()
            .filter(|&(p, _)| Some(self.pool[p]) != exclude)
            .map(|(p, &d)| ((qn + self.sq_norms[p] - 2.0 * d).max(0.0), self.pool[p]))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < cand.len() {
            cand.select_nth_unstable_by(k, cmp);
            cand.truncate(k);
        }
        cand.sort_unstable_by(cmp);
        Ok(cand.into_iter().map(|(_, r)| r).collect())
    }

    /// Neighbors of each of `rows`, computed in parallel.
    pub fn query_rows(&self, rows: &[usize], k: usize) -> Result<Vec<Vec<usize>>, SamplerError> {
        rows.par_iter().map(|&r| self.query_row(r, k)).collect()
    }
}

/// The `k` rows of `pool` nearest to row `query`, excluding the query.
pub fn nearest_neighbors(
    matrix: &LabeledMatrix,
    query: usize,
    pool: &[usize],
    k: usize,
) -> Result<Vec<usize>, SamplerError> {
    NeighborIndex::new(matrix, pool.to_vec()).query_row(query, k)
}

// ---------------------------------------------------------------------------
// Samplers
// ---------------------------------------------------------------------------

pub fn resample(matrix: &LabeledMatrix, cfg: &SamplerConfig) -> Result<Resampled, SamplerError> {
    match cfg.kind {
        SamplerKind::Smote => smote(matrix, cfg),
        SamplerKind::Borderline => borderline_smote(matrix, cfg),
        SamplerKind::Adasyn => adasyn(matrix, cfg),
        SamplerKind::SvmSmote => svm_smote(matrix, cfg),
    }
}

struct Setup {
    minority: Label,
    minority_rows: Vec<usize>,
    n_new: usize,
    k: usize,
}

fn setup(matrix: &LabeledMatrix, cfg: &SamplerConfig) -> Result<Setup, SamplerError> {
    cfg.validate()?;
    let minority = matrix.minority_label();
    let minority_rows = matrix.rows_with(minority);
    if minority_rows.len() < 2 {
        return Err(SamplerError::TooFewMinority(minority_rows.len()));
    }
    let target = (cfg.sampling_rate * matrix.majority_count() as f64).floor() as usize;
    let n_new = target.saturating_sub(minority_rows.len());
    let k = cfg.k_neighbors.min(minority_rows.len() - 1);
    Ok(Setup {
        minority,
        minority_rows,
        n_new,
        k,
    })
}

fn unchanged(matrix: &LabeledMatrix) -> Resampled {
    Resampled {
        matrix: matrix.clone(),
        plan: SynthesisPlan::default(),
        fallback: None,
    }
}

/// Minority neighbors (within the minority class) for each minority row.
fn minority_neighbors(
    matrix: &LabeledMatrix,
    s: &Setup,
) -> Result<BTreeMap<usize, Vec<usize>>, SamplerError> {
    let index = NeighborIndex::new(matrix, s.minority_rows.clone());
    let nn = index.query_rows(&s.minority_rows, s.k)?;
    Ok(s.minority_rows.iter().copied().zip(nn).collect())
}

/// `x + u (x_nn - x)` when interpolating, `x - u (x_nn - x)` when extrapolating.
fn synthesize(
    matrix: &LabeledMatrix,
    seed_row: usize,
    nn_row: usize,
    u: f64,
    extrapolate: bool,
) -> FeatureVector {
    let t = if extrapolate { -u } else { u };
    matrix.vector(seed_row).lerp(matrix.vector(nn_row), t)
}

/// Plain SMOTE: random minority seed, random one of its k minority
/// neighbors, uniform interpolation factor.
pub fn smote(matrix: &LabeledMatrix, cfg: &SamplerConfig) -> Result<Resampled, SamplerError> {
    let s = setup(matrix, cfg)?;
    if s.n_new == 0 {
        return Ok(unchanged(matrix));
    }
    smote_from_seeds(matrix, &s, &s.minority_rows, cfg.seed, SamplerKind::Smote.stream())
}

fn smote_from_seeds(
    matrix: &LabeledMatrix,
    s: &Setup,
    seeds: &[usize],
    seed: u64,
    stream: u64,
) -> Result<Resampled, SamplerError> {
    let neighbors = minority_neighbors(matrix, s)?;
    let mut rng = rng_for(seed, stream);
    let mut plan = SynthesisPlan::default();
    let mut synth = Vec::with_capacity(s.n_new);
    for _ in 0..s.n_new {
        let x = seeds[rng.gen_range(0..seeds.len())];
        let nn = &neighbors[&x];
        let y = nn[rng.gen_range(0..nn.len())];
        let u: f64 = rng.gen();
        synth.push(synthesize(matrix, x, y, u, false));
        plan.bump(x);
    }
    Ok(Resampled {
        matrix: matrix.extended(synth, s.minority),
        plan,
        fallback: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BorderlineClass {
    Noise,
    Danger,
    Safe,
}

/// Classifies every minority row by the number of majority rows among its
/// `m` nearest neighbors in the whole matrix: all majority is noise, at
/// least half is danger, fewer is safe.
pub fn borderline_partition(
    matrix: &LabeledMatrix,
    cfg: &SamplerConfig,
) -> Result<Vec<(usize, BorderlineClass)>, SamplerError> {
    let minority = matrix.minority_label();
    let minority_rows = matrix.rows_with(minority);
    let m = cfg.m_neighbors.min(matrix.len().saturating_sub(1));
    let index = NeighborIndex::new(matrix, (0..matrix.len()).collect());
    let nn = index.query_rows(&minority_rows, m)?;
    Ok(minority_rows
        .into_iter()
        .zip(nn)
        .map(|(row, nbrs)| {
            let maj = nbrs.iter().filter(|&&j| matrix.label(j) != minority).count();
            let class = if maj == m {
                BorderlineClass::Noise
            } else if 2 * maj >= m {
                BorderlineClass::Danger
            } else {
                BorderlineClass::Safe
            };
            (row, class)
        })
        .collect())
}

pub fn borderline_smote(matrix: &LabeledMatrix, cfg: &SamplerConfig) -> Result<Resampled, SamplerError> {
    let s = setup(matrix, cfg)?;
    if s.n_new == 0 {
        return Ok(unchanged(matrix));
    }
    let danger: Vec<usize> = borderline_partition(matrix, cfg)?
        .into_iter()
        .filter(|&(_, c)| c == BorderlineClass::Danger)
        .map(|(r, _)| r)
        .collect();
    if danger.is_empty() {
        let msg = "borderline SMOTE found no danger rows; fell back to SMOTE".to_string();
        warn!("{msg}");
        let mut out = smote_from_seeds(matrix, &s, &s.minority_rows, cfg.seed, SamplerKind::Smote.stream())?;
        out.fallback = Some(msg);
        return Ok(out);
    }
    smote_from_seeds(matrix, &s, &danger, cfg.seed, SamplerKind::Borderline.stream())
}

/// Fraction of majority rows among the `k` whole-matrix neighbors of each
/// minority row, in minority row order.
pub fn adasyn_ratios(
    matrix: &LabeledMatrix,
    cfg: &SamplerConfig,
) -> Result<Vec<(usize, f64)>, SamplerError> {
    let minority = matrix.minority_label();
    let minority_rows = matrix.rows_with(minority);
    let k = cfg.k_neighbors.min(matrix.len().saturating_sub(1));
    let index = NeighborIndex::new(matrix, (0..matrix.len()).collect());
    let nn = index.query_rows(&minority_rows, k)?;
    Ok(minority_rows
        .into_iter()
        .zip(nn)
        .map(|(row, nbrs)| {
            let maj = nbrs.iter().filter(|&&j| matrix.label(j) != minority).count();
            (row, maj as f64 / k as f64)
        })
        .collect())
}

/// Splits `total` synthetics over seeds in proportion to `ratios`.
/// Each share is rounded; the rounding surplus or deficit is settled one
/// unit at a time, adding to the highest ratios first and removing from the
/// lowest positive ones first, so larger ratios never receive fewer samples.
/// Returns `None` when all ratios are zero.
pub fn allocate(ratios: &[(usize, f64)], total: usize) -> Option<SynthesisPlan> {
    let sum: f64 = ratios.iter().map(|r| r.1).sum();
    if sum <= 0.0 {
        return None;
    }
    let mut counts: Vec<(usize, f64, usize)> = ratios
        .iter()
        .map(|&(row, r)| (row, r / sum, (r / sum * total as f64).round() as usize))
        .collect();
    let assigned: usize = counts.iter().map(|c| c.2).sum();
    // Descending ratio, ties to lower row.
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| counts[b].1.total_cmp(&counts[a].1).then(counts[a].0.cmp(&counts[b].0)));
    if assigned < total {
        let mut deficit = total - assigned;
        let positive: Vec<usize> = order.iter().copied().filter(|&i| counts[i].1 > 0.0).collect();
        let mut it = positive.iter().cycle();
        while deficit > 0 {
            counts[*it.next().unwrap()].2 += 1;
            deficit -= 1;
        }
    } else if assigned > total {
        let mut surplus = assigned - total;
        while surplus > 0 {
            let i = *order.iter().rev().find(|&&i| counts[i].2 > 0).unwrap();
            counts[i].2 -= 1;
            surplus -= 1;
        }
    }
    let mut plan = SynthesisPlan::default();
    for (row, _, c) in counts {
        if c > 0 {
            plan.per_seed_counts.insert(row, c);
        }
    }
    Some(plan)
}

/// ADASYN with beta = 1: per-seed counts proportional to the local
/// majority density.
pub fn adasyn(matrix: &LabeledMatrix, cfg: &SamplerConfig) -> Result<Resampled, SamplerError> {
    let s = setup(matrix, cfg)?;
    if s.n_new == 0 {
        return Ok(unchanged(matrix));
    }
    let ratios = adasyn_ratios(matrix, cfg)?;
    let Some(plan) = allocate(&ratios, s.n_new) else {
        let msg = "ADASYN found no minority rows near the majority class; fell back to SMOTE".to_string();
        warn!("{msg}");
        let mut out = smote_from_seeds(matrix, &s, &s.minority_rows, cfg.seed, SamplerKind::Smote.stream())?;
        out.fallback = Some(msg);
        return Ok(out);
    };
    let neighbors = minority_neighbors(matrix, &s)?;
    let mut rng = rng_for(cfg.seed, SamplerKind::Adasyn.stream());
    let mut synth = Vec::with_capacity(s.n_new);
    for (&x, &count) in &plan.per_seed_counts {
        let nn = &neighbors[&x];
        for _ in 0..count {
            let y = nn[rng.gen_range(0..nn.len())];
            let u: f64 = rng.gen();
            synth.push(synthesize(matrix, x, y, u, false));
        }
    }
    Ok(Resampled {
        matrix: matrix.extended(synth, s.minority),
        plan,
        fallback: None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvm {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub objective: f64,
    pub epochs: usize,
    pub converged: bool,
}

impl LinearSvm {
    pub fn decision(&self, v: &FeatureVector) -> f64 {
        v.dot_dense(&self.weights) + self.bias
    }
}

fn svm_objective(matrix: &LabeledMatrix, positive: Label, w: &[f64], b: f64, lambda: f64) -> f64 {
    let n = matrix.len() as f64;
    let hinge: f64 = matrix
        .vectors()
        .iter()
        .zip(matrix.labels())
        .map(|(v, &l)| {
            let y = if l == positive { 1.0 } else { -1.0 };
            (1.0 - y * (v.dot_dense(w) + b)).max(0.0)
        })
        .sum();
    0.5 * lambda * w.iter().map(|x| x * x).sum::<f64>() + hinge / n
}

/// Regularized hinge loss minimized by full-batch subgradient descent with
/// step `lr / sqrt(t)`; `positive` is the +1 class. The best iterate seen
/// is returned. Converged means the best objective improved by less than
/// `tol` (relative) over the last 20 epochs.
pub fn fit_linear_svm(matrix: &LabeledMatrix, positive: Label, params: &SvmParams) -> LinearSvm {
    const PATIENCE: usize = 20;
    let dim = matrix.dim();
    let n = matrix.len().max(1) as f64;
    let lambda = 1.0 / (params.c * n);
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut best = LinearSvm {
        weights: w.clone(),
        bias: b,
        objective: svm_objective(matrix, positive, &w, b, lambda),
        epochs: 0,
        converged: false,
    };
    let mut history = vec![best.objective];
    let mut grad = vec![0.0; dim];
    for epoch in 1..=params.max_epochs {
        grad.iter_mut().zip(&w).for_each(|(g, wi)| *g = lambda * wi);
        let mut gb = 0.0;
        for (v, &l) in matrix.vectors().iter().zip(matrix.labels()) {
            let y = if l == positive { 1.0 } else { -1.0 };
            if y * (v.dot_dense(&w) + b) < 1.0 {
                for (f, x) in v.iter() {
                    grad[f] -= y * x / n;
                }
                gb -= y / n;
            }
        }
        let step = params.learning_rate / (epoch as f64).sqrt();
        w.iter_mut().zip(&grad).for_each(|(wi, g)| *wi -= step * g);
        b -= step * gb;
        let obj = svm_objective(matrix, positive, &w, b, lambda);
        if obj < best.objective {
            best.weights.clone_from(&w);
            best.bias = b;
            best.objective = obj;
        }
        best.epochs = epoch;
        history.push(best.objective);
        if epoch >= PATIENCE {
            let before = history[epoch - PATIENCE];
            if before - best.objective <= params.tol * before.abs().max(1e-12) {
                best.converged = true;
                break;
            }
        }
    }
    best
}

/// Minority rows inside or on the margin, `|w.x + b| <= 1`.
pub fn svm_seeds(matrix: &LabeledMatrix, svm: &LinearSvm) -> Vec<usize> {
    let minority = matrix.minority_label();
    matrix
        .rows_with(minority)
        .into_iter()
        .filter(|&r| svm.decision(matrix.vector(r)).abs() <= 1.0)
        .collect()
}

/// SVM-SMOTE: seeds are margin minority rows. A seed whose `m` whole-matrix
/// neighbors are mostly minority is extrapolated away from a minority
/// neighbor; otherwise it is interpolated toward one.
pub fn svm_smote(matrix: &LabeledMatrix, cfg: &SamplerConfig) -> Result<Resampled, SamplerError> {
    let s = setup(matrix, cfg)?;
    if matrix.majority_count() == 0 {
        return Err(SamplerError::SingleClass);
    }
    if s.n_new == 0 {
        return Ok(unchanged(matrix));
    }
    let svm = fit_linear_svm(matrix, s.minority, &cfg.svm);
    if !svm.converged {
        warn!(
            "linear separator did not converge in {} epochs; using best iterate (objective {:.6})",
            svm.epochs, svm.objective
        );
    }
    let seeds = svm_seeds(matrix, &svm);
    if seeds.is_empty() {
        let msg = "SVM-SMOTE found no minority rows on the margin; fell back to SMOTE".to_string();
        warn!("{msg}");
        let mut out = smote_from_seeds(matrix, &s, &s.minority_rows, cfg.seed, SamplerKind::Smote.stream())?;
        out.fallback = Some(msg);
        return Ok(out);
    }
    let m = cfg.m_neighbors.min(matrix.len() - 1);
    let whole = NeighborIndex::new(matrix, (0..matrix.len()).collect());
    let extrapolate: Vec<bool> = whole
        .query_rows(&seeds, m)?
        .into_iter()
        .map(|nbrs| {
            let maj = nbrs.iter().filter(|&&j| matrix.label(j) != s.minority).count();
            2 * maj < m
        })
        .collect();
    let neighbors = minority_neighbors(matrix, &s)?;
    let mut rng = rng_for(cfg.seed, SamplerKind::SvmSmote.stream());
    let mut plan = SynthesisPlan::default();
    let mut synth = Vec::with_capacity(s.n_new);
    for _ in 0..s.n_new {
        let i = rng.gen_range(0..seeds.len());
        let x = seeds[i];
        let nn = &neighbors[&x];
        let y = nn[rng.gen_range(0..nn.len())];
        let u: f64 = rng.gen();
        synth.push(synthesize(matrix, x, y, u, extrapolate[i]));
        plan.bump(x);
    }
    Ok(Resampled {
        matrix: matrix.extended(synth, s.minority),
        plan,
        fallback: None,
    })
}

// ---------------------------------------------------------------------------
// Class weights
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightScheme {
    /// `(n + m) / (2 * count_c)`: the rarer class weighs more.
    InverseFrequency,
    /// `n / (n + m)` for SATD and `m / (n + m)` for non-SATD, as printed in
    /// the cost-sensitive CNN baseline description. Down-weights SATD.
    Literal,
}

impl FromStr for WeightScheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "inverse_frequency" | "inverse" => Ok(WeightScheme::InverseFrequency),
            "literal" => Ok(WeightScheme::Literal),
            _ => Err(format!("unknown weight scheme `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub satd: f64,
    pub non_satd: f64,
}

impl ClassWeights {
    pub fn uniform() -> Self {
        ClassWeights {
            satd: 1.0,
            non_satd: 1.0,
        }
    }

    pub fn of(&self, label: Label) -> f64 {
        match label {
            Label::Satd => self.satd,
            Label::NonSatd => self.non_satd,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        ClassWeights {
            satd: self.satd * c,
            non_satd: self.non_satd * c,
        }
    }
}

pub fn compute_class_weights(
    matrix: &LabeledMatrix,
    scheme: WeightScheme,
) -> Result<ClassWeights, SamplerError> {
    let n = matrix.count(Label::Satd);
    let m = matrix.count(Label::NonSatd);
    class_weights_from_counts(n, m, scheme)
}

pub fn class_weights_from_counts(
    satd: usize,
    non_satd: usize,
    scheme: WeightScheme,
) -> Result<ClassWeights, SamplerError> {
    if satd == 0 || non_satd == 0 {
        return Err(SamplerError::ZeroClassCount { satd, non_satd });
    }
    let (n, m) = (satd as f64, non_satd as f64);
    Ok(match scheme {
        WeightScheme::InverseFrequency => ClassWeights {
            satd: (n + m) / (2.0 * n),
            non_satd: (n + m) / (2.0 * m),
        },
        WeightScheme::Literal => ClassWeights {
            satd: n / (n + m),
            non_satd: m / (n + m),
        },
    })
}
