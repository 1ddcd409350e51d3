//! Second-order gradient boosting on the logistic loss.
//!
//! Trees are grown level by level. Split search is exact: every feature
//! column is presorted once, and at each level one scan per column visits
//! the nonzero entries of all active nodes in value order, with the rows
//! lacking the feature treated as a single group at value 0.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::logistic::sigmoid;
use super::tree::{canonical_order, split_threshold, Node, Tree};
use crate::features::{FeatureVector, LabeledMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostHyper {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// L2 penalty on leaf values.
    pub l2_leaf: f64,
    /// Minimum hessian sum in each child.
    pub min_child_weight: f64,
    /// Stop when validation loss has not improved for this many rounds.
    pub early_stopping_rounds: Option<usize>,
}

impl Default for BoostHyper {
    fn default() -> Self {
        BoostHyper {
            n_rounds: 100,
            max_depth: 6,
            learning_rate: 0.1,
            l2_leaf: 1.0,
            min_child_weight: 1.0,
            early_stopping_rounds: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    /// Leaves hold the unshrunk value `-G / (H + lambda)`.
    pub trees: Vec<Tree<f64>>,
    pub base_score: f64,
    pub hyper: BoostHyper,
    pub dim: usize,
}

impl BoostedModel {
    pub fn margin(&self, x: &FeatureVector) -> f64 {
        let s: f64 = self.trees.iter().map(|t| *t.leaf(x)).sum();
        self.base_score + self.hyper.learning_rate * s
    }

    pub fn score(&self, x: &FeatureVector) -> f64 {
        sigmoid(self.margin(x))
    }
}

/// Weighted mean log-loss of margins against labels.
pub fn weighted_log_loss(margins: &[f64], targets: &[f64], weights: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut wsum = 0.0;
    for ((&z, &y), &w) in margins.iter().zip(targets).zip(weights) {
        total += w * (super::logistic::softplus(z) - y * z);
        wsum += w;
    }
    total / wsum
}

pub fn fit(
    matrix: &LabeledMatrix,
    row_weights: &[f64],
    hyper: &BoostHyper,
    validation: Option<&LabeledMatrix>,
) -> BoostedModel {
    fit_traced(matrix, row_weights, hyper, validation).0
}

/// Like [`fit`], also returning the training loss before the first round
/// and after each round.
pub fn fit_traced(
    matrix: &LabeledMatrix,
    row_weights: &[f64],
    hyper: &BoostHyper,
    validation: Option<&LabeledMatrix>,
) -> (BoostedModel, Vec<f64>) {
    let order = canonical_order(matrix);
    let rows: Vec<&FeatureVector> = order.iter().map(|&i| matrix.vector(i)).collect();
    let y: Vec<f64> = order
        .iter()
        .map(|&i| if matrix.label(i).is_satd() { 1.0 } else { 0.0 })
        .collect();
    let w: Vec<f64> = order.iter().map(|&i| row_weights[i]).collect();
    let n = rows.len();

    let pos: f64 = y.iter().zip(&w).map(|(y, w)| y * w).sum();
    let neg: f64 = w.iter().sum::<f64>() - pos;
    let base_score = if pos > 0.0 && neg > 0.0 { (pos / neg).ln() } else { 0.0 };

    let columns = presort_columns(&rows, matrix.dim());
    let mut margin = vec![base_score; n];
    let mut history = vec![weighted_log_loss(&margin, &y, &w)];
    let mut model = BoostedModel {
        trees: Vec::with_capacity(hyper.n_rounds),
        base_score,
        hyper: hyper.clone(),
        dim: matrix.dim(),
    };

    let val = validation.filter(|v| !v.is_empty() && hyper.early_stopping_rounds.is_some());
    let val_y: Vec<f64> = val
        .map(|v| v.labels().iter().map(|l| if l.is_satd() { 1.0 } else { 0.0 }).collect())
        .unwrap_or_default();
    let mut val_margin = vec![base_score; val.map_or(0, |v| v.len())];
    let mut best_val = (f64::INFINITY, 0usize);

    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    for round in 0..hyper.n_rounds {
        for i in 0..n {
            let p = sigmoid(margin[i]);
            g[i] = w[i] * (p - y[i]);
            h[i] = w[i] * p * (1.0 - p);
        }
        let (tree, leaf_of) = grow_tree(&rows, &columns, &g, &h, hyper);
        for i in 0..n {
            margin[i] += hyper.learning_rate * leaf_value(&tree, leaf_of[i]);
        }
        history.push(weighted_log_loss(&margin, &y, &w));
        if let Some(v) = val {
            for (m, x) in val_margin.iter_mut().zip(v.vectors()) {
                *m += hyper.learning_rate * *tree.leaf(x);
            }
            model.trees.push(tree);
            let loss = weighted_log_loss(&val_margin, &val_y, &vec![1.0; val_y.len()]);
            if loss < best_val.0 {
                best_val = (loss, round + 1);
            } else if round + 1 - best_val.1 >= hyper.early_stopping_rounds.unwrap_or(usize::MAX) {
                model.trees.truncate(best_val.1);
                break;
            }
        } else {
            model.trees.push(tree);
        }
    }
    (model, history)
}

fn leaf_value(tree: &Tree<f64>, node: u32) -> f64 {
    match tree.nodes[node as usize] {
        Node::Leaf(v) => v,
        Node::Split { .. } => unreachable!("rows end in leaves"),
    }
}

/// Per feature, the nonzero entries as `(value, row)` in ascending order.
fn presort_columns(rows: &[&FeatureVector], dim: usize) -> Vec<Vec<(f64, u32)>> {
    let mut cols: Vec<Vec<(f64, u32)>> = vec![Vec::new(); dim];
    for (r, v) in rows.iter().enumerate() {
        for (f, x) in v.iter() {
            cols[f].push((x, r as u32));
        }
    }
    cols.par_iter_mut()
        .for_each(|c| c.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))));
    cols
}

#[derive(Clone, Copy, Default)]
struct Stats {
    g: f64,
    h: f64,
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: u32,
    threshold: f64,
}

fn better(a: &Option<Candidate>, b: &Candidate) -> bool {
    match a {
        None => true,
        Some(a) => b.gain > a.gain || (b.gain == a.gain && b.feature < a.feature),
    }
}

const NONE: u32 = u32::MAX;

/// Grows one regression tree; returns it with the leaf node of every row.
fn grow_tree(
    rows: &[&FeatureVector],
    columns: &[Vec<(f64, u32)>],
    g: &[f64],
    h: &[f64],
    hyper: &BoostHyper,
) -> (Tree<f64>, Vec<u32>) {
    let n = rows.len();
    let lambda = hyper.l2_leaf;
    let mut nodes: Vec<Node<f64>> = vec![Node::Leaf(0.0)];
    // Active slot of each row at the current level, or NONE once settled.
    let mut slot = vec![0u32; n];
    let mut leaf_of = vec![0u32; n];
    // Tree node index of each active slot.
    let mut active: Vec<u32> = vec![0];

    for depth in 0..=hyper.max_depth {
        let k = active.len();
        let mut totals = vec![Stats::default(); k];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            if slot[i] != NONE {
                let s = slot[i] as usize;
                totals[s].g += g[i];
                totals[s].h += h[i];
                counts[s] += 1;
            }
        }
        let best: Vec<Option<Candidate>> = if depth < hyper.max_depth {
            find_splits(columns, &slot, g, h, &totals, &counts, hyper)
        } else {
            vec![None; k]
        };

        let mut next_active = Vec::new();
        let mut remap = vec![(NONE, NONE); k];
        let mut splits = vec![None; k];
        for s in 0..k {
            let node = active[s] as usize;
            match best[s] {
                Some(c) => {
                    let l = nodes.len() as u32;
                    nodes.push(Node::Leaf(0.0));
                    nodes.push(Node::Leaf(0.0));
                    nodes[node] = Node::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left: l,
                        right: l + 1,
                    };
                    remap[s] = (next_active.len() as u32, next_active.len() as u32 + 1);
                    next_active.push(l);
                    next_active.push(l + 1);
                    splits[s] = Some(c);
                }
                None => {
                    nodes[node] = Node::Leaf(-totals[s].g / (totals[s].h + lambda));
                }
            }
        }
        for i in 0..n {
            if slot[i] == NONE {
                continue;
            }
            let s = slot[i] as usize;
            match splits[s] {
                None => {
                    leaf_of[i] = active[s];
                    slot[i] = NONE;
                }
                Some(c) => {
                    slot[i] = if rows[i].get(c.feature as usize) <= c.threshold {
                        remap[s].0
                    } else {
                        remap[s].1
                    };
                }
            }
        }
        if next_active.is_empty() {
            break;
        }
        active = next_active;
    }
    (Tree { nodes }, leaf_of)
}

fn find_splits(
    columns: &[Vec<(f64, u32)>],
    slot: &[u32],
    g: &[f64],
    h: &[f64],
    totals: &[Stats],
    counts: &[usize],
    hyper: &BoostHyper,
) -> Vec<Option<Candidate>> {
    let k = totals.len();
    let lambda = hyper.l2_leaf;
    let mcw = hyper.min_child_weight;
    let score = |s: Stats| s.g * s.g / (s.h + lambda);
    let parent: Vec<f64> = totals.iter().map(|&t| score(t)).collect();

    let chunk = 256;
    columns
        .par_chunks(chunk)
        .enumerate()
        .map(|(ci, cols)| {
            let mut best: Vec<Option<Candidate>> = vec![None; k];
            let mut nz = vec![Stats::default(); k];
            let mut nz_count = vec![0usize; k];
            let mut left = vec![Stats::default(); k];
            let mut last: Vec<Option<f64>> = vec![None; k];
            let mut zero_done = vec![false; k];
            let mut touched: Vec<usize> = Vec::new();

            for (j, col) in cols.iter().enumerate() {
                let feature = (ci * chunk + j) as u32;
                // Pass 1: nonzero sums per node, to size the zero group.
                for &(_, r) in col {
                    let s = slot[r as usize];
                    if s == NONE {
                        continue;
                    }
                    let s = s as usize;
                    if nz_count[s] == 0 {
                        touched.push(s);
                    }
                    nz[s].g += g[r as usize];
                    nz[s].h += h[r as usize];
                    nz_count[s] += 1;
                }
                let consider = |s: usize, left: Stats, lo: f64, hi: f64, best: &mut Vec<Option<Candidate>>| {
                    let right = Stats {
                        g: totals[s].g - left.g,
                        h: totals[s].h - left.h,
                    };
                    if left.h < mcw || right.h < mcw {
                        return;
                    }
                    let gain = 0.5 * (score(left) + score(right) - parent[s]);
                    if gain <= 1e-12 {
                        return;
                    }
                    let c = Candidate {
                        gain,
                        feature,
                        threshold: split_threshold(lo, hi),
                    };
                    if better(&best[s], &c) {
                        best[s] = Some(c);
                    }
                };
                // Pass 2: ascending scan with the zero group spliced in.
                for &(x, r) in col {
                    let s = slot[r as usize];
                    if s == NONE {
                        continue;
                    }
                    let s = s as usize;
                    let has_zero = nz_count[s] < counts[s];
                    if has_zero && !zero_done[s] && x > 0.0 {
                        if let Some(prev) = last[s] {
                            consider(s, left[s], prev, 0.0, &mut best);
                        }
                        left[s].g += totals[s].g - nz[s].g;
                        left[s].h += totals[s].h - nz[s].h;
                        last[s] = Some(0.0);
                        zero_done[s] = true;
                    }
                    if let Some(prev) = last[s] {
                        if x != prev {
                            consider(s, left[s], prev, x, &mut best);
                        }
                    }
                    left[s].g += g[r as usize];
                    left[s].h += h[r as usize];
                    last[s] = Some(x);
                }
                for &s in &touched {
                    let has_zero = nz_count[s] < counts[s];
                    if has_zero && !zero_done[s] {
                        if let Some(prev) = last[s] {
                            consider(s, left[s], prev, 0.0, &mut best);
                        }
                    }
                    nz[s] = Stats::default();
                    nz_count[s] = 0;
                    left[s] = Stats::default();
                    last[s] = None;
                    zero_done[s] = false;
                }
                touched.clear();
            }
            best
        })
        .reduce(
            || vec![None; k],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    if let Some(c) = y {
                        if better(x, &c) {
                            *x = Some(c);
                        }
                    }
                }
                a
            },
        )
}
