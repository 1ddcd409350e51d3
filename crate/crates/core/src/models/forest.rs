//! Bagged Gini trees.
//!
//! Each tree sees a bootstrap resample (drawn over the canonical row order,
//! keyed by tree index) and, at every node, a random subset of the features
//! that are present in that node. Bootstrap multiplicities and class weights
//! both act as instance weights in the impurity and the leaf probabilities.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{canonical_order, split_threshold, Node, Tree};
use crate::balance::rng_for;
use crate::features::{FeatureVector, LabeledMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestHyper {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    /// Minimum distinct rows in each child.
    pub min_leaf: usize,
    /// Features tried per split; `None` means `ceil(sqrt(dim))`.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestHyper {
    fn default() -> Self {
        ForestHyper {
            n_trees: 100,
            max_depth: None,
            min_leaf: 1,
            features_per_split: None,
            bootstrap: true,
        }
    }
}

/// Leaves hold `[p(NonSATD), p(SATD)]`.
pub type ProbTree = Tree<[f64; 2]>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<ProbTree>,
    pub hyper: ForestHyper,
    pub dim: usize,
    /// Accuracy on rows scored only by trees that did not see them.
    pub oob_accuracy: Option<f64>,
}

impl ForestModel {
    pub fn score(&self, x: &FeatureVector) -> f64 {
        if self.trees.is_empty() {
            return 0.5;
        }
        let s: f64 = self.trees.iter().map(|t| t.leaf(x)[1]).sum();
        s / self.trees.len() as f64
    }
}

pub fn features_per_split(dim: usize, hyper: &ForestHyper) -> usize {
    hyper
        .features_per_split
        .unwrap_or_else(|| (dim as f64).sqrt().ceil() as usize)
        .clamp(1, dim.max(1))
}

pub fn fit(matrix: &LabeledMatrix, row_weights: &[f64], hyper: &ForestHyper, seed: u64) -> ForestModel {
    let order = canonical_order(matrix);
    let rows: Vec<&FeatureVector> = order.iter().map(|&i| matrix.vector(i)).collect();
    let positive: Vec<bool> = order.iter().map(|&i| matrix.label(i).is_satd()).collect();
    let weights: Vec<f64> = order.iter().map(|&i| row_weights[i]).collect();
    let n = rows.len();
    let mtry = features_per_split(matrix.dim(), hyper);

    let grown: Vec<(ProbTree, Vec<u32>)> = (0..hyper.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_for(seed, t as u64);
            let mut mult = vec![0u32; n];
            if hyper.bootstrap {
                for _ in 0..n {
                    mult[rng.gen_range(0..n)] += 1;
                }
            } else {
                mult.fill(1);
            }
            let mut b = Builder {
                rows: &rows,
                positive: &positive,
                weight: weights.iter().zip(&mult).map(|(w, &m)| w * m as f64).collect(),
                hyper,
                mtry,
                slot: vec![u32::MAX; matrix.dim()],
                rng,
            };
            let in_bag: Vec<u32> = (0..n as u32).filter(|&i| mult[i as usize] > 0).collect();
            (b.grow(in_bag), mult)
        })
        .collect();

    let oob_accuracy = oob_accuracy(&grown, &rows, &positive);
    ForestModel {
        trees: grown.into_iter().map(|(t, _)| t).collect(),
        hyper: hyper.clone(),
        dim: matrix.dim(),
        oob_accuracy,
    }
}

fn oob_accuracy(grown: &[(ProbTree, Vec<u32>)], rows: &[&FeatureVector], positive: &[bool]) -> Option<f64> {
    let mut sum = vec![0.0; rows.len()];
    let mut cnt = vec![0u32; rows.len()];
    for (tree, mult) in grown {
        for i in 0..rows.len() {
            if mult[i] == 0 {
                sum[i] += tree.leaf(rows[i])[1];
                cnt[i] += 1;
            }
        }
    }
    let (mut correct, mut total) = (0usize, 0usize);
    for i in 0..rows.len() {
        if cnt[i] > 0 {
            total += 1;
            if (sum[i] / cnt[i] as f64 >= 0.5) == positive[i] {
                correct += 1;
            }
        }
    }
    (total > 0).then(|| correct as f64 / total as f64)
}

struct Builder<'a, R: Rng> {
    rows: &'a [&'a FeatureVector],
    positive: &'a [bool],
    weight: Vec<f64>,
    hyper: &'a ForestHyper,
    mtry: usize,
    slot: Vec<u32>,
    rng: R,
}

struct Split {
    feature: u32,
    threshold: f64,
}

#[derive(Clone, Copy, Default)]
struct Group {
    value: f64,
    pos: f64,
    neg: f64,
    count: usize,
}

/// `W * gini` for a node with class weights `pos` and `neg`.
fn weighted_gini(pos: f64, neg: f64) -> f64 {
    let w = pos + neg;
    if w <= 0.0 {
        0.0
    } else {
        w - (pos * pos + neg * neg) / w
    }
}

impl<'a, R: Rng> Builder<'a, R> {
    fn grow(&mut self, root_rows: Vec<u32>) -> ProbTree {
        let mut nodes: Vec<Node<[f64; 2]>> = vec![Node::Leaf([0.5, 0.5])];
        let mut stack = vec![(0usize, root_rows, 0usize)];
        while let Some((idx, rows, depth)) = stack.pop() {
            let (pos, neg) = self.class_weights(&rows);
            let leaf = if pos + neg > 0.0 {
                [neg / (pos + neg), pos / (pos + neg)]
            } else {
                [0.5, 0.5]
            };
            let splittable = self.hyper.max_depth.is_none_or(|d| depth < d)
                && rows.len() >= 2 * self.hyper.min_leaf.max(1)
                && pos > 0.0
                && neg > 0.0;
            let split = if splittable { self.best_split(&rows, pos, neg) } else { None };
            match split {
                None => nodes[idx] = Node::Leaf(leaf),
                Some(s) => {
                    let (left, right): (Vec<u32>, Vec<u32>) = rows
                        .iter()
                        .partition(|&&r| self.rows[r as usize].get(s.feature as usize) <= s.threshold);
                    let l = nodes.len();
                    nodes.push(Node::Leaf(leaf));
                    nodes.push(Node::Leaf(leaf));
                    nodes[idx] = Node::Split {
                        feature: s.feature,
                        threshold: s.threshold,
                        left: l as u32,
                        right: l as u32 + 1,
                    };
                    stack.push((l + 1, right, depth + 1));
                    stack.push((l, left, depth + 1));
                }
            }
        }
        Tree { nodes }
    }

    fn class_weights(&self, rows: &[u32]) -> (f64, f64) {
        let (mut pos, mut neg) = (0.0, 0.0);
        for &r in rows {
            let w = self.weight[r as usize];
            if self.positive[r as usize] {
                pos += w;
            } else {
                neg += w;
            }
        }
        (pos, neg)
    }

    fn best_split(&mut self, rows: &[u32], pos: f64, neg: f64) -> Option<Split> {
        // Features present in the node.
        let mut present: Vec<u32> = Vec::new();
        for &r in rows {
            for &f in self.rows[r as usize].indices() {
                if self.slot[f as usize] == u32::MAX {
                    self.slot[f as usize] = 0;
                    present.push(f);
                }
            }
        }
        for &f in &present {
            self.slot[f as usize] = u32::MAX;
        }
        if present.is_empty() {
            return None;
        }
        present.sort_unstable();
        let take = self.mtry.min(present.len());
        for i in 0..take {
            let j = self.rng.gen_range(i..present.len());
            present.swap(i, j);
        }
        let mut candidates = present[..take].to_vec();
        candidates.sort_unstable();
        for (c, &f) in candidates.iter().enumerate() {
            self.slot[f as usize] = c as u32;
        }

        let mut values: Vec<Vec<(f64, u32)>> = vec![Vec::new(); candidates.len()];
        for &r in rows {
            for (f, x) in self.rows[r as usize].iter() {
                let c = self.slot[f];
                if c != u32::MAX {
                    values[c as usize].push((x, r));
                }
            }
        }
        for &f in &candidates {
            self.slot[f as usize] = u32::MAX;
        }

        let parent = weighted_gini(pos, neg);
        let n = rows.len();
        let min_leaf = self.hyper.min_leaf.max(1);
        let mut best: Option<(f64, Split)> = None;
        for (c, vals) in values.iter_mut().enumerate() {
            vals.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let groups = self.groups(vals, pos, neg, n);
            let (mut lp, mut ln, mut lc) = (0.0, 0.0, 0usize);
            for w in groups.windows(2) {
                lp += w[0].pos;
                ln += w[0].neg;
                lc += w[0].count;
                if lc < min_leaf || n - lc < min_leaf {
                    continue;
                }
                let child = weighted_gini(lp, ln) + weighted_gini(pos - lp, neg - ln);
                let decrease = parent - child;
                if decrease > 1e-12 * (pos + neg) && best.as_ref().is_none_or(|b| decrease > b.0) {
                    best = Some((
                        decrease,
                        Split {
                            feature: candidates[c],
                            threshold: split_threshold(w[0].value, w[1].value),
                        },
                    ));
                }
            }
        }
        best.map(|b| b.1)
    }

    /// Distinct-value groups in ascending order, including the implicit
    /// zero group for rows that lack the feature.
    fn groups(&self, vals: &[(f64, u32)], pos: f64, neg: f64, n: usize) -> Vec<Group> {
        let mut zero = Group {
            value: 0.0,
            pos,
            neg,
            count: n - vals.len(),
        };
        for &(_, r) in vals {
            let w = self.weight[r as usize];
            if self.positive[r as usize] {
                zero.pos -= w;
            } else {
                zero.neg -= w;
            }
        }
        let mut out: Vec<Group> = Vec::with_capacity(vals.len() + 1);
        let mut zero_done = zero.count == 0;
        let push = |out: &mut Vec<Group>, g: Group| match out.last_mut() {
            Some(last) if last.value == g.value => {
                last.pos += g.pos;
                last.neg += g.neg;
                last.count += g.count;
            }
            _ => out.push(g),
        };
        for &(x, r) in vals {
            if !zero_done && x > 0.0 {
                push(&mut out, zero);
                zero_done = true;
            }
            let w = self.weight[r as usize];
            let (p, q) = if self.positive[r as usize] { (w, 0.0) } else { (0.0, w) };
            push(
                &mut out,
                Group {
                    value: x,
                    pos: p,
                    neg: q,
                    count: 1,
                },
            );
        }
        if !zero_done {
            push(&mut out, zero);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;

    fn toy() -> LabeledMatrix {
        let rows = [
            ([0.9, 0.0, 0.3], Label::Satd),
            ([0.8, 0.1, 0.0], Label::Satd),
            ([0.7, 0.0, 0.5], Label::Satd),
            ([0.0, 0.9, 0.4], Label::NonSatd),
            ([0.1, 0.8, 0.0], Label::NonSatd),
            ([0.0, 0.7, 0.2], Label::NonSatd),
            ([0.2, 0.6, 0.1], Label::NonSatd),
        ];
        LabeledMatrix::new(
            3,
            rows.iter().map(|(v, _)| FeatureVector::from_dense(v)).collect(),
            rows.iter().map(|(_, l)| *l).collect(),
        )
    }

    #[test]
    fn leaves_are_distributions() {
        let m = toy();
        let f = fit(&m, &[1.0; 7], &ForestHyper { n_trees: 5, ..Default::default() }, 1);
        assert_eq!(f.trees.len(), 5);
        for t in &f.trees {
            for l in t.leaves() {
                assert!((l[0] + l[1] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identical_leaf_trees_average() {
        let f = ForestModel {
            trees: vec![Tree::single_leaf([0.2, 0.8]); 4],
            hyper: ForestHyper::default(),
            dim: 2,
            oob_accuracy: None,
        };
        assert!((f.score(&FeatureVector::zeros(2)) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn deterministic_for_seed() {
        let m = toy();
        let h = ForestHyper { n_trees: 10, ..Default::default() };
        assert_eq!(fit(&m, &[1.0; 7], &h, 9), fit(&m, &[1.0; 7], &h, 9));
    }

    #[test]
    fn gini_helper() {
        assert_eq!(weighted_gini(2.0, 2.0), 2.0);
        assert_eq!(weighted_gini(3.0, 0.0), 0.0);
    }
}
