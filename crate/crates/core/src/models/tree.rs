//! Binary decision trees over sparse rows, shared by the forest and the
//! boosted ensemble.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::features::{FeatureVector, LabeledMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node<L> {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf(L),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree<L> {
    pub nodes: Vec<Node<L>>,
}

impl<L> Tree<L> {
    pub fn single_leaf(value: L) -> Self {
        Tree {
            nodes: vec![Node::Leaf(value)],
        }
    }

    pub fn leaf(&self, x: &FeatureVector) -> &L {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x.get(*feature as usize) <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go<L>(t: &Tree<L>, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => {
                    1 + go(t, *left as usize).max(go(t, *right as usize))
                }
            }
        }
        go(self, 0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = &L> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf(v) => Some(v),
            Node::Split { .. } => None,
        })
    }

    pub fn max_feature(&self) -> Option<u32> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf(_) => None,
            })
            .max()
    }
}

/// Row order that depends only on row content (label, then indices, then
/// values). Training in this order makes tree ensembles independent of the
/// order rows were supplied in.
pub fn canonical_order(matrix: &LabeledMatrix) -> Vec<usize> {
    let mut order: Vec<usize> = (0..matrix.len()).collect();
    order.sort_by(|&a, &b| {
        matrix
            .label(a)
            .cmp(&matrix.label(b))
            .then_with(|| cmp_vectors(matrix.vector(a), matrix.vector(b)))
            .then(a.cmp(&b))
    });
    order
}

fn cmp_vectors(a: &FeatureVector, b: &FeatureVector) -> Ordering {
    a.indices().cmp(b.indices()).then_with(|| {
        for (x, y) in a.values().iter().zip(b.values()) {
            match x.total_cmp(y) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        Ordering::Equal
    })
}

/// Midpoint threshold between two consecutive distinct values, kept strictly
/// below `hi` so that `lo` goes left and `hi` goes right.
pub fn split_threshold(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid < hi {
        mid
    } else {
        lo
    }
}
