//! Slow, obviously-correct reference computations the library is checked against.

use satd_core::corpus::Label;
use satd_core::features::LabeledMatrix;

/// AUC as the fraction of (positive, negative) pairs ranked correctly, ties half.
pub fn pair_count_auc(labels: &[Label], scores: &[f64]) -> Option<f64> {
    let mut wins = 0.0;
    let mut pairs = 0usize;
    for (i, li) in labels.iter().enumerate() {
        if !li.is_satd() {
            continue;
        }
        for (j, lj) in labels.iter().enumerate() {
            if lj.is_satd() {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    (pairs > 0).then(|| wins / pairs as f64)
}

/// Rank of each value in 1..=n, tied values sharing their mean rank. Quadratic on purpose.
pub fn naive_ranks(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .map(|&v| {
            let below = values.iter().filter(|&&u| u < v).count() as f64;
            let equal = values.iter().filter(|&&u| u == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Two-sided exact signed-rank p value by walking all 2^n sign assignments.
/// Returns (W, p) with W the smaller of the two rank sums.
pub fn enumerated_signed_rank(a: &[f64], b: &[f64]) -> (f64, f64) {
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    let ranks = naive_ranks(&diffs.iter().map(|d| d.abs()).collect::<Vec<_>>());
    let w_plus: f64 = ranks.iter().zip(&diffs).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
    let total: f64 = ranks.iter().sum();
    let w = w_plus.min(total - w_plus);
    let mut at_most = 0u64;
    for mask in 0u64..(1 << n) {
        let s: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if s <= w + 1e-9 {
            at_most += 1;
        }
    }
    (w, (2.0 * at_most as f64 / (1u64 << n) as f64).min(1.0))
}

fn sq_dist(m: &LabeledMatrix, i: usize, j: usize) -> f64 {
    let a = m.vector(i).to_dense();
    let b = m.vector(j).to_dense();
    a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The k rows nearest to `query` among all other rows, by full sort.
/// Ties go to the lower row index.
pub fn brute_neighbors(m: &LabeledMatrix, query: usize, pool: &[usize], k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = pool
        .iter()
        .filter(|&&j| j != query)
        .map(|&j| (sq_dist(m, query, j), j))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.into_iter().take(k).map(|x| x.1).collect()
}

/// Number of majority rows among the k nearest neighbors of each minority row.
pub fn majority_neighbor_counts(m: &LabeledMatrix, k: usize) -> Vec<(usize, usize)> {
    let minority = m.minority_label();
    let all: Vec<usize> = (0..m.len()).collect();
    m.rows_with(minority)
        .into_iter()
        .map(|r| {
            let maj = brute_neighbors(m, r, &all, k)
                .into_iter()
                .filter(|&j| m.label(j) != minority)
                .count();
            (r, maj)
        })
        .collect()
}

/// Whether `p` lies on the segment from `a` to `b` (within `tol`).
pub fn on_segment(p: &[f64], a: &[f64], b: &[f64], tol: f64) -> bool {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let dd: f64 = d.iter().map(|x| x * x).sum();
    let t = if dd == 0.0 {
        0.0
    } else {
        p.iter().zip(a).zip(&d).map(|((p, a), d)| (p - a) * d).sum::<f64>() / dd
    };
    if !(-tol..=1.0 + tol).contains(&t) {
        return false;
    }
    p.iter().zip(a).zip(&d).all(|((p, a), d)| (a + t * d - p).abs() <= tol)
}

/// Shapley values of `f` at `x` relative to `reference`, averaging marginal
/// contributions over every ordering of `players`. Features outside
/// `players` stay at `x`.
pub fn permutation_shapley(
    f: impl Fn(&[f64]) -> f64,
    x: &[f64],
    reference: &[f64],
    players: &[usize],
) -> Vec<f64> {
    let n = players.len();
    let mut phi = vec![0.0; n];
    let mut perm: Vec<usize> = (0..n).collect();
    let mut count = 0usize;
    loop {
        let mut z = x.to_vec();
        for &p in players {
            z[p] = reference[p];
        }
        let mut prev = f(&z);
        for &i in &perm {
            z[players[i]] = x[players[i]];
            let cur = f(&z);
            phi[i] += cur - prev;
            prev = cur;
        }
        count += 1;
        if !next_permutation(&mut perm) {
            break;
        }
    }
    phi.iter().map(|v| v / count as f64).collect()
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Weighted gini impurity of a two-class node: W - (pos^2 + neg^2) / W.
pub fn gini(pos: f64, neg: f64) -> f64 {
    let w = pos + neg;
    if w == 0.0 {
        0.0
    } else {
        w - (pos * pos + neg * neg) / w
    }
}

/// Best single-feature split by trying every feature and every cut between
/// distinct sorted values. Returns (impurity after split, left row set).
pub fn exhaustive_stump(m: &LabeledMatrix) -> Option<(f64, Vec<usize>)> {
    let mut best: Option<(f64, Vec<usize>)> = None;
    for f in 0..m.dim() {
        let mut vals: Vec<f64> = (0..m.len()).map(|i| m.vector(i).get(f)).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let cut = (w[0] + w[1]) / 2.0;
            let (mut lp, mut ln, mut rp, mut rn) = (0.0, 0.0, 0.0, 0.0);
            let mut left = Vec::new();
            for i in 0..m.len() {
                let is_pos = m.label(i).is_satd();
                if m.vector(i).get(f) <= cut {
                    left.push(i);
                    if is_pos { lp += 1.0 } else { ln += 1.0 }
                } else if is_pos {
                    rp += 1.0
                } else {
                    rn += 1.0
                }
            }
            let imp = gini(lp, ln) + gini(rp, rn);
            if best.as_ref().is_none_or(|b| imp < b.0 - 1e-12) {
                best = Some((imp, left));
            }
        }
    }
    best
}
