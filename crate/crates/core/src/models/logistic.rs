//! Weighted L2-regularized logistic regression.
//!
//! The objective is the instance-weighted mean log-loss plus `lambda/2 |w|^2`
//! (bias unpenalized), normalized by the total instance weight so that a
//! weight of 2 is the same as duplicating the row. It is minimized by
//! full-batch gradient descent with Nesterov momentum, a backtracking step
//! size, and a momentum reset whenever the loss goes up.

use serde::{Deserialize, Serialize};

use crate::features::{FeatureVector, LabeledMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegHyper {
    pub l2_lambda: f64,
    /// Initial step size; backtracking adapts it per epoch.
    pub learning_rate: f64,
    pub epochs: usize,
    /// Stop once the gradient infinity-norm drops below this.
    pub tol: f64,
}

impl Default for LogRegHyper {
    fn default() -> Self {
        LogRegHyper {
            l2_lambda: 1e-4,
            learning_rate: 0.1,
            epochs: 300,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub hyper: LogRegHyper,
    pub epochs_run: usize,
    pub converged: bool,
}

impl LogRegModel {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn margin(&self, x: &FeatureVector) -> f64 {
        x.dot_dense(&self.weights) + self.bias
    }

    pub fn score(&self, x: &FeatureVector) -> f64 {
        sigmoid(self.margin(x))
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Objective over a labeled matrix with per-row weights. `params` holds the
/// feature weights followed by the bias.
pub struct LogisticObjective<'a> {
    matrix: &'a LabeledMatrix,
    row_weights: &'a [f64],
    targets: Vec<f64>,
    total_weight: f64,
    lambda: f64,
}

impl<'a> LogisticObjective<'a> {
    pub fn new(matrix: &'a LabeledMatrix, row_weights: &'a [f64], lambda: f64) -> Self {
        assert_eq!(matrix.len(), row_weights.len());
        LogisticObjective {
            matrix,
            row_weights,
            targets: matrix
                .labels()
                .iter()
                .map(|l| if l.is_satd() { 1.0 } else { 0.0 })
                .collect(),
            total_weight: row_weights.iter().sum(),
            lambda,
        }
    }

    pub fn n_params(&self) -> usize {
        self.matrix.dim() + 1
    }

    fn margins(&self, params: &[f64]) -> impl Iterator<Item = f64> + '_ {
        let (w, b) = params.split_at(self.matrix.dim());
        let b = b[0];
        let w = w.to_vec();
        self.matrix.vectors().iter().map(move |v| v.dot_dense(&w) + b)
    }

    pub fn loss(&self, params: &[f64]) -> f64 {
        let dim = self.matrix.dim();
        let data: f64 = self
            .margins(params)
            .zip(&self.targets)
            .zip(self.row_weights)
            .map(|((z, y), s)| s * (softplus(z) - y * z))
            .sum();
        let reg: f64 = params[..dim].iter().map(|w| w * w).sum();
        data / self.total_weight + 0.5 * self.lambda * reg
    }

    pub fn loss_and_grad(&self, params: &[f64], grad: &mut [f64]) -> f64 {
        let dim = self.matrix.dim();
        let (w, b) = params.split_at(dim);
        let b = b[0];
        grad.fill(0.0);
        let mut data = 0.0;
        for ((v, y), s) in self.matrix.vectors().iter().zip(&self.targets).zip(self.row_weights) {
            let z = v.dot_dense(w) + b;
            data += s * (softplus(z) - y * z);
            let r = s * (sigmoid(z) - y);
            for (f, x) in v.iter() {
                grad[f] += r * x;
            }
            grad[dim] += r;
        }
        let inv = 1.0 / self.total_weight;
        for g in grad.iter_mut() {
            *g *= inv;
        }
        let mut reg = 0.0;
        for (g, wi) in grad[..dim].iter_mut().zip(w) {
            *g += self.lambda * wi;
            reg += wi * wi;
        }
        data * inv + 0.5 * self.lambda * reg
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Runs the optimizer; `row_weights` must be positive.
pub fn fit(matrix: &LabeledMatrix, row_weights: &[f64], hyper: &LogRegHyper) -> LogRegModel {
    let obj = LogisticObjective::new(matrix, row_weights, hyper.l2_lambda);
    let n = obj.n_params();
    let mut x = vec![0.0; n];
    let mut x_prev = x.clone();
    let mut gx = vec![0.0; n];
    let mut fx = obj.loss_and_grad(&x, &mut gx);
    let mut y = vec![0.0; n];
    let mut gy = vec![0.0; n];
    let mut cand = vec![0.0; n];
    let mut step = hyper.learning_rate;
    let mut momentum_k = 0usize;
    let mut epochs_run = 0;
    let mut converged = false;

    for epoch in 1..=hyper.epochs {
        if inf_norm(&gx) < hyper.tol {
            converged = true;
            break;
        }
        epochs_run = epoch;
        momentum_k += 1;
        let beta = (momentum_k as f64 - 1.0) / (momentum_k as f64 + 2.0);
        for i in 0..n {
            y[i] = x[i] + beta * (x[i] - x_prev[i]);
        }
        let fy = obj.loss_and_grad(&y, &mut gy);
        let gy_sq: f64 = gy.iter().map(|g| g * g).sum();
        step *= 2.0;
        let mut f_cand;
        loop {
            for i in 0..n {
                cand[i] = y[i] - step * gy[i];
            }
            f_cand = obj.loss(&cand);
            if f_cand <= fy - 0.5 * step * gy_sq || step < 1e-12 {
                break;
            }
            step *= 0.5;
        }
        if f_cand > fx {
            // Momentum overshot: restart from x without accepting the step.
            x_prev.copy_from_slice(&x);
            momentum_k = 0;
            continue;
        }
        x_prev.copy_from_slice(&x);
        x.copy_from_slice(&cand);
        fx = obj.loss_and_grad(&x, &mut gx);
    }
    if !converged && inf_norm(&gx) < hyper.tol {
        converged = true;
    }
    let bias = x[n - 1];
    x.truncate(n - 1);
    LogRegModel {
        weights: x,
        bias,
        hyper: hyper.clone(),
        epochs_run,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;

    #[test]
    fn sigmoid_and_softplus_are_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(800.0) <= 1.0 && sigmoid(-800.0) >= 0.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((softplus(1000.0) - 1000.0).abs() < 1e-9);
        assert!(softplus(-1000.0) >= 0.0);
    }

    #[test]
    fn zero_model_scores_half() {
        let m = LogRegModel {
            weights: vec![0.0; 3],
            bias: 0.0,
            hyper: LogRegHyper::default(),
            epochs_run: 0,
            converged: false,
        };
        assert_eq!(m.score(&FeatureVector::from_dense(&[1.0, 2.0, 3.0])), 0.5);
    }

    #[test]
    fn separable_toy_set_fits() {
        let rows = [(1.0, 0.1), (0.9, 0.0), (0.8, 0.2), (0.1, 1.0), (0.0, 0.9), (0.2, 0.8)];
        let labels = [Label::Satd, Label::Satd, Label::Satd, Label::NonSatd, Label::NonSatd, Label::NonSatd];
        let m = LabeledMatrix::new(
            2,
            rows.iter().map(|&(a, b)| FeatureVector::from_dense(&[a, b])).collect(),
            labels.to_vec(),
        );
        let model = fit(&m, &[1.0; 6], &LogRegHyper::default());
        for (v, l) in m.vectors().iter().zip(m.labels()) {
            assert_eq!(model.score(v) >= 0.5, l.is_satd());
        }
    }
}
