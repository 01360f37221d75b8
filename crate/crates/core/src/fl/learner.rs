use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng;

/// Dense feature matrix, row-major, with one label per row. Contains no
/// missing values: imputation happens before data reaches a learner.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Features {
    pub data: Vec<f64>,
    pub labels: Vec<usize>,
    pub dim: usize,
}

impl Features {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub n_classes: usize,
}

impl Layout {
    pub fn n_weights(&self) -> usize {
        self.hidden_dim * (self.input_dim + 1) + self.n_classes * (self.hidden_dim + 1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerParams {
    pub weights: Vec<f64>,
    pub layout: Layout,
}

impl LearnerParams {
    pub fn is_valid(&self) -> bool {
        self.weights.len() == self.layout.n_weights() && self.weights.iter().all(|w| w.is_finite())
    }
}

/// A classifier trainable by mini-batch gradient descent on a flat parameter
/// vector.
pub trait Learner: Sync {
    fn layout(&self) -> Layout;

    fn init(&self, seed: u64) -> LearnerParams;

    /// Mean cross-entropy over `rows` of `x`; when `grad` is given, the mean
    /// gradient is written into it (overwriting its contents).
    fn loss_and_gradient(
        &self,
        params: &LearnerParams,
        x: &Features,
        rows: &[usize],
        grad: Option<&mut [f64]>,
    ) -> f64;

    fn predict(&self, params: &LearnerParams, input: &[f64]) -> usize;

    fn loss(&self, params: &LearnerParams, x: &Features) -> f64 {
        let rows: Vec<usize> = (0..x.len()).collect();
        self.loss_and_gradient(params, x, &rows, None)
    }

    fn accuracy(&self, params: &LearnerParams, x: &Features) -> f64 {
        if x.is_empty() {
            return 0.0;
        }
        let hits = (0..x.len())
            .filter(|&i| self.predict(params, x.row(i)) == x.labels[i])
            .count();
        hits as f64 / x.len() as f64
    }
}

/// One-hidden-layer perceptron: `tanh` hidden units, softmax output.
///
/// Weight layout: `W1` (hidden × input, row-major), `b1`, `W2`
/// (classes × hidden), `b2`.
#[derive(Clone, Copy, Debug)]
pub struct Mlp {
    layout: Layout,
}

impl Mlp {
    pub fn new(layout: Layout) -> Self {
        Mlp { layout }
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let Layout { input_dim, hidden_dim, n_classes } = self.layout;
        let b1 = hidden_dim * input_dim;
        let w2 = b1 + hidden_dim;
        let b2 = w2 + n_classes * hidden_dim;
        (b1, w2, b2)
    }

    fn forward(&self, w: &[f64], input: &[f64], hidden: &mut [f64], logits: &mut [f64]) {
        let Layout { input_dim, hidden_dim, n_classes } = self.layout;
        let (b1, w2, b2) = self.offsets();
        for h in 0..hidden_dim {
            let row = &w[h * input_dim..(h + 1) * input_dim];
            let z: f64 = row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>() + w[b1 + h];
            hidden[h] = z.tanh();
        }
        for c in 0..n_classes {
            let row = &w[w2 + c * hidden_dim..w2 + (c + 1) * hidden_dim];
            logits[c] = row.iter().zip(hidden.iter()).map(|(a, b)| a * b).sum::<f64>() + w[b2 + c];
        }
    }
}

/// In-place softmax; returns log-sum-exp of the input.
fn softmax(logits: &mut [f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|z| (z - max).exp()).sum();
    let lse = max + sum.ln();
    logits.iter_mut().for_each(|z| *z = (*z - lse).exp());
    lse
}

impl Learner for Mlp {
    fn layout(&self) -> Layout {
        self.layout
    }

    /// Xavier-uniform weights, zero biases.
    fn init(&self, seed: u64) -> LearnerParams {
        let Layout { input_dim, hidden_dim, n_classes } = self.layout;
        let (b1, w2, b2) = self.offsets();
        let mut rng = rng::stream(seed, &[rng::tag("mlp-init")]);
        let mut weights = vec![0.0; self.layout.n_weights()];
        let l1 = (6.0 / (input_dim + hidden_dim) as f64).sqrt();
        for w in &mut weights[..b1] {
            *w = rng.random_range(-l1..l1);
        }
        let l2 = (6.0 / (hidden_dim + n_classes) as f64).sqrt();
        for w in &mut weights[w2..b2] {
            *w = rng.random_range(-l2..l2);
        }
        LearnerParams { weights, layout: self.layout }
    }

    fn loss_and_gradient(
        &self,
        params: &LearnerParams,
        x: &Features,
        rows: &[usize],
        mut grad: Option<&mut [f64]>,
    ) -> f64 {
        let Layout { input_dim, hidden_dim, n_classes } = self.layout;
        let (b1, w2, b2) = self.offsets();
        let w = &params.weights;
        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        if rows.is_empty() {
            return 0.0;
        }
        let mut hidden = vec![0.0; hidden_dim];
        let mut probs = vec![0.0; n_classes];
        let mut dhidden = vec![0.0; hidden_dim];
        let mut total = 0.0;

        for &r in rows {
            let input = x.row(r);
            let label = x.labels[r];
            self.forward(w, input, &mut hidden, &mut probs);
            let z_label = probs[label];
            let lse = softmax(&mut probs);
            total += lse - z_label;

            let Some(g) = grad.as_deref_mut() else { continue };
            probs[label] -= 1.0;
            dhidden.iter_mut().for_each(|v| *v = 0.0);
            for c in 0..n_classes {
                let d = probs[c];
                let base = w2 + c * hidden_dim;
                for h in 0..hidden_dim {
                    g[base + h] += d * hidden[h];
                    dhidden[h] += d * w[base + h];
                }
                g[b2 + c] += d;
            }
            for h in 0..hidden_dim {
                let dz = dhidden[h] * (1.0 - hidden[h] * hidden[h]);
                let base = h * input_dim;
                for (gi, xi) in g[base..base + input_dim].iter_mut().zip(input) {
                    *gi += dz * xi;
                }
                g[b1 + h] += dz;
            }
        }
        let n = rows.len() as f64;
        if let Some(g) = grad {
            g.iter_mut().for_each(|v| *v /= n);
        }
        total / n
    }

    fn predict(&self, params: &LearnerParams, input: &[f64]) -> usize {
        let mut hidden = vec![0.0; self.layout.hidden_dim];
        let mut logits = vec![0.0; self.layout.n_classes];
        self.forward(&params.weights, input, &mut hidden, &mut logits);
        logits
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (c, &z)| if z > best.1 { (c, z) } else { best })
            .0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, dim: usize, seed: u64) -> Features {
        let mut rng = rng::stream(seed, &[]);
        Features {
            data: (0..n * dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
            labels: (0..n).map(|i| i % 3).collect(),
            dim,
        }
    }

    /// Central finite differences on every coordinate.
    fn numeric_gradient(mlp: &Mlp, p: &LearnerParams, x: &Features, h: f64) -> Vec<f64> {
        let rows: Vec<usize> = (0..x.len()).collect();
        (0..p.weights.len())
            .map(|i| {
                let mut plus = p.clone();
                plus.weights[i] += h;
                let mut minus = p.clone();
                minus.weights[i] -= h;
                (mlp.loss_and_gradient(&plus, x, &rows, None)
                    - mlp.loss_and_gradient(&minus, x, &rows, None))
                    / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let layout = Layout { input_dim: 6, hidden_dim: 5, n_classes: 3 };
        let mlp = Mlp::new(layout);
        let x = toy(5, 6, 1);
        let mut p = mlp.init(4);
        // non-zero biases so their gradients are exercised away from the init point
        for w in p.weights.iter_mut().skip(30).take(5) {
            *w = 0.3;
        }
        let mut g = vec![0.0; layout.n_weights()];
        mlp.loss_and_gradient(&p, &x, &[0, 1, 2, 3, 4], Some(&mut g));
        let num = numeric_gradient(&mlp, &p, &x, 1e-5);
        let worst = g
            .iter()
            .zip(&num)
            .map(|(a, b)| (a - b).abs() / (a.abs() + b.abs()).max(1e-8))
            .fold(0.0, f64::max);
        assert!(worst <= 1e-4, "max relative error {worst}");
    }

    #[test]
    fn uniform_logits_give_log_k_loss() {
        let layout = Layout { input_dim: 2, hidden_dim: 3, n_classes: 4 };
        let mlp = Mlp::new(layout);
        let p = LearnerParams { weights: vec![0.0; layout.n_weights()], layout };
        let x = toy(8, 2, 2);
        assert!((mlp.loss(&p, &x) - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn layout_size_matches_init() {
        let layout = Layout { input_dim: 24, hidden_dim: 32, n_classes: 2 };
        let p = Mlp::new(layout).init(0);
        assert_eq!(p.weights.len(), 24 * 32 + 32 + 2 * 32 + 2);
        assert!(p.is_valid());
    }
}
