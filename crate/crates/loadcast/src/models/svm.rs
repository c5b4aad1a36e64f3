//! Linear SVM stand-ins trained by seeded stochastic subgradient descent:
//! epsilon-insensitive regression (SVR) and one-vs-rest hinge classification
//! (SVC) over standardized features.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Per-feature shift/scale fitted on training data and stored in the model,
/// so raw feature magnitudes never leak into the optimization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Standardizer {
    means: Vec<f64>,
    stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[Vec<f64>]) -> Self {
        assert!(!x.is_empty());
        let n_features = x[0].len();
        let n = x.len() as f64;
        let mut means = vec![0.0; n_features];
        for row in x {
            for (f, &v) in row.iter().enumerate() {
                means[f] += v;
            }
        }
        for m in &mut means {
            *m /= n;
        }
        let mut stds = vec![0.0; n_features];
        for row in x {
            for (f, &v) in row.iter().enumerate() {
                stds[f] += (v - means[f]).powi(2);
            }
        }
        for s in &mut stds {
            *s = (*s / n).sqrt();
            // constant features pass through unscaled
            if *s == 0.0 {
                *s = 1.0;
            }
        }
        Self { means, stds }
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.means.iter().zip(&self.stds)).map(|(&v, (m, s))| (v - m) / s).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SvmParams {
    /// Residuals within this band produce no regression update.
    pub epsilon: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub regularization: f64,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self { epsilon: 0.01, learning_rate: 0.2, epochs: 120, regularization: 1e-4, seed: 0 }
    }
}

/// The step size decays harmonically per epoch, so late epochs refine
/// instead of oscillating.
fn step_size(learning_rate: f64, epoch: usize) -> f64 {
    learning_rate / (1.0 + epoch as f64)
}

/// Epsilon-insensitive linear regressor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearSvr {
    scaler: Standardizer,
    weights: Vec<f64>,
    bias: f64,
}

impl LinearSvr {
    pub fn fit(x: &[Vec<f64>], y: &[f64], params: &SvmParams) -> Self {
        assert_eq!(x.len(), y.len());
        assert!(!x.is_empty());
        let scaler = Standardizer::fit(x);
        let xs: Vec<Vec<f64>> = x.iter().map(|r| scaler.transform(r)).collect();
        let n_features = xs[0].len();
        let mut weights = vec![0.0; n_features];
        // starting at the target mean makes degenerate inputs (all features
        // constant) already optimal
        let mut bias = y.iter().sum::<f64>() / y.len() as f64;

        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut order: Vec<usize> = (0..xs.len()).collect();
        for epoch in 0..params.epochs {
            let eta = step_size(params.learning_rate, epoch);
            order.shuffle(&mut rng);
            for &i in &order {
                let pred = dot(&weights, &xs[i]) + bias;
                let err = pred - y[i];
                let shrink = 1.0 - eta * params.regularization;
                for w in &mut weights {
                    *w *= shrink;
                }
                if err.abs() > params.epsilon {
                    let g = err.signum();
                    for (w, &v) in weights.iter_mut().zip(&xs[i]) {
                        *w -= eta * g * v;
                    }
                    bias -= eta * g;
                }
            }
        }
        Self { scaler, weights, bias }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        dot(&self.weights, &self.scaler.transform(x)) + self.bias
    }

    pub fn n_features(&self) -> usize {
        self.weights.len()
    }
}

/// One-vs-rest linear hinge classifier over codebook labels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearSvc {
    scaler: Standardizer,
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
}

impl LinearSvc {
    pub fn fit(x: &[Vec<f64>], labels: &[usize], n_classes: usize, params: &SvmParams) -> Self {
        assert_eq!(x.len(), labels.len());
        assert!(!x.is_empty());
        let scaler = Standardizer::fit(x);
        let xs: Vec<Vec<f64>> = x.iter().map(|r| scaler.transform(r)).collect();
        let n_features = xs[0].len();
        let mut weights = vec![vec![0.0; n_features]; n_classes];
        let mut biases = vec![0.0; n_classes];

        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut order: Vec<usize> = (0..xs.len()).collect();
        for epoch in 0..params.epochs {
            let eta = step_size(params.learning_rate, epoch);
            order.shuffle(&mut rng);
            for &i in &order {
                for c in 0..n_classes {
                    let sign = if labels[i] == c { 1.0 } else { -1.0 };
                    let margin = sign * (dot(&weights[c], &xs[i]) + biases[c]);
                    let shrink = 1.0 - eta * params.regularization;
                    for w in &mut weights[c] {
                        *w *= shrink;
                    }
                    if margin < 1.0 {
                        for (w, &v) in weights[c].iter_mut().zip(&xs[i]) {
                            *w += eta * sign * v;
                        }
                        biases[c] += eta * sign;
                    }
                }
            }
        }
        Self { scaler, weights, biases }
    }

    /// Highest decision value wins; ties break toward the lower class index.
    pub fn predict(&self, x: &[f64]) -> usize {
        let xs = self.scaler.transform(x);
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (c, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let score = dot(w, &xs) + b;
            if score > best_score {
                best_score = score;
                best = c;
            }
        }
        best
    }

    pub fn n_features(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
