//! Gaussian naive Bayes over discretized target classes.

use serde::Serialize;

/// Per-class feature Gaussians with a variance floor scaled from the global
/// feature variance, so constant features never produce singular densities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianNb {
    priors: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

impl GaussianNb {
    pub fn fit(x: &[Vec<f64>], labels: &[usize], n_classes: usize) -> Self {
        assert_eq!(x.len(), labels.len());
        assert!(!x.is_empty());
        let n_features = x[0].len();
        let n = x.len() as f64;

        let mut global_mean = vec![0.0; n_features];
        for row in x {
            for (f, &v) in row.iter().enumerate() {
                global_mean[f] += v;
            }
        }
        for m in &mut global_mean {
            *m /= n;
        }
        let mut floor = vec![0.0; n_features];
        for row in x {
            for (f, &v) in row.iter().enumerate() {
                floor[f] += (v - global_mean[f]).powi(2);
            }
        }
        for f in &mut floor {
            *f = 1e-9 * (*f / n + 1e-12);
        }

        let mut counts = vec![0usize; n_classes];
        let mut means = vec![vec![0.0; n_features]; n_classes];
        for (row, &c) in x.iter().zip(labels) {
            counts[c] += 1;
            for (f, &v) in row.iter().enumerate() {
                means[c][f] += v;
            }
        }
        for (c, mean) in means.iter_mut().enumerate() {
            if counts[c] > 0 {
                for m in mean.iter_mut() {
                    *m /= counts[c] as f64;
                }
            }
        }
        let mut variances = vec![vec![0.0; n_features]; n_classes];
        for (row, &c) in x.iter().zip(labels) {
            for (f, &v) in row.iter().enumerate() {
                variances[c][f] += (v - means[c][f]).powi(2);
            }
        }
        for (c, var) in variances.iter_mut().enumerate() {
            for (f, v) in var.iter_mut().enumerate() {
                if counts[c] > 0 {
                    *v /= counts[c] as f64;
                }
                *v = v.max(floor[f]);
            }
        }

        let priors = counts.iter().map(|&c| c as f64 / n).collect();
        Self { priors, means, variances }
    }

    /// Class with the highest log posterior; ties break toward the lowest
    /// class index. Classes absent from training (prior 0) never win.
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for c in 0..self.priors.len() {
            if self.priors[c] == 0.0 {
                continue;
            }
            let mut score = self.priors[c].ln();
            for (f, &v) in x.iter().enumerate() {
                let var = self.variances[c][f];
                let d = v - self.means[c][f];
                score += -0.5 * (std::f64::consts::TAU * var).ln() - d * d / (2.0 * var);
            }
            if score > best_score {
                best_score = score;
                best = c;
            }
        }
        best
    }

    pub fn n_features(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_clusters_classify_by_posterior() {
        // class 0 around 0, class 1 around 10; x = 1 is far closer to 0
        let x = vec![vec![-1.0], vec![0.0], vec![1.0], vec![9.0], vec![10.0], vec![11.0]];
        let labels = vec![0, 0, 0, 1, 1, 1];
        let model = GaussianNb::fit(&x, &labels, 2);
        assert_eq!(model.predict(&[1.0]), 0);
        assert_eq!(model.predict(&[9.0]), 1);
        // hand posterior at the midpoint 5: symmetric densities and priors,
        // tie resolves to class 0
        assert_eq!(model.predict(&[5.0]), 0);
    }

    #[test]
    fn tie_breaks_to_lowest_class_index() {
        let x = vec![vec![-2.0], vec![-2.0], vec![2.0], vec![2.0]];
        let labels = vec![0, 0, 1, 1];
        let model = GaussianNb::fit(&x, &labels, 2);
        assert_eq!(model.predict(&[0.0]), 0);
    }

    #[test]
    fn single_class_always_wins() {
        let x = vec![vec![1.0, 5.0], vec![2.0, 5.0]];
        let labels = vec![0, 0];
        let model = GaussianNb::fit(&x, &labels, 1);
        assert_eq!(model.predict(&[100.0, -3.0]), 0);
    }

    #[test]
    fn constant_feature_survives_via_variance_floor() {
        let x = vec![vec![5.0, 1.0], vec![5.0, 2.0], vec![5.0, 8.0], vec![5.0, 9.0]];
        let labels = vec![0, 0, 1, 1];
        let model = GaussianNb::fit(&x, &labels, 2);
        assert_eq!(model.predict(&[5.0, 1.5]), 0);
        assert_eq!(model.predict(&[5.0, 8.5]), 1);
    }

    #[test]
    fn unseen_class_never_predicted() {
        let x = vec![vec![0.0], vec![1.0]];
        let labels = vec![2, 2]; // classes 0 and 1 have no training rows
        let model = GaussianNb::fit(&x, &labels, 3);
        assert_eq!(model.predict(&[0.5]), 2);
    }
}
