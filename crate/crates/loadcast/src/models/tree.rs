//! Binary CART decision trees: Gini-split classification over codebook
//! labels and variance-reduction regression over kWh targets.

use serde::Serialize;

/// Depth and split-granularity controls shared by both tree tasks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TreeParams {
    /// None grows until purity.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { max_depth: Some(8), min_samples_split: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct Tree {
    nodes: Vec<Node>,
    n_features: usize,
}

#[derive(Clone, Copy)]
enum Criterion {
    Gini { n_classes: usize },
    SumSquares,
}

impl Tree {
    fn fit(x: &[Vec<f64>], y: &[f64], params: TreeParams, criterion: Criterion) -> Self {
        assert_eq!(x.len(), y.len());
        assert!(!x.is_empty());
        assert!(params.min_samples_split >= 2);
        let mut tree = Tree { nodes: Vec::new(), n_features: x[0].len() };
        let indices: Vec<usize> = (0..x.len()).collect();
        tree.build(x, y, indices, 0, params, criterion);
        tree
    }

    fn build(
        &mut self,
        x: &[Vec<f64>],
        y: &[f64],
        indices: Vec<usize>,
        depth: usize,
        params: TreeParams,
        criterion: Criterion,
    ) -> usize {
        let parent_impurity = impurity(y, &indices, criterion);
        let depth_reached = params.max_depth.is_some_and(|d| depth >= d);
        let splittable = indices.len() >= params.min_samples_split
            && parent_impurity > 0.0
            && !depth_reached;
        let split = if splittable { best_split(x, y, &indices, criterion) } else { None };
        match split {
            None => {
                let value = leaf_value(y, &indices, criterion);
                self.nodes.push(Node::Leaf { value });
                self.nodes.len() - 1
            }
            Some((feature, threshold)) => {
                let (mut left_idx, mut right_idx) = (Vec::new(), Vec::new());
                for &i in &indices {
                    if x[i][feature] <= threshold {
                        left_idx.push(i);
                    } else {
                        right_idx.push(i);
                    }
                }
                let left = self.build(x, y, left_idx, depth + 1, params, criterion);
                let right = self.build(x, y, right_idx, depth + 1, params, criterion);
                self.nodes.push(Node::Split { feature, threshold, left, right });
                self.nodes.len() - 1
            }
        }
    }

    /// The last node pushed is always the root.
    fn predict(&self, x: &[f64]) -> f64 {
        let mut node = self.nodes.len() - 1;
        loop {
            match &self.nodes[node] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    node = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, self.nodes.len() - 1)
    }
}

fn impurity(y: &[f64], indices: &[usize], criterion: Criterion) -> f64 {
    match criterion {
        Criterion::Gini { n_classes } => {
            let mut counts = vec![0usize; n_classes];
            for &i in indices {
                counts[y[i] as usize] += 1;
            }
            let n = indices.len() as f64;
            1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
        }
        Criterion::SumSquares => {
            let n = indices.len() as f64;
            let sum: f64 = indices.iter().map(|&i| y[i]).sum();
            let sumsq: f64 = indices.iter().map(|&i| y[i] * y[i]).sum();
            (sumsq - sum * sum / n).max(0.0)
        }
    }
}

fn leaf_value(y: &[f64], indices: &[usize], criterion: Criterion) -> f64 {
    match criterion {
        Criterion::Gini { n_classes } => {
            let mut counts = vec![0usize; n_classes];
            for &i in indices {
                counts[y[i] as usize] += 1;
            }
            // majority class; equal counts resolve to the lower class index
            let mut best = 0;
            for (c, &count) in counts.iter().enumerate() {
                if count > counts[best] {
                    best = c;
                }
            }
            best as f64
        }
        Criterion::SumSquares => {
            indices.iter().map(|&i| y[i]).sum::<f64>() / indices.len() as f64
        }
    }
}

/// Exhaustive search over midpoints of adjacent distinct feature values.
/// Gain ties keep the earliest candidate: lower feature index, then lower
/// threshold. A valid split may carry zero gain; impure nodes still split so
/// structure like XOR resolves at depth 2.
fn best_split(
    x: &[Vec<f64>],
    y: &[f64],
    indices: &[usize],
    criterion: Criterion,
) -> Option<(usize, f64)> {
    let n_features = x[indices[0]].len();
    let n = indices.len() as f64;
    let mut best: Option<(usize, f64)> = None;
    let mut best_score = f64::INFINITY; // weighted child impurity, lower is better

    let mut order: Vec<usize> = Vec::with_capacity(indices.len());
    for feature in 0..n_features {
        order.clear();
        order.extend_from_slice(indices);
        order.sort_by(|&a, &b| x[a][feature].total_cmp(&x[b][feature]));

        for cut in 1..order.len() {
            let lo = x[order[cut - 1]][feature];
            let hi = x[order[cut]][feature];
            if lo == hi {
                continue;
            }
            let threshold = lo + (hi - lo) / 2.0;
            let left = &order[..cut];
            let right = &order[cut..];
            let score = (left.len() as f64 / n) * impurity(y, left, criterion)
                + (right.len() as f64 / n) * impurity(y, right, criterion);
            if score < best_score {
                best_score = score;
                best = Some((feature, threshold));
            }
        }
    }
    best
}

/// CART classifier over discretized target labels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationTree {
    tree: Tree,
    n_classes: usize,
}

impl ClassificationTree {
    pub fn fit(x: &[Vec<f64>], labels: &[usize], n_classes: usize, params: TreeParams) -> Self {
        let y: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
        Self { tree: Tree::fit(x, &y, params, Criterion::Gini { n_classes }), n_classes }
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        self.tree.predict(x) as usize
    }

    pub fn depth(&self) -> usize {
        self.tree.depth()
    }

    pub fn n_features(&self) -> usize {
        self.tree.n_features
    }
}

/// CART regressor over kWh targets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionTree {
    tree: Tree,
}

impl RegressionTree {
    pub fn fit(x: &[Vec<f64>], y: &[f64], params: TreeParams) -> Self {
        Self { tree: Tree::fit(x, y, params, Criterion::SumSquares) }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.tree.predict(x)
    }

    pub fn depth(&self) -> usize {
        self.tree.depth()
    }

    pub fn n_features(&self) -> usize {
        self.tree.n_features
    }
}
