use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::seed;

use super::{check_finite, AnomalyScores, DetectError, Detector};

const EULER_GAMMA: f64 = 0.5772156649;

/// Average path length of an unsuccessful search in a binary search tree of
/// `n` points; normalises isolation depths.
pub fn avg_path_normalizer(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let n = n as f64;
            2.0 * ((n - 1.0).ln() + EULER_GAMMA) - 2.0 * (n - 1.0) / n
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsolationForestParams {
    pub n_trees: usize,
    /// Points per tree, capped at the row count.
    pub subsample_size: usize,
    pub seed: u64,
}

impl Default for IsolationForestParams {
    fn default() -> Self {
        IsolationForestParams { n_trees: 100, subsample_size: 256, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    /// Rows with `x[feature] < threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { size: usize },
}

#[derive(Debug, Clone, PartialEq)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn grow(x: &Array2<f64>, rows: &mut [usize], depth_limit: usize, rng: &mut ChaCha8Rng) -> Tree {
        let mut tree = Tree { nodes: Vec::new() };
        tree.build(x, rows, 0, depth_limit, rng);
        tree
    }

    fn build(&mut self, x: &Array2<f64>, rows: &mut [usize], depth: usize, limit: usize, rng: &mut ChaCha8Rng) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { size: rows.len() });
        if depth >= limit || rows.len() <= 1 {
            return id;
        }
        // features that still vary within this node
        let ranges: Vec<(usize, f64, f64)> = (0..x.ncols())
            .filter_map(|f| {
                let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                    (lo.min(x[[r, f]]), hi.max(x[[r, f]]))
                });
                (hi > lo).then_some((f, lo, hi))
            })
            .collect();
        if ranges.is_empty() {
            return id;
        }
        let (feature, lo, hi) = ranges[rng.random_range(0..ranges.len())];
        let mut threshold = rng.random_range(lo..hi);
        if threshold <= lo {
            // keep both sides non-empty
            threshold = hi;
        }
        let mut split = 0;
        for i in 0..rows.len() {
            if x[[rows[i], feature]] < threshold {
                rows.swap(i, split);
                split += 1;
            }
        }
        let (l, r) = rows.split_at_mut(split);
        let left = self.build(x, l, depth + 1, limit, rng);
        let right = self.build(x, r, depth + 1, limit, rng);
        self.nodes[id] = Node::Split { feature, threshold, left, right };
        id
    }

    /// Depth at which `point` lands, plus the expected remaining depth of the
    /// leaf's unresolved points.
    fn path_length(&self, point: ArrayView1<f64>) -> f64 {
        let mut id = 0;
        let mut depth = 0.0;
        loop {
            match self.nodes[id] {
                Node::Split { feature, threshold, left, right } => {
                    id = if point[feature] < threshold { left } else { right };
                    depth += 1.0;
                }
                Node::Leaf { size } => return depth + avg_path_normalizer(size),
            }
        }
    }
}

/// Ensemble of random isolation trees.
#[derive(Debug, Clone, PartialEq)]
pub struct IsolationForest {
    trees: Vec<Tree>,
    psi: usize,
    dim: usize,
}

impl IsolationForest {
    pub fn fit(x: &Array2<f64>, params: &IsolationForestParams) -> Result<Self, DetectError> {
        let n = x.nrows();
        if n < 2 {
            return Err(DetectError::TooFewRows { n, min: 2 });
        }
        if params.n_trees == 0 || params.subsample_size < 2 {
            return Err(DetectError::InvalidParam("iforest needs at least one tree and a subsample of 2".into()));
        }
        check_finite(x)?;
        let psi = params.subsample_size.min(n);
        let limit = (psi as f64).log2().ceil() as usize;
        let trees = (0..params.n_trees)
            .map(|t| {
                let mut rng = seed::rng(seed::derive(params.seed, "iforest-tree", t as u64));
                let mut rows = rand::seq::index::sample(&mut rng, n, psi).into_vec();
                Tree::grow(x, &mut rows, limit, &mut rng)
            })
            .collect();
        Ok(IsolationForest { trees, psi, dim: x.ncols() })
    }

    /// `2^(−E[h(x)] / c(ψ))`, strictly inside (0, 1).
    pub fn score(&self, x: &Array2<f64>) -> Result<Vec<f64>, DetectError> {
        if x.ncols() != self.dim {
            return Err(DetectError::InvalidParam(format!("expected {} columns, got {}", self.dim, x.ncols())));
        }
        check_finite(x)?;
        let c = avg_path_normalizer(self.psi);
        Ok(x
            .rows()
            .into_iter()
            .map(|row| {
                let mean = self.trees.iter().map(|t| t.path_length(row)).sum::<f64>() / self.trees.len() as f64;
                2f64.powf(-mean / c)
            })
            .collect())
    }
}

pub fn iforest_fit_score(x: &Array2<f64>, params: &IsolationForestParams) -> Result<AnomalyScores, DetectError> {
    let forest = IsolationForest::fit(x, params)?;
    Ok(AnomalyScores { detector: Detector::IsolationForest, scores: forest.score(x)? })
}
