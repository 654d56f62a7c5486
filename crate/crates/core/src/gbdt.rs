//! Gradient-boosted regression trees for binary classification.
//!
//! Logistic loss on raw scores `F`, with per-row gradient `g = p − y` and
//! hessian `h = p(1 − p)` where `p = σ(F)`. Trees are grown level by level with
//! an exact scan over pre-sorted feature values; a split is kept only if its
//! regularised gain is positive and both children carry at least
//! `min_child_weight` hessian mass.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use thiserror::Error;

use crate::config::{Config, ConfigError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GbdtError {
    #[error("labels contain a single class; need both positives and negatives")]
    SingleClass,
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{rows} rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("non-finite feature value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("model line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbdtParams {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub reg_lambda: f64,
    pub gamma_complexity: f64,
    pub min_child_weight: f64,
    pub decision_threshold: f64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        GbdtParams {
            n_rounds: 100,
            max_depth: 4,
            learning_rate: 0.3,
            reg_lambda: 1.0,
            gamma_complexity: 0.0,
            min_child_weight: 1.0,
            decision_threshold: 0.5,
        }
    }
}

impl GbdtParams {
    pub const KEYS: &'static [&'static str] = &[
        "n_rounds",
        "max_depth",
        "learning_rate",
        "reg_lambda",
        "gamma_complexity",
        "min_child_weight",
        "decision_threshold",
    ];

    pub fn apply(&mut self, cfg: &Config, section: &str) -> Result<(), ConfigError> {
        let k = |name: &str| format!("{section}.{name}");
        cfg.read_into(&k("n_rounds"), &mut self.n_rounds)?;
        cfg.read_into(&k("max_depth"), &mut self.max_depth)?;
        cfg.read_into(&k("learning_rate"), &mut self.learning_rate)?;
        cfg.read_into(&k("reg_lambda"), &mut self.reg_lambda)?;
        cfg.read_into(&k("gamma_complexity"), &mut self.gamma_complexity)?;
        cfg.read_into(&k("min_child_weight"), &mut self.min_child_weight)?;
        cfg.read_into(&k("decision_threshold"), &mut self.decision_threshold)?;
        self.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), GbdtError> {
        let bad = |m: String| Err(GbdtError::InvalidParam(m));
        if self.n_rounds == 0 {
            return bad("n_rounds must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!("learning_rate {} outside (0, 1]", self.learning_rate));
        }
        if !(self.reg_lambda >= 0.0) || !(self.gamma_complexity >= 0.0) || !(self.min_child_weight >= 0.0) {
            return bad("reg_lambda, gamma_complexity and min_child_weight must be non-negative".into());
        }
        Ok(())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Logistic loss of one raw score against a 0/1 label.
pub fn logistic_loss(raw: f64, y: f64) -> f64 {
    // log(1 + e^F) − yF, evaluated stably
    let softplus = if raw > 0.0 { raw + (-raw).exp().ln_1p() } else { raw.exp().ln_1p() };
    softplus - y * raw
}

/// `(g, h)` of the logistic loss with respect to the raw score.
pub fn logistic_grad_hess(raw: f64, y: f64) -> (f64, f64) {
    let p = sigmoid(raw);
    (p - y, p * (1.0 - p))
}

/// Loss reduction of splitting a node into left and right children.
pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, reg_lambda: f64, gamma_complexity: f64) -> f64 {
    let term = |g: f64, h: f64| g * g / (h + reg_lambda);
    0.5 * (term(gl, hl) + term(gr, hr) - term(gl + gr, hl + hr)) - gamma_complexity
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TreeNode {
    /// Rows with `x[feature] < threshold` go to `left`.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                TreeNode::Split { feature, threshold, left, right } => {
                    id = if row[feature] < threshold { left } else { right };
                }
                TreeNode::Leaf { value } => return value,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], id: usize) -> usize {
            match nodes[id] {
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
                TreeNode::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbdtModel {
    pub base_score: f64,
    pub n_features: usize,
    pub trees: Vec<Tree>,
}

/// Chosen split of one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Midpoint between consecutive distinct values, nudged up to `b` when the
/// midpoint rounds onto `a`.
fn midpoint(a: f64, b: f64) -> f64 {
    let t = a + (b - a) / 2.0;
    if t <= a {
        b
    } else {
        t
    }
}

/// Exact split search for every active node at once. `position[i]` is the
/// active node of row `i` (`usize::MAX` when the row is settled). Ties keep the
/// earliest candidate in (feature, threshold) order.
#[allow(clippy::too_many_arguments)]
fn find_splits(
    x: &Array2<f64>,
    sorted: &[Vec<usize>],
    grad: &[f64],
    hess: &[f64],
    position: &[usize],
    totals: &[(f64, f64)],
    params: &GbdtParams,
) -> Vec<Option<SplitCandidate>> {
    let n_active = totals.len();
    let mut best: Vec<Option<SplitCandidate>> = vec![None; n_active];
    let mut acc = vec![(0.0f64, 0.0f64); n_active];
    let mut last = vec![f64::NAN; n_active];
    for (f, order) in sorted.iter().enumerate() {
        acc.iter_mut().for_each(|a| *a = (0.0, 0.0));
        last.iter_mut().for_each(|l| *l = f64::NAN);
        for &i in order {
            let a = position[i];
            if a == usize::MAX {
                continue;
            }
            let v = x[[i, f]];
            if !last[a].is_nan() && v > last[a] {
                let (gl, hl) = acc[a];
                let (g, h) = totals[a];
                let (gr, hr) = (g - gl, h - hl);
                if hl >= params.min_child_weight && hr >= params.min_child_weight {
                    let gain = split_gain(gl, hl, gr, hr, params.reg_lambda, params.gamma_complexity);
                    if gain > 0.0 && best[a].is_none_or(|b| gain > b.gain) {
                        best[a] = Some(SplitCandidate { feature: f, threshold: midpoint(last[a], v), gain });
                    }
                }
            }
            acc[a].0 += grad[i];
            acc[a].1 += hess[i];
            last[a] = v;
        }
    }
    best
}

fn presort(x: &Array2<f64>) -> Vec<Vec<usize>> {
    (0..x.ncols())
        .map(|f| {
            let mut idx: Vec<usize> = (0..x.nrows()).collect();
            idx.sort_by(|&a, &b| x[[a, f]].total_cmp(&x[[b, f]]).then(a.cmp(&b)));
            idx
        })
        .collect()
}

/// Best split of a single node holding `rows`, by the same rule the learner
/// uses.
pub fn best_split(x: &Array2<f64>, grad: &[f64], hess: &[f64], rows: &[usize], params: &GbdtParams) -> Option<SplitCandidate> {
    let mut position = vec![usize::MAX; x.nrows()];
    let (mut g, mut h) = (0.0, 0.0);
    for &r in rows {
        position[r] = 0;
        g += grad[r];
        h += hess[r];
    }
    find_splits(x, &presort(x), grad, hess, &position, &[(g, h)], params)[0]
}

fn grow_tree(x: &Array2<f64>, sorted: &[Vec<usize>], grad: &[f64], hess: &[f64], params: &GbdtParams) -> Tree {
    let n = x.nrows();
    let mut nodes = vec![TreeNode::Leaf { value: 0.0 }];
    // active node index → tree node id
    let mut active: Vec<usize> = vec![0];
    let mut totals = vec![(grad.iter().sum::<f64>(), hess.iter().sum::<f64>())];
    let mut position = vec![0usize; n];
    let leaf = |(g, h): (f64, f64)| TreeNode::Leaf { value: -g / (h + params.reg_lambda) * params.learning_rate };

    for depth in 0..=params.max_depth {
        let splits = if depth < params.max_depth {
            find_splits(x, sorted, grad, hess, &position, &totals, params)
        } else {
            vec![None; active.len()]
        };
        let mut next_active = Vec::new();
        let mut next_totals = Vec::new();
        // active index → (left active, right active, split)
        let mut children: Vec<Option<(usize, usize, SplitCandidate)>> = vec![None; active.len()];
        for (a, split) in splits.into_iter().enumerate() {
            match split {
                Some(s) => {
                    let left = nodes.len();
                    nodes.push(TreeNode::Leaf { value: 0.0 });
                    nodes.push(TreeNode::Leaf { value: 0.0 });
                    nodes[active[a]] = TreeNode::Split { feature: s.feature, threshold: s.threshold, left, right: left + 1 };
                    children[a] = Some((next_active.len(), next_active.len() + 1, s));
                    next_active.push(left);
                    next_active.push(left + 1);
                    next_totals.push((0.0, 0.0));
                    next_totals.push((0.0, 0.0));
                }
                None => nodes[active[a]] = leaf(totals[a]),
            }
        }
        if next_active.is_empty() {
            break;
        }
        for i in 0..n {
            let a = position[i];
            if a == usize::MAX {
                continue;
            }
            position[i] = match children[a] {
                Some((l, r, s)) => {
                    let c = if x[[i, s.feature]] < s.threshold { l } else { r };
                    next_totals[c].0 += grad[i];
                    next_totals[c].1 += hess[i];
                    c
                }
                None => usize::MAX,
            };
        }
        active = next_active;
        totals = next_totals;
    }
    Tree { nodes }
}

fn check_matrix(x: &Array2<f64>) -> Result<(), GbdtError> {
    for ((row, col), v) in x.indexed_iter() {
        if !v.is_finite() {
            return Err(GbdtError::NonFinite { row, col });
        }
    }
    Ok(())
}

/// Boosts `n_rounds` trees on 0/1 labels.
pub fn fit(x: &Array2<f64>, labels: &[bool], params: &GbdtParams) -> Result<GbdtModel, GbdtError> {
    params.validate()?;
    if x.nrows() != labels.len() {
        return Err(GbdtError::LengthMismatch { rows: x.nrows(), labels: labels.len() });
    }
    check_matrix(x)?;
    let positives = labels.iter().filter(|&&y| y).count();
    if positives == 0 || positives == labels.len() {
        return Err(GbdtError::SingleClass);
    }
    let prevalence = positives as f64 / labels.len() as f64;
    let base_score = (prevalence / (1.0 - prevalence)).ln();
    let y: Vec<f64> = labels.iter().map(|&l| f64::from(u8::from(l))).collect();
    let sorted = presort(x);
    let mut raw = vec![base_score; x.nrows()];
    let mut grad = vec![0.0; x.nrows()];
    let mut hess = vec![0.0; x.nrows()];
    let mut trees = Vec::with_capacity(params.n_rounds);
    let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
    for _ in 0..params.n_rounds {
        for i in 0..raw.len() {
            (grad[i], hess[i]) = logistic_grad_hess(raw[i], y[i]);
        }
        let tree = grow_tree(x, &sorted, &grad, &hess, params);
        for (r, row) in raw.iter_mut().zip(&rows) {
            *r += tree.predict_row(row);
        }
        trees.push(tree);
    }
    Ok(GbdtModel { base_score, n_features: x.ncols(), trees })
}

impl GbdtModel {
    pub fn raw_scores(&self, x: &Array2<f64>) -> Result<Vec<f64>, GbdtError> {
        if x.ncols() != self.n_features {
            return Err(GbdtError::DimensionMismatch { expected: self.n_features, got: x.ncols() });
        }
        Ok(x
            .rows()
            .into_iter()
            .map(|r| {
                let row = r.to_vec();
                self.base_score + self.trees.iter().map(|t| t.predict_row(&row)).sum::<f64>()
            })
            .collect())
    }

    /// `σ(base + Σ trees)` per row.
    pub fn predict_proba(&self, x: &Array2<f64>) -> Result<Vec<f64>, GbdtError> {
        Ok(self.raw_scores(x)?.into_iter().map(sigmoid).collect())
    }

    pub fn predict(&self, x: &Array2<f64>, threshold: f64) -> Result<Vec<bool>, GbdtError> {
        Ok(threshold_labels(&self.predict_proba(x)?, threshold))
    }

    /// `base=<v> dim=<d>` then one line per node.
    pub fn to_text(&self) -> String {
        let mut out = format!("base={:?} dim={}\n", self.base_score, self.n_features);
        for (t, tree) in self.trees.iter().enumerate() {
            for (j, node) in tree.nodes.iter().enumerate() {
                let _ = match node {
                    TreeNode::Split { feature, threshold, left, right } => {
                        writeln!(out, "tree={t} node={j} split f={feature} t={threshold:?} l={left} r={right}")
                    }
                    TreeNode::Leaf { value } => writeln!(out, "tree={t} node={j} leaf v={value:?}"),
                };
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, GbdtError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let err = |line: usize, message: String| GbdtError::Parse { line: line + 1, message };
        let (hl, header) = lines.next().ok_or_else(|| err(0, "empty model".into()))?;
        let mut base_score = None;
        let mut n_features = None;
        for field in header.split_ascii_whitespace() {
            match field.split_once('=') {
                Some(("base", v)) => base_score = Some(v.parse::<f64>().map_err(|e| err(hl, e.to_string()))?),
                Some(("dim", v)) => n_features = Some(v.parse::<usize>().map_err(|e| err(hl, e.to_string()))?),
                _ => return Err(err(hl, format!("unexpected header field {field:?}"))),
            }
        }
        let base_score = base_score.ok_or_else(|| err(hl, "missing base=".into()))?;
        let n_features = n_features.ok_or_else(|| err(hl, "missing dim=".into()))?;
        let mut trees: Vec<Tree> = Vec::new();
        for (ln, line) in lines {
            let fields: Vec<&str> = line.split_ascii_whitespace().collect();
            let get = |i: usize, key: &str| -> Result<&str, GbdtError> {
                fields
                    .get(i)
                    .and_then(|f| f.strip_prefix(key))
                    .and_then(|f| f.strip_prefix('='))
                    .ok_or_else(|| err(ln, format!("expected {key}=")))
            };
            let num = |s: &str| s.parse::<usize>().map_err(|e| err(ln, e.to_string()));
            let float = |s: &str| s.parse::<f64>().map_err(|e| err(ln, e.to_string()));
            let (t, j) = (num(get(0, "tree")?)?, num(get(1, "node")?)?);
            let node = match fields.get(2) {
                Some(&"split") => TreeNode::Split {
                    feature: num(get(3, "f")?)?,
                    threshold: float(get(4, "t")?)?,
                    left: num(get(5, "l")?)?,
                    right: num(get(6, "r")?)?,
                },
                Some(&"leaf") => TreeNode::Leaf { value: float(get(3, "v")?)? },
                _ => return Err(err(ln, "expected split or leaf".into())),
            };
            if t == trees.len() {
                trees.push(Tree { nodes: Vec::new() });
            }
            if t + 1 != trees.len() {
                return Err(err(ln, "trees out of order".into()));
            }
            let tree = &mut trees[t];
            if j != tree.nodes.len() {
                return Err(err(ln, "nodes out of order".into()));
            }
            tree.nodes.push(node);
        }
        for (t, tree) in trees.iter().enumerate() {
            for node in &tree.nodes {
                if let TreeNode::Split { feature, left, right, .. } = *node {
                    if feature >= n_features || left >= tree.nodes.len() || right >= tree.nodes.len() {
                        return Err(GbdtError::Parse { line: 0, message: format!("tree {t} references a missing node or feature") });
                    }
                }
            }
        }
        Ok(GbdtModel { base_score, n_features, trees })
    }

    pub fn save(&self, path: &Path) -> Result<(), GbdtError> {
        fs::write(path, self.to_text()).map_err(|e| GbdtError::Io(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, GbdtError> {
        Self::from_text(&fs::read_to_string(path).map_err(|e| GbdtError::Io(e.to_string()))?)
    }
}

/// Label 1 iff `proba ≥ threshold`.
pub fn threshold_labels(probas: &[f64], threshold: f64) -> Vec<bool> {
    probas.iter().map(|&p| p >= threshold).collect()
}
