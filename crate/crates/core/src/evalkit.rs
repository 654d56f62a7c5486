//! Confusion-matrix metrics, stratified cross-validation and the coverage
//! sweep.
//!
//! Undefined ratios (0/0) evaluate to 0 so that averages stay finite.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use thiserror::Error;

use crate::features::{aggregate, FeatureMatrix};
use crate::gbdt::{self, GbdtError, GbdtParams};
use crate::netsim::{subsample_links, GroundTruth, SimError, TraceSet};
use crate::ntssl::{run_ntssl_features, NtsslError, NtsslParams, Prediction};
use crate::seed;
use crate::txcluster::{collab_correct, ClusterMembership};
use crate::wiremsg::TxHash;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("row {index}: prediction for {pred} but truth for {truth}")]
    TxMismatch { index: usize, pred: TxHash, truth: TxHash },
    #[error("{preds} predictions for {truth} truth labels")]
    LengthMismatch { preds: usize, truth: usize },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Ntssl(#[from] NtsslError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("classifier: {0}")]
    Gbdt(#[from] GbdtError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn add(&mut self, pred: bool, truth: bool) {
        match (pred, truth) {
            (true, true) => self.tp += 1,
            (false, true) => self.fn_ += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.fp + self.tn
    }
}

/// Counts over index-aligned label lists.
pub fn confusion_labels(preds: &[bool], truth: &[bool]) -> Result<ConfusionMatrix, EvalError> {
    if preds.len() != truth.len() {
        return Err(EvalError::LengthMismatch { preds: preds.len(), truth: truth.len() });
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in preds.iter().zip(truth) {
        cm.add(p, t);
    }
    Ok(cm)
}

/// Counts over `(txid, label)` lists that must name the same transaction at
/// every index.
pub fn confusion(preds: &[(TxHash, bool)], truth: &[(TxHash, bool)]) -> Result<ConfusionMatrix, EvalError> {
    if preds.len() != truth.len() {
        return Err(EvalError::LengthMismatch { preds: preds.len(), truth: truth.len() });
    }
    let mut cm = ConfusionMatrix::default();
    for (index, (&(ph, p), &(th, t))) in preds.iter().zip(truth).enumerate() {
        if ph != th {
            return Err(EvalError::TxMismatch { index, pred: ph, truth: th });
        }
        cm.add(p, t);
    }
    Ok(cm)
}

/// Scores predictions against simulator ground truth; a transaction absent
/// from `truth` is an error.
pub fn confusion_against(preds: &[Prediction], truth: &GroundTruth) -> Result<ConfusionMatrix, EvalError> {
    let mut cm = ConfusionMatrix::default();
    for (index, p) in preds.iter().enumerate() {
        if !truth.contains(&p.tx) {
            return Err(EvalError::Malformed { line: index + 1, message: format!("{} has no ground truth", p.tx) });
        }
        cm.add(p.pred, truth.is_target_origin(&p.tx));
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Metrics {
    pub recall: f64,
    pub fpr: f64,
    pub precision: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn metrics(cm: &ConfusionMatrix) -> Metrics {
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    Metrics { recall, fpr: ratio(cm.fp, cm.fp + cm.tn), precision, f1 }
}

impl Metrics {
    /// Component-wise arithmetic mean; zeros for an empty slice.
    pub fn mean(runs: &[Metrics]) -> Metrics {
        if runs.is_empty() {
            return Metrics::default();
        }
        let n = runs.len() as f64;
        let sum = |f: fn(&Metrics) -> f64| runs.iter().map(f).sum::<f64>() / n;
        Metrics { recall: sum(|m| m.recall), fpr: sum(|m| m.fpr), precision: sum(|m| m.precision), f1: sum(|m| m.f1) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    PerimeterRef,
    Ntssl,
    NtsslPlus,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::PerimeterRef => "perimeter_ref",
            Method::Ntssl => "ntssl",
            Method::NtsslPlus => "ntssl_plus",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "perimeter_ref" => Ok(Method::PerimeterRef),
            "ntssl" => Ok(Method::Ntssl),
            "ntssl_plus" => Ok(Method::NtsslPlus),
            _ => Err(format!("unknown method {s:?}")),
        }
    }
}

/// One line of the report: a method at one coverage, averaged over `runs`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub method: Method,
    pub coverage: f64,
    pub metrics: Metrics,
    pub runs: usize,
    pub seeds: Vec<u64>,
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = &self.metrics;
        write!(
            f,
            "method={} cov={:.2} recall={:.6} fpr={:.6} precision={:.6} f1={:.6} runs={}",
            self.method, self.coverage, m.recall, m.fpr, m.precision, m.f1, self.runs
        )
    }
}

impl FromStr for MetricsReport {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
        for tok in s.split_ascii_whitespace() {
            let (k, v) = tok.split_once('=').ok_or_else(|| format!("expected key=value, found {tok:?}"))?;
            fields.insert(k, v);
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| format!("missing {k}="));
        let num = |k: &str| get(k)?.parse::<f64>().map_err(|e| format!("{k}: {e}"));
        Ok(MetricsReport {
            method: get("method")?.parse()?,
            coverage: num("cov")?,
            metrics: Metrics { recall: num("recall")?, fpr: num("fpr")?, precision: num("precision")?, f1: num("f1")? },
            runs: get("runs")?.parse().map_err(|e| format!("runs: {e}"))?,
            seeds: Vec::new(),
        })
    }
}

/// Published PERIMETER results per coverage, kept as comparison constants:
/// `(coverage, recall, fpr, precision, f1)`.
pub const PERIMETER_REFERENCE: [(f64, f64, f64, f64, f64); 4] = [
    (0.25, 0.391, 0.0035, 0.394, 0.40),
    (0.50, 0.404, 0.0032, 0.440, 0.42),
    (0.75, 0.504, 0.0028, 0.499, 0.50),
    (1.00, 0.538, 0.0027, 0.533, 0.53),
];

/// Published NTSSL+ result at 25% coverage: recall and F1.
pub const NTSSL_PLUS_REFERENCE_25: (f64, f64) = (0.727, 0.64);

/// Reference report line for PERIMETER at a listed coverage.
pub fn perimeter_reference(coverage: f64) -> Option<MetricsReport> {
    PERIMETER_REFERENCE.iter().find(|r| (r.0 - coverage).abs() < 1e-9).map(|&(c, recall, fpr, precision, f1)| {
        MetricsReport { method: Method::PerimeterRef, coverage: c, metrics: Metrics { recall, fpr, precision, f1 }, runs: 0, seeds: Vec::new() }
    })
}

/// Fold index of every row.
///
/// Positives and negatives are shuffled separately and dealt round-robin, so
/// every fold receives a positive whenever there are at least `k` of them.
/// With fewer positives a plain shuffled split is used instead and a warning
/// is logged.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Result<Vec<usize>, EvalError> {
    if k < 2 {
        return Err(EvalError::InvalidParam(format!("need at least 2 folds, got {k}")));
    }
    if labels.len() < k {
        return Err(EvalError::InvalidParam(format!("{} rows cannot fill {k} folds", labels.len())));
    }
    let mut rng = seed::rng(seed::derive(seed, "folds", 0));
    let mut folds = vec![0; labels.len()];
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    if pos.len() < k {
        log::warn!("{} positives for {k} folds; falling back to unstratified folds", pos.len());
        let mut all: Vec<usize> = (0..labels.len()).collect();
        all.shuffle(&mut rng);
        for (j, i) in all.into_iter().enumerate() {
            folds[i] = j % k;
        }
        return Ok(folds);
    }
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let offset = pos.len();
    for (j, &i) in pos.iter().enumerate() {
        folds[i] = j % k;
    }
    for (j, &i) in neg.iter().enumerate() {
        folds[i] = (j + offset) % k;
    }
    Ok(folds)
}

/// Row indices `(train, test)` of one fold.
pub fn split_fold(folds: &[usize], fold: usize) -> (Vec<usize>, Vec<usize>) {
    (0..folds.len()).partition(|&i| folds[i] != fold)
}

/// Per-fold and averaged metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct KfoldResult {
    pub per_fold: Vec<Metrics>,
    pub mean: Metrics,
}

/// Runs `pipeline(train, test, fold)` on each fold and scores its test-row
/// predictions against `labels`.
pub fn kfold_eval<E, F>(labels: &[bool], k: usize, seed: u64, mut pipeline: F) -> Result<KfoldResult, E>
where
    E: From<EvalError>,
    F: FnMut(&[usize], &[usize], usize) -> Result<Vec<bool>, E>,
{
    let folds = stratified_folds(labels, k, seed)?;
    let mut per_fold = Vec::with_capacity(k);
    for fold in 0..k {
        let (train, test) = split_fold(&folds, fold);
        let preds = pipeline(&train, &test, fold)?;
        let truth: Vec<bool> = test.iter().map(|&i| labels[i]).collect();
        per_fold.push(metrics(&confusion_labels(&preds, &truth)?));
    }
    let mean = Metrics::mean(&per_fold);
    Ok(KfoldResult { per_fold, mean })
}

/// Seed of one sweep cell: subsampling and folds of repeat `repeat`.
pub fn cell_seed(seed: u64, repeat: usize) -> u64 {
    seed::derive(seed, "sweep", repeat as u64)
}

/// Pipeline seed of one fold inside a cell.
pub fn fold_seed(cell_seed: u64, fold: usize) -> u64 {
    seed::derive(cell_seed, "fold-ntssl", fold as u64)
}

/// Cross-validated NTSSL, and NTSSL+ when clusters are given.
#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub ntssl: Vec<Metrics>,
    pub ntssl_plus: Option<Vec<Metrics>>,
    /// Out-of-fold NTSSL predictions for every row, in row order.
    pub predictions: Vec<Prediction>,
    /// NTSSL+ labels for every row, in row order.
    pub corrected: Option<Vec<bool>>,
}

/// Labels of `features` rows: true for target-originated transactions.
pub fn truth_labels(features: &FeatureMatrix, truth: &GroundTruth) -> Vec<bool> {
    features.rows().iter().map(|r| truth.is_target_origin(&r.tx)).collect()
}

/// K-fold NTSSL over `features`.
///
/// Each fold trains on the other folds' rows (ground truth is only used for
/// stratification and scoring). The out-of-fold predictions are pooled; the
/// cluster vote for NTSSL+ runs on the pooled set, then both methods are
/// scored fold by fold.
pub fn evaluate_cv(
    features: &FeatureMatrix,
    labels: &[bool],
    clusters: Option<&[ClusterMembership]>,
    k: usize,
    seed: u64,
    params: &NtsslParams,
) -> Result<CvOutcome, EvalError> {
    if labels.len() != features.len() {
        return Err(EvalError::LengthMismatch { preds: features.len(), truth: labels.len() });
    }
    let folds = stratified_folds(labels, k, seed)?;
    let mut pred = vec![false; features.len()];
    let mut proba = vec![0.0; features.len()];
    for fold in 0..k {
        let (train, test) = split_fold(&folds, fold);
        let p = NtsslParams { seed: fold_seed(seed, fold), ..params.clone() };
        let out = run_ntssl_features(&features.select(&train), &features.select(&test), &p)?;
        for (j, &i) in test.iter().enumerate() {
            pred[i] = out.predictions[j];
            proba[i] = out.probas[j];
        }
    }
    let per_fold = |labels_pred: &[bool]| -> Result<Vec<Metrics>, EvalError> {
        (0..k)
            .map(|fold| {
                let idx: Vec<usize> = (0..folds.len()).filter(|&i| folds[i] == fold).collect();
                let p: Vec<bool> = idx.iter().map(|&i| labels_pred[i]).collect();
                let t: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
                Ok(metrics(&confusion_labels(&p, &t)?))
            })
            .collect()
    };
    let ntssl = per_fold(&pred)?;
    let corrected = clusters.map(|clusters| {
        let pooled: BTreeMap<TxHash, bool> = features.rows().iter().zip(&pred).map(|(r, &p)| (r.tx, p)).collect();
        let fixed = collab_correct(&pooled, clusters);
        features.rows().iter().map(|r| fixed[&r.tx]).collect::<Vec<bool>>()
    });
    let ntssl_plus = corrected.as_deref().map(per_fold).transpose()?;
    let predictions = features
        .rows()
        .iter()
        .zip(pred.iter().zip(&proba))
        .map(|(r, (&pred, &proba))| Prediction { tx: r.tx, pred, proba })
        .collect();
    Ok(CvOutcome { ntssl, ntssl_plus, predictions, corrected })
}

/// Coverage sweep settings. Every (repeat, fold) pair counts as one run, so
/// a cell averages `repeats · folds` runs.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub coverages: Vec<f64>,
    pub repeats: usize,
    pub folds: usize,
    /// Keep the target's outbound links in addition to the sampled probes.
    pub include_outbound: bool,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { coverages: vec![0.25, 0.5, 0.75, 1.0], repeats: 5, folds: 5, include_outbound: false, seed: 0 }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.coverages.is_empty() || self.coverages.iter().any(|&c| !(c > 0.0 && c <= 1.0)) {
            return Err(EvalError::InvalidParam(format!("coverages must lie in (0, 1]: {:?}", self.coverages)));
        }
        if self.repeats == 0 {
            return Err(EvalError::InvalidParam("repeats must be at least 1".into()));
        }
        if self.folds < 2 {
            return Err(EvalError::InvalidParam(format!("need at least 2 folds, got {}", self.folds)));
        }
        Ok(())
    }

    /// Header line recording how runs were composed.
    pub fn protocol_line(&self) -> String {
        format!(
            "#protocol folds={} repeats={} composition=repeats_x_folds runs_per_cell={} seed={}",
            self.folds,
            self.repeats,
            self.folds * self.repeats,
            self.seed
        )
    }
}

/// Metrics of one fold in one repeat at one coverage.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub method: Method,
    pub coverage: f64,
    pub repeat: usize,
    pub fold: usize,
    pub metrics: Metrics,
}

/// Everything one (coverage, repeat) cell produced.
#[derive(Debug, Clone, PartialEq)]
pub struct CellOutput {
    pub coverage: f64,
    pub repeat: usize,
    pub runs: Vec<RunRecord>,
    /// Out-of-fold NTSSL predictions, one per extracted row.
    pub predictions: Vec<Prediction>,
    /// The same rows after the cluster vote.
    pub corrected: Option<Vec<Prediction>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub runs: Vec<RunRecord>,
    pub reports: Vec<MetricsReport>,
    pub cells: Vec<CellOutput>,
}

impl SweepResult {
    pub fn report(&self, method: Method, coverage: f64) -> Option<&MetricsReport> {
        self.reports.iter().find(|r| r.method == method && (r.coverage - coverage).abs() < 1e-9)
    }
}

/// One (coverage, repeat) cell: subsample, extract and cross-validate.
fn sweep_cell(
    traces: &TraceSet,
    truth: &GroundTruth,
    clusters: Option<&[ClusterMembership]>,
    sweep: &SweepConfig,
    params: &NtsslParams,
    coverage: f64,
    repeat: usize,
) -> Result<CellOutput, EvalError> {
    let cell_seed = cell_seed(sweep.seed, repeat);
    let sampled = subsample_links(traces, coverage, cell_seed, sweep.include_outbound)?;
    let features = aggregate(&sampled.records);
    let labels = truth_labels(&features, truth);
    let out = evaluate_cv(&features, &labels, clusters, sweep.folds, cell_seed, params)?;
    let mut runs = Vec::new();
    for (method, per_fold) in [(Method::Ntssl, Some(out.ntssl)), (Method::NtsslPlus, out.ntssl_plus)] {
        for (fold, metrics) in per_fold.into_iter().flatten().enumerate() {
            runs.push(RunRecord { method, coverage, repeat, fold, metrics });
        }
    }
    let corrected = out.corrected.map(|c| {
        out.predictions.iter().zip(c).map(|(p, pred)| Prediction { pred, ..*p }).collect()
    });
    Ok(CellOutput { coverage, repeat, runs, predictions: out.predictions, corrected })
}

/// Runs NTSSL (and NTSSL+ with clusters) at every coverage and repeat and
/// averages each (method, coverage) cell over all of its runs.
pub fn coverage_sweep(
    traces: &TraceSet,
    truth: &GroundTruth,
    clusters: Option<&[ClusterMembership]>,
    sweep: &SweepConfig,
    params: &NtsslParams,
) -> Result<SweepResult, EvalError> {
    sweep.validate()?;
    let cells: Vec<(f64, usize)> =
        sweep.coverages.iter().flat_map(|&c| (0..sweep.repeats).map(move |r| (c, r))).collect();
    let cells = cells
        .par_iter()
        .map(|&(c, r)| sweep_cell(traces, truth, clusters, sweep, params, c, r))
        .collect::<Result<Vec<CellOutput>, EvalError>>()?;
    let runs: Vec<RunRecord> = cells.iter().flat_map(|c| c.runs.iter().cloned()).collect();
    let reports = summarize(&runs, &sweep.coverages, &[sweep.seed]);
    Ok(SweepResult { runs, reports, cells })
}

/// Supervised baseline scored two ways on the same folds of node B.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossNodeResult {
    /// Trained on node B's other folds.
    pub in_node: Vec<Metrics>,
    /// Trained on all of node A.
    pub cross_node: Vec<Metrics>,
}

impl CrossNodeResult {
    pub fn report_lines(&self, coverage: f64) -> Vec<String> {
        [("in_node", &self.in_node), ("cross_node", &self.cross_node)]
            .into_iter()
            .map(|(name, runs)| {
                let m = Metrics::mean(runs);
                format!(
                    "scenario={name} cov={coverage:.2} recall={:.6} fpr={:.6} precision={:.6} f1={:.6} runs={}",
                    m.recall,
                    m.fpr,
                    m.precision,
                    m.f1,
                    runs.len()
                )
            })
            .collect()
    }
}

/// Gradient-boosted trees on the four counters with ground-truth labels,
/// trained on node A and tested on each fold of node B, against the same
/// learner cross-validated inside node B.
pub fn crossnode_eval(
    node_a: &FeatureMatrix,
    labels_a: &[bool],
    node_b: &FeatureMatrix,
    labels_b: &[bool],
    k: usize,
    seed: u64,
    params: &GbdtParams,
) -> Result<CrossNodeResult, EvalError> {
    if labels_a.len() != node_a.len() || labels_b.len() != node_b.len() {
        return Err(EvalError::LengthMismatch { preds: node_a.len() + node_b.len(), truth: labels_a.len() + labels_b.len() });
    }
    let b = node_b.strip_score();
    let transferred = gbdt::fit(&node_a.strip_score().to_array(), labels_a, params)?;
    let folds = stratified_folds(labels_b, k, seed)?;
    let mut in_node = Vec::with_capacity(k);
    let mut cross_node = Vec::with_capacity(k);
    for fold in 0..k {
        let (train, test) = split_fold(&folds, fold);
        let test_x = b.select(&test).to_array();
        let truth: Vec<bool> = test.iter().map(|&i| labels_b[i]).collect();
        let train_y: Vec<bool> = train.iter().map(|&i| labels_b[i]).collect();
        let local = gbdt::fit(&b.select(&train).to_array(), &train_y, params)?;
        let pred = local.predict(&test_x, params.decision_threshold)?;
        in_node.push(metrics(&confusion_labels(&pred, &truth)?));
        let pred = transferred.predict(&test_x, params.decision_threshold)?;
        cross_node.push(metrics(&confusion_labels(&pred, &truth)?));
    }
    Ok(CrossNodeResult { in_node, cross_node })
}

/// Averages runs per (method, coverage), methods in declaration order.
pub fn summarize(runs: &[RunRecord], coverages: &[f64], seeds: &[u64]) -> Vec<MetricsReport> {
    let mut reports = Vec::new();
    for method in [Method::Ntssl, Method::NtsslPlus] {
        for &coverage in coverages {
            let cell: Vec<Metrics> = runs
                .iter()
                .filter(|r| r.method == method && (r.coverage - coverage).abs() < 1e-9)
                .map(|r| r.metrics)
                .collect();
            if !cell.is_empty() {
                reports.push(MetricsReport {
                    method,
                    coverage,
                    metrics: Metrics::mean(&cell),
                    runs: cell.len(),
                    seeds: seeds.to_vec(),
                });
            }
        }
    }
    reports
}

/// Report text: optional header lines, then one line per report, then the
/// PERIMETER reference lines for the coverages present.
pub fn format_report(header: &[String], reports: &[MetricsReport]) -> String {
    let mut out = String::new();
    for h in header {
        out.push_str(h);
        out.push('\n');
    }
    let mut covs: Vec<f64> = Vec::new();
    for r in reports {
        out.push_str(&r.to_string());
        out.push('\n');
        if !covs.iter().any(|&c| (c - r.coverage).abs() < 1e-9) {
            covs.push(r.coverage);
        }
    }
    for c in covs {
        if let Some(r) = perimeter_reference(c) {
            out.push_str(&r.to_string());
            out.push('\n');
        }
    }
    out
}

pub fn write_report(path: &Path, header: &[String], reports: &[MetricsReport]) -> Result<(), EvalError> {
    fs::write(path, format_report(header, reports))?;
    Ok(())
}

/// Report lines of a file, skipping `#` comments.
pub fn parse_report(text: &str) -> Result<Vec<MetricsReport>, EvalError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| l.parse().map_err(|message| EvalError::Malformed { line: i + 1, message }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_examples() {
        let cm = confusion_labels(&[true, false], &[true, false]).unwrap();
        assert_eq!(cm, ConfusionMatrix { tp: 1, fn_: 0, fp: 0, tn: 1 });
        assert_eq!(confusion_labels(&[true], &[false]).unwrap().fp, 1);
        assert_eq!(confusion_labels(&[], &[]).unwrap(), ConfusionMatrix::default());
        let a = TxHash([1; 32]);
        let b = TxHash([2; 32]);
        assert!(matches!(confusion(&[(a, true)], &[(b, true)]), Err(EvalError::TxMismatch { index: 0, .. })));
    }

    #[test]
    fn metric_examples() {
        let m = metrics(&ConfusionMatrix { tp: 61, fp: 17, fn_: 26, tn: 14_896 });
        assert!((m.precision - 0.782).abs() < 1e-3);
        assert!((m.recall - 0.701).abs() < 1e-3);
        assert!((m.f1 - 0.739).abs() < 1e-3);
        let m = metrics(&ConfusionMatrix { tp: 1, ..Default::default() });
        assert_eq!((m.recall, m.precision, m.f1), (1.0, 1.0, 1.0));
        let m = metrics(&ConfusionMatrix { fn_: 3, tn: 5, ..Default::default() });
        assert_eq!((m.precision, m.f1, m.fpr), (0.0, 0.0, 0.0));
    }

    #[test]
    fn stratified_every_fold_has_a_positive() {
        let labels: Vec<bool> = (0..1000).map(|i| i % 97 == 0).collect();
        let folds = stratified_folds(&labels, 5, 3).unwrap();
        for f in 0..5 {
            assert!((0..1000).any(|i| folds[i] == f && labels[i]));
            let size = folds.iter().filter(|&&x| x == f).count();
            assert!((199..=201).contains(&size), "{size}");
        }
        // too few positives: still a valid partition
        let few: Vec<bool> = (0..20).map(|i| i == 0).collect();
        let folds = stratified_folds(&few, 5, 3).unwrap();
        assert!((0..5).all(|f| folds.iter().filter(|&&x| x == f).count() == 4));
        assert!(stratified_folds(&few, 1, 3).is_err());
    }

    #[test]
    fn kfold_trivial_pipelines() {
        let labels: Vec<bool> = (0..100).map(|i| i % 10 == 0).collect();
        let none = kfold_eval::<EvalError, _>(&labels, 5, 1, |_, test, _| Ok(vec![false; test.len()])).unwrap();
        assert!(none.per_fold.iter().all(|m| m.recall == 0.0));
        let oracle = |_: &[usize], test: &[usize], _| Ok::<_, EvalError>(test.iter().map(|&i| labels[i]).collect());
        let r = kfold_eval(&labels, 5, 1, oracle).unwrap();
        assert_eq!(r.mean, Metrics { recall: 1.0, fpr: 0.0, precision: 1.0, f1: 1.0 });
        assert_eq!(r, kfold_eval(&labels, 5, 1, oracle).unwrap());
    }

    #[test]
    fn report_line_round_trip() {
        let r = MetricsReport {
            method: Method::NtsslPlus,
            coverage: 0.25,
            metrics: Metrics { recall: 0.5, fpr: 0.001, precision: 0.25, f1: 1.0 / 3.0 },
            runs: 25,
            seeds: vec![1],
        };
        let line = r.to_string();
        assert_eq!(line, "method=ntssl_plus cov=0.25 recall=0.500000 fpr=0.001000 precision=0.250000 f1=0.333333 runs=25");
        let back: MetricsReport = line.parse().unwrap();
        assert_eq!((back.method, back.runs), (Method::NtsslPlus, 25));
        assert!((back.metrics.f1 - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn perimeter_constants() {
        let p = perimeter_reference(1.0).unwrap();
        assert_eq!((p.metrics.recall, p.metrics.precision, p.metrics.f1), (0.538, 0.533, 0.53));
        assert!(perimeter_reference(0.3).is_none());
        let text = format_report(&["#x".into()], &[]);
        assert_eq!(text, "#x\n");
    }
}
