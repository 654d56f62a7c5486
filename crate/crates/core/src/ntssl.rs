//! Semi-supervised origin classifier.
//!
//! 1. Three unsupervised detectors score the training rows; rows flagged by
//!    all three form the initial positive set `P`.
//! 2. Every training row that reaches the minimum anomaly score, inv count and
//!    getdata count observed in `P` joins `P`; the rest are labelled negative.
//! 3. An isolation-forest score is appended as a fifth feature, fitted
//!    separately on the training and on the test rows.
//! 4. Gradient-boosted trees learn the pseudo-labels and predict the test rows.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::config::{Config, ConfigError};
use crate::detect::{self, flag_anomalies, DetectError, Detector, DetectorParams, IsolationForest};
use crate::features::{aggregate, augment, FeatureError, FeatureMatrix};
use crate::gbdt::{self, GbdtError, GbdtModel, GbdtParams};
use crate::seed;
use crate::wiremsg::{TraceRecord, TxHash};

#[derive(Debug, Error)]
pub enum NtsslError {
    #[error("no confident anomalies: the three detectors share no flagged row; raise the contamination")]
    NoConfidentAnomalies,
    #[error("training set needs at least two rows")]
    EmptyTrain,
    #[error("scoring test rows with the training forest needs the training rows")]
    MissingTrain,
    #[error("detector: {0}")]
    Detect(#[from] DetectError),
    #[error("classifier: {0}")]
    Gbdt(#[from] GbdtError),
    #[error("features: {0}")]
    Feature(#[from] FeatureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Initial,
    Expanded,
}

/// Disjoint positive and negative row indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSets {
    pub positive: BTreeSet<usize>,
    pub negative: BTreeSet<usize>,
    pub stage: Stage,
}

impl LabelSets {
    pub fn labels(&self, n: usize) -> Vec<bool> {
        (0..n).map(|i| self.positive.contains(&i)).collect()
    }
}

/// Minima over the initial positives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionThresholds {
    pub min_score: f64,
    pub min_inv: u32,
    pub min_getdata: u32,
}

impl ExpansionThresholds {
    pub fn admits(&self, score: f64, inv: u32, getdata: u32) -> bool {
        score >= self.min_score && inv >= self.min_inv && getdata >= self.min_getdata
    }
}

/// Rows flagged by every detector.
pub fn phase1_intersect(a: &[bool], b: &[bool], c: &[bool]) -> Result<LabelSets, NtsslError> {
    assert!(a.len() == b.len() && b.len() == c.len(), "flag lists must be aligned");
    let positive: BTreeSet<usize> = (0..a.len()).filter(|&i| a[i] && b[i] && c[i]).collect();
    if positive.is_empty() {
        return Err(NtsslError::NoConfidentAnomalies);
    }
    Ok(LabelSets { positive, negative: BTreeSet::new(), stage: Stage::Initial })
}

/// `None` when `initial` has no positives or `x` carries no score column.
pub fn expansion_thresholds(x: &FeatureMatrix, initial: &LabelSets) -> Option<ExpansionThresholds> {
    let rows = x.rows();
    let mut it = initial.positive.iter().map(|&i| &rows[i]);
    let first = it.next()?;
    let mut t = ExpansionThresholds { min_score: first.score?, min_inv: first.inv_num, min_getdata: first.getdata_num };
    for r in it {
        t.min_score = t.min_score.min(r.score?);
        t.min_inv = t.min_inv.min(r.inv_num);
        t.min_getdata = t.min_getdata.min(r.getdata_num);
    }
    Some(t)
}

/// Promotes every row that meets all three minima of `initial`; everything
/// else becomes negative.
pub fn phase2_expand(x: &FeatureMatrix, initial: &LabelSets) -> Result<(LabelSets, ExpansionThresholds), NtsslError> {
    let t = expansion_thresholds(x, initial).ok_or(NtsslError::NoConfidentAnomalies)?;
    let mut positive = BTreeSet::new();
    let mut negative = BTreeSet::new();
    for (i, r) in x.rows().iter().enumerate() {
        if t.admits(r.score.unwrap_or(f64::NEG_INFINITY), r.inv_num, r.getdata_num) {
            positive.insert(i);
        } else {
            negative.insert(i);
        }
    }
    assert!(initial.positive.is_subset(&positive), "expansion must keep every initial positive");
    Ok((LabelSets { positive, negative, stage: Stage::Expanded }, t))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NtsslParams {
    pub detect: DetectorParams,
    pub gbdt: GbdtParams,
    /// Fit a fresh isolation forest on the test rows for the score feature;
    /// otherwise reuse the training forest.
    pub refit_test_score: bool,
    /// Duplicate positives until they reach this share of the negatives.
    pub oversample_ratio: Option<f64>,
    pub seed: u64,
}

impl Default for NtsslParams {
    fn default() -> Self {
        NtsslParams {
            detect: DetectorParams::default(),
            gbdt: GbdtParams::default(),
            refit_test_score: true,
            oversample_ratio: None,
            seed: 0,
        }
    }
}

impl NtsslParams {
    pub const KEYS: &'static [&'static str] = &["refit_test_score", "oversample", "oversample_ratio"];

    pub fn apply(&mut self, cfg: &Config, section: &str) -> Result<(), ConfigError> {
        cfg.read_into(&format!("{section}.refit_test_score"), &mut self.refit_test_score)?;
        let mut on = self.oversample_ratio.is_some();
        let mut ratio = self.oversample_ratio.unwrap_or(0.1);
        cfg.read_into(&format!("{section}.oversample"), &mut on)?;
        cfg.read_into(&format!("{section}.oversample_ratio"), &mut ratio)?;
        if on && !(ratio > 0.0) {
            return Err(ConfigError::Invalid(format!("oversample_ratio must be positive, got {ratio}")));
        }
        self.oversample_ratio = on.then_some(ratio);
        Ok(())
    }
}

/// Phases 1, 2 and the classifier fit, without any test rows.
#[derive(Debug, Clone)]
pub struct TrainedNtssl {
    pub initial: LabelSets,
    pub expanded: LabelSets,
    pub thresholds: ExpansionThresholds,
    pub model: GbdtModel,
}

/// Everything one run produces, aligned with the test rows.
#[derive(Debug, Clone)]
pub struct NtsslOutput {
    pub test_hashes: Vec<TxHash>,
    pub predictions: Vec<bool>,
    pub probas: Vec<f64>,
    pub initial: LabelSets,
    pub expanded: LabelSets,
    pub thresholds: ExpansionThresholds,
    pub model: GbdtModel,
}

/// Phase-1 flags of each detector on `x`, in [`Detector::ALL`] order.
pub fn phase1_flags(x: &FeatureMatrix, params: &DetectorParams, seed: u64) -> Result<Vec<Vec<bool>>, NtsslError> {
    let arr = x.strip_score().to_array();
    let p = params.with_seed(seed::derive(seed, "phase1", 0));
    Detector::ALL
        .iter()
        .map(|&d| {
            let scores = detect::fit_score(d, &arr, &p)?;
            Ok(flag_anomalies(&scores.scores, params.contamination))
        })
        .collect()
}

fn score_forest(x: &FeatureMatrix, params: &NtsslParams, index: u64) -> Result<IsolationForest, NtsslError> {
    let mut forest_params = params.detect.iforest.clone();
    forest_params.seed = seed::derive(params.seed, "score-iforest", index);
    Ok(IsolationForest::fit(&x.to_array(), &forest_params)?)
}

/// Training rows with their isolation-forest score appended.
pub fn score_train(train: &FeatureMatrix, params: &NtsslParams) -> Result<FeatureMatrix, NtsslError> {
    let train = train.strip_score();
    let scores = score_forest(&train, params, 0)?.score(&train.to_array())?;
    Ok(augment(&train, &scores)?)
}

/// Test rows with their isolation-forest score appended: a forest fitted on
/// the test rows themselves, or the training forest when refitting is off
/// (which then needs `train`).
pub fn score_test(test: &FeatureMatrix, train: Option<&FeatureMatrix>, params: &NtsslParams) -> Result<FeatureMatrix, NtsslError> {
    let test = test.strip_score();
    if test.is_empty() {
        return Ok(augment(&test, &[])?);
    }
    let forest = if params.refit_test_score && test.len() >= 2 {
        score_forest(&test, params, 1)?
    } else {
        let train = train.ok_or(NtsslError::MissingTrain)?.strip_score();
        score_forest(&train, params, 0)?
    };
    let scores = forest.score(&test.to_array())?;
    Ok(augment(&test, &scores)?)
}

/// Phases 1, 2 and 4 (fit) on the training rows.
pub fn train_ntssl(train: &FeatureMatrix, params: &NtsslParams) -> Result<TrainedNtssl, NtsslError> {
    if train.len() < 2 {
        return Err(NtsslError::EmptyTrain);
    }
    let train = train.strip_score();
    let flags = phase1_flags(&train, &params.detect, params.seed)?;
    let initial = phase1_intersect(&flags[0], &flags[1], &flags[2])?;
    let train5 = score_train(&train, params)?;
    let (expanded, thresholds) = phase2_expand(&train5, &initial)?;
    debug_assert_eq!(expanded.positive.len() + expanded.negative.len(), train5.len());
    debug_assert!(expanded.positive.iter().all(|&i| {
        let r = &train5.rows()[i];
        thresholds.admits(r.score.unwrap_or(f64::NEG_INFINITY), r.inv_num, r.getdata_num)
    }));

    let mut x_fit = train5.to_array();
    let mut y_fit = expanded.labels(train5.len());
    if let Some(ratio) = params.oversample_ratio {
        let want = (ratio * expanded.negative.len() as f64).ceil() as usize;
        let pos: Vec<usize> = expanded.positive.iter().copied().collect();
        if !pos.is_empty() && pos.len() < want {
            let extra: Vec<usize> = pos.iter().copied().cycle().take(want - pos.len()).collect();
            let dup = x_fit.select(ndarray::Axis(0), &extra);
            x_fit = ndarray::concatenate(ndarray::Axis(0), &[x_fit.view(), dup.view()]).expect("same width");
            y_fit.extend(std::iter::repeat_n(true, extra.len()));
        }
    }
    let model = gbdt::fit(&x_fit, &y_fit, &params.gbdt)?;
    Ok(TrainedNtssl { initial, expanded, thresholds, model })
}

/// Classifies scored test rows; returns labels and probabilities.
pub fn predict_scored(model: &GbdtModel, test5: &FeatureMatrix, threshold: f64) -> Result<(Vec<bool>, Vec<f64>), NtsslError> {
    let probas = if test5.is_empty() { Vec::new() } else { model.predict_proba(&test5.to_array())? };
    Ok((gbdt::threshold_labels(&probas, threshold), probas))
}

/// Phases 1–4 on pre-aggregated rows.
pub fn run_ntssl_features(train: &FeatureMatrix, test: &FeatureMatrix, params: &NtsslParams) -> Result<NtsslOutput, NtsslError> {
    let trained = train_ntssl(train, params)?;
    let test5 = score_test(test, Some(train), params)?;
    let (predictions, probas) = predict_scored(&trained.model, &test5, params.gbdt.decision_threshold)?;
    Ok(NtsslOutput {
        test_hashes: test5.hashes(),
        predictions,
        probas,
        initial: trained.initial,
        expanded: trained.expanded,
        thresholds: trained.thresholds,
        model: trained.model,
    })
}

/// Aggregates both traces and runs [`run_ntssl_features`].
pub fn run_ntssl(train_trace: &[TraceRecord], test_trace: &[TraceRecord], params: &NtsslParams) -> Result<NtsslOutput, NtsslError> {
    run_ntssl_features(&aggregate(train_trace), &aggregate(test_trace), params)
}

/// One classified transaction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub tx: TxHash,
    pub pred: bool,
    pub proba: f64,
}

impl NtsslOutput {
    pub fn prediction_list(&self) -> Vec<Prediction> {
        self.test_hashes
            .iter()
            .zip(&self.predictions)
            .zip(&self.probas)
            .map(|((&tx, &pred), &proba)| Prediction { tx, pred, proba })
            .collect()
    }
}

/// `tx=<hex> pred=<0|1> proba=<decimal>` lines.
pub fn write_predictions(preds: &[Prediction], path: &Path) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for p in preds {
        writeln!(w, "tx={} pred={} proba={:?}", p.tx, u8::from(p.pred), p.proba)?;
    }
    w.flush()
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>, FeatureError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |message: String| FeatureError::Malformed { line: idx + 1, message };
        let f: Vec<&str> = line.split_ascii_whitespace().collect();
        let field = |i: usize, key: &str| {
            f.get(i)
                .and_then(|s| s.strip_prefix(key))
                .and_then(|s| s.strip_prefix('='))
                .ok_or_else(|| bad(format!("expected {key}=")))
        };
        if f.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", f.len())));
        }
        let tx = field(0, "tx")?.parse::<TxHash>().map_err(bad)?;
        let pred = match field(1, "pred")? {
            "0" => false,
            "1" => true,
            other => return Err(bad(format!("pred must be 0 or 1, got {other:?}"))),
        };
        let proba = field(2, "proba")?.parse::<f64>().map_err(|e| bad(e.to_string()))?;
        out.push(Prediction { tx, pred, proba });
    }
    Ok(out)
}
