//! Unsupervised anomaly scorers behind one contract: fit on a matrix, return
//! one finite score per row with higher meaning more anomalous, then flag the
//! top `⌈c·n⌉` rows.

mod autoencoder;
mod iforest;
mod ocsvm;

pub use autoencoder::{autoencoder_fit_score, mse, Autoencoder, AutoencoderParams};
pub use iforest::{avg_path_normalizer, iforest_fit_score, IsolationForest, IsolationForestParams};
pub use ocsvm::{ocsvm_fit_score, rbf_kernel, OneClassSvm, OcsvmParams};

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use thiserror::Error;

use crate::config::{Config, ConfigError};
use crate::wiremsg::TxHash;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectError {
    #[error("need at least {min} rows, got {n}")]
    TooFewRows { n: usize, min: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("solver stopped after {iterations} iterations with duality gap {gap:e}")]
    NotConverged { iterations: usize, gap: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Detector {
    IsolationForest,
    Autoencoder,
    Ocsvm,
}

impl Detector {
    pub const ALL: [Detector; 3] = [Detector::IsolationForest, Detector::Autoencoder, Detector::Ocsvm];

    pub fn name(self) -> &'static str {
        match self {
            Detector::IsolationForest => "iforest",
            Detector::Autoencoder => "autoencoder",
            Detector::Ocsvm => "ocsvm",
        }
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Detector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Detector::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| format!("unknown detector {s:?} (iforest, autoencoder, ocsvm)"))
    }
}

/// Scores aligned with the rows of the matrix they were computed on.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyScores {
    pub detector: Detector,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorParams {
    pub iforest: IsolationForestParams,
    pub autoencoder: AutoencoderParams,
    pub ocsvm: OcsvmParams,
    /// Share of rows each detector flags.
    pub contamination: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            iforest: IsolationForestParams::default(),
            autoencoder: AutoencoderParams::default(),
            ocsvm: OcsvmParams::default(),
            contamination: 0.01,
        }
    }
}

impl DetectorParams {
    pub const KEYS: &'static [&'static str] = &[
        "contamination",
        "iforest_trees",
        "iforest_subsample",
        "ae_hidden",
        "ae_epochs",
        "ae_learning_rate",
        "ae_restarts",
        "ocsvm_nu",
        "ocsvm_gamma",
        "ocsvm_tolerance",
        "ocsvm_max_iter",
    ];

    pub fn apply(&mut self, cfg: &Config, section: &str) -> Result<(), ConfigError> {
        let k = |name: &str| format!("{section}.{name}");
        cfg.read_into(&k("contamination"), &mut self.contamination)?;
        cfg.read_into(&k("iforest_trees"), &mut self.iforest.n_trees)?;
        cfg.read_into(&k("iforest_subsample"), &mut self.iforest.subsample_size)?;
        cfg.read_into(&k("ae_hidden"), &mut self.autoencoder.hidden_dim)?;
        cfg.read_into(&k("ae_epochs"), &mut self.autoencoder.epochs)?;
        cfg.read_into(&k("ae_learning_rate"), &mut self.autoencoder.learning_rate)?;
        cfg.read_into(&k("ae_restarts"), &mut self.autoencoder.restarts)?;
        let mut nu = f64::NAN;
        cfg.read_into(&k("ocsvm_nu"), &mut nu)?;
        if !nu.is_nan() {
            self.ocsvm.nu = Some(nu);
        }
        let mut gamma = f64::NAN;
        cfg.read_into(&k("ocsvm_gamma"), &mut gamma)?;
        if !gamma.is_nan() {
            self.ocsvm.gamma = Some(gamma);
        }
        cfg.read_into(&k("ocsvm_tolerance"), &mut self.ocsvm.tolerance)?;
        cfg.read_into(&k("ocsvm_max_iter"), &mut self.ocsvm.max_iter)?;
        self.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), DetectError> {
        if !(self.contamination > 0.0 && self.contamination < 1.0) {
            return Err(DetectError::InvalidParam(format!("contamination {} outside (0, 1)", self.contamination)));
        }
        if let Some(nu) = self.ocsvm.nu {
            if !(nu > 0.0 && nu <= 1.0) {
                return Err(DetectError::InvalidParam(format!("nu {nu} outside (0, 1]")));
            }
        }
        Ok(())
    }

    /// The one-class SVM's ν, defaulting to twice the contamination.
    pub fn effective_nu(&self) -> f64 {
        self.ocsvm.nu.unwrap_or((2.0 * self.contamination).min(1.0))
    }

    /// Same parameters with every detector seed replaced by one derived from
    /// `seed`.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut p = self.clone();
        p.iforest.seed = crate::seed::derive(seed, "iforest", 0);
        p.autoencoder.seed = crate::seed::derive(seed, "autoencoder", 0);
        p
    }
}

pub fn check_finite(x: &Array2<f64>) -> Result<(), DetectError> {
    for ((row, col), v) in x.indexed_iter() {
        if !v.is_finite() {
            return Err(DetectError::NonFinite { row, col });
        }
    }
    Ok(())
}

/// Per-column zero-mean, unit-variance transform; constant columns map to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl Standardizer {
    pub fn fit(x: &Array2<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mean = x.sum_axis(Axis(0)) / n;
        let std = x
            .axis_iter(Axis(1))
            .zip(mean.iter())
            .map(|(col, m)| (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt())
            .collect();
        Standardizer { mean, std }
    }

    pub fn transform(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for mut row in out.axis_iter_mut(Axis(0)) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = if self.std[j] > 0.0 { (*v - self.mean[j]) / self.std[j] } else { 0.0 };
            }
        }
        out
    }
}

/// Flags exactly `⌈contamination·n⌉` rows (capped at n): the highest scores,
/// ties going to the lower index.
pub fn flag_anomalies(scores: &[f64], contamination: f64) -> Vec<bool> {
    let n = scores.len();
    let k = ((contamination * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut flags = vec![false; n];
    for &i in &order[..k] {
        flags[i] = true;
    }
    flags
}

/// Fits and scores with one detector.
pub fn fit_score(detector: Detector, x: &Array2<f64>, params: &DetectorParams) -> Result<AnomalyScores, DetectError> {
    match detector {
        Detector::IsolationForest => iforest_fit_score(x, &params.iforest),
        Detector::Autoencoder => autoencoder_fit_score(x, &params.autoencoder),
        Detector::Ocsvm => {
            let p = OcsvmParams { nu: Some(params.effective_nu()), ..params.ocsvm.clone() };
            ocsvm_fit_score(x, &p)
        }
    }
}

/// `tx=<hex> score=<decimal>` lines.
pub fn write_scores(hashes: &[TxHash], scores: &AnomalyScores, path: &Path) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (h, s) in hashes.iter().zip(&scores.scores) {
        writeln!(w, "tx={h} score={s:?}")?;
    }
    w.flush()
}
