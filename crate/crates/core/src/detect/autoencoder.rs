use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::seed;

use super::{check_finite, AnomalyScores, DetectError, Detector, Standardizer};

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderParams {
    pub hidden_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Independent initialisations; the one with the lowest training loss
    /// is kept. Guards against runs that stall in a poor minimum.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for AutoencoderParams {
    fn default() -> Self {
        AutoencoderParams { hidden_dim: 2, epochs: 200, learning_rate: 0.01, restarts: 3, seed: 0 }
    }
}

/// Mean squared difference between a row and its reconstruction.
pub fn mse(x: ArrayView1<f64>, reconstruction: ArrayView1<f64>) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().zip(reconstruction.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64
}

/// `d → hidden (tanh) → d (linear)` network trained on standardised rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    scaler: Standardizer,
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
}

fn xavier<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-a..=a))
}

impl Autoencoder {
    fn forward(&self, z: ArrayView1<f64>) -> (Array1<f64>, Array1<f64>) {
        let h = (self.w1.dot(&z) + &self.b1).mapv(f64::tanh);
        let out = self.w2.dot(&h) + &self.b2;
        (h, out)
    }

    /// Plain per-sample gradient descent on squared reconstruction loss,
    /// visiting rows in a fresh random order each epoch. Restart 0 draws from
    /// `params.seed`, restart `r` from a seed derived from it; the network
    /// with the lowest mean training error wins, earliest on ties.
    pub fn fit(x: &Array2<f64>, params: &AutoencoderParams) -> Result<Self, DetectError> {
        check_finite(x)?;
        if x.nrows() == 0 {
            return Err(DetectError::TooFewRows { n: 0, min: 1 });
        }
        if params.hidden_dim == 0 || !(params.learning_rate > 0.0) || params.restarts == 0 {
            return Err(DetectError::InvalidParam(
                "autoencoder needs hidden_dim ≥ 1, restarts ≥ 1 and a positive learning rate".into(),
            ));
        }
        let scaler = Standardizer::fit(x);
        let z = scaler.transform(x);
        let mut best: Option<(f64, Autoencoder)> = None;
        for r in 0..params.restarts {
            let s = if r == 0 { params.seed } else { seed::derive(params.seed, "ae-restart", r as u64) };
            let net = Self::train(&z, scaler.clone(), params, s);
            let loss = z.rows().into_iter().map(|row| mse(row, net.forward(row).1.view())).sum::<f64>();
            if best.as_ref().is_none_or(|(l, _)| loss < *l) {
                best = Some((loss, net));
            }
        }
        Ok(best.expect("restarts ≥ 1").1)
    }

    fn train(z: &Array2<f64>, scaler: Standardizer, params: &AutoencoderParams, seed: u64) -> Self {
        let d = z.ncols();
        let mut rng = seed::rng(seed);
        let mut net = Autoencoder {
            scaler,
            w1: xavier(params.hidden_dim, d, &mut rng),
            b1: Array1::zeros(params.hidden_dim),
            w2: xavier(d, params.hidden_dim, &mut rng),
            b2: Array1::zeros(d),
        };
        let lr = params.learning_rate;
        let k = params.hidden_dim;
        let mut order: Vec<usize> = (0..z.nrows()).collect();
        let (mut h, mut out, mut g_out, mut g_h) = (vec![0.0; k], vec![0.0; d], vec![0.0; d], vec![0.0; k]);
        for _ in 0..params.epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                let row = z.row(i);
                for a in 0..k {
                    let mut s = net.b1[a];
                    for j in 0..d {
                        s += net.w1[[a, j]] * row[j];
                    }
                    h[a] = s.tanh();
                }
                for j in 0..d {
                    let mut s = net.b2[j];
                    for a in 0..k {
                        s += net.w2[[j, a]] * h[a];
                    }
                    out[j] = s;
                    // dL/dout for L = mean((out − x)²)
                    g_out[j] = 2.0 * (out[j] - row[j]) / d as f64;
                }
                for a in 0..k {
                    let mut s = 0.0;
                    for j in 0..d {
                        s += net.w2[[j, a]] * g_out[j];
                    }
                    g_h[a] = s * (1.0 - h[a] * h[a]);
                }
                for j in 0..d {
                    for a in 0..k {
                        net.w2[[j, a]] -= lr * g_out[j] * h[a];
                    }
                    net.b2[j] -= lr * g_out[j];
                }
                for a in 0..k {
                    for j in 0..d {
                        net.w1[[a, j]] -= lr * g_h[a] * row[j];
                    }
                    net.b1[a] -= lr * g_h[a];
                }
            }
        }
        net
    }

    /// Per-row reconstruction error in standardised units.
    pub fn score(&self, x: &Array2<f64>) -> Result<Vec<f64>, DetectError> {
        check_finite(x)?;
        if x.ncols() != self.b2.len() {
            return Err(DetectError::InvalidParam(format!("expected {} columns, got {}", self.b2.len(), x.ncols())));
        }
        let z = self.scaler.transform(x);
        Ok(z.rows().into_iter().map(|row| mse(row, self.forward(row).1.view())).collect())
    }
}

pub fn autoencoder_fit_score(x: &Array2<f64>, params: &AutoencoderParams) -> Result<AnomalyScores, DetectError> {
    let net = Autoencoder::fit(x, params)?;
    Ok(AnomalyScores { detector: Detector::Autoencoder, scores: net.score(x)? })
}
