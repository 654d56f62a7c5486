use std::collections::{HashMap, VecDeque};

use ndarray::{Array2, ArrayView1};

use super::{check_finite, AnomalyScores, DetectError, Detector, Standardizer};

#[derive(Debug, Clone, PartialEq)]
pub struct OcsvmParams {
    /// Upper bound on the outlier fraction; when unset, twice the contamination.
    pub nu: Option<f64>,
    /// RBF width; when unset, `1 / (d · variance)` of the standardised data.
    pub gamma: Option<f64>,
    /// Stopping threshold on the maximal KKT violation.
    pub tolerance: f64,
    pub max_iter: usize,
    /// Kernel rows kept in memory.
    pub cache_rows: usize,
}

impl Default for OcsvmParams {
    fn default() -> Self {
        OcsvmParams { nu: None, gamma: None, tolerance: 1e-3, max_iter: 1_000_000, cache_rows: 2048 }
    }
}

/// `exp(−γ‖u − v‖²)`.
pub fn rbf_kernel(u: ArrayView1<f64>, v: ArrayView1<f64>, gamma: f64) -> f64 {
    let d2: f64 = u.iter().zip(v.iter()).map(|(a, b)| (a - b).powi(2)).sum();
    (-gamma * d2).exp()
}

struct KernelRows<'a> {
    x: &'a Array2<f64>,
    gamma: f64,
    cache: HashMap<usize, Vec<f64>>,
    order: VecDeque<usize>,
    capacity: usize,
}

impl<'a> KernelRows<'a> {
    fn row(&mut self, i: usize) -> &[f64] {
        if !self.cache.contains_key(&i) {
            if self.cache.len() >= self.capacity.max(2) {
                if let Some(old) = self.order.pop_front() {
                    self.cache.remove(&old);
                }
            }
            let xi = self.x.row(i);
            let row = self.x.rows().into_iter().map(|xj| rbf_kernel(xi, xj, self.gamma)).collect();
            self.cache.insert(i, row);
            self.order.push_back(i);
        }
        &self.cache[&i]
    }
}

/// ν one-class SVM with an RBF kernel, trained by sequential minimal
/// optimisation on the dual
/// `min ½ αᵀKα  s.t. 0 ≤ αᵢ ≤ 1, Σαᵢ = ν·n`.
#[derive(Debug, Clone, PartialEq)]
pub struct OneClassSvm {
    scaler: Standardizer,
    support: Array2<f64>,
    alpha: Vec<f64>,
    pub rho: f64,
    pub gamma: f64,
    pub iterations: usize,
}

impl OneClassSvm {
    pub fn fit(x: &Array2<f64>, nu: f64, params: &OcsvmParams) -> Result<Self, DetectError> {
        check_finite(x)?;
        let n = x.nrows();
        if n == 0 {
            return Err(DetectError::TooFewRows { n, min: 1 });
        }
        if !(nu > 0.0 && nu <= 1.0) {
            return Err(DetectError::InvalidParam(format!("nu {nu} outside (0, 1]")));
        }
        let scaler = Standardizer::fit(x);
        let z = scaler.transform(x);
        let gamma = match params.gamma {
            Some(g) if g > 0.0 => g,
            Some(g) => return Err(DetectError::InvalidParam(format!("gamma {g} must be positive"))),
            None => {
                let m = z.mean().unwrap_or(0.0);
                let var = z.iter().map(|v| (v - m).powi(2)).sum::<f64>() / z.len() as f64;
                if var > 0.0 {
                    1.0 / (z.ncols() as f64 * var)
                } else {
                    1.0
                }
            }
        };

        // feasible start: the first ⌊νn⌋ at the bound, one fractional
        let total = nu * n as f64;
        let mut alpha = vec![0.0; n];
        let full = (total.floor() as usize).min(n);
        alpha[..full].iter_mut().for_each(|a| *a = 1.0);
        if full < n {
            alpha[full] = total - full as f64;
        }
        let mut rows = KernelRows { x: &z, gamma, cache: HashMap::new(), order: VecDeque::new(), capacity: params.cache_rows };
        let mut grad = vec![0.0; n];
        for (i, &a) in alpha.iter().enumerate() {
            if a > 0.0 {
                let ki = rows.row(i).to_vec();
                for (g, k) in grad.iter_mut().zip(&ki) {
                    *g += a * k;
                }
            }
        }

        const TAU: f64 = 1e-12;
        let mut iterations = 0;
        loop {
            // i: most violating index that can still grow
            let mut g_max = f64::NEG_INFINITY;
            let mut i = usize::MAX;
            for t in 0..n {
                if alpha[t] < 1.0 && -grad[t] >= g_max {
                    if -grad[t] > g_max || i == usize::MAX {
                        i = t;
                    }
                    g_max = -grad[t];
                }
            }
            // j: second-order choice among indices that can shrink
            let mut g_max2 = f64::NEG_INFINITY;
            let mut j = usize::MAX;
            let mut best = f64::INFINITY;
            if i != usize::MAX {
                let ki = rows.row(i).to_vec();
                for t in 0..n {
                    if alpha[t] > 0.0 {
                        g_max2 = g_max2.max(grad[t]);
                        let b = g_max + grad[t];
                        if b > 0.0 {
                            let a = (2.0 - 2.0 * ki[t]).max(TAU);
                            let obj = -(b * b) / a;
                            if obj < best {
                                best = obj;
                                j = t;
                            }
                        }
                    }
                }
            }
            let gap = g_max + g_max2;
            if !(gap >= params.tolerance) || j == usize::MAX {
                break;
            }
            if iterations >= params.max_iter {
                return Err(DetectError::NotConverged { iterations, gap });
            }
            iterations += 1;

            let ki = rows.row(i).to_vec();
            let kj = rows.row(j).to_vec();
            let quad = (2.0 - 2.0 * ki[j]).max(TAU);
            let (old_i, old_j) = (alpha[i], alpha[j]);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = old_i + old_j;
            let mut ai = old_i - delta;
            let mut aj = old_j + delta;
            if sum > 1.0 {
                if ai > 1.0 {
                    ai = 1.0;
                    aj = sum - 1.0;
                }
                if aj > 1.0 {
                    aj = 1.0;
                    ai = sum - 1.0;
                }
            } else {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = sum;
                }
                if ai < 0.0 {
                    ai = 0.0;
                    aj = sum;
                }
            }
            alpha[i] = ai;
            alpha[j] = aj;
            let (di, dj) = (ai - old_i, aj - old_j);
            for t in 0..n {
                grad[t] += ki[t] * di + kj[t] * dj;
            }
        }

        // ρ from free vectors, else the midpoint of the feasible interval
        let (mut ub, mut lb, mut sum_free, mut n_free) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
        for t in 0..n {
            if alpha[t] >= 1.0 {
                lb = lb.max(grad[t]);
            } else if alpha[t] <= 0.0 {
                ub = ub.min(grad[t]);
            } else {
                sum_free += grad[t];
                n_free += 1;
            }
        }
        let rho = if n_free > 0 { sum_free / n_free as f64 } else { (ub + lb) / 2.0 };

        let sv: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0).collect();
        let support = z.select(ndarray::Axis(0), &sv);
        let alpha = sv.iter().map(|&t| alpha[t]).collect();
        Ok(OneClassSvm { scaler, support, alpha, rho, gamma, iterations })
    }

    /// `ρ − Σ αᵢ k(xᵢ, x)`: positive outside the learned support.
    pub fn score(&self, x: &Array2<f64>) -> Result<Vec<f64>, DetectError> {
        check_finite(x)?;
        if x.ncols() != self.support.ncols() {
            return Err(DetectError::InvalidParam(format!("expected {} columns, got {}", self.support.ncols(), x.ncols())));
        }
        let z = self.scaler.transform(x);
        Ok(z
            .rows()
            .into_iter()
            .map(|row| {
                let f: f64 = self
                    .support
                    .rows()
                    .into_iter()
                    .zip(&self.alpha)
                    .map(|(s, a)| a * rbf_kernel(s, row, self.gamma))
                    .sum();
                self.rho - f
            })
            .collect())
    }
}

/// Fits with `params.nu` (0.02 when unset) and scores the training rows.
pub fn ocsvm_fit_score(x: &Array2<f64>, params: &OcsvmParams) -> Result<AnomalyScores, DetectError> {
    let model = OneClassSvm::fit(x, params.nu.unwrap_or(0.02), params)?;
    Ok(AnomalyScores { detector: Detector::Ocsvm, scores: model.score(x)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn kernel_values() {
        let u = array![0.3, -1.0];
        assert_eq!(rbf_kernel(u.view(), u.view(), 0.7), 1.0);
        let (a, b) = (array![0.0, 0.0], array![1.0, 1.0]);
        assert!((rbf_kernel(a.view(), b.view(), 0.5) - (-1f64).exp()).abs() < 1e-12);
        assert!((rbf_kernel(a.view(), b.view(), 0.5) - 0.3679).abs() < 1e-4);
    }

    #[test]
    fn identical_points_score_equally() {
        let x = array![[1.0, 2.0], [1.0, 2.0]];
        let s = ocsvm_fit_score(&x, &OcsvmParams { nu: Some(0.5), ..Default::default() }).unwrap().scores;
        assert_eq!(s[0], s[1]);
    }

    #[test]
    fn dual_constraints_hold() {
        let mut rng = crate::seed::rng(3);
        use rand::Rng;
        let x = Array2::from_shape_fn((150, 3), |_| rng.random_range(-2.0..2.0));
        let m = OneClassSvm::fit(&x, 0.1, &OcsvmParams::default()).unwrap();
        let total: f64 = m.alpha.iter().sum();
        assert!((total - 15.0).abs() < 1e-9);
        assert!(m.alpha.iter().all(|&a| (0.0..=1.0).contains(&a)));
        // about ν·n training points fall outside
        let outside = m.score(&x).unwrap().iter().filter(|&&s| s > 1e-6).count();
        assert!(outside <= 20, "{outside}");
    }

    #[test]
    fn iteration_cap_reports_gap() {
        let mut rng = crate::seed::rng(4);
        use rand::Rng;
        let x = Array2::from_shape_fn((100, 2), |_| rng.random_range(-2.0..2.0));
        match OneClassSvm::fit(&x, 0.3, &OcsvmParams { max_iter: 1, tolerance: 1e-12, ..Default::default() }) {
            Err(DetectError::NotConverged { iterations: 1, gap }) => assert!(gap > 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }
}
