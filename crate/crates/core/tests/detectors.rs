use ndarray::Array2;
use origintrace::detect::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn normalizer_values() {
    assert_eq!(avg_path_normalizer(2), 1.0);
    assert!((avg_path_normalizer(256) - 10.244).abs() < 1e-3);
}

/// Depth at which `x` is isolated in one random tree grown on `pts`, with
/// the same depth cap and leaf correction as the forest.
fn random_path(pts: &[f64], x: f64, depth: usize, limit: usize, rng: &mut ChaCha8Rng) -> f64 {
    let lo = pts.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = pts.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if depth >= limit || pts.len() <= 1 || hi <= lo {
        return depth as f64 + avg_path_normalizer(pts.len());
    }
    let t = rng.random_range(lo..hi);
    let side: Vec<f64> = pts.iter().cloned().filter(|&p| (p < t) == (x < t)).collect();
    random_path(&side, x, depth + 1, limit, rng)
}

#[test]
fn one_dimensional_outlier_matches_brute_force_expectation() {
    let pts = [0.0, 0.01, -0.01, 0.02, -0.02, 0.005, -0.005, 0.015, -0.015, 10.0];
    let limit = 4; // ceil(log2 10)
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let oracle: Vec<f64> = pts
        .iter()
        .map(|&x| {
            let mean = (0..1000).map(|_| random_path(&pts, x, 0, limit, &mut rng)).sum::<f64>() / 1000.0;
            2f64.powf(-mean / avg_path_normalizer(pts.len()))
        })
        .collect();
    let x = Array2::from_shape_vec((10, 1), pts.to_vec()).unwrap();
    let forest = iforest_fit_score(&x, &IsolationForestParams { n_trees: 1000, subsample_size: 10, seed: 9 }).unwrap();
    let max_inlier = |s: &[f64]| s[..9].iter().cloned().fold(f64::MIN, f64::max);
    assert!(oracle[9] > max_inlier(&oracle));
    assert!(forest.scores[9] > max_inlier(&forest.scores));
    for (a, b) in forest.scores.iter().zip(&oracle) {
        assert!((a - b).abs() < 0.03, "forest {a} vs brute force {b}");
    }
}

fn cloud_with_outlier(seed: u64, dim: usize) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::from_shape_fn((101, dim), |_| rng.random_range(-1.0..1.0) * 3f64.sqrt());
    let dir = rng.random_range(0..dim);
    x[[100, dir]] = if rng.random_bool(0.5) { 10.0 } else { -10.0 };
    x
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    // The forest isolates the outlier inside its own fit; trees cannot
    // extrapolate past the training range. The autoencoder and the SVM are
    // fit on the inliers only and then score the outlier as a novelty. Inputs
    // are wider than the autoencoder's 2-unit bottleneck, as the real features
    // are.
    #[test]
    fn ten_sigma_outlier_ranks_first(seed in any::<u64>(), dim in 3usize..=4) {
        let x = cloud_with_outlier(seed, dim);
        let inliers = x.slice(ndarray::s![..100, ..]).to_owned();
        let params = DetectorParams::default().with_seed(seed);
        let ranked = [
            ("iforest", IsolationForest::fit(&x, &params.iforest).unwrap().score(&x).unwrap()),
            ("autoencoder", Autoencoder::fit(&inliers, &params.autoencoder).unwrap().score(&x).unwrap()),
            ("ocsvm", OneClassSvm::fit(&inliers, params.effective_nu(), &params.ocsvm).unwrap().score(&x).unwrap()),
        ];
        for (name, scores) in ranked {
            prop_assert!(scores.iter().all(|v| v.is_finite()));
            let top = (0..scores.len()).max_by(|&a, &b| scores[a].total_cmp(&scores[b])).unwrap();
            prop_assert_eq!(top, 100, "{} ranked row {} first", name, top);
        }
    }

    #[test]
    fn fit_score_is_deterministic(seed in any::<u64>()) {
        let x = cloud_with_outlier(seed, 4);
        let params = DetectorParams::default().with_seed(seed);
        for d in Detector::ALL {
            prop_assert_eq!(fit_score(d, &x, &params).unwrap(), fit_score(d, &x, &params).unwrap());
        }
    }

    #[test]
    fn flags_are_top_k(scores in proptest::collection::vec(-100.0f64..100.0, 1..300), c in 0.001f64..0.5) {
        let flags = flag_anomalies(&scores, c);
        let k = flags.iter().filter(|&&f| f).count();
        // ⌈c·n⌉ with a guard against products like 0.07·100 landing just above an integer
        prop_assert_eq!(k, ((c * scores.len() as f64 - 1e-9).ceil() as usize).min(scores.len()));
        let min_flagged = scores.iter().zip(&flags).filter(|p| *p.1).map(|p| *p.0).fold(f64::INFINITY, f64::min);
        let max_rest = scores.iter().zip(&flags).filter(|p| !*p.1).map(|p| *p.0).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(min_flagged >= max_rest);
    }
}
