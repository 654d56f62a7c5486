use std::fs;
use std::path::{Path, PathBuf};

use origintrace_cli::{cell_file, run_cli};

fn small_cfg() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/small.cfg")
}

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["origintrace"];
    argv.extend_from_slice(args);
    run_cli(argv)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// `simulate` into `dir` with the small configuration.
fn simulate(dir: &Path, seed: &str) {
    assert_eq!(run(&["simulate", "--config", s(&small_cfg()), "--seed", seed, "--out", s(dir)]), 0);
}

#[test]
fn stochastic_subcommands_require_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["simulate", "--config", s(&small_cfg()), "--out", s(dir.path())]), 1);
    assert_eq!(run(&["pipeline", "--out", s(dir.path())]), 1);
    assert_eq!(run(&["crossnode", "--out", s(dir.path())]), 1);
    assert!(!dir.path().join("trace.txt").exists());
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["frobnicate"]), 1);
    assert_eq!(run(&["simulate", "--seed", "1", "--set", "netsim.no_such_key=3", "--out", s(dir.path())]), 1);
    assert_eq!(run(&["simulate", "--seed", "1", "--set", "netsim.n_nodes=many", "--out", s(dir.path())]), 1);
    assert_eq!(run(&["simulate", "--seed", "1", "--config", "/nonexistent/x.cfg", "--out", s(dir.path())]), 1);
    assert_eq!(run(&["--help"]), 0);
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(dir.path());
    assert_eq!(run(&["extract", "--trace", "/nonexistent/trace.txt", "--out", out]), 2);
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "ts=1.0 conn=0 peer=1 dir=Q msg=inv tx=00\n").unwrap();
    assert_eq!(run(&["extract", "--trace", s(&bad), "--out", out]), 2);
    assert_eq!(run(&["train", "--features", s(&bad), "--seed", "1", "--out", out]), 2);
}

#[test]
fn empty_intersection_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d, "2");
    assert_eq!(run(&["extract", "--trace", s(&d.join("trace.txt")), "--out", s(d)]), 0);
    let code = run(&[
        "train",
        "--features",
        s(&d.join("features.csv")),
        "--seed",
        "2",
        "--set",
        "detect.contamination=0.001",
        "--out",
        s(d),
    ]);
    assert_eq!(code, 3);
}

#[test]
fn eval_of_oracle_predictions_is_all_ones() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d, "4");
    let truth = fs::read_to_string(d.join("truth.txt")).unwrap();
    // tx=<hex> origin=<node>; node 0 is the observed node
    let oracle: String = truth
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let mut f = l.split_whitespace();
            let tx = f.next().unwrap();
            let own = f.next().unwrap() == "origin=0";
            format!("{tx} pred={} proba={}\n", own as u8, own as u8)
        })
        .collect();
    let preds = d.join("oracle.txt");
    fs::write(&preds, oracle).unwrap();
    assert_eq!(run(&["eval", "--predictions", s(&preds), "--truth", s(&d.join("truth.txt")), "--out", s(d)]), 0);
    let report = fs::read_to_string(d.join("report.txt")).unwrap();
    assert!(
        report.contains("method=ntssl cov=1.00 recall=1.000000 fpr=0.000000 precision=1.000000 f1=1.000000 runs=1"),
        "{report}"
    );
}

#[test]
fn pipeline_is_reproducible_and_seed_sensitive() {
    let cfg = small_cfg();
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    for (dir, seed) in dirs.iter().zip(["7", "7", "8"]) {
        assert_eq!(run(&["pipeline", "--config", s(&cfg), "--seed", seed, "--out", s(dir.path())]), 0);
    }
    let files = origintrace_cli::pipeline_files(Path::new(""), &[0.5, 1.0], 1);
    for f in &files {
        let a = fs::read(dirs[0].path().join(f)).unwrap();
        let b = fs::read(dirs[1].path().join(f)).unwrap();
        assert!(a == b, "{} differs between identical runs", f.display());
    }
    assert_ne!(fs::read(dirs[0].path().join("trace.txt")).unwrap(), fs::read(dirs[2].path().join("trace.txt")).unwrap());
}

#[test]
fn manual_composition_equals_pipeline() {
    let cfg = small_cfg();
    let seed = "5";
    let pipe = tempfile::tempdir().unwrap();
    assert_eq!(run(&["pipeline", "--config", s(&cfg), "--seed", seed, "--out", s(pipe.path())]), 0);

    let work = tempfile::tempdir().unwrap();
    let w = work.path();
    simulate(w, seed);
    for f in ["trace.txt", "truth.txt", "chain.txt"] {
        assert_eq!(fs::read(w.join(f)).unwrap(), fs::read(pipe.path().join(f)).unwrap(), "{f}");
    }
    assert_eq!(run(&["cluster", "--chain", s(&w.join("chain.txt")), "--out", s(w)]), 0);
    assert_eq!(fs::read(w.join("clusters.txt")).unwrap(), fs::read(pipe.path().join("clusters.txt")).unwrap());

    let truth = w.join("truth.txt");
    let mut fold_preds = Vec::new();
    let mut fold_plus = Vec::new();
    for fold in 0..5 {
        let fd = w.join(format!("fold{fold}"));
        let fold_s = fold.to_string();
        let trace = w.join(cell_file("trace", 1.0, 0));
        let common = ["--fold", fold_s.as_str(), "--repeat", "0", "--seed", seed, "--config", s(&cfg)];
        let mut args = vec!["extract", "--trace", s(&trace), "--truth", s(&truth), "--folds", "5", "--out", s(&fd)];
        args.extend_from_slice(&common);
        assert_eq!(run(&args), 0);
        let train = fd.join(format!("train_f{fold}.csv"));
        let test = fd.join(format!("test_f{fold}.csv"));
        let mut args = vec!["train", "--features", s(&train), "--out", s(&fd)];
        args.extend_from_slice(&common);
        assert_eq!(run(&args), 0);
        let model = fd.join("model.txt");
        let mut args =
            vec!["predict", "--model", s(&model), "--features", s(&test), "--train-features", s(&train), "--out", s(&fd)];
        args.extend_from_slice(&common);
        assert_eq!(run(&args), 0);
        fold_preds.push(fd.join("predictions.txt"));
    }

    // pooled fold predictions are the pipeline's cell predictions
    let mut manual: Vec<String> = fold_preds.iter().flat_map(|p| lines(p)).collect();
    let mut piped = lines(&pipe.path().join(cell_file("predictions", 1.0, 0)));
    manual.sort();
    piped.sort();
    assert_eq!(manual, piped);

    // NTSSL+ corrects the pooled predictions, then scores each fold
    let pooled = w.join("pooled.txt");
    fs::write(&pooled, manual.join("\n") + "\n").unwrap();
    assert_eq!(run(&["collab", "--predictions", s(&pooled), "--clusters", s(&w.join("clusters.txt")), "--out", s(w)]), 0);
    let corrected: std::collections::HashMap<String, String> = lines(&w.join("predictions_plus.txt"))
        .into_iter()
        .map(|l| (l.split_whitespace().next().unwrap().to_string(), l))
        .collect();
    for (fold, p) in fold_preds.iter().enumerate() {
        let plus = w.join(format!("fold{fold}")).join("predictions_plus.txt");
        let body: Vec<String> =
            lines(p).iter().map(|l| corrected[l.split_whitespace().next().unwrap()].clone()).collect();
        fs::write(&plus, body.join("\n") + "\n").unwrap();
        fold_plus.push(plus);
    }

    let report_of = |method: &str, files: &[PathBuf]| -> String {
        let out = w.join(format!("eval_{method}"));
        let mut args = vec!["eval", "--method", method, "--coverage", "1.0", "--truth", s(&truth), "--out", s(&out)];
        args.push("--predictions");
        args.extend(files.iter().map(|p| s(p)));
        assert_eq!(run(&args), 0);
        fs::read_to_string(out.join("report.txt")).unwrap().lines().next().unwrap().to_string()
    };
    let piped_report = fs::read_to_string(pipe.path().join("report.txt")).unwrap();
    for (method, files) in [("ntssl", &fold_preds), ("ntssl_plus", &fold_plus)] {
        let line = report_of(method, files);
        assert!(piped_report.lines().any(|l| l == line), "{line} not in\n{piped_report}");
    }
}

fn lines(p: &Path) -> Vec<String> {
    fs::read_to_string(p).unwrap().lines().filter(|l| !l.trim().is_empty()).map(str::to_string).collect()
}

#[test]
fn detect_and_crossnode_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d, "3");
    assert_eq!(run(&["extract", "--trace", s(&d.join("trace.txt")), "--out", s(d)]), 0);
    assert_eq!(run(&["detect", "--features", s(&d.join("features.csv")), "--seed", "3", "--out", s(d)]), 0);
    for name in ["iforest", "autoencoder", "ocsvm"] {
        let scores = fs::read_to_string(d.join(format!("scores_{name}.txt"))).unwrap();
        assert_eq!(scores.lines().count(), lines(&d.join("features.csv")).len() - 1);
    }
    assert_eq!(run(&["detect", "--features", s(&d.join("features.csv")), "--detector", "lof", "--seed", "3"]), 1);
    assert_eq!(run(&["crossnode", "--config", s(&small_cfg()), "--seed", "3", "--out", s(d)]), 0);
    let text = fs::read_to_string(d.join("crossnode.txt")).unwrap();
    assert!(text.contains("scenario=in_node") && text.contains("scenario=cross_node"), "{text}");
}
