use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use origintrace::detect::{self, write_scores, Detector};
use origintrace::evalkit::{
    self, cell_seed, confusion_against, crossnode_eval, fold_seed, metrics, split_fold, stratified_folds, truth_labels,
    Method, Metrics, MetricsReport,
};
use origintrace::features::{aggregate, read_features, write_features, FeatureMatrix};
use origintrace::gbdt::GbdtModel;
use origintrace::netsim::{self, build_network, read_truth, subsample_links, write_truth, GroundTruth, SimOutput};
use origintrace::ntssl::{self, read_predictions, write_predictions, Prediction};
use origintrace::seed;
use origintrace::txcluster::{cluster_transactions, collab_correct, read_chain, read_clusters, write_chain, write_clusters};
use origintrace::wiremsg::{read_trace, write_trace};

use crate::settings::Settings;
use crate::{Cli, CliError, Command};

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn pipeline(e: impl std::fmt::Display) -> CliError {
    CliError::Pipeline(e.to_string())
}

/// Coverage as a whole percentage, for file names.
pub fn pct(coverage: f64) -> u32 {
    (coverage * 100.0).round() as u32
}

/// `<stem>_c<pct>_r<repeat>.txt`
pub fn cell_file(stem: &str, coverage: f64, repeat: usize) -> String {
    format!("{stem}_c{}_r{repeat}.txt", pct(coverage))
}

fn eval_error(e: evalkit::EvalError) -> CliError {
    use evalkit::EvalError::*;
    match e {
        TxMismatch { .. } | LengthMismatch { .. } | Malformed { .. } | Io(_) => data(e),
        InvalidParam(_) => CliError::Usage(e.to_string()),
        _ => pipeline(e),
    }
}

fn simulate_all(settings: &Settings) -> Result<SimOutput, CliError> {
    let network = build_network(&settings.network).map_err(pipeline)?;
    netsim::run(&network, &settings.workload).map_err(pipeline)
}

fn write_sim(out: &Path, sim: &SimOutput) -> Result<(), CliError> {
    write_trace(&sim.traces.records, &out.join("trace.txt")).map_err(data)?;
    write_truth(&sim.truth, &out.join("truth.txt")).map_err(data)?;
    write_chain(&sim.chain, &out.join("chain.txt")).map_err(data)?;
    Ok(())
}

fn load_features(path: &Path) -> Result<FeatureMatrix, CliError> {
    read_features(path).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn load_truth(path: &Path) -> Result<GroundTruth, CliError> {
    read_truth(path).map_err(|e| data(format!("{}: {e}", path.display())))
}

/// Pipeline seed for `train`/`predict`: the fold's seed when a fold is
/// named, so that manual runs reproduce `pipeline`.
fn stage_seed(seed: u64, fold: Option<usize>, repeat: usize) -> u64 {
    match fold {
        Some(f) => fold_seed(cell_seed(seed, repeat), f),
        None => seed,
    }
}

pub(crate) fn dispatch(cli: &Cli, settings: &Settings, seed: u64) -> Result<(), CliError> {
    let out = cli.out.as_path();
    match &cli.command {
        Command::Simulate { repeat } => {
            let sim = simulate_all(settings)?;
            write_sim(out, &sim)?;
            for &c in &settings.sweep.coverages {
                let sub = subsample_links(&sim.traces, c, cell_seed(seed, *repeat), settings.sweep.include_outbound)
                    .map_err(pipeline)?;
                write_trace(&sub.records, &out.join(cell_file("trace", c, *repeat))).map_err(data)?;
            }
            println!(
                "{} transactions, {} target-originated, {} trace records",
                sim.truth.len(),
                sim.truth.target_count(),
                sim.traces.records.len()
            );
        }
        Command::Extract { trace, truth, folds, fold, repeat } => {
            let records = read_trace(trace).map_err(|e| data(format!("{}: {e}", trace.display())))?;
            let features = aggregate(&records);
            match folds {
                None => write_features(&features, &out.join("features.csv")).map_err(data)?,
                Some(k) => {
                    let truth = load_truth(truth.as_deref().expect("clap enforces --truth"))?;
                    if *fold >= *k {
                        return Err(CliError::Usage(format!("fold {fold} out of range for {k} folds")));
                    }
                    let labels = truth_labels(&features, &truth);
                    let assignment = stratified_folds(&labels, *k, cell_seed(seed, *repeat)).map_err(eval_error)?;
                    let (train, test) = split_fold(&assignment, *fold);
                    write_features(&features.select(&train), &out.join(format!("train_f{fold}.csv"))).map_err(data)?;
                    write_features(&features.select(&test), &out.join(format!("test_f{fold}.csv"))).map_err(data)?;
                }
            }
            println!("{} feature rows", features.len());
        }
        Command::Detect { features, detector } => {
            let x = load_features(features)?.strip_score();
            let detectors: Vec<Detector> = if detector == "all" {
                Detector::ALL.to_vec()
            } else {
                vec![detector.parse().map_err(CliError::Usage)?]
            };
            let params = settings.ntssl.detect.with_seed(seed::derive(seed, "phase1", 0));
            let arr = x.to_array();
            for d in detectors {
                let scores = detect::fit_score(d, &arr, &params).map_err(pipeline)?;
                write_scores(&x.hashes(), &scores, &out.join(format!("scores_{}.txt", d.name()))).map_err(data)?;
                let flagged = detect::flag_anomalies(&scores.scores, params.contamination).iter().filter(|&&f| f).count();
                println!("{}: {flagged} of {} rows flagged", d.name(), x.len());
            }
        }
        Command::Train { features, fold, repeat } => {
            let train = load_features(features)?;
            let params = ntssl::NtsslParams { seed: stage_seed(seed, *fold, *repeat), ..settings.ntssl.clone() };
            let trained = ntssl::train_ntssl(&train, &params).map_err(pipeline)?;
            trained.model.save(&out.join("model.txt")).map_err(data)?;
            println!(
                "initial positives {}, expanded positives {} of {}",
                trained.initial.positive.len(),
                trained.expanded.positive.len(),
                train.len()
            );
        }
        Command::Predict { model, features, train_features, fold, repeat } => {
            let model = GbdtModel::load(model).map_err(|e| data(format!("{}: {e}", model.display())))?;
            let test = load_features(features)?;
            let train = train_features.as_deref().map(load_features).transpose()?;
            let params = ntssl::NtsslParams { seed: stage_seed(seed, *fold, *repeat), ..settings.ntssl.clone() };
            let test5 = ntssl::score_test(&test, train.as_ref(), &params).map_err(pipeline)?;
            let (pred, proba) =
                ntssl::predict_scored(&model, &test5, params.gbdt.decision_threshold).map_err(pipeline)?;
            let preds: Vec<Prediction> = test5
                .hashes()
                .into_iter()
                .zip(pred.into_iter().zip(proba))
                .map(|(tx, (pred, proba))| Prediction { tx, pred, proba })
                .collect();
            write_predictions(&preds, &out.join("predictions.txt")).map_err(data)?;
            println!("{} of {} rows predicted originated", preds.iter().filter(|p| p.pred).count(), preds.len());
        }
        Command::Cluster { chain } => {
            let txs = read_chain(chain).map_err(|e| data(format!("{}: {e}", chain.display())))?;
            let clusters: Vec<_> = cluster_transactions(&txs, &settings.cluster).iter().map(|c| c.membership()).collect();
            write_clusters(&clusters, &out.join("clusters.txt")).map_err(data)?;
            let largest = clusters.iter().map(|c| c.members.len()).max().unwrap_or(0);
            println!("{} clusters, largest {largest}", clusters.len());
        }
        Command::Collab { predictions, clusters } => {
            let preds = read_predictions(predictions).map_err(|e| data(format!("{}: {e}", predictions.display())))?;
            let clusters = read_clusters(clusters).map_err(|e| data(format!("{}: {e}", clusters.display())))?;
            let corrected = correct(&preds, &clusters);
            let flips = preds.iter().zip(&corrected).filter(|(a, b)| a.pred != b.pred).count();
            write_predictions(&corrected, &out.join("predictions_plus.txt")).map_err(data)?;
            println!("{flips} predictions changed");
        }
        Command::Eval { predictions, truth, method, coverage } => {
            let truth = load_truth(truth)?;
            let method: Method = method.parse().map_err(CliError::Usage)?;
            let mut runs = Vec::new();
            for p in predictions {
                let preds = read_predictions(p).map_err(|e| data(format!("{}: {e}", p.display())))?;
                runs.push(metrics(&confusion_against(&preds, &truth).map_err(eval_error)?));
            }
            let report = MetricsReport {
                method,
                coverage: *coverage,
                metrics: Metrics::mean(&runs),
                runs: runs.len(),
                seeds: Vec::new(),
            };
            evalkit::write_report(&out.join("report.txt"), &[], std::slice::from_ref(&report)).map_err(eval_error)?;
            println!("{report}");
        }
        Command::Pipeline => run_pipeline(out, settings)?,
        Command::Crossnode { coverage } => run_crossnode(out, settings, seed, *coverage)?,
    }
    Ok(())
}

fn correct(preds: &[Prediction], clusters: &[origintrace::txcluster::ClusterMembership]) -> Vec<Prediction> {
    let map: BTreeMap<_, _> = preds.iter().map(|p| (p.tx, p.pred)).collect();
    let fixed = collab_correct(&map, clusters);
    preds.iter().map(|p| Prediction { pred: fixed[&p.tx], ..*p }).collect()
}

fn run_pipeline(out: &Path, settings: &Settings) -> Result<(), CliError> {
    let sim = simulate_all(settings)?;
    write_sim(out, &sim)?;
    let clusters: Vec<_> = cluster_transactions(&sim.chain, &settings.cluster).iter().map(|c| c.membership()).collect();
    write_clusters(&clusters, &out.join("clusters.txt")).map_err(data)?;
    let result =
        evalkit::coverage_sweep(&sim.traces, &sim.truth, Some(&clusters), &settings.sweep, &settings.ntssl)
            .map_err(eval_error)?;
    for cell in &result.cells {
        write_predictions(&cell.predictions, &out.join(cell_file("predictions", cell.coverage, cell.repeat)))
            .map_err(data)?;
        if let Some(c) = &cell.corrected {
            write_predictions(c, &out.join(cell_file("predictions_plus", cell.coverage, cell.repeat))).map_err(data)?;
        }
    }
    let header = vec![settings.sweep.protocol_line()];
    evalkit::write_report(&out.join("report.txt"), &header, &result.reports).map_err(eval_error)?;
    print!("{}", evalkit::format_report(&header, &result.reports));
    Ok(())
}

fn node_features(sim: &SimOutput, coverage: f64, seed: u64, include_outbound: bool) -> Result<(FeatureMatrix, Vec<bool>), CliError> {
    let sub = subsample_links(&sim.traces, coverage, seed, include_outbound).map_err(pipeline)?;
    let f = aggregate(&sub.records);
    let labels = truth_labels(&f, &sim.truth);
    Ok((f, labels))
}

fn run_crossnode(out: &Path, settings: &Settings, seed: u64, coverage: f64) -> Result<(), CliError> {
    let a = simulate_all(settings)?;
    let net_b = build_network(&settings.node_b_network).map_err(pipeline)?;
    let b = netsim::run(&net_b, &settings.node_b_workload).map_err(pipeline)?;
    let subsample_seed = cell_seed(seed, 0);
    let (fa, la) = node_features(&a, coverage, subsample_seed, settings.sweep.include_outbound)?;
    let (fb, lb) = node_features(&b, coverage, subsample_seed, settings.sweep.include_outbound)?;
    let r = crossnode_eval(&fa, &la, &fb, &lb, settings.sweep.folds, subsample_seed, &settings.ntssl.gbdt)
        .map_err(eval_error)?;
    let mut text = format!(
        "#crossnode node_a_inbound={} node_b_inbound={} folds={}\n",
        settings.network.target_inbound_capacity, settings.node_b_network.target_inbound_capacity, settings.sweep.folds
    );
    for line in r.report_lines(coverage) {
        text.push_str(&line);
        text.push('\n');
    }
    std::fs::write(out.join("crossnode.txt"), &text).map_err(data)?;
    print!("{text}");
    Ok(())
}

/// Paths written by `pipeline` into `out`, for callers that inspect them.
pub fn pipeline_files(out: &Path, coverages: &[f64], repeats: usize) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> =
        ["trace.txt", "truth.txt", "chain.txt", "clusters.txt", "report.txt"].iter().map(|f| out.join(f)).collect();
    for &c in coverages {
        for r in 0..repeats {
            v.push(out.join(cell_file("predictions", c, r)));
            v.push(out.join(cell_file("predictions_plus", c, r)));
        }
    }
    v
}
