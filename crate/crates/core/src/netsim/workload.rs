use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::seed;
use crate::txcluster::{Address, ChainTx};
use crate::wiremsg::{sha256d, Timestamp, TxHash};

use super::network::{NodeId, TARGET};
use super::params::{Schedule, Workload};
use super::{Network, SimError};

/// One transaction to inject: who originates it, when, and its chain-layer
/// shape.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTx {
    pub hash: TxHash,
    pub origin: NodeId,
    pub t0: Timestamp,
    pub chain: ChainTx,
}

/// A spending entity. Every spend draws on `main`, so all of a wallet's
/// transactions share one input address; change goes to a fresh address
/// that the next spend consumes.
struct Wallet {
    main: Address,
    change: Address,
}

struct Draft {
    origin: NodeId,
    t0: f64,
    wallet: usize,
    coinjoin: Option<Vec<usize>>,
}

fn random_address<R: Rng>(rng: &mut R) -> Address {
    let bytes: [u8; 20] = rng.random();
    Address::new(hex::encode(bytes)).expect("hex is a valid address")
}

fn txid(index: usize, chain: &ChainTx) -> TxHash {
    let mut buf = Vec::new();
    buf.extend_from_slice(&(index as u64).to_le_bytes());
    buf.extend_from_slice(&chain.first_seen.as_micros().to_le_bytes());
    for a in &chain.inputs {
        buf.extend_from_slice(a.as_str().as_bytes());
        buf.push(0);
    }
    for (a, v) in &chain.outputs {
        buf.extend_from_slice(a.as_str().as_bytes());
        buf.extend_from_slice(&v.to_le_bytes());
    }
    TxHash(sha256d(&buf))
}

/// Gaps of one burst: each `U(0.25, 1)·gap`.
fn burst_times<R: Rng>(start: f64, n: usize, gap: f64, rng: &mut R) -> Vec<f64> {
    let mut t = start;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 {
            t += gap * rng.random_range(0.25..=1.0);
        }
        out.push(t);
    }
    out
}

/// Draws the full transaction workload, sorted by origination time.
///
/// Background sessions arrive as a Poisson process whose mean transaction
/// rate is `background_tx_rate`; each session is one wallet on one random
/// background node. Target transactions follow the configured schedule, one
/// wallet per burst (or per transaction when uniform).
pub fn generate_transactions(network: &Network, workload: &Workload) -> Result<Vec<SimTx>, SimError> {
    let horizon = network.config.horizon;
    workload.validate(horizon)?;
    let w = &workload.wallets;
    let n_background = network.n_background();
    let mut rng = seed::rng(seed::derive(network.config.seed, "workload", 0));
    let mut wallets: Vec<Wallet> = Vec::new();
    let mut new_wallet = |rng: &mut rand_chacha::ChaCha8Rng| {
        wallets.push(Wallet { main: random_address(rng), change: random_address(rng) });
        wallets.len() - 1
    };
    let mut drafts: Vec<Draft> = Vec::new();

    // target bursts
    let mut target_wallets = Vec::new();
    match workload.schedule {
        Schedule::Uniform => {
            for _ in 0..workload.target_origin_count {
                let t0 = rng.random_range(0.0..horizon);
                let wallet = new_wallet(&mut rng);
                drafts.push(Draft { origin: TARGET, t0, wallet, coinjoin: None });
                target_wallets.push((wallet, t0, t0));
            }
        }
        Schedule::Clustered { n_clusters, intra_gap } => {
            let n = workload.target_origin_count;
            for c in 0..n_clusters.min(n) {
                let size = n / n_clusters + usize::from(c < n % n_clusters);
                let span = intra_gap * size.saturating_sub(1) as f64;
                let start = rng.random_range(0.0..(horizon - span).max(f64::MIN_POSITIVE));
                let wallet = new_wallet(&mut rng);
                let times = burst_times(start, size, intra_gap, &mut rng);
                let (first, last) = (times[0], times[times.len() - 1]);
                for t0 in times {
                    drafts.push(Draft { origin: TARGET, t0, wallet, coinjoin: None });
                }
                target_wallets.push((wallet, first, last));
            }
        }
    }

    // a target wallet occasionally also spends through someone else, far from its burst
    if n_background > 0 {
        for &(wallet, first, last) in &target_wallets {
            if !rng.random_bool(w.stray_prob) {
                continue;
            }
            let mut slots = Vec::new();
            if first - w.stray_separation > 0.0 {
                slots.push((0.0, first - w.stray_separation));
            }
            if last + w.stray_separation < horizon {
                slots.push((last + w.stray_separation, horizon));
            }
            if let Some(&(lo, hi)) = slots.choose(&mut rng) {
                let origin = rng.random_range(1..=n_background as NodeId);
                drafts.push(Draft { origin, t0: rng.random_range(lo..hi), wallet, coinjoin: None });
            }
        }
    }

    // background sessions
    let mean_burst = (2 + w.background_burst_max) as f64 / 2.0;
    let mean_session = (1.0 - w.background_burst_prob) + w.background_burst_prob * mean_burst;
    let session_rate = workload.background_tx_rate / mean_session;
    if session_rate > 0.0 && n_background > 0 {
        let gaps = Exp::new(session_rate).map_err(|e| SimError::Workload(e.to_string()))?;
        let mut t = gaps.sample(&mut rng);
        while t < horizon {
            let origin = rng.random_range(1..=n_background as NodeId);
            if rng.random_bool(w.coinjoin_fraction) {
                drafts.push(Draft { origin, t0: t, wallet: usize::MAX, coinjoin: Some(Vec::new()) });
            } else {
                let size = if rng.random_bool(w.background_burst_prob) {
                    rng.random_range(2..=w.background_burst_max)
                } else {
                    1
                };
                let wallet = new_wallet(&mut rng);
                for t0 in burst_times(t, size, w.background_intra_gap, &mut rng) {
                    if t0 < horizon {
                        drafts.push(Draft { origin, t0, wallet, coinjoin: None });
                    }
                }
            }
            t += gaps.sample(&mut rng);
        }
    }

    // mixes pull inputs from random existing wallets
    let n_wallets = wallets.len();
    for d in drafts.iter_mut().filter(|d| d.coinjoin.is_some()) {
        let width = w.coinjoin_width.min(n_wallets);
        d.coinjoin = Some(rand::seq::index::sample(&mut rng, n_wallets, width).into_vec());
    }

    drafts.sort_by(|a, b| a.t0.total_cmp(&b.t0));
    let mut out = Vec::with_capacity(drafts.len());
    for (index, d) in drafts.into_iter().enumerate() {
        let first_seen = Timestamp::from_secs_f64(d.t0);
        let chain = match &d.coinjoin {
            Some(members) => {
                let value: u64 = rng.random_range(1_000_000..=50_000_000);
                ChainTx {
                    txid: TxHash([0; 32]),
                    inputs: members.iter().map(|&m| wallets[m].main.clone()).collect(),
                    outputs: members.iter().map(|_| (random_address(&mut rng), value)).collect(),
                    first_seen,
                }
            }
            None => {
                let next_change = random_address(&mut rng);
                let wallet = &mut wallets[d.wallet];
                let inputs = vec![wallet.main.clone(), std::mem::replace(&mut wallet.change, next_change.clone())];
                let outputs = vec![
                    (random_address(&mut rng), rng.random_range(10_000..=100_000_000)),
                    (next_change, rng.random_range(10_000..=100_000_000)),
                ];
                ChainTx { txid: TxHash([0; 32]), inputs, outputs, first_seen }
            }
        };
        let mut chain = chain;
        chain.txid = txid(index, &chain);
        out.push(SimTx { hash: chain.txid, origin: d.origin, t0: first_seen, chain });
    }
    Ok(out)
}
