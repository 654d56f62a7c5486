//! Transaction-layer clustering and the majority-vote correction of
//! network-layer predictions.
//!
//! The clustering runs in three steps: drop equal-output mixing transactions,
//! union transactions that spend from a common address (transitively), then
//! cut each wallet cluster into sessions wherever consecutive first-seen times
//! are more than `W` seconds apart. Members of one session are presumed to have
//! entered the network through the same full node.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use petgraph::unionfind::UnionFind;
use thiserror::Error;

use crate::config::{Config, ConfigError};
use crate::wiremsg::{Timestamp, TxHash};

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Opaque address string. Must be non-empty and free of whitespace, `,`, `:`
/// and `=` so it can live in the line formats.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address(String);

impl Address {
    pub fn new(s: impl Into<String>) -> Result<Self, String> {
        let s = s.into();
        if s.is_empty() || s.chars().any(|c| c.is_whitespace() || matches!(c, ',' | ':' | '=')) {
            return Err(format!("invalid address {s:?}"));
        }
        Ok(Address(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Chain-layer view of a transaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainTx {
    pub txid: TxHash,
    /// Addresses of the spent outputs. Empty for coinbase.
    pub inputs: Vec<Address>,
    /// Output address and value in satoshis.
    pub outputs: Vec<(Address, u64)>,
    pub first_seen: Timestamp,
}

impl fmt::Display for ChainTx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tx={} t={} in=", self.txid, self.first_seen)?;
        for (i, a) in self.inputs.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(" out=")?;
        for (i, (a, v)) in self.outputs.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{a}:{v}")?;
        }
        Ok(())
    }
}

impl FromStr for ChainTx {
    type Err = String;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let fields: Vec<&str> = line.split_ascii_whitespace().collect();
        let [tx, t, inputs, outputs] = fields.as_slice() else {
            return Err(format!("expected 4 fields, found {}", fields.len()));
        };
        let field = |f: &str, key: &str| -> Result<String, String> {
            f.strip_prefix(key)
                .and_then(|r| r.strip_prefix('='))
                .map(str::to_string)
                .ok_or_else(|| format!("expected {key}=..., found {f:?}"))
        };
        let txid = field(tx, "tx")?.parse::<TxHash>()?;
        let first_seen = field(t, "t")?.parse::<Timestamp>()?;
        let inputs = split_list(&field(inputs, "in")?).map(Address::new).collect::<Result<Vec<_>, _>>()?;
        let outputs = split_list(&field(outputs, "out")?)
            .map(|item| {
                let (addr, value) = item.rsplit_once(':').ok_or_else(|| format!("output {item:?} lacks :value"))?;
                let value = value.parse::<u64>().map_err(|e| format!("output value: {e}"))?;
                Ok((Address::new(addr)?, value))
            })
            .collect::<Result<Vec<_>, String>>()?;
        Ok(ChainTx { txid, inputs, outputs, first_seen })
    }
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').filter(|x| !x.is_empty())
}

pub fn read_chain(path: &Path) -> Result<Vec<ChainTx>, ClusterError> {
    read_lines(path, |l| l.parse::<ChainTx>())
}

pub fn write_chain(txs: &[ChainTx], path: &Path) -> Result<(), ClusterError> {
    let mut w = BufWriter::new(File::create(path)?);
    for tx in txs {
        writeln!(w, "{tx}")?;
    }
    w.flush()?;
    Ok(())
}

fn read_lines<T>(path: &Path, parse: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, ClusterError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(parse(line).map_err(|message| ClusterError::Malformed { line: idx + 1, message })?);
    }
    Ok(out)
}

/// Mixing-filter and window parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterParams {
    pub k_min: usize,
    /// Output values closer than this (satoshis, inclusive) count as equal.
    pub value_tol: u64,
    /// Session gap, seconds.
    pub window: f64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams { k_min: 3, value_tol: 1, window: 600.0 }
    }
}

impl ClusterParams {
    pub const KEYS: &'static [&'static str] = &["k_min", "value_tol", "window"];

    pub fn apply(&mut self, cfg: &Config, section: &str) -> Result<(), ConfigError> {
        cfg.read_into(&format!("{section}.k_min"), &mut self.k_min)?;
        cfg.read_into(&format!("{section}.value_tol"), &mut self.value_tol)?;
        cfg.read_into(&format!("{section}.window"), &mut self.window)?;
        if self.k_min < 2 {
            return Err(ConfigError::Invalid("txcluster.k_min must be at least 2".into()));
        }
        if !self.window.is_finite() || self.window < 0.0 {
            return Err(ConfigError::Invalid("txcluster.window must be non-negative".into()));
        }
        Ok(())
    }
}

/// Size of the largest group of values that are pairwise within `tol`.
fn largest_equal_group(values: &mut [u64], tol: u64) -> usize {
    values.sort_unstable();
    let mut best = 0;
    let mut lo = 0;
    for hi in 0..values.len() {
        while values[hi] - values[lo] > tol {
            lo += 1;
        }
        best = best.max(hi - lo + 1);
    }
    best
}

/// Whether a transaction carries the equal-output mixing signature.
pub fn is_mixing(tx: &ChainTx, k_min: usize, value_tol: u64) -> bool {
    if tx.inputs.len() < k_min || tx.outputs.len() < k_min {
        return false;
    }
    let mut values: Vec<u64> = tx.outputs.iter().map(|(_, v)| *v).collect();
    largest_equal_group(&mut values, value_tol) >= k_min
}

/// Drops transactions with at least `k_min` inputs, `k_min` outputs, and
/// `k_min` outputs of (near) equal value.
pub fn filter_mixing(txs: &[ChainTx], k_min: usize, value_tol: u64) -> Vec<ChainTx> {
    txs.iter().filter(|tx| !is_mixing(tx, k_min, value_tol)).cloned().collect()
}

/// Wallet index from multi-input clustering plus session index from the
/// time-window split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClusterId {
    pub wallet: u64,
    pub session: u32,
}

impl fmt::Display for ClusterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.wallet, self.session)
    }
}

impl FromStr for ClusterId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (w, sess) = s.split_once('.').unwrap_or((s, "0"));
        Ok(ClusterId {
            wallet: w.parse().map_err(|e| format!("wallet id: {e}"))?,
            session: sess.parse().map_err(|e| format!("session id: {e}"))?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClusterMember {
    pub txid: TxHash,
    pub first_seen: Timestamp,
}

/// Transactions attributed to one wallet (and, after splitting, one session),
/// ordered by first-seen time then txid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxCluster {
    pub id: ClusterId,
    pub members: Vec<ClusterMember>,
}

impl TxCluster {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn membership(&self) -> ClusterMembership {
        ClusterMembership { id: self.id, members: self.members.iter().map(|m| m.txid).collect() }
    }
}

/// Cluster contents without timing, as stored in cluster files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterMembership {
    pub id: ClusterId,
    pub members: Vec<TxHash>,
}

impl fmt::Display for ClusterMembership {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "wallet={} members=", self.id)?;
        for (i, m) in self.members.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{m}")?;
        }
        Ok(())
    }
}

impl FromStr for ClusterMembership {
    type Err = String;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let mut fields = line.split_ascii_whitespace();
        let id = fields
            .next()
            .and_then(|f| f.strip_prefix("wallet="))
            .ok_or("expected wallet=<id>")?
            .parse::<ClusterId>()?;
        let members = fields
            .next()
            .and_then(|f| f.strip_prefix("members="))
            .ok_or("expected members=<hex,...>")?;
        if fields.next().is_some() {
            return Err("unexpected trailing field".into());
        }
        let members = split_list(members).map(str::parse::<TxHash>).collect::<Result<Vec<_>, _>>()?;
        Ok(ClusterMembership { id, members })
    }
}

pub fn read_clusters(path: &Path) -> Result<Vec<ClusterMembership>, ClusterError> {
    read_lines(path, |l| l.parse::<ClusterMembership>())
}

pub fn write_clusters(clusters: &[ClusterMembership], path: &Path) -> Result<(), ClusterError> {
    let mut w = BufWriter::new(File::create(path)?);
    for c in clusters {
        writeln!(w, "{c}")?;
    }
    w.flush()?;
    Ok(())
}

/// Groups transactions that spend from a common input address, transitively.
/// Every transaction lands in exactly one cluster; transactions without inputs
/// are singletons. Clusters are numbered by their earliest member.
pub fn multi_input_cluster(txs: &[ChainTx]) -> Vec<TxCluster> {
    let mut uf: UnionFind<usize> = UnionFind::new(txs.len());
    let mut first_user: HashMap<&Address, usize> = HashMap::new();
    for (i, tx) in txs.iter().enumerate() {
        for addr in &tx.inputs {
            match first_user.get(addr) {
                Some(&j) => {
                    uf.union(i, j);
                }
                None => {
                    first_user.insert(addr, i);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<ClusterMember>> = BTreeMap::new();
    for (i, tx) in txs.iter().enumerate() {
        groups.entry(uf.find_mut(i)).or_default().push(ClusterMember { txid: tx.txid, first_seen: tx.first_seen });
    }
    let mut clusters: Vec<Vec<ClusterMember>> = groups.into_values().collect();
    for members in &mut clusters {
        members.sort_by_key(|m| (m.first_seen, m.txid));
    }
    clusters.sort_by_key(|members| (members[0].first_seen, members[0].txid));
    clusters
        .into_iter()
        .enumerate()
        .map(|(w, members)| TxCluster { id: ClusterId { wallet: w as u64, session: 0 }, members })
        .collect()
}

/// Cuts a time-ordered cluster wherever consecutive first-seen times differ by
/// more than `window` seconds.
pub fn window_split(cluster: &TxCluster, window: f64) -> Vec<TxCluster> {
    let window = Timestamp::from_secs_f64(window);
    let mut out: Vec<TxCluster> = Vec::new();
    for (i, m) in cluster.members.iter().enumerate() {
        let start_new = i == 0 || m.first_seen.saturating_sub(cluster.members[i - 1].first_seen) > window;
        if start_new {
            let session = out.len() as u32;
            out.push(TxCluster { id: ClusterId { wallet: cluster.id.wallet, session }, members: Vec::new() });
        }
        out.last_mut().expect("pushed above").members.push(*m);
    }
    out
}

/// Mixing filter, multi-input union, and window split in one pass.
pub fn cluster_transactions(txs: &[ChainTx], params: &ClusterParams) -> Vec<TxCluster> {
    let kept = filter_mixing(txs, params.k_min, params.value_tol);
    multi_input_cluster(&kept).iter().flat_map(|c| window_split(c, params.window)).collect()
}

/// Replaces minority predictions inside each cluster by the strict majority.
///
/// Only members present in `preds` take part. Votes are counted on the input
/// snapshot and all flips are applied together, so the result is idempotent.
/// Ties and clusters with fewer than two predicted members are left alone.
pub fn collab_correct(preds: &BTreeMap<TxHash, bool>, clusters: &[ClusterMembership]) -> BTreeMap<TxHash, bool> {
    let mut corrected = preds.clone();
    for cluster in clusters {
        let votes: Vec<bool> = cluster.members.iter().filter_map(|m| preds.get(m).copied()).collect();
        if votes.len() < 2 {
            continue;
        }
        let positives = votes.iter().filter(|&&v| v).count();
        let negatives = votes.len() - positives;
        let majority = match positives.cmp(&negatives) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => continue,
        };
        for m in &cluster.members {
            if let Some(p) = corrected.get_mut(m) {
                *p = majority;
            }
        }
    }
    corrected
}
