use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::seed;
use crate::txcluster::ChainTx;
use crate::wiremsg::{Direction, MessageKind, Timestamp, TraceRecord, TxHash};

use super::delay::{DelayModel, LinkKind};
use super::network::{Network, NodeId, TARGET};
use super::params::Workload;
use super::traceset::{LinkInfo, TraceSet};
use super::truth::GroundTruth;
use super::workload::{generate_transactions, SimTx};
use super::SimError;

/// Result of one simulation run.
#[derive(Debug, Clone)]
pub struct SimOutput {
    /// Full capture over every connection of the target.
    pub traces: TraceSet,
    pub truth: GroundTruth,
    pub chain: Vec<ChainTx>,
    /// Non-fatal conditions such as nothing reaching the target in time.
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    Inv,
    Getdata,
}

/// `from` sends to `to` over `conn`; network latency is zero so send and
/// delivery coincide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Event {
    kind: Kind,
    from: NodeId,
    to: NodeId,
    conn: u32,
}

const UNKNOWN: u8 = 0;
const REQUESTED: u8 = 1;
const HAVE: u8 = 2;

/// Per-transaction state, reused across transactions by one worker.
struct Scratch {
    state: Vec<u8>,
    /// Earliest scheduled non-target inv arrival per node.
    best: Vec<u64>,
    touched: Vec<NodeId>,
    /// Per target link: an inv or tx has crossed it, so each side knows the
    /// other has the transaction.
    known: Vec<bool>,
    heap: BinaryHeap<Reverse<(u64, u64, Event)>>,
    seq: u64,
}

impl Scratch {
    fn new(n_nodes: usize, n_target_links: usize) -> Self {
        Scratch {
            state: vec![UNKNOWN; n_nodes],
            best: vec![u64::MAX; n_nodes],
            touched: Vec::new(),
            known: vec![false; n_target_links],
            heap: BinaryHeap::new(),
            seq: 0,
        }
    }

    fn reset(&mut self) {
        for &v in &self.touched {
            self.state[v as usize] = UNKNOWN;
            self.best[v as usize] = u64::MAX;
        }
        self.touched.clear();
        self.known.iter_mut().for_each(|k| *k = false);
        self.heap.clear();
        self.seq = 0;
    }

    fn push(&mut self, at: u64, ev: Event) {
        self.heap.push(Reverse((at, self.seq, ev)));
        self.seq += 1;
    }

    fn touch(&mut self, v: NodeId) {
        if self.state[v as usize] == UNKNOWN && self.best[v as usize] == u64::MAX {
            self.touched.push(v);
        }
    }
}

/// Immutable per-run context shared by all workers.
struct Ctx<'a> {
    net: &'a Network,
    delays: DelayModel,
    getdata_wait: u64,
    /// Last instant at which a message may be delivered, µs.
    end: u64,
    /// Connection id to index among the target's links.
    target_slot: Vec<Option<usize>>,
}

fn micros(secs: f64) -> u64 {
    Timestamp::from_secs_f64(secs).as_micros()
}

impl Ctx<'_> {
    fn announce(&self, s: &mut Scratch, rng: &mut ChaCha8Rng, node: NodeId, t: u64, except: Option<NodeId>) {
        for adj in &self.net.adj[node as usize] {
            if Some(adj.peer) == except {
                continue;
            }
            let target_link = node == TARGET || adj.peer == TARGET;
            if !target_link && s.state[adj.peer as usize] != UNKNOWN {
                continue;
            }
            let kind = if adj.outbound { LinkKind::Outbound } else { LinkKind::Inbound };
            let at = t + micros(self.delays.sample(kind, rng));
            if at > self.end {
                continue;
            }
            if !target_link {
                // a later inv to a node that will already be requesting cannot matter
                if at >= s.best[adj.peer as usize] {
                    continue;
                }
                s.touch(adj.peer);
                s.best[adj.peer as usize] = at;
            }
            s.push(at, Event { kind: Kind::Inv, from: node, to: adj.peer, conn: adj.conn });
        }
    }

    fn record(&self, out: &mut Vec<TraceRecord>, at: u64, ev: &Event, msg: MessageKind, tx: TxHash) {
        let (dir, peer) = if ev.from == TARGET {
            (Direction::SentByTarget, ev.to)
        } else {
            (Direction::ReceivedByTarget, ev.from)
        };
        out.push(TraceRecord { ts: Timestamp::from_micros(at), conn: ev.conn, peer, dir, msg, tx });
    }

    /// Propagates one transaction, appending target-link records in time order.
    fn simulate(&self, s: &mut Scratch, rng: &mut ChaCha8Rng, tx: &SimTx, out: &mut Vec<TraceRecord>) {
        s.reset();
        let t0 = tx.t0.as_micros();
        s.touch(tx.origin);
        s.state[tx.origin as usize] = HAVE;
        self.announce(s, rng, tx.origin, t0, None);

        while let Some(Reverse((at, _, ev))) = s.heap.pop() {
            let slot = self.target_slot[ev.conn as usize];
            match ev.kind {
                Kind::Inv => {
                    if let Some(slot) = slot {
                        if s.known[slot] {
                            continue;
                        }
                        s.known[slot] = true;
                        self.record(out, at, &ev, MessageKind::Inv, tx.hash);
                    }
                    if s.state[ev.to as usize] != UNKNOWN {
                        continue;
                    }
                    s.touch(ev.to);
                    s.state[ev.to as usize] = REQUESTED;
                    let inbound_for_receiver = self.net.connections[ev.conn as usize].a != ev.to;
                    let wait = if inbound_for_receiver { self.getdata_wait } else { 0 };
                    if at + wait <= self.end {
                        s.push(at + wait, Event { kind: Kind::Getdata, from: ev.to, to: ev.from, conn: ev.conn });
                    }
                }
                Kind::Getdata => {
                    // answered at once with the transaction
                    if let Some(slot) = slot {
                        s.known[slot] = true;
                        self.record(out, at, &ev, MessageKind::Getdata, tx.hash);
                        let reply = Event { kind: Kind::Getdata, from: ev.to, to: ev.from, conn: ev.conn };
                        self.record(out, at, &reply, MessageKind::Tx, tx.hash);
                    }
                    s.state[ev.from as usize] = HAVE;
                    self.announce(s, rng, ev.from, at, Some(ev.to));
                }
            }
        }
    }
}

/// Propagates the given transactions over the network and returns every
/// record observed on the target's connections, ordered by timestamp (ties in
/// transaction order).
pub fn propagate(network: &Network, txs: &[SimTx]) -> TraceSet {
    let cfg = &network.config;
    let mut target_slot = vec![None; network.connections.len()];
    let links: Vec<LinkInfo> = network.adj[TARGET as usize]
        .iter()
        .enumerate()
        .map(|(i, a)| {
            target_slot[a.conn as usize] = Some(i);
            LinkInfo {
                conn: a.conn,
                peer: a.peer,
                inbound: !a.outbound,
                is_probe: network.connections[a.conn as usize].is_probe,
            }
        })
        .collect();
    let ctx = Ctx {
        net: network,
        delays: DelayModel::new(cfg.mean_delay_out, cfg.mean_delay_in),
        getdata_wait: micros(cfg.getdata_inbound_delay),
        end: micros(cfg.horizon + cfg.drain),
        target_slot,
    };
    let per_tx: Vec<Vec<TraceRecord>> = txs
        .par_iter()
        .enumerate()
        .map_init(
            || Scratch::new(network.n_total(), links.len()),
            |scratch, (i, tx)| {
                let mut rng = seed::rng(seed::derive(cfg.seed, "tx", i as u64));
                let mut out = Vec::new();
                ctx.simulate(scratch, &mut rng, tx, &mut out);
                out
            },
        )
        .collect();
    let mut records: Vec<TraceRecord> = per_tx.into_iter().flatten().collect();
    records.par_sort_by_key(|r| r.ts);
    TraceSet { records, links }
}

/// Generates the workload, propagates it, and assembles labels and chain data.
pub fn run(network: &Network, workload: &Workload) -> Result<SimOutput, SimError> {
    let txs = generate_transactions(network, workload)?;
    let traces = propagate(network, &txs);
    let mut warnings = Vec::new();
    if traces.records.is_empty() && !txs.is_empty() {
        warnings.push(format!(
            "no transaction reached the target within {} s",
            network.config.horizon + network.config.drain
        ));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let truth = txs.iter().map(|t| (t.hash, t.origin)).collect();
    let chain = txs.into_iter().map(|t| t.chain).collect();
    Ok(SimOutput { traces, truth, chain, warnings })
}
