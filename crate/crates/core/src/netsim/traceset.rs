use std::collections::HashSet;

use crate::seed;
use crate::wiremsg::TraceRecord;

use super::network::{round_half_up, NodeId};
use super::SimError;

/// One connection of the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkInfo {
    pub conn: u32,
    pub peer: NodeId,
    /// The peer dialed the target.
    pub inbound: bool,
    pub is_probe: bool,
}

/// Everything observed on the target's connections, time-ordered, plus the
/// connections the records may refer to.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceSet {
    pub records: Vec<TraceRecord>,
    pub links: Vec<LinkInfo>,
}

impl TraceSet {
    /// Records of one connection, in order.
    pub fn link_trace(&self, conn: u32) -> Vec<TraceRecord> {
        self.records.iter().filter(|r| r.conn == conn).copied().collect()
    }

    pub fn inbound_links(&self) -> impl Iterator<Item = &LinkInfo> {
        self.links.iter().filter(|l| l.inbound)
    }

    /// Restriction to the given connections.
    pub fn restrict(&self, conns: &HashSet<u32>) -> TraceSet {
        TraceSet {
            records: self.records.iter().filter(|r| conns.contains(&r.conn)).copied().collect(),
            links: self.links.iter().filter(|l| conns.contains(&l.conn)).copied().collect(),
        }
    }
}

/// Keeps a uniformly chosen `round_half_up(fraction · n_inbound)` of the
/// inbound links; outbound links are dropped.
pub fn subsample_probes(trace_set: &TraceSet, fraction: f64, seed: u64) -> Result<TraceSet, SimError> {
    subsample_links(trace_set, fraction, seed, false)
}

/// As [`subsample_probes`]; with `include_outbound` the target's outbound
/// links are kept in full on top of the sampled inbound ones.
pub fn subsample_links(
    trace_set: &TraceSet,
    fraction: f64,
    seed: u64,
    include_outbound: bool,
) -> Result<TraceSet, SimError> {
    let inbound: Vec<u32> = trace_set.inbound_links().map(|l| l.conn).collect();
    let k = if fraction > 0.0 && fraction <= 1.0 { round_half_up(fraction * inbound.len() as f64) } else { 0 };
    if k == 0 {
        return Err(SimError::EmptySubsample { fraction, available: inbound.len() });
    }
    let mut rng = seed::rng(seed::derive(seed, "subsample", 0));
    let mut keep: HashSet<u32> =
        rand::seq::index::sample(&mut rng, inbound.len(), k).into_iter().map(|i| inbound[i]).collect();
    if include_outbound {
        keep.extend(trace_set.links.iter().filter(|l| !l.inbound).map(|l| l.conn));
    }
    Ok(trace_set.restrict(&keep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wiremsg::{Direction, MessageKind, Timestamp, TxHash};

    fn set(n_inbound: u32, n_outbound: u32) -> TraceSet {
        let mut links = Vec::new();
        let mut records = Vec::new();
        for conn in 0..n_inbound + n_outbound {
            links.push(LinkInfo { conn, peer: conn + 100, inbound: conn < n_inbound, is_probe: conn < n_inbound });
        }
        for i in 0..40u32 {
            let conn = i % (n_inbound + n_outbound);
            records.push(TraceRecord {
                ts: Timestamp::from_micros(u64::from(i)),
                conn,
                peer: conn + 100,
                dir: Direction::SentByTarget,
                msg: MessageKind::Inv,
                tx: TxHash([i as u8; 32]),
            });
        }
        TraceSet { records, links }
    }

    #[test]
    fn full_fraction_keeps_inbound() {
        let ts = set(8, 2);
        let sub = subsample_probes(&ts, 1.0, 1).unwrap();
        let expected: Vec<_> = ts.records.iter().filter(|r| r.conn < 8).copied().collect();
        assert_eq!(sub.records, expected);
        assert_eq!(sub.links.len(), 8);
        let with_out = subsample_links(&ts, 1.0, 1, true).unwrap();
        assert_eq!(with_out.records, ts.records);
    }

    #[test]
    fn quarter_of_eight_is_two() {
        let ts = set(8, 2);
        let sub = subsample_probes(&ts, 0.25, 5).unwrap();
        let conns: HashSet<u32> = sub.records.iter().map(|r| r.conn).collect();
        assert_eq!(conns.len(), 2);
        assert!(conns.iter().all(|&c| c < 8));
        assert_eq!(sub, subsample_probes(&ts, 0.25, 5).unwrap());
    }

    #[test]
    fn empty_selection_is_an_error() {
        let ts = set(1, 0);
        assert!(subsample_probes(&ts, 0.4, 0).is_err());
        assert!(subsample_probes(&ts, 0.0, 0).is_err());
        assert!(subsample_probes(&ts, 1.5, 0).is_err());
    }
}
