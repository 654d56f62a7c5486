use rand::seq::SliceRandom;
use rand::Rng;

use crate::seed;

use super::delay::LinkKind;
use super::params::NetworkConfig;
use super::SimError;

pub type NodeId = u32;

/// The observed node.
pub const TARGET: NodeId = 0;

/// Rounds halves away from zero for non-negative inputs.
pub fn round_half_up(x: f64) -> usize {
    if x <= 0.0 {
        return 0;
    }
    (x + 0.5 + 1e-9).floor() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Target,
    Background,
    Probe,
}

/// An undirected link; `a` dialed `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Connection {
    pub a: NodeId,
    pub b: NodeId,
    /// Probe occupying an inbound slot of the target.
    pub is_probe: bool,
}

impl Connection {
    pub fn kind_for(&self, node: NodeId) -> LinkKind {
        if node == self.a {
            LinkKind::Outbound
        } else {
            LinkKind::Inbound
        }
    }

    pub fn other(&self, node: NodeId) -> NodeId {
        if node == self.a {
            self.b
        } else {
            self.a
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Adjacent {
    pub peer: NodeId,
    pub conn: u32,
    pub outbound: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: NetworkConfig,
    pub connections: Vec<Connection>,
    pub(crate) adj: Vec<Vec<Adjacent>>,
    n_probes: usize,
}

impl Network {
    pub fn n_background(&self) -> usize {
        self.config.n_nodes
    }

    pub fn n_probes(&self) -> usize {
        self.n_probes
    }

    pub fn n_total(&self) -> usize {
        self.adj.len()
    }

    pub fn kind(&self, node: NodeId) -> NodeKind {
        match node as usize {
            0 => NodeKind::Target,
            n if n <= self.config.n_nodes => NodeKind::Background,
            _ => NodeKind::Probe,
        }
    }

    pub fn background_nodes(&self) -> impl Iterator<Item = NodeId> {
        1..=self.config.n_nodes as NodeId
    }

    /// Connection ids and peers of a node, in link creation order.
    pub fn links_of(&self, node: NodeId) -> impl Iterator<Item = (u32, NodeId)> + '_ {
        self.adj[node as usize].iter().map(|a| (a.conn, a.peer))
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.adj[node as usize].len()
    }

    pub fn outbound_degree(&self, node: NodeId) -> usize {
        self.adj[node as usize].iter().filter(|a| a.outbound).count()
    }

    pub fn are_linked(&self, u: NodeId, v: NodeId) -> bool {
        self.adj[u as usize].iter().any(|a| a.peer == v)
    }

    /// Whether every node can reach every other one.
    pub fn is_connected(&self) -> bool {
        let n = self.adj.len();
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for a in &self.adj[u] {
                let v = a.peer as usize;
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

struct Builder {
    connections: Vec<Connection>,
    adj: Vec<Vec<Adjacent>>,
}

impl Builder {
    fn link(&mut self, a: NodeId, b: NodeId, is_probe: bool) {
        debug_assert_ne!(a, b);
        let conn = self.connections.len() as u32;
        self.connections.push(Connection { a, b, is_probe });
        self.adj[a as usize].push(Adjacent { peer: b, conn, outbound: true });
        self.adj[b as usize].push(Adjacent { peer: a, conn, outbound: false });
    }

    fn linked(&self, u: NodeId, v: NodeId) -> bool {
        self.adj[u as usize].iter().any(|a| a.peer == v)
    }

    /// Dials up to `count` distinct background nodes not yet linked to `from`.
    fn dial_random<R: Rng>(&mut self, from: NodeId, count: usize, n_background: usize, rng: &mut R) {
        let mut remaining = count;
        let mut attempts = 0;
        while remaining > 0 && attempts < 32 * count {
            attempts += 1;
            let v = rng.random_range(1..=n_background as NodeId);
            if v != from && !self.linked(from, v) {
                self.link(from, v, false);
                remaining -= 1;
            }
        }
        if remaining > 0 {
            let mut candidates: Vec<NodeId> =
                (1..=n_background as NodeId).filter(|&v| v != from && !self.linked(from, v)).collect();
            candidates.shuffle(rng);
            for v in candidates.into_iter().take(remaining) {
                self.link(from, v, false);
            }
        }
    }
}

/// Builds the topology: a connected random background graph, the target's
/// outbound links, and probes dialing into the target's inbound slots.
pub fn build_network(config: &NetworkConfig) -> Result<Network, SimError> {
    config.validate()?;
    let n = config.n_nodes;
    let n_probes = config.n_probes();
    let total = 1 + n + n_probes;
    let mut rng = seed::rng(seed::derive(config.seed, "topology", 0));
    let mut b = Builder { connections: Vec::new(), adj: vec![Vec::new(); total] };

    // random spanning tree first, so the background graph is connected
    let mut order: Vec<NodeId> = (1..=n as NodeId).collect();
    order.shuffle(&mut rng);
    if config.background_out_degree > 0 {
        for k in 1..order.len() {
            let j = rng.random_range(0..k);
            b.link(order[k], order[j], false);
        }
    }
    for v in 1..=n as NodeId {
        let have = b.adj[v as usize].iter().filter(|a| a.outbound).count();
        let want = config.background_out_degree.saturating_sub(have);
        let free = n - 1 - b.adj[v as usize].len();
        b.dial_random(v, want.min(free), n, &mut rng);
    }

    b.dial_random(TARGET, config.target_outbound, n, &mut rng);

    let first_probe = (n + 1) as NodeId;
    for p in first_probe..first_probe + n_probes as NodeId {
        b.link(p, TARGET, true);
        b.dial_random(p, config.probe_out_degree.min(n), n, &mut rng);
    }

    if config.background_inbound > 0 {
        let mut candidates: Vec<NodeId> = (1..=n as NodeId).filter(|&v| !b.linked(TARGET, v)).collect();
        candidates.shuffle(&mut rng);
        for v in candidates.into_iter().take(config.background_inbound) {
            b.link(v, TARGET, false);
        }
    }

    if b.adj[TARGET as usize].is_empty() {
        return Err(SimError::DisconnectedTarget);
    }
    Ok(Network { config: config.clone(), connections: b.connections, adj: b.adj, n_probes })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n_nodes: usize, out_degree: usize) -> NetworkConfig {
        NetworkConfig {
            n_nodes,
            background_out_degree: out_degree,
            target_outbound: 0,
            probe_fraction: 0.0,
            probe_out_degree: 0,
            ..Default::default()
        }
    }

    #[test]
    fn full_probe_coverage() {
        let net = build_network(&NetworkConfig { seed: 3, ..Default::default() }).unwrap();
        let probe_links = net.connections.iter().filter(|c| c.is_probe).count();
        assert_eq!(probe_links, 114);
        assert_eq!(net.outbound_degree(TARGET), 10);
        assert_eq!(net.degree(TARGET), 124);
        for c in net.connections.iter().filter(|c| c.is_probe) {
            assert_eq!(c.b, TARGET);
            assert_eq!(net.kind(c.a), NodeKind::Probe);
            assert_eq!(c.kind_for(TARGET), LinkKind::Inbound);
            assert_eq!(c.kind_for(c.a), LinkKind::Outbound);
        }
        assert!(net.is_connected());
    }

    #[test]
    fn quarter_coverage_rounds_half_up() {
        let net = build_network(&NetworkConfig { probe_fraction: 0.25, ..Default::default() }).unwrap();
        assert_eq!(net.connections.iter().filter(|c| c.is_probe).count(), 29);
        assert_eq!(round_half_up(28.5), 29);
        assert_eq!(round_half_up(2.0), 2);
        assert_eq!(round_half_up(0.49), 0);
    }

    #[test]
    fn two_node_background() {
        let mut cfg = small(2, 1);
        cfg.target_outbound = 1;
        let net = build_network(&cfg).unwrap();
        let background_links = net
            .connections
            .iter()
            .filter(|c| c.a != TARGET && c.b != TARGET)
            .count();
        assert_eq!(background_links, 1);
        assert!(net.is_connected());
    }

    #[test]
    fn isolated_target_is_an_error() {
        assert_eq!(build_network(&small(5, 2)).unwrap_err(), SimError::DisconnectedTarget);
    }

    #[test]
    fn background_graph_is_simple_and_connected() {
        for seed in 0..5 {
            let cfg = NetworkConfig { n_nodes: 60, background_out_degree: 3, seed, ..small(60, 3) };
            let cfg = NetworkConfig { target_outbound: 2, ..cfg };
            let net = build_network(&cfg).unwrap();
            assert!(net.is_connected());
            for v in net.background_nodes() {
                assert_eq!(net.outbound_degree(v), 3);
                let mut peers: Vec<_> = net.links_of(v).map(|(_, p)| p).collect();
                let len = peers.len();
                peers.sort();
                peers.dedup();
                assert_eq!(peers.len(), len, "duplicate link at node {v}");
                assert!(!peers.contains(&v));
            }
        }
    }

    #[test]
    fn deterministic_topology() {
        let cfg = NetworkConfig { n_nodes: 200, seed: 9, ..Default::default() };
        assert_eq!(build_network(&cfg).unwrap().connections, build_network(&cfg).unwrap().connections);
    }
}
