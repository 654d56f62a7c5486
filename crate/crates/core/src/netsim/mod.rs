//! Discrete-event simulation of diffusion transaction relay around one
//! observed node whose inbound slots are occupied by probe peers.
//!
//! Node ids: the target is [`TARGET`], background nodes are `1..=n_nodes`,
//! probes follow. Probes relay like ordinary full nodes but never originate
//! transactions.
//!
//! Transactions do not interact (no bandwidth or batching model), so each one
//! is propagated with its own event queue and RNG stream and the recorded
//! events are merged by timestamp afterwards. Messages between two
//! non-target nodes are only materialised when they can change the
//! receiver's state; everything crossing a target link is simulated message by
//! message with send-time suppression.

mod delay;
mod engine;
mod network;
mod params;
mod traceset;
mod truth;
mod workload;

pub use delay::{sample_announce_delay, DelayModel, LinkKind};
pub use engine::{propagate, run, SimOutput};
pub use network::{build_network, round_half_up, Connection, Network, NodeId, NodeKind, TARGET};
pub use params::{NetworkConfig, Schedule, Workload, WalletParams};
pub use traceset::{subsample_links, subsample_probes, LinkInfo, TraceSet};
pub use truth::{read_truth, write_truth, GroundTruth, TruthError};
pub use workload::{generate_transactions, SimTx};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid network configuration: {0}")]
    Config(String),
    #[error("invalid workload: {0}")]
    Workload(String),
    #[error("target node has no connections")]
    DisconnectedTarget,
    #[error("subsample of {fraction} over {available} inbound links selects no link")]
    EmptySubsample { fraction: f64, available: usize },
}
