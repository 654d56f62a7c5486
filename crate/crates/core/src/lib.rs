//! Laboratory for network-layer origin detection of Bitcoin transactions.
//!
//! The crate is organised as a pipeline:
//!
//! - [`wiremsg`]: codec for the `inv`/`getdata`/`tx` message subset and the
//!   line-oriented trace format.
//! - [`netsim`]: deterministic diffusion simulator producing probe traces and
//!   ground truth.
//! - [`features`]: per-transaction counters extracted from a trace.
//! - [`detect`]: isolation forest, autoencoder and one-class SVM scorers.
//! - [`gbdt`]: gradient-boosted trees with logistic loss.
//! - [`ntssl`]: pseudo-labelling pipeline tying the detectors and the booster
//!   together.
//! - [`txcluster`]: multi-input clustering, time-window sessionisation and
//!   majority-vote correction of predictions.
//! - [`evalkit`]: metrics, cross-validation and coverage sweeps.

pub mod config;
pub mod detect;
pub mod evalkit;
pub mod features;
pub mod gbdt;
pub mod netsim;
pub mod ntssl;
pub mod seed;
pub mod txcluster;
pub mod wiremsg;

pub use wiremsg::{Timestamp, TxHash};
