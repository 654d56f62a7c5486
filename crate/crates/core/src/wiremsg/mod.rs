//! Bitcoin P2P message subset (`inv`, `getdata`, `tx`) and the trace format
//! shared by the simulator and capture ingestion.
//!
//! Frame layout on the wire:
//!
//! ```text
//! magic(4) | command(12, NUL padded) | length(4, LE) | checksum(4) | payload
//! ```
//!
//! The checksum is the first four bytes of `SHA256(SHA256(payload))`.

mod frame;
mod inventory;
mod trace;
mod types;
mod varint;

pub use frame::{checksum, decode_frame, decode_frame_prefix, encode_frame, Command, Frame, HEADER_LEN, MAINNET_MAGIC, MAX_PAYLOAD_LEN};
pub use inventory::{encode_inventory, parse_inventory, InventoryItem, INV_ITEM_LEN, INV_KIND_TX};
pub use trace::{format_trace, ingest_frame, parse_trace, read_trace, write_trace, Direction, MessageKind, TraceRecord};
pub use types::{sha256d, Timestamp, TxHash};
pub use varint::{decode_varint, encode_varint};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("truncated input: needed {needed} bytes, {available} available")]
    Truncated { needed: usize, available: usize },
    #[error("non-canonical compact-size encoding of {value} in {width} bytes")]
    NonCanonicalVarint { value: u64, width: usize },
    #[error("command name longer than 12 bytes: {0:?}")]
    CommandTooLong(String),
    #[error("command name contains invalid byte 0x{byte:02x} at offset {offset}")]
    BadCommand { offset: usize, byte: u8 },
    #[error("checksum mismatch: header {expected}, payload hashes to {actual}")]
    BadChecksum { expected: String, actual: String },
    #[error("declared payload length {declared} does not match {actual} bytes present")]
    BadLength { declared: u64, actual: usize },
    #[error("payload length {0} exceeds limit")]
    PayloadTooLarge(u64),
    #[error("inventory count {count} needs {needed} bytes but payload has {available}")]
    InventoryLength { count: u64, needed: u64, available: usize },
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: timestamp {ts} precedes previous {prev}")]
    OutOfOrder { line: usize, ts: Timestamp, prev: Timestamp },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
