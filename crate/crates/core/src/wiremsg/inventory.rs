use super::types::TxHash;
use super::varint::{decode_varint, encode_varint};
use super::WireError;

pub const INV_KIND_TX: u32 = 1;
pub const INV_ITEM_LEN: usize = 36;

/// One `inv`/`getdata` entry. Kinds other than [`INV_KIND_TX`] are parsed but
/// reported as non-transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InventoryItem {
    pub kind: u32,
    pub hash: TxHash,
}

impl InventoryItem {
    pub fn tx(hash: TxHash) -> Self {
        InventoryItem { kind: INV_KIND_TX, hash }
    }

    pub fn is_transaction(&self) -> bool {
        self.kind == INV_KIND_TX
    }
}

/// Parses a compact-size count followed by that many 36-byte items.
pub fn parse_inventory(payload: &[u8]) -> Result<Vec<InventoryItem>, WireError> {
    let (count, offset) = decode_varint(payload)?;
    let body = &payload[offset..];
    let needed = count.checked_mul(INV_ITEM_LEN as u64).unwrap_or(u64::MAX);
    if needed != body.len() as u64 {
        return Err(WireError::InventoryLength { count, needed, available: body.len() });
    }
    Ok(body
        .chunks_exact(INV_ITEM_LEN)
        .map(|chunk| InventoryItem {
            kind: u32::from_le_bytes(chunk[..4].try_into().expect("4 bytes")),
            hash: TxHash::from_slice(&chunk[4..]).expect("32 bytes"),
        })
        .collect())
}

pub fn encode_inventory(items: &[InventoryItem]) -> Vec<u8> {
    let mut out = Vec::with_capacity(9 + items.len() * INV_ITEM_LEN);
    encode_varint(items.len() as u64, &mut out);
    for item in items {
        out.extend_from_slice(&item.kind.to_le_bytes());
        out.extend_from_slice(item.hash.as_bytes());
    }
    out
}
