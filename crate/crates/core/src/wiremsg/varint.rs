use super::WireError;

/// Decodes a compact-size integer from the front of `bytes`.
///
/// Returns the value and the number of bytes consumed (1, 3, 5 or 9).
/// Encodings wider than necessary are rejected.
pub fn decode_varint(bytes: &[u8]) -> Result<(u64, usize), WireError> {
    let first = *bytes.first().ok_or(WireError::Truncated { needed: 1, available: 0 })?;
    let (width, min) = match first {
        0..=0xfc => return Ok((u64::from(first), 1)),
        0xfd => (3, 0xfd),
        0xfe => (5, 0x1_0000),
        0xff => (9, 0x1_0000_0000),
    };
    if bytes.len() < width {
        return Err(WireError::Truncated { needed: width, available: bytes.len() });
    }
    let mut buf = [0u8; 8];
    buf[..width - 1].copy_from_slice(&bytes[1..width]);
    let value = u64::from_le_bytes(buf);
    if value < min {
        return Err(WireError::NonCanonicalVarint { value, width });
    }
    Ok((value, width))
}

/// Appends the canonical compact-size encoding of `value` to `out`.
pub fn encode_varint(value: u64, out: &mut Vec<u8>) {
    match value {
        0..=0xfc => out.push(value as u8),
        0xfd..=0xffff => {
            out.push(0xfd);
            out.extend_from_slice(&(value as u16).to_le_bytes());
        }
        0x1_0000..=0xffff_ffff => {
            out.push(0xfe);
            out.extend_from_slice(&(value as u32).to_le_bytes());
        }
        _ => {
            out.push(0xff);
            out.extend_from_slice(&value.to_le_bytes());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_values() {
        assert_eq!(decode_varint(&[0x00]).unwrap(), (0, 1));
        assert_eq!(decode_varint(&[0xfc]).unwrap(), (252, 1));
        assert_eq!(decode_varint(&[0xfd, 0xfd, 0x00]).unwrap(), (253, 3));
        assert_eq!(decode_varint(&[0xfd, 0xff, 0xff]).unwrap(), (0xffff, 3));
        assert_eq!(decode_varint(&[0xfe, 0x00, 0x00, 0x01, 0x00]).unwrap(), (0x1_0000, 5));
        assert_eq!(
            decode_varint(&[0xff, 0, 0, 0, 0, 1, 0, 0, 0]).unwrap(),
            (0x1_0000_0000, 9)
        );
    }

    #[test]
    fn truncated_and_non_canonical() {
        assert_eq!(decode_varint(&[]), Err(WireError::Truncated { needed: 1, available: 0 }));
        assert_eq!(decode_varint(&[0xfd, 0x01]), Err(WireError::Truncated { needed: 3, available: 2 }));
        assert_eq!(
            decode_varint(&[0xfd, 0x10, 0x00]),
            Err(WireError::NonCanonicalVarint { value: 16, width: 3 })
        );
        assert!(matches!(
            decode_varint(&[0xfe, 0xff, 0xff, 0, 0]),
            Err(WireError::NonCanonicalVarint { .. })
        ));
        assert!(matches!(
            decode_varint(&[0xff, 0xff, 0xff, 0xff, 0xff, 0, 0, 0, 0]),
            Err(WireError::NonCanonicalVarint { .. })
        ));
    }

    #[test]
    fn encode_boundaries() {
        for v in [0u64, 252, 253, 0xffff, 0x1_0000, 0xffff_ffff, 0x1_0000_0000, u64::MAX] {
            let mut buf = Vec::new();
            encode_varint(v, &mut buf);
            assert_eq!(decode_varint(&buf).unwrap(), (v, buf.len()));
        }
    }
}
