use std::fmt;

use super::types::sha256d;
use super::WireError;

pub const HEADER_LEN: usize = 24;
pub const MAINNET_MAGIC: [u8; 4] = [0xf9, 0xbe, 0xb4, 0xd9];
/// Reference-client message size limit.
pub const MAX_PAYLOAD_LEN: u64 = 32 * 1024 * 1024;

/// First four bytes of the double SHA-256 of `payload`.
pub fn checksum(payload: &[u8]) -> [u8; 4] {
    let digest = sha256d(payload);
    [digest[0], digest[1], digest[2], digest[3]]
}

/// The commands this crate interprets; anything else is carried as `Other`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Inv,
    GetData,
    Tx,
    Other([u8; 12]),
}

impl Command {
    pub fn from_name(name: &str) -> Result<Self, WireError> {
        let raw = pad_command(name)?;
        Ok(Self::from_raw(raw))
    }

    fn from_raw(raw: [u8; 12]) -> Self {
        match &raw {
            b"inv\0\0\0\0\0\0\0\0\0" => Command::Inv,
            b"getdata\0\0\0\0\0" => Command::GetData,
            b"tx\0\0\0\0\0\0\0\0\0\0" => Command::Tx,
            _ => Command::Other(raw),
        }
    }

    pub fn to_raw(self) -> [u8; 12] {
        match self {
            Command::Inv => *b"inv\0\0\0\0\0\0\0\0\0",
            Command::GetData => *b"getdata\0\0\0\0\0",
            Command::Tx => *b"tx\0\0\0\0\0\0\0\0\0\0",
            Command::Other(raw) => raw,
        }
    }

    pub fn name(&self) -> String {
        let raw = self.to_raw();
        let end = raw.iter().position(|&b| b == 0).unwrap_or(12);
        String::from_utf8_lossy(&raw[..end]).into_owned()
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

fn pad_command(name: &str) -> Result<[u8; 12], WireError> {
    let bytes = name.as_bytes();
    if bytes.len() > 12 {
        return Err(WireError::CommandTooLong(name.to_string()));
    }
    if let Some(offset) = bytes.iter().position(|b| !b.is_ascii_graphic()) {
        return Err(WireError::BadCommand { offset, byte: bytes[offset] });
    }
    let mut raw = [0u8; 12];
    raw[..bytes.len()].copy_from_slice(bytes);
    Ok(raw)
}

fn validate_command(raw: &[u8; 12]) -> Result<(), WireError> {
    let end = raw.iter().position(|&b| b == 0).unwrap_or(12);
    if let Some(offset) = raw[..end].iter().position(|b| !b.is_ascii_graphic()) {
        return Err(WireError::BadCommand { offset, byte: raw[offset] });
    }
    if let Some(pos) = raw[end..].iter().position(|&b| b != 0) {
        let offset = end + pos;
        return Err(WireError::BadCommand { offset, byte: raw[offset] });
    }
    Ok(())
}

/// A decoded message frame. Length and checksum are derived from the payload
/// and validated on decode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub magic: [u8; 4],
    pub command: Command,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn payload_len(&self) -> u32 {
        self.payload.len() as u32
    }

    pub fn checksum(&self) -> [u8; 4] {
        checksum(&self.payload)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(&self.magic);
        out.extend_from_slice(&self.command.to_raw());
        out.extend_from_slice(&self.payload_len().to_le_bytes());
        out.extend_from_slice(&self.checksum());
        out.extend_from_slice(&self.payload);
        out
    }
}

pub fn encode_frame(command: &str, payload: &[u8], magic: [u8; 4]) -> Result<Vec<u8>, WireError> {
    if payload.len() as u64 > MAX_PAYLOAD_LEN {
        return Err(WireError::PayloadTooLarge(payload.len() as u64));
    }
    let frame = Frame { magic, command: Command::from_name(command)?, payload: payload.to_vec() };
    Ok(frame.encode())
}

/// Decodes one frame from the front of `bytes`, returning it with the number
/// of bytes consumed. Trailing bytes are left for the caller.
pub fn decode_frame_prefix(bytes: &[u8]) -> Result<(Frame, usize), WireError> {
    if bytes.len() < HEADER_LEN {
        return Err(WireError::Truncated { needed: HEADER_LEN, available: bytes.len() });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().expect("slice of 4");
    let raw_command: [u8; 12] = bytes[4..16].try_into().expect("slice of 12");
    validate_command(&raw_command)?;
    let declared = u32::from_le_bytes(bytes[16..20].try_into().expect("slice of 4"));
    if u64::from(declared) > MAX_PAYLOAD_LEN {
        return Err(WireError::PayloadTooLarge(u64::from(declared)));
    }
    let expected: [u8; 4] = bytes[20..24].try_into().expect("slice of 4");
    let total = HEADER_LEN + declared as usize;
    if bytes.len() < total {
        return Err(WireError::Truncated { needed: total, available: bytes.len() });
    }
    let payload = &bytes[HEADER_LEN..total];
    let actual = checksum(payload);
    if actual != expected {
        return Err(WireError::BadChecksum { expected: hex::encode(expected), actual: hex::encode(actual) });
    }
    Ok((Frame { magic, command: Command::from_raw(raw_command), payload: payload.to_vec() }, total))
}

/// Decodes exactly one frame; the buffer must contain nothing else.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame, WireError> {
    let (frame, consumed) = decode_frame_prefix(bytes)?;
    if consumed != bytes.len() {
        return Err(WireError::BadLength {
            declared: u64::from(frame.payload_len()),
            actual: bytes.len() - HEADER_LEN,
        });
    }
    Ok(frame)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_payload_checksum() {
        assert_eq!(checksum(&[]), [0x5d, 0xf6, 0xe0, 0xe2]);
        let bytes = encode_frame("inv", &[], MAINNET_MAGIC).unwrap();
        assert_eq!(&bytes[0..4], &[0xf9, 0xbe, 0xb4, 0xd9]);
        assert_eq!(&bytes[4..16], b"inv\0\0\0\0\0\0\0\0\0");
        assert_eq!(&bytes[16..20], &[0, 0, 0, 0]);
        assert_eq!(&bytes[20..24], &[0x5d, 0xf6, 0xe0, 0xe2]);
        let frame = decode_frame(&bytes).unwrap();
        assert_eq!(frame.command, Command::Inv);
        assert!(frame.payload.is_empty());
    }

    #[test]
    fn command_rules() {
        assert!(matches!(encode_frame("thirteenchars", &[], MAINNET_MAGIC), Err(WireError::CommandTooLong(_))));
        assert!(encode_frame("twelve_chars", &[], MAINNET_MAGIC).is_ok());
        assert!(matches!(encode_frame("in v", &[], MAINNET_MAGIC), Err(WireError::BadCommand { offset: 2, .. })));
        let mut bytes = encode_frame("tx", &[1, 2, 3], MAINNET_MAGIC).unwrap();
        bytes[10] = b'x';
        assert!(matches!(decode_frame(&bytes), Err(WireError::BadCommand { offset: 6, .. })));
    }

    #[test]
    fn distinct_errors() {
        let bytes = encode_frame("getdata", &[0u8; 37], MAINNET_MAGIC).unwrap();
        assert!(matches!(decode_frame(&bytes[..10]), Err(WireError::Truncated { needed: 24, .. })));
        assert!(matches!(decode_frame(&bytes[..40]), Err(WireError::Truncated { needed: 61, .. })));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(decode_frame(&extra), Err(WireError::BadLength { declared: 37, actual: 38 })));
        let mut corrupt = bytes.clone();
        corrupt[30] ^= 1;
        assert!(matches!(decode_frame(&corrupt), Err(WireError::BadChecksum { .. })));
    }

    #[test]
    fn other_commands_survive() {
        let bytes = encode_frame("version", &[7], MAINNET_MAGIC).unwrap();
        let frame = decode_frame(&bytes).unwrap();
        assert!(matches!(frame.command, Command::Other(_)));
        assert_eq!(frame.command.name(), "version");
        assert_eq!(frame.encode(), bytes);
    }
}
