use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

/// Double SHA-256, the hash used for frame checksums and txids.
pub fn sha256d(data: &[u8]) -> [u8; 32] {
    let first = Sha256::digest(data);
    let second = Sha256::digest(first);
    let mut out = [0u8; 32];
    out.copy_from_slice(&second);
    out
}

/// 32-byte transaction identifier, printed as 64 lowercase hex characters in
/// byte order.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct TxHash(pub [u8; 32]);

impl TxHash {
    pub fn from_slice(bytes: &[u8]) -> Option<Self> {
        <[u8; 32]>::try_from(bytes).ok().map(TxHash)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for TxHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for TxHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TxHash({})", &self.to_hex()[..16])
    }
}

impl FromStr for TxHash {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != 64 {
            return Err(format!("expected 64 hex characters, got {}", s.len()));
        }
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).map_err(|e| e.to_string())?;
        Ok(TxHash(out))
    }
}

/// Non-negative time offset with microsecond resolution.
///
/// Times are integral so that fixed protocol offsets (such as the 2 s getdata
/// wait) survive a round trip through the text format exactly.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Debug)]
pub struct Timestamp(u64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);
    pub const MICROS_PER_SEC: u64 = 1_000_000;

    pub const fn from_micros(micros: u64) -> Self {
        Timestamp(micros)
    }

    /// Rounds to the nearest microsecond; negative and non-finite inputs clamp
    /// to zero.
    pub fn from_secs_f64(secs: f64) -> Self {
        if !secs.is_finite() || secs <= 0.0 {
            return Timestamp(0);
        }
        Timestamp((secs * Self::MICROS_PER_SEC as f64).round() as u64)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / Self::MICROS_PER_SEC as f64
    }

    pub fn saturating_add(self, other: Timestamp) -> Timestamp {
        Timestamp(self.0.saturating_add(other.0))
    }

    pub fn saturating_sub(self, other: Timestamp) -> Timestamp {
        Timestamp(self.0.saturating_sub(other.0))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / Self::MICROS_PER_SEC, self.0 % Self::MICROS_PER_SEC)
    }
}

impl FromStr for Timestamp {
    type Err = String;

    /// Accepts `<digits>[.<digits>]`; fractional digits past the sixth are
    /// rounded half-up.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (int_part, frac_part) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err("empty timestamp".into());
        }
        if !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(format!("invalid timestamp {s:?}"));
        }
        let secs: u64 = if int_part.is_empty() {
            0
        } else {
            int_part.parse().map_err(|_| format!("timestamp out of range: {s:?}"))?
        };
        let mut micros = 0u64;
        for (i, b) in frac_part.bytes().take(6).enumerate() {
            micros += u64::from(b - b'0') * 10u64.pow(5 - i as u32);
        }
        if frac_part.len() > 6 && frac_part.as_bytes()[6] >= b'5' {
            micros += 1;
        }
        secs.checked_mul(Self::MICROS_PER_SEC)
            .and_then(|m| m.checked_add(micros))
            .map(Timestamp)
            .ok_or_else(|| format!("timestamp out of range: {s:?}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timestamp_text_round_trip() {
        for micros in [0, 1, 999_999, 1_000_000, 2_000_000, 3_600_123_456] {
            let t = Timestamp::from_micros(micros);
            assert_eq!(t.to_string().parse::<Timestamp>().unwrap(), t);
        }
        assert_eq!("12".parse::<Timestamp>().unwrap(), Timestamp::from_micros(12_000_000));
        assert_eq!("0.5".parse::<Timestamp>().unwrap(), Timestamp::from_micros(500_000));
        assert_eq!("1.0000005".parse::<Timestamp>().unwrap(), Timestamp::from_micros(1_000_001));
        assert!("-1.0".parse::<Timestamp>().is_err());
        assert!("1e3".parse::<Timestamp>().is_err());
        assert!("".parse::<Timestamp>().is_err());
    }

    #[test]
    fn txhash_hex() {
        let h = TxHash([0xab; 32]);
        assert_eq!(h.to_string().len(), 64);
        assert_eq!(h.to_string().parse::<TxHash>().unwrap(), h);
        assert!("abcd".parse::<TxHash>().is_err());
        assert!("zz".repeat(32).parse::<TxHash>().is_err());
    }
}
