use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use super::frame::{Command, Frame};
use super::inventory::parse_inventory;
use super::types::{sha256d, Timestamp, TxHash};
use super::{TraceError, WireError};

/// Direction of a message relative to the observed (target) node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    SentByTarget,
    ReceivedByTarget,
}

impl Direction {
    pub fn code(self) -> &'static str {
        match self {
            Direction::SentByTarget => "S",
            Direction::ReceivedByTarget => "R",
        }
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "S" => Ok(Direction::SentByTarget),
            "R" => Ok(Direction::ReceivedByTarget),
            other => Err(format!("unknown direction {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MessageKind {
    Inv,
    Getdata,
    Tx,
}

impl MessageKind {
    pub fn name(self) -> &'static str {
        match self {
            MessageKind::Inv => "inv",
            MessageKind::Getdata => "getdata",
            MessageKind::Tx => "tx",
        }
    }
}

impl FromStr for MessageKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inv" => Ok(MessageKind::Inv),
            "getdata" => Ok(MessageKind::Getdata),
            "tx" => Ok(MessageKind::Tx),
            other => Err(format!("unknown message kind {other:?}")),
        }
    }
}

/// One observed protocol event on a connection of the target node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRecord {
    pub ts: Timestamp,
    pub conn: u32,
    pub peer: u32,
    pub dir: Direction,
    pub msg: MessageKind,
    pub tx: TxHash,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "ts={} conn={} peer={} dir={} msg={} tx={}",
            self.ts,
            self.conn,
            self.peer,
            self.dir.code(),
            self.msg.name(),
            self.tx
        )
    }
}

impl FromStr for TraceRecord {
    type Err = String;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let mut fields = line.split_ascii_whitespace();
        let mut next = |key: &str| -> Result<&str, String> {
            let field = fields.next().ok_or_else(|| format!("missing field {key}"))?;
            field
                .strip_prefix(key)
                .and_then(|rest| rest.strip_prefix('='))
                .ok_or_else(|| format!("expected {key}=..., found {field:?}"))
        };
        let ts = next("ts")?.parse::<Timestamp>()?;
        let conn = next("conn")?.parse::<u32>().map_err(|e| format!("conn: {e}"))?;
        let peer = next("peer")?.parse::<u32>().map_err(|e| format!("peer: {e}"))?;
        let dir = next("dir")?.parse::<Direction>()?;
        let msg = next("msg")?.parse::<MessageKind>()?;
        let tx = next("tx")?.parse::<TxHash>()?;
        if let Some(extra) = fields.next() {
            return Err(format!("unexpected trailing field {extra:?}"));
        }
        Ok(TraceRecord { ts, conn, peer, dir, msg, tx })
    }
}

/// Parses trace text, enforcing non-decreasing timestamps. Blank lines are
/// skipped; line numbers in errors are 1-based.
pub fn parse_trace(text: &str) -> Result<Vec<TraceRecord>, TraceError> {
    parse_lines(text.lines().map(|l| Ok::<_, std::io::Error>(l.to_string())))
}

fn parse_lines<I>(lines: I) -> Result<Vec<TraceRecord>, TraceError>
where
    I: Iterator<Item = Result<String, std::io::Error>>,
{
    let mut out = Vec::new();
    let mut prev = Timestamp::ZERO;
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let record = trimmed
            .parse::<TraceRecord>()
            .map_err(|message| TraceError::Malformed { line: line_no, message })?;
        if record.ts < prev {
            return Err(TraceError::OutOfOrder { line: line_no, ts: record.ts, prev });
        }
        prev = record.ts;
        out.push(record);
    }
    Ok(out)
}

pub fn format_trace(records: &[TraceRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 120);
    for r in records {
        out.push_str(&r.to_string());
        out.push('\n');
    }
    out
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>, TraceError> {
    let reader = BufReader::new(File::open(path)?);
    parse_lines(reader.lines())
}

pub fn write_trace(records: &[TraceRecord], path: &Path) -> Result<(), TraceError> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        writeln!(w, "{r}")?;
    }
    w.flush()?;
    Ok(())
}

/// Converts a decoded frame observed on a connection into trace records.
///
/// `inv`/`getdata` produce one record per transaction item; `tx` produces one
/// record keyed by the double SHA-256 of its payload. Other commands and
/// non-transaction inventory kinds are dropped.
pub fn ingest_frame(
    frame: &Frame,
    ts: Timestamp,
    conn: u32,
    peer: u32,
    dir: Direction,
) -> Result<Vec<TraceRecord>, WireError> {
    let record = |msg, tx| TraceRecord { ts, conn, peer, dir, msg, tx };
    Ok(match frame.command {
        Command::Inv | Command::GetData => {
            let msg = if frame.command == Command::Inv { MessageKind::Inv } else { MessageKind::Getdata };
            parse_inventory(&frame.payload)?
                .into_iter()
                .filter(|item| item.is_transaction())
                .map(|item| record(msg, item.hash))
                .collect()
        }
        Command::Tx => vec![record(MessageKind::Tx, TxHash(sha256d(&frame.payload)))],
        Command::Other(_) => Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::super::{encode_frame, encode_inventory, InventoryItem, MAINNET_MAGIC};
    use super::super::decode_frame;
    use super::*;

    fn line(ts: &str) -> String {
        format!("ts={ts} conn=3 peer=17 dir=S msg=inv tx={}", "ab".repeat(32))
    }

    #[test]
    fn empty_and_single() {
        assert!(parse_trace("").unwrap().is_empty());
        let records = parse_trace(&line("1.5")).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].conn, 3);
        assert_eq!(records[0].peer, 17);
        assert_eq!(records[0].dir, Direction::SentByTarget);
        assert_eq!(records[0].msg, MessageKind::Inv);
        assert_eq!(records[0].ts, Timestamp::from_micros(1_500_000));
    }

    #[test]
    fn ordering_enforced() {
        let text = format!("{}\n{}\n", line("2.0"), line("1.0"));
        assert!(matches!(parse_trace(&text), Err(TraceError::OutOfOrder { line: 2, .. })));
    }

    #[test]
    fn malformed_reports_line() {
        let text = format!("{}\n\nts=3 conn=x\n", line("1.0"));
        match parse_trace(&text) {
            Err(TraceError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let bad_dir = line("1.0").replace("dir=S", "dir=Q");
        assert!(parse_trace(&bad_dir).is_err());
        let short_hash = line("1.0").replace(&"ab".repeat(32), "abcd");
        assert!(parse_trace(&short_hash).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.trace");
        let text = format!("{}\n{}\n", line("0.000001"), line("7.250000"));
        let records = parse_trace(&text).unwrap();
        write_trace(&records, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), text);
        assert_eq!(read_trace(&path).unwrap(), records);
    }

    #[test]
    fn ingestion_filters() {
        let items = [InventoryItem::tx(TxHash([1; 32])), InventoryItem { kind: 2, hash: TxHash([2; 32]) }];
        let inv = decode_frame(&encode_frame("inv", &encode_inventory(&items), MAINNET_MAGIC).unwrap()).unwrap();
        let recs = ingest_frame(&inv, Timestamp::ZERO, 0, 1, Direction::ReceivedByTarget).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].tx, TxHash([1; 32]));

        let other = decode_frame(&encode_frame("ping", &[0; 8], MAINNET_MAGIC).unwrap()).unwrap();
        assert!(ingest_frame(&other, Timestamp::ZERO, 0, 1, Direction::ReceivedByTarget).unwrap().is_empty());

        let tx = decode_frame(&encode_frame("tx", b"body", MAINNET_MAGIC).unwrap()).unwrap();
        let recs = ingest_frame(&tx, Timestamp::ZERO, 0, 1, Direction::SentByTarget).unwrap();
        assert_eq!(recs[0].tx, TxHash(sha256d(b"body")));
        assert_eq!(recs[0].msg, MessageKind::Tx);
    }
}
