use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::wiremsg::TxHash;

use super::network::{NodeId, TARGET};

#[derive(Debug, Error)]
pub enum TruthError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate entry for {tx}")]
    Duplicate { line: usize, tx: TxHash },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Originating node of every simulated transaction, in origination order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundTruth {
    entries: Vec<(TxHash, NodeId)>,
    index: HashMap<TxHash, usize>,
}

impl GroundTruth {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false (and keeps the first entry) if `tx` is already present.
    pub fn insert(&mut self, tx: TxHash, origin: NodeId) -> bool {
        if self.index.contains_key(&tx) {
            return false;
        }
        self.index.insert(tx, self.entries.len());
        self.entries.push((tx, origin));
        true
    }

    pub fn origin(&self, tx: &TxHash) -> Option<NodeId> {
        self.index.get(tx).map(|&i| self.entries[i].1)
    }

    pub fn is_target_origin(&self, tx: &TxHash) -> bool {
        self.origin(tx) == Some(TARGET)
    }

    pub fn contains(&self, tx: &TxHash) -> bool {
        self.index.contains_key(tx)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (TxHash, NodeId)> + '_ {
        self.entries.iter().copied()
    }

    pub fn target_count(&self) -> usize {
        self.entries.iter().filter(|(_, o)| *o == TARGET).count()
    }
}

impl FromIterator<(TxHash, NodeId)> for GroundTruth {
    fn from_iter<I: IntoIterator<Item = (TxHash, NodeId)>>(iter: I) -> Self {
        let mut t = GroundTruth::new();
        for (tx, o) in iter {
            t.insert(tx, o);
        }
        t
    }
}

/// Lines of the form `tx=<hex> origin=<node id>`.
pub fn write_truth(truth: &GroundTruth, path: &Path) -> Result<(), TruthError> {
    let mut w = BufWriter::new(File::create(path)?);
    for (tx, origin) in truth.iter() {
        writeln!(w, "tx={tx} origin={origin}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_truth(path: &Path) -> Result<GroundTruth, TruthError> {
    let reader = BufReader::new(File::open(path)?);
    let mut truth = GroundTruth::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let malformed = |message: String| TruthError::Malformed { line: line_no, message };
        let mut fields = line.split_ascii_whitespace();
        let tx = fields
            .next()
            .and_then(|f| f.strip_prefix("tx="))
            .ok_or_else(|| malformed("expected tx=<hex>".into()))?
            .parse::<TxHash>()
            .map_err(malformed)?;
        let origin = fields
            .next()
            .and_then(|f| f.strip_prefix("origin="))
            .ok_or_else(|| malformed("expected origin=<id>".into()))?
            .parse::<NodeId>()
            .map_err(|e| malformed(format!("origin: {e}")))?;
        if fields.next().is_some() {
            return Err(malformed("unexpected trailing field".into()));
        }
        if !truth.insert(tx, origin) {
            return Err(TruthError::Duplicate { line: line_no, tx });
        }
    }
    Ok(truth)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("truth.txt");
        let truth: GroundTruth = [(TxHash([1; 32]), 0), (TxHash([2; 32]), 17)].into_iter().collect();
        write_truth(&truth, &path).unwrap();
        let back = read_truth(&path).unwrap();
        assert_eq!(back, truth);
        assert!(back.is_target_origin(&TxHash([1; 32])));
        assert!(!back.is_target_origin(&TxHash([2; 32])));
        assert!(!back.is_target_origin(&TxHash([3; 32])));
        assert_eq!(back.target_count(), 1);
    }

    #[test]
    fn duplicate_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t");
        let h = TxHash([4; 32]);
        std::fs::write(&path, format!("tx={h} origin=1\ntx={h} origin=2\n")).unwrap();
        assert!(matches!(read_truth(&path), Err(TruthError::Duplicate { line: 2, .. })));
    }
}
