//! Per-transaction traffic counters.
//!
//! For each hash seen in a trace: how many times the target announced it
//! (`inv_num`), how many times a peer requested it from the target
//! (`getdata_num`), their ratio and their sum. A node announces its own
//! transactions to every peer, while a relayed transaction skips the peers that
//! announced it first, so originated transactions stand out on both counts.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use thiserror::Error;

use crate::wiremsg::{Direction, MessageKind, TraceRecord, TxHash};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("{scores} scores for {rows} rows")]
    LengthMismatch { rows: usize, scores: usize },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureRow {
    pub tx: TxHash,
    pub inv_num: u32,
    pub getdata_num: u32,
    /// `getdata_num / inv_num`, or 0 when nothing was announced.
    pub ratio: f64,
    pub sum: u32,
    pub score: Option<f64>,
}

impl FeatureRow {
    pub fn from_counts(tx: TxHash, inv_num: u32, getdata_num: u32) -> Self {
        let ratio = if inv_num > 0 { f64::from(getdata_num) / f64::from(inv_num) } else { 0.0 };
        FeatureRow { tx, inv_num, getdata_num, ratio, sum: inv_num + getdata_num, score: None }
    }

    /// `[inv, getdata, ratio, sum]` followed by the score when present.
    pub fn values(&self) -> Vec<f64> {
        let mut v = vec![f64::from(self.inv_num), f64::from(self.getdata_num), self.ratio, f64::from(self.sum)];
        v.extend(self.score);
        v
    }
}

/// Rows with unique hashes and a uniform dimension of 4 (counters) or 5
/// (counters plus anomaly score).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureMatrix {
    rows: Vec<FeatureRow>,
}

impl FeatureMatrix {
    pub fn new(rows: Vec<FeatureRow>) -> Result<Self, FeatureError> {
        let with_score = rows.iter().filter(|r| r.score.is_some()).count();
        if with_score != 0 && with_score != rows.len() {
            return Err(FeatureError::Malformed { line: 0, message: "mixed row dimensions".into() });
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = rows.iter().find(|r| !seen.insert(r.tx)) {
            return Err(FeatureError::Malformed { line: 0, message: format!("duplicate hash {}", dup.tx) });
        }
        Ok(FeatureMatrix { rows })
    }

    pub fn rows(&self) -> &[FeatureRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        match self.rows.first() {
            Some(r) if r.score.is_some() => 5,
            _ => 4,
        }
    }

    pub fn hashes(&self) -> Vec<TxHash> {
        self.rows.iter().map(|r| r.tx).collect()
    }

    /// Rows at the given indices, in that order.
    pub fn select(&self, indices: &[usize]) -> FeatureMatrix {
        FeatureMatrix { rows: indices.iter().map(|&i| self.rows[i]).collect() }
    }

    /// The four counter columns, without any score.
    pub fn strip_score(&self) -> FeatureMatrix {
        FeatureMatrix { rows: self.rows.iter().map(|r| FeatureRow { score: None, ..*r }).collect() }
    }

    pub fn to_array(&self) -> Array2<f64> {
        let d = self.dim();
        let mut a = Array2::zeros((self.rows.len(), d));
        for (i, r) in self.rows.iter().enumerate() {
            for (j, v) in r.values().into_iter().enumerate() {
                a[[i, j]] = v;
            }
        }
        a
    }
}

/// Counts sent invs and received getdatas per hash. Every hash present in the
/// trace gets a row; rows are ordered by hash, so the result does not depend
/// on record order.
pub fn aggregate(trace: &[TraceRecord]) -> FeatureMatrix {
    let mut counts: BTreeMap<TxHash, (u32, u32)> = BTreeMap::new();
    for r in trace {
        let c = counts.entry(r.tx).or_default();
        match (r.dir, r.msg) {
            (Direction::SentByTarget, MessageKind::Inv) => c.0 += 1,
            (Direction::ReceivedByTarget, MessageKind::Getdata) => c.1 += 1,
            _ => {}
        }
    }
    FeatureMatrix { rows: counts.into_iter().map(|(tx, (i, g))| FeatureRow::from_counts(tx, i, g)).collect() }
}

/// Appends one score per row, aligned by index.
pub fn augment(matrix: &FeatureMatrix, scores: &[f64]) -> Result<FeatureMatrix, FeatureError> {
    if matrix.len() != scores.len() {
        return Err(FeatureError::LengthMismatch { rows: matrix.len(), scores: scores.len() });
    }
    Ok(FeatureMatrix {
        rows: matrix.rows.iter().zip(scores).map(|(r, &s)| FeatureRow { score: Some(s), ..*r }).collect(),
    })
}

const HEADER4: [&str; 5] = ["tx", "inv", "getdata", "ratio", "sum"];
const HEADER5: [&str; 6] = ["tx", "inv", "getdata", "ratio", "sum", "score"];

/// CSV with a header line; floats are written with round-trip precision.
pub fn format_features(matrix: &FeatureMatrix) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = "writing to memory cannot fail";
    if matrix.dim() == 5 {
        w.write_record(HEADER5).expect(io);
    } else {
        w.write_record(HEADER4).expect(io);
    }
    for r in &matrix.rows {
        let mut rec = vec![r.tx.to_string(), r.inv_num.to_string(), r.getdata_num.to_string(), format!("{:?}", r.ratio), r.sum.to_string()];
        if let Some(s) = r.score {
            rec.push(format!("{s:?}"));
        }
        w.write_record(&rec).expect(io);
    }
    String::from_utf8(w.into_inner().expect(io)).expect("fields are ASCII")
}

pub fn parse_features(text: &str) -> Result<FeatureMatrix, FeatureError> {
    if text.trim().is_empty() {
        return Ok(FeatureMatrix::default());
    }
    let mut reader = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| FeatureError::Malformed { line: 1, message: e.to_string() })?.clone();
    let with_score = if header.iter().eq(HEADER4) {
        false
    } else if header.iter().eq(HEADER5) {
        true
    } else {
        let shown: Vec<&str> = header.iter().collect();
        return Err(FeatureError::Malformed { line: 1, message: format!("unexpected header {:?}", shown.join(",")) });
    };
    let width = if with_score { 6 } else { 5 };
    let mut rows = Vec::new();
    for record in reader.records() {
        let f = record.map_err(|e| FeatureError::Malformed {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = f.position().map_or(0, |p| p.line() as usize);
        let bad = |message: String| FeatureError::Malformed { line, message };
        if f.len() != width {
            return Err(bad(format!("expected {width} fields, found {}", f.len())));
        }
        let tx = f[0].parse::<TxHash>().map_err(bad)?;
        let int = |s: &str| s.parse::<u32>().map_err(|e| bad(format!("{s:?}: {e}")));
        let float = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
        let (inv_num, getdata_num, ratio, sum) = (int(&f[1])?, int(&f[2])?, float(&f[3])?, int(&f[4])?);
        let score = if with_score { Some(float(&f[5])?) } else { None };
        rows.push(FeatureRow { tx, inv_num, getdata_num, ratio, sum, score });
    }
    FeatureMatrix::new(rows)
}

pub fn write_features(matrix: &FeatureMatrix, path: &Path) -> Result<(), FeatureError> {
    fs::write(path, format_features(matrix))?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<FeatureMatrix, FeatureError> {
    parse_features(&fs::read_to_string(path)?)
}
