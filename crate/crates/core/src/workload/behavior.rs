//! User behavior records and their JSONL persistence.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    Search,
    View,
    Book,
    Pay,
    Cancel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehaviorRecord {
    pub user_id: String,
    pub timestamp_s: f64,
    pub action: Action,
    pub destination: Option<String>,
    pub price: Option<f64>,
    pub payment_channel: Option<String>,
}

/// A record as it may arrive from an untrusted log: every field optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RawRecord {
    pub user_id: Option<String>,
    pub timestamp_s: Option<f64>,
    pub action: Option<Action>,
    pub destination: Option<String>,
    pub price: Option<f64>,
    pub payment_channel: Option<String>,
}

impl From<BehaviorRecord> for RawRecord {
    fn from(r: BehaviorRecord) -> Self {
        RawRecord {
            user_id: Some(r.user_id),
            timestamp_s: Some(r.timestamp_s),
            action: Some(r.action),
            destination: r.destination,
            price: r.price,
            payment_channel: r.payment_channel,
        }
    }
}

impl RawRecord {
    /// Convert when all required fields are present.
    pub fn into_record(self) -> Option<BehaviorRecord> {
        Some(BehaviorRecord {
            user_id: self.user_id?,
            timestamp_s: self.timestamp_s?,
            action: self.action?,
            destination: self.destination,
            price: self.price,
            payment_channel: self.payment_channel,
        })
    }
}

pub fn write_trace(records: &[BehaviorRecord], path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Strict reader: every line must carry `user_id`, `timestamp_s` and `action`.
pub fn read_trace(path: &Path) -> Result<Vec<BehaviorRecord>> {
    read_lines(path)
}

/// Lenient reader for logs that still need cleaning.
pub fn read_raw_trace(path: &Path) -> Result<Vec<RawRecord>> {
    read_lines(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(u: &str, t: f64, a: Action) -> BehaviorRecord {
        BehaviorRecord {
            user_id: u.into(),
            timestamp_s: t,
            action: a,
            destination: Some("holiday".into()),
            price: Some(123.456789),
            payment_channel: None,
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        let xs = vec![
            rec("u1", 0.1, Action::Search),
            rec("u1", 2.7, Action::Book),
            BehaviorRecord { payment_channel: Some("card".into()), ..rec("u2", 1.0 / 3.0, Action::Pay) },
        ];
        write_trace(&xs, &p).unwrap();
        assert_eq!(read_trace(&p).unwrap(), xs);
    }

    #[test]
    fn empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.jsonl");
        std::fs::write(&p, "").unwrap();
        assert!(read_trace(&p).unwrap().is_empty());
    }

    #[test]
    fn missing_timestamp_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.jsonl");
        std::fs::write(
            &p,
            "{\"user_id\":\"a\",\"timestamp_s\":1.0,\"action\":\"search\",\"destination\":null,\"price\":null,\"payment_channel\":null}\n{\"user_id\":\"a\",\"action\":\"view\",\"destination\":null,\"price\":null,\"payment_channel\":null}\n",
        )
        .unwrap();
        match read_trace(&p) {
            Err(Error::Parse { line, reason, .. }) => {
                assert_eq!(line, 2);
                assert!(reason.contains("timestamp_s"), "{reason}");
            }
            other => panic!("{other:?}"),
        }
    }
}
