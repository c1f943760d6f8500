//! JSON-lines files with an optional self-describing first line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const HEADER_KEY: &str = "_header";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub tool: String,
    pub version: String,
    pub kind: String,
    pub seed: Option<u64>,
    pub config: Value,
    /// Hex digest of the canonical config JSON.
    pub config_digest: String,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    #[serde(rename = "_header")]
    header: Header,
}

pub fn write_jsonl<T: Serialize>(mut out: impl Write, header: Option<&Header>, items: &[T]) -> Result<()> {
    if let Some(h) = header {
        serde_json::to_writer(&mut out, &HeaderLine { header: h.clone() })?;
        out.write_all(b"\n").map_err(|e| Error::io("<output>", e))?;
    }
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n").map_err(|e| Error::io("<output>", e))?;
    }
    out.flush().map_err(|e| Error::io("<output>", e))
}

pub fn save_jsonl<T: Serialize>(path: impl AsRef<Path>, header: Option<&Header>, items: &[T]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_jsonl(BufWriter::new(file), header, items).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Reads every non-blank line; header lines are returned separately.
pub fn read_jsonl<T: DeserializeOwned>(input: impl BufRead, origin: &Path) -> Result<(Option<Header>, Vec<T>)> {
    let mut header = None;
    let mut items = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| Error::Malformed {
            path: origin.to_path_buf(),
            line: i + 1,
            reason,
        };
        let value: Value = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        if value.get(HEADER_KEY).is_some() {
            let h: HeaderLine = serde_json::from_value(value).map_err(|e| malformed(e.to_string()))?;
            header.get_or_insert(h.header);
            continue;
        }
        items.push(serde_json::from_value(value).map_err(|e| malformed(e.to_string()))?);
    }
    Ok((header, items))
}

pub fn load_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<(Option<Header>, Vec<T>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_jsonl(BufReader::new(file), path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_split_off() {
        let header = Header {
            tool: "lexkit".into(),
            version: "0.1.0".into(),
            kind: "numbers".into(),
            seed: Some(3),
            config: serde_json::json!({"a": 1}),
            config_digest: "00".into(),
        };
        let mut buf = Vec::new();
        write_jsonl(&mut buf, Some(&header), &[1u32, 2, 3]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("{\"_header\":"));
        let (h, items): (_, Vec<u32>) = read_jsonl(&buf[..], Path::new("mem")).unwrap();
        assert_eq!(h, Some(header));
        assert_eq!(items, vec![1, 2, 3]);
    }

    #[test]
    fn bad_line_reports_position() {
        let err = read_jsonl::<u32>(&b"1\n\nnope\n"[..], Path::new("mem")).unwrap_err();
        assert!(matches!(err, Error::Malformed { line: 3, .. }));
    }
}
