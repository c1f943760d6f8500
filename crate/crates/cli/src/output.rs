//! Output files and their self-describing headers.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use lexkit::jsonl::{write_jsonl, Header};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const TOOL: &str = "lexkit";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Header for an output of `kind` produced under `config`. The digest is
/// taken over the compact JSON of the config (object keys sorted).
pub fn header(kind: &str, seed: Option<u64>, config: &impl Serialize) -> Result<Header> {
    let config = serde_json::to_value(config)?;
    let canonical = serde_json::to_vec(&config)?;
    let digest = Sha256::digest(&canonical);
    Ok(Header {
        tool: TOOL.to_string(),
        version: VERSION.to_string(),
        kind: kind.to_string(),
        seed,
        config,
        config_digest: digest.iter().map(|b| format!("{b:02x}")).collect(),
    })
}

fn open(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn write_records<T: Serialize>(path: Option<&Path>, header: &Header, items: &[T]) -> Result<()> {
    let out = open(path)?;
    write_jsonl(out, Some(header), items)?;
    Ok(())
}

/// A JSON document with the header under `_header`, pretty-printed.
pub fn write_json(path: Option<&Path>, header: &Header, body: &impl Serialize) -> Result<()> {
    let mut value = serde_json::to_value(body)?;
    let map = match &mut value {
        serde_json::Value::Object(map) => map,
        _ => anyhow::bail!("JSON outputs must be objects"),
    };
    map.insert("_header".to_string(), serde_json::to_value(header)?);
    let mut out = open(path)?;
    serde_json::to_writer_pretty(&mut out, &value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// A text document prefixed by the header in the comment syntax of `style`.
pub fn write_text(path: Option<&Path>, header: &Header, style: CommentStyle, body: &str) -> Result<()> {
    let line = serde_json::to_string(header)?;
    let mut out = open(path)?;
    match style {
        CommentStyle::Html => writeln!(out, "<!-- {} -->\n", line.replace("--", "-\\u002d"))?,
        CommentStyle::Hash => writeln!(out, "# {line}")?,
    }
    out.write_all(body.as_bytes())?;
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub enum CommentStyle {
    Html,
    Hash,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = header("k", Some(1), &serde_json::json!({"x": 1, "y": [2]})).unwrap();
        let b = header("k", Some(1), &serde_json::json!({"y": [2], "x": 1})).unwrap();
        let c = header("k", Some(1), &serde_json::json!({"x": 2, "y": [2]})).unwrap();
        assert_eq!(a.config_digest, b.config_digest);
        assert_ne!(a.config_digest, c.config_digest);
        assert_eq!(a.config_digest.len(), 64);
    }
}
