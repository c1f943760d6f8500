#![allow(dead_code)]

use std::fs;
use std::path::Path;

use lexkit::corpus::{ingest, Corpus, CorpusManifest, IngestOptions, ManifestEntry};

/// Writes one JSONL file per sub-corpus and opens them as a corpus.
pub fn corpus_from(dir: &Path, subcorpora: &[(&str, Vec<(String, String)>)], options: IngestOptions) -> Corpus {
    let entries = subcorpora
        .iter()
        .map(|(id, docs)| {
            let path = dir.join(format!("{id}.jsonl"));
            let body: String = docs
                .iter()
                .map(|(doc_id, text)| serde_json::json!({"id": doc_id, "text": text}).to_string() + "\n")
                .collect();
            fs::write(&path, body).unwrap();
            ManifestEntry {
                subcorpus_id: id.to_string(),
                path,
                jurisdiction: String::new(),
                doc_type: String::new(),
            }
        })
        .collect();
    ingest(CorpusManifest { version: "test".into(), entries }, options).unwrap()
}

/// Same, with every document forced into the test split.
pub fn test_split_corpus(dir: &Path, subcorpora: &[(&str, Vec<(String, String)>)]) -> Corpus {
    let entries = subcorpora
        .iter()
        .map(|(id, docs)| {
            let path = dir.join(format!("{id}.jsonl"));
            let body: String = docs
                .iter()
                .map(|(doc_id, text)| {
                    serde_json::json!({"id": doc_id, "text": text, "split": "test"}).to_string() + "\n"
                })
                .collect();
            fs::write(&path, body).unwrap();
            ManifestEntry {
                subcorpus_id: id.to_string(),
                path,
                jurisdiction: String::new(),
                doc_type: String::new(),
            }
        })
        .collect();
    ingest(CorpusManifest { version: "test".into(), entries }, IngestOptions::default()).unwrap()
}

pub const WORDS: &[&str] = &[
    "court", "held", "appeal", "tribunal", "evidence", "witness", "counsel", "hearing", "order", "clause",
    "party", "notice", "period", "article", "member", "state", "review", "record", "claim", "trial",
];
