//! Manifest-driven access to multi-sub-corpus JSONL collections.
//!
//! A corpus is described by a [`CorpusManifest`] listing one JSONL file per
//! sub-corpus. Files are never loaded whole: [`Corpus::records`] streams
//! [`DocumentRecord`]s line by line, so statistics, chunking and probe
//! construction work on corpora far larger than memory.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::error::{Error, Result};

/// Smallest chunk window accepted by [`chunk_text`].
pub const MIN_WINDOW_CHARS: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub subcorpus_id: String,
    pub path: PathBuf,
    #[serde(default)]
    pub jurisdiction: String,
    #[serde(default)]
    pub doc_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    #[serde(default)]
    pub version: String,
    pub entries: Vec<ManifestEntry>,
}

impl CorpusManifest {
    /// Reads a manifest; relative entry paths resolve against the
    /// manifest's own directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: CorpusManifest = serde_json::from_reader(BufReader::new(file))?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        for entry in &mut manifest.entries {
            if entry.path.is_relative() {
                entry.path = base.join(&entry.path);
            }
        }
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::invalid("manifest lists no sub-corpora"));
        }
        let mut seen = HashSet::new();
        for entry in &self.entries {
            if entry.subcorpus_id.is_empty() {
                return Err(Error::invalid("empty subcorpus_id in manifest"));
            }
            if !seen.insert(entry.subcorpus_id.as_str()) {
                return Err(Error::invalid(format!(
                    "duplicate subcorpus_id `{}` in manifest",
                    entry.subcorpus_id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Which documents a stream should yield.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitFilter {
    #[default]
    All,
    Only(Split),
}

impl SplitFilter {
    pub fn accepts(self, split: Split) -> bool {
        match self {
            SplitFilter::All => true,
            SplitFilter::Only(s) => s == split,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub doc_id: String,
    pub subcorpus_id: String,
    pub text: String,
    pub split: Split,
    pub approx_tokens: usize,
}

/// Whitespace-delimited token count.
pub fn whitespace_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Deterministic split for a document: a keyed 64-bit hash of the id is
/// compared against `test_fraction` of the hash range.
pub fn assign_split(doc_id: &str, seed: u64, test_fraction: f64) -> Split {
    let h = xxh3_64_with_seed(doc_id.as_bytes(), seed) as u128;
    let threshold = (test_fraction * 18_446_744_073_709_551_616.0) as u128;
    if h < threshold {
        Split::Test
    } else {
        Split::Train
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IngestOptions {
    /// Fail on the first malformed line instead of skipping it.
    pub strict: bool,
    pub test_fraction: f64,
    pub split_seed: u64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            strict: false,
            test_fraction: 0.1,
            split_seed: 0,
        }
    }
}

/// Streaming handle over the documents of every sub-corpus in a manifest.
#[derive(Debug, Clone)]
pub struct Corpus {
    manifest: CorpusManifest,
    options: IngestOptions,
    malformed: Arc<AtomicUsize>,
}

/// Opens a corpus. Every file must exist now; contents are read lazily.
pub fn ingest(manifest: CorpusManifest, options: IngestOptions) -> Result<Corpus> {
    manifest.validate()?;
    check_fraction(options.test_fraction)?;
    for entry in &manifest.entries {
        if !entry.path.is_file() {
            return Err(Error::io(
                &entry.path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "sub-corpus file not found"),
            ));
        }
    }
    Ok(Corpus {
        manifest,
        options,
        malformed: Arc::new(AtomicUsize::new(0)),
    })
}

fn check_fraction(test_fraction: f64) -> Result<()> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "test_fraction must lie strictly between 0 and 1, got {test_fraction}"
        )));
    }
    Ok(())
}

impl Corpus {
    pub fn manifest(&self) -> &CorpusManifest {
        &self.manifest
    }

    pub fn options(&self) -> IngestOptions {
        self.options
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.manifest.entries
    }

    /// Re-keys split assignment. Splits given explicitly in the input still win.
    pub fn assign_splits(mut self, test_fraction: f64, seed: u64) -> Result<Self> {
        check_fraction(test_fraction)?;
        self.options.test_fraction = test_fraction;
        self.options.split_seed = seed;
        Ok(self)
    }

    /// Malformed lines skipped so far, across all streams opened from this handle.
    pub fn malformed_lines(&self) -> usize {
        self.malformed.load(Ordering::Relaxed)
    }

    /// Streams the documents of one sub-corpus in file order.
    pub fn records(&self, entry: &ManifestEntry) -> Result<RecordIter> {
        let file = File::open(&entry.path).map_err(|e| Error::io(&entry.path, e))?;
        Ok(RecordIter {
            lines: BufReader::new(file),
            buf: String::new(),
            line_no: 0,
            path: entry.path.clone(),
            subcorpus_id: entry.subcorpus_id.clone(),
            options: self.options,
            malformed: Arc::clone(&self.malformed),
        })
    }

    /// All sub-corpora, manifest order, file order within each.
    pub fn all_records(&self) -> impl Iterator<Item = Result<DocumentRecord>> + '_ {
        self.entries()
            .iter()
            .flat_map(move |entry| match self.records(entry) {
                Ok(iter) => Box::new(iter) as Box<dyn Iterator<Item = Result<DocumentRecord>>>,
                Err(e) => Box::new(std::iter::once(Err(e))),
            })
    }

    /// Whitespace-bounded chunks of every document of one sub-corpus.
    pub fn chunks(
        &self,
        entry: &ManifestEntry,
        window_chars: usize,
        filter: SplitFilter,
    ) -> Result<impl Iterator<Item = Result<Chunk>>> {
        if window_chars < MIN_WINDOW_CHARS {
            return Err(Error::invalid(format!(
                "window_chars must be at least {MIN_WINDOW_CHARS}, got {window_chars}"
            )));
        }
        let records = self.records(entry)?;
        Ok(records.flat_map(move |rec| -> Vec<Result<Chunk>> {
            match rec {
                Ok(doc) if filter.accepts(doc.split) => chunk_text(&doc.text, window_chars)
                    .into_iter()
                    .map(|text| {
                        Ok(Chunk {
                            doc_id: doc.doc_id.clone(),
                            subcorpus_id: doc.subcorpus_id.clone(),
                            text,
                        })
                    })
                    .collect(),
                Ok(_) => Vec::new(),
                Err(e) => vec![Err(e)],
            }
        }))
    }
}

#[derive(Deserialize)]
struct RawLine {
    id: String,
    text: String,
    #[serde(default)]
    split: Option<Split>,
}

pub struct RecordIter {
    lines: BufReader<File>,
    buf: String,
    line_no: usize,
    path: PathBuf,
    subcorpus_id: String,
    options: IngestOptions,
    malformed: Arc<AtomicUsize>,
}

impl RecordIter {
    fn parse(&self, line: &str) -> std::result::Result<DocumentRecord, String> {
        let raw: RawLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
        if raw.id.is_empty() {
            return Err("empty `id`".into());
        }
        if raw.text.trim().is_empty() {
            return Err("empty `text`".into());
        }
        let split = raw.split.unwrap_or_else(|| {
            assign_split(&raw.id, self.options.split_seed, self.options.test_fraction)
        });
        Ok(DocumentRecord {
            approx_tokens: whitespace_tokens(&raw.text),
            doc_id: raw.id,
            subcorpus_id: self.subcorpus_id.clone(),
            text: raw.text,
            split,
        })
    }
}

impl Iterator for RecordIter {
    type Item = Result<DocumentRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.lines.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            }
            self.line_no += 1;
            let line = self.buf.trim();
            if line.is_empty() {
                continue;
            }
            match self.parse(line) {
                Ok(rec) => return Some(Ok(rec)),
                Err(reason) if self.options.strict => {
                    return Some(Err(Error::Malformed {
                        path: self.path.clone(),
                        line: self.line_no,
                        reason,
                    }))
                }
                Err(reason) => {
                    log::warn!(
                        "{}:{}: skipping malformed line: {reason}",
                        self.path.display(),
                        self.line_no
                    );
                    self.malformed.fetch_add(1, Ordering::Relaxed);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub subcorpus_id: String,
    pub text: String,
}

/// Greedily packs whitespace tokens into chunks of at most `window_chars`
/// characters, joined by single spaces. A single token longer than the
/// window is hard-split on character boundaries.
pub fn chunk_text(text: &str, window_chars: usize) -> Vec<String> {
    let window_chars = window_chars.max(1);
    let mut chunks = Vec::new();
    let mut current = String::new();
    let mut current_chars = 0usize;
    for word in text.split_whitespace() {
        let word_chars = word.chars().count();
        if word_chars > window_chars {
            if !current.is_empty() {
                chunks.push(std::mem::take(&mut current));
                current_chars = 0;
            }
            let chars: Vec<char> = word.chars().collect();
            for piece in chars.chunks(window_chars) {
                chunks.push(piece.iter().collect());
            }
            continue;
        }
        let needed = if current.is_empty() { word_chars } else { current_chars + 1 + word_chars };
        if needed > window_chars {
            chunks.push(std::mem::take(&mut current));
            current_chars = 0;
        }
        if !current.is_empty() {
            current.push(' ');
            current_chars += 1;
        }
        current.push_str(word);
        current_chars += word_chars;
    }
    if !current.is_empty() {
        chunks.push(current);
    }
    chunks
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubcorpusStats {
    pub subcorpus_id: String,
    pub doc_count: usize,
    pub token_count: usize,
    /// `None` when the whole corpus holds no tokens.
    pub share: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub subcorpora: Vec<SubcorpusStats>,
    pub total_docs: usize,
    pub total_tokens: usize,
    /// False when the corpus is empty and shares are undefined.
    pub shares_defined: bool,
    pub duplicate_ids: usize,
    pub malformed_lines: usize,
}

/// Per-sub-corpus tallies. Merging is commutative and associative, so
/// partial counts from parallel readers can be combined in any order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StatsAccumulator {
    pub doc_count: usize,
    pub token_count: usize,
    pub duplicate_ids: usize,
}

impl StatsAccumulator {
    pub fn add(&mut self, approx_tokens: usize) {
        self.doc_count += 1;
        self.token_count += approx_tokens;
    }

    pub fn merge(mut self, other: &StatsAccumulator) -> Self {
        self.doc_count += other.doc_count;
        self.token_count += other.token_count;
        self.duplicate_ids += other.duplicate_ids;
        self
    }
}

impl CorpusStats {
    /// Builds normalized statistics from per-sub-corpus tallies.
    pub fn from_tallies(tallies: Vec<(String, StatsAccumulator)>, malformed_lines: usize) -> Self {
        let total_docs = tallies.iter().map(|(_, t)| t.doc_count).sum();
        let total_tokens: usize = tallies.iter().map(|(_, t)| t.token_count).sum();
        let duplicate_ids = tallies.iter().map(|(_, t)| t.duplicate_ids).sum();
        let shares_defined = total_tokens > 0;
        let subcorpora = tallies
            .into_iter()
            .map(|(subcorpus_id, t)| SubcorpusStats {
                subcorpus_id,
                doc_count: t.doc_count,
                token_count: t.token_count,
                share: shares_defined.then(|| t.token_count as f64 / total_tokens as f64),
            })
            .collect();
        CorpusStats {
            subcorpora,
            total_docs,
            total_tokens,
            shares_defined,
            duplicate_ids,
            malformed_lines,
        }
    }

    pub fn shares(&self) -> Option<Vec<f64>> {
        self.subcorpora.iter().map(|s| s.share).collect()
    }

    /// Markdown table with the columns of a corpus overview: documents,
    /// tokens with percentage share and, when given, sampling rates.
    pub fn to_markdown(&self, sampling_rates: Option<&[f64]>) -> String {
        let mut out = String::new();
        out.push_str("| Sub-Corpus | # Documents | # Tokens / Percentage (%) |");
        if sampling_rates.is_some() {
            out.push_str(" Sampling Smoothing (%) |");
        }
        out.push_str("\n|:---|---:|---:|");
        if sampling_rates.is_some() {
            out.push_str("---:|");
        }
        out.push('\n');
        for (i, s) in self.subcorpora.iter().enumerate() {
            let _ = write!(
                out,
                "| {} | {} | {} ({}) |",
                s.subcorpus_id,
                humanize(s.doc_count),
                humanize(s.token_count),
                percent(s.share)
            );
            if let Some(rates) = sampling_rates {
                let _ = write!(out, " {} |", percent(rates.get(i).copied()));
            }
            out.push('\n');
        }
        let _ = write!(
            out,
            "| **Total** | {} | {} ({}) |",
            humanize(self.total_docs),
            humanize(self.total_tokens),
            if self.shares_defined { "100%" } else { "n/a" }
        );
        if sampling_rates.is_some() {
            out.push_str(" 100% |");
        }
        out.push('\n');
        out
    }
}

fn percent(share: Option<f64>) -> String {
    match share {
        Some(s) => format!("{:04.1}%", s * 100.0),
        None => "n/a".to_string(),
    }
}

/// 233_700_000 -> "233.7M".
pub fn humanize(n: usize) -> String {
    let v = n as f64;
    if n >= 1_000_000_000 {
        format!("{:.1}B", v / 1e9)
    } else if n >= 1_000_000 {
        format!("{:.1}M", v / 1e6)
    } else if n >= 1_000 {
        format!("{:.1}K", v / 1e3)
    } else {
        n.to_string()
    }
}

/// Exact document and whitespace-token counts per sub-corpus. Sub-corpora
/// are read in parallel.
pub fn compute_stats(corpus: &Corpus) -> Result<CorpusStats> {
    let tallies = corpus
        .entries()
        .par_iter()
        .map(|entry| {
            let mut acc = StatsAccumulator::default();
            let mut ids = HashSet::new();
            for rec in corpus.records(entry)? {
                let rec = rec?;
                if !ids.insert(rec.doc_id) {
                    acc.duplicate_ids += 1;
                }
                acc.add(rec.approx_tokens);
            }
            Ok((entry.subcorpus_id.clone(), acc))
        })
        .collect::<Result<Vec<_>>>()?;
    let stats = CorpusStats::from_tallies(tallies, corpus.malformed_lines());
    if stats.duplicate_ids > 0 {
        log::warn!("{} duplicate document ids within sub-corpora", stats.duplicate_ids);
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(dir: &Path, name: &str, body: &str) -> PathBuf {
        let path = dir.join(name);
        let mut f = File::create(&path).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        path
    }

    fn manifest_of(entries: Vec<(&str, PathBuf)>) -> CorpusManifest {
        CorpusManifest {
            version: "test".into(),
            entries: entries
                .into_iter()
                .map(|(id, path)| ManifestEntry {
                    subcorpus_id: id.into(),
                    path,
                    jurisdiction: String::new(),
                    doc_type: String::new(),
                })
                .collect(),
        }
    }

    #[test]
    fn empty_file_yields_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(dir.path(), "a.jsonl", "");
        let corpus = ingest(manifest_of(vec![("a", p)]), IngestOptions::default()).unwrap();
        assert_eq!(corpus.all_records().count(), 0);
    }

    #[test]
    fn records_come_in_file_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(
            dir.path(),
            "a.jsonl",
            "{\"id\":\"x\",\"text\":\"one\"}\n{\"id\":\"y\",\"text\":\"two words\"}\n{\"id\":\"z\",\"text\":\"a b c\",\"split\":\"test\"}\n",
        );
        let corpus = ingest(manifest_of(vec![("a", p)]), IngestOptions::default()).unwrap();
        let recs: Vec<_> = corpus.all_records().map(|r| r.unwrap()).collect();
        let ids: Vec<_> = recs.iter().map(|r| r.doc_id.as_str()).collect();
        assert_eq!(ids, ["x", "y", "z"]);
        assert_eq!(recs[1].approx_tokens, 2);
        assert_eq!(recs[2].split, Split::Test);
    }

    #[test]
    fn malformed_line_is_skipped_and_counted() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(
            dir.path(),
            "a.jsonl",
            "{\"id\":\"1\",\"text\":\"a\"}\n{\"id\":2,\"text\":\"b\"\n{\"id\":\"3\",\"text\":\"c\"}\n{\"id\":\"4\",\"text\":\"d\"}\n",
        );
        let corpus = ingest(manifest_of(vec![("a", p.clone())]), IngestOptions::default()).unwrap();
        assert_eq!(corpus.all_records().filter(|r| r.is_ok()).count(), 3);
        assert_eq!(corpus.malformed_lines(), 1);

        let strict = IngestOptions { strict: true, ..Default::default() };
        let corpus = ingest(manifest_of(vec![("a", p)]), strict).unwrap();
        let err = corpus.all_records().find_map(|r| r.err()).unwrap();
        assert!(matches!(err, Error::Malformed { line: 2, .. }));
    }

    #[test]
    fn missing_file_is_fatal() {
        let m = manifest_of(vec![("a", PathBuf::from("/nonexistent/x.jsonl"))]);
        assert!(matches!(ingest(m, IngestOptions::default()), Err(Error::Io { .. })));
    }

    #[test]
    fn duplicate_subcorpus_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(dir.path(), "a.jsonl", "");
        let m = manifest_of(vec![("a", p.clone()), ("a", p)]);
        assert!(matches!(ingest(m, IngestOptions::default()), Err(Error::Invalid(_))));
    }

    #[test]
    fn stats_shares_follow_token_counts() {
        let dir = tempfile::tempdir().unwrap();
        let sixty = vec!["w"; 60].join(" ");
        let forty = vec!["w"; 40].join(" ");
        let a = write_file(dir.path(), "a.jsonl", &format!("{{\"id\":\"1\",\"text\":\"{sixty}\"}}\n"));
        let b = write_file(dir.path(), "b.jsonl", &format!("{{\"id\":\"1\",\"text\":\"{forty}\"}}\n"));
        let corpus = ingest(manifest_of(vec![("a", a), ("b", b)]), IngestOptions::default()).unwrap();
        let stats = compute_stats(&corpus).unwrap();
        assert_eq!(stats.total_tokens, 100);
        assert_eq!(stats.shares().unwrap(), vec![0.6, 0.4]);
    }

    #[test]
    fn single_subcorpus_has_full_share() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_file(dir.path(), "a.jsonl", "{\"id\":\"1\",\"text\":\"x y\"}\n");
        let corpus = ingest(manifest_of(vec![("a", a)]), IngestOptions::default()).unwrap();
        assert_eq!(compute_stats(&corpus).unwrap().shares().unwrap(), vec![1.0]);
    }

    #[test]
    fn empty_corpus_flags_undefined_shares() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_file(dir.path(), "a.jsonl", "");
        let corpus = ingest(manifest_of(vec![("a", a)]), IngestOptions::default()).unwrap();
        let stats = compute_stats(&corpus).unwrap();
        assert!(!stats.shares_defined);
        assert_eq!(stats.total_docs, 0);
        assert!(stats.shares().is_none());
    }

    #[test]
    fn zero_test_fraction_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_file(dir.path(), "a.jsonl", "");
        let corpus = ingest(manifest_of(vec![("a", a)]), IngestOptions::default()).unwrap();
        assert!(corpus.clone().assign_splits(0.0, 1).is_err());
        assert!(corpus.assign_splits(1.0, 1).is_err());
    }

    #[test]
    fn split_is_deterministic_and_near_fraction() {
        let ids: Vec<String> = (0..10_000).map(|i| format!("doc-{i}")).collect();
        let first: Vec<Split> = ids.iter().map(|id| assign_split(id, 7, 0.1)).collect();
        let second: Vec<Split> = ids.iter().map(|id| assign_split(id, 7, 0.1)).collect();
        assert_eq!(first, second);
        let test = first.iter().filter(|s| **s == Split::Test).count() as f64 / 10_000.0;
        assert!((0.08..=0.12).contains(&test), "test share {test}");
    }

    #[test]
    fn short_document_is_one_chunk() {
        assert_eq!(chunk_text("a short document", 1000), vec!["a short document"]);
        assert!(chunk_text("", 1000).is_empty());
        assert!(chunk_text("   \n ", 1000).is_empty());
    }

    #[test]
    fn long_document_chunks_preserve_words() {
        // 500 five-char words ("wXXXX") => 2999 chars with single spaces.
        let words: Vec<String> = (0..500).map(|i| format!("w{:04}", i)).collect();
        let doc = words.join(" ");
        let doc = &doc[..2500];
        let chunks = chunk_text(doc, 1000);
        assert_eq!(chunks.len(), 3);
        assert!(chunks.iter().all(|c| c.chars().count() <= 1000));
        let rejoined = chunks.join(" ");
        assert!(rejoined.split_whitespace().eq(doc.split_whitespace()));
    }

    #[test]
    fn small_window_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_file(dir.path(), "a.jsonl", "");
        let corpus = ingest(manifest_of(vec![("a", a)]), IngestOptions::default()).unwrap();
        let entry = corpus.entries()[0].clone();
        assert!(corpus.chunks(&entry, 199, SplitFilter::All).is_err());
    }

    #[test]
    fn humanize_matches_table_style() {
        assert_eq!(humanize(233_700_000), "233.7M");
        assert_eq!(humanize(11_400_000_000), "11.4B");
        assert_eq!(humanize(93_700), "93.7K");
        assert_eq!(humanize(518), "518");
    }
}
