//! Cloze probe construction.
//!
//! A probe task is a [`TermVocabulary`]: labelled surface forms grouped into
//! clusters. [`build_probes`] scans the test split of a corpus paragraph by
//! paragraph, keeps paragraphs that mention exactly one vocabulary term as a
//! whole word, cuts a character-budgeted window around it and replaces the
//! term with the [`SPAN`] sentinel. How many mask tokens the sentinel becomes
//! is decided later, by each scorer's tokenizer.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::xxh3_64;

use crate::corpus::{whitespace_tokens, Corpus, DocumentRecord, Split};
use crate::error::{Error, Result};
use crate::scorer::SPAN;

pub const DEFAULT_WINDOW_CHARS: usize = 2000;
pub const DEFAULT_MAX_PER_LABEL: usize = 200;
const SCAN_BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchPolicy {
    #[default]
    CaseSensitive,
    CaseInsensitive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub surface: String,
    pub cluster: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermVocabulary {
    pub task_id: String,
    pub labels: Vec<Label>,
    #[serde(default)]
    pub match_policy: MatchPolicy,
}

impl TermVocabulary {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let vocab: TermVocabulary = serde_json::from_reader(BufReader::new(file))?;
        vocab.validate()?;
        Ok(vocab)
    }

    pub fn validate(&self) -> Result<()> {
        if self.task_id.is_empty() {
            return Err(Error::invalid("vocabulary has an empty task_id"));
        }
        if self.labels.len() < 2 {
            return Err(Error::invalid(format!(
                "task `{}` needs at least 2 labels, has {}",
                self.task_id,
                self.labels.len()
            )));
        }
        let mut seen = HashSet::new();
        for label in &self.labels {
            if label.surface.trim().is_empty() || label.surface.trim() != label.surface {
                return Err(Error::invalid(format!(
                    "label surface `{}` is empty or has surrounding whitespace",
                    label.surface
                )));
            }
            if label.surface.contains(SPAN) {
                return Err(Error::invalid("label surface contains the span sentinel"));
            }
            if label.cluster.is_empty() {
                return Err(Error::invalid(format!("label `{}` has an empty cluster", label.surface)));
            }
            if !seen.insert(label.surface.as_str()) {
                return Err(Error::invalid(format!("label `{}` listed twice", label.surface)));
            }
        }
        Ok(())
    }

    pub fn label(&self, surface: &str) -> Option<&Label> {
        self.labels.iter().find(|l| l.surface == surface)
    }

    /// Distinct clusters in first-appearance order.
    pub fn clusters(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.labels
            .iter()
            .map(|l| l.cluster.as_str())
            .filter(|c| seen.insert(*c))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeInstance {
    pub instance_id: String,
    pub task_id: String,
    pub context: String,
    pub gold_surface: String,
    pub cluster: String,
    pub source_doc: String,
    pub source_subcorpus: String,
    /// Byte offset of the masked span in the source document.
    pub span_start: usize,
}

impl ProbeInstance {
    /// The excerpt with the gold surface put back in place of the sentinel.
    pub fn restore(&self) -> String {
        self.context.replacen(SPAN, &self.gold_surface, 1)
    }
}

/// True for characters that may not touch a match on either side.
fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Whole-word occurrence finder for every label of a vocabulary.
pub struct TermMatcher {
    any: Regex,
    per_label: Vec<Regex>,
}

/// One whole-word hit: label index and byte range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Occurrence {
    pub label: usize,
    pub start: usize,
    pub end: usize,
}

impl TermMatcher {
    pub fn new(vocab: &TermVocabulary) -> Result<Self> {
        let insensitive = vocab.match_policy == MatchPolicy::CaseInsensitive;
        let build = |pattern: &str| {
            RegexBuilder::new(pattern)
                .case_insensitive(insensitive)
                .build()
                .map_err(|e| Error::invalid(format!("cannot compile term pattern: {e}")))
        };
        let per_label = vocab
            .labels
            .iter()
            .map(|l| build(&regex::escape(&l.surface)))
            .collect::<Result<Vec<_>>>()?;
        let alternation = vocab
            .labels
            .iter()
            .map(|l| regex::escape(&l.surface))
            .collect::<Vec<_>>()
            .join("|");
        Ok(Self {
            any: build(&alternation)?,
            per_label,
        })
    }

    /// All whole-word occurrences, overlapping ones included, sorted by
    /// position.
    pub fn occurrences(&self, text: &str) -> Vec<Occurrence> {
        let mut out = Vec::new();
        if !self.any.is_match(text) {
            return out;
        }
        for (label, re) in self.per_label.iter().enumerate() {
            let mut from = 0;
            while let Some(m) = re.find_at(text, from) {
                let before_ok = text[..m.start()].chars().next_back().is_none_or(|c| !is_word_char(c));
                let after_ok = text[m.end()..].chars().next().is_none_or(|c| !is_word_char(c));
                if before_ok && after_ok && m.end() > m.start() {
                    out.push(Occurrence {
                        label,
                        start: m.start(),
                        end: m.end(),
                    });
                }
                match text[m.start()..].chars().next() {
                    Some(c) => from = m.start() + c.len_utf8(),
                    None => break,
                }
                if from > text.len() {
                    break;
                }
            }
        }
        out.sort();
        out
    }

    /// Occurrences left after dropping every hit that lies inside a longer
    /// one ("theft" inside "identity theft").
    pub fn maximal_occurrences(&self, text: &str) -> Vec<Occurrence> {
        let all = self.occurrences(text);
        all.iter()
            .filter(|o| {
                !all.iter().any(|p| {
                    p.start <= o.start && o.end <= p.end && (p.end - p.start) > (o.end - o.start)
                })
            })
            .copied()
            .collect()
    }
}

/// Character window of at most `budget` chars around `span` (byte range)
/// in `text`, snapped inward to word boundaries and trimmed of surrounding
/// whitespace. Returns the window's byte range, or `None` when the span
/// alone exceeds the budget.
pub fn centered_window(text: &str, span: (usize, usize), budget: usize) -> Option<(usize, usize)> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let n = chars.len();
    let to_char = |byte: usize| chars.partition_point(|(b, _)| *b < byte);
    let (cs, ce) = (to_char(span.0), to_char(span.1));
    let span_len = ce - cs;
    if span_len > budget {
        return None;
    }
    let (mut ws, mut we) = if n <= budget {
        (0, n)
    } else {
        let room = budget - span_len;
        let mut left = room / 2;
        let mut right = room - left;
        if cs < left {
            right += left - cs;
            left = cs;
        }
        if n - ce < right {
            left = (left + right - (n - ce)).min(cs);
            right = n - ce;
        }
        let (ws, we) = (cs - left, ce + right);
        let mut ws = ws;
        while ws < cs && ws > 0 && !chars[ws - 1].1.is_whitespace() {
            ws += 1;
        }
        let mut we = we;
        while we > ce && we < n && !chars[we].1.is_whitespace() {
            we -= 1;
        }
        (ws, we)
    };
    while ws < cs && chars[ws].1.is_whitespace() {
        ws += 1;
    }
    while we > ce && chars[we - 1].1.is_whitespace() {
        we -= 1;
    }
    let byte = |c: usize| if c == n { text.len() } else { chars[c].0 };
    Some((byte(ws), byte(we)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildOptions {
    pub window_chars: usize,
    /// Per-label cap enforced by reservoir sampling; `None` keeps everything.
    pub max_per_label: Option<usize>,
    pub seed: u64,
    /// Skip paragraphs mentioning more than one vocabulary term.
    pub skip_multi_occurrence: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            window_chars: DEFAULT_WINDOW_CHARS,
            max_per_label: Some(DEFAULT_MAX_PER_LABEL),
            seed: 0,
            skip_multi_occurrence: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCoverage {
    pub found: usize,
    pub kept: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub task_id: String,
    pub documents_scanned: usize,
    pub paragraphs_with_terms: usize,
    pub paragraphs_skipped_multi: usize,
    pub per_label: BTreeMap<String, LabelCoverage>,
    /// Labels with no instance at all.
    pub missing_labels: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct BuildOutput {
    pub instances: Vec<ProbeInstance>,
    pub coverage: CoverageSummary,
}

/// Fixed-capacity uniform sample of a stream (Algorithm R).
struct Reservoir<T> {
    cap: Option<usize>,
    seen: usize,
    items: Vec<T>,
    rng: ChaCha8Rng,
}

impl<T> Reservoir<T> {
    fn new(cap: Option<usize>, rng: ChaCha8Rng) -> Self {
        Self {
            cap,
            seen: 0,
            items: Vec::new(),
            rng,
        }
    }

    fn offer(&mut self, item: T) {
        self.seen += 1;
        match self.cap {
            Some(cap) if self.items.len() >= cap => {
                let j = self.rng.gen_range(0..self.seen);
                if j < cap {
                    self.items[j] = item;
                }
            }
            _ => self.items.push(item),
        }
    }
}

struct DocScan {
    candidates: Vec<(usize, ProbeInstance)>,
    paragraphs_with_terms: usize,
    skipped_multi: usize,
}

fn scan_document(
    doc: &DocumentRecord,
    vocab: &TermVocabulary,
    matcher: &TermMatcher,
    options: &BuildOptions,
) -> DocScan {
    let mut scan = DocScan {
        candidates: Vec::new(),
        paragraphs_with_terms: 0,
        skipped_multi: 0,
    };
    let mut offset = 0;
    for paragraph in doc.text.split('\n') {
        let base = offset;
        offset += paragraph.len() + 1;
        let hits = matcher.maximal_occurrences(paragraph);
        if hits.is_empty() {
            continue;
        }
        scan.paragraphs_with_terms += 1;
        let chosen: Vec<Occurrence> = if hits.len() == 1 {
            hits
        } else if options.skip_multi_occurrence {
            scan.skipped_multi += 1;
            continue;
        } else {
            hits.iter()
                .filter(|o| hits.iter().filter(|p| p.label == o.label).count() == 1)
                .copied()
                .collect()
        };
        for hit in chosen {
            let Some((ws, we)) = centered_window(paragraph, (hit.start, hit.end), options.window_chars)
            else {
                continue;
            };
            let label = &vocab.labels[hit.label];
            let context = format!(
                "{}{}{}",
                &paragraph[ws..hit.start],
                SPAN,
                &paragraph[hit.end..we]
            );
            let span_start = base + hit.start;
            scan.candidates.push((
                hit.label,
                ProbeInstance {
                    instance_id: format!(
                        "{}/{}/{}/{}",
                        vocab.task_id, doc.subcorpus_id, doc.doc_id, span_start
                    ),
                    task_id: vocab.task_id.clone(),
                    context,
                    gold_surface: label.surface.clone(),
                    cluster: label.cluster.clone(),
                    source_doc: doc.doc_id.clone(),
                    source_subcorpus: doc.subcorpus_id.clone(),
                    span_start,
                },
            ));
        }
    }
    scan
}

/// Canonical instance order: task, sub-corpus, document, span offset.
pub fn canonical_order(a: &ProbeInstance, b: &ProbeInstance) -> std::cmp::Ordering {
    (&a.task_id, &a.source_subcorpus, &a.source_doc, a.span_start).cmp(&(
        &b.task_id,
        &b.source_subcorpus,
        &b.source_doc,
        b.span_start,
    ))
}

/// Builds probe instances from the test split of `corpus`.
///
/// Documents are scanned in parallel batches but fed to the per-label
/// reservoirs in stream order, so output depends only on the corpus, the
/// vocabulary and the seed.
pub fn build_probes(
    corpus: &Corpus,
    vocab: &TermVocabulary,
    options: &BuildOptions,
) -> Result<BuildOutput> {
    vocab.validate()?;
    let matcher = TermMatcher::new(vocab)?;
    let mut reservoirs: Vec<Reservoir<ProbeInstance>> = vocab
        .labels
        .iter()
        .map(|l| {
            let key = xxh3_64(format!("{}\u{0}{}", vocab.task_id, l.surface).as_bytes());
            Reservoir::new(options.max_per_label, ChaCha8Rng::seed_from_u64(options.seed ^ key))
        })
        .collect();
    let mut coverage = CoverageSummary {
        task_id: vocab.task_id.clone(),
        ..Default::default()
    };

    let mut docs = corpus
        .all_records()
        .filter(|r| !matches!(r, Ok(doc) if doc.split != Split::Test));
    loop {
        let batch = docs.by_ref().take(SCAN_BATCH).collect::<Result<Vec<_>>>()?;
        if batch.is_empty() {
            break;
        }
        coverage.documents_scanned += batch.len();
        let scans: Vec<DocScan> = batch
            .par_iter()
            .map(|doc| scan_document(doc, vocab, &matcher, options))
            .collect();
        for scan in scans {
            coverage.paragraphs_with_terms += scan.paragraphs_with_terms;
            coverage.paragraphs_skipped_multi += scan.skipped_multi;
            for (label, inst) in scan.candidates {
                reservoirs[label].offer(inst);
            }
        }
    }
    if coverage.documents_scanned == 0 {
        return Err(Error::invalid("corpus has no test-split documents to build probes from"));
    }

    let mut instances = Vec::new();
    for (label, res) in vocab.labels.iter().zip(reservoirs) {
        coverage.per_label.insert(
            label.surface.clone(),
            LabelCoverage {
                found: res.seen,
                kept: res.items.len(),
            },
        );
        if res.items.is_empty() {
            coverage.missing_labels.push(label.surface.clone());
        }
        instances.extend(res.items);
    }
    instances.sort_by(canonical_order);
    if !coverage.missing_labels.is_empty() {
        log::warn!(
            "task `{}`: no instances for {} label(s): {}",
            vocab.task_id,
            coverage.missing_labels.len(),
            coverage.missing_labels.join(", ")
        );
    }
    Ok(BuildOutput {
        instances,
        coverage,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub instance_id: String,
    pub problem: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub task_id: String,
    pub n_instances: usize,
    pub per_label: BTreeMap<String, usize>,
    /// Mean whitespace-token length of the restored excerpts (#T).
    pub avg_context_tokens: f64,
    /// Number of labels in the vocabulary (#L).
    pub n_labels: usize,
    pub violations: Vec<Violation>,
}

/// Checks every instance invariant that can be checked without the corpus.
pub fn validate_probes(instances: &[ProbeInstance], vocab: &TermVocabulary) -> Result<ValidationReport> {
    let matcher = TermMatcher::new(vocab)?;
    let index: HashMap<&str, (usize, &Label)> = vocab
        .labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.surface.as_str(), (i, l)))
        .collect();
    let mut violations = Vec::new();
    let mut per_label: BTreeMap<String, usize> =
        vocab.labels.iter().map(|l| (l.surface.clone(), 0)).collect();
    let mut ids = HashSet::new();
    let mut tokens = 0usize;
    for inst in instances {
        let mut flag = |problem: String| {
            violations.push(Violation {
                instance_id: inst.instance_id.clone(),
                problem,
            })
        };
        if !ids.insert(inst.instance_id.as_str()) {
            flag("duplicate instance_id".into());
        }
        if inst.task_id != vocab.task_id {
            flag(format!("task `{}` does not match vocabulary `{}`", inst.task_id, vocab.task_id));
        }
        let sentinels = inst.context.matches(SPAN).count();
        if sentinels != 1 {
            flag(format!("context holds {sentinels} span sentinels"));
        }
        match index.get(inst.gold_surface.as_str()) {
            None => flag(format!("gold `{}` not in vocabulary", inst.gold_surface)),
            Some((label_idx, label)) => {
                *per_label.entry(label.surface.clone()).or_default() += 1;
                if label.cluster != inst.cluster {
                    flag(format!("cluster `{}` should be `{}`", inst.cluster, label.cluster));
                }
                let leaked = inst
                    .context
                    .split(SPAN)
                    .any(|part| matcher.occurrences(part).iter().any(|o| o.label == *label_idx));
                if leaked {
                    flag("gold surface appears outside the span".into());
                }
            }
        }
        tokens += whitespace_tokens(&inst.restore());
    }
    let n = instances.len();
    Ok(ValidationReport {
        task_id: vocab.task_id.clone(),
        n_instances: n,
        per_label,
        avg_context_tokens: if n == 0 { 0.0 } else { tokens as f64 / n as f64 },
        n_labels: vocab.labels.len(),
        violations,
    })
}
