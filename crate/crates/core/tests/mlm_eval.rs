mod common;

use std::collections::HashMap;
use std::sync::Mutex;

use lexkit::error::Result;
use lexkit::mlm::{eval_mlm, MlmEvalConfig};
use lexkit::scorer::{
    HashScorer, PositionScores, ScoreRequest, ScoreResponse, Scorer, ScorerInfo, TokenizeMode, TokenizeResponse, SPAN,
};

/// Whole-word tokenizer. In oracle mode `fill` looks the hidden word up in
/// the chunks it has tokenized; otherwise it always answers the mask id.
struct WordScorer {
    oracle: bool,
    ids: Mutex<HashMap<String, u32>>,
    seen: Mutex<Vec<Vec<String>>>,
}

impl WordScorer {
    fn new(oracle: bool) -> Self {
        Self { oracle, ids: Mutex::new(HashMap::new()), seen: Mutex::new(Vec::new()) }
    }

    fn id(&self, word: &str) -> u32 {
        let mut ids = self.ids.lock().unwrap();
        let next = ids.len() as u32 + 4;
        *ids.entry(word.to_string()).or_insert(next)
    }
}

impl Scorer for WordScorer {
    fn info(&self) -> Result<ScorerInfo> {
        Ok(ScorerInfo {
            model_id: "words".into(),
            vocab_size: 1 << 20,
            mask_token: "<mask>".into(),
            max_input_tokens: 10_000,
        })
    }

    fn tokenize(&self, text: &str, _mode: TokenizeMode) -> Result<TokenizeResponse> {
        let words: Vec<&str> = text.split_whitespace().collect();
        self.seen.lock().unwrap().push(words.iter().map(|w| w.to_string()).collect());
        Ok(TokenizeResponse {
            token_ids: words.iter().map(|w| self.id(w)).collect(),
            token_strings: words
                .iter()
                .enumerate()
                .map(|(i, w)| if i == 0 { w.to_string() } else { format!(" {w}") })
                .collect(),
        })
    }

    fn fill(&self, request: &ScoreRequest) -> Result<ScoreResponse> {
        let pieces: Vec<&str> = request.context.split_whitespace().collect();
        let at = pieces.iter().position(|p| *p == SPAN).expect("sentinel present");
        let answer = if self.oracle {
            let seen = self.seen.lock().unwrap();
            let original = seen
                .iter()
                .find(|words| {
                    words.len() == pieces.len()
                        && words.iter().zip(&pieces).all(|(w, p)| *p == SPAN || *p == "<mask>" || w == p)
                })
                .expect("context comes from a tokenized chunk");
            self.id(&original[at])
        } else {
            3
        };
        Ok(ScoreResponse {
            positions: vec![PositionScores { candidate_logprobs: Default::default(), topk: vec![(answer, 0.0)] }],
            truncated: false,
        })
    }
}

fn synthetic(dir: &std::path::Path, n_docs: usize) -> Vec<(String, Vec<(String, String)>)> {
    let _ = dir;
    ["alpha", "beta", "gamma"]
        .iter()
        .enumerate()
        .map(|(s, id)| {
            let docs = (0..n_docs)
                .map(|d| {
                    let text: Vec<&str> = (0..(40 + 7 * d % 90))
                        .map(|w| common::WORDS[(w * 7 + d * 3 + s) % common::WORDS.len()])
                        .collect();
                    (format!("{id}-{d}"), text.join(" "))
                })
                .collect();
            (id.to_string(), docs)
        })
        .collect()
}

fn open(dir: &std::path::Path, n_docs: usize) -> lexkit::corpus::Corpus {
    let data = synthetic(dir, n_docs);
    let refs: Vec<(&str, Vec<(String, String)>)> = data.iter().map(|(i, d)| (i.as_str(), d.clone())).collect();
    common::test_split_corpus(dir, &refs)
}

#[test]
fn oracle_scorer_is_always_right() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = open(dir.path(), 10);
    let report = eval_mlm(&corpus, &MlmEvalConfig::default(), &WordScorer::new(true)).unwrap();
    assert_eq!(report.average, Some(1.0));
    assert!(report.rows.iter().all(|r| r.accuracy == Some(1.0) && r.masked > 0));
}

#[test]
fn wrong_scorer_is_never_right() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = open(dir.path(), 10);
    let report = eval_mlm(&corpus, &MlmEvalConfig::default(), &WordScorer::new(false)).unwrap();
    assert_eq!(report.average, Some(0.0));
}

#[test]
fn masked_count_is_ceiling_per_chunk() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = open(dir.path(), 6);
    let config = MlmEvalConfig { mask_rate: 0.2, ..Default::default() };
    let report = eval_mlm(&corpus, &config, &WordScorer::new(false)).unwrap();
    for row in &report.rows {
        let entry = corpus.entries().iter().find(|e| e.subcorpus_id == row.subcorpus_id).unwrap();
        let expected: usize = corpus
            .chunks(entry, config.window_chars, lexkit::corpus::SplitFilter::All)
            .unwrap()
            .map(|c| {
                let n = c.unwrap().text.split_whitespace().count();
                ((0.2 * n as f64).ceil() as usize).clamp(1, n)
            })
            .sum();
        assert_eq!(row.masked, expected);
    }
}

#[test]
fn hash_scorer_run_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = open(dir.path(), 34);
    let scorer = HashScorer::new(3, 600, 512).unwrap();
    let config = MlmEvalConfig { seed: 17, ..Default::default() };
    let a = eval_mlm(&corpus, &config, &scorer).unwrap();
    let b = eval_mlm(&corpus, &config, &scorer).unwrap();
    let chunks: usize = a.rows.iter().map(|r| r.chunks).sum();
    assert!(chunks >= 100, "{chunks} chunks");
    assert_eq!(a.average.unwrap().to_bits(), b.average.unwrap().to_bits());
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());

    let other = eval_mlm(&corpus, &MlmEvalConfig { seed: 18, ..config }, &scorer).unwrap();
    assert_ne!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&other).unwrap());
}

#[test]
fn subcorpus_order_does_not_matter() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic(dir.path(), 8);
    let mut refs: Vec<(&str, Vec<(String, String)>)> = data.iter().map(|(i, d)| (i.as_str(), d.clone())).collect();
    let scorer = HashScorer::new(3, 600, 512).unwrap();
    let forward = eval_mlm(&common::test_split_corpus(dir.path(), &refs), &MlmEvalConfig::default(), &scorer).unwrap();
    refs.reverse();
    let backward = eval_mlm(&common::test_split_corpus(dir.path(), &refs), &MlmEvalConfig::default(), &scorer).unwrap();
    for row in &forward.rows {
        assert!(backward.rows.contains(row));
    }
    assert_eq!(forward.average, backward.average);
}

#[test]
fn long_chunks_are_truncated_not_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = open(dir.path(), 4);
    let tight = HashScorer::new(1, 600, 24).unwrap();
    let report = eval_mlm(&corpus, &MlmEvalConfig { chunk_tokens: 10, ..Default::default() }, &tight).unwrap();
    for row in &report.rows {
        assert_eq!(row.truncated_chunks, row.chunks);
        assert_eq!(row.masked, 2 * row.chunks);
    }
}
