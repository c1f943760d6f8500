//! Upstream masked-token accuracy: Precision@1 of randomly masked
//! sub-tokens, predicted over the full vocabulary.
//!
//! Every chunk is tokenized by the scorer, `ceil(rate * n)` positions are
//! drawn uniformly (seeded per chunk) and replaced by the scorer's mask
//! token. Each masked position is then queried on its own: it becomes the
//! span sentinel while the other drawn positions stay masked, so every
//! prediction sees the same corrupted input.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::corpus::{Corpus, Split, SplitFilter};
use crate::error::{Error, Result};
use crate::scorer::{ScoreRequest, Scorer, TokenId, TokenizeMode, TokenizeResponse, SPAN};

const BATCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlmEvalConfig {
    pub mask_rate: f64,
    /// Chunks evaluated per sub-corpus; `None` for all test chunks.
    pub max_chunks: Option<usize>,
    pub seed: u64,
    /// Sub-tokens kept per chunk; longer chunks are cut and flagged.
    pub chunk_tokens: usize,
    /// Character window used to cut documents into chunks.
    pub window_chars: usize,
}

impl Default for MlmEvalConfig {
    fn default() -> Self {
        Self {
            mask_rate: 0.15,
            max_chunks: Some(1000),
            seed: 0,
            chunk_tokens: 256,
            window_chars: 1000,
        }
    }
}

impl MlmEvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mask_rate > 0.0 && self.mask_rate < 1.0) {
            return Err(Error::invalid(format!(
                "mask rate must lie strictly between 0 and 1, got {}",
                self.mask_rate
            )));
        }
        if self.chunk_tokens == 0 {
            return Err(Error::invalid("chunk token budget must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubcorpusAccuracy {
    pub subcorpus_id: String,
    /// `None` when nothing was masked (no test chunks).
    pub accuracy: Option<f64>,
    pub correct: usize,
    pub masked: usize,
    pub chunks: usize,
    pub truncated_chunks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlmReport {
    pub model_id: String,
    pub rows: Vec<SubcorpusAccuracy>,
    /// Unweighted mean over sub-corpora that have an accuracy.
    pub average: Option<f64>,
    pub config: MlmEvalConfig,
}

/// `ceil(rate * n)` distinct positions out of `n`, clamped to `1..=n`,
/// sorted ascending. Position choice never looks at token content.
pub fn choose_mask_positions(n: usize, rate: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let m = ((rate * n as f64).ceil() as usize).clamp(1, n);
    let mut picked = rand::seq::index::sample(rng, n, m).into_vec();
    picked.sort_unstable();
    picked
}

fn chunk_rng(seed: u64, subcorpus: &str, index: usize) -> ChaCha8Rng {
    let key = xxh3_64_with_seed(format!("{subcorpus}\u{0}{index}").as_bytes(), seed);
    ChaCha8Rng::seed_from_u64(key)
}

/// Splits a surface piece into leading whitespace, core and trailing whitespace.
fn split_piece(piece: &str) -> (&str, &str, &str) {
    let core_start = piece.len() - piece.trim_start().len();
    let core_end = piece.trim_end().len().max(core_start);
    (&piece[..core_start], &piece[core_start..core_end], &piece[core_end..])
}

/// Rebuilds the chunk text with `masked` positions replaced by `mask` and
/// position `query` replaced by the span sentinel.
pub fn masked_context(pieces: &[String], masked: &[usize], query: usize, mask: &str) -> String {
    let mut out = String::new();
    for (i, piece) in pieces.iter().enumerate() {
        if i == query || masked.binary_search(&i).is_ok() {
            let (lead, _, trail) = split_piece(piece);
            out.push_str(lead);
            out.push_str(if i == query { SPAN } else { mask });
            out.push_str(trail);
        } else {
            out.push_str(piece);
        }
    }
    out
}

struct ChunkTally {
    correct: usize,
    masked: usize,
    truncated: bool,
}

fn tokenize_fitting(scorer: &dyn Scorer, text: &str) -> Result<(TokenizeResponse, bool)> {
    let mut words: Vec<&str> = text.split_whitespace().collect();
    let mut truncated = false;
    loop {
        let joined = words.join(" ");
        match scorer.tokenize(&joined, TokenizeMode::Standalone) {
            Ok(resp) => return Ok((resp, truncated)),
            Err(Error::TooLong { .. }) if words.len() > 1 => {
                words.truncate(words.len() / 2);
                truncated = true;
            }
            Err(e) => return Err(e),
        }
    }
}

fn eval_chunk(
    scorer: &dyn Scorer,
    mask_token: &str,
    text: &str,
    config: &MlmEvalConfig,
    mut rng: ChaCha8Rng,
) -> Result<ChunkTally> {
    let (mut tokens, mut truncated) = tokenize_fitting(scorer, text)?;
    if tokens.token_ids.len() > config.chunk_tokens {
        tokens.token_ids.truncate(config.chunk_tokens);
        tokens.token_strings.truncate(config.chunk_tokens);
        truncated = true;
    }
    let masked = choose_mask_positions(tokens.token_ids.len(), config.mask_rate, &mut rng);
    let mut correct = 0;
    for &pos in &masked {
        let request = ScoreRequest {
            context: masked_context(&tokens.token_strings, &masked, pos, mask_token),
            num_masks: 1,
            candidate_ids: Vec::new(),
            topk: 1,
        };
        let response = scorer.fill(&request)?;
        truncated |= response.truncated;
        let predicted: Option<TokenId> = response
            .positions
            .first()
            .and_then(|p| p.topk.first())
            .map(|(id, _)| *id);
        if predicted == Some(tokens.token_ids[pos]) {
            correct += 1;
        }
    }
    Ok(ChunkTally {
        correct,
        masked: masked.len(),
        truncated,
    })
}

/// Masked-token accuracy per sub-corpus over the test split.
pub fn eval_mlm(corpus: &Corpus, config: &MlmEvalConfig, scorer: &dyn Scorer) -> Result<MlmReport> {
    config.validate()?;
    let info = scorer.info()?;
    let mut rows = Vec::new();
    for entry in corpus.entries() {
        let mut chunks = corpus
            .chunks(entry, config.window_chars, SplitFilter::Only(Split::Test))?
            .take(config.max_chunks.unwrap_or(usize::MAX))
            .enumerate();
        let mut row = SubcorpusAccuracy {
            subcorpus_id: entry.subcorpus_id.clone(),
            accuracy: None,
            correct: 0,
            masked: 0,
            chunks: 0,
            truncated_chunks: 0,
        };
        loop {
            let batch = chunks
                .by_ref()
                .take(BATCH)
                .map(|(i, c)| c.map(|c| (i, c.text)))
                .collect::<Result<Vec<_>>>()?;
            if batch.is_empty() {
                break;
            }
            let tallies = batch
                .par_iter()
                .map(|(i, text)| {
                    let rng = chunk_rng(config.seed, &entry.subcorpus_id, *i);
                    eval_chunk(scorer, &info.mask_token, text, config, rng)
                })
                .collect::<Result<Vec<_>>>()?;
            for t in tallies {
                row.chunks += 1;
                row.correct += t.correct;
                row.masked += t.masked;
                row.truncated_chunks += t.truncated as usize;
            }
        }
        if row.masked > 0 {
            row.accuracy = Some(row.correct as f64 / row.masked as f64);
        }
        if row.truncated_chunks > 0 {
            log::info!("{}: {} chunk(s) truncated to fit the scorer", row.subcorpus_id, row.truncated_chunks);
        }
        rows.push(row);
    }
    let scored: Vec<f64> = rows.iter().filter_map(|r| r.accuracy).collect();
    if scored.is_empty() {
        return Err(Error::invalid("no test-split chunks to evaluate"));
    }
    let average = Some(scored.iter().sum::<f64>() / scored.len() as f64);
    Ok(MlmReport {
        model_id: info.model_id,
        rows,
        average,
        config: *config,
    })
}
