use xxhash_rust::xxh3::{xxh3_64, xxh3_64_with_seed};

use super::{
    center_window, log_softmax, top_k, whitespace_pieces, ScoreRequest, ScoreResponse, Scorer,
    ScorerInfo, PositionScores, TokenId, TokenizeMode, TokenizeResponse,
};
use crate::error::{Error, Result};

const MASK: &str = "<mask>";
const MASK_ID: TokenId = 3;
const FIRST_CONTENT_ID: usize = 4;
/// Sentence start/end tokens the scorer adds around every input.
const SPECIAL_OVERHEAD: usize = 2;
const PIECE_CHARS: usize = 4;
const TOKENIZER_SALT: u64 = 0x746f_6b65_6e69_7a65;
const LOGIT_SCALE: f64 = 10.0;

/// Deterministic stand-in for a masked LM.
///
/// Tokenization cuts each whitespace word into pieces of up to four
/// characters and hashes each piece (with a leading-space marker on the first
/// piece of a word) into the content id range. A fill score is a pure
/// function of `(seed, context digest, position, token id)`, normalized by a
/// log-softmax over the whole vocabulary.
#[derive(Debug, Clone)]
pub struct HashScorer {
    seed: u64,
    vocab_size: usize,
    max_input_tokens: usize,
    model_id: String,
}

impl HashScorer {
    pub fn new(seed: u64, vocab_size: usize, max_input_tokens: usize) -> Result<Self> {
        if vocab_size < FIRST_CONTENT_ID + 2 {
            return Err(Error::invalid(format!(
                "hash scorer needs vocab_size >= {}",
                FIRST_CONTENT_ID + 2
            )));
        }
        if max_input_tokens <= SPECIAL_OVERHEAD {
            return Err(Error::invalid("hash scorer max_input_tokens too small"));
        }
        Ok(Self {
            seed,
            vocab_size,
            max_input_tokens,
            model_id: format!("hash-v1/vocab={vocab_size}/seed={seed}"),
        })
    }

    /// Parses `seed=1,vocab=1000,max=512` (every key optional).
    pub fn from_params(params: &str) -> Result<Self> {
        let (mut seed, mut vocab, mut max) = (0u64, 1000usize, 512usize);
        for kv in params.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (key, value) = kv
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("hash scorer parameter `{kv}` lacks `=`")))?;
            let bad = |_| Error::invalid(format!("bad value for hash scorer `{key}`: {value}"));
            match key {
                "seed" => seed = value.parse().map_err(bad)?,
                "vocab" => vocab = value.parse().map_err(bad)?,
                "max" => max = value.parse().map_err(bad)?,
                _ => return Err(Error::invalid(format!("unknown hash scorer parameter `{key}`"))),
            }
        }
        Self::new(seed, vocab, max)
    }

    fn piece_id(&self, normalized: &str) -> TokenId {
        let span = (self.vocab_size - FIRST_CONTENT_ID) as u64;
        (FIRST_CONTENT_ID as u64 + xxh3_64_with_seed(normalized.as_bytes(), TOKENIZER_SALT) % span)
            as TokenId
    }

    fn encode(&self, text: &str) -> TokenizeResponse {
        let mut token_ids = Vec::new();
        let mut token_strings = Vec::new();
        for (lead, word_ws) in whitespace_pieces(text) {
            let word = word_ws.trim_end();
            let trailing = &word_ws[word.len()..];
            // (id, surface) per piece; `<mask>` is recognized even inside a word
            let mut pieces: Vec<(TokenId, String)> = Vec::new();
            let mut rest = word;
            let mut first = true;
            loop {
                let (text_part, mask_follows) = match rest.find(MASK) {
                    Some(i) => (&rest[..i], true),
                    None => (rest, false),
                };
                let chars: Vec<char> = text_part.chars().collect();
                for group in chars.chunks(PIECE_CHARS) {
                    let group: String = group.iter().collect();
                    let normalized = if first && !lead.is_empty() {
                        format!("\u{120}{group}")
                    } else {
                        group.clone()
                    };
                    pieces.push((self.piece_id(&normalized), group));
                    first = false;
                }
                if !mask_follows {
                    break;
                }
                pieces.push((MASK_ID, MASK.to_string()));
                first = false;
                rest = &rest[text_part.len() + MASK.len()..];
            }
            let last = pieces.len() - 1;
            for (i, (id, surface)) in pieces.into_iter().enumerate() {
                let mut s = if i == 0 { lead.to_string() } else { String::new() };
                s.push_str(&surface);
                if i == last {
                    s.push_str(trailing);
                }
                token_ids.push(id);
                token_strings.push(s);
            }
        }
        TokenizeResponse {
            token_ids,
            token_strings,
        }
    }

    fn context_ids(&self, text: &str) -> Vec<TokenId> {
        self.encode(text).token_ids
    }
}

impl Scorer for HashScorer {
    fn info(&self) -> Result<ScorerInfo> {
        Ok(ScorerInfo {
            model_id: self.model_id.clone(),
            vocab_size: self.vocab_size,
            mask_token: MASK.into(),
            max_input_tokens: self.max_input_tokens,
        })
    }

    fn tokenize(&self, text: &str, mode: TokenizeMode) -> Result<TokenizeResponse> {
        if text.trim().is_empty() {
            return Err(Error::invalid("cannot tokenize empty text"));
        }
        let adjusted;
        let text = match mode {
            TokenizeMode::WithLeadingSpace if !text.starts_with(char::is_whitespace) => {
                adjusted = format!(" {text}");
                adjusted.as_str()
            }
            _ => text,
        };
        let resp = self.encode(text);
        let total = resp.token_ids.len() + SPECIAL_OVERHEAD;
        if total > self.max_input_tokens {
            return Err(Error::TooLong {
                tokens: total,
                max_input_tokens: self.max_input_tokens,
            });
        }
        Ok(resp)
    }

    fn fill(&self, request: &ScoreRequest) -> Result<ScoreResponse> {
        request.validate(Some(self.vocab_size))?;
        let (before, after) = request.split_context()?;
        let before = self.context_ids(before);
        let after = self.context_ids(after);
        let (left, right, truncated) = center_window(
            before.len(),
            request.num_masks,
            after.len(),
            self.max_input_tokens - SPECIAL_OVERHEAD,
        )?;
        let mut bytes = Vec::with_capacity(4 * (left + right + 3));
        for id in &before[before.len() - left..] {
            bytes.extend_from_slice(&id.to_le_bytes());
        }
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.extend_from_slice(&(request.num_masks as u64).to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        for id in &after[..right] {
            bytes.extend_from_slice(&id.to_le_bytes());
        }
        let digest = xxh3_64(&bytes);

        let positions = (0..request.num_masks)
            .map(|pos| {
                let mut logits: Vec<f64> = (0..self.vocab_size)
                    .map(|id| LOGIT_SCALE * unit_hash(self.seed, digest, pos, id as TokenId))
                    .collect();
                log_softmax(&mut logits);
                PositionScores {
                    candidate_logprobs: request
                        .candidate_ids
                        .iter()
                        .map(|&id| (id, logits[id as usize]))
                        .collect(),
                    topk: top_k(&logits, request.topk),
                }
            })
            .collect();
        Ok(ScoreResponse {
            positions,
            truncated,
        })
    }
}

/// Uniform value in `[0, 1)` from `(seed, digest, position, id)`.
pub(crate) fn unit_hash(seed: u64, digest: u64, position: usize, id: TokenId) -> f64 {
    let mut key = [0u8; 20];
    key[..8].copy_from_slice(&digest.to_le_bytes());
    key[8..16].copy_from_slice(&(position as u64).to_le_bytes());
    key[16..].copy_from_slice(&id.to_le_bytes());
    (xxh3_64_with_seed(&key, seed) >> 11) as f64 / (1u64 << 53) as f64
}
