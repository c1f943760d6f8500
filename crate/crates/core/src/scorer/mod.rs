//! Wire contract between the evaluation engine and a masked-LM scorer.
//!
//! The engine never tokenizes anything itself. It ships surface strings and a
//! context holding exactly one [`SPAN`] sentinel; the scorer expands the
//! sentinel into `num_masks` mask tokens, runs its model and returns
//! full-vocabulary log-probabilities for the requested candidate ids at each
//! mask position. Ranking over a restricted candidate set happens downstream,
//! on ids only.
//!
//! Transports: HTTP+JSON ([`HttpScorer`], served by [`serve_http`]) and a
//! line-delimited stdio framing ([`StdioScorer`], served by [`serve_stdio`])
//! with identical payloads. [`HashScorer`] and [`TableScorer`] are pure
//! in-process scorers for tests and dry runs.

mod hash;
mod http;
mod stdio;
mod table;

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use hash::HashScorer;
pub use http::{serve_http, HttpScorer, HttpServer};
pub use stdio::{serve_stdio, StdioScorer};
pub use table::{TableScorer, TableScorerConfig};

/// Placeholder for the masked span inside a probe context.
pub const SPAN: &str = "<|span|>";

pub type TokenId = u32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScorerInfo {
    pub model_id: String,
    pub vocab_size: usize,
    pub mask_token: String,
    pub max_input_tokens: usize,
}

impl ScorerInfo {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(Error::protocol(format!("vocab_size {} < 2", self.vocab_size)));
        }
        if self.mask_token.is_empty() {
            return Err(Error::protocol("empty mask_token"));
        }
        if self.max_input_tokens == 0 {
            return Err(Error::protocol("max_input_tokens must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizeMode {
    Standalone,
    /// Tokenize as if the text followed a space, the way a mid-sentence
    /// surface form is seen by byte-pair tokenizers.
    #[default]
    WithLeadingSpace,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizeRequest {
    pub text: String,
    #[serde(default)]
    pub mode: TokenizeMode,
}

/// Token ids with their surface pieces. By convention the pieces are the
/// exact substrings of the (mode-adjusted) input, leading whitespace
/// included, so concatenating them reproduces the input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizeResponse {
    pub token_ids: Vec<TokenId>,
    pub token_strings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub context: String,
    pub num_masks: usize,
    pub candidate_ids: Vec<TokenId>,
    #[serde(default)]
    pub topk: usize,
}

impl ScoreRequest {
    /// Checks the request against the contract; `vocab_size` enables the
    /// id range check.
    pub fn validate(&self, vocab_size: Option<usize>) -> Result<()> {
        match self.context.matches(SPAN).count() {
            1 => {}
            0 => return Err(Error::protocol("context has no span sentinel")),
            n => return Err(Error::protocol(format!("context has {n} span sentinels"))),
        }
        if self.num_masks == 0 {
            return Err(Error::protocol("num_masks must be at least 1"));
        }
        let mut seen = HashSet::with_capacity(self.candidate_ids.len());
        for &id in &self.candidate_ids {
            if !seen.insert(id) {
                return Err(Error::protocol(format!("candidate id {id} repeated")));
            }
            if let Some(v) = vocab_size {
                if id as usize >= v {
                    return Err(Error::protocol(format!(
                        "candidate id {id} outside vocabulary of size {v}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Splits the context around the sentinel.
    pub fn split_context(&self) -> Result<(&str, &str)> {
        self.context
            .split_once(SPAN)
            .ok_or_else(|| Error::protocol("context has no span sentinel"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionScores {
    pub candidate_logprobs: BTreeMap<TokenId, f64>,
    #[serde(default)]
    pub topk: Vec<(TokenId, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub positions: Vec<PositionScores>,
    #[serde(default)]
    pub truncated: bool,
}

impl ScoreResponse {
    /// Checks a response against the request that produced it.
    pub fn check(&self, request: &ScoreRequest) -> Result<()> {
        if self.positions.len() != request.num_masks {
            return Err(Error::protocol(format!(
                "expected {} positions, got {}",
                request.num_masks,
                self.positions.len()
            )));
        }
        for (i, pos) in self.positions.iter().enumerate() {
            for id in &request.candidate_ids {
                match pos.candidate_logprobs.get(id) {
                    Some(lp) if lp.is_finite() => {}
                    Some(lp) => {
                        return Err(Error::protocol(format!(
                            "non-finite score {lp} for id {id} at position {i}"
                        )))
                    }
                    None => {
                        return Err(Error::protocol(format!(
                            "no score for candidate {id} at position {i}"
                        )))
                    }
                }
            }
            if pos.topk.len() > request.topk {
                return Err(Error::protocol(format!(
                    "{} top-k entries for topk={}",
                    pos.topk.len(),
                    request.topk
                )));
            }
        }
        Ok(())
    }
}

/// Anything that can answer the three protocol calls.
pub trait Scorer: Send + Sync {
    fn info(&self) -> Result<ScorerInfo>;
    fn tokenize(&self, text: &str, mode: TokenizeMode) -> Result<TokenizeResponse>;
    fn fill(&self, request: &ScoreRequest) -> Result<ScoreResponse>;
}

impl<S: Scorer + ?Sized> Scorer for Arc<S> {
    fn info(&self) -> Result<ScorerInfo> {
        (**self).info()
    }
    fn tokenize(&self, text: &str, mode: TokenizeMode) -> Result<TokenizeResponse> {
        (**self).tokenize(text, mode)
    }
    fn fill(&self, request: &ScoreRequest) -> Result<ScoreResponse> {
        (**self).fill(request)
    }
}

/// How many tokens to keep on each side of a span so that
/// `left + span + right <= budget`, preferring a centred window and handing
/// unused budget on one side to the other. Returns `(left, right, truncated)`.
pub fn center_window(
    before: usize,
    span: usize,
    after: usize,
    budget: usize,
) -> Result<(usize, usize, bool)> {
    if span > budget {
        return Err(Error::TooLong {
            tokens: span,
            max_input_tokens: budget,
        });
    }
    if before + span + after <= budget {
        return Ok((before, after, false));
    }
    let room = budget - span;
    let half = room / 2;
    let (left, right) = if before < half {
        (before, (room - before).min(after))
    } else if after < room - half {
        ((room - after).min(before), after)
    } else {
        (half, room - half)
    };
    Ok((left, right, true))
}

/// Error payload shared by both transports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireError {
    pub kind: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_input_tokens: Option<usize>,
}

impl From<&Error> for WireError {
    fn from(e: &Error) -> Self {
        let (kind, tokens, max) = match e {
            Error::TooLong {
                tokens,
                max_input_tokens,
            } => ("too_long", Some(*tokens), Some(*max_input_tokens)),
            Error::Invalid(_) | Error::Malformed { .. } => ("invalid", None, None),
            Error::Protocol(_) | Error::Json(_) => ("protocol", None, None),
            Error::Io { .. } | Error::Connection(_) => ("internal", None, None),
        };
        WireError {
            kind: kind.into(),
            message: e.to_string(),
            tokens,
            max_input_tokens: max,
        }
    }
}

impl From<WireError> for Error {
    fn from(w: WireError) -> Self {
        match (w.kind.as_str(), w.max_input_tokens) {
            ("too_long", Some(max)) => Error::TooLong {
                tokens: w.tokens.unwrap_or(0),
                max_input_tokens: max,
            },
            ("invalid", _) => Error::Invalid(w.message),
            _ => Error::Protocol(w.message),
        }
    }
}

/// Server-side routing shared by both transports: `info`, `tokenize` or
/// `fill` with a JSON payload.
pub fn dispatch(scorer: &dyn Scorer, method: &str, params: serde_json::Value) -> Result<serde_json::Value> {
    let bad = |e: serde_json::Error| Error::protocol(format!("bad `{method}` payload: {e}"));
    match method {
        "info" => Ok(serde_json::to_value(scorer.info()?)?),
        "tokenize" => {
            let req: TokenizeRequest = serde_json::from_value(params).map_err(bad)?;
            Ok(serde_json::to_value(scorer.tokenize(&req.text, req.mode)?)?)
        }
        "fill" => {
            let req: ScoreRequest = serde_json::from_value(params).map_err(bad)?;
            Ok(serde_json::to_value(scorer.fill(&req)?)?)
        }
        other => Err(Error::protocol(format!("unknown method `{other}`"))),
    }
}

/// Opens a scorer from an endpoint string:
///
/// * `http://host:port` – remote scorer over HTTP+JSON
/// * `stdio:<command> [args…]` – child process speaking the stdio framing
/// * `hash:seed=1,vocab=1000,max=512` – in-process [`HashScorer`]
/// * `table:<path.json>` – in-process [`TableScorer`]
pub fn connect(endpoint: &str) -> Result<Arc<dyn Scorer>> {
    if endpoint.starts_with("http://") || endpoint.starts_with("https://") {
        Ok(Arc::new(HttpScorer::new(endpoint)))
    } else if let Some(cmd) = endpoint.strip_prefix("stdio:") {
        Ok(Arc::new(StdioScorer::spawn(cmd)?))
    } else if let Some(params) = endpoint.strip_prefix("hash:") {
        Ok(Arc::new(HashScorer::from_params(params)?))
    } else if let Some(path) = endpoint.strip_prefix("table:") {
        Ok(Arc::new(TableScorer::load(path)?))
    } else {
        Err(Error::invalid(format!("unrecognized scorer endpoint `{endpoint}`")))
    }
}

/// Top-`k` ids of a full score vector, ties broken by ascending id.
pub(crate) fn top_k(scores: &[f64], k: usize) -> Vec<(TokenId, f64)> {
    let mut ids: Vec<usize> = (0..scores.len()).collect();
    let k = k.min(ids.len());
    if k == 0 {
        return Vec::new();
    }
    let cmp = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
    ids.select_nth_unstable_by(k - 1, cmp);
    ids.truncate(k);
    ids.sort_by(cmp);
    ids.into_iter().map(|i| (i as TokenId, scores[i])).collect()
}

/// Numerically stable log-softmax, in place.
pub(crate) fn log_softmax(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    for l in logits.iter_mut() {
        *l -= lse;
    }
}

/// Pieces of `text` split at whitespace: each piece is a word carrying the
/// whitespace that precedes it. Trailing whitespace is attached to the last
/// piece so the pieces always concatenate back to `text`.
pub(crate) fn whitespace_pieces(text: &str) -> Vec<(&str, &str)> {
    let mut out: Vec<(&str, &str)> = Vec::new();
    let mut start = 0;
    let mut word_start = None;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(ws) = word_start.take() {
                out.push((&text[start..ws], &text[ws..i]));
                start = i;
            }
        } else if word_start.is_none() {
            word_start = Some(i);
        }
    }
    match word_start {
        Some(ws) => out.push((&text[start..ws], &text[ws..])),
        None if start < text.len() => {
            if let Some(last) = out.last_mut() {
                // Extend the last word with the trailing whitespace.
                let (lead, word) = *last;
                let word_start = word.as_ptr() as usize - text.as_ptr() as usize;
                *last = (lead, &text[word_start..]);
            }
        }
        None => {}
    }
    out
}
