use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    center_window, top_k, whitespace_pieces, PositionScores, ScoreRequest, ScoreResponse, Scorer,
    ScorerInfo, TokenId, TokenizeMode, TokenizeResponse,
};
use crate::error::{Error, Result};

fn default_mask() -> String {
    "<mask>".into()
}

fn default_max() -> usize {
    512
}

fn default_logprob() -> f64 {
    -30.0
}

/// Serialized form of a [`TableScorer`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableScorerConfig {
    pub model_id: String,
    /// Token strings; a token's id is its index.
    pub vocab: Vec<String>,
    #[serde(default = "default_mask")]
    pub mask_token: String,
    #[serde(default)]
    pub unk_token: Option<String>,
    #[serde(default = "default_max")]
    pub max_input_tokens: usize,
    /// Score of any (position, id) pair missing from `positions`.
    #[serde(default = "default_logprob")]
    pub default_logprob: f64,
    /// Per mask position, explicit log-probabilities by token id.
    #[serde(default)]
    pub positions: Vec<BTreeMap<TokenId, f64>>,
}

/// Scorer whose fill output is a fixed, context-independent table.
///
/// Tokenization is whole-word lookup in the configured vocabulary.
#[derive(Debug, Clone)]
pub struct TableScorer {
    config: TableScorerConfig,
    ids: HashMap<String, TokenId>,
}

impl TableScorer {
    pub fn new(config: TableScorerConfig) -> Result<Self> {
        if config.vocab.len() < 2 {
            return Err(Error::invalid("table scorer vocabulary needs at least 2 entries"));
        }
        let mut ids = HashMap::with_capacity(config.vocab.len());
        for (i, tok) in config.vocab.iter().enumerate() {
            if ids.insert(tok.clone(), i as TokenId).is_some() {
                return Err(Error::invalid(format!("token `{tok}` repeated in table vocabulary")));
            }
        }
        if !ids.contains_key(&config.mask_token) {
            return Err(Error::invalid("mask token missing from table vocabulary"));
        }
        for pos in &config.positions {
            if let Some(id) = pos.keys().find(|id| **id as usize >= config.vocab.len()) {
                return Err(Error::invalid(format!("table scores unknown token id {id}")));
            }
        }
        Ok(Self { config, ids })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::new(serde_json::from_reader(BufReader::new(file))?)
    }

    pub fn id_of(&self, token: &str) -> Option<TokenId> {
        self.ids.get(token).copied()
    }

    fn lookup(&self, word: &str) -> Result<TokenId> {
        if let Some(id) = self.ids.get(word) {
            return Ok(*id);
        }
        self.config
            .unk_token
            .as_ref()
            .and_then(|unk| self.ids.get(unk))
            .copied()
            .ok_or_else(|| Error::invalid(format!("`{word}` not in table vocabulary")))
    }

    fn score_row(&self, position: usize) -> Vec<f64> {
        let mut row = vec![self.config.default_logprob; self.config.vocab.len()];
        if let Some(explicit) = self.config.positions.get(position) {
            for (id, lp) in explicit {
                row[*id as usize] = *lp;
            }
        }
        row
    }
}

impl Scorer for TableScorer {
    fn info(&self) -> Result<ScorerInfo> {
        Ok(ScorerInfo {
            model_id: self.config.model_id.clone(),
            vocab_size: self.config.vocab.len(),
            mask_token: self.config.mask_token.clone(),
            max_input_tokens: self.config.max_input_tokens,
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
        let mut token_ids = Vec::new();
        let mut token_strings = Vec::new();
        for (lead, word_ws) in whitespace_pieces(text) {
            token_ids.push(self.lookup(word_ws.trim_end())?);
            token_strings.push(format!("{lead}{word_ws}"));
        }
        if token_ids.len() > self.config.max_input_tokens {
            return Err(Error::TooLong {
                tokens: token_ids.len(),
                max_input_tokens: self.config.max_input_tokens,
            });
        }
        Ok(TokenizeResponse {
            token_ids,
            token_strings,
        })
    }

    fn fill(&self, request: &ScoreRequest) -> Result<ScoreResponse> {
        request.validate(Some(self.config.vocab.len()))?;
        let (before, after) = request.split_context()?;
        let (_, _, truncated) = center_window(
            before.split_whitespace().count(),
            request.num_masks,
            after.split_whitespace().count(),
            self.config.max_input_tokens,
        )?;
        let positions = (0..request.num_masks)
            .map(|pos| {
                let row = self.score_row(pos);
                PositionScores {
                    candidate_logprobs: request
                        .candidate_ids
                        .iter()
                        .map(|&id| (id, row[id as usize]))
                        .collect(),
                    topk: top_k(&row, request.topk),
                }
            })
            .collect();
        Ok(ScoreResponse {
            positions,
            truncated,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> TableScorerConfig {
        TableScorerConfig {
            model_id: "table-test".into(),
            vocab: ["<mask>", "<unk>", "arson", "theft", "drug", "trafficking"]
                .map(String::from)
                .to_vec(),
            mask_token: "<mask>".into(),
            unk_token: Some("<unk>".into()),
            max_input_tokens: 512,
            default_logprob: -30.0,
            positions: vec![BTreeMap::from([(2, -0.1), (3, -2.0)])],
        }
    }

    #[test]
    fn fill_reflects_table_exactly() {
        let s = TableScorer::new(config()).unwrap();
        let req = ScoreRequest {
            context: "charged with <|span|> today".into(),
            num_masks: 2,
            candidate_ids: vec![2, 3, 4],
            topk: 2,
        };
        let resp = s.fill(&req).unwrap();
        let p0 = &resp.positions[0].candidate_logprobs;
        assert_eq!((p0[&2], p0[&3], p0[&4]), (-0.1, -2.0, -30.0));
        assert_eq!(resp.positions[0].topk, vec![(2, -0.1), (3, -2.0)]);
        assert!(resp.positions[1].candidate_logprobs.values().all(|v| *v == -30.0));
    }

    #[test]
    fn tokenize_is_word_lookup() {
        let s = TableScorer::new(config()).unwrap();
        let r = s.tokenize("drug trafficking", TokenizeMode::WithLeadingSpace).unwrap();
        assert_eq!(r.token_ids, vec![4, 5]);
        assert_eq!(r.token_strings.concat(), " drug trafficking");
        assert_eq!(s.tokenize("burglary", TokenizeMode::Standalone).unwrap().token_ids, vec![1]);
    }

    #[test]
    fn rejects_bad_tables() {
        let mut c = config();
        c.positions = vec![BTreeMap::from([(99, -1.0)])];
        assert!(TableScorer::new(c).is_err());
        let mut c = config();
        c.vocab.push("arson".into());
        assert!(TableScorer::new(c).is_err());
    }
}
