//! Embedding-transfer plan between two tokenizer vocabularies.
//!
//! A new token whose string occurs verbatim in the old vocabulary reuses the
//! old embedding row; every other token is marked for random initialization.
//! Strings are compared byte for byte, so whitespace markers such as `Ġ`
//! must agree exactly.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

/// Token string to id, rejecting repeated strings and repeated ids.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocab(pub BTreeMap<String, u64>);

impl Vocab {
    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, u64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (token, id) in pairs {
            let token = token.into();
            if map.insert(token.clone(), id).is_some() {
                return Err(Error::invalid(format!("duplicate token string {token:?}")));
            }
        }
        let vocab = Vocab(map);
        vocab.validate()?;
        Ok(vocab)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let vocab: Vocab = serde_json::from_reader(BufReader::new(file)).map_err(|e| {
            if e.is_data() {
                Error::invalid(format!("{}: {e}", path.display()))
            } else {
                Error::Json(e)
            }
        })?;
        vocab.validate()?;
        Ok(vocab)
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::invalid("vocabulary is empty"));
        }
        let mut ids = HashSet::with_capacity(self.0.len());
        for (token, id) in &self.0 {
            if !ids.insert(*id) {
                return Err(Error::invalid(format!("id {id} assigned twice (at {token:?})")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<'de> Deserialize<'de> for Vocab {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct VocabVisitor;

        impl<'de> Visitor<'de> for VocabVisitor {
            type Value = Vocab;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map of token string to integer id")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> std::result::Result<Vocab, A::Error> {
                let mut map = BTreeMap::new();
                while let Some((token, id)) = access.next_entry::<String, u64>()? {
                    if map.contains_key(&token) {
                        return Err(serde::de::Error::custom(format!("duplicate token string {token:?}")));
                    }
                    map.insert(token, id);
                }
                Ok(Vocab(map))
            }
        }

        deserializer.deserialize_map(VocabVisitor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "action", content = "old_id")]
pub enum TransferAction {
    CopyFrom(u64),
    RandomInit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferEntry {
    pub new_id: u64,
    pub token: String,
    #[serde(flatten)]
    pub action: TransferAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSummary {
    pub old_vocab_size: usize,
    pub new_vocab_size: usize,
    pub n_copied: usize,
    pub n_random: usize,
    pub overlap_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferPlan {
    /// One entry per new id, ascending.
    pub entries: Vec<TransferEntry>,
    pub summary: TransferSummary,
}

pub fn plan_embedding_transfer(old: &Vocab, new: &Vocab) -> Result<TransferPlan> {
    old.validate()?;
    new.validate()?;
    let lookup: HashMap<&str, u64> = old.0.iter().map(|(t, &id)| (t.as_str(), id)).collect();
    let mut entries: Vec<TransferEntry> = new
        .0
        .iter()
        .map(|(token, &new_id)| TransferEntry {
            new_id,
            token: token.clone(),
            action: match lookup.get(token.as_str()) {
                Some(&old_id) => TransferAction::CopyFrom(old_id),
                None => TransferAction::RandomInit,
            },
        })
        .collect();
    entries.sort_by_key(|e| e.new_id);
    let n_copied = entries
        .iter()
        .filter(|e| matches!(e.action, TransferAction::CopyFrom(_)))
        .count();
    let summary = TransferSummary {
        old_vocab_size: old.len(),
        new_vocab_size: new.len(),
        n_copied,
        n_random: entries.len() - n_copied,
        overlap_fraction: n_copied as f64 / entries.len() as f64,
    };
    Ok(TransferPlan { entries, summary })
}
