//! Exponentially smoothed multi-corpus sampling.
//!
//! Sub-corpus `i` with token share `s_i` is drawn with probability
//! `q_i = s_i^alpha / sum_j s_j^alpha`. `alpha = 1` keeps the raw mix,
//! `alpha = 0` is uniform, and values in between up-sample small corpora.

use std::sync::Arc;

use num_traits::Float;
use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{chunk_text, Corpus, ManifestEntry, SplitFilter};
use crate::error::{Error, Result};

/// Smoothing exponent recovered by fitting published corpus mixes.
pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan<F> {
    pub shares: Vec<F>,
    pub alpha: F,
    pub rates: Vec<F>,
}

/// Computes smoothed sampling rates from per-sub-corpus shares.
///
/// `shares` may be raw token counts: they are normalized first, so scaling
/// every entry by a constant gives the same plan.
pub fn smoothed_rates<F: Float>(shares: &[F], alpha: F) -> Result<SamplingPlan<F>> {
    if shares.is_empty() {
        return Err(Error::invalid("no shares given"));
    }
    if !(alpha >= F::zero() && alpha <= F::one()) {
        return Err(Error::invalid(format!(
            "alpha must lie in [0, 1], got {}",
            alpha.to_f64().unwrap_or(f64::NAN)
        )));
    }
    if let Some(pos) = shares.iter().position(|s| !(*s > F::zero() && s.is_finite())) {
        return Err(Error::invalid(format!("share #{pos} is not a positive finite number")));
    }
    let total = shares.iter().fold(F::zero(), |acc, s| acc + *s);
    let shares: Vec<F> = shares.iter().map(|s| *s / total).collect();
    let powered: Vec<F> = shares.iter().map(|s| s.powf(alpha)).collect();
    let norm = powered.iter().fold(F::zero(), |acc, p| acc + *p);
    let rates = powered.iter().map(|p| *p / norm).collect();
    Ok(SamplingPlan {
        shares,
        alpha,
        rates,
    })
}

/// What one draw from a sub-corpus yields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingUnit {
    Document,
    #[default]
    Chunk,
    Sentence,
}

/// Naive splitter: breaks on newlines and on `.`, `!` or `?` followed by
/// whitespace.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        let boundary = match c {
            '\n' => Some(i),
            '.' | '!' | '?' => match chars.peek() {
                Some((_, next)) if next.is_whitespace() => Some(i + c.len_utf8()),
                _ => None,
            },
            _ => None,
        };
        if let Some(end) = boundary {
            let s = text[start..end].trim();
            if !s.is_empty() {
                out.push(s.to_string());
            }
            start = end;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail.to_string());
    }
    out
}

pub type UnitIter = Box<dyn Iterator<Item = Result<String>> + Send>;

/// A re-openable source of sampling units; reopening restarts from the
/// beginning (one epoch).
pub trait UnitSource: Send {
    fn open(&self) -> Result<UnitIter>;
}

impl UnitSource for Arc<[String]> {
    fn open(&self) -> Result<UnitIter> {
        let items = Arc::clone(self);
        Ok(Box::new((0..items.len()).map(move |i| Ok(items[i].clone()))))
    }
}

/// Units read from one sub-corpus of an ingested corpus.
pub struct CorpusUnits {
    pub corpus: Corpus,
    pub entry: ManifestEntry,
    pub unit: SamplingUnit,
    pub window_chars: usize,
    pub filter: SplitFilter,
}

impl UnitSource for CorpusUnits {
    fn open(&self) -> Result<UnitIter> {
        let records = self.corpus.records(&self.entry)?;
        let (unit, window, filter) = (self.unit, self.window_chars, self.filter);
        Ok(Box::new(records.flat_map(move |rec| -> Vec<Result<String>> {
            match rec {
                Ok(doc) if filter.accepts(doc.split) => match unit {
                    SamplingUnit::Document => vec![Ok(doc.text)],
                    SamplingUnit::Chunk => chunk_text(&doc.text, window).into_iter().map(Ok).collect(),
                    SamplingUnit::Sentence => split_sentences(&doc.text).into_iter().map(Ok).collect(),
                },
                Ok(_) => Vec::new(),
                Err(e) => vec![Err(e)],
            }
        })))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Draw {
    pub subcorpus_id: String,
    pub text: String,
    /// How many times this sub-corpus had wrapped when the unit was read.
    pub epoch: u64,
}

struct Lane {
    id: String,
    source: Box<dyn UnitSource>,
    iter: UnitIter,
    pending: Option<String>,
    wraps: u64,
}

impl Lane {
    fn take(&mut self) -> Result<String> {
        if let Some(text) = self.pending.take() {
            return Ok(text);
        }
        if let Some(next) = self.iter.next() {
            return next;
        }
        self.iter = self.source.open()?;
        self.wraps += 1;
        match self.iter.next() {
            Some(next) => next,
            None => Err(Error::invalid(format!("sub-corpus `{}` became empty", self.id))),
        }
    }
}

/// Seeded interleaving of several unit streams according to a plan.
///
/// Each draw picks a sub-corpus i.i.d. with probability `q_i`; a stream that
/// runs out restarts from its beginning. Streams that are empty from the
/// start are dropped and the remaining rates renormalized.
pub struct SampleStream {
    lanes: Vec<Lane>,
    dist: WeightedIndex<f64>,
    rng: ChaCha8Rng,
    remaining: usize,
}

pub fn sample_stream<F: Float>(
    streams: Vec<(String, Box<dyn UnitSource>)>,
    plan: &SamplingPlan<F>,
    seed: u64,
    count: usize,
) -> Result<SampleStream> {
    if streams.len() != plan.rates.len() {
        return Err(Error::invalid(format!(
            "{} streams for {} sampling rates",
            streams.len(),
            plan.rates.len()
        )));
    }
    if count == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let mut lanes = Vec::new();
    let mut weights = Vec::new();
    for ((id, source), rate) in streams.into_iter().zip(&plan.rates) {
        let mut iter = source.open()?;
        let pending = match iter.next() {
            Some(first) => first?,
            None => {
                log::warn!("sub-corpus `{id}` yields no units; dropping it from the mix");
                continue;
            }
        };
        weights.push(rate.to_f64().unwrap_or(0.0));
        lanes.push(Lane {
            id,
            source,
            iter,
            pending: Some(pending),
            wraps: 0,
        });
    }
    if lanes.is_empty() {
        return Err(Error::invalid("all sample streams are empty"));
    }
    let dist = WeightedIndex::new(&weights).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(SampleStream {
        lanes,
        dist,
        rng: ChaCha8Rng::seed_from_u64(seed),
        remaining: count,
    })
}

impl SampleStream {
    /// Wrap counters per surviving sub-corpus.
    pub fn wraps(&self) -> Vec<(String, u64)> {
        self.lanes.iter().map(|l| (l.id.clone(), l.wraps)).collect()
    }
}

impl Iterator for SampleStream {
    type Item = Result<Draw>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let lane = &mut self.lanes[self.dist.sample(&mut self.rng)];
        Some(lane.take().map(|text| Draw {
            subcorpus_id: lane.id.clone(),
            text,
            epoch: lane.wraps,
        }))
    }
}
