//! Multi-token cloze evaluation over a constrained candidate set.
//!
//! The gold surface of an instance is tokenized by the scorer into `k`
//! sub-tokens and the sentinel is expanded into `k` masks. At every mask
//! position the gold sub-token is ranked among the task's candidate ids
//! (the union of all label sub-tokens), not the whole vocabulary. Reciprocal
//! ranks and top-1 hits are then averaged over the `k` positions.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::whitespace_tokens;
use crate::error::{Error, Result};
use crate::probes::{ProbeInstance, TermVocabulary};
use crate::scalar::{mean, Scalar};
use crate::scorer::{ScoreRequest, Scorer, ScorerInfo, TokenId, TokenizeMode};

/// Position-independent candidate ids of a task, tied to one scorer model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub task_id: String,
    pub model_id: String,
    pub mode: TokenizeMode,
    /// Sorted, unique.
    pub ids: Vec<TokenId>,
    /// Each label's sub-token ids, in order.
    pub labels: BTreeMap<String, Vec<TokenId>>,
}

pub fn build_candidate_set(
    vocab: &TermVocabulary,
    scorer: &dyn Scorer,
    mode: TokenizeMode,
) -> Result<CandidateSet> {
    vocab.validate()?;
    let info = scorer.info()?;
    let mut labels = BTreeMap::new();
    let mut ids = BTreeSet::new();
    for label in &vocab.labels {
        let tokens = scorer.tokenize(&label.surface, mode)?.token_ids;
        if tokens.is_empty() {
            return Err(Error::invalid(format!(
                "label `{}` tokenizes to no ids under {}",
                label.surface, info.model_id
            )));
        }
        ids.extend(tokens.iter().copied());
        labels.insert(label.surface.clone(), tokens);
    }
    if ids.len() < 2 {
        return Err(Error::invalid(format!(
            "task `{}` has fewer than 2 distinct candidate ids",
            vocab.task_id
        )));
    }
    Ok(CandidateSet {
        task_id: vocab.task_id.clone(),
        model_id: info.model_id,
        mode,
        ids: ids.into_iter().collect(),
        labels,
    })
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Rejects a cached set built against a different model.
    pub fn check_model(&self, info: &ScorerInfo) -> Result<()> {
        if self.model_id != info.model_id {
            return Err(Error::invalid(format!(
                "candidate set was built for `{}`, scorer is `{}`",
                self.model_id, info.model_id
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(file), self)?;
        Ok(())
    }

    /// Loads a cached set, refusing it when the scorer's model differs.
    pub fn load(path: impl AsRef<Path>, info: &ScorerInfo) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let set: CandidateSet = serde_json::from_reader(BufReader::new(file))?;
        set.check_model(info)?;
        Ok(set)
    }
}

/// Rank of `gold` among `candidates`: one plus the number of candidates
/// scoring strictly higher, plus those tying with a smaller id.
pub fn rank_among(scores: &BTreeMap<TokenId, f64>, candidates: &[TokenId], gold: TokenId) -> Result<usize> {
    let score = |id: TokenId| {
        scores
            .get(&id)
            .copied()
            .ok_or_else(|| Error::protocol(format!("missing score for candidate {id}")))
    };
    let g = score(gold)?;
    let mut rank = 1;
    for &v in candidates {
        if v == gold {
            continue;
        }
        let s = score(v)?;
        if s > g || (s == g && v < gold) {
            rank += 1;
        }
    }
    Ok(rank)
}

/// Reciprocal ranks, their mean and the top-1 rate for one instance.
///
/// P@1 is averaged over positions unless `strict`, in which case it is 1
/// only when every position ranks first.
pub fn rank_metrics<S: Scalar>(ranks: &[usize], strict: bool) -> Result<(Vec<S>, S, S)> {
    if ranks.is_empty() || ranks.contains(&0) {
        return Err(Error::invalid("ranks must be a non-empty list of positive integers"));
    }
    let rr: Vec<S> = ranks.iter().map(|&r| S::reciprocal(r)).collect();
    let mrr = mean(rr.iter().copied()).expect("non-empty");
    let p1 = if strict {
        if ranks.iter().all(|&r| r == 1) {
            S::one()
        } else {
            S::zero()
        }
    } else {
        mean(ranks.iter().map(|&r| if r == 1 { S::one() } else { S::zero() })).expect("non-empty")
    };
    Ok((rr, mrr, p1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult<S> {
    pub instance_id: String,
    pub task_id: String,
    pub model_id: String,
    pub gold_label: String,
    pub cluster: String,
    pub k: usize,
    pub gold_ids: Vec<TokenId>,
    pub ranks: Vec<usize>,
    pub rr: Vec<S>,
    pub instance_mrr: S,
    pub instance_p1: S,
    /// Whitespace tokens of the restored excerpt.
    pub input_tokens: usize,
    #[serde(default)]
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EvalOptions {
    pub strict_p1: bool,
}

pub fn eval_instance<S: Scalar>(
    instance: &ProbeInstance,
    cset: &CandidateSet,
    scorer: &dyn Scorer,
    options: EvalOptions,
) -> Result<InstanceResult<S>> {
    let gold_ids = cset.labels.get(&instance.gold_surface).ok_or_else(|| {
        Error::invalid(format!("gold `{}` has no candidate tokenization", instance.gold_surface))
    })?;
    let request = ScoreRequest {
        context: instance.context.clone(),
        num_masks: gold_ids.len(),
        candidate_ids: cset.ids.clone(),
        topk: 0,
    };
    let response = scorer.fill(&request)?;
    response.check(&request)?;
    let ranks = gold_ids
        .iter()
        .zip(&response.positions)
        .map(|(&gold, pos)| rank_among(&pos.candidate_logprobs, &cset.ids, gold))
        .collect::<Result<Vec<_>>>()?;
    let (rr, instance_mrr, instance_p1) = rank_metrics(&ranks, options.strict_p1)?;
    Ok(InstanceResult {
        instance_id: instance.instance_id.clone(),
        task_id: instance.task_id.clone(),
        model_id: cset.model_id.clone(),
        gold_label: instance.gold_surface.clone(),
        cluster: instance.cluster.clone(),
        k: gold_ids.len(),
        gold_ids: gold_ids.clone(),
        ranks,
        rr,
        instance_mrr,
        instance_p1,
        input_tokens: whitespace_tokens(&instance.restore()),
        truncated: response.truncated,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub evaluated: usize,
    /// Instances whose task or label is not covered by the candidate set.
    pub skipped: usize,
    pub errored: usize,
    pub truncated: usize,
    pub errors: Vec<(String, String)>,
}

#[derive(Debug, Clone)]
pub struct TaskEvaluation<S> {
    /// Sorted by instance id.
    pub results: Vec<InstanceResult<S>>,
    pub summary: EvalSummary,
}

/// Evaluates all instances (in parallel on the current rayon pool). Scorer
/// failures mark single instances as errored; the call fails only when
/// every instance errored.
pub fn eval_task<S: Scalar>(
    instances: &[ProbeInstance],
    cset: &CandidateSet,
    scorer: &dyn Scorer,
    options: EvalOptions,
) -> Result<TaskEvaluation<S>> {
    if instances.is_empty() {
        return Err(Error::invalid("no instances to evaluate"));
    }
    cset.check_model(&scorer.info()?)?;

    enum Outcome<S> {
        Done(InstanceResult<S>),
        Skipped,
        Failed(String, String),
    }
    let outcomes: Vec<Outcome<S>> = instances
        .par_iter()
        .map(|inst| {
            if inst.task_id != cset.task_id || !cset.labels.contains_key(&inst.gold_surface) {
                return Outcome::Skipped;
            }
            match eval_instance(inst, cset, scorer, options) {
                Ok(r) => Outcome::Done(r),
                Err(e) => Outcome::Failed(inst.instance_id.clone(), e.to_string()),
            }
        })
        .collect();

    let mut summary = EvalSummary::default();
    let mut results = Vec::new();
    for outcome in outcomes {
        match outcome {
            Outcome::Done(r) => {
                summary.evaluated += 1;
                summary.truncated += r.truncated as usize;
                results.push(r);
            }
            Outcome::Skipped => summary.skipped += 1,
            Outcome::Failed(id, msg) => {
                log::warn!("instance {id} failed: {msg}");
                summary.errored += 1;
                summary.errors.push((id, msg));
            }
        }
    }
    if summary.errored > 0 && summary.evaluated == 0 {
        let (id, msg) = &summary.errors[0];
        return Err(Error::protocol(format!(
            "all {} scored instances failed; first ({id}): {msg}",
            summary.errored
        )));
    }
    results.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
    summary.errors.sort();
    Ok(TaskEvaluation { results, summary })
}
