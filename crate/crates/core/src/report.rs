//! Macro aggregation, model ranking, the label-complexity curve and
//! table rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluator::InstanceResult;
use crate::mlm::MlmReport;
use crate::probes::TermVocabulary;
use crate::scalar::{mean, Scalar};

/// Averages closer than this share a rank.
pub const RANK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterWeighting {
    /// Mean of member-label means.
    #[default]
    Unweighted,
    /// Member-label means weighted by instance counts.
    ByInstances,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AggregateOptions {
    pub cluster_weighting: ClusterWeighting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScore<S> {
    pub label: String,
    pub cluster: String,
    pub n_instances: usize,
    pub mean_mrr: S,
    pub mean_p1: S,
    /// Sub-tokens of the label under the evaluated model (mean over its
    /// instances; constant for a single tokenizer).
    pub n_tokens: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterScore<S> {
    pub cluster: String,
    pub n_labels: usize,
    pub n_instances: usize,
    pub mean_mrr: S,
    pub mean_p1: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskStats {
    /// #T: mean whitespace tokens of the restored inputs.
    pub avg_input_tokens: f64,
    /// #L: labels in the task vocabulary.
    pub n_labels: usize,
    /// #T/L: mean sub-tokens per evaluated label.
    pub avg_tokens_per_label: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport<S> {
    pub task_id: String,
    pub model_id: String,
    pub n_instances: usize,
    /// Vocabulary order; labels without instances are left out.
    pub labels: Vec<LabelScore<S>>,
    pub clusters: Vec<ClusterScore<S>>,
    pub cluster_weighting: ClusterWeighting,
    pub macro_mrr: S,
    pub macro_p1: S,
    pub excluded_labels: Vec<String>,
    pub stats: TaskStats,
}

/// Label means first, then the unweighted mean over labels.
pub fn aggregate<S: Scalar>(
    results: &[InstanceResult<S>],
    vocab: &TermVocabulary,
    options: AggregateOptions,
) -> Result<TaskReport<S>> {
    let first = results.first().ok_or_else(|| Error::invalid("no results to aggregate"))?;
    let mut by_label: BTreeMap<&str, Vec<&InstanceResult<S>>> = BTreeMap::new();
    for r in results {
        if r.task_id != vocab.task_id {
            return Err(Error::invalid(format!(
                "result `{}` belongs to task `{}`, expected `{}`",
                r.instance_id, r.task_id, vocab.task_id
            )));
        }
        if r.model_id != first.model_id {
            return Err(Error::invalid(format!(
                "results mix models `{}` and `{}`",
                first.model_id, r.model_id
            )));
        }
        if vocab.label(&r.gold_label).is_none() {
            return Err(Error::invalid(format!("label `{}` is not in the task vocabulary", r.gold_label)));
        }
        by_label.entry(r.gold_label.as_str()).or_default().push(r);
    }

    let mut labels = Vec::new();
    let mut excluded_labels = Vec::new();
    for label in &vocab.labels {
        let Some(rows) = by_label.get(label.surface.as_str()) else {
            excluded_labels.push(label.surface.clone());
            continue;
        };
        labels.push(LabelScore {
            label: label.surface.clone(),
            cluster: label.cluster.clone(),
            n_instances: rows.len(),
            mean_mrr: mean(rows.iter().map(|r| r.instance_mrr)).expect("non-empty"),
            mean_p1: mean(rows.iter().map(|r| r.instance_p1)).expect("non-empty"),
            n_tokens: rows.iter().map(|r| r.k as f64).sum::<f64>() / rows.len() as f64,
        });
    }

    let mut clusters = Vec::new();
    for cluster in vocab.clusters() {
        let members: Vec<&LabelScore<S>> = labels.iter().filter(|l| l.cluster == cluster).collect();
        if members.is_empty() {
            continue;
        }
        let n_instances = members.iter().map(|l| l.n_instances).sum();
        let (mean_mrr, mean_p1) = match options.cluster_weighting {
            ClusterWeighting::Unweighted => (
                mean(members.iter().map(|l| l.mean_mrr)).expect("non-empty"),
                mean(members.iter().map(|l| l.mean_p1)).expect("non-empty"),
            ),
            ClusterWeighting::ByInstances => {
                let total = S::from_count(n_instances);
                let weighted = |f: fn(&LabelScore<S>) -> S| {
                    members
                        .iter()
                        .fold(S::zero(), |acc, l| acc + S::from_count(l.n_instances) * f(l))
                        / total
                };
                (weighted(|l| l.mean_mrr), weighted(|l| l.mean_p1))
            }
        };
        clusters.push(ClusterScore {
            cluster: cluster.to_string(),
            n_labels: members.len(),
            n_instances,
            mean_mrr,
            mean_p1,
        });
    }

    let stats = TaskStats {
        avg_input_tokens: results.iter().map(|r| r.input_tokens as f64).sum::<f64>() / results.len() as f64,
        n_labels: vocab.labels.len(),
        avg_tokens_per_label: labels.iter().map(|l| l.n_tokens).sum::<f64>() / labels.len() as f64,
    };
    Ok(TaskReport {
        task_id: vocab.task_id.clone(),
        model_id: first.model_id.clone(),
        n_instances: results.len(),
        macro_mrr: mean(labels.iter().map(|l| l.mean_mrr)).expect("non-empty"),
        macro_p1: mean(labels.iter().map(|l| l.mean_p1)).expect("non-empty"),
        labels,
        clusters,
        cluster_weighting: options.cluster_weighting,
        excluded_labels,
        stats,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveBucket<S> {
    /// Gold sub-token count.
    pub k: usize,
    pub n_instances: usize,
    pub mean_mrr: S,
    pub mean_p1: S,
}

/// Mean instance MRR and P@1 per gold sub-token count, ascending in `k`.
pub fn complexity_curve<S: Scalar>(results: &[InstanceResult<S>]) -> Vec<CurveBucket<S>> {
    let mut groups: BTreeMap<usize, Vec<&InstanceResult<S>>> = BTreeMap::new();
    for r in results {
        groups.entry(r.k).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(k, rows)| CurveBucket {
            k,
            n_instances: rows.len(),
            mean_mrr: mean(rows.iter().map(|r| r.instance_mrr)).expect("non-empty"),
            mean_p1: mean(rows.iter().map(|r| r.instance_p1)).expect("non-empty"),
        })
        .collect()
}

/// One CSV for several curves, keyed by model id.
pub fn curve_csv<S: Scalar>(curves: &[(String, Vec<CurveBucket<S>>)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model_id", "k", "n_instances", "mean_mrr", "mean_p1"]).map_err(csv_error)?;
    for (model_id, buckets) in curves {
        for b in buckets {
            w.write_record([
                model_id.clone(),
                b.k.to_string(),
                b.n_instances.to_string(),
                b.mean_mrr.to_f64_lossy().to_string(),
                b.mean_p1.to_f64_lossy().to_string(),
            ])
            .map_err(csv_error)?;
        }
    }
    finish_csv(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedModel<S> {
    pub model_id: String,
    pub average: S,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRanking<S> {
    /// Descending by average; tied models keep their input order.
    pub entries: Vec<RankedModel<S>>,
}

impl<S: Scalar> ModelRanking<S> {
    pub fn rank_of(&self, model_id: &str) -> Option<usize> {
        self.entries.iter().find(|e| e.model_id == model_id).map(|e| e.rank)
    }
}

/// Competition ranking: one plus the number of strictly better models.
pub fn rank_models<S: Scalar>(averages: &[(String, S)]) -> Result<ModelRanking<S>> {
    if averages.len() < 2 {
        return Err(Error::invalid("ranking needs at least two models"));
    }
    let values: Vec<f64> = averages.iter().map(|(_, a)| a.to_f64_lossy()).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("model averages must be finite"));
    }
    let mut entries: Vec<RankedModel<S>> = averages
        .iter()
        .zip(&values)
        .map(|((model_id, average), v)| RankedModel {
            model_id: model_id.clone(),
            average: *average,
            rank: 1 + values.iter().filter(|&&o| o > v + RANK_TOLERANCE).count(),
        })
        .collect();
    entries.sort_by_key(|e| e.rank);
    Ok(ModelRanking { entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Mrr,
    P1,
}

impl Metric {
    fn pick<S: Copy>(self, report: &TaskReport<S>) -> S {
        match self {
            Metric::Mrr => report.macro_mrr,
            Metric::P1 => report.macro_p1,
        }
    }

    fn title(self) -> &'static str {
        match self {
            Metric::Mrr => "MRR",
            Metric::P1 => "P@1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub task_id: String,
    pub stats: TaskStats,
    /// One per model, in `Comparison::models` order.
    pub scores: Vec<Option<f64>>,
}

/// Tasks by models, with a per-model average over tasks and a rank row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub metric: Metric,
    pub models: Vec<String>,
    pub rows: Vec<ComparisonRow>,
    pub average: Vec<Option<f64>>,
    pub ranking: Option<ModelRanking<f64>>,
}

/// Task and model order follow first appearance in `reports`. The average
/// is a macro over the tasks a model was evaluated on.
pub fn compare(reports: &[TaskReport<f64>], metric: Metric) -> Result<Comparison> {
    if reports.is_empty() {
        return Err(Error::invalid("no task reports to compare"));
    }
    let mut models: Vec<String> = Vec::new();
    let mut rows: Vec<ComparisonRow> = Vec::new();
    for r in reports {
        if !models.contains(&r.model_id) {
            models.push(r.model_id.clone());
        }
    }
    for r in reports {
        let m = models.iter().position(|m| *m == r.model_id).expect("collected");
        let row = match rows.iter().position(|row| row.task_id == r.task_id) {
            Some(i) => &mut rows[i],
            None => {
                rows.push(ComparisonRow {
                    task_id: r.task_id.clone(),
                    stats: r.stats.clone(),
                    scores: vec![None; models.len()],
                });
                rows.last_mut().expect("pushed")
            }
        };
        if row.scores[m].replace(metric.pick(r)).is_some() {
            return Err(Error::invalid(format!(
                "model `{}` reported twice for task `{}`",
                r.model_id, r.task_id
            )));
        }
    }
    let average: Vec<Option<f64>> = (0..models.len())
        .map(|m| mean(rows.iter().filter_map(|row| row.scores[m])))
        .collect();
    let ranking = if models.len() >= 2 && average.iter().all(Option::is_some) {
        let pairs: Vec<(String, f64)> = models
            .iter()
            .cloned()
            .zip(average.iter().map(|a| a.expect("checked")))
            .collect();
        Some(rank_models(&pairs)?)
    } else {
        None
    };
    Ok(Comparison {
        metric,
        models,
        rows,
        average,
        ranking,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    Markdown,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "markdown" | "md" => Ok(Format::Markdown),
            other => Err(Error::invalid(format!("unknown format `{other}`"))),
        }
    }
}

fn pct(v: f64) -> String {
    format!("{:.1}", v * 100.0)
}

fn pct_opt(v: Option<f64>) -> String {
    v.map(pct).unwrap_or_else(|| "-".to_string())
}

fn csv_error(e: csv::Error) -> Error {
    Error::invalid(format!("csv: {e}"))
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::invalid(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(format!("csv: {e}")))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn render_task<S: Scalar + Serialize>(report: &TaskReport<S>, format: Format) -> Result<String> {
    match format {
        Format::Json => to_json(report),
        Format::Csv => task_csv(report),
        Format::Markdown => Ok(task_markdown(report)),
    }
}

fn task_csv<S: Scalar>(report: &TaskReport<S>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["task_id", "model_id", "level", "name", "cluster", "n_instances", "mrr", "p1"])
        .map_err(csv_error)?;
    let mut row = |level: &str, name: &str, cluster: &str, n: usize, mrr: S, p1: S| {
        w.write_record([
            report.task_id.as_str(),
            report.model_id.as_str(),
            level,
            name,
            cluster,
            &n.to_string(),
            &mrr.to_f64_lossy().to_string(),
            &p1.to_f64_lossy().to_string(),
        ])
        .map_err(csv_error)
    };
    for l in &report.labels {
        row("label", &l.label, &l.cluster, l.n_instances, l.mean_mrr, l.mean_p1)?;
    }
    for c in &report.clusters {
        row("cluster", &c.cluster, &c.cluster, c.n_instances, c.mean_mrr, c.mean_p1)?;
    }
    row("task", &report.task_id, "", report.n_instances, report.macro_mrr, report.macro_p1)?;
    finish_csv(w)
}

fn task_markdown<S: Scalar>(report: &TaskReport<S>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "## {} ({})\n", report.task_id, report.model_id);
    out.push_str("| Label | Cluster | N | MRR | P@1 |\n|---|---|---:|---:|---:|\n");
    for l in &report.labels {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} |",
            l.label,
            l.cluster,
            l.n_instances,
            pct(l.mean_mrr.to_f64_lossy()),
            pct(l.mean_p1.to_f64_lossy())
        );
    }
    if !report.clusters.is_empty() {
        out.push_str("\n| Cluster | Labels | N | MRR | P@1 |\n|---|---:|---:|---:|---:|\n");
        for c in &report.clusters {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} |",
                c.cluster,
                c.n_labels,
                c.n_instances,
                pct(c.mean_mrr.to_f64_lossy()),
                pct(c.mean_p1.to_f64_lossy())
            );
        }
    }
    out.push_str("\n| #T | #L | #T/L | Macro MRR | Macro P@1 |\n|---:|---:|---:|---:|---:|\n");
    let _ = writeln!(
        out,
        "| {:.0} | {} | {:.2} | {} | {} |",
        report.stats.avg_input_tokens,
        report.stats.n_labels,
        report.stats.avg_tokens_per_label,
        pct(report.macro_mrr.to_f64_lossy()),
        pct(report.macro_p1.to_f64_lossy())
    );
    if !report.excluded_labels.is_empty() {
        let _ = writeln!(out, "\nLabels without instances: {}", report.excluded_labels.join(", "));
    }
    out
}

pub fn render_comparison(cmp: &Comparison, format: Format) -> Result<String> {
    match format {
        Format::Json => to_json(cmp),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut head = vec!["task_id".to_string(), "#T".into(), "#L".into(), "#T/L".into()];
            head.extend(cmp.models.iter().cloned());
            w.write_record(&head).map_err(csv_error)?;
            let fmt = |v: &Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            for row in &cmp.rows {
                let mut rec = vec![
                    row.task_id.clone(),
                    row.stats.avg_input_tokens.to_string(),
                    row.stats.n_labels.to_string(),
                    row.stats.avg_tokens_per_label.to_string(),
                ];
                rec.extend(row.scores.iter().map(fmt));
                w.write_record(&rec).map_err(csv_error)?;
            }
            let mut avg = vec!["Average".to_string(), String::new(), String::new(), String::new()];
            avg.extend(cmp.average.iter().map(fmt));
            w.write_record(&avg).map_err(csv_error)?;
            if let Some(ranking) = &cmp.ranking {
                let mut rank = vec!["Model Rank".to_string(), String::new(), String::new(), String::new()];
                rank.extend(cmp.models.iter().map(|m| ranking.rank_of(m).expect("ranked").to_string()));
                w.write_record(&rank).map_err(csv_error)?;
            }
            finish_csv(w)
        }
        Format::Markdown => {
            let mut out = String::new();
            let _ = writeln!(out, "## {} by task\n", cmp.metric.title());
            let _ = write!(out, "| Task | #T | #L | #T/L |");
            for m in &cmp.models {
                let _ = write!(out, " {m} |");
            }
            out.push_str("\n|---|---:|---:|---:|");
            out.push_str(&"---:|".repeat(cmp.models.len()));
            out.push('\n');
            for row in &cmp.rows {
                let _ = write!(
                    out,
                    "| {} | {:.0} | {} | {:.2} |",
                    row.task_id, row.stats.avg_input_tokens, row.stats.n_labels, row.stats.avg_tokens_per_label
                );
                for s in &row.scores {
                    let _ = write!(out, " {} |", pct_opt(*s));
                }
                out.push('\n');
            }
            out.push_str("| Average | | | |");
            for a in &cmp.average {
                let _ = write!(out, " {} |", pct_opt(*a));
            }
            out.push('\n');
            if let Some(ranking) = &cmp.ranking {
                out.push_str("| Model Rank | | | |");
                for m in &cmp.models {
                    let _ = write!(out, " {} |", ranking.rank_of(m).expect("ranked"));
                }
                out.push('\n');
            }
            Ok(out)
        }
    }
}

/// Upstream accuracy: rows are sub-corpora, columns are models.
pub fn render_mlm(reports: &[MlmReport], format: Format) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::invalid("no MLM reports to render"));
    }
    let mut subcorpora: Vec<&str> = Vec::new();
    for r in reports {
        for row in &r.rows {
            if !subcorpora.contains(&row.subcorpus_id.as_str()) {
                subcorpora.push(&row.subcorpus_id);
            }
        }
    }
    let cell = |r: &MlmReport, sc: &str| r.rows.iter().find(|row| row.subcorpus_id == sc).and_then(|row| row.accuracy);
    let ranking = if reports.len() >= 2 && reports.iter().all(|r| r.average.is_some()) {
        let pairs: Vec<(String, f64)> = reports
            .iter()
            .map(|r| (r.model_id.clone(), r.average.expect("checked")))
            .collect();
        Some(rank_models(&pairs)?)
    } else {
        None
    };
    match format {
        Format::Json => {
            #[derive(Serialize)]
            struct Doc<'a> {
                reports: &'a [MlmReport],
                ranking: Option<ModelRanking<f64>>,
            }
            to_json(&Doc { reports, ranking })
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut head = vec!["subcorpus_id".to_string()];
            head.extend(reports.iter().map(|r| r.model_id.clone()));
            w.write_record(&head).map_err(csv_error)?;
            let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            for sc in &subcorpora {
                let mut rec = vec![sc.to_string()];
                rec.extend(reports.iter().map(|r| fmt(cell(r, sc))));
                w.write_record(&rec).map_err(csv_error)?;
            }
            let mut avg = vec!["Average".to_string()];
            avg.extend(reports.iter().map(|r| fmt(r.average)));
            w.write_record(&avg).map_err(csv_error)?;
            if let Some(ranking) = &ranking {
                let mut rank = vec!["Model Rank".to_string()];
                rank.extend(reports.iter().map(|r| ranking.rank_of(&r.model_id).expect("ranked").to_string()));
                w.write_record(&rank).map_err(csv_error)?;
            }
            finish_csv(w)
        }
        Format::Markdown => {
            let mut out = String::from("## Masked-token accuracy (P@1)\n\n| Sub-corpus |");
            for r in reports {
                let _ = write!(out, " {} |", r.model_id);
            }
            out.push_str("\n|---|");
            out.push_str(&"---:|".repeat(reports.len()));
            out.push('\n');
            for sc in &subcorpora {
                let _ = write!(out, "| {sc} |");
                for r in reports {
                    let _ = write!(out, " {} |", pct_opt(cell(r, sc)));
                }
                out.push('\n');
            }
            out.push_str("| Average |");
            for r in reports {
                let _ = write!(out, " {} |", pct_opt(r.average));
            }
            out.push('\n');
            if let Some(ranking) = &ranking {
                out.push_str("| Model Rank |");
                for r in reports {
                    let _ = write!(out, " {} |", ranking.rank_of(&r.model_id).expect("ranked"));
                }
                out.push('\n');
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probes::{Label, MatchPolicy};
    use crate::Rational;

    fn vocab(labels: &[(&str, &str)]) -> TermVocabulary {
        TermVocabulary {
            task_id: "t".into(),
            labels: labels
                .iter()
                .map(|&(s, c)| Label { surface: s.into(), cluster: c.into() })
                .collect(),
            match_policy: MatchPolicy::CaseSensitive,
        }
    }

    fn result<S: Scalar>(id: usize, label: &str, mrr: S, p1: S, k: usize) -> InstanceResult<S> {
        InstanceResult {
            instance_id: format!("t/x/{id}"),
            task_id: "t".into(),
            model_id: "m".into(),
            gold_label: label.into(),
            cluster: String::new(),
            k,
            gold_ids: vec![0; k],
            ranks: vec![1; k],
            rr: vec![mrr; k],
            instance_mrr: mrr,
            instance_p1: p1,
            input_tokens: 10,
            truncated: false,
        }
    }

    #[test]
    fn single_instance_macro() {
        let v = vocab(&[("a", "c"), ("b", "c")]);
        let r = aggregate(&[result(0, "a", 0.75, 0.5, 2)], &v, AggregateOptions::default()).unwrap();
        assert_eq!(r.macro_mrr, 0.75);
        assert_eq!(r.excluded_labels, vec!["b".to_string()]);
        assert_eq!(r.stats.n_labels, 2);
    }

    #[test]
    fn macro_is_unweighted_over_labels() {
        let v = vocab(&[("a", "c1"), ("b", "c2")]);
        let one = Rational::from_integer(1);
        let half = Rational::new(1, 2);
        let mut rows: Vec<_> = (0..10).map(|i| result(i, "a", one, one, 1)).collect();
        rows.push(result(10, "b", half, Rational::from_integer(0), 1));
        let r = aggregate(&rows, &v, AggregateOptions::default()).unwrap();
        assert_eq!(r.macro_mrr, Rational::new(3, 4));
        assert_eq!(r.clusters.len(), 2);
    }

    #[test]
    fn weighted_clusters() {
        let v = vocab(&[("a", "c"), ("b", "c")]);
        let mut rows: Vec<_> = (0..3).map(|i| result(i, "a", 1.0, 1.0, 1)).collect();
        rows.push(result(3, "b", 0.0, 0.0, 1));
        let un = aggregate(&rows, &v, AggregateOptions::default()).unwrap();
        assert_eq!(un.clusters[0].mean_mrr, 0.5);
        let w = aggregate(&rows, &v, AggregateOptions { cluster_weighting: ClusterWeighting::ByInstances }).unwrap();
        assert_eq!(w.clusters[0].mean_mrr, 0.75);
    }

    #[test]
    fn foreign_results_rejected() {
        let v = vocab(&[("a", "c"), ("b", "c")]);
        assert!(aggregate::<f64>(&[], &v, AggregateOptions::default()).is_err());
        assert!(aggregate(&[result(0, "zzz", 1.0, 1.0, 1)], &v, AggregateOptions::default()).is_err());
    }

    #[test]
    fn curve_buckets() {
        let rows: Vec<_> = (1..=3usize)
            .map(|k| result(k, "a", Rational::new(1, k as i64), Rational::from_integer(0), k))
            .collect();
        let curve = complexity_curve(&rows);
        let means: Vec<_> = curve.iter().map(|b| b.mean_mrr).collect();
        assert_eq!(means, vec![Rational::from_integer(1), Rational::new(1, 2), Rational::new(1, 3)]);
        let flat = complexity_curve(&[result(0, "a", 1.0, 1.0, 1), result(1, "a", 0.5, 0.0, 1)]);
        assert_eq!(flat.len(), 1);
        let csv = curve_csv(&[("m".to_string(), flat)]).unwrap();
        assert_eq!(csv, "model_id,k,n_instances,mean_mrr,mean_p1\nm,1,2,0.75,0.5\n");
    }

    #[test]
    fn table_three_ranks() {
        let avgs = [81.8, 78.7, 78.7, 73.8, 70.1, 68.9, 63.5];
        let pairs: Vec<(String, f64)> = avgs.iter().enumerate().map(|(i, &a)| (format!("m{i}"), a)).collect();
        let ranking = rank_models(&pairs).unwrap();
        let ranks: Vec<_> = ranking.entries.iter().map(|e| e.rank).collect();
        assert_eq!(ranks, vec![1, 2, 2, 4, 5, 6, 7]);
        assert!(rank_models(&pairs[..1]).is_err());
        let pair = rank_models(&[("x".to_string(), 0.2), ("y".to_string(), 0.9)]).unwrap();
        assert_eq!(pair.rank_of("y"), Some(1));
        assert_eq!(pair.rank_of("x"), Some(2));
    }

    #[test]
    fn markdown_omits_empty_clusters() {
        let v = vocab(&[("a", "c"), ("b", "c")]);
        let mut r = aggregate(&[result(0, "a", 1.0, 1.0, 1)], &v, AggregateOptions::default()).unwrap();
        assert!(render_task(&r, Format::Markdown).unwrap().contains("| Cluster | Labels |"));
        r.clusters.clear();
        assert!(!render_task(&r, Format::Markdown).unwrap().contains("| Cluster | Labels |"));
    }

    #[test]
    fn json_render_is_idempotent() {
        let v = vocab(&[("a", "c"), ("b", "d")]);
        let r = aggregate(
            &[result(0, "a", 1.0 / 3.0, 0.0, 3), result(1, "b", 0.7, 1.0, 1)],
            &v,
            AggregateOptions::default(),
        )
        .unwrap();
        let once = render_task(&r, Format::Json).unwrap();
        let parsed: TaskReport<f64> = serde_json::from_str(&once).unwrap();
        assert_eq!(render_task(&parsed, Format::Json).unwrap(), once);
    }

    #[test]
    fn comparison_rows_and_ranks() {
        let v = vocab(&[("a", "c"), ("b", "c")]);
        let mut reports = Vec::new();
        for (model, score) in [("m1", 0.5), ("m2", 0.9)] {
            let mut rows = vec![result(0, "a", score, 0.0, 1)];
            rows[0].model_id = model.into();
            reports.push(aggregate(&rows, &v, AggregateOptions::default()).unwrap());
        }
        let cmp = compare(&reports, Metric::Mrr).unwrap();
        assert_eq!(cmp.models, vec!["m1", "m2"]);
        assert_eq!(cmp.rows[0].scores, vec![Some(0.5), Some(0.9)]);
        let md = render_comparison(&cmp, Format::Markdown).unwrap();
        assert!(md.contains("| Model Rank | | | | 2 | 1 |"));
        reports.push(reports[0].clone());
        assert!(compare(&reports, Metric::Mrr).is_err());
    }
}
