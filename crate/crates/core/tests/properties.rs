use std::collections::BTreeMap;

use lexkit::evaluator::{rank_metrics, InstanceResult};
use lexkit::probes::{Label, MatchPolicy, TermVocabulary};
use lexkit::report::{aggregate, complexity_curve, rank_models, AggregateOptions};
use lexkit::transfer::{plan_embedding_transfer, Vocab};
use lexkit::Rational;
use proptest::prelude::*;

fn vocab(n: usize) -> TermVocabulary {
    TermVocabulary {
        task_id: "t".into(),
        labels: (0..n)
            .map(|i| Label { surface: format!("label{i}"), cluster: format!("c{}", i % 2) })
            .collect(),
        match_policy: MatchPolicy::CaseSensitive,
    }
}

fn instance(i: usize, label: usize, ranks: Vec<usize>) -> InstanceResult<Rational> {
    let (rr, mrr, p1) = rank_metrics::<Rational>(&ranks, false).unwrap();
    InstanceResult {
        instance_id: format!("t/s/{i}"),
        task_id: "t".into(),
        model_id: "m".into(),
        gold_label: format!("label{label}"),
        cluster: format!("c{}", label % 2),
        k: ranks.len(),
        gold_ids: vec![0; ranks.len()],
        ranks,
        rr,
        instance_mrr: mrr,
        instance_p1: p1,
        input_tokens: 5,
        truncated: false,
    }
}

fn results() -> impl Strategy<Value = Vec<InstanceResult<Rational>>> {
    prop::collection::vec((0usize..5, prop::collection::vec(1usize..8, 1..4)), 1..40).prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (label, ranks))| instance(i, label, ranks))
            .collect()
    })
}

fn group_by_oracle(rows: &[InstanceResult<Rational>]) -> Rational {
    let mut groups: BTreeMap<&str, Vec<Rational>> = BTreeMap::new();
    for r in rows {
        groups.entry(&r.gold_label).or_default().push(r.instance_mrr);
    }
    let means: Vec<Rational> = groups
        .values()
        .map(|v| v.iter().copied().sum::<Rational>() / Rational::from_integer(v.len() as i64))
        .collect();
    means.iter().copied().sum::<Rational>() / Rational::from_integer(means.len() as i64)
}

proptest! {
    #[test]
    fn macro_matches_group_by(rows in results(), shift in 0usize..40) {
        let v = vocab(5);
        let report = aggregate(&rows, &v, AggregateOptions::default()).unwrap();
        prop_assert_eq!(report.macro_mrr, group_by_oracle(&rows));
        prop_assert!(report.macro_p1 <= report.macro_mrr);

        let mut rotated = rows.clone();
        let n = rotated.len();
        rotated.rotate_left(shift % n);
        prop_assert_eq!(aggregate(&rotated, &v, AggregateOptions::default()).unwrap(), report.clone());

        // Duplicate one label's instances wholesale.
        let target = rows[0].gold_label.clone();
        let mut doubled = rows.clone();
        doubled.extend(rows.iter().filter(|r| r.gold_label == target).cloned());
        let d = aggregate(&doubled, &v, AggregateOptions::default()).unwrap();
        prop_assert_eq!(d.macro_mrr, report.macro_mrr);
        prop_assert_eq!(d.macro_p1, report.macro_p1);

        for c in &report.clusters {
            let members: Vec<_> = report.labels.iter().filter(|l| l.cluster == c.cluster).collect();
            let mean = members.iter().map(|l| l.mean_mrr).sum::<Rational>() / Rational::from_integer(members.len() as i64);
            prop_assert_eq!(c.mean_mrr, mean);
        }
    }

    #[test]
    fn curve_recombines_to_micro_mean(rows in results()) {
        let curve = complexity_curve(&rows);
        let weighted: Rational = curve
            .iter()
            .map(|b| b.mean_mrr * Rational::from_integer(b.n_instances as i64))
            .sum();
        let micro = rows.iter().map(|r| r.instance_mrr).sum::<Rational>();
        prop_assert_eq!(weighted, micro);
        prop_assert_eq!(curve.iter().map(|b| b.n_instances).sum::<usize>(), rows.len());
    }

    #[test]
    fn ranking_matches_sort_and_survives_affine_maps(
        scores in prop::collection::vec(0u32..50, 2..12),
        scale in 1u32..20,
        offset in -100i32..100,
    ) {
        let averages: Vec<(String, f64)> = scores.iter().enumerate().map(|(i, s)| (format!("m{i}"), *s as f64 / 10.0)).collect();
        let ranking = rank_models(&averages).unwrap();
        // Oracle: sort descending, rank = 1 + index of first equal value.
        let mut sorted: Vec<f64> = averages.iter().map(|(_, a)| *a).collect();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (id, avg) in &averages {
            let expected = 1 + sorted.iter().position(|s| s == avg).unwrap();
            prop_assert_eq!(ranking.rank_of(id), Some(expected));
        }
        let mapped: Vec<(String, f64)> = averages.iter().map(|(id, a)| (id.clone(), a * scale as f64 + offset as f64)).collect();
        let again = rank_models(&mapped).unwrap();
        for (id, _) in &averages {
            prop_assert_eq!(again.rank_of(id), ranking.rank_of(id));
        }
    }

    #[test]
    fn transfer_overlap_is_the_string_intersection(
        old in prop::collection::btree_set("[a-e]{1,3}", 1..30),
        new in prop::collection::btree_set("[a-e]{1,3}", 1..30),
        offset in 0u64..1000,
    ) {
        let old_v = Vocab::from_pairs(old.iter().enumerate().map(|(i, t)| (t.clone(), i as u64 * 3 + offset))).unwrap();
        let new_v = Vocab::from_pairs(new.iter().rev().enumerate().map(|(i, t)| (t.clone(), i as u64))).unwrap();
        let plan = plan_embedding_transfer(&old_v, &new_v).unwrap();
        let common = old.intersection(&new).count();
        prop_assert_eq!(plan.summary.n_copied, common);
        prop_assert_eq!(plan.entries.len(), new.len());
        prop_assert!(plan.entries.windows(2).all(|w| w[0].new_id < w[1].new_id));
        prop_assert_eq!(plan.summary.overlap_fraction, common as f64 / new.len() as f64);
        for e in &plan.entries {
            if let lexkit::transfer::TransferAction::CopyFrom(old_id) = e.action {
                prop_assert_eq!(old_v.0.get(&e.token), Some(&old_id));
            }
        }
    }
}
