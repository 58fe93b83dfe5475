//! Sampling uniformity and task-list properties on synthetic condition sets.

use std::collections::{BTreeMap, BTreeSet};

use steval::da::{build_tasks, sample_condition};
use steval::evalset::{Condition, ConditionSet, Document, DocumentOutput, SystemOutput};

fn condition_set(docs: usize, per_doc: usize) -> ConditionSet {
    let cond: Condition = "offline/en-de/TED".parse().unwrap();
    let documents = (0..docs)
        .map(|d| {
            let src: Vec<String> = (0..per_doc).map(|i| format!("src {d} {i}")).collect();
            let refs = BTreeMap::from([("new".to_owned(), src.clone())]);
            Document::from_lines(&format!("talk{d}"), src, refs).unwrap()
        })
        .collect();
    ConditionSet::new(cond, documents).unwrap()
}

fn system(id: &str, set: &ConditionSet) -> SystemOutput {
    SystemOutput {
        system_id: id.into(),
        condition: set.condition.clone(),
        documents: set
            .documents
            .iter()
            .map(|d| DocumentOutput {
                doc_id: d.doc_id.clone(),
                segments: (0..d.segments.len()).map(|i| format!("{id} {i}")).collect(),
            })
            .collect(),
        resegmented: true,
    }
}

#[test]
fn inclusion_frequency_is_uniform() {
    let set = condition_set(4, 500);
    let all: Vec<String> = set.segments().map(|(_, _, s)| s.segment_id.clone()).collect();
    let index: BTreeMap<&str, usize> = all.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut counts = vec![0usize; all.len()];
    let seeds = 10_000u64;
    for seed in 0..seeds {
        let plan = sample_condition(&set, 100, seed).unwrap();
        assert_eq!(plan.segment_ids.len(), 100);
        for id in &plan.segment_ids {
            counts[index[id.as_str()]] += 1;
        }
    }
    for (id, c) in all.iter().zip(&counts) {
        let f = *c as f64 / seeds as f64;
        assert!((f - 0.05).abs() <= 0.01, "{id}: inclusion frequency {f}");
    }
}

#[test]
fn plans_are_distinct_and_canonical() {
    let set = condition_set(3, 40);
    let plan = sample_condition(&set, 25, 9).unwrap();
    let distinct: BTreeSet<&String> = plan.segment_ids.iter().collect();
    assert_eq!(distinct.len(), 25);
    let canonical: Vec<&String> = set
        .segments()
        .map(|(_, _, s)| &s.segment_id)
        .filter(|id| distinct.contains(id))
        .collect();
    assert_eq!(canonical, plan.segment_ids.iter().collect::<Vec<_>>());
    assert_eq!(plan, sample_condition(&set, 25, 9).unwrap());
}

#[test]
fn every_system_sees_the_same_segments() {
    let set = condition_set(2, 30);
    let plan = sample_condition(&set, 20, 1).unwrap();
    let systems: Vec<SystemOutput> = ["a", "b", "c"].iter().map(|s| system(s, &set)).collect();
    let refs: Vec<&SystemOutput> = systems.iter().collect();
    let annotators: Vec<String> = (0..4).map(|i| format!("ann{i}")).collect();
    let tasks = build_tasks(&plan, &set, &refs, &annotators, 3).unwrap();
    assert_eq!(tasks.len(), 60);
    let expected: BTreeSet<&str> = plan.segment_ids.iter().map(String::as_str).collect();
    for sys in ["a", "b", "c"] {
        let seen: BTreeSet<&str> = tasks
            .iter()
            .filter(|t| t.system_id == sys)
            .map(|t| t.segment_id.as_str())
            .collect();
        assert_eq!(seen, expected, "system {sys}");
    }
}

#[test]
fn presentation_order_is_shuffled_and_never_repeats_a_segment() {
    let set = condition_set(2, 30);
    let plan = sample_condition(&set, 12, 4).unwrap();
    let systems: Vec<SystemOutput> = ["a", "b"].iter().map(|s| system(s, &set)).collect();
    let refs: Vec<&SystemOutput> = systems.iter().collect();
    let annotators = vec!["solo".to_owned(), "duo".to_owned()];
    let mut reordered = false;
    for seed in 0..5 {
        let tasks = build_tasks(&plan, &set, &refs, &annotators, seed).unwrap();
        for ann in &annotators {
            let mine: Vec<_> = tasks.iter().filter(|t| &t.annotator_id == ann).collect();
            assert!(mine.len() >= 10);
            let order: Vec<usize> = mine.iter().map(|t| t.presentation_index).collect();
            assert_eq!(order, (0..mine.len()).collect::<Vec<_>>());
            for w in mine.windows(2) {
                assert_ne!(w[0].segment_id, w[1].segment_id, "{ann} sees a segment twice in a row");
            }
            let positions: Vec<usize> = mine
                .iter()
                .map(|t| plan.segment_ids.iter().position(|s| s == &t.segment_id).unwrap())
                .collect();
            reordered |= !positions.is_sorted();
        }
    }
    assert!(reordered, "presentation order never differed from document order");
}
