//! Direct assessment campaign mechanics.
//!
//! Sampling and shuffling use ChaCha8 seeded with a `u64` through
//! `SeedableRng::seed_from_u64`; the same seed always yields the same plan
//! and task list.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalset::{parse_segment_id, Condition, ConditionSet, SystemOutput, TestSet};
use crate::metrics::{Granularity, ScoreTable};
use crate::tsv;

/// Guidance shown to annotators with every task.
pub const ANNOTATOR_INSTRUCTIONS: &str = "Sentence boundary errors are expected and should not be \
factored in when judging translation quality. This is when the translation appears to be missing \
or adding extra words but the source was segmented at a different place. To this end, we have \
included the translations for the previous and next sentences also. If the source and translation \
are only different because of sentence boundary issues, do not let this affect your scoring judgment.";

pub const SCORE_MIN: f64 = 0.0;
pub const SCORE_MAX: f64 = 100.0;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub condition: Condition,
    pub seed: u64,
    pub k: usize,
    /// Distinct segment ids in canonical (document, index) order.
    pub segment_ids: Vec<String>,
}

/// Draws `min(k, N)` segments uniformly without replacement. The same ids
/// are used for every system.
pub fn sample_segments(testset: &TestSet, condition: &Condition, k: usize, seed: u64) -> Result<SamplePlan> {
    sample_condition(testset.require(condition)?, k, seed)
}

pub fn sample_condition(set: &ConditionSet, k: usize, seed: u64) -> Result<SamplePlan> {
    if k == 0 {
        return Err(Error::invalid("sample size k must be positive"));
    }
    let all: Vec<&str> = set.segments().map(|(_, _, s)| s.segment_id.as_str()).collect();
    let chosen: Vec<&str> = if k >= all.len() {
        all
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = rand::seq::index::sample(&mut rng, all.len(), k).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| all[i]).collect()
    };
    Ok(SamplePlan {
        condition: set.condition.clone(),
        seed,
        k,
        segment_ids: chosen.into_iter().map(str::to_owned).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub task_id: String,
    pub annotator_id: String,
    /// Never shown to the annotator.
    pub system_id: String,
    pub segment_id: String,
    pub source_text: String,
    pub hyp_text: String,
    pub prev_hyp_text: Option<String>,
    pub next_hyp_text: Option<String>,
    /// Position in the annotator's queue.
    pub presentation_index: usize,
}

struct Draft {
    system_id: String,
    segment_id: String,
    source_text: String,
    hyp_text: String,
    prev_hyp_text: Option<String>,
    next_hyp_text: Option<String>,
}

/// Builds one task per (system, sampled segment), shuffles them and deals
/// them round-robin to annotators such that no annotator gets the same
/// segment from two systems back to back (when avoidable).
pub fn build_tasks(
    plan: &SamplePlan,
    set: &ConditionSet,
    systems: &[&SystemOutput],
    annotators: &[String],
    shuffle_seed: u64,
) -> Result<Vec<AnnotationTask>> {
    if annotators.is_empty() {
        return Err(Error::invalid("at least one annotator is required"));
    }
    let distinct: BTreeSet<&String> = annotators.iter().collect();
    if distinct.len() != annotators.len() {
        return Err(Error::invalid("annotator ids must be distinct"));
    }
    if systems.is_empty() {
        return Err(Error::invalid("at least one system is required"));
    }
    if plan.condition != set.condition {
        return Err(Error::invalid(format!(
            "plan is for {}, test set condition is {}",
            plan.condition, set.condition
        )));
    }

    let mut drafts = Vec::with_capacity(systems.len() * plan.segment_ids.len());
    for sys in systems {
        if !sys.resegmented {
            return Err(Error::NotResegmented(sys.system_id.clone()));
        }
        set.check_system(sys)?;
        for seg_id in &plan.segment_ids {
            let (doc_id, idx) = parse_segment_id(seg_id)
                .ok_or_else(|| Error::invalid(format!("malformed segment id {seg_id:?}")))?;
            let doc = set
                .document(doc_id)
                .filter(|d| idx < d.segments.len())
                .ok_or_else(|| Error::invalid(format!("plan segment {seg_id} not in test set")))?;
            let out = sys.document(doc_id).ok_or_else(|| {
                Error::invalid(format!(
                    "system {} has no output for document {doc_id} (segment {seg_id})",
                    sys.system_id
                ))
            })?;
            drafts.push(Draft {
                system_id: sys.system_id.clone(),
                segment_id: seg_id.clone(),
                source_text: doc.segments[idx].source_text.clone(),
                hyp_text: out.segments[idx].clone(),
                prev_hyp_text: idx.checked_sub(1).map(|i| out.segments[i].clone()),
                next_hyp_text: out.segments.get(idx + 1).cloned(),
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    drafts.shuffle(&mut rng);

    // Position p goes to annotator p % A, so the same annotator's previous
    // task sits at p - A.
    let a = annotators.len();
    let mut pending: VecDeque<Draft> = drafts.into();
    let mut ordered: Vec<Draft> = Vec::with_capacity(pending.len());
    while !pending.is_empty() {
        let p = ordered.len();
        let pick = match p.checked_sub(a).map(|q| ordered[q].segment_id.as_str()) {
            Some(prev) => pending
                .iter()
                .position(|d| d.segment_id != prev)
                .unwrap_or(0),
            None => 0,
        };
        ordered.push(pending.remove(pick).expect("index in range"));
    }

    Ok(ordered
        .into_iter()
        .enumerate()
        .map(|(p, d)| AnnotationTask {
            task_id: format!("t{p:06}"),
            annotator_id: annotators[p % a].clone(),
            system_id: d.system_id,
            segment_id: d.segment_id,
            source_text: d.source_text,
            hyp_text: d.hyp_text,
            prev_hyp_text: d.prev_hyp_text,
            next_hyp_text: d.next_hyp_text,
            presentation_index: p / a,
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DaRecord {
    pub annotator_id: String,
    pub system_id: String,
    pub segment_id: String,
    pub raw_score: f64,
    /// Unix time in milliseconds.
    pub timestamp: u64,
}

impl DaRecord {
    pub fn key(&self) -> (&str, &str, &str) {
        (&self.annotator_id, &self.system_id, &self.segment_id)
    }
}

pub fn check_score(score: f64) -> Result<()> {
    if !score.is_finite() || !(SCORE_MIN..=SCORE_MAX).contains(&score) {
        return Err(Error::invalid(format!(
            "score {score} outside [{SCORE_MIN}, {SCORE_MAX}]"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rejection {
    pub line: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DaIngest {
    pub records: Vec<DaRecord>,
    pub rejected: Vec<Rejection>,
}

/// Validates a score file against issued tasks. Valid rows are kept; invalid
/// rows (out-of-range score, no matching task, duplicates after the first)
/// are reported with their line numbers. `existing` records count toward
/// duplicate detection.
pub fn ingest_da(path: impl AsRef<Path>, tasks: &[AnnotationTask], existing: &[DaRecord]) -> Result<DaIngest> {
    let table = tsv::Table::read(path.as_ref())?;
    table.require(&["annotator_id", "system_id", "segment_id"])?;
    let score_col = if table.has("raw_score") {
        "raw_score"
    } else {
        table.require(&["score"])?;
        "score"
    };
    let issued: BTreeSet<(&str, &str, &str)> = tasks
        .iter()
        .map(|t| (t.annotator_id.as_str(), t.system_id.as_str(), t.segment_id.as_str()))
        .collect();
    let mut seen: BTreeSet<(String, String, String)> = existing
        .iter()
        .map(|r| (r.annotator_id.clone(), r.system_id.clone(), r.segment_id.clone()))
        .collect();

    let mut out = DaIngest::default();
    for row in table.rows() {
        let reject = |reason: String| Rejection {
            line: row.line,
            reason,
        };
        let key = (
            row.cell("annotator_id").trim().to_owned(),
            row.cell("system_id").trim().to_owned(),
            row.cell("segment_id").trim().to_owned(),
        );
        let score: f64 = match row.parse(score_col) {
            Ok(s) => s,
            Err(e) => {
                out.rejected.push(reject(e.to_string()));
                continue;
            }
        };
        if let Err(e) = check_score(score) {
            out.rejected.push(reject(e.to_string()));
            continue;
        }
        if !issued.contains(&(key.0.as_str(), key.1.as_str(), key.2.as_str())) {
            out.rejected.push(reject(format!(
                "no task for annotator {} system {} segment {}",
                key.0, key.1, key.2
            )));
            continue;
        }
        let timestamp = match row.get("timestamp").map(str::trim) {
            None | Some("") => 0,
            Some(_) => match row.parse("timestamp") {
                Ok(t) => t,
                Err(e) => {
                    out.rejected.push(reject(e.to_string()));
                    continue;
                }
            },
        };
        if !seen.insert(key.clone()) {
            out.rejected.push(reject(format!(
                "duplicate score for annotator {} system {} segment {}",
                key.0, key.1, key.2
            )));
            continue;
        }
        out.records.push(DaRecord {
            annotator_id: key.0,
            system_id: key.1,
            segment_id: key.2,
            raw_score: score,
            timestamp,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DaAggregation {
    #[default]
    RawMean,
    AnnotatorZ,
}

impl DaAggregation {
    pub fn name(self) -> &'static str {
        match self {
            DaAggregation::RawMean => "raw-mean",
            DaAggregation::AnnotatorZ => "annotator-z",
        }
    }
}

impl std::str::FromStr for DaAggregation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" | "raw-mean" => Ok(DaAggregation::RawMean),
            "z" | "annotator-z" => Ok(DaAggregation::AnnotatorZ),
            _ => Err(Error::invalid(format!("unknown DA aggregation {s:?}"))),
        }
    }
}

/// System-level DA scores. With `AnnotatorZ`, each annotator's scores are
/// standardized (population variance) before averaging; annotators whose
/// scores are all equal contribute zeros. Systems in `expected` without any
/// record are left out with a warning.
pub fn aggregate_system_da(
    records: &[DaRecord],
    mode: DaAggregation,
    condition: &Condition,
    expected: &[&str],
) -> ScoreTable {
    let standardized: Vec<f64> = match mode {
        DaAggregation::RawMean => records.iter().map(|r| r.raw_score).collect(),
        DaAggregation::AnnotatorZ => {
            let mut by_annotator: HashMap<&str, Vec<f64>> = HashMap::new();
            for r in records {
                by_annotator.entry(&r.annotator_id).or_default().push(r.raw_score);
            }
            let moments: HashMap<&str, (f64, f64)> = by_annotator
                .into_iter()
                .map(|(a, v)| {
                    let n = v.len() as f64;
                    let mean = v.iter().sum::<f64>() / n;
                    let var = v.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
                    (a, (mean, var.sqrt()))
                })
                .collect();
            records
                .iter()
                .map(|r| {
                    let (mean, sd) = moments[r.annotator_id.as_str()];
                    if sd > 0.0 {
                        (r.raw_score - mean) / sd
                    } else {
                        0.0
                    }
                })
                .collect()
        }
    };

    let mut sums: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for (r, v) in records.iter().zip(standardized) {
        let e = sums.entry(&r.system_id).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    for sys in expected {
        if !sums.contains_key(sys) {
            log::warn!("system {sys} has no DA records; excluded");
        }
    }
    let mut table = ScoreTable::new("da", Granularity::System, condition.clone());
    table.variant = Some(mode.name().to_owned());
    for (sys, (sum, n)) in sums {
        table.insert_system(sys, sum / n as f64);
    }
    table
}

pub const WMT_COLUMNS: [&str; 9] = [
    "task",
    "lang_pair",
    "domain",
    "system_id",
    "doc_id",
    "segment_id",
    "annotator_id",
    "raw_score",
    "timestamp",
];

fn sort_key(r: &DaRecord) -> (&str, &str, usize, &str) {
    let (doc, idx) = parse_segment_id(&r.segment_id).unwrap_or((r.segment_id.as_str(), 0));
    (&r.system_id, doc, idx, &r.annotator_id)
}

/// WMT-style TSV, sorted by system, document, segment index and annotator.
pub fn format_wmt(records: &[DaRecord], condition: &Condition) -> String {
    let mut sorted: Vec<&DaRecord> = records.iter().collect();
    sorted.sort_by(|a, b| sort_key(a).cmp(&sort_key(b)));
    let mut out = WMT_COLUMNS.join("\t");
    out.push('\n');
    for r in sorted {
        let (doc, _) = parse_segment_id(&r.segment_id).unwrap_or((r.segment_id.as_str(), 0));
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{doc}\t{}\t{}\t{}\t{}\n",
            condition.task,
            condition.langs,
            condition.domain,
            r.system_id,
            r.segment_id,
            r.annotator_id,
            r.raw_score,
            r.timestamp
        ));
    }
    out
}

pub fn export_wmt(records: &[DaRecord], condition: &Condition, path: impl AsRef<Path>) -> Result<()> {
    crate::evalset::write_text(path.as_ref(), &format_wmt(records, condition))
}
