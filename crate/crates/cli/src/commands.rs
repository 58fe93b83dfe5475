//! Command implementations. Each returns the values it wrote so tests can
//! compare them against direct library calls.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use steval::align::{resegment_document, ResegmentOptions};
use steval::campaign::{Campaign, Progress};
use steval::da::{DaAggregation, DaIngest};
use steval::evalset::{
    load_system_output, load_testset, write_system_output, Condition, ConditionSet, SystemOutput,
    TestSet,
};
use steval::metrics::{read_score_table, score_systems, MetricConfig, ScoreTable};
use steval::stats::{
    average_domains, correlate, pool_conditions_with, render_report, Centering, CorrelationResult,
};
use steval::textproc::{tokenize, TokenizationLevel};

use crate::args::{CampaignBuildArgs, CorrelateArgs, ResegArgs, ScoreArgs};

fn pick_condition<'a>(testset: &'a TestSet, condition: Option<&Condition>) -> Result<&'a ConditionSet> {
    Ok(match condition {
        Some(c) => testset.require(c)?,
        None => testset
            .only()
            .context("the test set has several conditions; pass --condition")?,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DocReport {
    pub doc_id: String,
    pub distance: usize,
    pub ref_len: usize,
    pub approximate: bool,
}

impl DocReport {
    pub fn wer(&self) -> Option<f64> {
        (self.ref_len > 0).then(|| self.distance as f64 / self.ref_len as f64)
    }
}

#[derive(Clone, Debug)]
pub struct ResegOutcome {
    pub system: SystemOutput,
    pub documents: Vec<DocReport>,
}

/// Resegments every document of a hypothesis file and writes the result.
pub fn reseg(args: &ResegArgs) -> Result<ResegOutcome> {
    let testset = load_testset(&args.ref_manifest)?;
    let set = pick_condition(&testset, args.condition.as_ref())?;
    let sys = load_system_output(&args.hyp, &set.condition, &testset)?;
    let level = args
        .level
        .unwrap_or_else(|| TokenizationLevel::for_language(set.condition.target_language()));
    let opts = ResegmentOptions {
        band: args.band,
        reference_set: args.ref_set.clone(),
        ..ResegmentOptions::default()
    };

    // Documents are independent; align them concurrently.
    let results: Vec<Result<_>> = std::thread::scope(|scope| {
        let handles: Vec<_> = sys
            .documents
            .iter()
            .map(|doc_out| {
                let opts = &opts;
                scope.spawn(move || -> Result<_> {
                    let ref_doc = set
                        .document(&doc_out.doc_id)
                        .with_context(|| format!("unknown document {}", doc_out.doc_id))?;
                    let (doc, seg) = resegment_document(doc_out, ref_doc, level, opts)?;
                    let ref_set = opts
                        .reference_set
                        .clone()
                        .or_else(|| ref_doc.reference_sets().next().map(str::to_owned))
                        .unwrap_or_default();
                    let ref_len = ref_doc
                        .reference_lines(&ref_set)
                        .unwrap_or_default()
                        .iter()
                        .map(|l| tokenize(l, level).len())
                        .sum();
                    let report = DocReport {
                        doc_id: doc.doc_id.clone(),
                        distance: seg.total_distance,
                        ref_len,
                        approximate: seg.approximate,
                    };
                    Ok((doc, report))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("alignment thread panicked"))
            .collect()
    });

    let mut documents = Vec::new();
    let mut reports = Vec::new();
    for r in results {
        let (doc, report) = r?;
        documents.push(doc);
        reports.push(report);
    }
    let out = SystemOutput {
        system_id: sys.system_id.clone(),
        condition: sys.condition.clone(),
        documents,
        resegmented: true,
    };
    set.check_system(&out)?;
    write_system_output(&out, &args.out)?;
    Ok(ResegOutcome {
        system: out,
        documents: reports,
    })
}

pub fn score(args: &ScoreArgs) -> Result<ScoreTable> {
    let testset = load_testset(&args.testset)?;
    let set = pick_condition(&testset, args.condition.as_ref())?;
    let loaded: Vec<SystemOutput> = args
        .systems
        .iter()
        .map(|p| load_system_output(p, &set.condition, &testset))
        .collect::<steval::Result<_>>()?;
    let systems: Vec<&SystemOutput> = if loaded.is_empty() {
        set.systems.values().collect()
    } else {
        loaded.iter().collect()
    };
    if systems.is_empty() {
        bail!("no systems given and none registered in the manifest; pass --systems");
    }
    let cfg = MetricConfig {
        char_ngram_max: args.char_order,
        beta: args.beta,
        bleu_ngram_max: args.bleu_order,
        ..MetricConfig::new(args.metric)
    };
    let table = score_systems(set, &systems, &cfg, &args.ref_set)?;
    table.write_tsv(&args.out)?;
    Ok(table)
}

pub fn campaign_build(dir: &Path, args: &CampaignBuildArgs) -> Result<Campaign> {
    let testset = load_testset(&args.testset)?;
    let set = pick_condition(&testset, args.condition.as_ref())?;
    let loaded: Vec<SystemOutput> = args
        .systems
        .iter()
        .map(|p| load_system_output(p, &set.condition, &testset))
        .collect::<steval::Result<_>>()?;
    let systems: Vec<&SystemOutput> = if loaded.is_empty() {
        set.systems.values().collect()
    } else {
        loaded.iter().collect()
    };
    Ok(Campaign::create(
        dir,
        set,
        &systems,
        &args.annotators,
        args.k,
        args.seed,
        args.shuffle_seed,
    )?)
}

pub fn campaign_ingest(dir: &Path, scores: &Path) -> Result<DaIngest> {
    let mut c = Campaign::open(dir)?;
    Ok(c.ingest(scores)?)
}

pub fn campaign_export(dir: &Path, out: &Path) -> Result<()> {
    Ok(Campaign::open(dir)?.export_wmt(out)?)
}

pub fn campaign_aggregate(dir: &Path, mode: DaAggregation, out: &Path) -> Result<ScoreTable> {
    let table = Campaign::open(dir)?.aggregate(mode);
    table.write_tsv(out)?;
    Ok(table)
}

pub fn campaign_progress(dir: &Path) -> Result<Progress> {
    Ok(Campaign::open(dir)?.progress())
}

fn load_tables(paths: &[PathBuf]) -> Result<Vec<ScoreTable>> {
    paths
        .iter()
        .map(|p| read_score_table(p).map_err(anyhow::Error::from))
        .collect()
}

/// Groups tables by method, keeping first-appearance order.
fn by_method(tables: Vec<ScoreTable>) -> Vec<(String, Vec<ScoreTable>)> {
    let mut groups: Vec<(String, Vec<ScoreTable>)> = Vec::new();
    for t in tables {
        match groups.iter_mut().find(|(m, _)| *m == t.method) {
            Some((_, g)) => g.push(t),
            None => groups.push((t.method.clone(), vec![t])),
        }
    }
    groups
}

/// Averages tables per (task, language pair) across domains.
fn average_by_pair(tables: Vec<ScoreTable>) -> Result<Vec<ScoreTable>> {
    let mut groups: BTreeMap<(String, String), Vec<ScoreTable>> = BTreeMap::new();
    for t in tables {
        let key = (t.condition.task.to_string(), t.condition.langs.to_string());
        groups.entry(key).or_default().push(t);
    }
    groups
        .into_values()
        .map(|g| average_domains(&g).map_err(anyhow::Error::from))
        .collect()
}

pub fn correlate_tables(args: &CorrelateArgs) -> Result<Vec<CorrelationResult>> {
    let human = load_tables(&args.human)?;
    let metrics = load_tables(&args.metric)?;
    if human.is_empty() || metrics.is_empty() {
        bail!("need at least one --human and one --metric table");
    }
    let centering = if args.zscore {
        Centering::ZScore
    } else {
        Centering::None
    };
    let mut results = Vec::new();

    if let Some(axis) = args.pool {
        for (_, group) in by_method(metrics) {
            results.push(pool_conditions_with(&human, &group, axis, centering)?);
        }
        return Ok(results);
    }

    let (human, metric_groups) = if args.average_domains {
        let human = average_by_pair(human)?;
        let groups = by_method(metrics)
            .into_iter()
            .map(|(m, g)| Ok((m, average_by_pair(g)?)))
            .collect::<Result<Vec<_>>>()?;
        (human, groups)
    } else {
        (human, by_method(metrics))
    };
    for h in &human {
        for (_, group) in &metric_groups {
            for m in group.iter().filter(|m| m.conditions() == h.conditions()) {
                results.push(correlate(h, m)?);
            }
        }
    }
    if results.is_empty() {
        bail!("no metric table shares a condition with the human tables");
    }
    Ok(results)
}

pub fn correlate_report(args: &CorrelateArgs) -> Result<String> {
    let report = render_report(&correlate_tables(args)?, args.format);
    if let Some(out) = &args.out {
        std::fs::write(out, &report).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(report)
}
