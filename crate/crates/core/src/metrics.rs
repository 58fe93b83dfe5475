//! Lexical metrics (chrF, BLEU) and system/segment score tables.
//!
//! chrF aggregates character n-gram statistics over the whole corpus, then
//! averages the per-order F-beta. Whitespace is removed before n-grams are
//! extracted. BLEU is plain corpus BLEU without smoothing.
//!
//! Model-based scores (COMET) and human scores collected elsewhere (MQM,
//! continuous rating) enter through [`ingest_external_scores`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::evalset::{Condition, ConditionSet, SystemOutput};
use crate::textproc::{tokenize, TokenStream, TokenizationLevel};
use crate::tsv;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    ChrF,
    Bleu,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::ChrF => "chrf",
            Metric::Bleu => "bleu",
        }
    }
}

impl FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "chrf" => Ok(Metric::ChrF),
            "bleu" => Ok(Metric::Bleu),
            _ => Err(Error::invalid(format!("unknown metric {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub metric: Metric,
    pub char_ngram_max: usize,
    pub beta: f64,
    pub bleu_ngram_max: usize,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            metric: Metric::ChrF,
            char_ngram_max: 6,
            beta: 2.0,
            bleu_ngram_max: 4,
        }
    }
}

impl MetricConfig {
    pub fn new(metric: Metric) -> Self {
        MetricConfig {
            metric,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.char_ngram_max < 1 || self.bleu_ngram_max < 1 {
            return Err(Error::invalid("n-gram orders must be at least 1"));
        }
        if self.beta.is_nan() || self.beta <= 0.0 {
            return Err(Error::invalid(format!("beta must be positive, got {}", self.beta)));
        }
        Ok(())
    }
}

/// Per-order n-gram counts. Counts are additive across sentences.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NgramStats {
    pub matched: Vec<u64>,
    pub hyp_total: Vec<u64>,
    pub ref_total: Vec<u64>,
}

impl NgramStats {
    fn new(orders: usize) -> Self {
        NgramStats {
            matched: vec![0; orders],
            hyp_total: vec![0; orders],
            ref_total: vec![0; orders],
        }
    }

    pub fn merge(&mut self, other: &NgramStats) {
        for (a, b) in [
            (&mut self.matched, &other.matched),
            (&mut self.hyp_total, &other.hyp_total),
            (&mut self.ref_total, &other.ref_total),
        ] {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

fn ngram_counts<T: Eq + std::hash::Hash>(items: &[T], n: usize) -> HashMap<&[T], u64> {
    let mut counts = HashMap::new();
    if items.len() >= n {
        for w in items.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

fn add_order<T: Eq + std::hash::Hash>(stats: &mut NgramStats, order: usize, hyp: &[T], reference: &[T]) {
    let n = order + 1;
    let h = ngram_counts(hyp, n);
    let r = ngram_counts(reference, n);
    stats.matched[order] += h
        .iter()
        .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)))
        .sum::<u64>();
    stats.hyp_total[order] += h.values().sum::<u64>();
    stats.ref_total[order] += r.values().sum::<u64>();
}

fn chars_without_space(s: &str) -> Vec<char> {
    s.nfc().filter(|c| !c.is_whitespace()).collect()
}

pub fn chrf_stats(hyp: &str, reference: &str, char_ngram_max: usize) -> NgramStats {
    let (h, r) = (chars_without_space(hyp), chars_without_space(reference));
    let mut stats = NgramStats::new(char_ngram_max);
    for order in 0..char_ngram_max {
        add_order(&mut stats, order, &h, &r);
    }
    stats
}

/// chrF from aggregated statistics.
pub fn chrf_from_stats(stats: &NgramStats, beta: f64) -> f64 {
    let b2 = beta * beta;
    let mut sum = 0.0;
    let mut used = 0usize;
    for ((&m, &ht), &rt) in stats.matched.iter().zip(&stats.hyp_total).zip(&stats.ref_total) {
        if ht == 0 && rt == 0 {
            continue;
        }
        used += 1;
        let p = if ht > 0 { m as f64 / ht as f64 } else { 0.0 };
        let r = if rt > 0 { m as f64 / rt as f64 } else { 0.0 };
        let denom = b2 * p + r;
        if denom > 0.0 {
            sum += (1.0 + b2) * p * r / denom;
        }
    }
    if used == 0 {
        0.0
    } else {
        100.0 * sum / used as f64
    }
}

fn check_lengths(h: usize, r: usize) -> Result<()> {
    if h != r {
        return Err(Error::LengthMismatch(h, r));
    }
    if h == 0 {
        return Err(Error::invalid("corpus is empty"));
    }
    Ok(())
}

pub fn chrf_corpus<S: AsRef<str>>(hyps: &[S], refs: &[S], cfg: &MetricConfig) -> Result<f64> {
    cfg.validate()?;
    check_lengths(hyps.len(), refs.len())?;
    let mut total = NgramStats::new(cfg.char_ngram_max);
    for (h, r) in hyps.iter().zip(refs) {
        total.merge(&chrf_stats(h.as_ref(), r.as_ref(), cfg.char_ngram_max));
    }
    Ok(chrf_from_stats(&total, cfg.beta))
}

pub fn chrf_sentence(hyp: &str, reference: &str, cfg: &MetricConfig) -> Result<f64> {
    chrf_corpus(&[hyp], &[reference], cfg)
}

/// Corpus BLEU over pre-tokenized streams. Zero if any n-gram precision is zero.
pub fn bleu_corpus(hyps: &[TokenStream], refs: &[TokenStream], cfg: &MetricConfig) -> Result<f64> {
    cfg.validate()?;
    check_lengths(hyps.len(), refs.len())?;
    let level = hyps[0].level();
    let mut stats = NgramStats::new(cfg.bleu_ngram_max);
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);
    for (h, r) in hyps.iter().zip(refs) {
        for s in [h, r] {
            if s.level() != level {
                return Err(Error::LevelMismatch(level, s.level()));
            }
        }
        hyp_len += h.len();
        ref_len += r.len();
        for order in 0..cfg.bleu_ngram_max {
            add_order(&mut stats, order, h.tokens(), r.tokens());
        }
    }
    let mut log_sum = 0.0;
    for (&m, &t) in stats.matched.iter().zip(&stats.hyp_total) {
        if m == 0 || t == 0 {
            return Ok(0.0);
        }
        log_sum += (m as f64 / t as f64).ln();
    }
    let bp = if hyp_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    Ok(100.0 * bp * (log_sum / cfg.bleu_ngram_max as f64).exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Segment,
    System,
}

/// (system_id, segment_id); segment is `None` at system granularity.
pub type RowKey = (String, Option<String>);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub method: String,
    pub granularity: Granularity,
    pub condition: Condition,
    /// Constituent conditions when the table combines several (e.g. a domain
    /// average). Empty for plain single-condition tables.
    #[serde(default)]
    pub sources: Vec<Condition>,
    pub reference_set: Option<String>,
    /// How the scores were produced when a method has several variants,
    /// e.g. `raw-mean` or `annotator-z` for DA.
    #[serde(default)]
    pub variant: Option<String>,
    pub rows: BTreeMap<RowKey, f64>,
}

pub const SCORE_COLUMNS: [&str; 9] = [
    "method",
    "task",
    "lang_pair",
    "domain",
    "reference_set",
    "system_id",
    "segment_id",
    "score",
    "variant",
];

impl ScoreTable {
    pub fn new(method: &str, granularity: Granularity, condition: Condition) -> Self {
        ScoreTable {
            method: method.to_owned(),
            granularity,
            condition,
            sources: Vec::new(),
            reference_set: None,
            variant: None,
            rows: BTreeMap::new(),
        }
    }

    /// Conditions the table covers: its sources, or just its condition.
    pub fn conditions(&self) -> Vec<Condition> {
        if self.sources.is_empty() {
            vec![self.condition.clone()]
        } else {
            self.sources.clone()
        }
    }

    pub fn systems(&self) -> BTreeSet<&str> {
        self.rows.keys().map(|(s, _)| s.as_str()).collect()
    }

    /// System-level scores keyed by system id.
    pub fn system_scores(&self) -> BTreeMap<&str, f64> {
        self.rows
            .iter()
            .filter(|((_, seg), _)| seg.is_none())
            .map(|((s, _), &v)| (s.as_str(), v))
            .collect()
    }

    pub fn insert_system(&mut self, system_id: &str, score: f64) {
        self.rows.insert((system_id.to_owned(), None), score);
    }

    fn bounded(&self) -> bool {
        match self.method.as_str() {
            "chrf" | "bleu" => true,
            "da" => self.variant.as_deref() != Some("annotator-z"),
            _ => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for ((sys, seg), &v) in &self.rows {
            if !v.is_finite() {
                return Err(Error::invalid(format!("{}: non-finite score for {sys}", self.method)));
            }
            if self.bounded() && !(0.0..=100.0).contains(&v) {
                return Err(Error::invalid(format!(
                    "{}: score {v} for {sys} outside [0, 100]",
                    self.method
                )));
            }
            match (self.granularity, seg) {
                (Granularity::System, Some(s)) => {
                    return Err(Error::invalid(format!(
                        "system-level table has segment row {sys}/{s}"
                    )))
                }
                (Granularity::Segment, None) => {
                    return Err(Error::invalid(format!(
                        "segment-level table has system row for {sys}"
                    )))
                }
                _ => {}
            }
        }
        if self.granularity == Granularity::Segment {
            let mut per_system: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
            for (sys, seg) in self.rows.keys() {
                per_system
                    .entry(sys)
                    .or_default()
                    .insert(seg.as_deref().unwrap_or(""));
            }
            let mut sets = per_system.iter();
            if let Some((first_sys, first)) = sets.next() {
                for (sys, segs) in sets {
                    if segs != first {
                        let missing: Vec<_> = first.symmetric_difference(segs).copied().collect();
                        return Err(Error::invalid(format!(
                            "segment sets differ between {first_sys} and {sys}: {missing:?}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Renders the table as score TSV.
    pub fn to_tsv(&self) -> String {
        let conds = self.conditions();
        let join = |f: &dyn Fn(&Condition) -> String| -> String {
            let mut vals: Vec<String> = Vec::new();
            for c in &conds {
                let v = f(c);
                if !vals.contains(&v) {
                    vals.push(v);
                }
            }
            vals.join("+")
        };
        let task = join(&|c| c.task.to_string());
        let langs = join(&|c| c.langs.to_string());
        let domain = join(&|c| c.domain.to_string());
        let refset = self.reference_set.as_deref().unwrap_or("");
        let variant = self.variant.as_deref().unwrap_or("");
        let mut out = SCORE_COLUMNS.join("\t");
        out.push('\n');
        for ((sys, seg), v) in &self.rows {
            out.push_str(&format!(
                "{}\t{task}\t{langs}\t{domain}\t{refset}\t{sys}\t{}\t{v}\t{variant}\n",
                self.method,
                seg.as_deref().unwrap_or("")
            ));
        }
        out
    }

    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::evalset::write_text(path.as_ref(), &self.to_tsv())
    }
}

/// Expands `a+b` style condition cells back into the constituent conditions.
fn parse_conditions(row: &tsv::Row<'_>) -> Result<Vec<Condition>> {
    let split = |col: &str| -> Vec<&str> { row.cell(col).split('+').map(str::trim).collect() };
    let (tasks, langs, domains) = (split("task"), split("lang_pair"), split("domain"));
    let len = tasks.len().max(langs.len()).max(domains.len());
    let pick = |v: &[&str], i: usize| -> Result<String> {
        match v.len() {
            1 => Ok(v[0].to_owned()),
            l if l == len => Ok(v[i].to_owned()),
            _ => Err(row.error("condition cells have inconsistent '+' lists")),
        }
    };
    (0..len)
        .map(|i| {
            let task = pick(&tasks, i)?.parse().map_err(|e: Error| row.error(e.to_string()))?;
            let lp = pick(&langs, i)?.parse().map_err(|e: Error| row.error(e.to_string()))?;
            let dom = pick(&domains, i)?.parse().map_err(|e: Error| row.error(e.to_string()))?;
            Condition::new(task, lp, dom).map_err(|e| row.error(e.to_string()))
        })
        .collect()
}

/// Reads a score TSV, taking method and condition from its rows. All rows
/// must agree on both. Granularity is inferred from the segment column.
pub fn read_score_table(path: impl AsRef<Path>) -> Result<ScoreTable> {
    let path = path.as_ref();
    let table = tsv::Table::read(path)?;
    table.require(&["method", "task", "lang_pair", "domain", "system_id", "segment_id", "score"])?;
    let first = table
        .rows()
        .next()
        .ok_or_else(|| Error::parse(path, 2, "score file has no rows"))?;
    let method = first.cell("method").to_owned();
    let conds = parse_conditions(&first)?;
    let granularity = if first.cell("segment_id").is_empty() {
        Granularity::System
    } else {
        Granularity::Segment
    };
    read_rows(&table, &method, granularity, &conds)
}

fn read_rows(
    table: &tsv::Table,
    method: &str,
    granularity: Granularity,
    conds: &[Condition],
) -> Result<ScoreTable> {
    let mut out = ScoreTable::new(method, granularity, conds[0].clone());
    if conds.len() > 1 {
        out.sources = conds.to_vec();
    }
    for row in table.rows() {
        if row.cell("method") != method {
            return Err(row.error(format!(
                "method {:?} does not match {method:?}",
                row.cell("method")
            )));
        }
        if parse_conditions(&row)? != conds {
            return Err(row.error("condition differs from the rest of the file"));
        }
        let variant = row.get("variant").unwrap_or("").trim();
        if !variant.is_empty() {
            match &out.variant {
                None => out.variant = Some(variant.to_owned()),
                Some(v) if v != variant => return Err(row.error("mixed variants")),
                _ => {}
            }
        }
        let refset = row.get("reference_set").unwrap_or("");
        if !refset.is_empty() {
            match &out.reference_set {
                None => out.reference_set = Some(refset.to_owned()),
                Some(r) if r != refset => return Err(row.error("mixed reference sets")),
                _ => {}
            }
        }
        let system = row.cell("system_id").trim().to_owned();
        if system.is_empty() {
            return Err(row.error("empty system_id"));
        }
        let segment = row.cell("segment_id").trim();
        let segment = match (granularity, segment.is_empty()) {
            (Granularity::System, true) => None,
            (Granularity::Segment, false) => Some(segment.to_owned()),
            (Granularity::System, false) => {
                return Err(row.error("segment_id given in a system-level file"))
            }
            (Granularity::Segment, true) => return Err(row.error("missing segment_id")),
        };
        let score: f64 = row.parse("score")?;
        let key = (system, segment);
        if out.rows.contains_key(&key) {
            return Err(row.error(format!("duplicate row for {:?}", key)));
        }
        out.rows.insert(key, score);
    }
    out.validate().map_err(|e| Error::parse(table.path(), 1, e.to_string()))?;
    Ok(out)
}

/// Loads externally computed scores (COMET, MQM, CR, ...) for one condition,
/// optionally checking system and segment ids against a registered test set.
pub fn ingest_external_scores(
    path: impl AsRef<Path>,
    method: &str,
    granularity: Granularity,
    condition: &Condition,
    registry: Option<&ConditionSet>,
) -> Result<ScoreTable> {
    let path = path.as_ref();
    let table = tsv::Table::read(path)?;
    table.require(&["method", "task", "lang_pair", "domain", "system_id", "segment_id", "score"])?;
    let out = read_rows(&table, method, granularity, std::slice::from_ref(condition))?;
    if let Some(set) = registry {
        let known_segments: BTreeSet<&str> =
            set.segments().map(|(_, _, s)| s.segment_id.as_str()).collect();
        let mut offenders = BTreeSet::new();
        for (sys, seg) in out.rows.keys() {
            if !set.systems.contains_key(sys) {
                offenders.insert(format!("system {sys}"));
            }
            if let Some(seg) = seg {
                if !known_segments.contains(seg.as_str()) {
                    offenders.insert(format!("segment {seg}"));
                }
            }
        }
        if !offenders.is_empty() {
            return Err(Error::parse(
                path,
                1,
                format!(
                    "unknown ids: {}",
                    offenders.into_iter().collect::<Vec<_>>().join(", ")
                ),
            ));
        }
    }
    Ok(out)
}

/// Scores each system over every segment of the condition against one
/// reference set. Systems must be resegmented and cover every document.
pub fn score_systems(
    set: &ConditionSet,
    systems: &[&SystemOutput],
    cfg: &MetricConfig,
    reference_set: &str,
) -> Result<ScoreTable> {
    cfg.validate()?;
    if !set.reference_sets().contains(&reference_set) {
        return Err(Error::invalid(format!(
            "unknown reference set {reference_set:?}; available: {:?}",
            set.reference_sets()
        )));
    }
    let refs: Vec<&str> = set
        .segments()
        .map(|(_, _, s)| s.references[reference_set].as_str())
        .collect();
    let level = TokenizationLevel::for_language(set.condition.target_language());
    let ref_streams: Vec<TokenStream> = match cfg.metric {
        Metric::Bleu => refs.iter().map(|r| tokenize(r, level)).collect(),
        Metric::ChrF => Vec::new(),
    };

    let mut table = ScoreTable::new(cfg.metric.name(), Granularity::System, set.condition.clone());
    table.reference_set = Some(reference_set.to_owned());
    for sys in systems {
        if !sys.resegmented {
            return Err(Error::NotResegmented(sys.system_id.clone()));
        }
        set.check_system(sys)?;
        let mut hyps: Vec<&str> = Vec::with_capacity(refs.len());
        for doc in &set.documents {
            let out = sys.document(&doc.doc_id).ok_or_else(|| {
                Error::invalid(format!(
                    "system {} has no output for document {}",
                    sys.system_id, doc.doc_id
                ))
            })?;
            hyps.extend(out.segments.iter().map(String::as_str));
        }
        let score = match cfg.metric {
            Metric::ChrF => chrf_corpus(&hyps, &refs, cfg)?,
            Metric::Bleu => {
                let hs: Vec<TokenStream> = hyps.iter().map(|h| tokenize(h, level)).collect();
                bleu_corpus(&hs, &ref_streams, cfg)?
            }
        };
        table.insert_system(&sys.system_id, score);
    }
    Ok(table)
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Granularity::Segment => "segment",
            Granularity::System => "system",
        })
    }
}
