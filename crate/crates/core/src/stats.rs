//! System-level meta-evaluation: Pearson and Spearman correlation with
//! two-sided t-test p-values, a permutation test, domain averaging,
//! cross-condition pooling and report rendering.
//!
//! Undefined quantities (zero variance, Spearman p with two points) are
//! `None`, never NaN. Two points give Pearson p = 1.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalset::Condition;
use crate::metrics::{Granularity, ScoreTable};

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

/// Largest n for which [`permutation_p`] enumerates every permutation.
pub const EXACT_PERMUTATION_MAX_N: usize = 8;

// ---------------------------------------------------------------------------
// special functions

const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for positive arguments.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=1000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function I_x(a, b).
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Two-sided p-value of Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

/// p-value of a correlation coefficient `r` from `n` points under the t
/// approximation, t = r * sqrt((n-2)/(1-r^2)).
fn correlation_p(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    // df/(df+t^2) simplifies to 1 - r^2
    regularized_incomplete_beta(df / 2.0, 0.5, (1.0 - r * r).max(0.0)).clamp(0.0, 1.0)
}

// ---------------------------------------------------------------------------
// paired data

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub method_x: String,
    pub method_y: String,
    pub conditions: Vec<Condition>,
    pub reference_set: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedScores {
    pub labels: Vec<String>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub provenance: Provenance,
}

impl PairedScores {
    pub fn new(labels: Vec<String>, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let p = PairedScores {
            labels,
            x,
            y,
            provenance: Provenance::default(),
        };
        p.validate()?;
        Ok(p)
    }

    /// Unlabeled pairs; labels are the indices.
    pub fn from_vectors(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let labels = (0..x.len()).map(|i| i.to_string()).collect();
        PairedScores::new(labels, x, y)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.x.len() != self.y.len() || self.labels.len() != self.x.len() {
            return Err(Error::invalid(format!(
                "paired scores need equal lengths: {} labels, {} x, {} y",
                self.labels.len(),
                self.x.len(),
                self.y.len()
            )));
        }
        if self.x.len() < 2 {
            return Err(Error::TooFewPoints {
                needed: 2,
                got: self.x.len(),
            });
        }
        if self.x.iter().chain(&self.y).any(|v| !v.is_finite()) {
            return Err(Error::invalid("paired scores must be finite"));
        }
        let distinct: BTreeSet<&str> = self.labels.iter().map(String::as_str).collect();
        if distinct.len() != self.labels.len() {
            return Err(Error::invalid("paired score labels must be distinct"));
        }
        Ok(())
    }
}

/// A correlation coefficient and its p-value; either may be undefined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub value: Option<f64>,
    pub p: Option<f64>,
}

impl Coefficient {
    pub fn significant(&self) -> bool {
        self.p.is_some_and(|p| p <= SIGNIFICANCE_LEVEL)
    }
}

fn pearson_value(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let constant = |v: &[f64]| v.iter().all(|&a| a == v[0]);
    if constant(x) || constant(y) || sxx == 0.0 || syy == 0.0 {
        return None;
    }
    // sqrt of the product is exact when sxx == syy, so identical rankings give 1.0
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    Some(if x.len() == 2 { r.signum() } else { r })
}

/// Average ranks (1-based); ties share the mean of the ranks they span.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(pairs: &PairedScores) -> Result<Coefficient> {
    pairs.validate()?;
    let value = pearson_value(&pairs.x, &pairs.y);
    let p = value.map(|r| if pairs.len() == 2 { 1.0 } else { correlation_p(r, pairs.len()) });
    Ok(Coefficient { value, p })
}

pub fn spearman(pairs: &PairedScores) -> Result<Coefficient> {
    pairs.validate()?;
    let value = pearson_value(&average_ranks(&pairs.x), &average_ranks(&pairs.y));
    let p = value
        .filter(|_| pairs.len() > 2)
        .map(|r| correlation_p(r, pairs.len()));
    Ok(Coefficient { value, p })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    Pearson,
    Spearman,
}

/// Two-sided permutation p-value: the fraction of permutations of `y` whose
/// statistic is at least as extreme as the observed one. Enumerates all n!
/// permutations for n <= 8, otherwise samples `iterations` seeded shuffles.
pub fn permutation_p(
    pairs: &PairedScores,
    statistic: Statistic,
    iterations: usize,
    seed: u64,
) -> Result<f64> {
    pairs.validate()?;
    let n = pairs.len();
    if n < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: n });
    }
    let (x, mut y) = match statistic {
        Statistic::Pearson => (pairs.x.clone(), pairs.y.clone()),
        Statistic::Spearman => (average_ranks(&pairs.x), average_ranks(&pairs.y)),
    };
    let observed = pearson_value(&x, &y)
        .ok_or_else(|| Error::invalid("statistic undefined: zero variance"))?
        .abs();
    let threshold = observed - 1e-12 * observed.max(1.0);
    let extreme = |y: &[f64]| pearson_value(&x, y).map_or(0.0, f64::abs) >= threshold;

    if n <= EXACT_PERMUTATION_MAX_N {
        // Heap's algorithm
        let mut hits = usize::from(extreme(&y));
        let mut total = 1usize;
        let mut c = vec![0usize; n];
        let mut i = 0;
        while i < n {
            if c[i] < i {
                if i % 2 == 0 {
                    y.swap(0, i);
                } else {
                    y.swap(c[i], i);
                }
                total += 1;
                hits += usize::from(extreme(&y));
                c[i] += 1;
                i = 0;
            } else {
                c[i] = 0;
                i += 1;
            }
        }
        return Ok(hits as f64 / total as f64);
    }
    if iterations == 0 {
        return Err(Error::invalid("permutation test needs at least one iteration"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..iterations {
        y.shuffle(&mut rng);
        hits += usize::from(extreme(&y));
    }
    Ok(hits as f64 / iterations as f64)
}

// ---------------------------------------------------------------------------
// table-level operations

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub provenance: Provenance,
    pub n: usize,
    pub pearson_rho: Option<f64>,
    pub pearson_p: Option<f64>,
    pub spearman_r: Option<f64>,
    pub spearman_p: Option<f64>,
    pub significant_pearson: bool,
    pub significant_spearman: bool,
}

impl CorrelationResult {
    pub fn from_pairs(pairs: &PairedScores) -> Result<Self> {
        let p = pearson(pairs)?;
        let s = spearman(pairs)?;
        Ok(CorrelationResult {
            provenance: pairs.provenance.clone(),
            n: pairs.len(),
            pearson_rho: p.value,
            pearson_p: p.p,
            spearman_r: s.value,
            spearman_p: s.p,
            significant_pearson: p.significant(),
            significant_spearman: s.significant(),
        })
    }
}

fn require_system_level(t: &ScoreTable) -> Result<()> {
    if t.granularity != Granularity::System {
        return Err(Error::invalid(format!(
            "{} table is segment-level; correlations use system-level scores",
            t.method
        )));
    }
    Ok(())
}

/// Inner join of two system-level tables on system id.
pub fn join_tables(a: &ScoreTable, b: &ScoreTable) -> Result<PairedScores> {
    require_system_level(a)?;
    require_system_level(b)?;
    let (sa, sb) = (a.system_scores(), b.system_scores());
    let mut labels = Vec::new();
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (sys, &va) in &sa {
        match sb.get(sys) {
            Some(&vb) => {
                labels.push((*sys).to_owned());
                x.push(va);
                y.push(vb);
            }
            None => log::warn!("system {sys} missing from {} table; skipped", b.method),
        }
    }
    for sys in sb.keys().filter(|s| !sa.contains_key(*s)) {
        log::warn!("system {sys} missing from {} table; skipped", a.method);
    }
    if labels.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: labels.len(),
        });
    }
    let mut conditions = a.conditions();
    for c in b.conditions() {
        if !conditions.contains(&c) {
            conditions.push(c);
        }
    }
    Ok(PairedScores {
        labels,
        x,
        y,
        provenance: Provenance {
            method_x: a.method.clone(),
            method_y: b.method.clone(),
            conditions,
            reference_set: a.reference_set.clone().or_else(|| b.reference_set.clone()),
        },
    })
}

pub fn correlate(table_a: &ScoreTable, table_b: &ScoreTable) -> Result<CorrelationResult> {
    CorrelationResult::from_pairs(&join_tables(table_a, table_b)?)
}

/// Per-system unweighted mean over tables that differ only in domain.
pub fn average_domains(tables: &[ScoreTable]) -> Result<ScoreTable> {
    let first = tables
        .first()
        .ok_or_else(|| Error::invalid("nothing to average"))?;
    for t in tables {
        require_system_level(t)?;
        if t.method != first.method {
            return Err(Error::invalid(format!(
                "cannot average {} with {}",
                first.method, t.method
            )));
        }
        if t.systems() != first.systems() {
            let diff: Vec<&str> = t
                .systems()
                .symmetric_difference(&first.systems())
                .copied()
                .collect();
            return Err(Error::invalid(format!(
                "system sets differ between {} and {}: {diff:?}",
                first.condition, t.condition
            )));
        }
    }
    let mut sources: Vec<Condition> = Vec::new();
    for c in tables.iter().flat_map(ScoreTable::conditions) {
        if sources.contains(&c) {
            return Err(Error::invalid(format!("condition {c} appears twice")));
        }
        sources.push(c);
    }
    let mut out = ScoreTable::new(&first.method, Granularity::System, first.condition.clone());
    if sources.len() > 1 {
        out.sources = sources;
    }
    out.variant = first.variant.clone();
    out.reference_set = first.reference_set.clone().filter(|r| {
        tables
            .iter()
            .all(|t| t.reference_set.as_deref() == Some(r.as_str()))
    });
    for sys in first.systems() {
        let sum: f64 = tables.iter().map(|t| t.system_scores()[sys]).sum();
        out.insert_system(sys, sum / tables.len() as f64);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolAxis {
    Task,
    Domain,
    Language,
}

impl std::str::FromStr for PoolAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "task" => Ok(PoolAxis::Task),
            "domain" => Ok(PoolAxis::Domain),
            "language" | "lang" => Ok(PoolAxis::Language),
            _ => Err(Error::invalid(format!("unknown pooling axis {s:?}"))),
        }
    }
}

/// Optional per-condition standardization before pooling. `None` stacks raw
/// scores; `ZScore` is an extension that removes between-condition offsets.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Centering {
    #[default]
    None,
    ZScore,
}

fn standardize(v: &mut [f64]) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
    for a in v.iter_mut() {
        *a -= mean;
        if sd > 0.0 {
            *a /= sd;
        }
    }
}

pub fn pool_conditions(
    tables_human: &[ScoreTable],
    tables_metric: &[ScoreTable],
    axis: PoolAxis,
) -> Result<CorrelationResult> {
    pool_conditions_with(tables_human, tables_metric, axis, Centering::None)
}

/// Stacks (system, condition) points from every condition into one sample and
/// correlates it. A system present in two conditions contributes two points.
pub fn pool_conditions_with(
    tables_human: &[ScoreTable],
    tables_metric: &[ScoreTable],
    axis: PoolAxis,
    centering: Centering,
) -> Result<CorrelationResult> {
    if tables_human.len() != tables_metric.len() {
        return Err(Error::invalid(format!(
            "{} human tables but {} metric tables",
            tables_human.len(),
            tables_metric.len()
        )));
    }
    let mut labels = Vec::new();
    let (mut x, mut y) = (Vec::new(), Vec::new());
    let mut conditions: Vec<Condition> = Vec::new();
    let mut reference_set = None;
    for h in tables_human {
        let conds = h.conditions();
        let m = tables_metric
            .iter()
            .find(|m| m.conditions() == conds)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "no {} metric table for condition {}",
                    tables_human[0].method, h.condition
                ))
            })?;
        if conds.iter().any(|c| conditions.contains(c)) {
            return Err(Error::invalid(format!("condition {} pooled twice", h.condition)));
        }
        let mut pairs = join_tables(h, m)?;
        if centering == Centering::ZScore {
            standardize(&mut pairs.x);
            standardize(&mut pairs.y);
        }
        let tag: Vec<String> = conds.iter().map(Condition::to_string).collect();
        let tag = tag.join("+");
        labels.extend(pairs.labels.iter().map(|s| format!("{s}@{tag}")));
        x.extend(pairs.x);
        y.extend(pairs.y);
        reference_set = reference_set.or(pairs.provenance.reference_set);
        conditions.extend(conds);
    }
    if let Some(first) = conditions.first() {
        for c in &conditions {
            let same = match axis {
                PoolAxis::Task => c.langs == first.langs && c.domain == first.domain,
                PoolAxis::Domain => c.langs == first.langs && c.task == first.task,
                PoolAxis::Language => c.task == first.task && c.domain == first.domain,
            };
            if !same {
                return Err(Error::invalid(format!(
                    "pooling over {axis:?}: {c} and {first} differ in another dimension"
                )));
            }
        }
    }
    if labels.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: labels.len(),
        });
    }
    let pairs = PairedScores {
        labels,
        x,
        y,
        provenance: Provenance {
            method_x: tables_human[0].method.clone(),
            method_y: tables_metric[0].method.clone(),
            conditions,
            reference_set,
        },
    };
    CorrelationResult::from_pairs(&pairs)
}

// ---------------------------------------------------------------------------
// reports

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Tsv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(ReportFormat::Tsv),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            _ => Err(Error::invalid(format!("unknown report format {s:?}"))),
        }
    }
}

pub const REPORT_COLUMNS: [&str; 13] = [
    "task",
    "lang_pair",
    "domain",
    "method_x",
    "method_y",
    "reference_set",
    "n",
    "pearson_rho",
    "pearson_p",
    "spearman_r",
    "spearman_p",
    "sig_pearson",
    "sig_spearman",
];

fn two_decimals(v: Option<f64>) -> String {
    match v {
        // avoid "-0.00"
        Some(v) => format!("{:.2}", if v.abs() < 0.005 { 0.0 } else { v }),
        None => "n/a".to_owned(),
    }
}

fn distinct_joined<T: ToString>(items: impl Iterator<Item = T>) -> String {
    let mut seen: Vec<String> = Vec::new();
    for s in items.map(|i| i.to_string()) {
        if !seen.contains(&s) {
            seen.push(s);
        }
    }
    seen.join("+")
}

struct Labels {
    task: String,
    langs: String,
    domain: String,
}

fn labels(p: &Provenance) -> Labels {
    Labels {
        task: distinct_joined(p.conditions.iter().map(|c| c.task)),
        langs: distinct_joined(p.conditions.iter().map(|c| c.langs.clone())),
        domain: distinct_joined(p.conditions.iter().map(|c| c.domain)),
    }
}

pub fn render_report(results: &[CorrelationResult], format: ReportFormat) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Tsv => {
            out.push_str(&REPORT_COLUMNS.join("\t"));
            out.push('\n');
            for r in results {
                let l = labels(&r.provenance);
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    l.task,
                    l.langs,
                    l.domain,
                    r.provenance.method_x,
                    r.provenance.method_y,
                    r.provenance.reference_set.as_deref().unwrap_or(""),
                    r.n,
                    two_decimals(r.pearson_rho),
                    two_decimals(r.pearson_p),
                    two_decimals(r.spearman_r),
                    two_decimals(r.spearman_p),
                    r.significant_pearson,
                    r.significant_spearman,
                );
            }
        }
        ReportFormat::Markdown => {
            out.push_str("| Task | Language | Domain | Human | Metric | Reference | n | ρ | r |\n");
            out.push_str("|---|---|---|---|---|---|---:|---|---|\n");
            let cell = |v: Option<f64>, p: Option<f64>, sig: bool| {
                let value = two_decimals(v);
                let value = if sig { format!("**{value}**") } else { value };
                format!("{value} (p={})", two_decimals(p))
            };
            for r in results {
                let l = labels(&r.provenance);
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} | {} | {} | {} | {} | {} |",
                    l.task,
                    l.langs,
                    l.domain,
                    r.provenance.method_x,
                    r.provenance.method_y,
                    r.provenance.reference_set.as_deref().unwrap_or(""),
                    r.n,
                    cell(r.pearson_rho, r.pearson_p, r.significant_pearson),
                    cell(r.spearman_r, r.spearman_p, r.significant_spearman),
                );
            }
        }
    }
    out
}
