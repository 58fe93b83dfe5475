//! Test sets, conditions, reference sets and system outputs, plus their
//! on-disk layout.
//!
//! A test set directory holds one subdirectory per condition (or is itself a
//! condition directory). Each condition directory carries a `manifest.json`:
//!
//! ```json
//! { "condition": {"task": "offline", "langs": "en-de", "domain": "TED"},
//!   "documents": [
//!     { "doc_id": "talk1", "source": "talk1.src",
//!       "references": {"new": "talk1.ref.new", "original": "talk1.ref.original"},
//!       "systems": {"sysA": "talk1.sysA.hyp"} } ] }
//! ```
//!
//! Text files are UTF-8 with one segment per line. Hypothesis files may carry
//! header lines of the form `#!steval system=ID doc=DOC resegmented=true`;
//! each header starts a new document block.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const HEADER_PREFIX: &str = "#!steval";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Offline,
    Multilingual,
    Simultaneous,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Domain {
    #[serde(rename = "TED")]
    Ted,
    #[serde(rename = "ACL")]
    Acl,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Offline => "offline",
            Task::Multilingual => "multilingual",
            Task::Simultaneous => "simultaneous",
        })
    }
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "offline" => Ok(Task::Offline),
            "multilingual" | "multi" => Ok(Task::Multilingual),
            "simultaneous" | "simul" => Ok(Task::Simultaneous),
            _ => Err(Error::invalid(format!("unknown task {s:?}"))),
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Ted => "TED",
            Domain::Acl => "ACL",
        })
    }
}

impl FromStr for Domain {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "TED" => Ok(Domain::Ted),
            "ACL" => Ok(Domain::Acl),
            _ => Err(Error::invalid(format!("unknown domain {s:?}"))),
        }
    }
}

/// Source and target language codes, written `src-tgt`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LangPair {
    pub source: String,
    pub target: String,
}

impl fmt::Display for LangPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.source, self.target)
    }
}

impl FromStr for LangPair {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once('-') {
            Some((a, b)) if !a.is_empty() && !b.is_empty() && !b.contains('-') => Ok(LangPair {
                source: a.to_owned(),
                target: b.to_owned(),
            }),
            _ => Err(Error::invalid(format!("malformed language pair {s:?}"))),
        }
    }
}

impl Serialize for LangPair {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LangPair {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawCondition")]
pub struct Condition {
    pub task: Task,
    pub langs: LangPair,
    pub domain: Domain,
}

#[derive(Deserialize)]
struct RawCondition {
    task: Task,
    langs: LangPair,
    domain: Domain,
}

impl TryFrom<RawCondition> for Condition {
    type Error = Error;
    fn try_from(raw: RawCondition) -> Result<Self> {
        Condition::new(raw.task, raw.langs, raw.domain)
    }
}

impl Condition {
    /// TED pairs with the offline and simultaneous tasks, ACL with offline and
    /// multilingual.
    pub fn new(task: Task, langs: LangPair, domain: Domain) -> Result<Self> {
        let ok = matches!(
            (task, domain),
            (Task::Offline, _) | (Task::Simultaneous, Domain::Ted) | (Task::Multilingual, Domain::Acl)
        );
        if !ok {
            return Err(Error::invalid(format!(
                "task {task} is not evaluated on the {domain} domain"
            )));
        }
        Ok(Condition { task, langs, domain })
    }

    pub fn target_language(&self) -> &str {
        &self.langs.target
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.task, self.langs, self.domain)
    }
}

/// Parses `task/src-tgt/domain`.
impl FromStr for Condition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('/').collect();
        match parts.as_slice() {
            [t, l, d] => Condition::new(t.parse()?, l.parse()?, d.parse()?),
            _ => Err(Error::invalid(format!(
                "condition {s:?} must look like offline/en-de/TED"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub segment_id: String,
    pub source_text: String,
    pub references: BTreeMap<String, String>,
}

pub fn segment_id(doc_id: &str, index: usize) -> String {
    format!("{doc_id}:{index}")
}

/// Splits `doc:index` back into its parts.
pub fn parse_segment_id(id: &str) -> Option<(&str, usize)> {
    let (doc, idx) = id.rsplit_once(':')?;
    Some((doc, idx.parse().ok()?))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub segments: Vec<Segment>,
}

impl Document {
    /// Builds a document from parallel source and reference lines.
    pub fn from_lines(
        doc_id: &str,
        sources: Vec<String>,
        references: BTreeMap<String, Vec<String>>,
    ) -> Result<Self> {
        if sources.is_empty() {
            return Err(Error::invalid(format!("document {doc_id} has no segments")));
        }
        if references.is_empty() {
            return Err(Error::invalid(format!("document {doc_id} has no references")));
        }
        for (name, lines) in &references {
            if lines.len() != sources.len() {
                return Err(Error::invalid(format!(
                    "document {doc_id}: reference set {name:?} has {} lines, source has {}",
                    lines.len(),
                    sources.len()
                )));
            }
        }
        let segments = sources
            .into_iter()
            .enumerate()
            .map(|(i, source_text)| Segment {
                segment_id: segment_id(doc_id, i),
                source_text,
                references: references
                    .iter()
                    .map(|(name, lines)| (name.clone(), lines[i].clone()))
                    .collect(),
            })
            .collect();
        Ok(Document {
            doc_id: doc_id.to_owned(),
            segments,
        })
    }

    pub fn reference_sets(&self) -> impl Iterator<Item = &str> {
        self.segments
            .first()
            .into_iter()
            .flat_map(|s| s.references.keys().map(String::as_str))
    }

    pub fn reference_lines(&self, set: &str) -> Option<Vec<&str>> {
        self.segments
            .iter()
            .map(|s| s.references.get(set).map(String::as_str))
            .collect()
    }
}

/// One document's hypothesis lines.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentOutput {
    pub doc_id: String,
    pub segments: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemOutput {
    pub system_id: String,
    pub condition: Condition,
    pub documents: Vec<DocumentOutput>,
    pub resegmented: bool,
}

impl SystemOutput {
    pub fn document(&self, doc_id: &str) -> Option<&DocumentOutput> {
        self.documents.iter().find(|d| d.doc_id == doc_id)
    }
}

/// Documents and registered systems for one condition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConditionSet {
    pub condition: Condition,
    pub documents: Vec<Document>,
    pub systems: BTreeMap<String, SystemOutput>,
}

impl ConditionSet {
    pub fn new(condition: Condition, documents: Vec<Document>) -> Result<Self> {
        if documents.is_empty() {
            return Err(Error::invalid(format!("condition {condition} has no documents")));
        }
        let mut seen = BTreeSet::new();
        let mut expected: Option<Vec<&str>> = None;
        for doc in &documents {
            if doc.segments.is_empty() {
                return Err(Error::invalid(format!("document {} is empty", doc.doc_id)));
            }
            for seg in &doc.segments {
                if !seen.insert(seg.segment_id.as_str()) {
                    return Err(Error::invalid(format!("duplicate segment id {}", seg.segment_id)));
                }
                if seg.references.is_empty() {
                    return Err(Error::invalid(format!(
                        "segment {} has no reference",
                        seg.segment_id
                    )));
                }
                let names: Vec<&str> = seg.references.keys().map(String::as_str).collect();
                match &expected {
                    None => expected = Some(names),
                    Some(e) if *e != names => {
                        return Err(Error::invalid(format!(
                            "segment {} has reference sets {names:?}, expected {e:?}",
                            seg.segment_id
                        )))
                    }
                    _ => {}
                }
            }
        }
        Ok(ConditionSet {
            condition,
            documents,
            systems: BTreeMap::new(),
        })
    }

    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.doc_id == doc_id)
    }

    pub fn reference_sets(&self) -> Vec<&str> {
        self.documents[0].reference_sets().collect()
    }

    /// All segments in canonical (document, index) order.
    pub fn segments(&self) -> impl Iterator<Item = (&Document, usize, &Segment)> {
        self.documents
            .iter()
            .flat_map(|d| d.segments.iter().enumerate().map(move |(i, s)| (d, i, s)))
    }

    pub fn segment_count(&self) -> usize {
        self.documents.iter().map(|d| d.segments.len()).sum()
    }

    /// Registers a system output after checking it only refers to known documents.
    pub fn register(&mut self, sys: SystemOutput) -> Result<()> {
        self.check_system(&sys)?;
        self.systems.insert(sys.system_id.clone(), sys);
        Ok(())
    }

    pub fn check_system(&self, sys: &SystemOutput) -> Result<()> {
        if sys.condition != self.condition {
            return Err(Error::invalid(format!(
                "system {} is for condition {}, not {}",
                sys.system_id, sys.condition, self.condition
            )));
        }
        for d in &sys.documents {
            let doc = self.document(&d.doc_id).ok_or_else(|| {
                Error::invalid(format!(
                    "system {}: unknown document {:?}",
                    sys.system_id, d.doc_id
                ))
            })?;
            if sys.resegmented && doc.segments.len() != d.segments.len() {
                return Err(Error::invalid(format!(
                    "system {} is flagged resegmented but document {} has {} lines for {} segments",
                    sys.system_id,
                    d.doc_id,
                    d.segments.len(),
                    doc.segments.len()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TestSet {
    sets: Vec<ConditionSet>,
}

impl TestSet {
    pub fn new(mut sets: Vec<ConditionSet>) -> Result<Self> {
        sets.sort_by(|a, b| a.condition.cmp(&b.condition));
        if let Some(w) = sets.windows(2).find(|w| w[0].condition == w[1].condition) {
            return Err(Error::invalid(format!("condition {} appears twice", w[0].condition)));
        }
        Ok(TestSet { sets })
    }

    pub fn conditions(&self) -> impl Iterator<Item = &Condition> {
        self.sets.iter().map(|s| &s.condition)
    }

    pub fn sets(&self) -> &[ConditionSet] {
        &self.sets
    }

    pub fn get(&self, condition: &Condition) -> Option<&ConditionSet> {
        self.sets.iter().find(|s| &s.condition == condition)
    }

    pub fn get_mut(&mut self, condition: &Condition) -> Option<&mut ConditionSet> {
        self.sets.iter_mut().find(|s| &s.condition == condition)
    }

    pub fn require(&self, condition: &Condition) -> Result<&ConditionSet> {
        self.get(condition)
            .ok_or_else(|| Error::invalid(format!("test set has no condition {condition}")))
    }

    /// The condition to use when none is named: only valid for single-condition sets.
    pub fn only(&self) -> Result<&ConditionSet> {
        match self.sets.as_slice() {
            [one] => Ok(one),
            _ => Err(Error::invalid(format!(
                "test set has {} conditions; name one explicitly",
                self.sets.len()
            ))),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    condition: Condition,
    documents: Vec<ManifestDocument>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestDocument {
    doc_id: String,
    source: String,
    references: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    systems: BTreeMap<String, String>,
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    Ok(read_text(path)?.lines().map(str::to_owned).collect())
}

pub fn load_testset(path: impl AsRef<Path>) -> Result<TestSet> {
    let path = path.as_ref();
    if path.join(MANIFEST_FILE).is_file() {
        return TestSet::new(vec![load_condition_dir(path)?]);
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(MANIFEST_FILE).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::invalid(format!(
            "{}: no {MANIFEST_FILE} found in the directory or its subdirectories",
            path.display()
        )));
    }
    TestSet::new(dirs.iter().map(|d| load_condition_dir(d)).collect::<Result<_>>()?)
}

/// Loads one condition directory (must contain `manifest.json`).
pub fn load_condition_dir(dir: &Path) -> Result<ConditionSet> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest: Manifest = serde_json::from_str(&read_text(&manifest_path)?).map_err(|e| {
        Error::Json {
            path: manifest_path.clone(),
            source: e,
        }
    })?;

    let mut documents = Vec::with_capacity(manifest.documents.len());
    let mut seen_docs = BTreeSet::new();
    for (idx, md) in manifest.documents.iter().enumerate() {
        if !seen_docs.insert(md.doc_id.as_str()) {
            return Err(Error::parse(
                &manifest_path,
                idx + 1,
                format!(
                    "duplicate segment id {}: document {:?} is listed twice",
                    segment_id(&md.doc_id, 0),
                    md.doc_id
                ),
            ));
        }
        if md.references.is_empty() {
            return Err(Error::parse(
                &manifest_path,
                idx + 1,
                format!("document {:?} lists no references", md.doc_id),
            ));
        }
        let src_path = dir.join(&md.source);
        let sources = read_lines(&src_path)?;
        let mut refs = BTreeMap::new();
        for (name, file) in &md.references {
            let ref_path = dir.join(file);
            let lines = read_lines(&ref_path)?;
            if lines.len() != sources.len() {
                let line = lines.len().min(sources.len()) + 1;
                return Err(Error::parse(
                    &ref_path,
                    line,
                    format!(
                        "reference set {name:?} has {} lines but {} has {}",
                        lines.len(),
                        md.source,
                        sources.len()
                    ),
                ));
            }
            refs.insert(name.clone(), lines);
        }
        documents.push(Document::from_lines(&md.doc_id, sources, refs).map_err(|e| {
            Error::parse(&manifest_path, idx + 1, e.to_string())
        })?);
    }
    let mut set = ConditionSet::new(manifest.condition.clone(), documents)
        .map_err(|e| Error::parse(&manifest_path, 1, e.to_string()))?;

    // Systems are registered per document; collect them into whole outputs.
    let mut by_system: BTreeMap<&str, Vec<(DocumentOutput, bool)>> = BTreeMap::new();
    for md in &manifest.documents {
        for (system_id, file) in &md.systems {
            let path = dir.join(file);
            let blocks = parse_hypothesis_file(&path)?;
            for block in blocks {
                let doc_id = block.doc_id.clone().unwrap_or_else(|| md.doc_id.clone());
                if doc_id != md.doc_id {
                    return Err(Error::parse(
                        &path,
                        block.line,
                        format!("header names document {doc_id:?}, manifest says {:?}", md.doc_id),
                    ));
                }
                by_system.entry(system_id).or_default().push((
                    DocumentOutput {
                        doc_id,
                        segments: block.lines,
                    },
                    block.resegmented,
                ));
            }
        }
    }
    for (system_id, docs) in by_system {
        let sys = assemble_system(system_id, &set, docs);
        set.register(sys)?;
    }
    Ok(set)
}

fn assemble_system(
    system_id: &str,
    set: &ConditionSet,
    docs: Vec<(DocumentOutput, bool)>,
) -> SystemOutput {
    let resegmented = !docs.is_empty()
        && docs.iter().all(|(d, flag)| {
            let matches = set
                .document(&d.doc_id)
                .is_some_and(|doc| doc.segments.len() == d.segments.len());
            if *flag && !matches {
                log::warn!(
                    "system {system_id}: document {} is flagged resegmented but its line count differs",
                    d.doc_id
                );
            }
            *flag && matches
        });
    SystemOutput {
        system_id: system_id.to_owned(),
        condition: set.condition.clone(),
        documents: docs.into_iter().map(|(d, _)| d).collect(),
        resegmented,
    }
}

/// One document block from a hypothesis file.
#[derive(Debug)]
struct HypBlock {
    line: usize,
    system_id: Option<String>,
    doc_id: Option<String>,
    resegmented: bool,
    lines: Vec<String>,
}

fn parse_header(path: &Path, line_no: usize, line: &str) -> Result<HypBlock> {
    let mut block = HypBlock {
        line: line_no,
        system_id: None,
        doc_id: None,
        resegmented: false,
        lines: Vec::new(),
    };
    for field in line[HEADER_PREFIX.len()..].split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| Error::parse(path, line_no, format!("malformed header field {field:?}")))?;
        match key {
            "system" => block.system_id = Some(value.to_owned()),
            "doc" => block.doc_id = Some(value.to_owned()),
            "resegmented" => {
                block.resegmented = value.parse().map_err(|_| {
                    Error::parse(path, line_no, format!("resegmented must be true/false, got {value:?}"))
                })?
            }
            _ => return Err(Error::parse(path, line_no, format!("unknown header key {key:?}"))),
        }
    }
    Ok(block)
}

fn parse_hypothesis_file(path: &Path) -> Result<Vec<HypBlock>> {
    let text = read_text(path)?;
    if text.is_empty() {
        return Err(Error::parse(path, 1, "hypothesis file is empty"));
    }
    let mut blocks: Vec<HypBlock> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.starts_with(HEADER_PREFIX) {
            blocks.push(parse_header(path, i + 1, line)?);
            continue;
        }
        if blocks.is_empty() {
            blocks.push(HypBlock {
                line: i + 1,
                system_id: None,
                doc_id: None,
                resegmented: false,
                lines: Vec::new(),
            });
        }
        blocks.last_mut().expect("block exists").lines.push(line.to_owned());
    }
    Ok(blocks)
}

/// Loads a hypothesis file for `condition`. The system id comes from the
/// header, falling back to the file stem; documents come from headers, or
/// default to the condition's only document.
pub fn load_system_output(
    path: impl AsRef<Path>,
    condition: &Condition,
    testset: &TestSet,
) -> Result<SystemOutput> {
    let path = path.as_ref();
    let set = testset.require(condition)?;
    let blocks = parse_hypothesis_file(path)?;
    let system_id = blocks
        .iter()
        .find_map(|b| b.system_id.clone())
        .or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .ok_or_else(|| Error::parse(path, 1, "cannot determine system id"))?;

    let mut docs = Vec::with_capacity(blocks.len());
    let mut seen = BTreeSet::new();
    for block in blocks {
        let doc_id = match block.doc_id {
            Some(d) => d,
            None if set.documents.len() == 1 => set.documents[0].doc_id.clone(),
            None => {
                return Err(Error::parse(
                    path,
                    block.line,
                    "no doc= header and the condition has several documents",
                ))
            }
        };
        if set.document(&doc_id).is_none() {
            return Err(Error::parse(path, block.line, format!("unknown doc_id {doc_id:?}")));
        }
        if !seen.insert(doc_id.clone()) {
            return Err(Error::parse(path, block.line, format!("document {doc_id:?} appears twice")));
        }
        docs.push((
            DocumentOutput {
                doc_id,
                segments: block.lines,
            },
            block.resegmented,
        ));
    }
    let sys = assemble_system(&system_id, set, docs);
    set.check_system(&sys)?;
    Ok(sys)
}

/// Renders a system output in the canonical header-per-document format.
pub fn format_system_output(sys: &SystemOutput) -> String {
    let mut out = String::new();
    for d in &sys.documents {
        out.push_str(&format!(
            "{HEADER_PREFIX} system={} doc={} resegmented={}\n",
            sys.system_id, d.doc_id, sys.resegmented
        ));
        for line in &d.segments {
            out.push_str(line);
            out.push('\n');
        }
    }
    out
}

pub fn write_system_output(sys: &SystemOutput, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &format_system_output(sys))
}

fn lines_to_text<'a>(lines: impl IntoIterator<Item = &'a str>) -> String {
    let mut out = String::new();
    for l in lines {
        out.push_str(l);
        out.push('\n');
    }
    out
}

fn condition_dir_name(c: &Condition) -> String {
    format!("{}_{}_{}", c.task, c.langs, c.domain)
}

/// Writes `testset` under `dir`, one subdirectory per condition.
pub fn save_testset(testset: &TestSet, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    for set in testset.sets() {
        let cdir = dir.join(condition_dir_name(&set.condition));
        fs::create_dir_all(&cdir).map_err(|e| Error::io(&cdir, e))?;
        let mut documents = Vec::new();
        for doc in &set.documents {
            let source = format!("{}.src", doc.doc_id);
            write_text(
                &cdir.join(&source),
                &lines_to_text(doc.segments.iter().map(|s| s.source_text.as_str())),
            )?;
            let mut references = BTreeMap::new();
            for name in doc.reference_sets() {
                let file = format!("{}.ref.{name}", doc.doc_id);
                let lines = doc.reference_lines(name).expect("consistent reference sets");
                write_text(&cdir.join(&file), &lines_to_text(lines))?;
                references.insert(name.to_owned(), file);
            }
            let mut systems = BTreeMap::new();
            for sys in set.systems.values() {
                if let Some(d) = sys.document(&doc.doc_id) {
                    let file = format!("{}.{}.hyp", doc.doc_id, sys.system_id);
                    let single = SystemOutput {
                        documents: vec![d.clone()],
                        ..sys.clone()
                    };
                    write_system_output(&single, cdir.join(&file))?;
                    systems.insert(sys.system_id.clone(), file);
                }
            }
            documents.push(ManifestDocument {
                doc_id: doc.doc_id.clone(),
                source,
                references,
                systems,
            });
        }
        let manifest = Manifest {
            condition: set.condition.clone(),
            documents,
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        write_text(&cdir.join(MANIFEST_FILE), &(json + "\n"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cond() -> Condition {
        "offline/en-de/TED".parse().unwrap()
    }

    fn write(dir: &Path, name: &str, text: &str) {
        fs::write(dir.join(name), text).unwrap();
    }

    fn fixture(dir: &Path) {
        write(
            dir,
            MANIFEST_FILE,
            r#"{"condition": {"task": "offline", "langs": "en-de", "domain": "TED"},
                "documents": [
                  {"doc_id": "t1", "source": "t1.src",
                   "references": {"new": "t1.new", "original": "t1.orig"},
                   "systems": {"A": "t1.A.hyp"}},
                  {"doc_id": "t2", "source": "t2.src",
                   "references": {"new": "t2.new", "original": "t2.orig"}}]}"#,
        );
        write(dir, "t1.src", "hello world\nhow are you\n");
        write(dir, "t1.new", "hallo welt\nwie geht es dir\n");
        write(dir, "t1.orig", "hallo Welt\nwie gehts\n");
        write(dir, "t2.src", "bye\n");
        write(dir, "t2.new", "tschüss\n");
        write(dir, "t2.orig", "ciao\n");
        write(dir, "t1.A.hyp", "hallo welt wie geht es dir\n");
    }

    #[test]
    fn condition_combinations() {
        assert!("simultaneous/en-de/ACL".parse::<Condition>().is_err());
        assert!("multilingual/en-de/TED".parse::<Condition>().is_err());
        assert!("multilingual/en-zh/ACL".parse::<Condition>().is_ok());
        let c = cond();
        assert_eq!(c.to_string(), "offline/en-de/TED");
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(json, r#"{"task":"offline","langs":"en-de","domain":"TED"}"#);
        assert_eq!(serde_json::from_str::<Condition>(&json).unwrap(), c);
        assert!(serde_json::from_str::<Condition>(
            r#"{"task":"simultaneous","langs":"en-de","domain":"ACL"}"#
        )
        .is_err());
    }

    #[test]
    fn loads_fixture() {
        let tmp = tempfile::tempdir().unwrap();
        fixture(tmp.path());
        let ts = load_testset(tmp.path()).unwrap();
        let set = ts.only().unwrap();
        assert_eq!(set.segment_count(), 3);
        assert_eq!(set.reference_sets(), ["new", "original"]);
        assert_eq!(set.documents[0].segments[1].segment_id, "t1:1");
        let a = &set.systems["A"];
        assert!(!a.resegmented);
        assert_eq!(a.documents[0].segments.len(), 1);
    }

    #[test]
    fn duplicate_document_names_segment_id() {
        let tmp = tempfile::tempdir().unwrap();
        fixture(tmp.path());
        write(
            tmp.path(),
            MANIFEST_FILE,
            r#"{"condition": {"task": "offline", "langs": "en-de", "domain": "TED"},
                "documents": [
                  {"doc_id": "t1", "source": "t1.src", "references": {"new": "t1.new"}},
                  {"doc_id": "t1", "source": "t2.src", "references": {"new": "t2.new"}}]}"#,
        );
        let err = load_testset(tmp.path()).unwrap_err().to_string();
        assert!(err.contains("t1:0"), "{err}");
    }

    #[test]
    fn inconsistent_reference_sets_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        fixture(tmp.path());
        write(
            tmp.path(),
            MANIFEST_FILE,
            r#"{"condition": {"task": "offline", "langs": "en-de", "domain": "TED"},
                "documents": [
                  {"doc_id": "t1", "source": "t1.src", "references": {"new": "t1.new", "original": "t1.orig"}},
                  {"doc_id": "t2", "source": "t2.src", "references": {"new": "t2.new"}}]}"#,
        );
        let err = load_testset(tmp.path()).unwrap_err().to_string();
        assert!(err.contains("reference sets"), "{err}");
    }

    #[test]
    fn short_reference_file_names_file_and_line() {
        let tmp = tempfile::tempdir().unwrap();
        fixture(tmp.path());
        write(tmp.path(), "t1.orig", "hallo Welt\n");
        let err = load_testset(tmp.path()).unwrap_err();
        match err {
            Error::Parse { path, line, .. } => {
                assert!(path.ends_with("t1.orig"));
                assert_eq!(line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn system_output_files() {
        let tmp = tempfile::tempdir().unwrap();
        fixture(tmp.path());
        let ts = load_testset(tmp.path()).unwrap();

        let p = tmp.path().join("B.hyp");
        fs::write(&p, "#!steval doc=t1 resegmented=true\nhallo welt\nwie geht es dir\n#!steval doc=t2 resegmented=true\ntschüss\n").unwrap();
        let sys = load_system_output(&p, &cond(), &ts).unwrap();
        assert_eq!(sys.system_id, "B");
        assert!(sys.resegmented);

        fs::write(&p, "#!steval doc=t1 resegmented=true\nhallo welt wie geht es dir\n").unwrap();
        assert!(!load_system_output(&p, &cond(), &ts).unwrap().resegmented);

        fs::write(&p, "#!steval doc=t1\nhallo welt\nwie geht es dir\n").unwrap();
        assert!(!load_system_output(&p, &cond(), &ts).unwrap().resegmented);

        fs::write(&p, "#!steval doc=nope\nx\n").unwrap();
        let err = load_system_output(&p, &cond(), &ts).unwrap_err().to_string();
        assert!(err.contains("nope"), "{err}");

        fs::write(&p, "").unwrap();
        assert!(load_system_output(&p, &cond(), &ts).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        fixture(tmp.path());
        let mut ts = load_testset(tmp.path()).unwrap();
        let set = ts.get_mut(&cond()).unwrap();
        set.register(SystemOutput {
            system_id: "R".into(),
            condition: cond(),
            documents: vec![
                DocumentOutput {
                    doc_id: "t1".into(),
                    segments: vec!["a".into(), "".into()],
                },
                DocumentOutput {
                    doc_id: "t2".into(),
                    segments: vec!["c".into()],
                },
            ],
            resegmented: true,
        })
        .unwrap();
        let out = tempfile::tempdir().unwrap();
        save_testset(&ts, out.path()).unwrap();
        assert_eq!(load_testset(out.path()).unwrap(), ts);
    }
}
