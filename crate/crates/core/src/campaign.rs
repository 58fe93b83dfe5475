//! On-disk campaign state.
//!
//! A campaign directory holds `campaign.json` (settings), `plan.json` (the
//! sampled segments), `tasks.json` (the issued tasks) and `records.jsonl`,
//! an append-only log of accepted scores. Reopening a directory restores the
//! exact state, so a service can be restarted at any point.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::da::{self, AnnotationTask, DaAggregation, DaIngest, DaRecord, SamplePlan};
use crate::error::{Error, Result};
use crate::evalset::{read_text, write_text, Condition, ConditionSet, SystemOutput};
use crate::metrics::ScoreTable;

pub const MANIFEST_FILE: &str = "campaign.json";
pub const PLAN_FILE: &str = "plan.json";
pub const TASKS_FILE: &str = "tasks.json";
pub const RECORDS_FILE: &str = "records.jsonl";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignSettings {
    pub condition: Condition,
    pub k: usize,
    pub sample_seed: u64,
    pub shuffle_seed: u64,
    pub annotators: Vec<String>,
    pub systems: Vec<String>,
    pub task_count: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum SubmitError {
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("task {task_id} belongs to annotator {expected}, not {got}")]
    WrongAnnotator {
        task_id: String,
        expected: String,
        got: String,
    },
    #[error("{0}")]
    InvalidScore(String),
    #[error("task {0} already has a score")]
    Duplicate(String),
    #[error(transparent)]
    Storage(#[from] Error),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatorProgress {
    pub done: usize,
    pub total: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub done: usize,
    pub total: usize,
    pub annotators: BTreeMap<String, AnnotatorProgress>,
}

type TaskKey = (String, String, String);

fn task_key(t: &AnnotationTask) -> TaskKey {
    (t.annotator_id.clone(), t.system_id.clone(), t.segment_id.clone())
}

fn record_key(r: &DaRecord) -> TaskKey {
    (r.annotator_id.clone(), r.system_id.clone(), r.segment_id.clone())
}

pub struct Campaign {
    dir: PathBuf,
    settings: CampaignSettings,
    plan: SamplePlan,
    tasks: Vec<AnnotationTask>,
    records: Vec<DaRecord>,
    by_id: HashMap<String, usize>,
    by_key: HashMap<TaskKey, usize>,
    scored: HashSet<usize>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.to_owned(),
        source: e,
    })?;
    text.push('\n');
    write_text(path, &text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::Json {
        path: path.to_owned(),
        source: e,
    })
}

impl Campaign {
    /// Samples segments, builds tasks and writes a new campaign directory.
    /// Refuses to overwrite an existing campaign.
    pub fn create(
        dir: impl AsRef<Path>,
        set: &ConditionSet,
        systems: &[&SystemOutput],
        annotators: &[String],
        k: usize,
        sample_seed: u64,
        shuffle_seed: u64,
    ) -> Result<Campaign> {
        let dir = dir.as_ref();
        if dir.join(MANIFEST_FILE).exists() {
            return Err(Error::invalid(format!(
                "{} already contains a campaign",
                dir.display()
            )));
        }
        let plan = da::sample_condition(set, k, sample_seed)?;
        let tasks = da::build_tasks(&plan, set, systems, annotators, shuffle_seed)?;
        let settings = CampaignSettings {
            condition: set.condition.clone(),
            k,
            sample_seed,
            shuffle_seed,
            annotators: annotators.to_vec(),
            systems: systems.iter().map(|s| s.system_id.clone()).collect(),
            task_count: tasks.len(),
        };
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_json(&dir.join(PLAN_FILE), &plan)?;
        write_json(&dir.join(TASKS_FILE), &tasks)?;
        write_text(&dir.join(RECORDS_FILE), "")?;
        // Written last: its presence marks a complete campaign.
        write_json(&dir.join(MANIFEST_FILE), &settings)?;
        Campaign::assemble(dir.to_owned(), settings, plan, tasks, Vec::new())
    }

    pub fn open(dir: impl AsRef<Path>) -> Result<Campaign> {
        let dir = dir.as_ref();
        let settings: CampaignSettings = read_json(&dir.join(MANIFEST_FILE))?;
        let plan: SamplePlan = read_json(&dir.join(PLAN_FILE))?;
        let tasks: Vec<AnnotationTask> = read_json(&dir.join(TASKS_FILE))?;
        let records_path = dir.join(RECORDS_FILE);
        let text = if records_path.exists() {
            read_text(&records_path)?
        } else {
            String::new()
        };
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: DaRecord = serde_json::from_str(line)
                .map_err(|e| Error::parse(&records_path, i + 1, e.to_string()))?;
            records.push(r);
        }
        if tasks.len() != settings.task_count {
            return Err(Error::invalid(format!(
                "{} lists {} tasks, manifest expects {}",
                TASKS_FILE,
                tasks.len(),
                settings.task_count
            )));
        }
        Campaign::assemble(dir.to_owned(), settings, plan, tasks, records)
    }

    fn assemble(
        dir: PathBuf,
        settings: CampaignSettings,
        plan: SamplePlan,
        tasks: Vec<AnnotationTask>,
        records: Vec<DaRecord>,
    ) -> Result<Campaign> {
        let by_id = tasks
            .iter()
            .enumerate()
            .map(|(i, t)| (t.task_id.clone(), i))
            .collect();
        let by_key: HashMap<TaskKey, usize> = tasks
            .iter()
            .enumerate()
            .map(|(i, t)| (task_key(t), i))
            .collect();
        let mut scored = HashSet::new();
        for r in &records {
            let &i = by_key.get(&record_key(r)).ok_or_else(|| {
                Error::invalid(format!(
                    "record for {}/{}/{} has no task",
                    r.annotator_id, r.system_id, r.segment_id
                ))
            })?;
            if !scored.insert(i) {
                return Err(Error::invalid(format!(
                    "task {} scored twice in {RECORDS_FILE}",
                    tasks[i].task_id
                )));
            }
        }
        Ok(Campaign {
            dir,
            settings,
            plan,
            tasks,
            records,
            by_id,
            by_key,
            scored,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn settings(&self) -> &CampaignSettings {
        &self.settings
    }

    pub fn plan(&self) -> &SamplePlan {
        &self.plan
    }

    pub fn tasks(&self) -> &[AnnotationTask] {
        &self.tasks
    }

    pub fn records(&self) -> &[DaRecord] {
        &self.records
    }

    pub fn task(&self, task_id: &str) -> Option<&AnnotationTask> {
        self.by_id.get(task_id).map(|&i| &self.tasks[i])
    }

    /// First unscored task in the annotator's queue.
    pub fn next_task(&self, annotator_id: &str) -> Option<&AnnotationTask> {
        self.tasks
            .iter()
            .enumerate()
            .filter(|(_, t)| t.annotator_id == annotator_id)
            .find(|(i, _)| !self.scored.contains(i))
            .map(|(_, t)| t)
    }

    pub fn is_annotator(&self, annotator_id: &str) -> bool {
        self.settings.annotators.iter().any(|a| a == annotator_id)
    }

    /// Validates and durably appends one score.
    pub fn submit(
        &mut self,
        task_id: &str,
        annotator_id: &str,
        score: f64,
        timestamp: u64,
    ) -> std::result::Result<&DaRecord, SubmitError> {
        let &i = self
            .by_id
            .get(task_id)
            .ok_or_else(|| SubmitError::UnknownTask(task_id.to_owned()))?;
        let task = &self.tasks[i];
        if task.annotator_id != annotator_id {
            return Err(SubmitError::WrongAnnotator {
                task_id: task_id.to_owned(),
                expected: task.annotator_id.clone(),
                got: annotator_id.to_owned(),
            });
        }
        da::check_score(score).map_err(|e| SubmitError::InvalidScore(e.to_string()))?;
        if self.scored.contains(&i) {
            return Err(SubmitError::Duplicate(task_id.to_owned()));
        }
        let record = DaRecord {
            annotator_id: annotator_id.to_owned(),
            system_id: task.system_id.clone(),
            segment_id: task.segment_id.clone(),
            raw_score: score,
            timestamp,
        };
        self.append(std::slice::from_ref(&record))?;
        self.scored.insert(i);
        self.records.push(record);
        Ok(self.records.last().expect("just pushed"))
    }

    /// Imports a score file; valid rows are appended, the rest reported.
    pub fn ingest(&mut self, path: impl AsRef<Path>) -> Result<DaIngest> {
        let res = da::ingest_da(path, &self.tasks, &self.records)?;
        self.append(&res.records)?;
        for r in &res.records {
            self.scored.insert(self.by_key[&record_key(r)]);
        }
        self.records.extend(res.records.iter().cloned());
        Ok(res)
    }

    fn append(&self, records: &[DaRecord]) -> Result<()> {
        if records.is_empty() {
            return Ok(());
        }
        let path = self.dir.join(RECORDS_FILE);
        let mut buf = String::new();
        for r in records {
            buf.push_str(&serde_json::to_string(r).expect("records serialize"));
            buf.push('\n');
        }
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        f.write_all(buf.as_bytes())
            .and_then(|_| f.sync_data())
            .map_err(|e| Error::io(&path, e))
    }

    pub fn progress(&self) -> Progress {
        let mut annotators: BTreeMap<String, AnnotatorProgress> = self
            .settings
            .annotators
            .iter()
            .map(|a| (a.clone(), AnnotatorProgress::default()))
            .collect();
        for (i, t) in self.tasks.iter().enumerate() {
            let p = annotators.entry(t.annotator_id.clone()).or_default();
            p.total += 1;
            if self.scored.contains(&i) {
                p.done += 1;
            }
        }
        Progress {
            done: self.scored.len(),
            total: self.tasks.len(),
            annotators,
        }
    }

    pub fn export_wmt(&self, path: impl AsRef<Path>) -> Result<()> {
        da::export_wmt(&self.records, &self.settings.condition, path)
    }

    pub fn aggregate(&self, mode: DaAggregation) -> ScoreTable {
        let expected: Vec<&str> = self.settings.systems.iter().map(String::as_str).collect();
        da::aggregate_system_da(&self.records, mode, &self.settings.condition, &expected)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalset::{Document, DocumentOutput};

    fn fixture() -> (ConditionSet, Vec<SystemOutput>) {
        let cond: Condition = "offline/en-de/TED".parse().unwrap();
        let src: Vec<String> = (0..6).map(|i| format!("s{i}")).collect();
        let refs = [("a".to_owned(), src.clone())].into_iter().collect();
        let set = ConditionSet::new(cond.clone(), vec![Document::from_lines("d", src, refs).unwrap()]).unwrap();
        let systems = ["A", "B"]
            .iter()
            .map(|id| SystemOutput {
                system_id: id.to_string(),
                condition: cond.clone(),
                documents: vec![DocumentOutput {
                    doc_id: "d".into(),
                    segments: (0..6).map(|i| format!("{id}{i}")).collect(),
                }],
                resegmented: true,
            })
            .collect();
        (set, systems)
    }

    #[test]
    fn submit_persist_reopen() {
        let (set, systems) = fixture();
        let refs: Vec<&SystemOutput> = systems.iter().collect();
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("c");
        let annotators = vec!["x".to_owned(), "y".to_owned()];
        let mut c = Campaign::create(&dir, &set, &refs, &annotators, 4, 1, 2).unwrap();
        assert_eq!(c.tasks().len(), 8);
        assert!(Campaign::create(&dir, &set, &refs, &annotators, 4, 1, 2).is_err());

        let t = c.next_task("x").unwrap().clone();
        assert_eq!(t.presentation_index, 0);
        assert!(matches!(c.submit(&t.task_id, "y", 50.0, 0), Err(SubmitError::WrongAnnotator { .. })));
        assert!(matches!(c.submit(&t.task_id, "x", 150.0, 0), Err(SubmitError::InvalidScore(_))));
        assert!(matches!(c.submit("nope", "x", 50.0, 0), Err(SubmitError::UnknownTask(_))));
        c.submit(&t.task_id, "x", 50.0, 7).unwrap();
        assert!(matches!(c.submit(&t.task_id, "x", 60.0, 0), Err(SubmitError::Duplicate(_))));
        assert_eq!(c.next_task("x").unwrap().presentation_index, 1);

        let reopened = Campaign::open(&dir).unwrap();
        assert_eq!(reopened.records(), c.records());
        assert_eq!(reopened.progress(), c.progress());
        assert_eq!(reopened.progress().annotators["x"], AnnotatorProgress { done: 1, total: 4 });
        assert_eq!(reopened.next_task("x"), c.next_task("x"));
    }

    #[test]
    fn exhausted_queue() {
        let (set, systems) = fixture();
        let refs: Vec<&SystemOutput> = systems.iter().collect();
        let tmp = tempfile::tempdir().unwrap();
        let mut c = Campaign::create(tmp.path(), &set, &refs, &["x".into()], 1, 0, 0).unwrap();
        while let Some(t) = c.next_task("x").cloned() {
            c.submit(&t.task_id, "x", 10.0, 0).unwrap();
        }
        assert_eq!(c.progress().done, 2);
        assert!(c.next_task("x").is_none());
        assert!(c.next_task("nobody").is_none());
    }
}
