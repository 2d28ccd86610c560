//! Durable story database: curricula, day schedules, delivery state,
//! session logs and caregiver diary entries.
//!
//! Every mutation is one JSON line appended to `journal.jsonl` and synced
//! before it is applied in memory. Opening a store replays the journal; a
//! torn final line from a crash is discarded, so the state is always that
//! of some prefix of completed operations.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use ella_core::pipeline::{DaySchedule, StoryPackage};
use ella_core::{validate_curriculum, ChildCurriculum, SessionLog};
use serde::{Deserialize, Serialize};

pub const JOURNAL: &str = "journal.jsonl";
pub const DAILY_CAP: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store io at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("journal line {line} is corrupt: {message}")]
    Corrupt { line: usize, message: String },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("day {day} of {child_id} already has a different schedule")]
    ConflictingSchedule { child_id: String, day: u32 },
    #[error("story {0} was already delivered")]
    AlreadyDelivered(String),
    #[error("day {day} already has {cap} delivered stories")]
    DailyCapReached { day: u32, cap: usize },
    #[error("validation failed: {0}")]
    ValidationFailed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryState {
    pub child_id: String,
    pub day_index: u32,
    pub delivered_story_ids: Vec<String>,
    pub last_session_end_ms: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initiator {
    Child,
    Parent,
    Routine,
    Sibling,
    Friend,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Presence {
    Parent,
    Sibling,
    ChildAlone,
    OtherCaregiver,
    Friend,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Affect {
    Neutral,
    Excited,
    Frustrated,
    Hesitant,
    WantsMore,
    Happy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonUseReason {
    Time,
    Interest,
    Fatigue,
    Technical,
}

/// A caregiver's daily diary record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiaryEntry {
    pub child_id: String,
    pub day_index: u32,
    pub initiated_by: Initiator,
    pub present: BTreeSet<Presence>,
    pub affect: Affect,
    pub target_words_used_outside: bool,
    #[serde(default)]
    pub notes: String,
    #[serde(default)]
    pub non_use_reason: Option<NonUseReason>,
}

impl DiaryEntry {
    pub fn from_json(text: &str) -> Result<Self, StoreError> {
        serde_json::from_str(text).map_err(|e| StoreError::ValidationFailed(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        if self.child_id.trim().is_empty() {
            return Err(StoreError::ValidationFailed("child_id is empty".into()));
        }
        if self.day_index == 0 {
            return Err(StoreError::ValidationFailed("day_index starts at 1".into()));
        }
        if self.present.contains(&Presence::ChildAlone) && self.present.len() > 1 {
            return Err(StoreError::ValidationFailed("child_alone excludes other people present".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LogFilter {
    pub day: Option<u32>,
    /// Inclusive bounds on the session start time.
    pub from_ms: Option<u64>,
    pub to_ms: Option<u64>,
}

impl LogFilter {
    fn accepts(&self, log: &SessionLog) -> bool {
        self.day.is_none_or(|d| d == log.day_index)
            && self.from_ms.is_none_or(|t| log.started_at_ms >= t)
            && self.to_ms.is_none_or(|t| log.started_at_ms <= t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum Op {
    PutCurriculum { curriculum: ChildCurriculum },
    PutSchedules { child_id: String, days: Vec<DaySchedule> },
    ReplacePackage { child_id: String, day: u32, package: Box<StoryPackage> },
    MarkDelivered { child_id: String, day: u32, story_id: String, at_ms: u64 },
    AppendLog { log: SessionLog },
    Diary { entry: DiaryEntry },
}

type DayKey = (String, u32);

#[derive(Debug, Default)]
struct State {
    curricula: BTreeMap<String, ChildCurriculum>,
    schedules: BTreeMap<DayKey, DaySchedule>,
    delivery: BTreeMap<DayKey, DeliveryState>,
    logs: BTreeMap<String, Vec<SessionLog>>,
    diary: BTreeMap<DayKey, DiaryEntry>,
}

impl State {
    fn apply(&mut self, op: Op) {
        match op {
            Op::PutCurriculum { curriculum } => {
                self.curricula.insert(curriculum.child_id.clone(), curriculum);
            }
            Op::PutSchedules { child_id, days } => {
                for d in days {
                    let key = (child_id.clone(), d.day_index);
                    self.delivery.entry(key.clone()).or_insert_with(|| DeliveryState {
                        child_id: child_id.clone(),
                        day_index: d.day_index,
                        delivered_story_ids: Vec::new(),
                        last_session_end_ms: None,
                    });
                    self.schedules.insert(key, d);
                }
            }
            Op::ReplacePackage { child_id, day, package } => {
                if let Some(s) = self.schedules.get_mut(&(child_id, day)) {
                    if let Some(slot) = s.stories.iter_mut().find(|p| p.story.story_id == package.story.story_id) {
                        *slot = *package;
                    }
                }
            }
            Op::MarkDelivered { child_id, day, story_id, at_ms } => {
                if let Some(d) = self.delivery.get_mut(&(child_id, day)) {
                    d.delivered_story_ids.push(story_id);
                    d.last_session_end_ms = Some(at_ms);
                }
            }
            Op::AppendLog { log } => self.logs.entry(log.child_id.clone()).or_default().push(log),
            Op::Diary { entry } => {
                self.diary.insert((entry.child_id.clone(), entry.day_index), entry);
            }
        }
    }
}

fn normalized(d: &DaySchedule) -> DaySchedule {
    DaySchedule { delivered_count: 0, ..d.clone() }
}

pub struct FileStore {
    path: PathBuf,
    file: File,
    state: State,
}

impl std::fmt::Debug for FileStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FileStore").field("path", &self.path).finish_non_exhaustive()
    }
}

impl FileStore {
    /// Open or create the store in `dir`, replaying its journal.
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        let io = |source| StoreError::Io { path: dir.to_path_buf(), source };
        fs::create_dir_all(dir).map_err(io)?;
        let path = dir.join(JOURNAL);
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(&path).map_err(io)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(io)?;
        let mut state = State::default();
        let mut good = 0usize;
        let mut line_no = 0;
        while good < bytes.len() {
            line_no += 1;
            let Some(nl) = bytes[good..].iter().position(|b| *b == b'\n') else {
                // Torn tail: the write never completed.
                break;
            };
            let line = &bytes[good..good + nl];
            match serde_json::from_slice::<Op>(line) {
                Ok(op) => state.apply(op),
                Err(e) => {
                    let is_last = good + nl + 1 >= bytes.len();
                    if !is_last {
                        return Err(StoreError::Corrupt { line: line_no, message: e.to_string() });
                    }
                    break;
                }
            }
            good += nl + 1;
        }
        if good < bytes.len() {
            file.set_len(good as u64).map_err(io)?;
            file.seek(SeekFrom::End(0)).map_err(io)?;
        }
        Ok(Self { path, file, state })
    }

    pub fn journal_path(&self) -> &Path {
        &self.path
    }

    fn commit(&mut self, op: Op) -> Result<(), StoreError> {
        let mut line = serde_json::to_vec(&op).expect("ops serialize");
        line.push(b'\n');
        let io = |source| StoreError::Io { path: self.path.clone(), source };
        self.file.write_all(&line).map_err(io)?;
        self.file.sync_data().map_err(io)?;
        self.state.apply(op);
        Ok(())
    }

    pub fn put_curriculum(&mut self, c: &ChildCurriculum) -> Result<(), StoreError> {
        let report = validate_curriculum(c);
        if !report.is_empty() {
            return Err(StoreError::ValidationFailed(report.to_string()));
        }
        if self.state.curricula.get(&c.child_id) == Some(c) {
            return Ok(());
        }
        self.commit(Op::PutCurriculum { curriculum: c.clone() })
    }

    pub fn curriculum(&self, child_id: &str) -> Result<&ChildCurriculum, StoreError> {
        self.state.curricula.get(child_id).ok_or_else(|| StoreError::NotFound(format!("curriculum for {child_id}")))
    }

    /// Store a child's day schedules. Re-putting identical days is a no-op;
    /// any day whose content differs from what is stored is a conflict,
    /// and then nothing is written.
    pub fn put_schedule(&mut self, child_id: &str, days: &[DaySchedule]) -> Result<(), StoreError> {
        let mut fresh = Vec::new();
        for d in days {
            if d.child_id != child_id {
                return Err(StoreError::ValidationFailed(format!("day {} belongs to {}", d.day_index, d.child_id)));
            }
            let report = d.validate();
            if !report.is_empty() {
                return Err(StoreError::ValidationFailed(format!("day {}: {report}", d.day_index)));
            }
            match self.state.schedules.get(&(child_id.to_string(), d.day_index)) {
                Some(existing) if *existing == normalized(d) => {}
                Some(_) => return Err(StoreError::ConflictingSchedule { child_id: child_id.to_string(), day: d.day_index }),
                None => fresh.push(normalized(d)),
            }
        }
        if fresh.is_empty() {
            return Ok(());
        }
        self.commit(Op::PutSchedules { child_id: child_id.to_string(), days: fresh })
    }

    fn day(&self, child_id: &str, day: u32) -> Result<(&DaySchedule, &DeliveryState), StoreError> {
        let key = (child_id.to_string(), day);
        match (self.state.schedules.get(&key), self.state.delivery.get(&key)) {
            (Some(s), Some(d)) => Ok((s, d)),
            _ => Err(StoreError::NotFound(format!("day {day} of {child_id}"))),
        }
    }

    /// Every package of the day regardless of status, for review.
    pub fn all_stories(&self, child_id: &str, day: u32) -> Result<(Vec<StoryPackage>, DeliveryState), StoreError> {
        let (s, d) = self.day(child_id, day)?;
        Ok((s.stories.clone(), d.clone()))
    }

    pub fn days(&self, child_id: &str) -> Vec<u32> {
        self.state.schedules.keys().filter(|(c, _)| c == child_id).map(|(_, d)| *d).collect()
    }

    /// Undelivered approved packages in schedule order.
    pub fn fetch_day(&self, child_id: &str, day: u32) -> Result<(Vec<StoryPackage>, DeliveryState), StoreError> {
        let (s, d) = self.day(child_id, day)?;
        let remaining =
            s.stories.iter().filter(|p| p.is_approved() && !d.delivered_story_ids.contains(&p.story.story_id)).cloned().collect();
        Ok((remaining, d.clone()))
    }

    /// The day as the session engine consumes it: delivered stories first
    /// in delivery order, then the rest in schedule order.
    pub fn day_schedule(&self, child_id: &str, day: u32) -> Result<DaySchedule, StoreError> {
        let (s, d) = self.day(child_id, day)?;
        let find = |id: &String| s.stories.iter().find(|p| &p.story.story_id == id).cloned();
        let mut stories: Vec<StoryPackage> = d.delivered_story_ids.iter().filter_map(find).collect();
        stories.extend(s.stories.iter().filter(|p| !d.delivered_story_ids.contains(&p.story.story_id)).cloned());
        Ok(DaySchedule { child_id: s.child_id.clone(), day_index: day, stories, delivered_count: d.delivered_story_ids.len() as u32 })
    }

    pub fn mark_delivered(&mut self, child_id: &str, day: u32, story_id: &str, at_ms: u64) -> Result<DeliveryState, StoreError> {
        let (s, d) = self.day(child_id, day)?;
        if d.delivered_story_ids.iter().any(|id| id == story_id) {
            return Err(StoreError::AlreadyDelivered(story_id.to_string()));
        }
        if d.delivered_story_ids.len() >= DAILY_CAP {
            return Err(StoreError::DailyCapReached { day, cap: DAILY_CAP });
        }
        if !s.stories.iter().any(|p| p.story.story_id == story_id) {
            return Err(StoreError::NotFound(format!("story {story_id} on day {day} of {child_id}")));
        }
        self.commit(Op::MarkDelivered { child_id: child_id.to_string(), day, story_id: story_id.to_string(), at_ms })?;
        Ok(self.day(child_id, day)?.1.clone())
    }

    /// Swap in a reviewed package; delivered stories are frozen.
    pub fn replace_package(&mut self, child_id: &str, day: u32, package: &StoryPackage) -> Result<(), StoreError> {
        let (s, d) = self.day(child_id, day)?;
        let id = &package.story.story_id;
        let Some(old) = s.stories.iter().find(|p| &p.story.story_id == id) else {
            return Err(StoreError::NotFound(format!("story {id} on day {day} of {child_id}")));
        };
        if d.delivered_story_ids.contains(id) {
            return Err(StoreError::AlreadyDelivered(id.clone()));
        }
        if old.word() != package.word() || package.day != day {
            return Err(StoreError::ValidationFailed(format!("story {id} must keep its word and day")));
        }
        self.commit(Op::ReplacePackage { child_id: child_id.to_string(), day, package: Box::new(package.clone()) })
    }

    pub fn append_log(&mut self, log: &SessionLog) -> Result<(), StoreError> {
        if log.child_id.trim().is_empty() {
            return Err(StoreError::ValidationFailed("log has no child_id".into()));
        }
        log.check_monotone().map_err(|e| StoreError::ValidationFailed(e.to_string()))?;
        self.commit(Op::AppendLog { log: log.clone() })
    }

    pub fn query_logs(&self, child_id: &str, filter: &LogFilter) -> Vec<SessionLog> {
        self.state.logs.get(child_id).map_or_else(Vec::new, |ls| ls.iter().filter(|l| filter.accepts(l)).cloned().collect())
    }

    /// One entry per (child, day); a later entry replaces an earlier one.
    pub fn record_diary(&mut self, entry: &DiaryEntry) -> Result<(), StoreError> {
        entry.validate()?;
        self.commit(Op::Diary { entry: entry.clone() })
    }

    pub fn diary(&self, child_id: &str) -> Vec<DiaryEntry> {
        self.state.diary.iter().filter(|((c, _), _)| c == child_id).map(|(_, e)| e.clone()).collect()
    }
}
