//! Shared vocabulary: curricula, stories, question scripts, expressive
//! banks and the session log record.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::provider::SafetyCategory;
use crate::session::{Intent, SessionState, Strategy};
use crate::turn::EndReason;

/// Number of target words a curriculum carries.
pub const TARGET_WORDS_PER_CHILD: usize = 4;
pub const MIN_AGE_YEARS: u8 = 4;
pub const MAX_AGE_YEARS: u8 = 6;
pub const DEFAULT_DEPLOYMENT_DAYS: u32 = 8;

/// One failed invariant, addressed by the field it concerns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.field, self.message)
    }
}

/// Outcome of a structural check. Empty iff every invariant holds; the
/// `measured` list carries the values the checks looked at.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub measured: Vec<(String, String)>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violate(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation::new(field, message));
    }

    pub fn measure(&mut self, name: &str, value: impl ToString) {
        self.measured.push((name.to_string(), value.to_string()));
    }

    pub fn has_violation(&self, field_prefix: &str) -> bool {
        self.violations.iter().any(|v| v.field.starts_with(field_prefix))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Lowercase and strip leading/trailing punctuation. Internal hyphens and
/// apostrophes survive, so "self-control" stays a single token.
pub fn normalize_token(surface: &str) -> String {
    surface.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase()
}

/// A parent-selected vocabulary item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordTarget {
    pub word: String,
    #[serde(default)]
    pub child_friendly_definition: String,
    /// Accepted surface variants. The word itself always matches, listed or not.
    #[serde(default)]
    pub inflections: Vec<String>,
}

impl WordTarget {
    pub fn new(word: impl Into<String>) -> Self {
        let word = word.into();
        Self { inflections: alloc::vec![word.clone()], word, child_friendly_definition: String::new() }
    }

    pub fn with_inflections<I, S>(word: impl Into<String>, inflections: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut t = Self::new(word);
        t.inflections = inflections.into_iter().map(Into::into).collect();
        t
    }

    pub fn with_definition(mut self, definition: impl Into<String>) -> Self {
        self.child_friendly_definition = definition.into();
        self
    }

    /// Normalized accepted forms, word first, deduplicated.
    pub fn forms(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.inflections.len() + 1);
        for s in core::iter::once(&self.word).chain(self.inflections.iter()) {
            let n = normalize_token(s);
            if !n.is_empty() && !out.contains(&n) {
                out.push(n);
            }
        }
        out
    }

    pub fn key(&self) -> String {
        normalize_token(&self.word)
    }
}

/// True iff `surface` normalizes to one of the target's accepted forms.
pub fn normalize_word(surface: &str, target: &WordTarget) -> bool {
    let n = normalize_token(surface);
    !n.is_empty() && target.forms().contains(&n)
}

/// Whitespace tokens of `text` that match `target`.
pub fn count_matches(text: &str, target: &WordTarget) -> usize {
    let forms = target.forms();
    text.split_whitespace()
        .filter(|tok| {
            let n = normalize_token(tok);
            !n.is_empty() && forms.contains(&n)
        })
        .count()
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Whole-word, case-insensitive search for a (possibly multi-word) name.
pub fn mentions_name(text: &str, name: &str) -> bool {
    let needle: Vec<String> = name.split_whitespace().map(normalize_token).collect();
    if needle.is_empty() || needle.iter().all(String::is_empty) {
        return false;
    }
    let hay: Vec<String> = text.split_whitespace().map(normalize_token).collect();
    hay.windows(needle.len()).any(|w| w == needle.as_slice())
}

/// Child profile plus what the robot should teach them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChildCurriculum {
    pub child_id: String,
    pub display_name: String,
    pub age_years: u8,
    pub target_words: Vec<WordTarget>,
    pub themes: Vec<String>,
    #[serde(default = "default_days")]
    pub deployment_days: u32,
}

fn default_days() -> u32 {
    DEFAULT_DEPLOYMENT_DAYS
}

impl ChildCurriculum {
    pub fn word(&self, word: &str) -> Option<&WordTarget> {
        let key = normalize_token(word);
        self.target_words.iter().find(|w| w.key() == key)
    }
}

pub fn validate_curriculum(c: &ChildCurriculum) -> ValidationReport {
    let mut r = ValidationReport::default();
    if c.child_id.trim().is_empty() {
        r.violate("child_id", " is empty");
    }
    if c.display_name.trim().is_empty() {
        r.violate("display_name", " is empty");
    }
    if !(MIN_AGE_YEARS..=MAX_AGE_YEARS).contains(&c.age_years) {
        r.violate("age_years", format!("={}, expected {MIN_AGE_YEARS}..={MAX_AGE_YEARS}", c.age_years));
    }
    if c.target_words.len() != TARGET_WORDS_PER_CHILD {
        r.violate("target_words.count", format!("={}, expected {TARGET_WORDS_PER_CHILD}", c.target_words.len()));
    }
    for (i, w) in c.target_words.iter().enumerate() {
        let trimmed = w.word.trim();
        if trimmed.is_empty() || normalize_token(trimmed).is_empty() {
            r.violate(format!("target_words[{i}].word"), " is empty");
        } else if trimmed.split_whitespace().count() > 1 {
            r.violate(format!("target_words[{i}].word"), format!("={trimmed:?} is not a single lexical item"));
        }
    }
    for i in 0..c.target_words.len() {
        for j in (i + 1)..c.target_words.len() {
            let a = c.target_words[i].key();
            if !a.is_empty() && a == c.target_words[j].key() {
                r.violate("target_words.duplicate", format!("={a:?} at indices {i} and {j}"));
            }
        }
    }
    if c.themes.is_empty() {
        r.violate("themes.count", "=0, expected at least 1");
    }
    for (i, t) in c.themes.iter().enumerate() {
        if t.trim().is_empty() {
            r.violate(format!("themes[{i}]"), " is empty");
        } else if t.trim() != t {
            r.violate(format!("themes[{i}]"), format!("={t:?} is not trimmed"));
        }
    }
    if c.deployment_days == 0 {
        r.violate("deployment_days", "=0, expected at least 1");
    }
    r
}

/// Boundaries (byte offsets into the body) of the conflict and resolution
/// sections; exposition starts at 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArcMarkers {
    pub conflict: usize,
    pub resolution: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Story {
    pub story_id: String,
    pub theme: String,
    pub target: WordTarget,
    pub body: String,
    pub word_count: usize,
    pub target_occurrences: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arc_markers: Option<ArcMarkers>,
    /// Definition sentence supplied by the generator as a structured field.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub definition: Option<String>,
}

impl Story {
    pub fn new(story_id: impl Into<String>, theme: impl Into<String>, target: WordTarget, body: impl Into<String>) -> Self {
        let body = body.into();
        Self {
            story_id: story_id.into(),
            theme: theme.into(),
            word_count: word_count(&body),
            target_occurrences: count_matches(&body, &target),
            target,
            body,
            arc_markers: None,
            definition: None,
        }
    }

    /// Recompute the measured fields after the body changed.
    pub fn set_body(&mut self, body: impl Into<String>) {
        self.body = body.into();
        self.word_count = word_count(&self.body);
        self.target_occurrences = count_matches(&self.body, &self.target);
        self.arc_markers = None;
    }

    /// Body split into sentences (terminal `.`, `!` or `?`).
    pub fn sentences(&self) -> Vec<&str> {
        split_sentences(&self.body)
    }
}

pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let bytes = text.as_bytes();
    for (i, b) in bytes.iter().enumerate() {
        if matches!(b, b'.' | b'!' | b'?') {
            let end = if bytes.get(i + 1) == Some(&b'"') { i + 1 } else { i };
            if bytes.get(end + 1).is_none_or(|n| n.is_ascii_whitespace()) {
                let s = text[start..=end].trim();
                if !s.is_empty() {
                    out.push(s);
                }
                start = end + 1;
            }
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    Perception,
    Recall,
    Practice,
}

impl QuestionKind {
    pub const ORDER: [QuestionKind; 3] = [Self::Perception, Self::Recall, Self::Practice];

    pub fn followup_budget(self) -> u8 {
        match self {
            Self::Perception => 0,
            Self::Recall | Self::Practice => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Perception => "perception",
            Self::Recall => "recall",
            Self::Practice => "practice",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub kind: QuestionKind,
    pub text: String,
    pub followup_budget: u8,
}

impl Question {
    pub fn new(kind: QuestionKind, text: impl Into<String>) -> Self {
        Self { kind, text: text.into(), followup_budget: kind.followup_budget() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScriptError {
    #[error("expected exactly 3 questions, got {0}")]
    WrongCount(usize),
    #[error("question {index} is {found:?}, expected {expected:?}")]
    WrongOrder { index: usize, found: QuestionKind, expected: QuestionKind },
    #[error("question {index} has follow-up budget {found}, expected {expected}")]
    WrongBudget { index: usize, found: u8, expected: u8 },
    #[error("question {index} has empty text")]
    EmptyText { index: usize },
    #[error("recall question does not contain the target word {0:?}")]
    RecallMissingTarget(String),
}

/// The three post-story questions, always Perception, Recall, Practice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InteractionScript {
    pub story_id: String,
    questions: Vec<Question>,
}

impl InteractionScript {
    pub fn new(story_id: impl Into<String>, questions: Vec<Question>) -> Result<Self, ScriptError> {
        if questions.len() != 3 {
            return Err(ScriptError::WrongCount(questions.len()));
        }
        for (index, (q, expected)) in questions.iter().zip(QuestionKind::ORDER).enumerate() {
            if q.kind != expected {
                return Err(ScriptError::WrongOrder { index, found: q.kind, expected });
            }
            if q.followup_budget != expected.followup_budget() {
                return Err(ScriptError::WrongBudget { index, found: q.followup_budget, expected: expected.followup_budget() });
            }
            if q.text.trim().is_empty() {
                return Err(ScriptError::EmptyText { index });
            }
        }
        Ok(Self { story_id: story_id.into(), questions })
    }

    /// Build and additionally require the recall question to use the target word.
    pub fn for_target(story_id: impl Into<String>, questions: Vec<Question>, target: &WordTarget) -> Result<Self, ScriptError> {
        let s = Self::new(story_id, questions)?;
        s.check_recall(target)?;
        Ok(s)
    }

    pub fn check_recall(&self, target: &WordTarget) -> Result<(), ScriptError> {
        if count_matches(&self.recall().text, target) == 0 {
            return Err(ScriptError::RecallMissingTarget(target.word.clone()));
        }
        Ok(())
    }

    pub fn questions(&self) -> &[Question] {
        &self.questions
    }

    pub fn perception(&self) -> &Question {
        &self.questions[0]
    }

    pub fn recall(&self) -> &Question {
        &self.questions[1]
    }

    pub fn practice(&self) -> &Question {
        &self.questions[2]
    }
}

#[derive(Deserialize)]
struct RawScript {
    story_id: String,
    questions: Vec<Question>,
}

impl<'de> Deserialize<'de> for InteractionScript {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawScript::deserialize(d)?;
        InteractionScript::new(raw.story_id, raw.questions).map_err(serde::de::Error::custom)
    }
}

macro_rules! bank_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $s:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $s),+ }
            }

            pub fn parse(s: &str) -> Option<Self> {
                let s = s.trim();
                Self::ALL.iter().copied().find(|v| v.as_str().eq_ignore_ascii_case(s))
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

bank_enum!(
    /// Fixed bank of facial expressions the face renderer supports.
    FaceName {
        Neutral => "neutral",
        Happy => "happy",
        Surprised => "surprised",
        Sad => "sad",
        Curious => "curious",
        Excited => "excited",
        Sleepy => "sleepy",
        Thinking => "thinking",
    }
);

bank_enum!(
    /// Fixed bank of body gesture primitives.
    GestureName {
        Nod => "nod",
        HeadTilt => "head_tilt",
        WaveLeft => "wave_left",
        WaveRight => "wave_right",
        BothArmsUp => "both_arms_up",
        LeanIn => "lean_in",
        BaseTurnSmall => "base_turn_small",
        IdleSway => "idle_sway",
    }
);

bank_enum!(
    GestureTiming {
        Onset => "onset",
        Middle => "middle",
        End => "end",
    }
);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceExpression {
    pub name: FaceName,
    pub intensity: f64,
}

impl FaceExpression {
    pub fn new(name: FaceName, intensity: f64) -> Self {
        Self { name, intensity }
    }

    pub fn neutral() -> Self {
        Self { name: FaceName::Neutral, intensity: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GesturePrimitive {
    pub name: GestureName,
    pub timing: GestureTiming,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogKind {
    StateEnter,
    RobotUtterance,
    ChildUtterance,
    Strategy,
    ModerationReject,
    StoryStart,
    StoryEnd,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogPayload {
    StateEnter {
        state: SessionState,
    },
    RobotUtterance {
        text: String,
    },
    ChildUtterance {
        text: String,
        reason: EndReason,
        started_ms: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        intent: Option<Intent>,
    },
    Strategy {
        strategy: Strategy,
    },
    ModerationReject {
        attempt: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        category: Option<SafetyCategory>,
    },
    StoryStart {
        story_id: String,
        word: String,
        theme: String,
        /// 1-based position in the day's schedule.
        index: u32,
    },
    StoryEnd {
        story_id: String,
    },
    Error {
        message: String,
    },
}

impl LogPayload {
    pub fn kind(&self) -> LogKind {
        match self {
            Self::StateEnter { .. } => LogKind::StateEnter,
            Self::RobotUtterance { .. } => LogKind::RobotUtterance,
            Self::ChildUtterance { .. } => LogKind::ChildUtterance,
            Self::Strategy { .. } => LogKind::Strategy,
            Self::ModerationReject { .. } => LogKind::ModerationReject,
            Self::StoryStart { .. } => LogKind::StoryStart,
            Self::StoryEnd { .. } => LogKind::StoryEnd,
            Self::Error { .. } => LogKind::Error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLogEntry {
    pub t_ms: u64,
    #[serde(flatten)]
    pub payload: LogPayload,
}

impl SessionLogEntry {
    pub fn kind(&self) -> LogKind {
        self.payload.kind()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("log time went backwards: {t_ms} ms after {last_ms} ms")]
pub struct TimeRegression {
    pub t_ms: u64,
    pub last_ms: u64,
}

/// Append-only record of one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub child_id: String,
    pub day_index: u32,
    pub session_index: u32,
    /// Wall-clock session start, milliseconds since the Unix epoch.
    pub started_at_ms: u64,
    pub entries: Vec<SessionLogEntry>,
}

impl SessionLog {
    pub fn new(child_id: impl Into<String>, day_index: u32, session_index: u32, started_at_ms: u64) -> Self {
        Self { child_id: child_id.into(), day_index, session_index, started_at_ms, entries: Vec::new() }
    }

    pub fn push(&mut self, t_ms: u64, payload: LogPayload) -> Result<(), TimeRegression> {
        if let Some(last) = self.entries.last() {
            if t_ms < last.t_ms {
                return Err(TimeRegression { t_ms, last_ms: last.t_ms });
            }
        }
        self.entries.push(SessionLogEntry { t_ms, payload });
        Ok(())
    }

    pub fn check_monotone(&self) -> Result<(), TimeRegression> {
        for w in self.entries.windows(2) {
            if w[1].t_ms < w[0].t_ms {
                return Err(TimeRegression { t_ms: w[1].t_ms, last_ms: w[0].t_ms });
            }
        }
        Ok(())
    }

    pub fn count(&self, kind: LogKind) -> usize {
        self.entries.iter().filter(|e| e.kind() == kind).count()
    }

    pub fn states(&self) -> impl Iterator<Item = SessionState> + '_ {
        self.entries.iter().filter_map(|e| match e.payload {
            LogPayload::StateEnter { state } => Some(state),
            _ => None,
        })
    }

    pub fn duration_ms(&self) -> u64 {
        match (self.entries.first(), self.entries.last()) {
            (Some(a), Some(b)) => b.t_ms - a.t_ms,
            _ => 0,
        }
    }
}

/// Distinct normalized keys, used for duplicate checks.
pub(crate) fn distinct_keys<'a>(words: impl Iterator<Item = &'a WordTarget>) -> BTreeSet<String> {
    words.map(WordTarget::key).collect()
}
