//! Structured output schemas for each prompt template. Generators reply with
//! one JSON document per call; callers parse into these types and treat a
//! parse failure as `MalformedOutput`.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::behavior::{Channel, CueKind};
use crate::domain::{ArcMarkers, QuestionKind};

/// Template variable names.
pub mod var {
    pub const THEME: &str = "theme";
    pub const WORD: &str = "word";
    pub const DEFINITION: &str = "definition";
    pub const CHILD_NAME: &str = "child_name";
    pub const WORD_TARGET: &str = "word_target";
    pub const MIN_OCCURRENCES: &str = "min_occurrences";
    pub const STORY: &str = "story";
    pub const WORDS: &str = "words";
    pub const SEGMENTS: &str = "segments";
    pub const SEGMENT: &str = "segment";
    pub const TARGET_FORMS: &str = "target_forms";
    pub const WORDS_PER_CUE: &str = "words_per_cue";
    pub const CUES: &str = "cues";
    pub const PRIOR: &str = "prior";
    pub const QUESTION_KIND: &str = "question_kind";
    pub const PHASE: &str = "phase";
    pub const CHILD_TEXT: &str = "child_text";
    pub const END_REASON: &str = "end_reason";
    pub const TARGET_WORD: &str = "target_word";
    pub const FOLLOWUP_INDEX: &str = "followup_index";
    pub const MEMORY: &str = "memory";
}

pub fn parse<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T, super::ProviderError> {
    serde_json::from_str(text).map_err(|e| super::ProviderError::MalformedOutput(alloc::format!("{e}")))
}

pub fn render<T: Serialize>(value: &T) -> String {
    // Serializing plain data structs cannot fail.
    serde_json::to_string(value).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoryDraft {
    pub body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub definition: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arc: Option<ArcMarkers>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionDraft {
    pub kind: QuestionKind,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptDraft {
    pub questions: Vec<QuestionDraft>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentDraft {
    pub first: usize,
    pub last: usize,
    pub palette: Vec<String>,
    pub role: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentationDraft {
    pub segments: Vec<SegmentDraft>,
}

/// Segment bounds as sent to the cue extractor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentBounds {
    pub first: usize,
    pub last: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CueDraft {
    pub segment: usize,
    pub word: usize,
    pub kind: CueKind,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CuesDraft {
    pub cues: Vec<CueDraft>,
}

/// Segment context handed to the behavior describer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentContext {
    pub index: usize,
    pub start_ms: u64,
    pub end_ms: u64,
    pub palette: Vec<String>,
    pub role: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CueContext {
    pub kind: CueKind,
    pub word: String,
    pub t_ms: u64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptionDraft {
    pub t_ms: u64,
    pub channel: Channel,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptionsDraft {
    pub descriptions: Vec<DescriptionDraft>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanItemDraft {
    pub text: String,
    pub face: String,
    pub intensity: f64,
    pub gesture: String,
    pub timing: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDraft {
    pub strategy: String,
    pub items: Vec<PlanItemDraft>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PpvtDraft {
    pub prompt: String,
    pub options: Vec<String>,
    pub correct_index: usize,
}

/// One line of conversation memory as shown to the planner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryLine {
    pub speaker: String,
    pub text: String,
}
