//! Interfaces to the generative and recognition services the engine relies
//! on, plus deterministic in-process implementations.
//!
//! Every call is independent: implementations hold configuration only, so a
//! single instance can be shared by concurrent sessions.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

mod mock;
mod scripted;
pub mod wire;

pub use mock::{
    glossary_definition, BlockEntry, BlocklistSafety, MockSpeech, MockTextConfig, MockTextGen, RuleTurnEndDetector, Unavailable,
};
pub use scripted::ScriptedTextGen;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
pub enum ProviderError {
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("malformed provider output: {0}")]
    MalformedOutput(String),
    #[error("request for {template:?} is missing variable {name:?}")]
    MissingVariable { template: TemplateId, name: String },
    #[error("precondition failed: {0}")]
    Precondition(String),
}

impl ProviderError {
    pub fn is_unavailable(&self) -> bool {
        matches!(self, Self::Unavailable(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    StoryAuthoring,
    InteractionAuthoring,
    Segmentation,
    CueExtraction,
    BehaviorDescription,
    ResponsePlan,
    PpvtItem,
}

impl TemplateId {
    pub const ALL: [TemplateId; 7] = [
        Self::StoryAuthoring,
        Self::InteractionAuthoring,
        Self::Segmentation,
        Self::CueExtraction,
        Self::BehaviorDescription,
        Self::ResponsePlan,
        Self::PpvtItem,
    ];

    /// Placeholders the template's prompt requires.
    pub fn required_variables(self) -> &'static [&'static str] {
        use wire::var::*;
        match self {
            Self::StoryAuthoring => &[THEME, WORD, DEFINITION, CHILD_NAME, WORD_TARGET, MIN_OCCURRENCES],
            Self::InteractionAuthoring => &[STORY, WORD, THEME],
            Self::Segmentation => &[WORDS],
            Self::CueExtraction => &[WORDS, SEGMENTS, TARGET_FORMS, WORDS_PER_CUE],
            Self::BehaviorDescription => &[SEGMENT, CUES, PRIOR],
            Self::ResponsePlan => &[QUESTION_KIND, PHASE, CHILD_TEXT, END_REASON, TARGET_WORD, THEME, FOLLOWUP_INDEX, MEMORY],
            Self::PpvtItem => &[WORD],
        }
    }
}

/// A prompt-template invocation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextGenRequest {
    pub template_id: TemplateId,
    pub variables: BTreeMap<String, String>,
    pub seed: u64,
}

impl TextGenRequest {
    pub fn new(template_id: TemplateId, seed: u64) -> Self {
        Self { template_id, variables: BTreeMap::new(), seed }
    }

    pub fn var(mut self, name: &str, value: impl Into<String>) -> Self {
        self.variables.insert(name.to_string(), value.into());
        self
    }

    pub fn get(&self, name: &str) -> &str {
        self.variables.get(name).map(String::as_str).unwrap_or("")
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        for name in self.template_id.required_variables() {
            if !self.variables.contains_key(*name) {
                return Err(ProviderError::MissingVariable { template: self.template_id, name: (*name).to_string() });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SafetyCategory {
    Violence,
    SelfHarm,
    Sexual,
    Hate,
    DangerousInstructions,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafetyVerdict {
    pub safe: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<SafetyCategory>,
}

impl SafetyVerdict {
    pub const SAFE: SafetyVerdict = SafetyVerdict { safe: true, category: None };

    pub fn unsafe_because(category: SafetyCategory) -> Self {
        Self { safe: false, category: Some(category) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordTimestamp {
    pub word: String,
    pub start_ms: u64,
    pub end_ms: u64,
}

/// Synthesized audio, described by timing only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioHandle {
    pub duration_ms: u64,
    pub chunk_boundaries_ms: Vec<u64>,
    pub word_timestamps: Vec<WordTimestamp>,
}

impl AudioHandle {
    pub fn validate(&self) -> Result<(), ProviderError> {
        let bad = |m: &str| Err(ProviderError::MalformedOutput(m.to_string()));
        if self.duration_ms == 0 {
            return bad("audio duration is zero");
        }
        if self.chunk_boundaries_ms.first() != Some(&0) {
            return bad("chunk boundaries must start at 0");
        }
        if self.chunk_boundaries_ms.windows(2).any(|w| w[1] < w[0]) {
            return bad("chunk boundaries decrease");
        }
        if self.chunk_boundaries_ms.last().is_some_and(|&b| b > self.duration_ms) {
            return bad("chunk boundary beyond audio duration");
        }
        let mut last = 0;
        for w in &self.word_timestamps {
            if w.start_ms < last || w.end_ms < w.start_ms || w.end_ms > self.duration_ms {
                return bad("word timestamps out of order or out of range");
            }
            last = w.start_ms;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoiceParams {
    pub voice: String,
    /// Speaking-rate multiplier; 1.0 is the provider default.
    pub rate: f64,
}

impl Default for VoiceParams {
    fn default() -> Self {
        Self { voice: "ella".to_string(), rate: 1.0 }
    }
}

/// One streamed piece of synthesized audio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioChunk {
    pub index: usize,
    pub start_ms: u64,
    pub end_ms: u64,
    /// Provider time, relative to the request, at which the chunk was ready.
    pub ready_at_ms: u64,
}

/// Audio handle plus the virtual schedule of its chunk stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Synthesis {
    pub handle: AudioHandle,
    pub chunks: Vec<AudioChunk>,
    /// Provider time, relative to the request, when the full handle existed.
    pub full_ready_ms: u64,
}

impl Synthesis {
    pub fn first_chunk_ready_ms(&self) -> u64 {
        self.chunks.first().map_or(self.full_ready_ms, |c| c.ready_at_ms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnEndSignal {
    Complete,
    Incomplete,
}

pub trait TextGenerator: Send + Sync {
    fn generate_text(&self, req: &TextGenRequest) -> Result<String, ProviderError>;
}

pub trait SafetyClassifier: Send + Sync {
    fn classify_safety(&self, text: &str) -> Result<SafetyVerdict, ProviderError>;
}

pub trait SpeechSynthesizer: Send + Sync {
    fn synthesize_speech(&self, text: &str, voice: &VoiceParams) -> Result<Synthesis, ProviderError>;
}

pub trait TurnEndDetector: Send + Sync {
    fn detect_turn_end(&self, running_transcript: &str, ms_since_last_voice: u64) -> TurnEndSignal;
}

/// The set of services one engine instance talks to.
#[derive(Clone)]
pub struct Providers {
    pub text: Arc<dyn TextGenerator>,
    pub safety: Arc<dyn SafetyClassifier>,
    pub speech: Arc<dyn SpeechSynthesizer>,
    pub turn_end: Arc<dyn TurnEndDetector>,
}

impl Providers {
    /// All-mock bindings with default settings.
    pub fn mock() -> Self {
        Self {
            text: Arc::new(MockTextGen::default()),
            safety: Arc::new(BlocklistSafety::default()),
            speech: Arc::new(MockSpeech::default()),
            turn_end: Arc::new(RuleTurnEndDetector::default()),
        }
    }

    pub fn with_text(mut self, text: Arc<dyn TextGenerator>) -> Self {
        self.text = text;
        self
    }

    pub fn with_safety(mut self, safety: Arc<dyn SafetyClassifier>) -> Self {
        self.safety = safety;
        self
    }

    pub fn with_speech(mut self, speech: Arc<dyn SpeechSynthesizer>) -> Self {
        self.speech = speech;
        self
    }

    pub fn with_turn_end(mut self, turn_end: Arc<dyn TurnEndDetector>) -> Self {
        self.turn_end = turn_end;
        self
    }
}

impl core::fmt::Debug for Providers {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str("Providers { .. }")
    }
}
