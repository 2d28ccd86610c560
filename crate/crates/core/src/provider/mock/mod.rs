//! Deterministic stand-ins for the hosted services. Each mock is a pure
//! function of its configuration, its inputs and the request seed.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{
    AudioChunk, AudioHandle, ProviderError, SafetyCategory, SafetyClassifier, SafetyVerdict, SpeechSynthesizer, Synthesis, TemplateId,
    TextGenRequest, TextGenerator, TurnEndDetector, TurnEndSignal, VoiceParams, WordTimestamp,
};

mod behavior;
mod glossary;
mod plan;
mod story;

pub use glossary::glossary_definition;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockTextConfig {
    /// Probability that a response plan carries an unsafe phrase.
    pub plan_unsafe_rate: f64,
    /// Probability that an authored story carries an unsafe phrase.
    pub story_unsafe_rate: f64,
    /// Phrases injected when the mock misbehaves; each should trip the
    /// safety blocklist.
    pub unsafe_phrases: Vec<String>,
}

impl Default for MockTextConfig {
    fn default() -> Self {
        Self {
            plan_unsafe_rate: 0.0,
            story_unsafe_rate: 0.0,
            unsafe_phrases: ["You are so stupid.", "Let's go find a knife to play with!", "I hate you."]
                .into_iter()
                .map(String::from)
                .collect(),
        }
    }
}

/// Seeded template filler that answers every prompt template.
#[derive(Debug, Clone, Default)]
pub struct MockTextGen {
    pub config: MockTextConfig,
}

impl MockTextGen {
    pub fn new(config: MockTextConfig) -> Self {
        Self { config }
    }

    fn unsafe_phrase(&self, seed: u64) -> Option<&str> {
        let n = self.config.unsafe_phrases.len();
        (n > 0).then(|| self.config.unsafe_phrases[(crate::util::mix(seed) % n as u64) as usize].as_str())
    }
}

impl TextGenerator for MockTextGen {
    fn generate_text(&self, req: &TextGenRequest) -> Result<String, ProviderError> {
        req.validate()?;
        match req.template_id {
            TemplateId::StoryAuthoring => story::author(self, req),
            TemplateId::InteractionAuthoring => story::interactions(req),
            TemplateId::Segmentation => behavior::segment(req),
            TemplateId::CueExtraction => behavior::cues(req),
            TemplateId::BehaviorDescription => behavior::describe(req),
            TemplateId::ResponsePlan => plan::respond(self, req),
            TemplateId::PpvtItem => plan::ppvt(req),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockEntry {
    pub token: String,
    pub category: SafetyCategory,
}

/// Case-insensitive substring blocklist.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlocklistSafety {
    pub entries: Vec<BlockEntry>,
}

impl BlocklistSafety {
    pub fn new(entries: Vec<BlockEntry>) -> Self {
        Self { entries }
    }

    pub fn default_entries() -> Vec<BlockEntry> {
        use SafetyCategory::*;
        [
            ("knife", DangerousInstructions),
            ("weapon", Violence),
            ("blood", Violence),
            ("kill", Violence),
            ("poison", DangerousInstructions),
            ("suicide", SelfHarm),
            ("hurt yourself", SelfHarm),
            ("naked", Sexual),
            ("stupid", Hate),
            ("hate you", Hate),
            ("idiot", Hate),
        ]
        .into_iter()
        .map(|(token, category)| BlockEntry { token: token.to_string(), category })
        .collect()
    }

    /// First entry found in `text`, if any.
    pub fn find(&self, text: &str) -> Option<&BlockEntry> {
        let lower = text.to_lowercase();
        self.entries.iter().find(|e| !e.token.is_empty() && lower.contains(&e.token.to_lowercase()))
    }
}

impl Default for BlocklistSafety {
    fn default() -> Self {
        Self::new(Self::default_entries())
    }
}

impl SafetyClassifier for BlocklistSafety {
    fn classify_safety(&self, text: &str) -> Result<SafetyVerdict, ProviderError> {
        Ok(match self.find(text) {
            Some(e) => SafetyVerdict::unsafe_because(e.category),
            None => SafetyVerdict::SAFE,
        })
    }
}

/// Fixed-rate speech timing model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockSpeech {
    pub ms_per_word: u64,
    pub words_per_chunk: usize,
    pub first_chunk_latency_ms: u64,
    pub synth_ms_per_word: u64,
    pub finalize_ms: u64,
}

impl Default for MockSpeech {
    fn default() -> Self {
        Self { ms_per_word: 450, words_per_chunk: 8, first_chunk_latency_ms: 200, synth_ms_per_word: 15, finalize_ms: 20 }
    }
}

impl SpeechSynthesizer for MockSpeech {
    fn synthesize_speech(&self, text: &str, voice: &VoiceParams) -> Result<Synthesis, ProviderError> {
        let words: Vec<&str> = text.split_whitespace().collect();
        if words.is_empty() {
            return Err(ProviderError::Precondition("cannot synthesize empty text".to_string()));
        }
        let rate = if voice.rate.is_finite() && voice.rate > 0.0 { voice.rate } else { 1.0 };
        let per_word = ((self.ms_per_word as f64 / rate) + 0.5) as u64;
        let per_word = per_word.max(1);
        let word_timestamps: Vec<WordTimestamp> = words
            .iter()
            .enumerate()
            .map(|(i, w)| WordTimestamp { word: (*w).to_string(), start_ms: i as u64 * per_word, end_ms: (i as u64 + 1) * per_word })
            .collect();
        let per_chunk = self.words_per_chunk.max(1);
        let mut chunks = Vec::new();
        let mut boundaries = Vec::new();
        for (index, start_word) in (0..words.len()).step_by(per_chunk).enumerate() {
            let end_word = (start_word + per_chunk).min(words.len());
            boundaries.push(start_word as u64 * per_word);
            chunks.push(AudioChunk {
                index,
                start_ms: start_word as u64 * per_word,
                end_ms: end_word as u64 * per_word,
                ready_at_ms: self.first_chunk_latency_ms + self.synth_ms_per_word * end_word as u64,
            });
        }
        let full_ready_ms = chunks.last().map_or(0, |c| c.ready_at_ms) + self.finalize_ms.max(1);
        Ok(Synthesis {
            handle: AudioHandle { duration_ms: words.len() as u64 * per_word, chunk_boundaries_ms: boundaries, word_timestamps },
            chunks,
            full_ready_ms,
        })
    }
}

/// Complete iff the transcript ends with terminal punctuation or is one of
/// a closed set of short answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleTurnEndDetector {
    pub closed_answers: Vec<String>,
}

impl Default for RuleTurnEndDetector {
    fn default() -> Self {
        Self {
            closed_answers: ["yes", "no", "yeah", "yep", "nope", "okay", "ok", "sure", "maybe", "yes please", "no thanks", "no thank you"]
                .into_iter()
                .map(String::from)
                .collect(),
        }
    }
}

impl TurnEndDetector for RuleTurnEndDetector {
    fn detect_turn_end(&self, running_transcript: &str, _ms_since_last_voice: u64) -> TurnEndSignal {
        let t = running_transcript.trim();
        if t.ends_with(['.', '!', '?']) {
            return TurnEndSignal::Complete;
        }
        let words: Vec<String> = t.split_whitespace().map(crate::domain::normalize_token).collect();
        let joined = words.join(" ");
        if !joined.is_empty() && self.closed_answers.iter().any(|a| a.eq_ignore_ascii_case(&joined)) {
            TurnEndSignal::Complete
        } else {
            TurnEndSignal::Incomplete
        }
    }
}

/// Provider that fails every call with `Unavailable`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Unavailable;

impl TextGenerator for Unavailable {
    fn generate_text(&self, _req: &TextGenRequest) -> Result<String, ProviderError> {
        Err(ProviderError::Unavailable("text generation offline".to_string()))
    }
}

impl SafetyClassifier for Unavailable {
    fn classify_safety(&self, _text: &str) -> Result<SafetyVerdict, ProviderError> {
        Err(ProviderError::Unavailable("safety classifier offline".to_string()))
    }
}

impl SpeechSynthesizer for Unavailable {
    fn synthesize_speech(&self, _text: &str, _voice: &VoiceParams) -> Result<Synthesis, ProviderError> {
        Err(ProviderError::Unavailable("speech synthesis offline".to_string()))
    }
}
