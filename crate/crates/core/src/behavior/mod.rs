//! Expressive behavior synthesis for story narration.
//!
//! A word-timestamped transcript flows through four generator-backed steps
//! (segmentation with palettes, cue extraction, sequential behavior
//! description) and two deterministic compilers: one producing face
//! keyframes, one producing staged trajectories for the five body joints.
//! Generator output is validated at every step and regenerated with a new
//! seed when malformed; the compilers clamp rather than reject wherever a
//! request can be made safe.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::{normalize_token, FaceExpression, Story};
use crate::provider::wire::{
    self, var, CueContext, CuesDraft, DescriptionDraft, DescriptionsDraft, SegmentBounds, SegmentContext, SegmentationDraft,
};
use crate::provider::{AudioHandle, ProviderError, TemplateId, TextGenRequest, TextGenerator};
use crate::util::derive_seed;

mod compile;
mod profile;

pub use compile::{compile_body, compile_face, validate_face, validate_trajectory, FaceCompileReport};
pub use profile::{CannedStage, FaceDef, GestureDef, JointLimits, JointRange, RobotProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CueKind {
    Emotion,
    Action,
    Emphasis,
    Spatial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Face,
    Body,
}

/// The five actuated joints, in wire order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Joint {
    HeadYaw,
    HeadPitch,
    ArmLeft,
    ArmRight,
    BaseRotation,
}

impl Joint {
    pub const ALL: [Joint; 5] = [Self::HeadYaw, Self::HeadPitch, Self::ArmLeft, Self::ArmRight, Self::BaseRotation];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::HeadYaw => "head_yaw",
            Self::HeadPitch => "head_pitch",
            Self::ArmLeft => "arm_left",
            Self::ArmRight => "arm_right",
            Self::BaseRotation => "base_rotation",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|j| j.as_str().eq_ignore_ascii_case(s.trim()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub index: usize,
    /// Inclusive word index range.
    pub word_span: [usize; 2],
    /// `[start, end)` in audio milliseconds.
    pub time_span_ms: [u64; 2],
    pub palette: Vec<String>,
    pub narrative_role: String,
}

impl Segment {
    pub fn word_len(&self) -> usize {
        self.word_span[1] - self.word_span[0] + 1
    }

    pub fn contains_word(&self, idx: usize) -> bool {
        (self.word_span[0]..=self.word_span[1]).contains(&idx)
    }

    pub fn contains_time(&self, t: u64) -> bool {
        (self.time_span_ms[0]..=self.time_span_ms[1]).contains(&t)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GestureCue {
    pub segment_index: usize,
    pub word_idx: usize,
    pub cue_kind: CueKind,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehaviorDescription {
    pub segment_index: usize,
    pub t_ms: u64,
    pub channel: Channel,
    pub description: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub t_ms: u64,
    pub expression: FaceExpression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TransitionRule {
    #[default]
    LinearIntensity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceKeyframeProgram {
    pub keyframes: Vec<Keyframe>,
    #[serde(default)]
    pub transition_rule: TransitionRule,
}

impl FaceKeyframeProgram {
    pub fn neutral() -> Self {
        Self {
            keyframes: alloc::vec![Keyframe { t_ms: 0, expression: FaceExpression::neutral() }],
            transition_rule: TransitionRule::LinearIntensity,
        }
    }
}

/// One timed move of all five joints from `from_deg` to `target_deg`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub t_start_ms: u64,
    pub duration_ms: u64,
    pub from_deg: [f64; 5],
    pub target_deg: [f64; 5],
}

impl Stage {
    pub fn end_ms(&self) -> u64 {
        self.t_start_ms + self.duration_ms
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTrajectory {
    pub joints: [Joint; 5],
    pub rest_deg: [f64; 5],
    pub stages: Vec<Stage>,
}

impl JointTrajectory {
    pub fn empty(rest_deg: [f64; 5]) -> Self {
        Self { joints: Joint::ALL, rest_deg, stages: Vec::new() }
    }

    pub fn end_ms(&self) -> u64 {
        self.stages.last().map_or(0, Stage::end_ms)
    }

    pub fn push_to(&mut self, t_start_ms: u64, duration_ms: u64, target_deg: [f64; 5]) {
        let from_deg = self.stages.last().map_or(self.rest_deg, |s| s.target_deg);
        self.stages.push(Stage { t_start_ms, duration_ms, from_deg, target_deg });
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BehaviorError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("{step} output still malformed after {attempts} attempts: {last}")]
    Exhausted { step: &'static str, attempts: u32, last: String },
    #[error("audio has {audio} word timestamps but the story has {story} words")]
    TranscriptMismatch { audio: usize, story: usize },
    #[error("compilation failed: {0}")]
    CompilationFailed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BehaviorConfig {
    pub words_per_cue: usize,
    pub retry_bound: u32,
}

impl Default for BehaviorConfig {
    fn default() -> Self {
        Self { words_per_cue: 10, retry_bound: 3 }
    }
}

/// Everything the synthesis pipeline produced for one story.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorProgram {
    pub segments: Vec<Segment>,
    pub cues: Vec<GestureCue>,
    pub descriptions: Vec<BehaviorDescription>,
    pub face: FaceKeyframeProgram,
    pub body: JointTrajectory,
}

/// Run `attempt` with fresh seeds until it succeeds or the bound is hit.
/// Only malformed output is retried; transport failures surface at once.
fn with_retries<T>(
    step: &'static str,
    bound: u32,
    seed: u64,
    mut attempt: impl FnMut(u64) -> Result<T, ProviderError>,
) -> Result<T, BehaviorError> {
    let bound = bound.max(1);
    let mut last = String::new();
    for i in 0..bound {
        match attempt(derive_seed(seed, step).wrapping_add(u64::from(i))) {
            Ok(v) => return Ok(v),
            Err(ProviderError::MalformedOutput(m)) => last = m,
            Err(e) => return Err(e.into()),
        }
    }
    Err(BehaviorError::Exhausted { step, attempts: bound, last })
}

fn malformed(msg: impl fmt::Display) -> ProviderError {
    ProviderError::MalformedOutput(alloc::format!("{msg}"))
}

fn check_transcript(audio: &AudioHandle, story: &Story) -> Result<(), BehaviorError> {
    let words = story.body.split_whitespace().count();
    if audio.word_timestamps.len() != words || words == 0 {
        return Err(BehaviorError::TranscriptMismatch { audio: audio.word_timestamps.len(), story: words });
    }
    Ok(())
}

fn transcript_words(audio: &AudioHandle) -> String {
    let words: Vec<&str> = audio.word_timestamps.iter().map(|w| w.word.as_str()).collect();
    words.join(" ")
}

fn is_hex_color(s: &str) -> bool {
    s.len() == 7 && s.starts_with('#') && s[1..].chars().all(|c| c.is_ascii_hexdigit())
}

/// Structural check of a segmentation against a transcript of `n_words`.
pub fn check_segments(segments: &[Segment], n_words: usize) -> Result<(), String> {
    if segments.is_empty() {
        return Err("no segments".into());
    }
    let mut next = 0;
    for (i, s) in segments.iter().enumerate() {
        if s.index != i {
            return Err(alloc::format!("segment {i} carries index {}", s.index));
        }
        if s.word_span[0] != next {
            return Err(alloc::format!("segment {i} starts at word {} but {next} was expected", s.word_span[0]));
        }
        if s.word_span[1] < s.word_span[0] {
            return Err(alloc::format!("segment {i} ends before it starts"));
        }
        if s.time_span_ms[0] >= s.time_span_ms[1] {
            return Err(alloc::format!("segment {i} has an empty time span"));
        }
        if !(2..=4).contains(&s.palette.len()) || !s.palette.iter().all(|c| is_hex_color(c)) {
            return Err(alloc::format!("segment {i} palette must be 2-4 hex colors"));
        }
        next = s.word_span[1] + 1;
    }
    if next != n_words {
        return Err(alloc::format!("segments cover {next} of {n_words} words"));
    }
    Ok(())
}

pub fn segment_transcript(
    text: &dyn TextGenerator,
    audio: &AudioHandle,
    story: &Story,
    cfg: &BehaviorConfig,
    seed: u64,
) -> Result<Vec<Segment>, BehaviorError> {
    check_transcript(audio, story)?;
    let words = transcript_words(audio);
    let n = audio.word_timestamps.len();
    with_retries("segmentation", cfg.retry_bound, seed, |s| {
        let req = TextGenRequest::new(TemplateId::Segmentation, s).var(var::WORDS, words.clone());
        let draft: SegmentationDraft = wire::parse(&text.generate_text(&req)?)?;
        let mut segments = Vec::with_capacity(draft.segments.len());
        for (index, d) in draft.segments.into_iter().enumerate() {
            if d.first > d.last || d.last >= n {
                return Err(malformed(alloc::format!("segment {index} span [{}, {}] out of range", d.first, d.last)));
            }
            segments.push(Segment {
                index,
                word_span: [d.first, d.last],
                time_span_ms: [audio.word_timestamps[d.first].start_ms, audio.word_timestamps[d.last].end_ms],
                palette: d.palette,
                narrative_role: d.role,
            });
        }
        check_segments(&segments, n).map_err(malformed)?;
        Ok(segments)
    })
}

fn cue_priority(kind: CueKind) -> u8 {
    match kind {
        CueKind::Emphasis => 0,
        CueKind::Emotion => 1,
        CueKind::Action => 2,
        CueKind::Spatial => 3,
    }
}

/// Most cues a segment of `words` words may carry.
pub fn cue_cap(words: usize, words_per_cue: usize) -> usize {
    words.div_ceil(words_per_cue.max(1))
}

pub fn extract_cues(
    text: &dyn TextGenerator,
    segments: &[Segment],
    audio: &AudioHandle,
    story: &Story,
    cfg: &BehaviorConfig,
    seed: u64,
) -> Result<Vec<GestureCue>, BehaviorError> {
    check_transcript(audio, story)?;
    let words = transcript_words(audio);
    let bounds: Vec<SegmentBounds> = segments.iter().map(|s| SegmentBounds { first: s.word_span[0], last: s.word_span[1] }).collect();
    let forms = story.target.forms().join(",");
    with_retries("cue extraction", cfg.retry_bound, seed, |s| {
        let req = TextGenRequest::new(TemplateId::CueExtraction, s)
            .var(var::WORDS, words.clone())
            .var(var::SEGMENTS, wire::render(&bounds))
            .var(var::TARGET_FORMS, forms.clone())
            .var(var::WORDS_PER_CUE, alloc::format!("{}", cfg.words_per_cue));
        let draft: CuesDraft = wire::parse(&text.generate_text(&req)?)?;
        let mut per_segment: Vec<Vec<GestureCue>> = segments.iter().map(|_| Vec::new()).collect();
        for c in draft.cues {
            let seg = segments.get(c.segment).ok_or_else(|| malformed(alloc::format!("cue names segment {}", c.segment)))?;
            if !seg.contains_word(c.word) {
                return Err(malformed(alloc::format!("cue word {} outside segment {}", c.word, c.segment)));
            }
            per_segment[c.segment].push(GestureCue { segment_index: c.segment, word_idx: c.word, cue_kind: c.kind, note: c.note });
        }
        let mut out = Vec::new();
        for (seg, mut cues) in segments.iter().zip(per_segment) {
            cues.sort_by_key(|c| (cue_priority(c.cue_kind), c.word_idx));
            cues.dedup_by_key(|c| c.word_idx);
            cues.truncate(cue_cap(seg.word_len(), cfg.words_per_cue));
            cues.sort_by_key(|c| c.word_idx);
            out.extend(cues);
        }
        Ok(out)
    })
}

/// Describe each segment in order. Every request carries the segment's own
/// palette and all descriptions produced so far.
pub fn describe_behaviors(
    text: &dyn TextGenerator,
    segments: &[Segment],
    cues: &[GestureCue],
    audio: &AudioHandle,
    cfg: &BehaviorConfig,
    seed: u64,
) -> Result<Vec<BehaviorDescription>, BehaviorError> {
    let mut all: Vec<BehaviorDescription> = Vec::new();
    for seg in segments {
        let words: Vec<&str> = audio.word_timestamps[seg.word_span[0]..=seg.word_span[1]].iter().map(|w| w.word.as_str()).collect();
        let ctx = SegmentContext {
            index: seg.index,
            start_ms: seg.time_span_ms[0],
            end_ms: seg.time_span_ms[1],
            palette: seg.palette.clone(),
            role: seg.narrative_role.clone(),
            text: words.join(" "),
        };
        let seg_cues: Vec<CueContext> = cues
            .iter()
            .filter(|c| c.segment_index == seg.index)
            .map(|c| CueContext {
                kind: c.cue_kind,
                word: normalize_token(&audio.word_timestamps[c.word_idx].word),
                t_ms: audio.word_timestamps[c.word_idx].start_ms,
                note: c.note.clone(),
            })
            .collect();
        let prior: Vec<DescriptionDraft> =
            all.iter().map(|d| DescriptionDraft { t_ms: d.t_ms, channel: d.channel, description: d.description.clone() }).collect();
        let seg_seed = derive_seed(seed, &alloc::format!("segment-{}", seg.index));
        let mut produced = with_retries("behavior description", cfg.retry_bound, seg_seed, |s| {
            let req = TextGenRequest::new(TemplateId::BehaviorDescription, s)
                .var(var::SEGMENT, wire::render(&ctx))
                .var(var::CUES, wire::render(&seg_cues))
                .var(var::PRIOR, wire::render(&prior));
            let draft: DescriptionsDraft = wire::parse(&text.generate_text(&req)?)?;
            let mut out = Vec::with_capacity(draft.descriptions.len());
            for d in draft.descriptions {
                if !seg.contains_time(d.t_ms) {
                    return Err(malformed(alloc::format!("description at {} ms outside segment {}", d.t_ms, seg.index)));
                }
                if d.description.trim().is_empty() {
                    return Err(malformed("empty behavior description"));
                }
                out.push(BehaviorDescription { segment_index: seg.index, t_ms: d.t_ms, channel: d.channel, description: d.description });
            }
            Ok(out)
        })?;
        if produced.is_empty() {
            produced.push(BehaviorDescription {
                segment_index: seg.index,
                t_ms: seg.time_span_ms[0] + (seg.time_span_ms[1] - seg.time_span_ms[0]) / 2,
                channel: Channel::Body,
                description: "idle sway".to_string(),
            });
        }
        all.extend(produced);
    }
    Ok(all)
}

/// Full pipeline from narrated story to executable programs.
pub fn synthesize(
    text: &dyn TextGenerator,
    story: &Story,
    audio: &AudioHandle,
    profile: &RobotProfile,
    cfg: &BehaviorConfig,
    seed: u64,
) -> Result<BehaviorProgram, BehaviorError> {
    let segments = segment_transcript(text, audio, story, cfg, seed)?;
    let cues = extract_cues(text, &segments, audio, story, cfg, seed)?;
    let descriptions = describe_behaviors(text, &segments, &cues, audio, cfg, seed)?;
    let (face, _) = compile_face(&descriptions, audio, profile)?;
    let body = compile_body(&descriptions, audio, profile)?;
    Ok(BehaviorProgram { segments, cues, descriptions, face, body })
}
