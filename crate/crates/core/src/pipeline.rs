//! Story and question authoring with hard constraint checks, and assembly of
//! the per-day delivery schedule.
//!
//! Every generated artifact is validated before it is returned. A story that
//! misses a constraint, or that the safety classifier rejects, is regenerated
//! with the next seed up to the retry bound.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::behavior::{self, BehaviorConfig, BehaviorError, BehaviorProgram, RobotProfile};
use crate::domain::{
    count_matches, distinct_keys, mentions_name, normalize_token, split_sentences, validate_curriculum, ArcMarkers, ChildCurriculum,
    InteractionScript, Question, ScriptError, Story, ValidationReport, WordTarget, TARGET_WORDS_PER_CHILD,
};
use crate::provider::wire::{self, var, ScriptDraft, StoryDraft};
use crate::provider::{AudioHandle, ProviderError, Providers, TemplateId, TextGenRequest, VoiceParams};
use crate::util::{derive_seed, rng};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuthoringConstraints {
    pub word_count_target: usize,
    pub word_count_band: [usize; 2],
    pub min_target_occurrences: usize,
    pub forbid_child_as_character: bool,
    /// Attempts per artifact, each with the next seed.
    pub retry_bound: u32,
}

impl Default for AuthoringConstraints {
    fn default() -> Self {
        Self {
            word_count_target: 200,
            word_count_band: [150, 260],
            min_target_occurrences: 3,
            forbid_child_as_character: true,
            retry_bound: 5,
        }
    }
}

impl AuthoringConstraints {
    pub fn validate(&self) -> Result<(), String> {
        let [lo, hi] = self.word_count_band;
        if !(lo <= self.word_count_target && self.word_count_target <= hi) {
            return Err(alloc::format!("word_count_band [{lo}, {hi}] must contain word_count_target {}", self.word_count_target));
        }
        if self.min_target_occurrences < 3 {
            return Err(alloc::format!("min_target_occurrences is {}, expected at least 3", self.min_target_occurrences));
        }
        if self.retry_bound == 0 {
            return Err("retry_bound must be at least 1".to_string());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PackageStatus {
    #[default]
    Pending,
    Approved,
}

/// A story ready for review and delivery: text, questions, narration audio
/// and the compiled behavior programs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PackageDoc", into = "PackageDoc")]
pub struct StoryPackage {
    pub child_id: String,
    pub day: u32,
    pub story: Story,
    pub script: InteractionScript,
    pub status: PackageStatus,
    pub audio: Option<AudioHandle>,
    pub behavior: Option<BehaviorProgram>,
}

impl StoryPackage {
    pub fn word(&self) -> &str {
        &self.story.target.word
    }

    pub fn is_approved(&self) -> bool {
        self.status == PackageStatus::Approved
    }
}

/// Flat on-disk shape of a package.
#[derive(Serialize, Deserialize)]
struct PackageDoc {
    child_id: String,
    day: u32,
    story_id: String,
    word: WordTarget,
    theme: String,
    body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    definition: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    arc_markers: Option<ArcMarkers>,
    questions: Vec<Question>,
    #[serde(default)]
    status: PackageStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    audio: Option<AudioHandle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    behavior: Option<BehaviorProgram>,
}

impl TryFrom<PackageDoc> for StoryPackage {
    type Error = ScriptError;

    fn try_from(d: PackageDoc) -> Result<Self, ScriptError> {
        let mut story = Story::new(d.story_id.clone(), d.theme, d.word, d.body);
        story.definition = d.definition;
        story.arc_markers = d.arc_markers;
        let script = InteractionScript::new(d.story_id, d.questions)?;
        Ok(Self { child_id: d.child_id, day: d.day, story, script, status: d.status, audio: d.audio, behavior: d.behavior })
    }
}

impl From<StoryPackage> for PackageDoc {
    fn from(p: StoryPackage) -> Self {
        Self {
            child_id: p.child_id,
            day: p.day,
            story_id: p.story.story_id,
            word: p.story.target,
            theme: p.story.theme,
            body: p.story.body,
            definition: p.story.definition,
            arc_markers: p.story.arc_markers,
            questions: p.script.questions().to_vec(),
            status: p.status,
            audio: p.audio,
            behavior: p.behavior,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaySchedule {
    pub child_id: String,
    pub day_index: u32,
    pub stories: Vec<StoryPackage>,
    #[serde(default)]
    pub delivered_count: u32,
}

impl DaySchedule {
    pub fn remaining(&self) -> usize {
        self.stories.len().saturating_sub(self.delivered_count as usize)
    }

    pub fn next_story(&self) -> Option<&StoryPackage> {
        self.stories.get(self.delivered_count as usize)
    }

    pub fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::default();
        if self.stories.len() != TARGET_WORDS_PER_CHILD {
            r.violate("stories.count", alloc::format!("={}, expected {TARGET_WORDS_PER_CHILD}", self.stories.len()));
        }
        let keys = distinct_keys(self.stories.iter().map(|p| &p.story.target));
        if keys.len() != self.stories.len() {
            r.violate("stories.words", " repeat a target word");
        }
        if self.delivered_count as usize > self.stories.len() {
            r.violate("delivered_count", alloc::format!("={}, exceeds {}", self.delivered_count, self.stories.len()));
        }
        for (i, p) in self.stories.iter().enumerate() {
            if p.day != self.day_index {
                r.violate(alloc::format!("stories[{i}].day"), alloc::format!("={}, expected {}", p.day, self.day_index));
            }
        }
        r
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("curriculum is invalid: {0}")]
    InvalidCurriculum(ValidationReport),
    #[error("invalid constraints: {0}")]
    InvalidConstraints(String),
    #[error("{step} failed after {attempts} attempts: {last}")]
    AuthoringExhausted { step: &'static str, attempts: u32, last: String },
    #[error("day {day}, word {word:?}: {source}")]
    AtSlot { day: u32, word: String, source: Box<PipelineError> },
    #[error("edit violates constraints: {0}")]
    EditViolatesConstraints(ValidationReport),
    #[error("story {0} is not pending review")]
    NotPending(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Behavior(#[from] BehaviorError),
}

impl PipelineError {
    /// The innermost error, past any slot context.
    pub fn root(&self) -> &PipelineError {
        match self {
            Self::AtSlot { source, .. } => source.root(),
            e => e,
        }
    }
}

pub fn count_target_occurrences(body: &str, word: &WordTarget) -> usize {
    count_matches(body, word)
}

const DEFINING: &[&[&str]] = &[&["means"], &["is", "when"], &["is", "a"]];

fn has_defining_sentence(body: &str, target: &WordTarget) -> bool {
    split_sentences(body).into_iter().any(|s| {
        if count_matches(s, target) == 0 {
            return false;
        }
        let toks: Vec<String> = s.split_whitespace().map(normalize_token).collect();
        DEFINING.iter().any(|pat| toks.windows(pat.len()).any(|w| w.iter().zip(pat.iter()).all(|(a, b)| a == b)))
    })
}

/// Check a story against every authoring constraint. The report lists the
/// measured values alongside any violations.
pub fn validate_story(story: &Story, constraints: &AuthoringConstraints, curriculum: &ChildCurriculum) -> ValidationReport {
    let mut r = ValidationReport::default();
    let words = crate::domain::word_count(&story.body);
    let occurrences = count_target_occurrences(&story.body, &story.target);
    let name_present = mentions_name(&story.body, &curriculum.display_name);
    let structured = story.definition.as_deref().is_some_and(|d| !d.trim().is_empty());
    let definition_present = structured || has_defining_sentence(&story.body, &story.target);
    r.measure("word_count", words);
    r.measure("target_occurrences", occurrences);
    r.measure("name_present", name_present);
    r.measure("definition_present", definition_present);

    let [lo, hi] = constraints.word_count_band;
    if !(lo..=hi).contains(&words) {
        r.violate("word_count", alloc::format!("={words}, expected {lo}..={hi}"));
    }
    if occurrences < constraints.min_target_occurrences {
        r.violate("target_occurrences", alloc::format!("={occurrences}, expected >= {}", constraints.min_target_occurrences));
    }
    if constraints.forbid_child_as_character && name_present {
        r.violate("child_name", alloc::format!(" {:?} appears in the story", curriculum.display_name));
    }
    if !definition_present {
        r.violate("definition", alloc::format!(" no defining sentence for {:?}", story.target.word));
    }
    if story.theme.trim().is_empty() {
        r.violate("theme", " is empty");
    }
    if let Some(a) = story.arc_markers {
        if !(0 < a.conflict && a.conflict < a.resolution && a.resolution < story.body.len()) {
            r.violate("arc_markers", alloc::format!(" conflict {} and resolution {} out of order", a.conflict, a.resolution));
        }
    }
    r
}

/// The authoring pipeline with its providers and settings bound.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub providers: Providers,
    pub constraints: AuthoringConstraints,
    pub behavior: BehaviorConfig,
    pub profile: RobotProfile,
    pub voice: VoiceParams,
}

impl Pipeline {
    pub fn new(providers: Providers) -> Self {
        Self {
            providers,
            constraints: AuthoringConstraints::default(),
            behavior: BehaviorConfig::default(),
            profile: RobotProfile::default(),
            voice: VoiceParams::default(),
        }
    }

    /// Fails closed: a classifier error is an error, not a pass.
    fn screen(&self, text: &str) -> Result<bool, ProviderError> {
        Ok(self.providers.safety.classify_safety(text)?.safe)
    }

    pub fn author_story(&self, curriculum: &ChildCurriculum, word: &WordTarget, theme: &str, seed: u64) -> Result<Story, PipelineError> {
        self.constraints.validate().map_err(PipelineError::InvalidConstraints)?;
        let mut last = String::new();
        for attempt in 0..self.constraints.retry_bound {
            let s = seed.wrapping_add(u64::from(attempt));
            let req = TextGenRequest::new(TemplateId::StoryAuthoring, s)
                .var(var::THEME, theme)
                .var(var::WORD, word.word.clone())
                .var(var::DEFINITION, word.child_friendly_definition.clone())
                .var(var::CHILD_NAME, curriculum.display_name.clone())
                .var(var::WORD_TARGET, alloc::format!("{}", self.constraints.word_count_target))
                .var(var::MIN_OCCURRENCES, alloc::format!("{}", self.constraints.min_target_occurrences));
            let draft: StoryDraft = match self.providers.text.generate_text(&req).and_then(|t| wire::parse(&t)) {
                Ok(d) => d,
                Err(ProviderError::MalformedOutput(m)) => {
                    last = m;
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            let id = alloc::format!("{}-{}-{s}", curriculum.child_id, word.key());
            let mut story = Story::new(id, theme, word.clone(), draft.body);
            story.definition = draft.definition;
            story.arc_markers = draft.arc;
            let report = validate_story(&story, &self.constraints, curriculum);
            if !report.is_empty() {
                last = report.to_string();
                continue;
            }
            if !self.screen(&story.body)? {
                last = "story failed the safety screen".to_string();
                continue;
            }
            return Ok(story);
        }
        Err(PipelineError::AuthoringExhausted { step: "story authoring", attempts: self.constraints.retry_bound, last })
    }

    pub fn author_interactions(&self, story: &Story, seed: u64) -> Result<InteractionScript, PipelineError> {
        let mut last = String::new();
        for attempt in 0..self.constraints.retry_bound.max(1) {
            let s = seed.wrapping_add(u64::from(attempt));
            let req = TextGenRequest::new(TemplateId::InteractionAuthoring, s)
                .var(var::STORY, story.body.clone())
                .var(var::WORD, story.target.word.clone())
                .var(var::THEME, story.theme.clone());
            let draft: ScriptDraft = match self.providers.text.generate_text(&req).and_then(|t| wire::parse(&t)) {
                Ok(d) => d,
                Err(ProviderError::MalformedOutput(m)) => {
                    last = m;
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            let questions = draft.questions.into_iter().map(|q| Question::new(q.kind, q.text)).collect();
            let script = match InteractionScript::for_target(story.story_id.clone(), questions, &story.target) {
                Ok(s) => s,
                Err(e) => {
                    last = e.to_string();
                    continue;
                }
            };
            let mut safe = true;
            for q in script.questions() {
                safe &= self.screen(&q.text)?;
            }
            if !safe {
                last = "a question failed the safety screen".to_string();
                continue;
            }
            return Ok(script);
        }
        Err(PipelineError::AuthoringExhausted { step: "question authoring", attempts: self.constraints.retry_bound.max(1), last })
    }

    /// Narrate the story and compile its behavior programs.
    pub fn produce(&self, story: &Story, seed: u64) -> Result<(AudioHandle, BehaviorProgram), PipelineError> {
        let synthesis = self.providers.speech.synthesize_speech(&story.body, &self.voice)?;
        let audio = synthesis.handle;
        audio.validate()?;
        let program = behavior::synthesize(self.providers.text.as_ref(), story, &audio, &self.profile, &self.behavior, seed)?;
        Ok((audio, program))
    }

    pub fn build_package(
        &self,
        curriculum: &ChildCurriculum,
        day: u32,
        word: &WordTarget,
        theme: &str,
        seed: u64,
    ) -> Result<StoryPackage, PipelineError> {
        let mut story = self.author_story(curriculum, word, theme, derive_seed(seed, "story"))?;
        story.story_id = alloc::format!("{}-d{day:02}-{}", curriculum.child_id, word.key());
        let script = self.author_interactions(&story, derive_seed(seed, "script"))?;
        let (audio, program) = self.produce(&story, derive_seed(seed, "behavior"))?;
        Ok(StoryPackage {
            child_id: curriculum.child_id.clone(),
            day,
            story,
            script,
            status: PackageStatus::Pending,
            audio: Some(audio),
            behavior: Some(program),
        })
    }

    /// One schedule per deployment day, one story per target word each day.
    pub fn build_schedule(&self, curriculum: &ChildCurriculum, seed: u64) -> Result<Vec<DaySchedule>, PipelineError> {
        let report = validate_curriculum(curriculum);
        if !report.is_empty() {
            return Err(PipelineError::InvalidCurriculum(report));
        }
        let themes = draw_themes(curriculum, seed);
        let mut days = Vec::with_capacity(themes.len());
        for (d, day_themes) in themes.iter().enumerate() {
            let day = d as u32 + 1;
            let mut stories = Vec::with_capacity(curriculum.target_words.len());
            for (word, theme) in curriculum.target_words.iter().zip(day_themes) {
                let slot_seed = derive_seed(seed, &alloc::format!("slot|{day}|{}", word.key()));
                let package = self.build_package(curriculum, day, word, theme, slot_seed).map_err(|e| PipelineError::AtSlot {
                    day,
                    word: word.word.clone(),
                    source: Box::new(e),
                })?;
                stories.push(package);
            }
            days.push(DaySchedule { child_id: curriculum.child_id.clone(), day_index: day, stories, delivered_count: 0 });
        }
        Ok(days)
    }

    /// Apply a reviewer decision to a pending package.
    pub fn review(
        &self,
        package: &StoryPackage,
        action: &ReviewAction,
        curriculum: &ChildCurriculum,
    ) -> Result<StoryPackage, PipelineError> {
        if package.status != PackageStatus::Pending {
            return Err(PipelineError::NotPending(package.story.story_id.clone()));
        }
        let mut next = package.clone();
        match action {
            ReviewAction::Approve => next.status = PackageStatus::Approved,
            ReviewAction::Edit(body) => {
                next.story.set_body(body.clone());
                let report = validate_story(&next.story, &self.constraints, curriculum);
                if !report.is_empty() {
                    return Err(PipelineError::EditViolatesConstraints(report));
                }
                next.script.check_recall(&next.story.target).map_err(|e| {
                    let mut r = ValidationReport::default();
                    r.violate("questions.recall", alloc::format!(" {e}"));
                    PipelineError::EditViolatesConstraints(r)
                })?;
                let (audio, program) = self.produce(&next.story, derive_seed(fnv_of(body), "behavior"))?;
                next.audio = Some(audio);
                next.behavior = Some(program);
                next.status = PackageStatus::Approved;
            }
            ReviewAction::Regenerate(seed) => {
                let id = package.story.story_id.clone();
                let theme = package.story.theme.clone();
                let mut story = self.author_story(curriculum, &package.story.target, &theme, derive_seed(*seed, "story"))?;
                story.story_id = id;
                next.script = self.author_interactions(&story, derive_seed(*seed, "script"))?;
                let (audio, program) = self.produce(&story, derive_seed(*seed, "behavior"))?;
                next.story = story;
                next.audio = Some(audio);
                next.behavior = Some(program);
            }
        }
        Ok(next)
    }
}

fn fnv_of(s: &str) -> u64 {
    crate::util::fnv1a(s.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", content = "value", rename_all = "snake_case")]
pub enum ReviewAction {
    Approve,
    Edit(String),
    Regenerate(u64),
}

/// Seeded uniform theme choice for every (day, word) slot.
pub fn draw_themes(curriculum: &ChildCurriculum, seed: u64) -> Vec<Vec<String>> {
    let mut r = rng(seed, "themes");
    (0..curriculum.deployment_days)
        .map(|_| curriculum.target_words.iter().map(|_| curriculum.themes[r.random_range(0..curriculum.themes.len())].clone()).collect())
        .collect()
}
