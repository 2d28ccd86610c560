//! The session state machine and the real-time response planner.
//!
//! A session runs on a virtual clock. The robot greets the child, offers a
//! story, narrates it with its compiled behaviors, asks the three scripted
//! questions with planner-generated follow-ups, and offers another story
//! until the child declines or the day's stories run out. Listening and
//! speaking never overlap.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::domain::{FaceExpression, GesturePrimitive, QuestionKind};
use crate::provider::VoiceParams;
use crate::turn::{TurnConfig, TurnEvent};

mod planner;
mod playback;
mod run;

pub use planner::{moderate, moderate_and_retry, parse_intent, plan_response, Moderated, PlanPhase, QuestionContext, FALLBACK_TEXT};
pub use playback::{deliver_canned, deliver_story, deliver_utterance, DispatchRecord, PlaybackRecord, StoryPlayback};
pub use run::{run_session, SessionError, SessionOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Boot,
    Greeting,
    AskStory,
    Storytelling,
    QuestionPerception,
    QuestionRecall,
    QuestionPractice,
    /// Follow-up `index` (1 or 2) after the Recall or Practice question.
    FollowUp {
        parent: QuestionKind,
        index: u8,
    },
    AskAnother,
    Farewell,
    Dreaming,
    Sleep,
}

impl SessionState {
    pub fn question(kind: QuestionKind) -> Self {
        match kind {
            QuestionKind::Perception => Self::QuestionPerception,
            QuestionKind::Recall => Self::QuestionRecall,
            QuestionKind::Practice => Self::QuestionPractice,
        }
    }

    pub fn question_kind(self) -> Option<QuestionKind> {
        match self {
            Self::QuestionPerception => Some(QuestionKind::Perception),
            Self::QuestionRecall => Some(QuestionKind::Recall),
            Self::QuestionPractice => Some(QuestionKind::Practice),
            _ => None,
        }
    }

    /// Edges of the session graph. Any live state may also fall through to
    /// Farewell when a provider fails.
    pub fn successors(self) -> Vec<SessionState> {
        use QuestionKind::{Practice, Recall};
        use SessionState::*;
        let mut next = match self {
            Boot => alloc::vec![Greeting, Dreaming],
            Greeting => alloc::vec![AskStory],
            AskStory => alloc::vec![Storytelling],
            Storytelling => alloc::vec![QuestionPerception],
            QuestionPerception => alloc::vec![QuestionRecall],
            QuestionRecall => alloc::vec![FollowUp { parent: Recall, index: 1 }, QuestionPractice],
            FollowUp { parent: Recall, index: 1 } => alloc::vec![FollowUp { parent: Recall, index: 2 }, QuestionPractice],
            FollowUp { parent: Recall, .. } => alloc::vec![QuestionPractice],
            QuestionPractice => alloc::vec![FollowUp { parent: Practice, index: 1 }, AskAnother],
            FollowUp { parent: Practice, index: 1 } => alloc::vec![FollowUp { parent: Practice, index: 2 }, AskAnother],
            FollowUp { parent: Practice, .. } => alloc::vec![AskAnother],
            FollowUp { .. } => alloc::vec![],
            AskAnother => alloc::vec![Storytelling],
            Farewell | Dreaming => alloc::vec![Sleep],
            Sleep => alloc::vec![],
        };
        if !matches!(self, Farewell | Dreaming | Sleep | FollowUp { parent: QuestionKind::Perception, .. }) {
            next.push(Farewell);
        }
        next
    }

    pub fn can_transition(self, to: SessionState) -> bool {
        self.successors().contains(&to)
    }
}

/// First illegal transition in a state sequence, if any. The sequence must
/// start at Boot.
pub fn check_transitions(states: impl IntoIterator<Item = SessionState>) -> Result<(), (Option<SessionState>, SessionState)> {
    let mut prev: Option<SessionState> = None;
    for s in states {
        let ok = match prev {
            None => s == SessionState::Boot,
            Some(p) => p.can_transition(s),
        };
        if !ok {
            return Err((prev, s));
        }
        prev = Some(s);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    ReducingChoices,
    Extension,
    CoParticipation,
    ElicitingResponse,
    Praise,
    GentleCorrection,
}

impl Strategy {
    pub const ALL: [Strategy; 6] =
        [Self::ReducingChoices, Self::Extension, Self::CoParticipation, Self::ElicitingResponse, Self::Praise, Self::GentleCorrection];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::ReducingChoices => "reducing_choices",
            Self::Extension => "extension",
            Self::CoParticipation => "co_participation",
            Self::ElicitingResponse => "eliciting_response",
            Self::Praise => "praise",
            Self::GentleCorrection => "gentle_correction",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s.trim())
    }
}

/// Yes/no reading of an answer to a story offer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intent {
    Yes,
    No,
    Ambiguous,
    NoResponse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceItem {
    pub text: String,
    pub face: FaceExpression,
    pub gesture: GesturePrimitive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorPlan {
    pub strategy: Strategy,
    pub items: Vec<UtteranceItem>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    Robot,
    Child,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryTurn {
    pub speaker: Speaker,
    pub text: String,
    pub t_ms: u64,
}

/// Append-only conversation record used as planner context.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationMemory {
    turns: Vec<MemoryTurn>,
    pub story_id: Option<String>,
    pub target_word: Option<String>,
    pub question: Option<QuestionKind>,
}

impl ConversationMemory {
    pub fn push(&mut self, speaker: Speaker, text: impl Into<String>, t_ms: u64) {
        self.turns.push(MemoryTurn { speaker, text: text.into(), t_ms });
    }

    pub fn turns(&self) -> &[MemoryTurn] {
        &self.turns
    }

    /// The most recent `n` turns, oldest first.
    pub fn recent(&self, n: usize) -> &[MemoryTurn] {
        &self.turns[self.turns.len().saturating_sub(n)..]
    }
}

/// What the child is being asked, for input sources and personas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    AskStory,
    AskAnother,
    Clarify,
    Question(QuestionKind),
    FollowUp(QuestionKind, u8),
    Reprompt(QuestionKind),
}

impl PromptKind {
    /// Stable name used by persona files.
    pub fn key(self) -> &'static str {
        match self {
            Self::AskStory => "ask_story",
            Self::AskAnother => "ask_another",
            Self::Clarify => "clarify",
            Self::Question(QuestionKind::Perception) => "perception",
            Self::Question(QuestionKind::Recall) => "recall",
            Self::Question(QuestionKind::Practice) => "practice",
            Self::FollowUp(QuestionKind::Practice, _) => "followup_practice",
            Self::FollowUp(..) => "followup_recall",
            Self::Reprompt(_) => "reprompt",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub kind: PromptKind,
    pub text: String,
    pub target_word: String,
    pub theme: String,
    /// 1-based index of the story being discussed; 0 before any story.
    pub story_index: u32,
}

/// Source of child speech: returns the raw event stream for one turn,
/// with times relative to the moment the turn opens.
pub trait ChildInput {
    fn respond(&mut self, prompt: &Prompt, seed: u64) -> Vec<TurnEvent>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub turn: TurnConfig,
    pub max_stories_per_day: u32,
    /// Safety regenerations for a single plan before the canned fallback.
    pub planner_retry_bound: u32,
    /// Re-ask once after an ambiguous yes/no answer.
    pub clarify_once: bool,
    pub followups_per_question: u8,
    pub voice: VoiceParams,
    pub session_index: u32,
    pub started_at_ms: u64,
    /// Planner context window, in turns.
    pub memory_window: usize,
    /// Simulated time from the end of a child turn to the start of plan
    /// synthesis, standing in for model inference.
    pub planning_latency_ms: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            turn: TurnConfig::default(),
            max_stories_per_day: 4,
            planner_retry_bound: 3,
            clarify_once: true,
            followups_per_question: 2,
            voice: VoiceParams::default(),
            session_index: 0,
            started_at_ms: 0,
            memory_window: 12,
            planning_latency_ms: 2000,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.turn.validate()?;
        if self.planner_retry_bound == 0 {
            return Err("planner_retry_bound must be at least 1".into());
        }
        if self.max_stories_per_day == 0 || self.max_stories_per_day > 4 {
            return Err(alloc::format!("max_stories_per_day is {}, expected 1..=4", self.max_stories_per_day));
        }
        if self.followups_per_question > 2 {
            return Err(alloc::format!("followups_per_question is {}, expected at most 2", self.followups_per_question));
        }
        Ok(())
    }
}
