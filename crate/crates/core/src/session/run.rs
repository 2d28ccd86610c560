use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::planner::{parse_intent, plan_response, PlanPhase, QuestionContext};
use super::playback::{deliver_canned, deliver_story, deliver_utterance, PlaybackRecord, StoryPlayback};
use super::{ChildInput, ConversationMemory, Intent, Prompt, PromptKind, SessionConfig, SessionState, Speaker, Strategy, UtteranceItem};
use crate::behavior::RobotProfile;
use crate::domain::{
    FaceExpression, FaceName, GestureName, GesturePrimitive, GestureTiming, LogPayload, QuestionKind, SessionLog, TimeRegression,
};
use crate::pipeline::{DaySchedule, StoryPackage};
use crate::provider::{ProviderError, Providers};
use crate::turn::{annotate_detector, run_turn, EndReason, FinalizedTurn, TurnError};
use crate::util::derive_seed;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SessionError {
    #[error("invalid session config: {0}")]
    InvalidConfig(String),
    #[error("story {story_id} cannot be delivered: {reason}")]
    NotDeliverable { story_id: String, reason: String },
    #[error("story {0} has no compiled behavior program or audio")]
    CompilationMissing(String),
    #[error("story {story_id} has an invalid behavior program: {report}")]
    InvalidProgram { story_id: String, report: String },
    #[error("child input produced a malformed stream: {0}")]
    MalformedInput(#[from] TurnError),
    #[error(transparent)]
    Log(#[from] TimeRegression),
}

/// Everything a session produced.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutcome {
    pub log: SessionLog,
    /// Story ids delivered in this session, in order.
    pub delivered: Vec<String>,
    pub utterances: Vec<PlaybackRecord>,
    pub stories: Vec<StoryPlayback>,
    pub turns: Vec<FinalizedTurn>,
    /// Provider failure that ended the session early.
    pub error: Option<String>,
    pub end_ms: u64,
}

enum Stop {
    Provider(ProviderError),
    Fatal(SessionError),
}

impl From<ProviderError> for Stop {
    fn from(e: ProviderError) -> Self {
        Self::Provider(e)
    }
}

impl From<SessionError> for Stop {
    fn from(e: SessionError) -> Self {
        Self::Fatal(e)
    }
}

impl From<TimeRegression> for Stop {
    fn from(e: TimeRegression) -> Self {
        Self::Fatal(e.into())
    }
}

fn item(text: impl Into<String>, face: FaceName, intensity: f64, gesture: GestureName) -> UtteranceItem {
    UtteranceItem {
        text: text.into(),
        face: FaceExpression::new(face, intensity),
        gesture: GesturePrimitive { name: gesture, timing: GestureTiming::Onset },
    }
}

struct Runner<'a> {
    providers: &'a Providers,
    profile: &'a RobotProfile,
    cfg: &'a SessionConfig,
    input: &'a mut dyn ChildInput,
    child_name: &'a str,
    seed: u64,
    counter: u64,
    now: u64,
    state: Option<SessionState>,
    log: SessionLog,
    memory: ConversationMemory,
    utterances: Vec<PlaybackRecord>,
    stories: Vec<StoryPlayback>,
    turns: Vec<FinalizedTurn>,
    delivered: Vec<String>,
    story_index: u32,
    word: String,
    theme: String,
}

impl Runner<'_> {
    fn next_seed(&mut self, salt: &str) -> u64 {
        self.counter += 1;
        derive_seed(self.seed, &alloc::format!("{salt}|{}", self.counter))
    }

    fn enter(&mut self, state: SessionState) -> Result<(), Stop> {
        debug_assert!(self.state.is_none_or(|s| s.can_transition(state)), "{:?} -> {state:?}", self.state);
        self.state = Some(state);
        self.log.push(self.now, LogPayload::StateEnter { state })?;
        Ok(())
    }

    fn say(&mut self, it: &UtteranceItem) -> Result<(), Stop> {
        let r = deliver_utterance(it, self.providers, &self.cfg.voice, self.now)?;
        self.log.push(r.playback_start_ms, LogPayload::RobotUtterance { text: it.text.clone() })?;
        self.memory.push(Speaker::Robot, it.text.clone(), r.playback_start_ms);
        self.now = r.playback_end_ms;
        self.utterances.push(r);
        Ok(())
    }

    fn listen(&mut self, kind: PromptKind, text: &str) -> Result<FinalizedTurn, Stop> {
        let prompt = Prompt {
            kind,
            text: text.to_string(),
            target_word: self.word.clone(),
            theme: self.theme.clone(),
            story_index: self.story_index,
        };
        let seed = self.next_seed("turn");
        let raw = self.input.respond(&prompt, seed);
        let events = annotate_detector(&raw, self.providers.turn_end.as_ref(), &self.cfg.turn);
        let turn = run_turn(&events, &self.cfg.turn).map_err(SessionError::from)?;
        let intent =
            matches!(kind, PromptKind::AskStory | PromptKind::AskAnother | PromptKind::Clarify).then(|| parse_intent(&turn.transcript));
        let started_ms = self.now + turn.t_start_ms;
        self.now += turn.t_end_ms;
        self.log.push(self.now, LogPayload::ChildUtterance { text: turn.transcript.clone(), reason: turn.reason, started_ms, intent })?;
        if !turn.transcript.is_empty() {
            self.memory.push(Speaker::Child, turn.transcript.clone(), started_ms);
        }
        self.turns.push(turn.clone());
        Ok(turn)
    }

    fn ask_yes_no(&mut self, kind: PromptKind, text: &str) -> Result<bool, Stop> {
        self.say(&item(text, FaceName::Curious, 0.6, GestureName::HeadTilt))?;
        let turn = self.listen(kind, text)?;
        match parse_intent(&turn.transcript) {
            Intent::Yes => Ok(true),
            Intent::Ambiguous if self.cfg.clarify_once => {
                let again = "Hmm, I'm not sure I heard you. Do you want a story? You can say yes or no.";
                self.say(&item(again, FaceName::Curious, 0.5, GestureName::HeadTilt))?;
                let turn = self.listen(PromptKind::Clarify, again)?;
                Ok(parse_intent(&turn.transcript) == Intent::Yes)
            }
            _ => Ok(false),
        }
    }

    fn respond(&mut self, turn: &FinalizedTurn, kind: QuestionKind, phase: PlanPhase) -> Result<Strategy, Stop> {
        let ctx = QuestionContext { kind, phase, target_word: self.word.clone(), theme: self.theme.clone() };
        let seed = self.next_seed("plan");
        self.now += self.cfg.planning_latency_ms;
        let m = plan_response(self.providers, &self.memory, turn, &ctx, self.cfg.planner_retry_bound, self.cfg.memory_window, seed)?;
        for (i, category) in m.rejections.iter().enumerate() {
            self.log.push(self.now, LogPayload::ModerationReject { attempt: i as u32 + 1, category: *category })?;
        }
        self.log.push(self.now, LogPayload::Strategy { strategy: m.value.strategy })?;
        for it in &m.value.items {
            self.say(it)?;
        }
        Ok(m.value.strategy)
    }

    /// Listen, with one re-prompt after no response. `None` means the child
    /// stayed silent both times.
    fn listen_with_reprompt(&mut self, kind: PromptKind, question: QuestionKind, text: &str) -> Result<Option<FinalizedTurn>, Stop> {
        let turn = self.listen(kind, text)?;
        if turn.reason != EndReason::NoResponse {
            return Ok(Some(turn));
        }
        self.respond(&turn, question, PlanPhase::Reprompt)?;
        let prompt = self.utterances.last().map(|u| u.text.clone()).unwrap_or_default();
        let turn = self.listen(PromptKind::Reprompt(question), &prompt)?;
        Ok((turn.reason != EndReason::NoResponse).then_some(turn))
    }

    fn question(&mut self, kind: QuestionKind, text: &str) -> Result<(), Stop> {
        self.enter(SessionState::question(kind))?;
        self.memory.question = Some(kind);
        self.say(&item(text, FaceName::Curious, 0.6, GestureName::LeanIn))?;
        let Some(mut turn) = self.listen_with_reprompt(PromptKind::Question(kind), kind, text)? else {
            return Ok(());
        };
        let followups = if kind.followup_budget() == 0 { 0 } else { self.cfg.followups_per_question.min(kind.followup_budget()) };
        for index in 1..=followups {
            self.enter(SessionState::FollowUp { parent: kind, index })?;
            self.respond(&turn, kind, PlanPhase::FollowUp(index))?;
            let asked = self.utterances.last().map(|u| u.text.clone()).unwrap_or_default();
            match self.listen_with_reprompt(PromptKind::FollowUp(kind, index), kind, &asked)? {
                Some(t) => turn = t,
                None => return Ok(()),
            }
        }
        self.respond(&turn, kind, PlanPhase::Closing)?;
        Ok(())
    }

    fn story(&mut self, pkg: &StoryPackage, index: u32) -> Result<(), Stop> {
        self.enter(SessionState::Storytelling)?;
        self.story_index = index;
        self.word = pkg.story.target.word.clone();
        self.theme = pkg.story.theme.clone();
        self.memory.story_id = Some(pkg.story.story_id.clone());
        self.memory.target_word = Some(self.word.clone());
        self.log.push(
            self.now,
            LogPayload::StoryStart { story_id: pkg.story.story_id.clone(), word: self.word.clone(), theme: self.theme.clone(), index },
        )?;
        let playback = deliver_story(pkg, self.profile, self.now)?;
        self.log.push(playback.playback_start_ms, LogPayload::RobotUtterance { text: pkg.story.body.clone() })?;
        self.memory.push(Speaker::Robot, pkg.story.body.clone(), playback.playback_start_ms);
        self.now = playback.end_ms;
        self.stories.push(playback);
        for q in pkg.script.questions() {
            self.question(q.kind, &q.text)?;
        }
        self.log.push(self.now, LogPayload::StoryEnd { story_id: pkg.story.story_id.clone() })?;
        self.delivered.push(pkg.story.story_id.clone());
        Ok(())
    }

    fn animate(&mut self, sleep: bool) {
        let stages = if sleep { &self.profile.sleep } else { &self.profile.wake };
        self.now = deliver_canned(stages, self.profile, self.now).end_ms().max(self.now);
    }

    fn farewell(&mut self) -> Result<(), Stop> {
        self.enter(SessionState::Farewell)?;
        let text = alloc::format!("Goodbye, {}! See you next time!", self.child_name);
        self.say(&item(text, FaceName::Happy, 0.7, GestureName::WaveRight))
    }

    fn main(&mut self, schedule: &mut DaySchedule) -> Result<(), Stop> {
        self.enter(SessionState::Boot)?;
        self.animate(false);
        let cap = (self.cfg.max_stories_per_day as usize).min(schedule.stories.len());
        if schedule.delivered_count as usize >= cap {
            self.enter(SessionState::Dreaming)?;
            let text = "I've told you all of today's stories! Now I'm dreaming up new ones for next time.";
            return self.say(&item(text, FaceName::Sleepy, 0.5, GestureName::IdleSway));
        }
        self.enter(SessionState::Greeting)?;
        let hello = alloc::format!("Hi, {}! It's me, ELLA. I'm so happy to see you!", self.child_name);
        self.say(&item(hello, FaceName::Happy, 0.8, GestureName::WaveRight))?;
        self.enter(SessionState::AskStory)?;
        if !self.ask_yes_no(PromptKind::AskStory, "Would you like to hear a story today?")? {
            return self.farewell();
        }
        loop {
            let index = schedule.delivered_count as usize;
            let pkg = schedule.stories[index].clone();
            self.story(&pkg, index as u32 + 1)?;
            schedule.delivered_count += 1;
            if schedule.delivered_count as usize >= cap {
                break;
            }
            self.enter(SessionState::AskAnother)?;
            if !self.ask_yes_no(PromptKind::AskAnother, "That was fun! Would you like to hear another story?")? {
                break;
            }
        }
        self.farewell()
    }
}

/// Run one session for `schedule`, advancing its delivered count. Provider
/// outages end the session with a logged error and a farewell rather than
/// an `Err`; `Err` is reserved for unusable inputs.
pub fn run_session(
    schedule: &mut DaySchedule,
    providers: &Providers,
    profile: &RobotProfile,
    child_name: &str,
    input: &mut dyn ChildInput,
    cfg: &SessionConfig,
    seed: u64,
) -> Result<SessionOutcome, SessionError> {
    cfg.validate().map_err(SessionError::InvalidConfig)?;
    let cap = (cfg.max_stories_per_day as usize).min(schedule.stories.len());
    for pkg in schedule.stories.iter().take(cap).skip(schedule.delivered_count as usize) {
        if !pkg.is_approved() {
            return Err(SessionError::NotDeliverable { story_id: pkg.story.story_id.clone(), reason: "not approved".into() });
        }
        if pkg.audio.is_none() || pkg.behavior.is_none() {
            return Err(SessionError::CompilationMissing(pkg.story.story_id.clone()));
        }
    }
    let mut r = Runner {
        providers,
        profile,
        cfg,
        input,
        child_name,
        seed,
        counter: 0,
        now: 0,
        state: None,
        log: SessionLog::new(schedule.child_id.clone(), schedule.day_index, cfg.session_index, cfg.started_at_ms),
        memory: ConversationMemory::default(),
        utterances: Vec::new(),
        stories: Vec::new(),
        turns: Vec::new(),
        delivered: Vec::new(),
        story_index: 0,
        word: String::new(),
        theme: String::new(),
    };
    let mut error = None;
    match r.main(schedule) {
        Ok(()) => {}
        Err(Stop::Fatal(e)) => return Err(e),
        Err(Stop::Provider(e)) => {
            let message = e.to_string();
            r.log.push(r.now, LogPayload::Error { message: message.clone() })?;
            error = Some(message);
            if !matches!(r.state, Some(SessionState::Farewell | SessionState::Dreaming)) {
                r.enter_unchecked(SessionState::Farewell)?;
                let text = alloc::format!("Goodbye, {}! See you next time!", child_name);
                // The voice may be what failed; log the line either way.
                if r.say(&item(text.clone(), FaceName::Happy, 0.7, GestureName::WaveRight)).is_err() {
                    r.log.push(r.now, LogPayload::RobotUtterance { text })?;
                }
            }
        }
    }
    if let Err(Stop::Fatal(e)) = r.enter(SessionState::Sleep) {
        return Err(e);
    }
    r.animate(true);
    Ok(SessionOutcome {
        end_ms: r.now,
        log: r.log,
        delivered: r.delivered,
        utterances: r.utterances,
        stories: r.stories,
        turns: r.turns,
        error,
    })
}

impl Runner<'_> {
    fn enter_unchecked(&mut self, state: SessionState) -> Result<(), TimeRegression> {
        self.state = Some(state);
        self.log.push(self.now, LogPayload::StateEnter { state })
    }
}
