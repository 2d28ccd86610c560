use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{BehaviorPlan, ConversationMemory, Intent, Speaker, Strategy, UtteranceItem};
use crate::domain::{normalize_token, FaceExpression, FaceName, GestureName, GesturePrimitive, GestureTiming, QuestionKind};
use crate::provider::wire::{self, var, MemoryLine, PlanDraft};
use crate::provider::{ProviderError, Providers, SafetyCategory, SafetyClassifier, TemplateId, TextGenRequest};
use crate::turn::{EndReason, FinalizedTurn};
use crate::util::{contains_ci, derive_seed};

/// Spoken when every regenerated plan was rejected.
pub const FALLBACK_TEXT: &str = "Let's keep going with our story!";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanPhase {
    /// Re-ask after no response.
    Reprompt,
    /// React to the answer and ask follow-up `n`.
    FollowUp(u8),
    /// React to the answer before moving on.
    Closing,
}

impl PlanPhase {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Reprompt => "reprompt",
            Self::FollowUp(_) => "followup",
            Self::Closing => "closing",
        }
    }

    fn index(self) -> u8 {
        match self {
            Self::FollowUp(i) => i,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuestionContext {
    pub kind: QuestionKind,
    pub phase: PlanPhase,
    pub target_word: String,
    pub theme: String,
}

/// Result of a moderated generation loop.
#[derive(Debug, Clone, PartialEq)]
pub struct Moderated<T> {
    pub value: T,
    /// Producer calls made.
    pub attempts: u32,
    /// One entry per safety rejection, with the category when known.
    pub rejections: Vec<Option<SafetyCategory>>,
    pub fallback_used: bool,
}

/// Text a candidate would put in the robot's mouth.
pub trait Screened {
    fn spoken(&self) -> Vec<&str>;
}

impl Screened for String {
    fn spoken(&self) -> Vec<&str> {
        alloc::vec![self.as_str()]
    }
}

impl Screened for BehaviorPlan {
    fn spoken(&self) -> Vec<&str> {
        self.items.iter().map(|i| i.text.as_str()).collect()
    }
}

/// Generate, screen, regenerate. `produce` gets the 0-based attempt and
/// returns `None` for unusable output, which costs an attempt like a
/// rejection does. Classifier errors count as unsafe.
pub fn moderate<T: Screened>(
    bound: u32,
    safety: &dyn SafetyClassifier,
    mut produce: impl FnMut(u32) -> Result<Option<T>, ProviderError>,
    fallback: impl FnOnce() -> T,
) -> Result<Moderated<T>, ProviderError> {
    let bound = bound.max(1);
    let mut rejections = Vec::new();
    for attempt in 0..bound {
        let Some(candidate) = produce(attempt)? else { continue };
        let mut verdict = Ok(());
        for text in candidate.spoken() {
            match safety.classify_safety(text) {
                Ok(v) if v.safe => {}
                Ok(v) => {
                    verdict = Err(v.category);
                    break;
                }
                Err(_) => {
                    verdict = Err(None);
                    break;
                }
            }
        }
        match verdict {
            Ok(()) => return Ok(Moderated { value: candidate, attempts: attempt + 1, rejections, fallback_used: false }),
            Err(category) => rejections.push(category),
        }
    }
    Ok(Moderated { value: fallback(), attempts: bound, rejections, fallback_used: true })
}

/// Text-only moderation with the canned fallback.
pub fn moderate_and_retry(
    mut producer: impl FnMut(u32) -> Result<String, ProviderError>,
    safety: &dyn SafetyClassifier,
    bound: u32,
) -> Result<Moderated<String>, ProviderError> {
    moderate(
        bound,
        safety,
        |attempt| match producer(attempt) {
            Ok(t) => Ok(Some(t)),
            Err(ProviderError::MalformedOutput(_)) => Ok(None),
            Err(e) => Err(e),
        },
        || FALLBACK_TEXT.to_string(),
    )
}

fn fallback_plan() -> BehaviorPlan {
    BehaviorPlan {
        strategy: Strategy::ElicitingResponse,
        items: alloc::vec![UtteranceItem {
            text: FALLBACK_TEXT.to_string(),
            face: FaceExpression::new(FaceName::Happy, 0.6),
            gesture: GesturePrimitive { name: GestureName::Nod, timing: GestureTiming::Onset },
        }],
    }
}

/// Check a draft against the expressive banks and the re-prompt policy.
pub fn validate_plan(draft: PlanDraft, reason: EndReason) -> Result<BehaviorPlan, String> {
    let strategy = Strategy::parse(&draft.strategy).ok_or_else(|| alloc::format!("unknown strategy {:?}", draft.strategy))?;
    if reason == EndReason::NoResponse && !matches!(strategy, Strategy::ElicitingResponse | Strategy::ReducingChoices) {
        return Err(alloc::format!("{} is not a re-prompt strategy", strategy.as_str()));
    }
    if draft.items.is_empty() {
        return Err("plan has no items".into());
    }
    let mut items = Vec::with_capacity(draft.items.len());
    for (i, it) in draft.items.into_iter().enumerate() {
        if it.text.trim().is_empty() {
            return Err(alloc::format!("item {i} has no text"));
        }
        let face = FaceName::parse(&it.face).ok_or_else(|| alloc::format!("item {i}: unknown face {:?}", it.face))?;
        let gesture = GestureName::parse(&it.gesture).ok_or_else(|| alloc::format!("item {i}: unknown gesture {:?}", it.gesture))?;
        let timing = GestureTiming::parse(&it.timing).ok_or_else(|| alloc::format!("item {i}: unknown timing {:?}", it.timing))?;
        if !it.intensity.is_finite() {
            return Err(alloc::format!("item {i}: intensity is not finite"));
        }
        items.push(UtteranceItem {
            text: it.text.trim().to_string(),
            face: FaceExpression::new(face, it.intensity.clamp(0.0, 1.0)),
            gesture: GesturePrimitive { name: gesture, timing },
        });
    }
    Ok(BehaviorPlan { strategy, items })
}

/// Ask the planner for a response to the child's turn, screening every
/// item and regenerating up to `bound` times before the canned fallback.
pub fn plan_response(
    providers: &Providers,
    memory: &ConversationMemory,
    turn: &FinalizedTurn,
    ctx: &QuestionContext,
    bound: u32,
    memory_window: usize,
    seed: u64,
) -> Result<Moderated<BehaviorPlan>, ProviderError> {
    let lines: Vec<MemoryLine> = memory
        .recent(memory_window)
        .iter()
        .map(|t| MemoryLine {
            speaker: match t.speaker {
                Speaker::Robot => "robot".to_string(),
                Speaker::Child => "child".to_string(),
            },
            text: t.text.clone(),
        })
        .collect();
    let memory_doc = wire::render(&lines);
    let base = derive_seed(seed, "plan");
    moderate(
        bound,
        providers.safety.as_ref(),
        |attempt| {
            let req = TextGenRequest::new(TemplateId::ResponsePlan, base.wrapping_add(u64::from(attempt)))
                .var(var::QUESTION_KIND, ctx.kind.as_str())
                .var(var::PHASE, ctx.phase.as_str())
                .var(var::CHILD_TEXT, turn.transcript.clone())
                .var(var::END_REASON, turn.reason.as_str())
                .var(var::TARGET_WORD, ctx.target_word.clone())
                .var(var::THEME, ctx.theme.clone())
                .var(var::FOLLOWUP_INDEX, alloc::format!("{}", ctx.phase.index()))
                .var(var::MEMORY, memory_doc.clone());
            let raw = match providers.text.generate_text(&req) {
                Ok(r) => r,
                Err(ProviderError::MalformedOutput(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            Ok(wire::parse::<PlanDraft>(&raw).ok().and_then(|d| validate_plan(d, turn.reason).ok()))
        },
        fallback_plan,
    )
}

const AFFIRMATIVE: &[&str] = &["yes", "yeah", "yep", "yup", "sure", "okay", "ok", "please", "yay", "uh-huh", "definitely", "alright"];
const NEGATIVE: &[&str] = &["no", "nope", "nah", "not", "don't", "dont", "later", "stop", "bye"];
const UNSURE: &[&str] = &["don't know", "dont know", "not sure", "maybe", "i guess"];

/// Read a yes/no answer by lexicon match on the finalized transcript.
pub fn parse_intent(transcript: &str) -> Intent {
    if transcript.trim().is_empty() {
        return Intent::NoResponse;
    }
    if UNSURE.iter().any(|p| contains_ci(transcript, p)) {
        return Intent::Ambiguous;
    }
    let toks: Vec<String> = transcript.split_whitespace().map(normalize_token).collect();
    let yes = toks.iter().any(|t| AFFIRMATIVE.contains(&t.as_str()));
    let no = toks.iter().any(|t| NEGATIVE.contains(&t.as_str()));
    match (yes, no) {
        (true, false) => Intent::Yes,
        (false, true) => Intent::No,
        _ => Intent::Ambiguous,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::wire::PlanItemDraft;
    use crate::provider::{BlocklistSafety, MockTextConfig, MockTextGen, ScriptedTextGen};
    use crate::session::Strategy;
    use alloc::sync::Arc;
    use alloc::vec;
    use core::cell::Cell;
    use proptest::prelude::*;

    fn answered(text: &str) -> FinalizedTurn {
        FinalizedTurn { transcript: text.into(), t_start_ms: 500, t_end_ms: 2000, reason: EndReason::SilenceTimeout }
    }

    fn silent() -> FinalizedTurn {
        FinalizedTurn { transcript: String::new(), t_start_ms: 0, t_end_ms: 10_000, reason: EndReason::NoResponse }
    }

    fn ctx(kind: QuestionKind, phase: PlanPhase) -> QuestionContext {
        QuestionContext { kind, phase, target_word: "gumption".into(), theme: "pony".into() }
    }

    #[test]
    fn correct_recall_praised() {
        let p = Providers::mock();
        let m = plan_response(
            &p,
            &ConversationMemory::default(),
            &answered("Pip had gumption on the cliff"),
            &ctx(QuestionKind::Recall, PlanPhase::FollowUp(1)),
            3,
            12,
            1,
        )
        .unwrap();
        assert_eq!(m.value.strategy, Strategy::Praise);
        assert!((1..=2).contains(&m.value.items.len()));
        assert_eq!(m.attempts, 1);
    }

    #[test]
    fn no_response_reduces_choices() {
        let m = plan_response(
            &Providers::mock(),
            &ConversationMemory::default(),
            &silent(),
            &ctx(QuestionKind::Recall, PlanPhase::Reprompt),
            3,
            12,
            1,
        )
        .unwrap();
        assert_eq!(m.value.strategy, Strategy::ReducingChoices);
        assert!(m.value.items[0].text.contains(", or "));
    }

    #[test]
    fn always_unsafe_falls_back() {
        let cfg = MockTextConfig { plan_unsafe_rate: 1.0, ..MockTextConfig::default() };
        let gen = Arc::new(ScriptedTextGen::new(Some(Arc::new(MockTextGen::new(cfg)))));
        let p = Providers::mock().with_text(gen.clone());
        let m = plan_response(
            &p,
            &ConversationMemory::default(),
            &answered("I liked it"),
            &ctx(QuestionKind::Perception, PlanPhase::Closing),
            3,
            12,
            9,
        )
        .unwrap();
        assert!(m.fallback_used);
        assert_eq!(m.value.items[0].text, FALLBACK_TEXT);
        assert_eq!(gen.calls(TemplateId::ResponsePlan), 3);
        assert_eq!(m.rejections.len(), 3);
    }

    #[test]
    fn off_bank_plan_regenerated() {
        let bad = PlanDraft {
            strategy: "praise".into(),
            items: vec![PlanItemDraft {
                text: "Hi".into(),
                face: "angry".into(),
                intensity: 0.5,
                gesture: "nod".into(),
                timing: "onset".into(),
            }],
        };
        let gen = Arc::new(
            ScriptedTextGen::new(Some(Arc::new(MockTextGen::default())))
                .sequence(TemplateId::ResponsePlan, vec![Ok(wire::render(&bad)), Ok("{oops".into())]),
        );
        let p = Providers::mock().with_text(gen.clone());
        let m = plan_response(
            &p,
            &ConversationMemory::default(),
            &answered("yes"),
            &ctx(QuestionKind::Perception, PlanPhase::Closing),
            3,
            12,
            2,
        )
        .unwrap();
        // Both scripted replies are unusable, the third call repeats the last one.
        assert!(m.fallback_used);
        assert!(m.rejections.is_empty());
        assert_eq!(gen.calls(TemplateId::ResponsePlan), 3);
    }

    #[test]
    fn no_response_requires_reprompt_strategy() {
        let d = PlanDraft {
            strategy: "praise".into(),
            items: vec![PlanItemDraft {
                text: "Great!".into(),
                face: "happy".into(),
                intensity: 0.5,
                gesture: "nod".into(),
                timing: "onset".into(),
            }],
        };
        assert!(validate_plan(d.clone(), EndReason::NoResponse).is_err());
        assert!(validate_plan(d, EndReason::SilenceTimeout).is_ok());
    }

    #[test]
    fn moderation_call_counts() {
        let safety = BlocklistSafety::default();
        let calls = Cell::new(0);
        let m = moderate_and_retry(
            |_| {
                calls.set(calls.get() + 1);
                Ok("Hello!".into())
            },
            &safety,
            3,
        )
        .unwrap();
        assert_eq!((m.attempts, calls.get(), m.fallback_used), (1, 1, false));

        let replies = ["You are so stupid.", "I hate you.", "What a lovely day!"];
        let calls = Cell::new(0);
        let m = moderate_and_retry(
            |i| {
                calls.set(calls.get() + 1);
                Ok(replies[i as usize].into())
            },
            &safety,
            3,
        )
        .unwrap();
        assert_eq!((m.value.as_str(), calls.get()), ("What a lovely day!", 3));

        let m = moderate_and_retry(|_| Ok("knife".into()), &safety, 3).unwrap();
        assert_eq!(m.value, FALLBACK_TEXT);
        assert!(m.fallback_used);
    }

    struct Broken;
    impl SafetyClassifier for Broken {
        fn classify_safety(&self, _: &str) -> Result<crate::provider::SafetyVerdict, ProviderError> {
            Err(ProviderError::Unavailable("down".into()))
        }
    }

    #[test]
    fn classifier_failure_fails_closed() {
        let m = moderate_and_retry(|_| Ok("Hello!".into()), &Broken, 2).unwrap();
        assert!(m.fallback_used);
    }

    #[test]
    fn generator_outage_propagates() {
        let p = Providers::mock().with_text(Arc::new(crate::provider::Unavailable));
        let e = plan_response(
            &p,
            &ConversationMemory::default(),
            &answered("yes"),
            &ctx(QuestionKind::Perception, PlanPhase::Closing),
            3,
            12,
            2,
        );
        assert!(matches!(e, Err(ProviderError::Unavailable(_))));
    }

    #[test]
    fn intents() {
        assert_eq!(parse_intent("Yes!"), Intent::Yes);
        assert_eq!(parse_intent("yeah okay"), Intent::Yes);
        assert_eq!(parse_intent("no thanks"), Intent::No);
        assert_eq!(parse_intent("I don't know"), Intent::Ambiguous);
        assert_eq!(parse_intent("dinosaurs"), Intent::Ambiguous);
        assert_eq!(parse_intent(""), Intent::NoResponse);
        assert_eq!(parse_intent("yes no"), Intent::Ambiguous);
    }

    proptest! {
        #[test]
        fn mock_plans_always_on_bank(seed in any::<u64>(), text in "[a-z ]{0,40}", kind in 0usize..3, phase in 0u8..3) {
            let rate = MockTextConfig { plan_unsafe_rate: 0.3, ..MockTextConfig::default() };
            let p = Providers::mock().with_text(Arc::new(MockTextGen::new(rate)));
            let turn = if text.trim().is_empty() { silent() } else { answered(&text) };
            let phase = match phase { 0 => PlanPhase::Reprompt, 1 => PlanPhase::FollowUp(1), _ => PlanPhase::Closing };
            let m = plan_response(&p, &ConversationMemory::default(), &turn, &ctx(QuestionKind::ORDER[kind], phase), 3, 12, seed).unwrap();
            let safety = BlocklistSafety::default();
            for item in &m.value.items {
                prop_assert!(safety.find(&item.text).is_none());
            }
            if turn.reason == EndReason::NoResponse {
                prop_assert!(matches!(m.value.strategy, Strategy::ReducingChoices | Strategy::ElicitingResponse));
            }
        }
    }
}
