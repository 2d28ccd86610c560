//! Scripted child personas that produce turn event streams for headless
//! sessions.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{QuestionKind, ValidationReport};
use crate::session::{ChildInput, Prompt, PromptKind};
use crate::turn::TurnEvent;
use crate::util::{derive_seed, fill, rng};

/// Delay between voice onset and the first recognized word.
pub const ASR_LEAD_MS: u64 = 200;
/// Gap between the final partial and the end of voice activity.
pub const VOICE_TAIL_MS: u64 = 100;
const FILLER: &[&str] = &["and", "then", "um", "the", "pony", "went", "really", "fast", "like", "this"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResponseRule {
    /// Silence from the end of the robot's prompt to voice onset.
    pub latency_ms: u64,
    /// Answers with `{word}` and `{theme}` placeholders; one is drawn per turn.
    pub templates: Vec<String>,
    /// Inclusive word-count range the drawn answer is cut or padded to.
    pub words_per_turn: Option<[u32; 2]>,
    pub ms_per_word: u64,
    /// Words emitted per recognizer partial.
    pub words_per_partial: u32,
    pub silence_probability: f64,
    pub ramble_probability: f64,
    pub ramble_words: u32,
    /// A ramble stops for `ramble_pause_ms` after this many words.
    pub ramble_pause_every: u32,
    pub ramble_pause_ms: u64,
}

impl Default for ResponseRule {
    fn default() -> Self {
        Self {
            latency_ms: 800,
            templates: vec!["yes".into()],
            words_per_turn: None,
            ms_per_word: 300,
            words_per_partial: 3,
            silence_probability: 0.0,
            ramble_probability: 0.0,
            ramble_words: 25,
            ramble_pause_every: 8,
            ramble_pause_ms: 1200,
        }
    }
}

impl ResponseRule {
    pub fn say(templates: &[&str]) -> Self {
        Self { templates: templates.iter().map(|t| t.to_string()).collect(), ..Self::default() }
    }

    fn validate(&self, field: &str, report: &mut ValidationReport) {
        for (name, p) in [("silence_probability", self.silence_probability), ("ramble_probability", self.ramble_probability)] {
            if !(0.0..=1.0).contains(&p) {
                report.violate(alloc::format!("{field}.{name}"), alloc::format!("{p} outside [0, 1]"));
            }
        }
        if self.templates.is_empty() && self.silence_probability < 1.0 {
            report.violate(alloc::format!("{field}.templates"), "no templates for a rule that can speak");
        }
        if self.words_per_partial == 0 {
            report.violate(alloc::format!("{field}.words_per_partial"), "must be positive");
        }
        if self.ms_per_word == 0 {
            report.violate(alloc::format!("{field}.ms_per_word"), "must be positive");
        }
        if let Some([lo, hi]) = self.words_per_turn {
            if lo == 0 || lo > hi {
                report.violate(alloc::format!("{field}.words_per_turn"), alloc::format!("bad range [{lo}, {hi}]"));
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YesNo {
    Yes,
    No,
    Silence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Persona {
    pub name: String,
    /// Keyed by prompt kind: `ask_story`, `ask_another`, `clarify`,
    /// `perception`, `recall`, `practice`, `followup_recall`,
    /// `followup_practice`, `reprompt`.
    #[serde(default)]
    pub response_rules: BTreeMap<String, ResponseRule>,
    /// Used for prompt kinds without a rule.
    #[serde(default)]
    pub default_rule: ResponseRule,
    /// Answers to successive yes/no prompts; the last entry repeats.
    #[serde(default = "always_yes")]
    pub askstory_policy: Vec<YesNo>,
    #[serde(default)]
    pub seed: u64,
}

fn always_yes() -> Vec<YesNo> {
    vec![YesNo::Yes]
}

const KEYS: &[&str] =
    &["ask_story", "ask_another", "clarify", "perception", "recall", "practice", "followup_recall", "followup_practice", "reprompt"];

fn is_yes_no(kind: PromptKind) -> bool {
    matches!(kind, PromptKind::AskStory | PromptKind::AskAnother | PromptKind::Clarify)
}

impl Persona {
    pub fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::default();
        if self.name.trim().is_empty() {
            r.violate("name", "empty");
        }
        for (key, rule) in &self.response_rules {
            if !KEYS.contains(&key.as_str()) {
                r.violate(alloc::format!("response_rules.{key}"), "unknown prompt kind");
            }
            rule.validate(&alloc::format!("response_rules.{key}"), &mut r);
        }
        self.default_rule.validate("default_rule", &mut r);
        if self.askstory_policy.is_empty() {
            r.violate("askstory_policy", "empty");
        }
        r
    }

    pub fn rule(&self, kind: PromptKind) -> &ResponseRule {
        self.response_rules.get(kind.key()).unwrap_or(&self.default_rule)
    }

    /// Event stream for one turn. `yes_no_index` counts the yes/no prompts
    /// answered earlier in the session.
    pub fn respond(&self, prompt: &Prompt, yes_no_index: usize, seed: u64) -> Vec<TurnEvent> {
        let rule = self.rule(prompt.kind);
        let mut r = rng(derive_seed(seed, &self.name) ^ self.seed, prompt.kind.key());
        let words = if is_yes_no(prompt.kind) {
            let last = self.askstory_policy.len().saturating_sub(1);
            match self.askstory_policy.get(yes_no_index.min(last)).copied().unwrap_or(YesNo::Yes) {
                YesNo::Silence => return Vec::new(),
                YesNo::No => vec!["no".to_string(), "thanks".to_string()],
                YesNo::Yes => {
                    if r.random::<f64>() < rule.silence_probability {
                        return Vec::new();
                    }
                    utterance(rule, prompt, &mut r)
                }
            }
        } else {
            if r.random::<f64>() < rule.silence_probability {
                return Vec::new();
            }
            if r.random::<f64>() < rule.ramble_probability {
                return ramble(rule, prompt, &mut r);
            }
            utterance(rule, prompt, &mut r)
        };
        stream(rule, &words, None)
    }
}

fn draw_template(rule: &ResponseRule, prompt: &Prompt, r: &mut impl Rng) -> Vec<String> {
    if rule.templates.is_empty() {
        return Vec::new();
    }
    let t = &rule.templates[r.random_range(0..rule.templates.len())];
    let text = fill(t, &[("word", &prompt.target_word), ("theme", &prompt.theme)]);
    text.split_whitespace().map(String::from).collect()
}

fn pad(words: &mut Vec<String>, n: usize, r: &mut impl Rng) {
    while words.len() < n {
        words.push(FILLER[r.random_range(0..FILLER.len())].to_string());
    }
}

fn utterance(rule: &ResponseRule, prompt: &Prompt, r: &mut impl Rng) -> Vec<String> {
    let mut words = draw_template(rule, prompt, r);
    if let Some([lo, hi]) = rule.words_per_turn {
        let n = r.random_range(lo..=hi) as usize;
        words.truncate(n);
        pad(&mut words, n, r);
    }
    words
}

fn ramble(rule: &ResponseRule, prompt: &Prompt, r: &mut impl Rng) -> Vec<TurnEvent> {
    let mut words = draw_template(rule, prompt, r);
    pad(&mut words, rule.ramble_words as usize, r);
    stream(rule, &words, Some((rule.ramble_pause_every.max(1) as usize, rule.ramble_pause_ms)))
}

/// Voice onset after the latency, one cumulative partial per group of
/// words, voice off shortly after the last one. Pauses split the speech
/// into separate voice segments.
fn stream(rule: &ResponseRule, words: &[String], pauses: Option<(usize, u64)>) -> Vec<TurnEvent> {
    if words.is_empty() {
        return Vec::new();
    }
    let per = rule.words_per_partial.max(1) as usize;
    let mut events = vec![TurnEvent::voice_start(rule.latency_ms)];
    let mut seg_start = rule.latency_ms;
    let mut in_segment = 0u64;
    let mut last = seg_start;
    for i in 1..=words.len() {
        in_segment += 1;
        let t = seg_start + ASR_LEAD_MS + rule.ms_per_word * in_segment;
        if i % per == 0 || i == words.len() || pauses.is_some_and(|(every, _)| i % every == 0) {
            events.push(TurnEvent::partial(t, words[..i].join(" ")));
            last = t;
        }
        if let Some((every, pause)) = pauses {
            if i % every == 0 && i < words.len() {
                let stop = last + VOICE_TAIL_MS;
                events.push(TurnEvent::voice_stop(stop));
                seg_start = stop + pause;
                events.push(TurnEvent::voice_start(seg_start));
                in_segment = 0;
            }
        }
    }
    events.push(TurnEvent::voice_stop(last + VOICE_TAIL_MS));
    events
}

/// A persona bound to one session, tracking how many yes/no prompts it
/// has answered.
#[derive(Debug, Clone)]
pub struct PersonaSource {
    pub persona: Persona,
    yes_no_answered: usize,
}

impl PersonaSource {
    pub fn new(persona: Persona) -> Self {
        Self { persona, yes_no_answered: 0 }
    }
}

impl ChildInput for PersonaSource {
    fn respond(&mut self, prompt: &Prompt, seed: u64) -> Vec<TurnEvent> {
        let events = self.persona.respond(prompt, self.yes_no_answered, seed);
        if is_yes_no(prompt.kind) {
            self.yes_no_answered += 1;
        }
        events
    }
}

fn rules(pairs: &[(&str, ResponseRule)]) -> BTreeMap<String, ResponseRule> {
    pairs.iter().map(|(k, v)| ((*k).to_string(), v.clone())).collect()
}

/// Answers everything promptly with short on-topic replies.
pub fn eager() -> Persona {
    Persona {
        name: "eager".into(),
        response_rules: rules(&[
            ("perception", ResponseRule::say(&["the {theme} was happy", "I saw the {theme}"])),
            ("recall", ResponseRule::say(&["{word}", "it was {word}"])),
            ("practice", ResponseRule::say(&["when I climbed the big tree", "at the park with my dad"])),
            ("followup_recall", ResponseRule::say(&["because it was fun", "I remember it"])),
            ("followup_practice", ResponseRule::say(&["I felt really good", "my friend was there too"])),
            ("reprompt", ResponseRule::say(&["okay I think so"])),
        ]),
        default_rule: ResponseRule::default(),
        askstory_policy: always_yes(),
        seed: 1,
    }
}

/// Slow, short answers with frequent silence; says no after one story.
pub fn reluctant() -> Persona {
    let slow = |t: &[&str], silence: f64| ResponseRule { latency_ms: 2500, silence_probability: silence, ..ResponseRule::say(t) };
    Persona {
        name: "reluctant".into(),
        response_rules: rules(&[
            ("perception", slow(&["a {theme}", "I don't know"], 0.4)),
            ("recall", slow(&["{word}", "I don't know"], 0.5)),
            ("practice", slow(&["no"], 0.6)),
            ("followup_recall", slow(&["maybe"], 0.6)),
            ("followup_practice", slow(&["maybe"], 0.6)),
            ("reprompt", slow(&["um"], 0.5)),
        ]),
        default_rule: slow(&["yes"], 0.0),
        askstory_policy: vec![YesNo::Yes, YesNo::No],
        seed: 2,
    }
}

/// Never speaks.
pub fn silent() -> Persona {
    Persona {
        name: "silent".into(),
        response_rules: BTreeMap::new(),
        default_rule: ResponseRule { silence_probability: 1.0, templates: Vec::new(), ..ResponseRule::default() },
        askstory_policy: vec![YesNo::Silence],
        seed: 3,
    }
}

/// Long playful answers with mid-turn pauses.
pub fn rambler() -> Persona {
    let long = |t: &[&str]| ResponseRule { ramble_probability: 1.0, ..ResponseRule::say(t) };
    Persona {
        name: "rambler".into(),
        response_rules: rules(&[
            ("perception", long(&["the {theme} was running around and around"])),
            ("recall", long(&["um it was {word} and also"])),
            ("practice", long(&["one time I was at my grandma's house"])),
            ("followup_recall", long(&["and then the {theme} said"])),
            ("followup_practice", long(&["and my brother did it too"])),
            ("reprompt", long(&["wait wait I know"])),
        ]),
        default_rule: ResponseRule::default(),
        askstory_policy: always_yes(),
        seed: 4,
    }
}

/// Eager, and uses the target word in every practice answer.
pub fn target_word_user() -> Persona {
    let mut p = eager();
    p.name = "target-word-user".into();
    p.seed = 5;
    p.response_rules.insert("practice".into(), ResponseRule::say(&["I was {word} when I tried again", "my dog is {word}"]));
    p.response_rules.insert("followup_practice".into(), ResponseRule::say(&["I was {word} at school"]));
    p
}

pub fn builtin(name: &str) -> Option<Persona> {
    Some(match name {
        "eager" => eager(),
        "reluctant" => reluctant(),
        "silent" => silent(),
        "rambler" => rambler(),
        "target-word-user" => target_word_user(),
        _ => return None,
    })
}

pub const BUILTIN_NAMES: &[&str] = &["eager", "reluctant", "silent", "rambler", "target-word-user"];

/// Prompt kinds a persona can be asked, for exhaustive checks.
pub fn all_prompt_kinds() -> Vec<PromptKind> {
    let mut v = vec![PromptKind::AskStory, PromptKind::AskAnother, PromptKind::Clarify];
    for k in QuestionKind::ORDER {
        v.push(PromptKind::Question(k));
        v.push(PromptKind::Reprompt(k));
        if k != QuestionKind::Perception {
            v.push(PromptKind::FollowUp(k, 1));
            v.push(PromptKind::FollowUp(k, 2));
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::turn::{run_turn, EndReason, TurnConfig, TurnEventKind};
    use proptest::prelude::*;

    fn prompt(kind: PromptKind) -> Prompt {
        Prompt { kind, text: "Would you like a story?".into(), target_word: "gumption".into(), theme: "pony".into(), story_index: 1 }
    }

    #[test]
    fn eager_ask_story() {
        let ev = eager().respond(&prompt(PromptKind::AskStory), 0, 9);
        assert_eq!(ev, vec![TurnEvent::voice_start(800), TurnEvent::partial(1300, "yes"), TurnEvent::voice_stop(1400)]);
        let t = run_turn(&ev, &TurnConfig::default()).unwrap();
        assert_eq!((t.reason, t.t_end_ms, t.transcript.as_str()), (EndReason::SilenceTimeout, 2900, "yes"));
    }

    #[test]
    fn silent_is_no_response() {
        let ev = silent().respond(&prompt(PromptKind::Question(QuestionKind::Recall)), 0, 1);
        assert!(ev.is_empty());
        let t = run_turn(&ev, &TurnConfig::default()).unwrap();
        assert_eq!((t.reason, t.t_end_ms), (EndReason::NoResponse, 10_000));
    }

    #[test]
    fn ramble_survives_pauses() {
        let ev = rambler().respond(&prompt(PromptKind::Question(QuestionKind::Practice)), 0, 3);
        let stops = ev.iter().filter(|e| e.kind == TurnEventKind::VoiceStop).count();
        assert!(stops >= 3);
        let t = run_turn(&ev, &TurnConfig::default()).unwrap();
        assert!(t.transcript.split_whitespace().count() >= 25, "{}", t.transcript);
        assert_eq!(t.reason, EndReason::SilenceTimeout);
        let last_stop = ev.iter().rev().find(|e| e.kind == TurnEventKind::VoiceStop).unwrap().t_ms;
        assert_eq!(t.t_end_ms, last_stop + 1500);
    }

    #[test]
    fn policy_sequence() {
        let mut s = PersonaSource::new(reluctant());
        let first = s.respond(&prompt(PromptKind::AskStory), 0);
        let second = s.respond(&prompt(PromptKind::AskAnother), 0);
        let third = s.respond(&prompt(PromptKind::AskAnother), 0);
        assert!(run_turn(&first, &TurnConfig::default()).unwrap().transcript == "yes");
        assert_eq!(run_turn(&second, &TurnConfig::default()).unwrap().transcript, "no thanks");
        assert_eq!(second, third);
    }

    #[test]
    fn target_word_in_practice() {
        for seed in 0..20 {
            let ev = target_word_user().respond(&prompt(PromptKind::Question(QuestionKind::Practice)), 0, seed);
            assert!(run_turn(&ev, &TurnConfig::default()).unwrap().transcript.contains("gumption"));
        }
    }

    #[test]
    fn builtins_validate() {
        for name in BUILTIN_NAMES {
            let p = builtin(name).unwrap();
            assert!(p.validate().is_empty(), "{name}: {}", p.validate());
            assert_eq!(&p.name, name);
        }
        let mut bad = eager();
        bad.default_rule.silence_probability = 1.5;
        bad.response_rules.insert("story".into(), ResponseRule::default());
        let r = bad.validate();
        assert!(r.has_violation("default_rule.silence_probability"));
        assert!(r.has_violation("response_rules.story"));
    }

    #[test]
    fn persona_round_trips() {
        let p = rambler();
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<Persona>(&json).unwrap(), p);
    }

    proptest! {
        #[test]
        fn streams_are_valid_and_deterministic(seed in any::<u64>(), k in 0usize..15, who in 0usize..5) {
            let p = builtin(BUILTIN_NAMES[who]).unwrap();
            let kinds = all_prompt_kinds();
            let pr = prompt(kinds[k % kinds.len()]);
            let a = p.respond(&pr, 0, seed);
            prop_assert_eq!(&a, &p.respond(&pr, 0, seed));
            prop_assert!(a.windows(2).all(|w| w[0].t_ms <= w[1].t_ms));
            prop_assert!(run_turn(&a, &TurnConfig::default()).is_ok());
        }
    }
}
