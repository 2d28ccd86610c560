//! Response planner and assessment item mocks.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{glossary, MockTextGen};
use crate::domain::{count_matches, word_count, WordTarget};
use crate::provider::wire::{self, var, PlanDraft, PlanItemDraft, PpvtDraft};
use crate::provider::{ProviderError, TextGenRequest};
use crate::util::{contains_ci, derive_seed, fill, rng, unit};

fn item(text: String, face: &str, intensity: f64, gesture: &str, timing: &str) -> PlanItemDraft {
    PlanItemDraft { text, face: face.to_string(), intensity, gesture: gesture.to_string(), timing: timing.to_string() }
}

fn followup_question(kind: &str, index: &str, pairs: &[(&str, &str)]) -> String {
    let t = match (kind, index) {
        ("recall", "1") => "What happened after that?",
        ("recall", _) => "How do you think everyone felt at the end?",
        ("practice", "1") => "Can you use the word {word} to tell me about your day?",
        ("practice", _) => "Who else do you know who shows {word}?",
        _ => "What else can you tell me?",
    };
    fill(t, pairs)
}

/// Rule table: no response gets two choices, using the target word gets
/// praise, otherwise the strategy follows answer length.
pub(super) fn respond(mock: &MockTextGen, req: &TextGenRequest) -> Result<String, ProviderError> {
    let kind = req.get(var::QUESTION_KIND);
    let phase = req.get(var::PHASE);
    let child = req.get(var::CHILD_TEXT);
    let word = req.get(var::TARGET_WORD).trim();
    let theme = req.get(var::THEME).trim();
    let index = req.get(var::FOLLOWUP_INDEX);
    let pairs = [("word", word), ("theme", theme)];
    let no_response = req.get(var::END_REASON) == "no_response" || child.trim().is_empty();

    let mut plan = if no_response {
        let choices = match kind {
            "perception" => "That's okay! Did you like the story a little, or a lot?",
            "recall" => "That's okay! Was it the part about {word}, or the part about {theme}?",
            "practice" => "That's okay! Do you want to say the word {word}, or tell me about {theme}?",
            _ => "That's okay! Do you want to say yes, or no?",
        };
        PlanDraft {
            strategy: "reducing_choices".into(),
            items: alloc::vec![item(fill(choices, &pairs), "curious", 0.6, "head_tilt", "onset")],
        }
    } else {
        let used_word = !word.is_empty() && count_matches(child, &WordTarget::new(word)) > 0;
        let unsure = ["don't know", "dont know", "not sure", "i forgot", "no idea"].iter().any(|p| contains_ci(child, p));
        let n = word_count(child);
        let (strategy, text, face, intensity, gesture) = if used_word {
            ("praise", fill("Wow, you used the word {word}! Great job!", &pairs), "happy", 0.8, "both_arms_up")
        } else if unsure && kind == "recall" {
            ("gentle_correction", "Good try! Let's remember it together.".to_string(), "thinking", 0.5, "head_tilt")
        } else if kind == "perception" {
            ("praise", "I'm so glad you listened with me!".to_string(), "happy", 0.7, "nod")
        } else if n >= 6 {
            ("extension", "I love that! You told me so much.".to_string(), "excited", 0.7, "nod")
        } else if n >= 3 {
            ("co_participation", "Ooh, let's think about it together.".to_string(), "happy", 0.6, "lean_in")
        } else {
            ("reducing_choices", "Hmm, was it something big, or something small?".to_string(), "curious", 0.6, "head_tilt")
        };
        PlanDraft { strategy: strategy.into(), items: alloc::vec![item(text, face, intensity, gesture, "onset")] }
    };
    if phase == "followup" {
        plan.items.push(item(followup_question(kind, index, &pairs), "curious", 0.6, "lean_in", "end"));
    }

    let draw = unit(derive_seed(req.seed, &alloc::format!("plan-unsafe|{kind}|{phase}|{index}|{child}")));
    if draw < mock.config.plan_unsafe_rate {
        if let Some(p) = mock.unsafe_phrase(req.seed ^ 0x5eed) {
            plan.items[0].text = p.to_string();
        }
    }
    Ok(wire::render(&plan))
}

const DISTRACTORS: &[&str] = &[
    "a red apple on a table",
    "a child brushing their teeth",
    "a cat sleeping on a rug",
    "a yellow school bus",
    "a bird sitting in a nest",
    "a pair of rain boots by the door",
    "a boy flying a kite",
    "a girl reading a book under a tree",
    "a bowl of soup with a spoon",
    "a green frog on a lily pad",
];

pub(super) fn ppvt(req: &TextGenRequest) -> Result<String, ProviderError> {
    let word = req.get(var::WORD).trim();
    if word.is_empty() {
        return Err(ProviderError::MalformedOutput("assessment item needs a word".to_string()));
    }
    let mut r = rng(req.seed, &alloc::format!("ppvt|{word}"));
    let correct = match glossary::picture(word) {
        Some(p) => p.to_string(),
        None => alloc::format!("a picture that shows what {word} means"),
    };
    let mut pool: Vec<&str> = DISTRACTORS.to_vec();
    pool.shuffle(&mut r);
    let mut options: Vec<String> = pool.into_iter().take(3).map(String::from).collect();
    let correct_index = r.random_range(0..4);
    options.insert(correct_index, correct);
    Ok(wire::render(&PpvtDraft { prompt: alloc::format!("Point to the picture that shows {word}."), options, correct_index }))
}
