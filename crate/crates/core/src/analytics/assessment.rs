//! Four-option picture-choice vocabulary probes and pre/post scoring.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::AnalyticsError;
use crate::domain::normalize_token;
use crate::provider::wire::{self, var, PpvtDraft};
use crate::provider::{ProviderError, Providers, TemplateId, TextGenRequest};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PpvtItem {
    pub word: String,
    pub prompt: String,
    pub options: Vec<String>,
    pub correct_index: usize,
}

fn check_item(d: &PpvtDraft) -> Result<(), String> {
    if d.prompt.trim().is_empty() {
        return Err("empty prompt".into());
    }
    if d.options.len() != 4 {
        return Err(alloc::format!("{} options, expected 4", d.options.len()));
    }
    if d.options.iter().any(|o| o.trim().is_empty()) {
        return Err("empty option".into());
    }
    let distinct: BTreeSet<String> = d.options.iter().map(|o| o.trim().to_lowercase()).collect();
    if distinct.len() != 4 {
        return Err("duplicate options".into());
    }
    if d.correct_index >= 4 {
        return Err(alloc::format!("correct_index {} out of range", d.correct_index));
    }
    Ok(())
}

/// Generate and validate one item, regenerating with the next seed when
/// the draft is malformed or any text fails the safety screen.
pub fn generate_ppvt_item(providers: &Providers, word: &str, retry_bound: u32, seed: u64) -> Result<PpvtItem, AnalyticsError> {
    if normalize_token(word).is_empty() {
        return Err(AnalyticsError::AuthoringExhausted { word: word.to_string(), attempts: 0, last: "empty word".into() });
    }
    let bound = retry_bound.max(1);
    let mut last = String::new();
    for attempt in 0..bound {
        let req = TextGenRequest::new(TemplateId::PpvtItem, seed.wrapping_add(u64::from(attempt))).var(var::WORD, word);
        let draft: PpvtDraft = match providers.text.generate_text(&req).and_then(|t| wire::parse(&t)) {
            Ok(d) => d,
            Err(ProviderError::MalformedOutput(m)) => {
                last = m;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        if let Err(m) = check_item(&draft) {
            last = m;
            continue;
        }
        let mut safe = providers.safety.classify_safety(&draft.prompt)?.safe;
        for o in &draft.options {
            safe &= providers.safety.classify_safety(o)?.safe;
        }
        if !safe {
            last = "item failed the safety screen".into();
            continue;
        }
        return Ok(PpvtItem {
            word: word.trim().to_string(),
            prompt: draft.prompt,
            options: draft.options,
            correct_index: draft.correct_index,
        });
    }
    Err(AnalyticsError::AuthoringExhausted { word: word.to_string(), attempts: bound, last })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    Correct,
    Incorrect,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AssessmentScore {
    pub learned: BTreeMap<String, bool>,
    pub learned_count: usize,
    pub pre_correct: usize,
    pub post_correct: usize,
}

/// A word is learned when it was missed before and answered correctly after.
pub fn score_assessment(pre: &BTreeMap<String, Answer>, post: &BTreeMap<String, Answer>) -> Result<AssessmentScore, AnalyticsError> {
    let norm = |m: &BTreeMap<String, Answer>| -> BTreeMap<String, Answer> { m.iter().map(|(k, v)| (normalize_token(k), *v)).collect() };
    let (pre, post) = (norm(pre), norm(post));
    if pre.keys().ne(post.keys()) {
        return Err(AnalyticsError::MismatchedWordSets);
    }
    let mut s = AssessmentScore::default();
    for (word, before) in &pre {
        let after = post[word];
        let learned = *before != Answer::Correct && after == Answer::Correct;
        s.learned.insert(word.clone(), learned);
        s.learned_count += usize::from(learned);
        s.pre_correct += usize::from(*before == Answer::Correct);
        s.post_correct += usize::from(after == Answer::Correct);
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::ScriptedTextGen;
    use alloc::sync::Arc;
    use alloc::vec;

    #[test]
    fn massive_item() {
        let p = Providers::mock();
        let item = generate_ppvt_item(&p, "massive", 3, 4).unwrap();
        assert_eq!(item.options.len(), 4);
        assert!(item.options[item.correct_index].contains("enormous"));
        assert_eq!(item, generate_ppvt_item(&p, "massive", 3, 4).unwrap());
    }

    #[test]
    fn duplicate_options_regenerated() {
        let dup = PpvtDraft {
            prompt: "Point to massive.".into(),
            options: vec!["a".into(), "a".into(), "b".into(), "c".into()],
            correct_index: 0,
        };
        let gen = Arc::new(ScriptedTextGen::new(Some(Arc::new(crate::provider::MockTextGen::default()))).on_seed(
            TemplateId::PpvtItem,
            10,
            Ok(wire::render(&dup)),
        ));
        let p = Providers::mock().with_text(gen.clone());
        let item = generate_ppvt_item(&p, "massive", 3, 10).unwrap();
        assert_eq!(gen.calls(TemplateId::PpvtItem), 2);
        assert_eq!(item.options.iter().collect::<BTreeSet<_>>().len(), 4);
    }

    fn answers(xs: &[(&str, Answer)]) -> BTreeMap<String, Answer> {
        xs.iter().map(|(w, a)| ((*w).to_string(), *a)).collect()
    }

    #[test]
    fn scoring() {
        use Answer::*;
        let words = ["w1", "w2", "w3", "w4"];
        let all = |a| answers(&words.map(|w| (w, a)));
        assert_eq!(score_assessment(&all(Incorrect), &all(Correct)).unwrap().learned_count, 4);
        let pre = answers(&[("w1", Correct), ("w2", Incorrect), ("w3", Unknown), ("w4", Incorrect)]);
        assert_eq!(score_assessment(&pre, &all(Correct)).unwrap().learned_count, 3);
        let short = answers(&[("w1", Correct)]);
        assert_eq!(score_assessment(&short, &all(Correct)), Err(AnalyticsError::MismatchedWordSets));
    }
}
