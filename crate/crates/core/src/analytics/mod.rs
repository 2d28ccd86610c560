//! Usage and learning measures computed from session logs and vocabulary
//! assessments.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::domain::{count_matches, normalize_token, ChildCurriculum, LogKind, LogPayload, SessionLog};
use crate::session::Strategy;

mod assessment;
mod wilcoxon;

pub use assessment::{generate_ppvt_item, score_assessment, Answer, AssessmentScore, PpvtItem};
pub use wilcoxon::{midranks, wilcoxon_signed_rank, Alternative, Method, WilcoxonResult, EXACT_MAX_N, PERMUTATION_RESAMPLES};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnalyticsError {
    #[error("malformed log: {0}")]
    MalformedLog(String),
    #[error("not enough data: {0}")]
    InsufficientData(String),
    #[error("all differences are zero")]
    AllZeroDiffs,
    #[error("differences must be finite")]
    NonFinite,
    #[error("assessment item for {word:?} still invalid after {attempts} attempts: {last}")]
    AuthoringExhausted { word: String, attempts: u32, last: String },
    #[error("pre and post assessments cover different words")]
    MismatchedWordSets,
    #[error(transparent)]
    Provider(#[from] crate::provider::ProviderError),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ChildMetrics {
    /// Distinct days with at least one story started.
    pub days_used: usize,
    pub stories_listened: usize,
    /// Mean session length over all sessions with entries.
    pub avg_session_minutes: f64,
    pub target_word_counts: BTreeMap<String, usize>,
    pub total_target_uses: usize,
    /// Mean whitespace-token count over child turns that contain speech.
    pub avg_words_per_turn: f64,
    pub child_turns: usize,
    pub strategy_counts: BTreeMap<Strategy, usize>,
}

fn check_log(log: &SessionLog, child_id: &str) -> Result<(), AnalyticsError> {
    if log.child_id != child_id {
        return Err(AnalyticsError::MalformedLog(alloc::format!("log for {:?} in metrics for {child_id:?}", log.child_id)));
    }
    log.check_monotone().map_err(|e| AnalyticsError::MalformedLog(alloc::format!("{e}")))?;
    let mut open: Option<&str> = None;
    for e in &log.entries {
        match &e.payload {
            LogPayload::StoryStart { story_id, .. } => {
                if let Some(prev) = open {
                    return Err(AnalyticsError::MalformedLog(alloc::format!("story {story_id} started before {prev} ended")));
                }
                open = Some(story_id);
            }
            LogPayload::StoryEnd { story_id } => {
                if open != Some(story_id.as_str()) {
                    return Err(AnalyticsError::MalformedLog(alloc::format!("story {story_id} ended without starting")));
                }
                open = None;
            }
            _ => {}
        }
    }
    Ok(())
}

fn child_texts(log: &SessionLog) -> impl Iterator<Item = &str> {
    log.entries.iter().filter_map(|e| match &e.payload {
        LogPayload::ChildUtterance { text, .. } if !text.trim().is_empty() => Some(text.as_str()),
        _ => None,
    })
}

/// A story interrupted by a provider outage has a start and no end; it
/// still counts as listened-to.
pub fn compute_metrics(logs: &[SessionLog], curriculum: &ChildCurriculum) -> Result<ChildMetrics, AnalyticsError> {
    let mut m = ChildMetrics::default();
    for w in &curriculum.target_words {
        m.target_word_counts.insert(normalize_token(&w.word), 0);
    }
    let mut days = BTreeSet::new();
    let (mut minutes, mut sessions, mut words) = (0.0, 0usize, 0usize);
    for log in logs {
        check_log(log, &curriculum.child_id)?;
        let stories = log.count(LogKind::StoryStart);
        m.stories_listened += stories;
        if stories > 0 {
            days.insert(log.day_index);
        }
        if !log.entries.is_empty() {
            minutes += log.duration_ms() as f64 / 60_000.0;
            sessions += 1;
        }
        for text in child_texts(log) {
            m.child_turns += 1;
            words += text.split_whitespace().count();
            for w in &curriculum.target_words {
                let n = count_matches(text, w);
                *m.target_word_counts.entry(normalize_token(&w.word)).or_default() += n;
                m.total_target_uses += n;
            }
        }
        for e in &log.entries {
            if let LogPayload::Strategy { strategy } = e.payload {
                *m.strategy_counts.entry(strategy).or_default() += 1;
            }
        }
    }
    m.days_used = days.len();
    m.avg_session_minutes = if sessions == 0 { 0.0 } else { minutes / sessions as f64 };
    m.avg_words_per_turn = if m.child_turns == 0 { 0.0 } else { words as f64 / m.child_turns as f64 };
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitHalf {
    pub first_half_avg: f64,
    pub second_half_avg: f64,
    /// Second minus first.
    pub diff: f64,
}

/// Mean words per child turn on days `1..=day_boundary` against later days.
pub fn split_half_words_per_turn(logs: &[SessionLog], day_boundary: u32) -> Result<SplitHalf, AnalyticsError> {
    let mut halves = [(0usize, 0usize); 2];
    for log in logs {
        log.check_monotone().map_err(|e| AnalyticsError::MalformedLog(alloc::format!("{e}")))?;
        let h = usize::from(log.day_index > day_boundary);
        for text in child_texts(log) {
            halves[h].0 += text.split_whitespace().count();
            halves[h].1 += 1;
        }
    }
    let avg = |(w, t): (usize, usize), label: &str| {
        if t == 0 {
            Err(AnalyticsError::InsufficientData(alloc::format!("no child turns in the {label} half")))
        } else {
            Ok(w as f64 / t as f64)
        }
    };
    let first = avg(halves[0], "first")?;
    let second = avg(halves[1], "second")?;
    Ok(SplitHalf { first_half_avg: first, second_half_avg: second, diff: second - first })
}

/// Per-session digest for caregivers: word exposure and sample quotes.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Digest {
    pub stories: usize,
    /// Word to (times heard in stories, times the child said it).
    pub exposure: BTreeMap<String, (usize, usize)>,
    pub sample_turns: Vec<String>,
}

pub fn digest(logs: &[SessionLog], curriculum: &ChildCurriculum, max_samples: usize) -> Digest {
    let mut d = Digest::default();
    for w in &curriculum.target_words {
        d.exposure.insert(normalize_token(&w.word), (0, 0));
    }
    for log in logs {
        d.stories += log.count(LogKind::StoryStart);
        for e in &log.entries {
            match &e.payload {
                LogPayload::RobotUtterance { text } => {
                    for w in &curriculum.target_words {
                        d.exposure.entry(normalize_token(&w.word)).or_default().0 += count_matches(text, w);
                    }
                }
                LogPayload::ChildUtterance { text, .. } if !text.trim().is_empty() => {
                    let mut used = false;
                    for w in &curriculum.target_words {
                        let n = count_matches(text, w);
                        used |= n > 0;
                        d.exposure.entry(normalize_token(&w.word)).or_default().1 += n;
                    }
                    if used && d.sample_turns.len() < max_samples {
                        d.sample_turns.push(text.clone());
                    }
                }
                _ => {}
            }
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::WordTarget;
    use crate::session::SessionState;
    use crate::session::Strategy;
    use crate::turn::EndReason;
    use alloc::string::ToString;
    use alloc::{format, vec};
    use proptest::prelude::*;

    fn curriculum() -> ChildCurriculum {
        ChildCurriculum {
            child_id: "c1".into(),
            display_name: "Sam".into(),
            age_years: 5,
            target_words: ["clumsy", "massive", "ordinary", "imitate"].iter().map(|w| WordTarget::new(*w)).collect(),
            themes: vec!["pony".into()],
            deployment_days: 8,
        }
    }

    pub(crate) fn log_with(day: u32, stories: usize, turns: &[&str], strategies: &[Strategy]) -> SessionLog {
        let mut l = SessionLog::new("c1", day, 0, 0);
        let mut t = 0;
        let mut step = |l: &mut SessionLog, p: LogPayload| {
            l.push(t, p).unwrap();
            t += 1000;
        };
        step(&mut l, LogPayload::StateEnter { state: SessionState::Boot });
        for s in 0..stories {
            let id = alloc::format!("s{s}");
            step(&mut l, LogPayload::StoryStart { story_id: id.clone(), word: "clumsy".into(), theme: "pony".into(), index: s as u32 + 1 });
            step(&mut l, LogPayload::StoryEnd { story_id: id });
        }
        for text in turns {
            step(
                &mut l,
                LogPayload::ChildUtterance { text: (*text).into(), reason: EndReason::SilenceTimeout, started_ms: 0, intent: None },
            );
        }
        for s in strategies {
            step(&mut l, LogPayload::Strategy { strategy: *s });
        }
        l
    }

    #[test]
    fn golden_fixture() {
        let l = log_with(1, 3, &["yes", "the pony was very clumsy", "clumsy"], &[]);
        let m = compute_metrics(&[l], &curriculum()).unwrap();
        assert_eq!(m.stories_listened, 3);
        assert_eq!(m.target_word_counts["clumsy"], 2);
        assert!((m.avg_words_per_turn - 7.0 / 3.0).abs() < 1e-12);
        assert_eq!(format!("{:.2}", m.avg_words_per_turn), "2.33");
    }

    #[test]
    fn empty_logs() {
        let m = compute_metrics(&[], &curriculum()).unwrap();
        assert_eq!((m.stories_listened, m.days_used, m.total_target_uses, m.child_turns), (0, 0, 0, 0));
        assert_eq!(m.avg_words_per_turn, 0.0);
    }

    #[test]
    fn no_response_turns_excluded() {
        let l = log_with(1, 0, &["yes", "", "one two three"], &[]);
        let m = compute_metrics(&[l], &curriculum()).unwrap();
        assert_eq!(m.child_turns, 2);
        assert_eq!(m.avg_words_per_turn, 2.0);
    }

    #[test]
    fn malformed_rejected() {
        let mut l = log_with(1, 1, &[], &[]);
        l.entries[1].t_ms = 5000;
        assert!(matches!(compute_metrics(&[l], &curriculum()), Err(AnalyticsError::MalformedLog(_))));
        let mut other = log_with(1, 1, &[], &[]);
        other.child_id = "c2".into();
        assert!(compute_metrics(&[other], &curriculum()).is_err());
    }

    #[test]
    fn split_half() {
        let sym = [log_with(1, 0, &["a b"], &[]), log_with(5, 0, &["c d"], &[])];
        assert_eq!(split_half_words_per_turn(&sym, 4).unwrap().diff, 0.0);
        let grow = [log_with(2, 0, &["a b", "c d"], &[]), log_with(6, 0, &["a b c d"], &[]), log_with(8, 0, &["a b c d"], &[])];
        let s = split_half_words_per_turn(&grow, 4).unwrap();
        assert_eq!((s.first_half_avg, s.second_half_avg, s.diff), (2.0, 4.0, 2.0));
        assert!(matches!(split_half_words_per_turn(&grow[..1], 4), Err(AnalyticsError::InsufficientData(_))));
    }

    #[test]
    fn digest_counts_exposure() {
        let mut l = log_with(1, 1, &["I was clumsy"], &[]);
        l.push(20_000, LogPayload::RobotUtterance { text: "A clumsy, massive pony.".into() }).unwrap();
        let d = digest(&[l], &curriculum(), 5);
        assert_eq!(d.exposure["clumsy"], (1, 1));
        assert_eq!(d.exposure["massive"], (1, 0));
        assert_eq!(d.sample_turns, vec!["I was clumsy".to_string()]);
    }

    proptest! {
        #[test]
        fn additive(a in 0usize..6, b in 0usize..6, ta in 0usize..4, tb in 0usize..4) {
            let la = log_with(1, a, &vec!["clumsy pony"; ta], &[Strategy::Praise]);
            let lb = log_with(2, b, &vec!["massive"; tb], &[Strategy::Extension, Strategy::Praise]);
            let c = curriculum();
            let ma = compute_metrics(core::slice::from_ref(&la), &c).unwrap();
            let mb = compute_metrics(core::slice::from_ref(&lb), &c).unwrap();
            let mab = compute_metrics(&[la, lb], &c).unwrap();
            prop_assert_eq!(mab.stories_listened, ma.stories_listened + mb.stories_listened);
            prop_assert_eq!(mab.total_target_uses, ma.total_target_uses + mb.total_target_uses);
            prop_assert_eq!(mab.child_turns, ma.child_turns + mb.child_turns);
            prop_assert_eq!(mab.strategy_counts.get(&Strategy::Praise).copied(), Some(2));
        }
    }
}
