//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always reach the output; exits nonzero on any FAIL.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use ella::config::EngineConfig;
use ella::core::analytics::{compute_metrics, split_half_words_per_turn, wilcoxon_signed_rank, Alternative};
use ella::core::behavior::{self, compile_body, validate_trajectory, BehaviorDescription, Channel, Joint, RobotProfile};
use ella::core::domain::{LogPayload, QuestionKind};
use ella::core::pipeline::{count_target_occurrences, AuthoringConstraints, DaySchedule, PackageStatus, Pipeline};
use ella::core::provider::{
    AudioHandle, BlocklistSafety, MockSpeech, MockTextConfig, MockTextGen, Providers, SpeechSynthesizer, VoiceParams,
};
use ella::core::session::{SessionState, Strategy, FALLBACK_TEXT};
use ella::core::simulator::{self, YesNo};
use ella::core::turn::{run_turn, EndReason, TurnConfig, TurnEventKind};
use ella::core::{ChildCurriculum, SessionLog, WordTarget};
use ella::engine;
use ella::formats::parse_scenario;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn curriculum(id: &str, name: &str, words: &[&str], themes: &[&str]) -> ChildCurriculum {
    ChildCurriculum {
        child_id: id.into(),
        display_name: name.into(),
        age_years: 5,
        target_words: words.iter().map(|w| WordTarget::new(*w)).collect(),
        themes: themes.iter().map(|t| (*t).to_string()).collect(),
        deployment_days: 8,
    }
}

fn approved(mut days: Vec<DaySchedule>) -> Vec<DaySchedule> {
    for p in days.iter_mut().flat_map(|d| d.stories.iter_mut()) {
        p.status = PackageStatus::Approved;
    }
    days
}

fn sarah_days() -> &'static [DaySchedule] {
    static D: OnceLock<Vec<DaySchedule>> = OnceLock::new();
    D.get_or_init(|| {
        let c = curriculum("c01", "Sarah", &["gumption", "curious", "brave", "gentle"], &["pony", "space", "ocean"]);
        approved(Pipeline::new(Providers::mock()).build_schedule(&c, 11).unwrap())
    })
}

// Turn timing

fn turn_timing() -> Check {
    let started = Instant::now();
    let dir = root().join("scenarios/turn");
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir).map_err(|e| e.to_string())?.map(|e| e.unwrap().path()).collect();
    files.sort();
    ensure(files.len() == 14, || format!("expected 14 scenarios, found {}", files.len()))?;
    let cfg = TurnConfig::default();
    let mut reasons = BTreeMap::new();
    for f in &files {
        let name = f.file_name().unwrap().to_string_lossy().into_owned();
        let s = parse_scenario(&std::fs::read_to_string(f).unwrap()).map_err(|e| format!("{name}: {e}"))?;
        let e = s.expect.clone().ok_or_else(|| format!("{name}: no expectation"))?;
        let got = run_turn(&s.events, &cfg).map_err(|e| format!("{name}: {e}"))?;
        let want = (e.reason, e.t_start_ms, e.t_end_ms, e.transcript.clone());
        let have = (Some(got.reason), Some(got.t_start_ms), Some(got.t_end_ms), Some(got.transcript.clone()));
        ensure(want == have, || format!("{name}: expected {want:?}, got {have:?}"))?;
        *reasons.entry(got.reason).or_insert(0) += 1;
        // No scenario may finalize semantically off a completion that
        // arrived before any transcript text.
        if got.reason == EndReason::SemanticComplete {
            let mut text = false;
            let mut armed = None;
            for ev in &s.events {
                match &ev.kind {
                    TurnEventKind::AsrPartial(t) if !t.trim().is_empty() => text = true,
                    TurnEventKind::DetectorComplete if text && armed.is_none() => armed = Some(ev.t_ms),
                    TurnEventKind::VoiceStart => armed = None,
                    _ => {}
                }
            }
            ensure(armed.map(|t| t + cfg.grace_ms) == Some(got.t_end_ms), || format!("{name}: semantic end not at completion + grace"))?;
        }
    }
    ensure(reasons.len() == 3, || format!("scenarios cover only {reasons:?}"))?;
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("14/14 scenarios exact (0 ms tolerance), {} ms", elapsed.as_millis()))
}

// Session flow

fn story_blocks(log: &SessionLog) -> Vec<Vec<SessionState>> {
    let mut out = Vec::new();
    let mut cur: Option<Vec<SessionState>> = None;
    for e in &log.entries {
        match &e.payload {
            LogPayload::StoryStart { .. } => cur = Some(Vec::new()),
            LogPayload::StoryEnd { .. } => out.extend(cur.take()),
            LogPayload::StateEnter { state } if state.question_kind().is_some() || matches!(state, SessionState::FollowUp { .. }) => {
                if let Some(c) = cur.as_mut() {
                    c.push(*state);
                }
            }
            _ => {}
        }
    }
    out
}

fn story_indices(log: &SessionLog) -> Vec<u32> {
    log.entries
        .iter()
        .filter_map(|e| match &e.payload {
            LogPayload::StoryStart { index, .. } => Some(*index),
            _ => None,
        })
        .collect()
}

fn session(day: &DaySchedule, delivered: u32, persona: &simulator::Persona) -> SessionLog {
    let mut d = day.clone();
    d.delivered_count = delivered;
    let cfg = EngineConfig::default();
    engine::run_day(&cfg, &Providers::mock(), &mut d, "Sarah", persona, 0, 5).unwrap().log
}

fn session_flow() -> Check {
    use QuestionKind::{Practice, Recall};
    use SessionState::*;
    let days = sarah_days();
    let block = vec![
        QuestionPerception,
        QuestionRecall,
        FollowUp { parent: Recall, index: 1 },
        FollowUp { parent: Recall, index: 2 },
        QuestionPractice,
        FollowUp { parent: Practice, index: 1 },
        FollowUp { parent: Practice, index: 2 },
    ];

    let eager = session(&days[0], 0, &simulator::eager());
    ensure(story_indices(&eager) == [1, 2, 3, 4], || format!("eager: stories {:?}", story_indices(&eager)))?;
    let blocks = story_blocks(&eager);
    ensure(blocks.len() == 4 && blocks.iter().all(|b| *b == block), || format!("eager: question blocks {blocks:?}"))?;
    let states: Vec<SessionState> = eager.states().collect();
    let last_end = eager.entries.iter().rposition(|e| matches!(e.payload, LogPayload::StoryEnd { .. })).unwrap();
    let farewell_after = eager.entries[last_end..].iter().any(|e| matches!(e.payload, LogPayload::StateEnter { state: Farewell }));
    ensure(farewell_after && states.last() == Some(&Sleep), || {
        format!("eager: ends with {:?}", &states[states.len().saturating_sub(3)..])
    })?;

    let mut decline = simulator::eager();
    decline.askstory_policy = vec![YesNo::No];
    let declined = session(&days[0], 0, &decline);
    ensure(story_indices(&declined).is_empty(), || "decline: a story started".into())?;
    ensure(declined.states().any(|s| s == Farewell), || "decline: no farewell".into())?;

    let resumed = session(&days[1], 2, &simulator::eager());
    ensure(story_indices(&resumed) == [3, 4], || format!("resume: stories {:?}", story_indices(&resumed)))?;

    let exhausted = session(&days[2], 4, &simulator::eager());
    let states: Vec<SessionState> = exhausted.states().collect();
    let dreaming = states.iter().position(|s| *s == Dreaming);
    ensure(story_indices(&exhausted).is_empty() && dreaming.is_some() && states.last() == Some(&Sleep), || {
        format!("exhausted: states {states:?}")
    })?;
    ensure(!states.contains(&AskStory), || "exhausted: asked for a story".into())?;

    let started = Instant::now();
    let outcomes = engine::simulate(&EngineConfig::default(), &Providers::mock(), days, "Sarah", &simulator::eager(), 8, 3)
        .map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let stories: usize = outcomes.iter().map(|o| story_indices(&o.log).len()).sum();
    ensure(stories == 32, || format!("8-day run delivered {stories} stories"))?;
    ensure(elapsed < Duration::from_secs(5), || format!("8-day run took {elapsed:?}"))?;
    Ok(format!("eager 4x[P,R,FU,FU,Pr,FU,FU]+farewell, decline 0, resume [3,4], exhausted dreaming; 8-day run {} ms", elapsed.as_millis()))
}

// Content constraints

/// Ten curricula shaped like the deployment's households.
fn households() -> Vec<ChildCurriculum> {
    let rows: [(&str, [&str; 4]); 10] = [
        ("Grace", ["massive", "ordinary", "clumsy", "imitate"]),
        ("Andrew", ["permission", "self-control", "imagine", "confident"]),
        ("Sarah", ["compassion", "awestruck", "perseverance", "gumption"]),
        ("George", ["chirp", "permission", "consequences", "orbit"]),
        ("Jason", ["clumsy", "imitate", "somersault", "frisky"]),
        ("Natalie", ["advocate", "bait", "justice", "apartment"]),
        ("James", ["frisky", "wonder", "permission", "sympathy"]),
        ("Susan", ["achieve", "attempt", "persistent", "considerate"]),
        ("Helen", ["advocate", "sympathy", "legal", "empathy"]),
        ("Isabella", ["usual", "sheriff", "adventure", "orbit"]),
    ];
    let themes = ["pony", "space", "ocean", "dinosaurs", "giraffes", "castles"];
    rows.iter()
        .enumerate()
        .map(|(i, (name, words))| {
            let t: Vec<&str> = (0..3).map(|k| themes[(i + k) % themes.len()]).collect();
            curriculum(&format!("p{:02}", i + 1), name, words, &t)
        })
        .collect()
}

/// Whole-token matches found by scanning characters: a form counts where
/// it is bounded on each side by whitespace, the text edge, or a run of
/// punctuation leading to either.
fn brute_force_count(body: &str, target: &WordTarget) -> usize {
    let text: Vec<char> = body.to_lowercase().chars().collect();
    let mut forms: Vec<Vec<char>> =
        std::iter::once(&target.word).chain(&target.inflections).map(|f| f.to_lowercase().chars().collect()).collect();
    forms.sort();
    forms.dedup();
    let clean_side = |mut it: Box<dyn Iterator<Item = &char> + '_>| loop {
        match it.next() {
            None => return true,
            Some(c) if c.is_whitespace() => return true,
            Some(c) if c.is_alphanumeric() => return false,
            Some(_) => {}
        }
    };
    let mut n = 0;
    for f in &forms {
        for i in 0..text.len() {
            if text[i..].starts_with(f) && clean_side(Box::new(text[..i].iter().rev())) && clean_side(Box::new(text[i + f.len()..].iter()))
            {
                n += 1;
            }
        }
    }
    n
}

fn content_constraints() -> Check {
    let band = AuthoringConstraints::default().word_count_band;
    let pipeline = Pipeline::new(Providers::mock());
    let (mut packages, mut mismatches) = (0, 0);
    for (i, c) in households().iter().enumerate() {
        let days = pipeline.build_schedule(c, 100 + i as u64).map_err(|e| format!("{}: {e}", c.display_name))?;
        for p in days.iter().flat_map(|d| &d.stories) {
            packages += 1;
            let body = &p.story.body;
            let counted = count_target_occurrences(body, &p.story.target);
            let scanned = brute_force_count(body, &p.story.target);
            if counted != scanned {
                mismatches += 1;
            }
            ensure(scanned >= 3, || format!("{}: {scanned} occurrences", p.story.story_id))?;
            let words = body.split(|c: char| c.is_whitespace()).filter(|t| !t.is_empty()).count();
            ensure(words >= band[0] && words <= band[1], || format!("{}: {words} words outside {band:?}", p.story.story_id))?;
        }
    }
    ensure(packages == 320, || format!("{packages} packages"))?;
    ensure(mismatches == 0, || format!("{mismatches} occurrence-count mismatches"))?;
    Ok(format!("{packages}/320 packages: occurrences >= 3, words in {band:?}, 0 counter mismatches"))
}

// Trajectory safety

fn trajectory_safety() -> Check {
    let profile = RobotProfile::default();
    let provider = Providers::mock();
    let cfg = behavior::BehaviorConfig::default();
    let stories: Vec<_> = sarah_days().iter().flat_map(|d| d.stories.iter().map(|p| p.story.clone())).collect();
    let speech = MockSpeech::default();
    let mut stages = 0;
    for seed in 0..200u64 {
        let story = &stories[seed as usize % stories.len()];
        let audio = speech.synthesize_speech(&story.body, &VoiceParams::default()).map_err(|e| e.to_string())?.handle;
        let program =
            behavior::synthesize(provider.text.as_ref(), story, &audio, &profile, &cfg, seed).map_err(|e| format!("seed {seed}: {e}"))?;
        let report = validate_trajectory(&program.body, &profile, &audio);
        ensure(report.is_empty(), || format!("seed {seed}: {report}"))?;
        stages += program.body.stages.len();
    }

    let audio: AudioHandle = speech.synthesize_speech(&vec!["word"; 44].join(" "), &VoiceParams::default()).unwrap().handle;
    let mut adversarial = 0;
    for mag in [1e6, 1e5, 720.0] {
        for signs in 0u32..32 {
            let assigns: Vec<String> = Joint::ALL
                .iter()
                .enumerate()
                .map(|(k, j)| format!("{}={}", j.as_str(), if signs >> k & 1 == 1 { -mag } else { mag }))
                .collect();
            let d = BehaviorDescription {
                segment_index: 0,
                t_ms: 1000,
                channel: Channel::Body,
                description: format!("{} for 500ms", assigns.join(" ")),
            };
            let traj = compile_body(&[d], &audio, &profile).map_err(|e| e.to_string())?;
            let first = traj.stages.first().ok_or("adversarial request produced no stage")?;
            for (k, j) in Joint::ALL.iter().enumerate() {
                let range = profile.limits.get(*j);
                let want = if signs >> k & 1 == 1 { range.min } else { range.max };
                ensure(first.target_deg[j.index()] == want, || {
                    format!("{} = {} not clamped to {want}", j.as_str(), first.target_deg[j.index()])
                })?;
            }
            let report = validate_trajectory(&traj, &profile, &audio);
            ensure(report.is_empty(), || format!("adversarial: {report}"))?;
            adversarial += 1;
        }
    }
    Ok(format!("200/200 runs ({stages} stages) pass validate_trajectory; {adversarial}/{adversarial} out-of-range requests clamped"))
}

// Moderation

fn moderation() -> Check {
    let blocked: Vec<String> = BlocklistSafety::default_entries().iter().map(|e| e.token.to_lowercase()).collect();
    let days = sarah_days();
    let (mut turns, mut rejects, mut fallbacks, mut plans) = (0usize, 0usize, 0usize, 0usize);
    let cfg = EngineConfig::default();
    let mut seed = 0u64;
    for rate in [0.2, 0.5, 0.8, 1.0] {
        let text = MockTextGen::new(MockTextConfig { plan_unsafe_rate: rate, ..MockTextConfig::default() });
        let providers = Providers::mock().with_text(Arc::new(text));
        let mut rate_turns = 0;
        while rate_turns < 260 {
            seed += 1;
            let mut day = days[(seed % 8) as usize].clone();
            let log = engine::run_day(&cfg, &providers, &mut day, "Sarah", &simulator::target_word_user(), 0, seed)
                .map_err(|e| e.to_string())?
                .log;
            let mut pending: Vec<u32> = Vec::new();
            let mut awaiting: Option<usize> = None;
            for e in &log.entries {
                match &e.payload {
                    LogPayload::ChildUtterance { .. } => rate_turns += 1,
                    LogPayload::ModerationReject { attempt, .. } => {
                        ensure(*attempt <= 3 && *attempt as usize == pending.len() + 1, || {
                            format!("seed {seed}: reject attempt {attempt}")
                        })?;
                        pending.push(*attempt);
                        rejects += 1;
                    }
                    LogPayload::Strategy { .. } => {
                        plans += 1;
                        awaiting = Some(pending.len());
                        pending.clear();
                    }
                    LogPayload::RobotUtterance { text } => {
                        let lower = text.to_lowercase();
                        if let Some(tok) = blocked.iter().find(|t| lower.contains(t.as_str())) {
                            return Err(format!("seed {seed}: robot said {tok:?} in {text:?}"));
                        }
                        if let Some(n) = awaiting.take() {
                            let fell_back = text == FALLBACK_TEXT;
                            ensure(fell_back == (n == 3), || format!("seed {seed}: {n} rejections, fallback {fell_back}"))?;
                            fallbacks += usize::from(fell_back);
                        }
                    }
                    _ => {}
                }
            }
            ensure(pending.is_empty(), || format!("seed {seed}: rejections without a plan"))?;
        }
        turns += rate_turns;
    }
    ensure(turns >= 1000, || format!("only {turns} turns"))?;
    ensure(fallbacks > 0 && fallbacks < plans, || format!("fallback in {fallbacks} of {plans} plans"))?;
    Ok(format!("{turns} turns, {plans} plans, {rejects} rejections, {fallbacks} fallbacks; 0 blocklisted tokens spoken, retries <= 3"))
}

// Wilcoxon

/// Doubled midranks of magnitudes 1, 2, 3 and the upper-tail counts of the
/// null distribution of 2 W+, for a sample holding `counts[m - 1]` copies of
/// each magnitude. Built by listing every sign pattern.
struct Null {
    rank2: [u32; 3],
    tail: Vec<u64>,
    patterns: u64,
}

fn enumerate_null(counts: [usize; 3]) -> Null {
    let mags: Vec<usize> = (0..3).flat_map(|m| std::iter::repeat_n(m, counts[m])).collect();
    let mut rank2 = [0u32; 3];
    for m in 0..3 {
        let less: usize = counts[..m].iter().sum();
        rank2[m] = (2 * less + counts[m] + 1) as u32;
    }
    let max: u32 = mags.iter().map(|m| rank2[*m]).sum();
    let mut hist = vec![0u64; max as usize + 2];
    for signs in 0u32..1 << mags.len() {
        let w2: u32 = mags.iter().enumerate().filter(|(i, _)| signs >> i & 1 == 1).map(|(_, m)| rank2[*m]).sum();
        hist[w2 as usize] += 1;
    }
    let mut tail = hist.clone();
    for i in (0..tail.len() - 1).rev() {
        tail[i] += tail[i + 1];
    }
    Null { rank2, tail, patterns: 1 << mags.len() }
}

fn wilcoxon() -> Check {
    let started = Instant::now();
    let mut cache: Vec<Option<Null>> = (0..9 * 9 * 9).map(|_| None).collect();
    let (mut vectors, mut worst) = (0u64, 0.0f64);
    let mut diffs = [0.0f64; 8];
    for len in 1..=8usize {
        // Odometer over -3..=3 in every position; counts track nonzero magnitudes.
        let mut v = [-3i8; 8];
        let mut counts = [0usize; 3];
        counts[2] = len;
        loop {
            if counts != [0; 3] {
                let null = cache[counts[0] * 81 + counts[1] * 9 + counts[2]].get_or_insert_with(|| enumerate_null(counts));
                let mut observed = 0u32;
                for i in 0..len {
                    if v[i] > 0 {
                        observed += null.rank2[v[i] as usize - 1];
                    }
                    diffs[i] = f64::from(v[i]);
                }
                let oracle = null.tail[observed as usize] as f64 / null.patterns as f64;
                let p = wilcoxon_signed_rank(&diffs[..len], Alternative::Greater).map_err(|e| format!("{:?}: {e}", &v[..len]))?.p_value;
                worst = worst.max((p - oracle).abs());
                vectors += 1;
            }
            let mut i = 0;
            // 3 wraps to -3: same magnitude, counts unchanged.
            while i < len && v[i] == 3 {
                v[i] = -3;
                i += 1;
            }
            if i == len {
                break;
            }
            if v[i] != 0 {
                counts[v[i].unsigned_abs() as usize - 1] -= 1;
            }
            v[i] += 1;
            if v[i] != 0 {
                counts[v[i].unsigned_abs() as usize - 1] += 1;
            }
        }
    }
    ensure(worst <= 1e-12, || format!("max |p - oracle| = {worst:e}"))?;

    let spec = [2.0, 2.0, 4.0, 1.0, 4.0, 1.0, 3.0, 3.0, 4.0, 3.0];
    let reread = [2.0, 2.0, 4.0, 1.0, 2.0, 1.0, 3.0, 3.0, 4.0, 3.0];
    let mut notes = Vec::new();
    for (label, d) in [("stated", &spec), ("re-read", &reread)] {
        let r = wilcoxon_signed_rank(d, Alternative::Greater).map_err(|e| e.to_string())?;
        ensure(r.p_value < 0.005, || format!("{label} vector p = {}", r.p_value))?;
        ensure((r.p_value - 1.0 / 1024.0).abs() < 1e-15 && r.w_plus == 55.0, || format!("{label}: W+ {} p {}", r.w_plus, r.p_value))?;
        notes.push(format!("{label} p={:.5}", r.p_value));
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!("{vectors} vectors, max error {worst:.1e}; {} (W+=55, z not reported); {:.1} s", notes.join(", "), elapsed.as_secs_f64()))
}

// Analytics

struct Shape {
    name: &'static str,
    stories: usize,
    words: [(&'static str, usize); 4],
    words_per_turn: &'static str,
}

const SHAPES: [Shape; 10] = [
    Shape {
        name: "Grace",
        stories: 18,
        words: [("massive", 14), ("ordinary", 16), ("clumsy", 13), ("imitate", 0)],
        words_per_turn: "3.78",
    },
    Shape {
        name: "Andrew",
        stories: 13,
        words: [("permission", 3), ("self-control", 2), ("imagine", 1), ("confident", 0)],
        words_per_turn: "3.48",
    },
    Shape {
        name: "Sarah",
        stories: 18,
        words: [("compassion", 2), ("awestruck", 2), ("perseverance", 0), ("gumption", 0)],
        words_per_turn: "3.48",
    },
    Shape {
        name: "George",
        stories: 4,
        words: [("chirp", 2), ("permission", 0), ("consequences", 0), ("orbit", 0)],
        words_per_turn: "2.46",
    },
    Shape { name: "Jason", stories: 11, words: [("clumsy", 8), ("imitate", 1), ("somersault", 0), ("frisky", 0)], words_per_turn: "4.91" },
    Shape { name: "Natalie", stories: 12, words: [("advocate", 2), ("bait", 1), ("justice", 1), ("apartment", 0)], words_per_turn: "3.02" },
    Shape { name: "James", stories: 10, words: [("frisky", 4), ("wonder", 3), ("permission", 1), ("sympathy", 0)], words_per_turn: "2.48" },
    Shape {
        name: "Susan",
        stories: 30,
        words: [("achieve", 23), ("attempt", 17), ("persistent", 16), ("considerate", 10)],
        words_per_turn: "6.30",
    },
    Shape { name: "Helen", stories: 20, words: [("advocate", 9), ("sympathy", 7), ("legal", 5), ("empathy", 5)], words_per_turn: "4.98" },
    Shape { name: "Isabella", stories: 11, words: [("usual", 3), ("sheriff", 1), ("adventure", 1), ("orbit", 0)], words_per_turn: "4.60" },
];

const STRATEGY_TOTALS: [(Strategy, usize); 4] =
    [(Strategy::ReducingChoices, 364), (Strategy::Extension, 200), (Strategy::CoParticipation, 86), (Strategy::ElicitingResponse, 32)];

const TURNS_PER_CHILD: usize = 100;

/// Plant a child's corpus: the stories spread over eight days, exactly
/// `TURNS_PER_CHILD` turns whose words total `words_per_turn * 100`, the
/// target words used the given number of times, and this child's share of
/// each strategy.
fn plant(shape: &Shape, id: &str, strategies: &[(Strategy, usize)]) -> Vec<SessionLog> {
    let total_words: usize = shape.words_per_turn.replace('.', "").parse().unwrap();
    let mut tokens: Vec<&str> = shape.words.iter().flat_map(|(w, n)| std::iter::repeat_n(*w, *n)).collect();
    tokens.resize(total_words, "and");
    let mut turns = vec![Vec::new(); TURNS_PER_CHILD];
    for (i, t) in tokens.into_iter().enumerate() {
        turns[i % TURNS_PER_CHILD].push(t);
    }
    let mut strategy_list: Vec<Strategy> = strategies.iter().flat_map(|(s, n)| std::iter::repeat_n(*s, *n)).collect();
    let strategy_total = strategy_list.len();
    let mut logs = Vec::new();
    let mut story = 0;
    for day in 1..=8u32 {
        let mut log = SessionLog::new(id, day, 0, u64::from(day) * 86_400_000);
        let mut t = 0u64;
        let mut push = |log: &mut SessionLog, p: LogPayload| {
            t += 1000;
            log.push(t, p).unwrap();
        };
        let quota = shape.stories * day as usize / 8 - shape.stories * (day as usize - 1) / 8;
        for _ in 0..quota {
            story += 1;
            let sid = format!("{id}-{story}");
            push(&mut log, LogPayload::StoryStart { story_id: sid.clone(), word: shape.words[0].0.into(), theme: "pony".into(), index: 1 });
            push(&mut log, LogPayload::StoryEnd { story_id: sid });
        }
        let lo = TURNS_PER_CHILD * (day as usize - 1) / 8;
        let hi = TURNS_PER_CHILD * day as usize / 8;
        for turn in &turns[lo..hi] {
            push(
                &mut log,
                LogPayload::ChildUtterance { text: turn.join(" "), reason: EndReason::SilenceTimeout, started_ms: 0, intent: None },
            );
        }
        push(&mut log, LogPayload::ChildUtterance { text: String::new(), reason: EndReason::NoResponse, started_ms: 0, intent: None });
        let take = strategy_total * day as usize / 8 - strategy_total * (day as usize - 1) / 8;
        for s in strategy_list.drain(..take).collect::<Vec<_>>() {
            push(&mut log, LogPayload::Strategy { strategy: s });
        }
        logs.push(log);
    }
    logs
}

fn split_fixture(first: &[&str], second: &[&str]) -> Vec<SessionLog> {
    [(2, first), (6, second)]
        .iter()
        .map(|(day, texts)| {
            let mut l = SessionLog::new("s", *day, 0, 0);
            for (i, t) in texts.iter().enumerate() {
                l.push(
                    i as u64 * 10,
                    LogPayload::ChildUtterance { text: (*t).into(), reason: EndReason::SilenceTimeout, started_ms: 0, intent: None },
                )
                .unwrap();
            }
            l
        })
        .collect()
}

fn analytics() -> Check {
    let mut totals: BTreeMap<Strategy, usize> = BTreeMap::new();
    for (i, shape) in SHAPES.iter().enumerate() {
        let id = format!("p{:02}", i + 1);
        // Each strategy total split across the ten children by index.
        let share: Vec<(Strategy, usize)> = STRATEGY_TOTALS.iter().map(|(s, n)| (*s, n * (i + 1) / 10 - n * i / 10)).collect();
        let logs = plant(shape, &id, &share);
        let words: Vec<&str> = shape.words.iter().map(|(w, _)| *w).collect();
        let c = curriculum(&id, shape.name, &words, &["pony"]);
        let m = compute_metrics(&logs, &c).map_err(|e| format!("{}: {e}", shape.name))?;
        ensure(m.stories_listened == shape.stories, || format!("{}: {} stories", shape.name, m.stories_listened))?;
        for (w, n) in shape.words {
            ensure(m.target_word_counts[w] == n, || format!("{}: {w} used {} times, planted {n}", shape.name, m.target_word_counts[w]))?;
        }
        let planted_total: usize = shape.words.iter().map(|(_, n)| n).sum();
        ensure(m.total_target_uses == planted_total, || format!("{}: total {}", shape.name, m.total_target_uses))?;
        let planted: f64 = shape.words_per_turn.parse().unwrap();
        ensure(format!("{:.2}", m.avg_words_per_turn) == shape.words_per_turn && (m.avg_words_per_turn - planted).abs() <= 0.01, || {
            format!("{}: {:.4} words/turn", shape.name, m.avg_words_per_turn)
        })?;
        ensure(m.child_turns == TURNS_PER_CHILD, || format!("{}: {} turns", shape.name, m.child_turns))?;
        for (s, n) in &m.strategy_counts {
            *totals.entry(*s).or_default() += n;
        }
        ensure(share.iter().all(|(s, n)| m.strategy_counts.get(s).copied().unwrap_or(0) == *n), || {
            format!("{}: strategies {:?}", shape.name, m.strategy_counts)
        })?;
    }
    let want: BTreeMap<Strategy, usize> = STRATEGY_TOTALS.into_iter().collect();
    ensure(totals == want, || format!("strategy totals {totals:?}"))?;

    // Hand arithmetic: (2+4)/2=3 vs (5+5+8)/3=6; 4/4=1 vs 3/1=3; (6+2)/2=4 vs (3+4)/2=3.5.
    let fixtures = [
        (split_fixture(&["a b", "a b c d"], &["a b c d e", "a b c d e", "a b c d e f g h"]), 3.0, 6.0),
        (split_fixture(&["a", "b", "c", "d"], &["a b c"]), 1.0, 3.0),
        (split_fixture(&["a b c d e f", "a b"], &["a b c", "a b c d"]), 4.0, 3.5),
    ];
    for (i, (logs, first, second)) in fixtures.iter().enumerate() {
        let s = split_half_words_per_turn(logs, 4).map_err(|e| e.to_string())?;
        ensure(s.first_half_avg == *first && s.second_half_avg == *second && s.diff == second - first, || {
            format!("split fixture {i}: {s:?}")
        })?;
    }
    Ok("10 planted children recovered exactly (Susan 30 stories, 66 uses, 6.30 words/turn); strategies 364/200/86/32; 3/3 split-half fixtures".into())
}

// Replay determinism

fn replay() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = |s: &str| tmp.path().join(s);
    let ella = |args: &[&std::ffi::OsStr]| -> Result<(), String> {
        let out = Command::new(env!("CARGO_BIN_EXE_ella")).args(args).output().map_err(|e| e.to_string())?;
        ensure(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())
    };
    let c = &households()[7];
    ella::formats::write_json(&d("curriculum.json"), c).map_err(|e| e.to_string())?;
    ella(&[
        "generate".as_ref(),
        "--curriculum".as_ref(),
        d("curriculum.json").as_os_str(),
        "--out".as_ref(),
        d("days").as_os_str(),
        "--auto-approve".as_ref(),
    ])?;
    let mut runs = Vec::new();
    for run in ["a", "b"] {
        ella(&[
            "simulate".as_ref(),
            "--schedule".as_ref(),
            d("days").as_os_str(),
            "--curriculum".as_ref(),
            d("curriculum.json").as_os_str(),
            "--persona".as_ref(),
            root().join("personas/rambler.toml").as_os_str(),
            "--days".as_ref(),
            "8".as_ref(),
            "--out".as_ref(),
            d(run).as_os_str(),
        ])?;
        let mut files: Vec<(PathBuf, Vec<u8>)> = std::fs::read_dir(d(run))
            .map_err(|e| e.to_string())?
            .map(|e| e.unwrap().path())
            .map(|p| (PathBuf::from(p.file_name().unwrap()), std::fs::read(&p).unwrap()))
            .collect();
        files.sort();
        runs.push(files);
    }
    ensure(runs[0].len() == 8, || format!("{} logs", runs[0].len()))?;
    ensure(runs[0] == runs[1], || "the two runs differ".into())?;
    let bytes: usize = runs[0].iter().map(|(_, b)| b.len()).sum();
    Ok(format!("2 runs x 8 days, {bytes} bytes of logs, byte-identical"))
}

type Criterion = (&'static str, fn() -> Check);

fn main() {
    let criteria: [Criterion; 8] = [
        ("turn-timing", turn_timing),
        ("session-flow", session_flow),
        ("content-constraints", content_constraints),
        ("trajectory-safety", trajectory_safety),
        ("moderation-totality", moderation),
        ("wilcoxon-exactness", wilcoxon),
        ("analytics-fixtures", analytics),
        ("replay-determinism", replay),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| (*s).to_string())).unwrap_or_default())
        });
        match result {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
