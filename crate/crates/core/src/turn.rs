//! End-of-turn detection on a virtual clock.
//!
//! A turn opens at t = 0 when the robot finishes its prompt. The manager
//! consumes voice-activity, partial-recognition and detector events in time
//! order and finalizes exactly once, for one of three reasons: nobody spoke
//! before the onset window closed, the child went quiet for long enough, or
//! the semantic detector judged the utterance complete and the short grace
//! period for trailing speech ran out.
//!
//! A deadline fires as soon as an event at or after it is seen, before that
//! event is applied, so an event landing exactly on a deadline is excluded.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::provider::{TurnEndDetector, TurnEndSignal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TurnConfig {
    pub onset_timeout_ms: u64,
    pub silence_end_ms: u64,
    pub grace_ms: u64,
    pub detector_cadence_ms: u64,
}

impl Default for TurnConfig {
    fn default() -> Self {
        Self { onset_timeout_ms: 10_000, silence_end_ms: 1_500, grace_ms: 500, detector_cadence_ms: 250 }
    }
}

impl TurnConfig {
    pub fn validate(&self) -> Result<(), String> {
        let all = [
            ("onset_timeout_ms", self.onset_timeout_ms),
            ("silence_end_ms", self.silence_end_ms),
            ("grace_ms", self.grace_ms),
            ("detector_cadence_ms", self.detector_cadence_ms),
        ];
        if let Some((name, _)) = all.iter().find(|(_, v)| *v == 0) {
            return Err(alloc::format!("{name} must be positive"));
        }
        if self.grace_ms >= self.silence_end_ms {
            return Err(alloc::format!("grace_ms ({}) must be below silence_end_ms ({})", self.grace_ms, self.silence_end_ms));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "text", rename_all = "snake_case")]
pub enum TurnEventKind {
    VoiceStart,
    VoiceStop,
    AsrPartial(String),
    DetectorComplete,
    DetectorIncomplete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnEvent {
    pub t_ms: u64,
    #[serde(flatten)]
    pub kind: TurnEventKind,
}

impl TurnEvent {
    pub fn new(t_ms: u64, kind: TurnEventKind) -> Self {
        Self { t_ms, kind }
    }

    pub fn voice_start(t_ms: u64) -> Self {
        Self::new(t_ms, TurnEventKind::VoiceStart)
    }

    pub fn voice_stop(t_ms: u64) -> Self {
        Self::new(t_ms, TurnEventKind::VoiceStop)
    }

    pub fn partial(t_ms: u64, text: impl Into<String>) -> Self {
        Self::new(t_ms, TurnEventKind::AsrPartial(text.into()))
    }

    pub fn complete(t_ms: u64) -> Self {
        Self::new(t_ms, TurnEventKind::DetectorComplete)
    }

    pub fn incomplete(t_ms: u64) -> Self {
        Self::new(t_ms, TurnEventKind::DetectorIncomplete)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    NoResponse,
    SilenceTimeout,
    SemanticComplete,
}

impl EndReason {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::NoResponse => "no_response",
            Self::SilenceTimeout => "silence_timeout",
            Self::SemanticComplete => "semantic_complete",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalizedTurn {
    pub transcript: String,
    pub t_start_ms: u64,
    pub t_end_ms: u64,
    pub reason: EndReason,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TurnError {
    #[error("malformed event stream: event at {t_ms} ms follows one at {previous_ms} ms")]
    MalformedStream { t_ms: u64, previous_ms: u64 },
}

/// Incremental end-of-turn state machine for one open turn.
#[derive(Debug, Clone)]
pub struct TurnManager {
    cfg: TurnConfig,
    partials: Vec<String>,
    onset_ms: Option<u64>,
    voice_active: bool,
    last_voice_ms: u64,
    grace_deadline_ms: Option<u64>,
    last_event_ms: u64,
    finalized: Option<FinalizedTurn>,
}

impl TurnManager {
    pub fn new(cfg: TurnConfig) -> Self {
        Self {
            cfg,
            partials: Vec::new(),
            onset_ms: None,
            voice_active: false,
            last_voice_ms: 0,
            grace_deadline_ms: None,
            last_event_ms: 0,
            finalized: None,
        }
    }

    pub fn transcript_so_far(&self) -> String {
        match &self.finalized {
            Some(f) => f.transcript.clone(),
            None => self.partials.join(" "),
        }
    }

    pub fn finalized(&self) -> Option<&FinalizedTurn> {
        self.finalized.as_ref()
    }

    /// Earliest deadline currently armed. The grace deadline wins ties.
    fn pending(&self) -> Option<(u64, EndReason)> {
        let mut best: Option<(u64, EndReason)> = self.grace_deadline_ms.map(|g| (g, EndReason::SemanticComplete));
        let other = match self.onset_ms {
            None => Some((self.cfg.onset_timeout_ms, EndReason::NoResponse)),
            Some(_) if !self.voice_active => Some((self.last_voice_ms + self.cfg.silence_end_ms, EndReason::SilenceTimeout)),
            Some(_) => None,
        };
        if let Some(o) = other {
            if best.is_none_or(|b| o.0 < b.0) {
                best = Some(o);
            }
        }
        best
    }

    fn finalize(&mut self, (t_end_ms, reason): (u64, EndReason)) -> FinalizedTurn {
        let turn = FinalizedTurn {
            transcript: self.partials.join(" "),
            t_start_ms: if reason == EndReason::NoResponse { 0 } else { self.onset_ms.unwrap_or(0) },
            t_end_ms,
            reason,
        };
        self.finalized = Some(turn.clone());
        turn
    }

    /// Apply one event. Returns the finalized turn once a deadline has
    /// passed; later events are ignored and the same turn is returned.
    pub fn feed(&mut self, ev: &TurnEvent) -> Result<Option<FinalizedTurn>, TurnError> {
        if let Some(f) = &self.finalized {
            return Ok(Some(f.clone()));
        }
        if ev.t_ms < self.last_event_ms {
            return Err(TurnError::MalformedStream { t_ms: ev.t_ms, previous_ms: self.last_event_ms });
        }
        if let Some(d) = self.pending().filter(|(t, _)| *t <= ev.t_ms) {
            return Ok(Some(self.finalize(d)));
        }
        self.last_event_ms = ev.t_ms;
        let t = ev.t_ms;
        match &ev.kind {
            TurnEventKind::VoiceStart => {
                self.onset_ms.get_or_insert(t);
                self.voice_active = true;
                self.grace_deadline_ms = None;
            }
            TurnEventKind::VoiceStop => {
                if self.voice_active {
                    self.voice_active = false;
                    self.last_voice_ms = t;
                }
            }
            TurnEventKind::AsrPartial(text) => {
                if self.onset_ms.is_none() {
                    self.onset_ms = Some(t);
                    self.last_voice_ms = t;
                }
                let text = text.trim();
                if !text.is_empty() {
                    self.partials.push(String::from(text));
                }
            }
            TurnEventKind::DetectorComplete => {
                if !self.partials.is_empty() && self.grace_deadline_ms.is_none() {
                    self.grace_deadline_ms = Some(t + self.cfg.grace_ms);
                }
            }
            TurnEventKind::DetectorIncomplete => {}
        }
        Ok(None)
    }

    /// Close the stream. Voice still active at the end is treated as
    /// stopping at the last event.
    pub fn finish(&mut self) -> FinalizedTurn {
        if let Some(f) = &self.finalized {
            return f.clone();
        }
        if self.voice_active {
            self.voice_active = false;
            self.last_voice_ms = self.last_event_ms;
        }
        let d = self.pending().expect("a deadline is always armed once voice is inactive");
        self.finalize(d)
    }
}

pub fn run_turn(events: &[TurnEvent], cfg: &TurnConfig) -> Result<FinalizedTurn, TurnError> {
    let mut tm = TurnManager::new(*cfg);
    for ev in events {
        if let Some(f) = tm.feed(ev)? {
            return Ok(f);
        }
    }
    Ok(tm.finish())
}

/// Interleave semantic detector verdicts into a raw voice and recognition
/// stream: one after every partial, and one per cadence tick while the
/// child is silent, up to the next event or the silence deadline.
pub fn annotate_detector(events: &[TurnEvent], detector: &dyn TurnEndDetector, cfg: &TurnConfig) -> Vec<TurnEvent> {
    let mut out = Vec::with_capacity(events.len() * 2);
    let mut partials: Vec<&str> = Vec::new();
    let mut voice_active = false;
    let verdict = |partials: &[&str], t: u64| match detector.detect_turn_end(&partials.join(" "), t) {
        TurnEndSignal::Complete => TurnEvent::complete(t),
        TurnEndSignal::Incomplete => TurnEvent::incomplete(t),
    };
    for (i, ev) in events.iter().enumerate() {
        out.push(ev.clone());
        match &ev.kind {
            TurnEventKind::VoiceStart => voice_active = true,
            TurnEventKind::VoiceStop => voice_active = false,
            TurnEventKind::AsrPartial(text) => {
                if !text.trim().is_empty() {
                    partials.push(text.trim());
                }
                out.push(verdict(&partials, ev.t_ms));
            }
            _ => {}
        }
        let silent_tick = matches!(ev.kind, TurnEventKind::VoiceStop | TurnEventKind::AsrPartial(_));
        if silent_tick && !voice_active && !partials.is_empty() {
            let horizon = ev.t_ms + cfg.silence_end_ms;
            let next = events.get(i + 1).map_or(horizon, |n| n.t_ms.min(horizon));
            let step = cfg.detector_cadence_ms.max(1);
            let mut t = ev.t_ms + step;
            while t < next {
                out.push(verdict(&partials, t));
                t += step;
            }
        }
    }
    out
}
