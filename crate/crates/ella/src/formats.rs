//! On-disk document formats: JSON curricula and schedules, JSONL session
//! logs, turn scenario files and the trajectory text format.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ella_core::behavior::{Joint, JointTrajectory};
use ella_core::pipeline::DaySchedule;
use ella_core::turn::{EndReason, TurnEvent, TurnEventKind};
use ella_core::{validate_curriculum, ChildCurriculum, SessionLog, SessionLogEntry};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Json { path: PathBuf, message: String },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io { path: path.to_path_buf(), source }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, FormatError> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    serde_json::from_str(&text).map_err(|e| FormatError::Json { path: path.to_path_buf(), message: e.to_string() })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io(dir))?;
    }
    let mut text = serde_json::to_string_pretty(value).expect("documents serialize");
    text.push('\n');
    fs::write(path, text).map_err(io(path))
}

pub fn read_curriculum(path: &Path) -> Result<ChildCurriculum, FormatError> {
    let c: ChildCurriculum = read_json(path)?;
    let report = validate_curriculum(&c);
    if !report.is_empty() {
        return Err(FormatError::Invalid(format!("{}: {report}", path.display())));
    }
    Ok(c)
}

pub fn day_file(dir: &Path, day: u32) -> PathBuf {
    dir.join(format!("day-{day:02}.json"))
}

pub fn write_schedules(dir: &Path, days: &[DaySchedule]) -> Result<(), FormatError> {
    for d in days {
        write_json(&day_file(dir, d.day_index), d)?;
    }
    Ok(())
}

pub fn read_schedule(dir: &Path, day: u32) -> Result<DaySchedule, FormatError> {
    read_json(&day_file(dir, day))
}

/// Every `day-NN.json` in `dir`, in day order.
pub fn read_schedules(dir: &Path) -> Result<Vec<DaySchedule>, FormatError> {
    let mut days = Vec::new();
    for entry in fs::read_dir(dir).map_err(io(dir))? {
        let path = entry.map_err(io(dir))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with("day-") && name.ends_with(".json") {
            days.push(read_json::<DaySchedule>(&path)?);
        }
    }
    days.sort_by_key(|d| d.day_index);
    Ok(days)
}

#[derive(Serialize, Deserialize)]
struct LogHeader {
    record: String,
    child_id: String,
    day_index: u32,
    session_index: u32,
    started_at_ms: u64,
}

/// One header line, then one line per entry.
pub fn log_to_jsonl(log: &SessionLog) -> String {
    let header = LogHeader {
        record: "session".into(),
        child_id: log.child_id.clone(),
        day_index: log.day_index,
        session_index: log.session_index,
        started_at_ms: log.started_at_ms,
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for e in &log.entries {
        out.push_str(&serde_json::to_string(e).expect("entry serializes"));
        out.push('\n');
    }
    out
}

pub fn log_from_jsonl(text: &str) -> Result<SessionLog, FormatError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or_else(|| FormatError::Line { line: 1, message: "empty log".into() })?;
    let h: LogHeader = serde_json::from_str(first).map_err(|e| FormatError::Line { line: 1, message: e.to_string() })?;
    if h.record != "session" {
        return Err(FormatError::Line { line: 1, message: format!("expected a session header, found {:?}", h.record) });
    }
    let mut log = SessionLog::new(h.child_id, h.day_index, h.session_index, h.started_at_ms);
    for (i, line) in lines {
        let e: SessionLogEntry = serde_json::from_str(line).map_err(|e| FormatError::Line { line: i + 1, message: e.to_string() })?;
        log.push(e.t_ms, e.payload).map_err(|e| FormatError::Line { line: i + 1, message: e.to_string() })?;
    }
    Ok(log)
}

pub fn log_file_name(log: &SessionLog) -> String {
    format!("{}-d{:02}-s{:02}.jsonl", log.child_id, log.day_index, log.session_index)
}

pub fn write_log(dir: &Path, log: &SessionLog) -> Result<PathBuf, FormatError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let path = dir.join(log_file_name(log));
    fs::write(&path, log_to_jsonl(log)).map_err(io(&path))?;
    Ok(path)
}

/// Every `.jsonl` log in `dir`, ordered by file name.
pub fn read_logs(dir: &Path) -> Result<Vec<SessionLog>, FormatError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(io(p))?;
            log_from_jsonl(&text).map_err(|e| FormatError::Invalid(format!("{}: {e}", p.display())))
        })
        .collect()
}

/// Expected outcome declared in a scenario file with
/// `# expect reason=<r> t_end=<ms> [t_start=<ms>] [transcript=<text>]`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Expectation {
    pub reason: Option<EndReason>,
    pub t_end_ms: Option<u64>,
    pub t_start_ms: Option<u64>,
    pub transcript: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub name: String,
    pub events: Vec<TurnEvent>,
    pub expect: Option<Expectation>,
}

pub fn parse_end_reason(s: &str) -> Option<EndReason> {
    [EndReason::NoResponse, EndReason::SilenceTimeout, EndReason::SemanticComplete].into_iter().find(|r| r.as_str() == s)
}

fn parse_expect(rest: &str, line: usize) -> Result<Expectation, FormatError> {
    let mut e = Expectation::default();
    let err = |m: String| FormatError::Line { line, message: m };
    let mut rest = rest.trim();
    while !rest.is_empty() {
        let (key, tail) = rest.split_once('=').ok_or_else(|| err(format!("expected key=value in {rest:?}")))?;
        let key = key.trim();
        if key == "transcript" {
            let v = tail.trim();
            e.transcript = Some(v.strip_prefix('"').and_then(|v| v.strip_suffix('"')).unwrap_or(v).to_string());
            break;
        }
        let (value, next) = tail.split_once(' ').unwrap_or((tail, ""));
        match key {
            "reason" => e.reason = Some(parse_end_reason(value).ok_or_else(|| err(format!("unknown reason {value:?}")))?),
            "t_end" => e.t_end_ms = Some(value.parse().map_err(|_| err(format!("bad t_end {value:?}")))?),
            "t_start" => e.t_start_ms = Some(value.parse().map_err(|_| err(format!("bad t_start {value:?}")))?),
            other => return Err(err(format!("unknown expectation {other:?}"))),
        }
        rest = next.trim();
    }
    Ok(e)
}

/// Lines are `t_ms kind [payload]` with kinds `voice_start`, `voice_stop`,
/// `asr_partial <text>`, `detector_complete`, `detector_incomplete`.
/// `#` starts a comment; `# name <text>` and `# expect ...` are directives.
pub fn parse_scenario(text: &str) -> Result<Scenario, FormatError> {
    let mut s = Scenario { name: String::new(), events: Vec::new(), expect: None };
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if let Some(comment) = l.strip_prefix('#') {
            let c = comment.trim();
            if let Some(rest) = c.strip_prefix("expect ") {
                s.expect = Some(parse_expect(rest, line)?);
            } else if let Some(rest) = c.strip_prefix("name ") {
                s.name = rest.trim().to_string();
            }
            continue;
        }
        if l.is_empty() {
            continue;
        }
        let err = |m: String| FormatError::Line { line, message: m };
        let (t, rest) = l.split_once(char::is_whitespace).ok_or_else(|| err(format!("expected `t_ms kind`, found {l:?}")))?;
        let t_ms: u64 = t.parse().map_err(|_| err(format!("bad time {t:?}")))?;
        let rest = rest.trim_start();
        let (kind, payload) = rest.split_once(char::is_whitespace).map_or((rest, ""), |(k, p)| (k, p.trim()));
        let kind = match kind {
            "voice_start" => TurnEventKind::VoiceStart,
            "voice_stop" => TurnEventKind::VoiceStop,
            "asr_partial" => TurnEventKind::AsrPartial(payload.to_string()),
            "detector_complete" => TurnEventKind::DetectorComplete,
            "detector_incomplete" => TurnEventKind::DetectorIncomplete,
            other => return Err(err(format!("unknown event kind {other:?}"))),
        };
        if !payload.is_empty() && !matches!(kind, TurnEventKind::AsrPartial(_)) {
            return Err(err(format!("{} takes no payload", rest.split_whitespace().next().unwrap_or(""))));
        }
        s.events.push(TurnEvent { t_ms, kind });
    }
    Ok(s)
}

pub fn format_events(events: &[TurnEvent]) -> String {
    let mut out = String::new();
    for e in events {
        let _ = match &e.kind {
            TurnEventKind::VoiceStart => writeln!(out, "{} voice_start", e.t_ms),
            TurnEventKind::VoiceStop => writeln!(out, "{} voice_stop", e.t_ms),
            TurnEventKind::AsrPartial(t) => writeln!(out, "{} asr_partial {t}", e.t_ms),
            TurnEventKind::DetectorComplete => writeln!(out, "{} detector_complete", e.t_ms),
            TurnEventKind::DetectorIncomplete => writeln!(out, "{} detector_incomplete", e.t_ms),
        };
    }
    out
}

pub const TRAJECTORY_HEADER: &str = "# ella-trajectory v1 joints=head_yaw,head_pitch,arm_left,arm_right,base_rotation";

/// Header, a `# rest` line, then `t_start_ms duration_ms a1 .. a5` per
/// stage with angles in degrees to three decimals.
pub fn write_trajectory(traj: &JointTrajectory) -> String {
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    let angles = |a: &[f64; 5]| a.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(" ");
    let _ = writeln!(out, "# rest {}", angles(&traj.rest_deg));
    for s in &traj.stages {
        let _ = writeln!(out, "{} {} {}", s.t_start_ms, s.duration_ms, angles(&s.target_deg));
    }
    out
}

fn parse_angles(fields: &[&str], line: usize) -> Result<[f64; 5], FormatError> {
    if fields.len() != 5 {
        return Err(FormatError::Line { line, message: format!("expected 5 angles, found {}", fields.len()) });
    }
    let mut a = [0.0; 5];
    for (slot, f) in a.iter_mut().zip(fields) {
        *slot = f.parse().map_err(|_| FormatError::Line { line, message: format!("bad angle {f:?}") })?;
    }
    Ok(a)
}

pub fn parse_trajectory(text: &str) -> Result<JointTrajectory, FormatError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == TRAJECTORY_HEADER => {}
        _ => return Err(FormatError::Line { line: 1, message: "missing trajectory header".into() }),
    }
    let mut traj = JointTrajectory::empty([0.0; 5]);
    debug_assert_eq!(traj.joints, Joint::ALL);
    for (i, raw) in lines {
        let line = i + 1;
        let l = raw.trim();
        if let Some(rest) = l.strip_prefix("# rest") {
            if !traj.stages.is_empty() {
                return Err(FormatError::Line { line, message: "rest pose after stages".into() });
            }
            traj.rest_deg = parse_angles(&rest.split_whitespace().collect::<Vec<_>>(), line)?;
            continue;
        }
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = l.split_whitespace().collect();
        if fields.len() != 7 {
            return Err(FormatError::Line { line, message: format!("expected 7 fields, found {}", fields.len()) });
        }
        let num = |f: &str| f.parse::<u64>().map_err(|_| FormatError::Line { line, message: format!("bad integer {f:?}") });
        let (t, d) = (num(fields[0])?, num(fields[1])?);
        traj.push_to(t, d, parse_angles(&fields[2..], line)?);
    }
    Ok(traj)
}
