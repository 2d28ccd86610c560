//! Drivers shared by the command line and the end-to-end tests: schedule
//! generation, single sessions, multi-day simulated deployments and the
//! analysis report.

use std::path::Path;

use ella_core::analytics::{compute_metrics, digest, split_half_words_per_turn, AnalyticsError, ChildMetrics, Digest, SplitHalf};
use ella_core::pipeline::{DaySchedule, PackageStatus, Pipeline, PipelineError};
use ella_core::provider::Providers;
use ella_core::session::{run_session, SessionError, SessionOutcome};
use ella_core::simulator::{builtin, Persona, PersonaSource};
use ella_core::{ChildCurriculum, SessionLog};
use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::formats::FormatError;

pub const DAY_MS: u64 = 86_400_000;

/// Build every day's schedule, optionally approving all packages.
pub fn generate(
    pipeline: &Pipeline,
    curriculum: &ChildCurriculum,
    seed: u64,
    auto_approve: bool,
) -> Result<Vec<DaySchedule>, PipelineError> {
    let mut days = pipeline.build_schedule(curriculum, seed)?;
    if auto_approve {
        for p in days.iter_mut().flat_map(|d| d.stories.iter_mut()) {
            p.status = PackageStatus::Approved;
        }
    }
    Ok(days)
}

/// A built-in persona by name, or a persona TOML file.
pub fn resolve_persona(arg: &str) -> Result<Persona, FormatError> {
    if let Some(p) = builtin(arg) {
        return Ok(p);
    }
    let path = Path::new(arg);
    let text = std::fs::read_to_string(path).map_err(|source| FormatError::Io { path: path.to_path_buf(), source })?;
    let persona: Persona =
        toml::from_str(&text).map_err(|e| FormatError::Json { path: path.to_path_buf(), message: e.message().to_string() })?;
    let report = persona.validate();
    if !report.is_empty() {
        return Err(FormatError::Invalid(format!("{}: {report}", path.display())));
    }
    Ok(persona)
}

fn session_seed(seed: u64, day: u32, session: u32) -> u64 {
    seed ^ (u64::from(day) << 32 | u64::from(session)).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Run one session of `schedule` against a simulated child.
#[allow(clippy::too_many_arguments)]
pub fn run_day(
    cfg: &EngineConfig,
    providers: &Providers,
    schedule: &mut DaySchedule,
    child_name: &str,
    persona: &Persona,
    session_index: u32,
    seed: u64,
) -> Result<SessionOutcome, SessionError> {
    let mut sc = cfg.session_config();
    sc.session_index = session_index;
    sc.started_at_ms = u64::from(schedule.day_index.saturating_sub(1)) * DAY_MS + u64::from(session_index) * 3_600_000;
    let mut input = PersonaSource::new(persona.clone());
    let seed = session_seed(seed, schedule.day_index, session_index);
    run_session(schedule, providers, &cfg.profile, child_name, &mut input, &sc, seed)
}

/// One session per day for days `1..=days`, each on a fresh copy of that
/// day's schedule.
pub fn simulate(
    cfg: &EngineConfig,
    providers: &Providers,
    schedules: &[DaySchedule],
    child_name: &str,
    persona: &Persona,
    days: u32,
    seed: u64,
) -> Result<Vec<SessionOutcome>, SessionError> {
    schedules
        .iter()
        .filter(|d| d.day_index >= 1 && d.day_index <= days)
        .map(|d| run_day(cfg, providers, &mut d.clone(), child_name, persona, 0, seed))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub child_id: String,
    pub metrics: ChildMetrics,
    /// Absent when either half has no child turns.
    pub split_half: Option<SplitHalf>,
    pub digest: Digest,
}

pub fn analyze(logs: &[SessionLog], curriculum: &ChildCurriculum, boundary_day: u32) -> Result<Report, AnalyticsError> {
    let metrics = compute_metrics(logs, curriculum)?;
    let split_half = match split_half_words_per_turn(logs, boundary_day) {
        Ok(s) => Some(s),
        Err(AnalyticsError::InsufficientData(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(Report { child_id: curriculum.child_id.clone(), metrics, split_half, digest: digest(logs, curriculum, 5) })
}
