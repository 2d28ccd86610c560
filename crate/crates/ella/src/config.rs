//! Engine configuration: one TOML document binding providers, timing,
//! authoring constraints, the robot profile, seeds and deployment paths.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use ella_core::behavior::{BehaviorConfig, RobotProfile};
use ella_core::pipeline::{AuthoringConstraints, Pipeline};
use ella_core::provider::{
    BlockEntry, BlocklistSafety, MockSpeech, MockTextConfig, MockTextGen, Providers, RuleTurnEndDetector, VoiceParams,
};
use ella_core::session::SessionConfig;
use ella_core::turn::TurnConfig;
use serde::{Deserialize, Serialize};

use crate::remote::{RemoteClient, RemoteError};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config is not valid TOML: {0}")]
    Parse(String),
    #[error("config failed validation: {}", .0.join("; "))]
    ValidationFailed(Vec<String>),
    #[error(transparent)]
    Remote(#[from] RemoteError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binding {
    #[default]
    Mock,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderBindings {
    pub text: Binding,
    pub safety: Binding,
    pub speech: Binding,
    pub turn_end: Binding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockSettings {
    pub text: MockTextConfig,
    pub speech: MockSpeech,
    pub blocklist: Vec<BlockEntry>,
    pub closed_answers: Vec<String>,
}

impl Default for MockSettings {
    fn default() -> Self {
        Self {
            text: MockTextConfig::default(),
            speech: MockSpeech::default(),
            blocklist: BlocklistSafety::default_entries(),
            closed_answers: RuleTurnEndDetector::default().closed_answers,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteSettings {
    pub base_url: String,
    pub timeout_ms: u64,
}

impl Default for RemoteSettings {
    fn default() -> Self {
        Self { base_url: "http://127.0.0.1:9090".into(), timeout_ms: 30_000 }
    }
}

/// Session settings other than turn timing, which has its own table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionSettings {
    pub max_stories_per_day: u32,
    pub planner_retry_bound: u32,
    pub clarify_once: bool,
    pub followups_per_question: u8,
    pub memory_window: usize,
    pub planning_latency_ms: u64,
    pub voice: VoiceParams,
}

impl Default for SessionSettings {
    fn default() -> Self {
        let s = SessionConfig::default();
        Self {
            max_stories_per_day: s.max_stories_per_day,
            planner_retry_bound: s.planner_retry_bound,
            clarify_once: s.clarify_once,
            followups_per_question: s.followups_per_question,
            memory_window: s.memory_window,
            planning_latency_ms: s.planning_latency_ms,
            voice: s.voice,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub generate: u64,
    pub simulate: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self { generate: 7, simulate: 42 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoreSettings {
    pub path: PathBuf,
}

impl Default for StoreSettings {
    fn default() -> Self {
        Self { path: PathBuf::from("ella-data") }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSettings {
    pub address: String,
    /// Environment variable holding the bearer token.
    pub token_env: String,
}

impl Default for ServiceSettings {
    fn default() -> Self {
        Self { address: "127.0.0.1:8080".into(), token_env: "ELLA_SERVICE_TOKEN".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub providers: ProviderBindings,
    pub mock: MockSettings,
    pub remote: RemoteSettings,
    pub turn: TurnConfig,
    pub authoring: AuthoringConstraints,
    pub behavior: BehaviorConfig,
    pub session: SessionSettings,
    pub profile: RobotProfile,
    pub seeds: Seeds,
    pub store: StoreSettings,
    pub service: ServiceSettings,
}

impl EngineConfig {
    pub fn session_config(&self) -> SessionConfig {
        let s = &self.session;
        SessionConfig {
            turn: self.turn,
            max_stories_per_day: s.max_stories_per_day,
            planner_retry_bound: s.planner_retry_bound,
            clarify_once: s.clarify_once,
            followups_per_question: s.followups_per_question,
            voice: s.voice.clone(),
            memory_window: s.memory_window,
            planning_latency_ms: s.planning_latency_ms,
            ..SessionConfig::default()
        }
    }

    /// Every problem found, not just the first.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if let Err(e) = self.turn.validate() {
            errs.push(format!("turn: {e}"));
        }
        if let Err(e) = self.authoring.validate() {
            errs.push(format!("authoring: {e}"));
        }
        if let Err(e) = self.session_config().validate() {
            errs.push(format!("session: {e}"));
        }
        errs.extend(self.profile.validate().into_iter().map(|e| format!("profile: {e}")));
        if self.behavior.words_per_cue == 0 {
            errs.push("behavior.words_per_cue must be positive".into());
        }
        if self.behavior.retry_bound == 0 {
            errs.push("behavior.retry_bound must be at least 1".into());
        }
        for (name, rate) in [("plan_unsafe_rate", self.mock.text.plan_unsafe_rate), ("story_unsafe_rate", self.mock.text.story_unsafe_rate)]
        {
            if !(0.0..=1.0).contains(&rate) {
                errs.push(format!("mock.text.{name} = {rate} outside [0, 1]"));
            }
        }
        if self.mock.speech.ms_per_word == 0 {
            errs.push("mock.speech.ms_per_word must be positive".into());
        }
        if self.mock.speech.words_per_chunk == 0 {
            errs.push("mock.speech.words_per_chunk must be positive".into());
        }
        let b = self.providers;
        let any_remote = [b.text, b.safety, b.speech, b.turn_end].contains(&Binding::Remote);
        if any_remote && !(self.remote.base_url.starts_with("http://") || self.remote.base_url.starts_with("https://")) {
            errs.push(format!("remote.base_url {:?} is not an http(s) URL", self.remote.base_url));
        }
        if self.service.address.parse::<std::net::SocketAddr>().is_err() {
            errs.push(format!("service.address {:?} is not a socket address", self.service.address));
        }
        errs
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Bind each provider role as configured. Remote roles read their API
    /// key from the environment.
    pub fn providers(&self) -> Result<Providers, ConfigError> {
        let mut p = Providers {
            text: Arc::new(MockTextGen::new(self.mock.text.clone())),
            safety: Arc::new(BlocklistSafety::new(self.mock.blocklist.clone())),
            speech: Arc::new(self.mock.speech.clone()),
            turn_end: Arc::new(RuleTurnEndDetector { closed_answers: self.mock.closed_answers.clone() }),
        };
        let remote = |role| RemoteClient::from_env(&self.remote.base_url, role, self.remote.timeout_ms);
        if self.providers.text == Binding::Remote {
            p.text = Arc::new(remote(crate::remote::Role::Text)?);
        }
        if self.providers.safety == Binding::Remote {
            p.safety = Arc::new(remote(crate::remote::Role::Safety)?);
        }
        if self.providers.speech == Binding::Remote {
            p.speech = Arc::new(remote(crate::remote::Role::Speech)?);
        }
        if self.providers.turn_end == Binding::Remote {
            p.turn_end = Arc::new(remote(crate::remote::Role::TurnEnd)?);
        }
        Ok(p)
    }

    pub fn pipeline(&self) -> Result<Pipeline, ConfigError> {
        let mut pl = Pipeline::new(self.providers()?);
        pl.constraints = self.authoring.clone();
        pl.behavior = self.behavior;
        pl.profile = self.profile.clone();
        pl.voice = self.session.voice.clone();
        Ok(pl)
    }
}

/// Syntax errors are `Parse`; well-formed TOML with wrong field types or
/// broken invariants is `ValidationFailed`.
pub fn parse_config(text: &str) -> Result<EngineConfig, ConfigError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    let cfg: EngineConfig = table.try_into().map_err(|e: toml::de::Error| ConfigError::ValidationFailed(vec![e.message().to_string()]))?;
    let errs = cfg.validate();
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::ValidationFailed(errs))
    }
}

pub fn load_config(path: &Path) -> Result<EngineConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shipped() -> String {
        std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/ella.toml")).unwrap()
    }

    #[test]
    fn shipped_config_is_valid_and_default() {
        let cfg = parse_config(&shipped()).unwrap();
        assert_eq!(cfg, EngineConfig::default());
        assert_eq!((cfg.turn.onset_timeout_ms, cfg.turn.silence_end_ms, cfg.turn.grace_ms), (10_000, 1500, 500));
        assert_eq!(cfg.session.max_stories_per_day, 4);
        assert_eq!(cfg.session.followups_per_question, 2);
        assert_eq!(cfg.authoring.min_target_occurrences, 3);
        assert_eq!(cfg.authoring.word_count_target, 200);
    }

    #[test]
    fn round_trips() {
        let cfg = EngineConfig::default();
        assert_eq!(parse_config(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn negative_silence_rejected() {
        let text = shipped().replace("silence_end_ms = 1500", "silence_end_ms = -1");
        assert!(matches!(parse_config(&text), Err(ConfigError::ValidationFailed(_))));
    }

    #[test]
    fn unknown_gesture_rejected() {
        let mut cfg = EngineConfig::default();
        cfg.profile.gesture_bank[0].name = "backflip".into();
        let err = parse_config(&cfg.to_toml()).unwrap_err();
        let ConfigError::ValidationFailed(errs) = err else { panic!("{err}") };
        assert!(errs.iter().any(|e| e.contains("backflip")), "{errs:?}");
    }

    #[test]
    fn errors_are_aggregated() {
        let mut cfg = EngineConfig::default();
        cfg.turn.grace_ms = 0;
        cfg.session.max_stories_per_day = 9;
        cfg.mock.text.plan_unsafe_rate = 2.0;
        let ConfigError::ValidationFailed(errs) = parse_config(&cfg.to_toml()).unwrap_err() else { panic!() };
        assert!(errs.len() >= 3, "{errs:?}");
    }

    #[test]
    fn syntax_error_is_parse() {
        assert!(matches!(parse_config("[turn\nx = "), Err(ConfigError::Parse(_))));
        assert!(matches!(parse_config("bogus = 1"), Err(ConfigError::ValidationFailed(_))));
    }
}
