//! HTTP adapters for hosted model services, and a router that serves the
//! same protocol from in-process providers.
//!
//! Protocol, all JSON over POST with a bearer key:
//! `/v1/text` takes a `TextGenRequest` and returns `{"text": ...}`;
//! `/v1/safety` takes `{"text": ...}` and returns a `SafetyVerdict`;
//! `/v1/speech` takes `{"text": ..., "voice": ...}` and returns a `Synthesis`;
//! `/v1/turn-end` takes `{"transcript": ..., "ms_since_last_voice": ...}`
//! and returns `{"signal": "complete" | "incomplete"}`.

use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use ella_core::provider::{
    ProviderError, Providers, SafetyClassifier, SafetyVerdict, SpeechSynthesizer, Synthesis, TextGenRequest, TextGenerator,
    TurnEndDetector, TurnEndSignal, VoiceParams,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Text,
    Safety,
    Speech,
    TurnEnd,
}

impl Role {
    pub fn key_env(self) -> &'static str {
        match self {
            Self::Text => "ELLA_TEXTGEN_KEY",
            Self::Safety => "ELLA_SAFETY_KEY",
            Self::Speech => "ELLA_SPEECH_KEY",
            Self::TurnEnd => "ELLA_TURNEND_KEY",
        }
    }

    fn path(self) -> &'static str {
        match self {
            Self::Text => "/v1/text",
            Self::Safety => "/v1/safety",
            Self::Speech => "/v1/speech",
            Self::TurnEnd => "/v1/turn-end",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RemoteError {
    #[error("environment variable {0} is not set")]
    MissingKey(&'static str),
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TextReply {
    pub text: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SafetyRequest {
    pub text: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SpeechRequest {
    pub text: String,
    pub voice: VoiceParams,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TurnEndRequest {
    pub transcript: String,
    pub ms_since_last_voice: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TurnEndReply {
    pub signal: TurnEndSignal,
}

/// Client for one provider role.
#[derive(Debug, Clone)]
pub struct RemoteClient {
    agent: ureq::Agent,
    url: String,
    key: String,
}

impl RemoteClient {
    pub fn new(base_url: &str, role: Role, key: impl Into<String>, timeout_ms: u64) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(Duration::from_millis(timeout_ms))).build().into();
        Self { agent, url: format!("{}{}", base_url.trim_end_matches('/'), role.path()), key: key.into() }
    }

    pub fn from_env(base_url: &str, role: Role, timeout_ms: u64) -> Result<Self, RemoteError> {
        let key = std::env::var(role.key_env()).map_err(|_| RemoteError::MissingKey(role.key_env()))?;
        Ok(Self::new(base_url, role, key, timeout_ms))
    }

    fn call<Req: Serialize, Resp: for<'de> Deserialize<'de>>(&self, body: &Req) -> Result<Resp, ProviderError> {
        let mut resp =
            self.agent.post(&self.url).header("Authorization", &format!("Bearer {}", self.key)).send_json(body).map_err(|e| match e {
                ureq::Error::StatusCode(code) if (400..500).contains(&code) && code != 429 => {
                    ProviderError::Precondition(format!("{} rejected the request with {code}", self.url))
                }
                other => ProviderError::Unavailable(format!("{}: {other}", self.url)),
            })?;
        resp.body_mut().read_json().map_err(|e| ProviderError::MalformedOutput(format!("{}: {e}", self.url)))
    }
}

impl TextGenerator for RemoteClient {
    fn generate_text(&self, req: &TextGenRequest) -> Result<String, ProviderError> {
        req.validate()?;
        let reply: TextReply = self.call(req)?;
        if reply.text.trim().is_empty() {
            return Err(ProviderError::MalformedOutput("empty text".into()));
        }
        Ok(reply.text)
    }
}

impl SafetyClassifier for RemoteClient {
    fn classify_safety(&self, text: &str) -> Result<SafetyVerdict, ProviderError> {
        self.call(&SafetyRequest { text: text.to_string() })
    }
}

impl SpeechSynthesizer for RemoteClient {
    fn synthesize_speech(&self, text: &str, voice: &VoiceParams) -> Result<Synthesis, ProviderError> {
        if text.trim().is_empty() {
            return Err(ProviderError::Precondition("cannot synthesize empty text".into()));
        }
        let s: Synthesis = self.call(&SpeechRequest { text: text.to_string(), voice: voice.clone() })?;
        s.handle.validate()?;
        Ok(s)
    }
}

impl TurnEndDetector for RemoteClient {
    /// Network failures read as "incomplete" so the silence rule still
    /// ends the turn.
    fn detect_turn_end(&self, running_transcript: &str, ms_since_last_voice: u64) -> TurnEndSignal {
        let req = TurnEndRequest { transcript: running_transcript.to_string(), ms_since_last_voice };
        self.call::<_, TurnEndReply>(&req).map_or(TurnEndSignal::Incomplete, |r| r.signal)
    }
}

#[derive(Clone)]
struct Backend {
    providers: Providers,
    key: String,
}

type Reply<T> = Result<Json<T>, (StatusCode, String)>;

fn check(b: &Backend, headers: &HeaderMap) -> Result<(), (StatusCode, String)> {
    let ok = headers.get("authorization").and_then(|v| v.to_str().ok()).and_then(|v| v.strip_prefix("Bearer ")).is_some_and(|k| k == b.key);
    if ok {
        Ok(())
    } else {
        Err((StatusCode::UNAUTHORIZED, "bad key".into()))
    }
}

fn provider_status(e: ProviderError) -> (StatusCode, String) {
    let code = match e {
        ProviderError::Unavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
        ProviderError::MalformedOutput(_) => StatusCode::BAD_GATEWAY,
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    };
    (code, e.to_string())
}

async fn text(State(b): State<Backend>, headers: HeaderMap, Json(req): Json<TextGenRequest>) -> Reply<TextReply> {
    check(&b, &headers)?;
    let text = b.providers.text.generate_text(&req).map_err(provider_status)?;
    Ok(Json(TextReply { text }))
}

async fn safety(State(b): State<Backend>, headers: HeaderMap, Json(req): Json<SafetyRequest>) -> Reply<SafetyVerdict> {
    check(&b, &headers)?;
    b.providers.safety.classify_safety(&req.text).map(Json).map_err(provider_status)
}

async fn speech(State(b): State<Backend>, headers: HeaderMap, Json(req): Json<SpeechRequest>) -> Reply<Synthesis> {
    check(&b, &headers)?;
    b.providers.speech.synthesize_speech(&req.text, &req.voice).map(Json).map_err(provider_status)
}

async fn turn_end(State(b): State<Backend>, headers: HeaderMap, Json(req): Json<TurnEndRequest>) -> Reply<TurnEndReply> {
    check(&b, &headers)?;
    Ok(Json(TurnEndReply { signal: b.providers.turn_end.detect_turn_end(&req.transcript, req.ms_since_last_voice) }))
}

/// Serve the provider protocol from `providers`, accepting one key for
/// every role.
pub fn provider_router(providers: Providers, key: impl Into<String>) -> Router {
    Router::new()
        .route(Role::Text.path(), post(text))
        .route(Role::Safety.path(), post(safety))
        .route(Role::Speech.path(), post(speech))
        .route(Role::TurnEnd.path(), post(turn_end))
        .with_state(Backend { providers, key: key.into() })
}
