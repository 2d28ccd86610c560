mod common;

use std::sync::Arc;

use axum::routing::post;
use ella::core::pipeline::Pipeline;
use ella::core::provider::{ProviderError, Providers, TemplateId, TextGenRequest, TurnEndSignal, VoiceParams};
use ella::core::WordTarget;
use ella::remote::{provider_router, RemoteClient, Role};

const KEY: &str = "k";

fn remote_providers(base: &str, key: &str) -> Providers {
    let c = |role| Arc::new(RemoteClient::new(base, role, key, 5_000));
    Providers { text: c(Role::Text), safety: c(Role::Safety), speech: c(Role::Speech), turn_end: c(Role::TurnEnd) }
}

fn served() -> String {
    format!("http://{}", common::spawn(provider_router(Providers::mock(), KEY)))
}

#[test]
fn remote_adapters_match_the_in_process_providers() {
    let base = served();
    let remote = remote_providers(&base, KEY);
    let local = Providers::mock();
    let req = TextGenRequest::new(TemplateId::PpvtItem, 3).var("word", "brave");
    assert_eq!(remote.text.generate_text(&req).unwrap(), local.text.generate_text(&req).unwrap());
    for text in ["a gentle pony", "go find a knife"] {
        assert_eq!(remote.safety.classify_safety(text).unwrap(), local.safety.classify_safety(text).unwrap());
    }
    let voice = VoiceParams::default();
    assert_eq!(
        remote.speech.synthesize_speech("The pony was brave.", &voice).unwrap(),
        local.speech.synthesize_speech("The pony was brave.", &voice).unwrap()
    );
    assert_eq!(remote.turn_end.detect_turn_end("yes", 300), local.turn_end.detect_turn_end("yes", 300));
}

#[test]
fn a_package_built_over_http_equals_the_local_one() {
    let base = served();
    let c = common::curriculum("c01", "Sarah");
    let word = WordTarget::new("gumption");
    let over_http = Pipeline::new(remote_providers(&base, KEY)).build_package(&c, 1, &word, "pony", 5).unwrap();
    let local = Pipeline::new(Providers::mock()).build_package(&c, 1, &word, "pony", 5).unwrap();
    assert_eq!(over_http, local);
}

#[test]
fn wrong_key_is_a_precondition_failure() {
    let remote = remote_providers(&served(), "nope");
    let req = TextGenRequest::new(TemplateId::PpvtItem, 3).var("word", "brave");
    assert!(matches!(remote.text.generate_text(&req), Err(ProviderError::Precondition(_))));
    assert_eq!(remote.turn_end.detect_turn_end("yes", 300), TurnEndSignal::Incomplete);
}

#[test]
fn unreachable_service_is_unavailable() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let remote = remote_providers(&format!("http://127.0.0.1:{port}"), KEY);
    let err = remote.safety.classify_safety("hello").unwrap_err();
    assert!(err.is_unavailable(), "{err:?}");
}

#[test]
fn garbage_replies_are_malformed_output() {
    let router = axum::Router::new().route("/v1/safety", post(|| async { "not json" }));
    let base = format!("http://{}", common::spawn(router));
    let remote = remote_providers(&base, KEY);
    assert!(matches!(remote.safety.classify_safety("hello"), Err(ProviderError::MalformedOutput(_))));
}

#[test]
fn missing_template_variables_fail_before_the_network() {
    let remote = remote_providers("http://127.0.0.1:1", KEY);
    let req = TextGenRequest::new(TemplateId::PpvtItem, 3);
    assert!(matches!(remote.text.generate_text(&req), Err(ProviderError::MissingVariable { .. })));
}
