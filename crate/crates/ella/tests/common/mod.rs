#![allow(dead_code)]

use std::net::SocketAddr;

use ella::core::{ChildCurriculum, WordTarget};

/// Serve `router` on an ephemeral port from a background runtime.
pub fn spawn(router: axum::Router) -> SocketAddr {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).unwrap();
            axum::serve(listener, router).await.unwrap();
        });
    });
    addr
}

pub fn agent() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).build().into()
}

pub fn curriculum(child_id: &str, name: &str) -> ChildCurriculum {
    ChildCurriculum {
        child_id: child_id.into(),
        display_name: name.into(),
        age_years: 5,
        target_words: ["gumption", "curious", "brave", "gentle"].iter().map(|w| WordTarget::new(*w)).collect(),
        themes: vec!["pony".into(), "space".into(), "ocean".into()],
        deployment_days: 8,
    }
}
