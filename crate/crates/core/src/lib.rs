//! Core engine for ELLA, an interactive storytelling robot for early
//! vocabulary learning.
//!
//! Everything in this crate is pure computation over owned data: story and
//! question authoring with constraint validation, expressive behavior
//! compilation, end-of-turn detection on a virtual clock, the session state
//! machine, analytics and the scripted child simulator. External model
//! services are reached through the traits in [`provider`]; deterministic
//! mocks for each of them live alongside the traits so whole deployments can
//! be replayed offline.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, persistence,
//! the HTTP service and the command line live in the `ella` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod analytics;
pub mod behavior;
pub mod domain;
pub mod pipeline;
pub mod provider;
pub mod session;
pub mod simulator;
pub mod turn;
mod util;

pub use domain::{
    normalize_word, validate_curriculum, ChildCurriculum, InteractionScript, Question, QuestionKind, SessionLog, SessionLogEntry, Story,
    ValidationReport, Violation, WordTarget,
};
