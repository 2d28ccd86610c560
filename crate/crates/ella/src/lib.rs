//! Host side of the ELLA storytelling engine: configuration, file formats,
//! the durable story store, the story-service HTTP API and remote provider
//! adapters.

pub use ella_core as core;

pub mod config;
pub mod engine;
pub mod formats;
pub mod remote;
pub mod service;
pub mod store;
