//! WebSocket gateway serving live captions, translations, emotion tags,
//! sign animations and summaries to every member of a session.

pub mod config;
pub mod conn;
pub mod hub;
pub mod metrics;
pub mod protocol;
pub mod server;
pub mod services;
