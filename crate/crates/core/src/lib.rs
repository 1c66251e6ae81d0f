//! Provider-agnostic LLM agent orchestration.

pub mod agent;
pub mod builtin;
pub mod cli;
pub mod hooks;
pub mod latex;
pub mod model;
pub mod providers;
pub mod server;
pub mod tooling;
