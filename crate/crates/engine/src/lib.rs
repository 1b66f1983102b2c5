//! Session pipeline, provider gateway, session service and CLI.

pub mod gateway;
pub mod store;
pub mod pipeline;
pub mod session;
pub mod eval;
pub mod service;
pub mod http;
pub mod scenario;
pub mod cli;
