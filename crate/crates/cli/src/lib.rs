//! Command-line front end and local HTTP service.

pub mod commands;
pub mod server;
pub mod session;
