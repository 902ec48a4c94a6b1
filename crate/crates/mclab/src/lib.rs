//! Command implementations and the HTTP experiment service behind the
//! `mclab` binary.

pub mod commands;
pub mod config;
pub mod server;
