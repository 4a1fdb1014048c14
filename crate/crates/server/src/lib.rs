//! The `climadash` service and command-line tool: an HTTP API over the core
//! library plus the subcommands that drive it.

pub mod api;
pub mod cli;
