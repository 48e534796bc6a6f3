//! Batch harness around `flowgen-core`: the chat-completion gateway with
//! record/replay cassettes, the process sandbox, the pylint wrapper,
//! benchmark loaders, run storage and the command implementations behind
//! the `flowgen` binary.

pub mod bench;
pub mod cassette;
pub mod commands;
pub mod config;
pub mod evaluate;
pub mod gateway;
pub mod lint;
pub mod sandbox;
pub mod store;

pub use commands::{cmd_ablate, cmd_evaluate, cmd_report, cmd_run, CommandError, Services};
pub use config::{ConfigFile, Manifest};
