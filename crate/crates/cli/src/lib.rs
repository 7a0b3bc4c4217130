//! Command implementations behind the `regbench` binary.

pub mod commands;
pub mod fetch;
pub mod manifest;

use std::fmt;

pub use commands::{
    cmd_generate, cmd_gteval, cmd_run, cmd_score, cmd_synth, GenerateOptions, GtEvalOptions,
    RunOptions, RunReport, SynthOptions,
};
pub use fetch::cmd_fetch;
pub use manifest::DatasetManifest;

pub const EXIT_OK: u8 = 0;
pub const EXIT_PARTIAL: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

/// Bad arguments or configuration, as opposed to a failure while working.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Exit status for an error returned by one of the commands.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.is::<UsageError>()) {
        EXIT_USAGE
    } else {
        EXIT_PARTIAL
    }
}
