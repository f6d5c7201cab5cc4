use std::path::Path;

use crate::error::{CliError, CliResult};
use crate::jobs::Job;

pub mod dp;
pub mod fosp;
pub mod rl;
pub mod run;
pub mod schedule;
pub mod sweep;

/// What a command leaves behind besides its CSV.
#[derive(Debug, Default)]
pub struct Outcome {
    /// Recorded in the sidecar.
    pub notes: Vec<String>,
    /// Printed to stdout.
    pub summary: Vec<String>,
    /// Set when the CSV was written but the command should still fail.
    pub failure: Option<CliError>,
}

pub fn execute(job: &Job, out: &Path) -> CliResult<Outcome> {
    match job {
        Job::FospCheck(j) => fosp::execute(j, out),
        Job::Run(j) => run::execute(j, out),
        Job::Sweep(j) => sweep::execute(j, out),
        Job::Dp(j) => dp::execute(j, out),
        Job::Rl(j) => rl::execute(j, out),
        Job::ScheduleDump(j) => schedule::execute(j, out),
    }
}
