use std::path::Path;

use serde::Serialize;

use super::Outcome;
use crate::error::CliResult;
use crate::jobs::ScheduleDumpJob;
use crate::output::write_csv;

#[derive(Serialize)]
struct Row {
    t: usize,
    eta: f64,
}

pub fn execute(job: &ScheduleDumpJob, out: &Path) -> CliResult<Outcome> {
    job.schedule.validate(None)?;
    let rows: Vec<Row> = job
        .schedule
        .etas(job.horizon)
        .into_iter()
        .enumerate()
        .map(|(t, eta)| Row { t, eta })
        .collect();
    write_csv(out, &["t", "eta"], &rows)?;
    Ok(Outcome {
        summary: vec![format!("{} step sizes", rows.len())],
        ..Default::default()
    })
}
