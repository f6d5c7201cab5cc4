use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use smd_core::smd::{run_smd, RunConfig};
use smd_core::{vector, Schedule, StochasticOracle};

use super::Outcome;
use crate::error::{CliError, CliResult};
use crate::jobs::RunJob;
use crate::output::write_csv;

const HEADER: &[&str] = &[
    "replica", "t", "eta", "phi", "bfbe", "phi_plus", "lyapunov", "diverged",
];

#[derive(Serialize)]
struct Row {
    replica: u64,
    t: usize,
    eta: Option<f64>,
    phi: f64,
    bfbe: Option<f64>,
    phi_plus: Option<f64>,
    lyapunov: Option<f64>,
    diverged: u8,
}

pub fn execute(job: &RunJob, out: &Path) -> CliResult<Outcome> {
    if job.replicas == 0 {
        return Err(CliError::usage("need at least one replica"));
    }
    let mut inst = job.instance.build()?;
    if let Some(g) = &job.geometry {
        inst = g.apply(inst)?;
    }
    let schedule = job.schedule.clone().unwrap_or(Schedule::Constant {
        eta: if inst.ell > 0.0 { 0.5 / inst.ell } else { 1.0 },
    });
    let x0 = job.x0.clone().map(vector).transpose()?;
    let records: Result<Vec<_>, CliError> = (0..job.replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut oracle = StochasticOracle::new(inst.clone(), job.noise, job.seed, r)?;
            let cfg = RunConfig {
                horizon: job.horizon,
                seed: job.seed,
                replica: r,
                stride: 0,
                checkpoint_every: job.checkpoint_every,
                bfbe_rho: job.bfbe_rho,
                record_phi_plus: job.phi_plus,
                lyapunov_rho: job.lyapunov_rho,
                enforce_step_bound: job.enforce_step_bound,
                clip: job.clip,
                x0: x0.clone(),
                ..Default::default()
            };
            Ok(run_smd(&mut oracle, &schedule, &cfg)?)
        })
        .collect();
    let records = records?;

    let mut rows = Vec::new();
    for rec in &records {
        for c in &rec.checkpoints {
            rows.push(Row {
                replica: rec.replica,
                t: c.t,
                eta: rec.etas.get(c.t).copied(),
                phi: c.phi,
                bfbe: Some(c.bfbe),
                phi_plus: c.phi_plus,
                lyapunov: c.lyapunov,
                diverged: 0,
            });
        }
        if let Some(t) = rec.diverged {
            rows.push(Row {
                replica: rec.replica,
                t,
                eta: rec.etas.get(t).copied(),
                phi: inst.phi_value(&rec.final_point),
                bfbe: None,
                phi_plus: None,
                lyapunov: None,
                diverged: 1,
            });
        }
    }
    write_csv(out, HEADER, &rows)?;

    let mut outcome = Outcome::default();
    outcome.notes.push(format!("instance: {}", inst.name));
    outcome
        .notes
        .push(format!("geometry: {}, ell = {}", inst.dgf.name(), inst.ell));
    let diverged = records.iter().filter(|r| r.diverged.is_some()).count();
    let weighted: Vec<f64> = records.iter().filter_map(|r| r.weighted_bfbe()).collect();
    outcome
        .summary
        .push(format!("{} replicas, {} diverged", records.len(), diverged));
    if !weighted.is_empty() {
        outcome.summary.push(format!(
            "mean eta-weighted BFBE {:e}",
            weighted.iter().sum::<f64>() / weighted.len() as f64
        ));
    }
    if let Some(rec) = records.iter().find(|r| r.aborted.is_some()) {
        outcome.failure = Some(CliError::Solver(format!(
            "replica {} stopped at step {}: {}",
            rec.replica,
            rec.steps,
            rec.aborted.as_deref().unwrap_or_default()
        )));
    }
    Ok(outcome)
}
