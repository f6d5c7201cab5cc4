use std::path::Path;

use serde::Serialize;
use smd_core::rl::{
    garnet, gridworld, rl_run, smoothness_constants, RlAlgo, RlConfig, TabularDMDP,
};
use smd_core::Schedule;

use super::Outcome;
use crate::error::{CliError, CliResult};
use crate::jobs::{MdpSpec, RlJob};
use crate::output::write_csv;

const HEADER: &[&str] = &["t", "v_p", "gap", "bfbe", "var_frobenius", "var_2inf"];

#[derive(Serialize)]
struct Row {
    t: usize,
    v_p: f64,
    gap: f64,
    bfbe: Option<f64>,
    var_frobenius: Option<f64>,
    var_2inf: Option<f64>,
}

pub fn build_mdp(spec: &MdpSpec) -> CliResult<TabularDMDP> {
    Ok(match *spec {
        MdpSpec::Garnet {
            states,
            actions,
            branching,
            gamma,
            seed,
        } => garnet(states, actions, branching, gamma, seed)?,
        MdpSpec::Gridworld { gamma, slip } => gridworld(gamma, slip)?,
    })
}

pub fn execute(job: &RlJob, out: &Path) -> CliResult<Outcome> {
    let mdp = build_mdp(&job.mdp)?;
    let c = smoothness_constants(&mdp);
    let ell = match job.algo {
        RlAlgo::Pspg => c.l_f,
        RlAlgo::Smpg => c.l_21,
    };
    let schedule = job
        .schedule
        .clone()
        .unwrap_or(Schedule::Constant { eta: 0.5 / ell });
    let cfg = RlConfig {
        algo: job.algo,
        schedule,
        iterations: job.iterations,
        gradient: job.gradient,
        seed: job.seed,
        record_every: job.record_every,
        target_gap: job.target_gap,
        bfbe: job.bfbe,
    };
    let rec = rl_run(&mdp, &cfg)?;
    let rows: Vec<Row> = rec
        .rows
        .iter()
        .map(|r| Row {
            t: r.t,
            v_p: r.value,
            gap: r.gap,
            bfbe: r.bfbe,
            var_frobenius: r.var_frobenius,
            var_2inf: r.var_2inf,
        })
        .collect();
    write_csv(out, HEADER, &rows)?;

    let mut outcome = Outcome::default();
    outcome.notes.push(format!(
        "L_F = {}, L_21 = {}, optimal V_p = {}",
        c.l_f, c.l_21, rec.optimal_value
    ));
    let last = rec
        .rows
        .last()
        .ok_or_else(|| CliError::Solver("no iterations recorded".into()))?;
    outcome.summary.push(format!(
        "final gap {:e} after {} iterations",
        last.gap, last.t
    ));
    if let Some(target) = job.target_gap {
        outcome.summary.push(match rec.reached_target {
            Some(t) => format!("gap {target:e} reached at iteration {t}"),
            None => format!("gap {target:e} not reached"),
        });
    }
    Ok(outcome)
}
