use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use smd_core::dgf::DistanceGenerator;
use smd_core::problems::{autoencoder_init, make_autoencoder, make_quadratic_l1, Curvature};
use smd_core::smd::{run_smd, RunConfig};
use smd_core::{CompositeInstance, FeasibleSet, NoiseModel, Schedule, StochasticOracle, Vector};

use super::Outcome;
use crate::error::{CliError, CliResult};
use crate::jobs::{SweepJob, SweepMethod, SweepProblem};
use crate::output::write_csv;

const HEADER: &[&str] = &["method", "log2_eta", "eta", "final_f", "status", "good"];

/// One `(method, eta)` cell of the sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub method: &'static str,
    pub log2_eta: i32,
    pub eta: f64,
    pub final_f: Option<f64>,
    pub status: &'static str,
    pub good: bool,
}

fn problem(job: &SweepJob) -> CliResult<(CompositeInstance, Vector)> {
    match &job.problem {
        SweepProblem::Autoencoder {
            d_f,
            d_e,
            n,
            data_seed,
            init_seed,
        } => Ok((
            make_autoencoder(*d_f, *d_e, *n, *data_seed)?,
            autoencoder_init(*d_f, *d_e, *init_seed),
        )),
        SweepProblem::Quadratic { diagonal } => {
            if job.batch.is_some() {
                return Err(CliError::usage(
                    "the quadratic sweep problem has exact gradients only; drop the batch",
                ));
            }
            let inst = make_quadratic_l1(
                Curvature::Diagonal(diagonal.clone()),
                None,
                0.0,
                FeasibleSet::AllSpace,
            )?;
            let x0 = Vector::from_element(diagonal.len(), 1.0);
            Ok((inst, x0))
        }
    }
}

fn geometry(method: SweepMethod) -> DistanceGenerator {
    match method {
        SweepMethod::Sgd | SweepMethod::ClipSgd => DistanceGenerator::Euclidean,
        SweepMethod::Smdr1 => DistanceGenerator::PolyNorm { p: 1.0 },
        SweepMethod::Smdr2 => DistanceGenerator::PolyNorm { p: 2.0 },
    }
}

/// Runs every cell and marks the good ones: finite final loss within
/// `good_factor` of the best loss over the whole sweep.
pub fn sweep_cells(job: &SweepJob) -> CliResult<Vec<Cell>> {
    if job.methods.is_empty() || job.log2_eta_min > job.log2_eta_max || job.horizon == 0 {
        return Err(CliError::usage(
            "sweep needs methods, a non-empty step grid and a positive horizon",
        ));
    }
    if !(job.clip_radius > 0.0) || !(job.good_factor >= 1.0) {
        return Err(CliError::usage(
            "clip radius must be positive and the good factor at least 1",
        ));
    }
    let (base, x0) = problem(job)?;
    let noise = match job.batch {
        Some(batch) => NoiseModel::Minibatch { batch },
        None => NoiseModel::None,
    };
    let grid: Vec<(SweepMethod, i32)> = job
        .methods
        .iter()
        .flat_map(|&m| (job.log2_eta_min..=job.log2_eta_max).map(move |k| (m, k)))
        .collect();
    let cells: Result<Vec<Cell>, CliError> = grid
        .par_iter()
        .map(|&(method, k)| {
            let inst = base.clone().with_geometry(geometry(method), base.ell)?;
            let eta = 2f64.powi(k);
            let mut oracle = StochasticOracle::new(inst.clone(), noise, job.seed, 0)?;
            let cfg = RunConfig {
                horizon: job.horizon,
                seed: job.seed,
                stride: 0,
                checkpoint_every: Some(job.horizon),
                enforce_step_bound: false,
                clip: (method == SweepMethod::ClipSgd).then_some(job.clip_radius),
                x0: Some(x0.clone()),
                ..Default::default()
            };
            let rec = run_smd(&mut oracle, &Schedule::Constant { eta }, &cfg)?;
            let f = inst.f_value(&rec.final_point);
            let (final_f, status) = if rec.aborted.is_some() {
                (None, "aborted")
            } else if rec.diverged.is_some() || !f.is_finite() {
                (None, "diverged")
            } else {
                (Some(f), "ok")
            };
            Ok(Cell {
                method: method.name(),
                log2_eta: k,
                eta,
                final_f,
                status,
                good: false,
            })
        })
        .collect();
    let mut cells = cells?;
    let best = cells
        .iter()
        .filter_map(|c| c.final_f)
        .fold(f64::INFINITY, f64::min);
    for c in &mut cells {
        c.good = c.final_f.is_some_and(|f| f <= job.good_factor * best);
    }
    Ok(cells)
}

/// Grid exponents of the good cells of one method.
pub fn good_set(cells: &[Cell], method: SweepMethod) -> Vec<i32> {
    cells
        .iter()
        .filter(|c| c.method == method.name() && c.good)
        .map(|c| c.log2_eta)
        .collect()
}

pub fn execute(job: &SweepJob, out: &Path) -> CliResult<Outcome> {
    let cells = sweep_cells(job)?;
    write_csv(out, HEADER, &cells)?;
    let mut outcome = Outcome::default();
    if job.methods.contains(&SweepMethod::ClipSgd) {
        outcome.notes.push(
            "clip_sgd is a baseline with a fixed clipping radius and need not converge".to_string(),
        );
    }
    let best = cells
        .iter()
        .filter_map(|c| c.final_f)
        .fold(f64::INFINITY, f64::min);
    outcome.summary.push(format!("best final loss {best}"));
    for &m in &job.methods {
        let set = good_set(&cells, m);
        let range = match (set.first(), set.last()) {
            (Some(a), Some(b)) => format!("2^{a}..2^{b}"),
            _ => "none".into(),
        };
        outcome.summary.push(format!(
            "{}: {} good step sizes ({range})",
            m.name(),
            set.len()
        ));
    }
    Ok(outcome)
}
