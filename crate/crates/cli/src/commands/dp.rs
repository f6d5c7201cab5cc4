use std::path::Path;

use serde::Serialize;
use smd_core::dp::{dimension_scan, DpGeometry, HorizonRule, PrivacyBudget, ScanConfig};

use super::Outcome;
use crate::error::CliResult;
use crate::jobs::DpJob;
use crate::output::write_csv;

const HEADER: &[&str] = &[
    "dim",
    "geometry",
    "horizon",
    "g",
    "sigma2",
    "ell",
    "mean_bfbe",
    "quantile_bfbe",
    "ratio",
];

#[derive(Serialize)]
struct Row {
    dim: usize,
    geometry: &'static str,
    horizon: usize,
    g: f64,
    sigma2: f64,
    ell: f64,
    mean_bfbe: f64,
    quantile_bfbe: f64,
    /// Euclidean over entropy, on the Euclidean row.
    ratio: Option<f64>,
}

pub fn execute(job: &DpJob, out: &Path) -> CliResult<Outcome> {
    let mut budget = PrivacyBudget::new(job.epsilon, job.delta, job.n, job.g.unwrap_or(1.0))?;
    budget.c1 = job.c1;
    budget.c2 = job.c2;
    budget.validate()?;
    let geometries = match job.geometry {
        Some(g) => vec![g],
        None => vec![DpGeometry::Euclidean, DpGeometry::SimplexEntropy],
    };
    let horizon = match job.horizon {
        Some(horizon) => HorizonRule::Fixed { horizon },
        None => HorizonRule::Utility {
            max: job.max_horizon,
        },
    };
    let cfg = ScanConfig {
        dims: job.dims.clone(),
        geometries,
        budget,
        exact_g: job.g.is_none(),
        horizon,
        replicas: job.replicas,
        beta: job.beta,
        seed: job.seed,
    };
    let scan = dimension_scan(&cfg)?;
    let rows: Vec<Row> = scan
        .rows
        .iter()
        .map(|r| Row {
            dim: r.dim,
            geometry: r.geometry.name(),
            horizon: r.horizon,
            g: r.g,
            sigma2: r.sigma2,
            ell: r.ell,
            mean_bfbe: r.mean,
            quantile_bfbe: r.quantile,
            ratio: match r.geometry {
                DpGeometry::Euclidean => scan.ratios.iter().find(|(d, _)| *d == r.dim).map(|p| p.1),
                DpGeometry::SimplexEntropy => None,
            },
        })
        .collect();
    write_csv(out, HEADER, &rows)?;

    let mut outcome = Outcome::default();
    outcome.notes.push(format!(
        "noise calibrated with c1 = {}, c2 = {}; this is a utility experiment, not a certified privacy deployment",
        job.c1, job.c2
    ));
    for r in &scan.rows {
        if let Some(w) = (PrivacyBudget { g: r.g, ..budget }).horizon_warning(r.horizon) {
            outcome
                .notes
                .push(format!("d = {}, {}: {w}", r.dim, r.geometry.name()));
        }
    }
    if !scan.ratios.is_empty() {
        outcome.summary.push(format!(
            "Spearman trend of the Euclidean/entropy ratio in d: {}",
            scan.trend
        ));
    }
    for r in &scan.rows {
        outcome.summary.push(format!(
            "d = {:>4} {:<15} T = {:>5} mean BFBE {:e}",
            r.dim,
            r.geometry.name(),
            r.horizon,
            r.mean
        ));
    }
    Ok(outcome)
}
