use std::path::Path;

use serde::Serialize;
use smd_core::dgf::DistanceGenerator;
use smd_core::fosp::{self, lemma2_closed_form, CHECK_SLACK};
use smd_core::problems::{sample_points, InstanceSpec};
use smd_core::vector;

use super::Outcome;
use crate::error::{CliError, CliResult};
use crate::jobs::FospCheckJob;
use crate::output::write_csv;

const HEADER: &[&str] = &["instance", "check", "point", "rho", "lhs", "rhs", "ok"];
const CLOSED_FORM_TOL: f64 = 1e-9;
const PERTURBATION: f64 = 100.0;

#[derive(Serialize)]
struct Row {
    instance: String,
    check: &'static str,
    point: usize,
    rho: f64,
    lhs: f64,
    rhs: f64,
    ok: bool,
}

fn below(lhs: f64, rhs: f64) -> bool {
    lhs - rhs <= CHECK_SLACK * lhs.abs().max(rhs.abs()).max(1.0)
}

fn close(lhs: f64, rhs: f64) -> bool {
    (lhs - rhs).abs() <= CLOSED_FORM_TOL * rhs.abs().max(1.0)
}

pub fn execute(job: &FospCheckJob, out: &Path) -> CliResult<Outcome> {
    if job.points == 0 || job.instances.is_empty() {
        return Err(CliError::usage(
            "fosp-check needs at least one instance and one sample point",
        ));
    }
    if job.rho_factors.iter().any(|&f| !(f > 0.0)) {
        return Err(CliError::usage("rho factors must be positive"));
    }
    let bump = if job.perturb_measure {
        PERTURBATION
    } else {
        1.0
    };
    let mut rows = Vec::new();
    for (i, spec) in job.instances.iter().enumerate() {
        let inst = spec.build()?;
        let name = inst.name.clone();
        let points = sample_points(
            &inst,
            job.points,
            job.scale,
            job.seed.wrapping_add(i as u64),
        );
        let unit = if inst.ell > 0.0 { inst.ell } else { 1.0 };

        if matches!(inst.dgf, DistanceGenerator::Euclidean) && inst.ell > 0.0 {
            let rho = 4.0 * inst.ell;
            let c = fosp::sandwich_constant(inst.ell, rho, 1.0)?;
            for (k, x) in points.iter().enumerate() {
                let r = fosp::report(x, rho, &inst)?;
                let bgm = bump * r.bgm;
                for (check, lhs, rhs) in [
                    ("lemma1_lower", r.bpm / c, bgm),
                    ("lemma1_upper", bgm, c * r.bpm),
                ] {
                    rows.push(Row {
                        instance: name.clone(),
                        check,
                        point: k,
                        rho,
                        lhs,
                        rhs,
                        ok: below(lhs, rhs),
                    });
                }
            }
        }

        for &f in &job.rho_factors {
            let rho = f * unit;
            for (k, x) in points.iter().enumerate() {
                let lhs = bump * fosp::bgm(x, rho, &inst)?;
                let rhs = 2.0 * fosp::bfbe(x, rho / 2.0, &inst)?;
                rows.push(Row {
                    instance: name.clone(),
                    check: "lemma2",
                    point: k,
                    rho,
                    lhs,
                    rhs,
                    ok: below(lhs, rhs),
                });
            }
        }

        if matches!(spec, InstanceSpec::Lemma2 {}) {
            for (k, xi) in (1..=10).map(|i| i as f64 / 10.0).enumerate() {
                let x = vector([xi])?;
                for rho in [1.0, 1.5, 2.0] {
                    let d = fosp::bfbe(&x, rho, &inst)?;
                    let dp = bump * fosp::bgm(&x, rho, &inst)?;
                    let (d_cf, dp_cf) = (
                        lemma2_closed_form::bfbe(xi, rho),
                        lemma2_closed_form::bgm(xi, rho),
                    );
                    let x2 = xi * xi;
                    for (check, lhs, rhs) in [
                        ("bfbe_closed_form", d, d_cf),
                        ("bgm_closed_form", dp, dp_cf),
                        ("ratio", d / x2, d_cf / x2),
                    ] {
                        rows.push(Row {
                            instance: name.clone(),
                            check,
                            point: k,
                            rho,
                            lhs,
                            rhs,
                            ok: close(lhs, rhs),
                        });
                    }
                }
            }
        }
    }
    write_csv(out, HEADER, &rows)?;

    let failed = rows.iter().filter(|r| !r.ok).count();
    let mut outcome = Outcome {
        summary: vec![format!("{} checks, {} violations", rows.len(), failed)],
        ..Default::default()
    };
    if job.perturb_measure {
        outcome.notes.push(format!(
            "negative control: BGM multiplied by {PERTURBATION}"
        ));
    }
    if failed > 0 {
        let worst = rows
            .iter()
            .find(|r| !r.ok)
            .map(|r| format!("{} {} point {}", r.instance, r.check, r.point));
        outcome.failure = Some(CliError::Violation(format!(
            "{failed} checks failed, first: {}",
            worst.unwrap_or_default()
        )));
    }
    Ok(outcome)
}
