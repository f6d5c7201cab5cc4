//! Differentially private gradient perturbation in Euclidean and entropy geometry.
//!
//! The noise level follows the moments-accountant rule
//! `sigma_G^2 = c2 G^2 T log(1/delta) / (n^2 eps^2)`. The constants `c1` and
//! `c2` are not known in closed form, so they are configuration values and
//! the results demonstrate utility scaling, not a certified deployment.

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dgf::{norms, DistanceGenerator};
use crate::problems::{
    make_simplex_quadratic, CompositeInstance, Curvature, NoiseModel, StochasticOracle,
};
use crate::rng::{self, Purpose};
use crate::smd::{run_smd, RunConfig, RunRecord, Schedule};
use crate::{stats, Error, Result, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
    pub n: usize,
    /// Bound on `||grad F(x)||_2` over the feasible set.
    pub g: f64,
    #[serde(default = "one")]
    pub c1: f64,
    #[serde(default = "one")]
    pub c2: f64,
}

fn one() -> f64 {
    1.0
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64, n: usize, g: f64) -> Result<Self> {
        let b = PrivacyBudget {
            epsilon,
            delta,
            n,
            g,
            c1: 1.0,
            c2: 1.0,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !(pos(self.epsilon) && pos(self.g) && pos(self.c1) && pos(self.c2) && self.n > 0) {
            return Err(Error::invalid("privacy budget entries must be positive"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        Ok(())
    }

    /// Warning text when `eps > c1 T`, where the accountant is not claimed to apply.
    pub fn horizon_warning(&self, horizon: usize) -> Option<String> {
        (self.epsilon > self.c1 * horizon as f64).then(|| {
            format!(
                "epsilon = {} exceeds c1 T = {}",
                self.epsilon,
                self.c1 * horizon as f64
            )
        })
    }
}

/// Noise variance `sigma_G^2 = c2 G^2 T log(1/delta) / (n^2 eps^2)`.
pub fn calibrate_sigma(budget: &PrivacyBudget, horizon: usize) -> Result<f64> {
    budget.validate()?;
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    let n = budget.n as f64;
    Ok(
        budget.c2 * budget.g * budget.g * horizon as f64 * (1.0 / budget.delta).ln()
            / (n * n * budget.epsilon * budget.epsilon),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DpGeometry {
    /// Projected (proximal) gradient descent.
    Euclidean,
    /// Mirror descent with the entropy on the simplex.
    SimplexEntropy,
}

impl DpGeometry {
    pub fn name(self) -> &'static str {
        match self {
            DpGeometry::Euclidean => "euclidean",
            DpGeometry::SimplexEntropy => "entropy",
        }
    }

    fn matches(self, dgf: &DistanceGenerator) -> bool {
        matches!(
            (self, dgf),
            (DpGeometry::Euclidean, DistanceGenerator::Euclidean)
                | (
                    DpGeometry::SimplexEntropy,
                    DistanceGenerator::SimplexEntropy { .. }
                )
        )
    }
}

impl std::str::FromStr for DpGeometry {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" | "l2" => Ok(DpGeometry::Euclidean),
            "entropy" | "l1" | "simplex_entropy" => Ok(DpGeometry::SimplexEntropy),
            _ => Err(Error::invalid(format!("unknown geometry {s:?}"))),
        }
    }
}

/// Simplex-constrained quadratic `1/2 x'Ax + q'x` with Gaussian data, in the
/// requested geometry. The smoothness constant is `||A||_2` for the
/// Euclidean geometry and `max |A_ij|` for the entropy.
pub fn dp_simplex_problem(
    dim: usize,
    seed: u64,
    geometry: DpGeometry,
) -> Result<CompositeInstance> {
    if dim == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    let mut rng = rng::stream(seed, 0, Purpose::Data);
    let b = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let a = (&b + b.transpose()) * 0.5;
    let q = Vector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let l2 = Curvature::Dense(a.clone()).operator_norm();
    let mut inst = make_simplex_quadratic(a, q)?;
    inst.name = format!("dp_simplex_quadratic(d={dim},seed={seed})");
    match geometry {
        DpGeometry::SimplexEntropy => Ok(inst),
        DpGeometry::Euclidean => inst.with_geometry(DistanceGenerator::Euclidean, l2),
    }
}

/// `max_x ||grad F(x)||_2` over the simplex. The gradient is affine in `x`
/// for quadratics, so the convex norm peaks at a vertex.
pub fn simplex_gradient_bound(inst: &CompositeInstance) -> f64 {
    let d = inst.dim();
    (0..d)
        .map(|j| {
            let mut e = Vector::zeros(d);
            e[j] = 1.0;
            inst.f_grad(&e).norm()
        })
        .fold(0.0, f64::max)
}

/// Largest `||grad F||_2` seen on the vertices and `samples` random points of
/// the feasible set. Used to warn when the declared `G` looks too small.
pub fn sampled_gradient_bound(inst: &CompositeInstance, samples: usize, seed: u64) -> f64 {
    let d = inst.dim();
    let mut rng = rng::stream(seed, 0, Purpose::Sampling);
    let mut best = simplex_gradient_bound(inst);
    for _ in 0..samples {
        let raw = Vector::from_fn(d, |_, _| -rng.random::<f64>().ln());
        let x = inst.feasible.project(&(&raw / raw.sum()));
        best = best.max(inst.f_grad(&x).norm());
    }
    best
}

/// Gaussian-perturbed mirror descent with `eta_t = 1/(2 ell)` and diagnostics
/// at every step (BFBE with `rho = 5 ell`).
pub fn dp_run(
    geometry: DpGeometry,
    inst: &CompositeInstance,
    budget: &PrivacyBudget,
    horizon: usize,
    seed: u64,
    replica: u64,
) -> Result<RunRecord> {
    if !geometry.matches(&inst.dgf) {
        return Err(Error::invalid(format!(
            "instance geometry {} does not match {}",
            inst.dgf.name(),
            geometry.name()
        )));
    }
    if !(inst.ell > 0.0) {
        return Err(Error::invalid("dp_run needs ell > 0"));
    }
    let sigma = calibrate_sigma(budget, horizon)?.sqrt();
    let mut oracle = StochasticOracle::new(
        inst.clone(),
        NoiseModel::GaussianPerturb { sigma },
        seed,
        replica,
    )?;
    let cfg = RunConfig {
        horizon,
        seed,
        replica,
        stride: 0,
        checkpoint_every: Some(1),
        bfbe_rho: Some(5.0 * inst.ell),
        ..Default::default()
    };
    run_smd(
        &mut oracle,
        &Schedule::Constant {
            eta: 0.5 / inst.ell,
        },
        &cfg,
    )
}

/// How the horizon is chosen per cell of a dimension scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HorizonRule {
    Fixed {
        horizon: usize,
    },
    /// `n eps sqrt(ell) / (G sqrt(k log(1/delta) log(1/beta)))` with
    /// `k = log d` for entropy and `k = d` for Euclidean, clamped to `[1, max]`.
    Utility {
        max: usize,
    },
}

impl HorizonRule {
    pub fn horizon(
        &self,
        geometry: DpGeometry,
        budget: &PrivacyBudget,
        ell: f64,
        dim: usize,
        beta: f64,
    ) -> usize {
        match *self {
            HorizonRule::Fixed { horizon } => horizon.max(1),
            HorizonRule::Utility { max } => {
                let k = match geometry {
                    DpGeometry::Euclidean => dim as f64,
                    DpGeometry::SimplexEntropy => (dim.max(2) as f64).ln(),
                };
                let t = budget.n as f64 * budget.epsilon * ell.sqrt()
                    / (budget.g * (k * (1.0 / budget.delta).ln() * (1.0 / beta).ln()).sqrt());
                (t.round() as usize).clamp(1, max.max(1))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub dims: Vec<usize>,
    pub geometries: Vec<DpGeometry>,
    pub budget: PrivacyBudget,
    /// Replace `G` by the exact gradient bound of each instance.
    pub exact_g: bool,
    pub horizon: HorizonRule,
    pub replicas: usize,
    pub beta: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub dim: usize,
    pub geometry: DpGeometry,
    pub horizon: usize,
    pub g: f64,
    pub sigma2: f64,
    pub ell: f64,
    pub mean: f64,
    pub quantile: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanSummary {
    pub rows: Vec<ScanRow>,
    /// `(d, mean Euclidean / mean entropy)`, empty unless both geometries ran.
    pub ratios: Vec<(usize, f64)>,
    /// Spearman correlation of the ratio with `d`.
    pub trend: f64,
}

/// Runs each geometry on the same simplex problem for every dimension and
/// compares their weighted-average BFBE.
pub fn dimension_scan(cfg: &ScanConfig) -> Result<ScanSummary> {
    if cfg.dims.is_empty() || cfg.replicas == 0 || cfg.geometries.is_empty() {
        return Err(Error::invalid(
            "dimension scan needs dimensions, geometries and replicas",
        ));
    }
    let mut rows = Vec::new();
    for (i, &d) in cfg.dims.iter().enumerate() {
        let seed = cfg.seed.wrapping_add(i as u64);
        for &geometry in &cfg.geometries {
            let inst = dp_simplex_problem(d, seed, geometry)?;
            let mut budget = cfg.budget;
            if cfg.exact_g {
                budget.g = simplex_gradient_bound(&inst);
            }
            let horizon = cfg
                .horizon
                .horizon(geometry, &budget, inst.ell, d, cfg.beta);
            let values: Result<Vec<f64>> = (0..cfg.replicas as u64)
                .into_par_iter()
                .map(|r| {
                    let rec = dp_run(geometry, &inst, &budget, horizon, seed, r)?;
                    match (&rec.aborted, rec.weighted_bfbe()) {
                        (None, Some(v)) => Ok(v),
                        (Some(msg), _) => Err(Error::Aborted(format!("replica {r}: {msg}"))),
                        (None, None) => Ok(f64::INFINITY),
                    }
                })
                .collect();
            let values = values?;
            rows.push(ScanRow {
                dim: d,
                geometry,
                horizon,
                g: budget.g,
                sigma2: calibrate_sigma(&budget, horizon)?,
                ell: inst.ell,
                mean: stats::mean(&values),
                quantile: stats::quantile(&values, 1.0 - cfg.beta),
            });
        }
    }
    let mean_of = |d: usize, g: DpGeometry| {
        rows.iter()
            .find(|r| r.dim == d && r.geometry == g)
            .map(|r| r.mean)
    };
    let ratios: Vec<(usize, f64)> = cfg
        .dims
        .iter()
        .filter_map(|&d| {
            Some((
                d,
                mean_of(d, DpGeometry::Euclidean)? / mean_of(d, DpGeometry::SimplexEntropy)?,
            ))
        })
        .collect();
    let xs: Vec<f64> = ratios.iter().map(|r| r.0 as f64).collect();
    let ys: Vec<f64> = ratios.iter().map(|r| r.1).collect();
    let trend = if ratios.len() > 1 {
        stats::spearman(&xs, &ys)
    } else {
        f64::NAN
    };
    Ok(ScanSummary {
        rows,
        ratios,
        trend,
    })
}

/// Monte Carlo `(E ||b||_2^2, E ||b||_inf^2)` for `b ~ N(0, sigma^2 I_d)`.
pub fn noise_norm_moments(dim: usize, sigma: f64, draws: usize, seed: u64) -> (f64, f64) {
    let mut rng = rng::stream(seed, 0, Purpose::GradientNoise);
    let mut l2 = 0.0;
    let mut linf = 0.0;
    for _ in 0..draws {
        let b = Vector::from_fn(dim, |_, _| sigma * rng.sample::<f64, _>(StandardNormal));
        l2 += b.norm_squared();
        linf += norms::linf(&b).powi(2);
    }
    (l2 / draws as f64, linf / draws as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn calibration_formula() {
        let b = PrivacyBudget::new(1.0, 1e-5, 1000, 1.0).unwrap();
        let s = calibrate_sigma(&b, 100).unwrap();
        assert_relative_eq!(s, 100.0 * (1e5f64).ln() / 1e6, max_relative = 1e-15);
        assert_relative_eq!(s, 1.151292546e-3, max_relative = 1e-9);
        assert_relative_eq!(
            calibrate_sigma(&b, 200).unwrap(),
            2.0 * s,
            max_relative = 1e-15
        );
        let b2 = PrivacyBudget { n: 2000, ..b };
        assert_relative_eq!(
            calibrate_sigma(&b2, 100).unwrap(),
            s / 4.0,
            max_relative = 1e-15
        );
        assert!(calibrate_sigma(&b, 0).is_err());
        assert!(PrivacyBudget::new(1.0, 1.0, 10, 1.0).is_err());
        assert!(b.horizon_warning(100).is_none());
        assert!(PrivacyBudget {
            epsilon: 500.0,
            ..b
        }
        .horizon_warning(100)
        .is_some());
    }

    #[test]
    fn noise_moments_match_max_tail() {
        for &d in &[1usize, 4, 64] {
            let draws = 10_000;
            let (l2, linf) = noise_norm_moments(d, 0.5, draws, d as u64);
            let s2 = 0.25;
            // E||b||_2^2 = d s2 with sd sqrt(2d) s2 per draw
            let band = 3.0 * (2.0 * d as f64).sqrt() * s2 / (draws as f64).sqrt();
            assert!((l2 - d as f64 * s2).abs() <= band, "d={d}: {l2}");
            assert!(linf <= 2.0 * (2.0 * d as f64).ln() * s2 + band);
        }
    }

    #[test]
    fn gradient_bound_is_attained_at_vertices() {
        let inst = dp_simplex_problem(6, 2, DpGeometry::SimplexEntropy).unwrap();
        let exact = simplex_gradient_bound(&inst);
        assert!(sampled_gradient_bound(&inst, 500, 1) <= exact + 1e-12);
    }

    #[test]
    fn geometry_mismatch_is_rejected() {
        let inst = dp_simplex_problem(3, 0, DpGeometry::Euclidean).unwrap();
        let b = PrivacyBudget::new(1.0, 1e-5, 100, 1.0).unwrap();
        assert!(dp_run(DpGeometry::SimplexEntropy, &inst, &b, 5, 0, 0).is_err());
    }

    #[test]
    fn entropy_iterates_stay_interior() {
        let inst = dp_simplex_problem(8, 4, DpGeometry::SimplexEntropy).unwrap();
        let b = PrivacyBudget::new(0.5, 1e-5, 100, simplex_gradient_bound(&inst)).unwrap();
        let rec = dp_run(DpGeometry::SimplexEntropy, &inst, &b, 50, 1, 0).unwrap();
        assert!(rec.ok());
        assert!(rec.final_point.iter().all(|&v| v > 0.0));
        assert!((rec.final_point.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn huge_budget_is_deterministic_descent() {
        let inst = dp_simplex_problem(5, 1, DpGeometry::Euclidean).unwrap();
        let b = PrivacyBudget::new(1e12, 1e-5, 1000, 1.0).unwrap();
        let rec = dp_run(DpGeometry::Euclidean, &inst, &b, 200, 0, 0).unwrap();
        for w in rec.checkpoints.windows(2) {
            assert!(w[1].phi <= w[0].phi + 1e-12);
        }
    }

    #[test]
    fn utility_horizon() {
        let b = PrivacyBudget::new(1.0, 1e-5, 1000, 2.0).unwrap();
        let rule = HorizonRule::Utility { max: 1_000_000 };
        let te = rule.horizon(DpGeometry::SimplexEntropy, &b, 4.0, 64, 0.1);
        let tg = rule.horizon(DpGeometry::Euclidean, &b, 4.0, 64, 0.1);
        let want = 1000.0 * 2.0 / (2.0 * (64f64.ln() * 1e5f64.ln() * 10f64.ln()).sqrt());
        assert_eq!(te, want.round() as usize);
        assert!(tg < te);
        assert_eq!(
            HorizonRule::Fixed { horizon: 0 }.horizon(DpGeometry::Euclidean, &b, 1.0, 2, 0.1),
            1
        );
    }

    #[test]
    fn single_geometry_scan_has_no_ratios() {
        let cfg = ScanConfig {
            dims: vec![3, 5],
            geometries: vec![DpGeometry::SimplexEntropy],
            budget: PrivacyBudget::new(1.0, 1e-5, 1000, 1.0).unwrap(),
            exact_g: true,
            horizon: HorizonRule::Fixed { horizon: 20 },
            replicas: 2,
            beta: 0.1,
            seed: 0,
        };
        let s = dimension_scan(&cfg).unwrap();
        assert_eq!(s.rows.len(), 2);
        assert!(s.ratios.is_empty());
        assert!(s.trend.is_nan());
        assert!(dimension_scan(&ScanConfig {
            geometries: vec![],
            ..cfg
        })
        .is_err());
    }
}
