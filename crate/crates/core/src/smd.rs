//! The stochastic mirror descent loop
//!
//! ```text
//! x_{t+1} = argmin_{y in X} eta_t (<g_t, y> + r(y)) + D(y, x_t),   E g_t = grad F(x_t)
//! ```
//!
//! with step-size schedules, iterate selection, Lyapunov diagnostics and
//! replica experiments.

use std::time::Instant;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::problems::{CompositeInstance, DualNorm, NoiseModel, StochasticOracle};
use crate::rng::{self, Purpose};
use crate::{fosp, prox, stats, Error, Result, Vector};

/// Step-size rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    Constant {
        eta: f64,
    },
    /// `min(1/(2 ell), sqrt(lambda0 / (sigma2 ell T)))` for every step.
    Theorem1 {
        ell: f64,
        lambda0: f64,
        sigma2: f64,
        horizon: usize,
    },
    /// `eta0 / (t + 1)^power` with `power in (1/2, 1]`.
    SquareSummable {
        eta0: f64,
        power: f64,
    },
    StichRestart {
        a: f64,
        d: f64,
        horizon: usize,
    },
    Theorem3 {
        mu: f64,
        eps: f64,
        alpha: f64,
        ell: f64,
        horizon: usize,
    },
}

pub fn theorem1_step(ell: f64, lambda0: f64, sigma2: f64, horizon: usize) -> f64 {
    let cap = 0.5 / ell;
    if sigma2 <= 0.0 {
        return cap;
    }
    cap.min((lambda0 / (sigma2 * ell * horizon as f64)).sqrt())
}

/// Two-phase schedule: `1/d` for the first `ceil(T/2)` steps when
/// `T <= 2d/a`, then `1/(a (2d/a + max(t - ceil(T/2), 0)))`.
pub fn stich_schedule(a: f64, d: f64, horizon: usize, t: usize) -> f64 {
    let half = horizon.div_ceil(2);
    if t < half && horizon as f64 <= 2.0 * d / a {
        1.0 / d
    } else {
        1.0 / (a * (2.0 * d / a + t.saturating_sub(half) as f64))
    }
}

/// The Stich schedule with `a = mu eps^((2-alpha)/alpha) / 3` and `d = 2 ell`.
pub fn theorem3_schedule(mu: f64, eps: f64, alpha: f64, ell: f64, horizon: usize, t: usize) -> f64 {
    stich_schedule(
        mu * eps.powf((2.0 - alpha) / alpha) / 3.0,
        2.0 * ell,
        horizon,
        t,
    )
}

impl Schedule {
    pub fn eta(&self, t: usize) -> f64 {
        match *self {
            Schedule::Constant { eta } => eta,
            Schedule::Theorem1 {
                ell,
                lambda0,
                sigma2,
                horizon,
            } => theorem1_step(ell, lambda0, sigma2, horizon),
            Schedule::SquareSummable { eta0, power } => eta0 / ((t + 1) as f64).powf(power),
            Schedule::StichRestart { a, d, horizon } => stich_schedule(a, d, horizon, t),
            Schedule::Theorem3 {
                mu,
                eps,
                alpha,
                ell,
                horizon,
            } => theorem3_schedule(mu, eps, alpha, ell, horizon, t),
        }
    }

    pub fn etas(&self, horizon: usize) -> Vec<f64> {
        (0..horizon).map(|t| self.eta(t)).collect()
    }

    /// Parameter checks, plus `eta_0 <= 1/(2 ell)` when `ell` is given.
    pub fn validate(&self, ell: Option<f64>) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!(
                    "{name} must be positive and finite, got {v}"
                )))
            }
        };
        match *self {
            Schedule::Constant { eta } => positive("eta", eta)?,
            Schedule::Theorem1 {
                ell,
                lambda0,
                sigma2,
                horizon,
            } => {
                positive("ell", ell)?;
                positive("lambda0", lambda0)?;
                if !(sigma2 >= 0.0) || horizon == 0 {
                    return Err(Error::invalid(
                        "theorem1 schedule needs sigma2 >= 0 and horizon >= 1",
                    ));
                }
            }
            Schedule::SquareSummable { eta0, power } => {
                positive("eta0", eta0)?;
                if !(power > 0.5 && power <= 1.0) {
                    return Err(Error::invalid(format!(
                        "power must lie in (1/2, 1], got {power}"
                    )));
                }
            }
            Schedule::StichRestart { a, d, .. } => {
                positive("a", a)?;
                positive("d", d)?;
            }
            Schedule::Theorem3 {
                mu,
                eps,
                alpha,
                ell,
                ..
            } => {
                positive("mu", mu)?;
                positive("eps", eps)?;
                positive("ell", ell)?;
                if !(1.0..=2.0).contains(&alpha) {
                    return Err(Error::invalid(format!(
                        "alpha must lie in [1, 2], got {alpha}"
                    )));
                }
            }
        }
        if let Some(ell) = ell.filter(|&l| l > 0.0) {
            let eta0 = self.eta(0);
            if eta0 > 0.5 / ell * (1.0 + 1e-12) {
                return Err(Error::invalid(format!(
                    "eta_0 = {eta0} exceeds 1/(2 ell) = {}",
                    0.5 / ell
                )));
            }
        }
        Ok(())
    }
}

/// Knobs of a single run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub horizon: usize,
    pub seed: u64,
    pub replica: u64,
    /// Keep every `stride`-th iterate (the first and last are always kept);
    /// zero keeps only those two.
    pub stride: usize,
    /// Diagnostics every this many steps; `None` means `ceil(T/100)`.
    pub checkpoint_every: Option<usize>,
    /// `rho` for the BFBE diagnostic; `None` means `3 ell` (or 1 when `ell = 0`).
    pub bfbe_rho: Option<f64>,
    /// Also record `Phi(x+)` with `x+` the linearized minimizer at `rho = ell`.
    pub record_phi_plus: bool,
    /// Record the Lyapunov value with this `rho` (needs a known optimum).
    pub lyapunov_rho: Option<f64>,
    /// Diverged once `Phi(x_t) > factor * max(1, Phi(x_0))`.
    pub divergence_factor: f64,
    /// Reject schedules with `eta_0 > 1/(2 ell)`.
    pub enforce_step_bound: bool,
    /// Rescale stochastic gradients to at most this l2 norm.
    pub clip: Option<f64>,
    pub x0: Option<Vector>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            horizon: 100,
            seed: 0,
            replica: 0,
            stride: 1,
            checkpoint_every: None,
            bfbe_rho: None,
            record_phi_plus: false,
            lyapunov_rho: None,
            divergence_factor: 1e6,
            enforce_step_bound: true,
            clip: None,
            x0: None,
        }
    }
}

impl RunConfig {
    pub fn new(horizon: usize, seed: u64) -> Self {
        RunConfig {
            horizon,
            seed,
            ..Default::default()
        }
    }

    pub fn resolved_checkpoint_every(&self) -> usize {
        self.checkpoint_every
            .unwrap_or(self.horizon.div_ceil(100))
            .max(1)
    }
}

pub fn default_bfbe_rho(inst: &CompositeInstance) -> f64 {
    if inst.ell > 0.0 {
        3.0 * inst.ell
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub t: usize,
    pub phi: f64,
    pub bfbe: f64,
    pub phi_plus: Option<f64>,
    pub lyapunov: Option<f64>,
}

/// Trajectory of one run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub seed: u64,
    pub replica: u64,
    pub horizon: usize,
    pub bfbe_rho: f64,
    /// `(t, x_t)` pairs kept by the stride.
    pub iterates: Vec<(usize, Vector)>,
    /// `eta_0, ..., eta_{T-1}`.
    pub etas: Vec<f64>,
    pub checkpoints: Vec<Checkpoint>,
    /// Index drawn with probabilities proportional to `eta_t`, before the run.
    pub selected: usize,
    pub selected_point: Option<Vector>,
    pub final_point: Vector,
    /// Number of completed steps.
    pub steps: usize,
    /// Step at which the divergence guard fired.
    pub diverged: Option<usize>,
    /// Solver error that stopped the run early.
    pub aborted: Option<String>,
    pub wall_seconds: f64,
}

impl PartialEq for RunRecord {
    /// Equality of everything except wall-clock time.
    fn eq(&self, o: &Self) -> bool {
        self.seed == o.seed
            && self.replica == o.replica
            && self.horizon == o.horizon
            && self.bfbe_rho == o.bfbe_rho
            && self.iterates == o.iterates
            && self.etas == o.etas
            && self.checkpoints == o.checkpoints
            && self.selected == o.selected
            && self.selected_point == o.selected_point
            && self.final_point == o.final_point
            && self.steps == o.steps
            && self.diverged == o.diverged
            && self.aborted == o.aborted
    }
}

impl RunRecord {
    /// `sum_t eta_t D(x_t) / sum_t eta_t` over `t < T`, available when a
    /// checkpoint was taken at every step of a completed run.
    pub fn weighted_bfbe(&self) -> Option<f64> {
        if self.horizon == 0 || self.steps < self.horizon || self.checkpoints.len() < self.horizon {
            return None;
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for (t, &eta) in self.etas.iter().enumerate() {
            let c = &self.checkpoints[t];
            if c.t != t {
                return None;
            }
            num += eta * c.bfbe;
            den += eta;
        }
        Some(num / den)
    }

    pub fn min_bfbe(&self) -> f64 {
        self.checkpoints
            .iter()
            .filter(|c| c.t < self.horizon.max(1))
            .map(|c| c.bfbe)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn final_phi(&self) -> Option<f64> {
        self.checkpoints
            .last()
            .filter(|c| c.t == self.steps)
            .map(|c| c.phi)
    }

    pub fn ok(&self) -> bool {
        self.diverged.is_none() && self.aborted.is_none()
    }
}

/// Draws `t` with probability `eta_t / sum eta` from the selection stream.
pub fn select_index(etas: &[f64], seed: u64, replica: u64) -> Result<usize> {
    match etas.len() {
        0 => Ok(0),
        1 => Ok(0),
        _ => {
            let dist = WeightedIndex::new(etas)
                .map_err(|e| Error::invalid(format!("selection weights: {e}")))?;
            Ok(dist.sample(&mut rng::stream(seed, replica, Purpose::Selection)))
        }
    }
}

/// The randomly selected iterate `x_bar_T` of a run.
pub fn select_iterate(record: &RunRecord) -> Option<&Vector> {
    record.selected_point.as_ref()
}

/// `lambda = eta_prev rho (Phi(x) - Phi*) + Phi_{1/rho}(x) - Phi*`.
pub fn lyapunov_value(
    x: &Vector,
    eta_prev: f64,
    rho: f64,
    inst: &CompositeInstance,
) -> Result<f64> {
    let star = inst.phi_star_value()?;
    let env = prox::phi_prox(x, rho, inst)?.objective_value;
    Ok(eta_prev * rho * (inst.phi_value(x) - star) + env - star)
}

/// `lambda_0 = Phi_{1/rho}(x0) - Phi* + Phi(x0) - Phi*` with `rho = 2 ell`.
pub fn theorem1_lambda0(x0: &Vector, inst: &CompositeInstance) -> Result<f64> {
    let star = inst.phi_star_value()?;
    let rho = if inst.ell > 0.0 { 2.0 * inst.ell } else { 1.0 };
    let env = prox::phi_prox(x0, rho, inst)?.objective_value;
    Ok(env - star + inst.phi_value(x0) - star)
}

/// `(3 lambda0 + 6 ell sigma2 sum eta^2) / sum eta`.
pub fn theorem1_bound(lambda0: f64, sigma2: f64, ell: f64, etas: &[f64]) -> f64 {
    let s1: f64 = etas.iter().sum();
    let s2: f64 = etas.iter().map(|e| e * e).sum();
    (3.0 * lambda0 + 6.0 * ell * sigma2 * s2) / s1
}

/// `(5 lambda~0 + 60 sigma2 ell sum eta^2) / (2 sum eta)` with
/// `lambda~0 = 3 (Phi(x0) - Phi*) + 8 eta_0 sigma2 log(1/beta)`.
pub fn theorem2_bound(phi0_gap: f64, sigma2: f64, ell: f64, etas: &[f64], beta: f64) -> f64 {
    let s1: f64 = etas.iter().sum();
    let s2: f64 = etas.iter().map(|e| e * e).sum();
    let lambda = 3.0 * phi0_gap + 8.0 * etas[0] * sigma2 * (1.0 / beta).ln();
    (5.0 * lambda + 60.0 * sigma2 * ell * s2) / (2.0 * s1)
}

/// Runs `T` steps of SMD with gradients from `oracle`.
///
/// Parameter problems are returned as errors. Failures during the run do not
/// discard the trajectory: the divergence guard sets `diverged`, and a
/// subproblem solver error sets `aborted`.
pub fn run_smd(
    oracle: &mut StochasticOracle,
    schedule: &Schedule,
    cfg: &RunConfig,
) -> Result<RunRecord> {
    let started = Instant::now();
    let inst = oracle.instance().clone();
    schedule.validate(cfg.enforce_step_bound.then_some(inst.ell))?;
    if cfg.lyapunov_rho.is_some() {
        inst.phi_star_value()?;
    }
    if cfg.record_phi_plus && !(inst.ell > 0.0) {
        return Err(Error::invalid("Phi(x+) diagnostics need ell > 0"));
    }
    let x0 = cfg.x0.clone().unwrap_or_else(|| inst.default_start());
    Error::check_dim(inst.dim(), x0.len())?;
    if !inst
        .feasible
        .contains(&x0, crate::problems::FEASIBILITY_TOL)
        || !inst.dgf.in_zone(&x0)
    {
        return Err(Error::domain(
            "starting point must be feasible and interior",
        ));
    }
    let horizon = cfg.horizon;
    let etas = schedule.etas(horizon);
    let selected = select_index(&etas, cfg.seed, cfg.replica)?;
    let every = cfg.resolved_checkpoint_every();
    let bfbe_rho = cfg.bfbe_rho.unwrap_or_else(|| default_bfbe_rho(&inst));
    let phi0 = inst.phi_value(&x0);
    let ceiling = cfg.divergence_factor * phi0.max(1.0);

    let mut rec = RunRecord {
        seed: cfg.seed,
        replica: cfg.replica,
        horizon,
        bfbe_rho,
        iterates: vec![(0, x0.clone())],
        etas: etas.clone(),
        checkpoints: Vec::new(),
        selected,
        selected_point: None,
        final_point: x0.clone(),
        steps: 0,
        diverged: None,
        aborted: None,
        wall_seconds: 0.0,
    };
    let checkpoint = |x: &Vector, t: usize| -> Result<Checkpoint> {
        let phi = inst.phi_value(x);
        let bfbe = fosp::bfbe(x, bfbe_rho, &inst)?;
        let phi_plus = if cfg.record_phi_plus {
            Some(inst.phi_value(&prox::linearized_min(x, inst.ell, &inst)?.point))
        } else {
            None
        };
        let lyapunov = match cfg.lyapunov_rho {
            Some(rho) => {
                let eta_prev = if t == 0 {
                    etas.first().copied().unwrap_or(0.0)
                } else {
                    etas[t - 1]
                };
                Some(lyapunov_value(x, eta_prev, rho, &inst)?)
            }
            None => None,
        };
        Ok(Checkpoint {
            t,
            phi,
            bfbe,
            phi_plus,
            lyapunov,
        })
    };

    let mut x = x0;
    let result: Result<()> = (|| {
        for (t, &eta) in etas.iter().enumerate() {
            if t == selected {
                rec.selected_point = Some(x.clone());
            }
            if t % every == 0 {
                rec.checkpoints.push(checkpoint(&x, t)?);
            }
            let mut g = oracle.stoch_grad(&x)?;
            if let Some(radius) = cfg.clip {
                let n = g.norm();
                if n > radius {
                    g *= radius / n;
                }
            }
            let next = match prox::mirror_step(&x, &g, eta, &inst) {
                Ok(s) => s.point,
                Err(Error::NonFinite { .. }) => {
                    rec.diverged = Some(t + 1);
                    return Ok(());
                }
                Err(e) => return Err(e),
            };
            rec.steps = t + 1;
            if next.iter().any(|c| !c.is_finite()) || !(inst.phi_value(&next) <= ceiling) {
                rec.diverged = Some(t + 1);
                x = next;
                return Ok(());
            }
            x = next;
            if cfg.stride > 0 && (t + 1) % cfg.stride == 0 && t + 1 < horizon {
                rec.iterates.push((t + 1, x.clone()));
            }
        }
        if horizon == 0 {
            rec.selected_point = Some(x.clone());
        }
        rec.checkpoints.push(checkpoint(&x, horizon)?);
        Ok(())
    })();
    if let Err(e) = result {
        rec.aborted = Some(e.to_string());
    }
    if rec.iterates.last().map(|(t, _)| *t) != Some(rec.steps) && rec.diverged.is_none() {
        rec.iterates.push((rec.steps, x.clone()));
    }
    rec.final_point = x;
    rec.wall_seconds = started.elapsed().as_secs_f64();
    Ok(rec)
}

/// Inputs of a replica experiment.
#[derive(Debug, Clone)]
pub struct ReplicaConfig {
    pub noise: NoiseModel,
    pub schedule: Schedule,
    pub horizon: usize,
    pub replicas: usize,
    pub beta: f64,
    /// `rho` for the weighted BFBE; `None` means `5 ell`.
    pub bfbe_rho: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaSummary {
    /// Weighted-average BFBE of each replica.
    pub values: Vec<f64>,
    /// Empirical `(1 - beta)` quantile of `values`.
    pub quantile: f64,
    /// High-probability bound, when the optimum and a sub-Gaussian parameter are known.
    pub bound: Option<f64>,
    pub sigma2: Option<f64>,
}

impl ReplicaSummary {
    pub fn within_bound(&self) -> Option<bool> {
        self.bound.map(|b| self.quantile <= b)
    }
}

/// Runs independent replicas (in parallel) and compares the `(1 - beta)`
/// quantile of the weighted-average BFBE with the high-probability bound.
pub fn replica_experiment(inst: &CompositeInstance, cfg: &ReplicaConfig) -> Result<ReplicaSummary> {
    if cfg.replicas == 0 || !(cfg.beta > 0.0 && cfg.beta < 1.0) {
        return Err(Error::invalid(
            "need at least one replica and beta in (0, 1)",
        ));
    }
    let rho = cfg
        .bfbe_rho
        .unwrap_or(if inst.ell > 0.0 { 5.0 * inst.ell } else { 1.0 });
    let values: Result<Vec<f64>> = (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut oracle = StochasticOracle::new(inst.clone(), cfg.noise, cfg.seed, r)?;
            let run_cfg = RunConfig {
                horizon: cfg.horizon,
                seed: cfg.seed,
                replica: r,
                stride: 0,
                checkpoint_every: Some(1),
                bfbe_rho: Some(rho),
                ..Default::default()
            };
            let rec = run_smd(&mut oracle, &cfg.schedule, &run_cfg)?;
            if let Some(msg) = rec.aborted {
                return Err(Error::Aborted(format!("replica {r}: {msg}")));
            }
            Ok(rec.weighted_bfbe().unwrap_or(f64::INFINITY))
        })
        .collect();
    let values = values?;
    let quantile = stats::quantile(&values, 1.0 - cfg.beta);
    let probe = StochasticOracle::new(inst.clone(), cfg.noise, cfg.seed, 0)?;
    let sigma2 = DualNorm::of(&inst.dgf).and_then(|n| probe.subgaussian_param(n));
    let bound = match (inst.phi_star_value(), sigma2) {
        (Ok(star), Some(s2)) if inst.ell > 0.0 => {
            let gap = inst.phi_value(&inst.default_start()) - star;
            Some(theorem2_bound(
                gap,
                s2,
                inst.ell,
                &cfg.schedule.etas(cfg.horizon),
                cfg.beta,
            ))
        }
        _ => None,
    };
    Ok(ReplicaSummary {
        values,
        quantile,
        bound,
        sigma2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{
        lemma2_instance, make_quadratic_l1, random_simplex_quadratic, Curvature, FeasibleSet,
    };
    use approx::assert_relative_eq;

    #[test]
    fn theorem1_step_examples() {
        assert_eq!(theorem1_step(1.0, 1.0, 0.0, 100), 0.5);
        assert_relative_eq!(theorem1_step(1.0, 1.0, 1.0, 100), 0.1, epsilon = 1e-15);
        assert_relative_eq!(theorem1_step(1.0, 1.0, 1.0, 400), 0.05, epsilon = 1e-15);
    }

    #[test]
    fn stich_examples() {
        assert_eq!(stich_schedule(1.0, 2.0, 4, 1), 0.5);
        assert_eq!(stich_schedule(1.0, 2.0, 4, 2), 0.25);
        assert_eq!(stich_schedule(1.0, 2.0, 10, 0), 0.25);
    }

    #[test]
    fn theorem3_is_stich_and_non_increasing() {
        for &(mu, eps, alpha, ell, horizon) in &[
            (0.1, 1e-3, 1.5, 2.0, 50),
            (1.0, 0.5, 1.0, 1.0, 7),
            (0.01, 1e-6, 2.0, 3.0, 1000),
        ] {
            let a = mu * f64::powf(eps, (2.0 - alpha) / alpha) / 3.0;
            let mut prev = f64::INFINITY;
            for t in 0..horizon {
                let e = theorem3_schedule(mu, eps, alpha, ell, horizon, t);
                assert_eq!(e, stich_schedule(a, 2.0 * ell, horizon, t));
                assert!(e <= prev);
                prev = e;
            }
            assert!(theorem3_schedule(mu, eps, alpha, ell, horizon, 0) <= 0.5 / ell);
        }
        // alpha = 2 removes the dependence on eps
        assert_eq!(
            theorem3_schedule(0.3, 1e-3, 2.0, 1.0, 100, 70),
            theorem3_schedule(0.3, 0.7, 2.0, 1.0, 100, 70)
        );
    }

    #[test]
    fn schedule_validation() {
        assert!(Schedule::Constant { eta: 0.6 }.validate(Some(1.0)).is_err());
        assert!(Schedule::Constant { eta: 0.5 }.validate(Some(1.0)).is_ok());
        assert!(Schedule::SquareSummable {
            eta0: 0.1,
            power: 0.5
        }
        .validate(None)
        .is_err());
        assert!(Schedule::Theorem3 {
            mu: 1.0,
            eps: 0.1,
            alpha: 2.5,
            ell: 1.0,
            horizon: 3
        }
        .validate(None)
        .is_err());
    }

    #[test]
    fn selection_weights() {
        assert_eq!(select_index(&[1.0, 0.0, 0.0], 5, 0).unwrap(), 0);
        assert_eq!(select_index(&[0.3], 5, 0).unwrap(), 0);
        // uniform weights: chi-square over 10^4 draws on 4 cells
        let mut counts = [0usize; 4];
        for r in 0..10_000 {
            counts[select_index(&[0.2; 4], 11, r).unwrap()] += 1;
        }
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - 2500.0).powi(2) / 2500.0)
            .sum();
        // 99.9% point of chi-square with 3 degrees of freedom
        assert!(chi2 < 16.27, "{counts:?}");
    }

    fn quad() -> CompositeInstance {
        make_quadratic_l1(
            Curvature::Diagonal(vec![1.0, 4.0]),
            Some(Vector::from_row_slice(&[-1.0, 0.5])),
            0.3,
            FeasibleSet::AllSpace,
        )
        .unwrap()
    }

    #[test]
    fn deterministic_descent_is_monotone() {
        let inst = quad();
        let mut o = StochasticOracle::new(inst.clone(), NoiseModel::None, 0, 0).unwrap();
        let cfg = RunConfig {
            checkpoint_every: Some(1),
            x0: Some(Vector::from_row_slice(&[3.0, -2.0])),
            ..RunConfig::new(200, 1)
        };
        let rec = run_smd(&mut o, &Schedule::Constant { eta: 0.125 }, &cfg).unwrap();
        for w in rec.checkpoints.windows(2) {
            assert!(w[1].phi <= w[0].phi + 1e-15);
        }
        assert!(rec.final_phi().unwrap() - inst.phi_star_value().unwrap() < 1e-10);
    }

    #[test]
    fn zero_horizon_and_determinism() {
        let inst = quad();
        let mut o = StochasticOracle::new(inst.clone(), NoiseModel::None, 0, 0).unwrap();
        let rec = run_smd(
            &mut o,
            &Schedule::Constant { eta: 0.1 },
            &RunConfig::new(0, 0),
        )
        .unwrap();
        assert_eq!(rec.iterates.len(), 1);
        assert_eq!(rec.checkpoints.len(), 1);
        assert_eq!(select_iterate(&rec), Some(&inst.default_start()));

        let noise = NoiseModel::GaussianIso { sigma: 0.5 };
        let run = || {
            let mut o = StochasticOracle::new(inst.clone(), noise, 9, 0).unwrap();
            run_smd(
                &mut o,
                &Schedule::Constant { eta: 0.1 },
                &RunConfig {
                    stride: 7,
                    ..RunConfig::new(300, 9)
                },
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn divergence_is_recorded() {
        let inst = quad();
        let mut o = StochasticOracle::new(inst, NoiseModel::None, 0, 0).unwrap();
        let cfg = RunConfig {
            enforce_step_bound: false,
            x0: Some(Vector::from_row_slice(&[1.0, 1.0])),
            ..RunConfig::new(1000, 0)
        };
        let rec = run_smd(&mut o, &Schedule::Constant { eta: 1.0 }, &cfg).unwrap();
        assert!(rec.diverged.is_some());
        assert!(rec.steps < 1000);
        let mut o = StochasticOracle::new(quad(), NoiseModel::None, 0, 0).unwrap();
        assert!(run_smd(
            &mut o,
            &Schedule::Constant { eta: 1.0 },
            &RunConfig::new(10, 0)
        )
        .is_err());
    }

    #[test]
    fn lyapunov_is_nonnegative_and_bounded_by_lambda0() {
        let inst = random_simplex_quadratic(4, 3).unwrap();
        let x0 = inst.default_start();
        let rho = 2.0 * inst.ell;
        let eta0 = 0.5 / inst.ell;
        let lam = lyapunov_value(&x0, eta0, rho, &inst).unwrap();
        assert!(lam >= 0.0);
        assert!(lam <= theorem1_lambda0(&x0, &inst).unwrap() + 1e-12);
        // no known optimum
        let mut unknown = lemma2_instance();
        unknown.phi_star = None;
        let x = Vector::from_element(1, 0.5);
        assert!(matches!(
            lyapunov_value(&x, 0.1, 2.0, &unknown),
            Err(Error::MissingOptimalValue)
        ));
    }

    #[test]
    fn replicas_without_noise_agree() {
        let inst = quad();
        let cfg = ReplicaConfig {
            noise: NoiseModel::None,
            schedule: Schedule::Constant { eta: 0.125 },
            horizon: 50,
            replicas: 4,
            beta: 0.5,
            bfbe_rho: None,
            seed: 1,
        };
        let s = replica_experiment(&inst, &cfg).unwrap();
        assert!(s.values.iter().all(|&v| v == s.values[0]));
        assert_eq!(s.quantile, s.values[0]);
        assert!(s.within_bound().unwrap());
    }
}
