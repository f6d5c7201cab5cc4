//! First-order stationarity measures and checks of the relations between them.
//!
//! For `rho > 0`, with `x^` the Bregman proximal point and `x+` the minimizer
//! of the linearized model `Q_rho(x, .)`:
//!
//! ```text
//! BPM   Delta_rho(x)  = rho^2 Dsym(x^, x)
//! BGM   Delta+_rho(x) = rho^2 Dsym(x+, x)
//! BFBE  D_rho(x)      = -2 rho min_y Q_rho(x, y)
//! ```

use crate::dgf::DistanceGenerator;
use crate::problems::{CompositeInstance, FeasibleSet};
use crate::prox::{self, SubproblemSolution};
use crate::{Error, Result, Vector};

/// Slack for the sampled inequality checks, ten times the inner point tolerance.
pub const CHECK_SLACK: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct StationarityReport {
    pub rho: f64,
    pub bpm: f64,
    pub bgm: f64,
    pub bfbe: f64,
    pub bpm_residual: f64,
    pub bgm_residual: f64,
}

/// `rho^2 Dsym(x^, x)`; needs `rho > ell`.
pub fn bpm(x: &Vector, rho: f64, inst: &CompositeInstance) -> Result<f64> {
    let hat = prox::phi_prox(x, rho, inst)?;
    Ok(rho * rho * inst.dgf.bregman_sym(&hat.point, x)?)
}

/// `rho^2 Dsym(x+, x)`.
pub fn bgm(x: &Vector, rho: f64, inst: &CompositeInstance) -> Result<f64> {
    let plus = prox::linearized_min(x, rho, inst)?;
    Ok(rho * rho * inst.dgf.bregman_sym(&plus.point, x)?)
}

/// `-2 rho min_y Q_rho(x, y)`, clipped at zero against rounding.
pub fn bfbe(x: &Vector, rho: f64, inst: &CompositeInstance) -> Result<f64> {
    Ok(bfbe_from(&prox::linearized_min(x, rho, inst)?, rho))
}

fn bfbe_from(plus: &SubproblemSolution, rho: f64) -> f64 {
    (-2.0 * rho * plus.objective_value).max(0.0)
}

pub fn report(x: &Vector, rho: f64, inst: &CompositeInstance) -> Result<StationarityReport> {
    let hat = prox::phi_prox(x, rho, inst)?;
    let plus = prox::linearized_min(x, rho, inst)?;
    Ok(StationarityReport {
        rho,
        bpm: rho * rho * inst.dgf.bregman_sym(&hat.point, x)?,
        bgm: rho * rho * inst.dgf.bregman_sym(&plus.point, x)?,
        bfbe: bfbe_from(&plus, rho),
        bpm_residual: hat.residual,
        bgm_residual: plus.residual,
    })
}

/// `C(ell, rho, s) = ((1+s)(rho-ell) + (1+1/s) ell) / (rho - ell - (1+1/s) ell)`,
/// defined for `s > 0` and `rho > ell/s + 2 ell`.
pub fn sandwich_constant(ell: f64, rho: f64, s: f64) -> Result<f64> {
    if !(s > 0.0) || !(ell >= 0.0) {
        return Err(Error::invalid(format!(
            "need s > 0 and ell >= 0, got s={s}, ell={ell}"
        )));
    }
    if !(rho > ell / s + 2.0 * ell) {
        return Err(Error::invalid(format!(
            "rho={rho} is below the threshold ell/s + 2 ell = {}",
            ell / s + 2.0 * ell
        )));
    }
    let k = 1.0 + 1.0 / s;
    Ok(((1.0 + s) * (rho - ell) + k * ell) / (rho - ell - k * ell))
}

/// Outcome of a batch of sampled inequality checks: the worst violation
/// beyond the slack (zero when every check passes) and which check it was.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub samples: usize,
    pub violations: usize,
    pub max_violation: f64,
    pub worst_sample: Option<usize>,
}

impl CheckReport {
    fn new() -> Self {
        CheckReport {
            samples: 0,
            violations: 0,
            max_violation: 0.0,
            worst_sample: None,
        }
    }

    /// Records `lhs <= rhs` with a relative slack.
    fn record(&mut self, lhs: f64, rhs: f64) {
        let i = self.samples;
        self.samples += 1;
        let excess = lhs - rhs - CHECK_SLACK * lhs.abs().max(rhs.abs()).max(1.0);
        if excess > 0.0 || lhs.is_nan() || rhs.is_nan() {
            self.violations += 1;
            if excess.is_nan() || excess > self.max_violation {
                self.max_violation = if excess.is_nan() {
                    f64::INFINITY
                } else {
                    excess
                };
                self.worst_sample = Some(i);
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    pub fn merge(&mut self, other: &CheckReport) {
        if other.max_violation > self.max_violation {
            self.max_violation = other.max_violation;
            self.worst_sample = other.worst_sample.map(|w| w + self.samples);
        }
        self.samples += other.samples;
        self.violations += other.violations;
    }
}

/// `(1/C) Delta_rho <= Delta+_rho <= C Delta_rho` on each point. Only
/// meaningful in Euclidean geometry, where `sqrt(Dsym)` is a metric.
pub fn verify_lemma1(
    inst: &CompositeInstance,
    points: &[Vector],
    rho: f64,
    s: f64,
) -> Result<CheckReport> {
    if !matches!(inst.dgf, DistanceGenerator::Euclidean) {
        return Err(Error::Unsupported(
            "the sandwich needs a metric divergence (Euclidean geometry)".into(),
        ));
    }
    let c = sandwich_constant(inst.ell, rho, s)?;
    let mut rep = CheckReport::new();
    for x in points {
        let r = report(x, rho, inst)?;
        rep.record(r.bpm / c, r.bgm);
        rep.record(r.bgm, c * r.bpm);
    }
    Ok(rep)
}

/// `Delta+_rho(x) <= 2 D_{rho/2}(x)` on each point.
pub fn verify_lemma2(inst: &CompositeInstance, points: &[Vector], rho: f64) -> Result<CheckReport> {
    let mut rep = CheckReport::new();
    for x in points {
        rep.record(bgm(x, rho, inst)?, 2.0 * bfbe(x, rho / 2.0, inst)?);
    }
    Ok(rep)
}

/// Closed forms on the instance `F = x^2/2`, `r = |x|`, `X = [0, 1]`.
///
/// For `x in (0, 1]` and `rho <= 1 + 1/x` the linearized minimizer is `0`, so
/// `Delta+_rho(x) = rho^2 x^2` and `D_rho(x) = 2 rho |x| + 2 rho (1 - rho/2) x^2`.
pub mod lemma2_closed_form {
    pub fn bfbe(x: f64, rho: f64) -> f64 {
        2.0 * rho * x.abs() + 2.0 * rho * (1.0 - rho / 2.0) * x * x
    }

    pub fn bgm(x: f64, rho: f64) -> f64 {
        rho * rho * x * x
    }

    /// Lower bound `2/|x|` on `D_rho(x) / Delta+_1(x)`.
    pub fn ratio_lower_bound(x: f64) -> f64 {
        2.0 / x.abs()
    }
}

/// `rho^2 Dsym(x^, x+)` against `(ell / (rho - ell)) (Delta_rho + Delta+_rho)`.
pub fn bpm_bgm_closeness(x: &Vector, rho: f64, inst: &CompositeInstance) -> Result<(f64, f64)> {
    let hat = prox::phi_prox(x, rho, inst)?;
    let plus = prox::linearized_min(x, rho, inst)?;
    let d = &inst.dgf;
    let lhs = rho * rho * d.bregman_sym(&hat.point, &plus.point)?;
    let delta = rho * rho * d.bregman_sym(&hat.point, x)?;
    let delta_plus = rho * rho * d.bregman_sym(&plus.point, x)?;
    Ok((lhs, inst.ell / (rho - inst.ell) * (delta + delta_plus)))
}

/// Frank-Wolfe gap `max_{y in X} <grad F(x), x - y>` over a box or simplex.
pub fn fw_gap(x: &Vector, inst: &CompositeInstance) -> Result<f64> {
    let g = inst.f_grad(x);
    match &inst.feasible {
        FeasibleSet::Box { lo, hi } => {
            if lo.iter().chain(hi.iter()).any(|c| !c.is_finite()) {
                return Err(Error::Unsupported(
                    "Frank-Wolfe gap on an unbounded box".into(),
                ));
            }
            Ok((0..x.len())
                .map(|i| g[i] * (x[i] - if g[i] > 0.0 { lo[i] } else { hi[i] }))
                .sum())
        }
        FeasibleSet::Simplex(_) => Ok(g.dot(x) - g.min()),
        FeasibleSet::ProductSimplex { cols, .. } => Ok(g
            .as_slice()
            .chunks(*cols)
            .zip(x.as_slice().chunks(*cols))
            .map(|(gr, xr)| {
                let m = gr.iter().fold(f64::INFINITY, |a, &b| a.min(b));
                gr.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>() - m
            })
            .sum()),
        FeasibleSet::AllSpace => Err(Error::Unsupported(
            "Frank-Wolfe gap on an unbounded set".into(),
        )),
    }
}

/// `||x - P(x - grad F(x))||_2` with `P` the Euclidean prox of `r + delta_X`.
/// Zero exactly when `0 in grad F(x) + d r(x) + N_X(x)`, in any geometry.
pub fn prox_gradient_residual(x: &Vector, inst: &CompositeInstance) -> Result<f64> {
    let g = inst.f_grad(x);
    let p = prox::reg_set_prox(&inst.reg, &inst.feasible, &(x - g), 1.0)?;
    Ok((p - x).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{lemma2_instance, make_quadratic_l1, Curvature};
    use approx::assert_relative_eq;

    fn v(c: &[f64]) -> Vector {
        Vector::from_row_slice(c)
    }

    fn half_square() -> CompositeInstance {
        make_quadratic_l1(
            Curvature::Diagonal(vec![1.0]),
            None,
            0.0,
            FeasibleSet::AllSpace,
        )
        .unwrap()
    }

    #[test]
    fn bpm_example() {
        // x^ = rho x / (rho + 1) = 4/5, Delta = 16 (1/5)^2 = 0.64
        let got = bpm(&v(&[1.0]), 4.0, &half_square()).unwrap();
        assert_relative_eq!(got, 0.64, max_relative = 1e-10);
        assert!(bpm(&v(&[0.0]), 4.0, &half_square()).unwrap() < 1e-20);
    }

    #[test]
    fn smooth_unconstrained_measures_equal_gradient_norm() {
        let inst = make_quadratic_l1(
            Curvature::Diagonal(vec![1.0, -2.0]),
            None,
            0.0,
            FeasibleSet::AllSpace,
        )
        .unwrap();
        let x = v(&[0.7, 0.4]);
        let g2 = inst.f_grad(&x).norm_squared();
        for rho in [1.0, 3.0, 10.0] {
            assert_relative_eq!(bgm(&x, rho, &inst).unwrap(), g2, max_relative = 1e-12);
            assert_relative_eq!(bfbe(&x, rho, &inst).unwrap(), g2, max_relative = 1e-12);
        }
    }

    #[test]
    fn lemma2_examples() {
        let inst = lemma2_instance();
        let x = v(&[0.5]);
        assert_relative_eq!(bfbe(&x, 2.0, &inst).unwrap(), 2.0, epsilon = 1e-12);
        assert_relative_eq!(bgm(&x, 1.0, &inst).unwrap(), 0.25, epsilon = 1e-12);
        assert!(8.0 >= lemma2_closed_form::ratio_lower_bound(0.5));
        let rep = verify_lemma2(&inst, &[x], 2.0).unwrap();
        assert!(rep.passed());
    }

    #[test]
    fn sandwich_examples() {
        assert_eq!(sandwich_constant(1.0, 4.0, 1.0).unwrap(), 8.0);
        assert_eq!(sandwich_constant(1.0, 5.0, 1.0).unwrap(), 5.0);
        let big = sandwich_constant(1.0, 1e9, 50.0).unwrap();
        assert_relative_eq!(big, 51.0, max_relative = 1e-6);
        assert!(sandwich_constant(1.0, 3.0, 1.0).is_err());
        assert!(sandwich_constant(1.0, 5.0, 0.0).is_err());
    }

    #[test]
    fn lemma1_rejects_entropy() {
        let inst = crate::problems::random_simplex_quadratic(3, 1).unwrap();
        assert!(verify_lemma1(&inst, &[], 4.0, 1.0).is_err());
    }

    #[test]
    fn check_report_flags_violations() {
        let mut r = CheckReport::new();
        r.record(1.0, 2.0);
        assert!(r.passed());
        r.record(3.0, 2.0);
        assert!(!r.passed());
        assert_eq!(r.worst_sample, Some(1));
    }

    #[test]
    fn fw_gap_examples() {
        let inst = crate::problems::make_simplex_quadratic(
            nalgebra::DMatrix::zeros(3, 3),
            v(&[1.0, 2.0, 3.0]),
        )
        .unwrap();
        assert_relative_eq!(fw_gap(&v(&[0.0, 0.0, 1.0]), &inst).unwrap(), 2.0);
        assert_relative_eq!(fw_gap(&v(&[1.0, 0.0, 0.0]), &inst).unwrap(), 0.0);
    }
}
