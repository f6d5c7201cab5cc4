//! Bregman subproblems: the mirror step, the linearized-model minimizer that
//! defines the gradient mapping and the envelope, and the Bregman proximal
//! point of the full (nonconvex) objective.
//!
//! Every subproblem reduces to a dual-anchored step
//!
//! ```text
//! argmin_{y in X}  eta (<g, y> + r(y)) + omega(y) - <theta, y>
//! ```
//!
//! With `theta = grad omega(x)` this is the mirror step from `x`. Closed forms
//! cover the built-in geometry/regularizer/set combinations; the rest go to a
//! proximal-gradient fallback on the strongly convex model.

pub mod roots;

use crate::dgf::DistanceGenerator;
use crate::problems::{CompositeInstance, FeasibleSet, Regularizer};
use crate::{Error, Result, Vector};

/// Floor applied to entropy-step outputs so the multiplicative update never
/// produces an exact zero.
pub const ENTROPY_FLOOR: f64 = 1e-300;

pub const FALLBACK_MAX_ITERS: usize = 100_000;
pub const FALLBACK_TOL: f64 = 1e-12;
pub const PHI_PROX_MAX_ITERS: usize = 100_000;
pub const PHI_PROX_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSolution {
    pub point: Vector,
    /// Value of the solved model at `point`; see each solver for its normalisation.
    pub objective_value: f64,
    /// First-order optimality residual (zero for exact closed forms).
    pub residual: f64,
    pub iterations: usize,
}

pub fn soft_threshold(x: f64, threshold: f64) -> f64 {
    debug_assert!(threshold >= 0.0);
    x.signum() * (x.abs() - threshold).max(0.0)
}

/// Euclidean projection onto the unit simplex by sorting and shifting.
pub fn simplex_project(v: &Vector) -> Vector {
    let n = v.len();
    if n == 0 {
        return v.clone();
    }
    let mut u: Vec<f64> = v.iter().copied().collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cumsum += uk;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            tau = t;
        }
    }
    v.map(|c| (c - tau).max(0.0))
}

/// Row-wise softmax of a row-major matrix with `cols` columns, with max
/// subtraction and the entropy floor.
pub fn softmax_rows(theta: &Vector, cols: usize) -> Vector {
    let mut out = theta.clone();
    for row in out.as_mut_slice().chunks_mut(cols) {
        let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut s = 0.0;
        for c in row.iter_mut() {
            *c = (*c - m).exp().max(ENTROPY_FLOOR);
            s += *c;
        }
        for c in row.iter_mut() {
            *c /= s;
        }
    }
    out
}

/// Multiplicative-weights step `x_i exp(-eta g_i) / Z` on each row of a
/// row-major matrix with `cols` columns (one row for a plain simplex).
pub fn entropy_step(x: &Vector, g: &Vector, eta: f64, cols: usize) -> Result<Vector> {
    Error::check_dim(x.len(), g.len())?;
    if cols == 0 || !x.len().is_multiple_of(cols) {
        return Err(Error::invalid("row length must divide the vector length"));
    }
    if x.iter().any(|&c| !(c > 0.0)) {
        return Err(Error::domain(
            "entropy step needs a strictly positive point",
        ));
    }
    let theta = Vector::from_iterator(
        x.len(),
        x.iter().zip(g.iter()).map(|(&a, &b)| a.ln() - eta * b),
    );
    Ok(softmax_rows(&theta, cols))
}

/// Exact mirror step in the polynomial geometry with growth exponent `p`.
pub fn polynorm_step(x: &Vector, g: &Vector, eta: f64, p: f64) -> Vector {
    let c = x * (1.0 + x.norm().powf(p)) - g * eta;
    polynorm_inverse(&c, p)
}

fn polynorm_inverse(c: &Vector, p: f64) -> Vector {
    let theta = roots::growth_root(p, c.norm());
    c / (1.0 + theta.powf(p))
}

/// `argmin_y t r(y) + delta_X(y) + ||y - v||^2 / 2`.
pub fn reg_set_prox(reg: &Regularizer, set: &FeasibleSet, v: &Vector, t: f64) -> Result<Vector> {
    match (set, reg) {
        (FeasibleSet::AllSpace, _) => Ok(reg.prox(v, t)),
        (FeasibleSet::Box { lo, hi }, Regularizer::Zero | Regularizer::L1(_)) => {
            let p = reg.prox(v, t);
            Ok(Vector::from_iterator(
                p.len(),
                (0..p.len()).map(|i| p[i].clamp(lo[i], hi[i])),
            ))
        }
        // the l1 norm is constant on a simplex
        (
            FeasibleSet::Simplex(_) | FeasibleSet::ProductSimplex { .. },
            Regularizer::Zero | Regularizer::L1(_),
        ) => Ok(set.project(v)),
        (_, Regularizer::Custom { name, .. }) => Err(Error::Unsupported(format!(
            "prox of custom regularizer {name} restricted to {set:?}"
        ))),
    }
}

fn row_len(set: &FeasibleSet, dim: usize) -> Option<usize> {
    match set {
        FeasibleSet::Simplex(_) => Some(dim),
        FeasibleSet::ProductSimplex { cols, .. } => Some(*cols),
        _ => None,
    }
}

/// `argmin_{y in X} eta (<g, y> + r(y)) + omega(y) - <theta, y>` in the
/// instance's geometry. `objective_value` is left at zero here; the public
/// solvers fill in their own model value.
pub fn dual_anchored_step(
    theta: &Vector,
    g: &Vector,
    eta: f64,
    inst: &CompositeInstance,
) -> Result<SubproblemSolution> {
    Error::check_dim(inst.dim(), theta.len())?;
    Error::check_dim(inst.dim(), g.len())?;
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::invalid(format!(
            "step size must be positive and finite, got {eta}"
        )));
    }
    let c = theta - g * eta;
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            index: c.iter().position(|v| !v.is_finite()).unwrap_or(0),
        });
    }
    let closed = |point: Vector| {
        Ok(SubproblemSolution {
            point,
            objective_value: 0.0,
            residual: 0.0,
            iterations: 0,
        })
    };
    match (&inst.dgf, &inst.feasible, &inst.reg) {
        (DistanceGenerator::Euclidean, set, reg)
            if !matches!(reg, Regularizer::Custom { .. }) || *set == FeasibleSet::AllSpace =>
        {
            closed(reg_set_prox(reg, set, &c, eta)?)
        }
        (
            DistanceGenerator::SimplexEntropy { .. }
            | DistanceGenerator::ProductSimplexEntropy { .. },
            set @ (FeasibleSet::Simplex(_) | FeasibleSet::ProductSimplex { .. }),
            Regularizer::Zero | Regularizer::L1(_),
        ) => {
            let cols = row_len(set, inst.dim()).expect("simplex kinds have rows");
            let point = softmax_rows(&c, cols);
            let residual = entropy_kkt_residual(&point, &c, cols);
            Ok(SubproblemSolution {
                point,
                objective_value: 0.0,
                residual,
                iterations: 0,
            })
        }
        // (1 + ||y||^p) y = c - eta w sign(y), so y is a rescaled soft-threshold of c
        (
            DistanceGenerator::PolyNorm { p },
            FeasibleSet::AllSpace,
            Regularizer::Zero | Regularizer::L1(_),
        ) => closed(polynorm_inverse(&inst.reg.prox(&c, eta), *p)),
        (DistanceGenerator::Custom(g), FeasibleSet::AllSpace, Regularizer::Zero)
            if g.mirror_inverse(&c).is_some() =>
        {
            closed(g.mirror_inverse(&c).expect("checked"))
        }
        _ => proximal_gradient_fallback(&c, eta, inst),
    }
}

/// Spread of `log y - c` over unfloored coordinates of each row; zero exactly
/// at the optimum.
fn entropy_kkt_residual(y: &Vector, c: &Vector, cols: usize) -> f64 {
    let mut worst = 0.0_f64;
    for (yr, cr) in y.as_slice().chunks(cols).zip(c.as_slice().chunks(cols)) {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (&a, &b) in yr.iter().zip(cr) {
            if a > ENTROPY_FLOOR * 1e3 {
                let v = a.ln() - b;
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if hi >= lo {
            worst = worst.max(hi - lo);
        }
    }
    worst
}

/// Proximal gradient with curvature backtracking on the smooth part
/// `omega(y) - <c, y>`, handling `eta r + delta_X` through its Euclidean prox.
/// The model is 1-strongly convex, so this converges linearly.
fn proximal_gradient_fallback(
    c: &Vector,
    eta: f64,
    inst: &CompositeInstance,
) -> Result<SubproblemSolution> {
    let dgf = &inst.dgf;
    if matches!(
        dgf,
        DistanceGenerator::SimplexEntropy { .. } | DistanceGenerator::ProductSimplexEntropy { .. }
    ) {
        return Err(Error::Unsupported(format!(
            "entropy geometry over {:?}",
            inst.feasible
        )));
    }
    let smooth_grad = |y: &Vector| -> Result<Vector> { Ok(dgf.grad(y)? - c) };
    let prox = |v: &Vector, t: f64| reg_set_prox(&inst.reg, &inst.feasible, v, t * eta);

    let mut y = prox(&inst.feasible.project(c), 0.0)?;
    let mut step: f64 = 1.0;
    let mut residual = f64::INFINITY;
    for it in 0..FALLBACK_MAX_ITERS {
        let gy = smooth_grad(&y)?;
        // fixed-point residual of the unit-step prox-gradient map
        let unit = prox(&(&y - &gy), 1.0)?;
        residual = (&unit - &y).norm();
        if residual <= FALLBACK_TOL * (1.0 + y.norm()) {
            return Ok(SubproblemSolution {
                point: y,
                objective_value: 0.0,
                residual,
                iterations: it,
            });
        }
        step = (step * 2.0).min(1.0);
        // Backtrack on the local curvature along the step. Comparing gradients
        // instead of function values keeps the test exact near the solution.
        loop {
            let cand = prox(&(&y - &gy * step), step)?;
            let diff = &cand - &y;
            let dd = diff.norm_squared();
            let curvature = match smooth_grad(&cand) {
                Ok(gc) => (gc - &gy).dot(&diff),
                Err(_) => f64::INFINITY,
            };
            if dd == 0.0 || curvature <= 0.5 * dd / step || step < 1e-20 {
                y = cand;
                break;
            }
            step *= 0.5;
        }
    }
    Err(Error::Solver {
        iterations: FALLBACK_MAX_ITERS,
        residual,
    })
}

/// `eta (<g, y - x> + r(y) - r(x)) + D(y, x)` at `y`.
fn step_model(
    x: &Vector,
    y: &Vector,
    g: &Vector,
    eta: f64,
    inst: &CompositeInstance,
) -> Result<f64> {
    Ok(eta * (g.dot(&(y - x)) + inst.reg.value(y) - inst.reg.value(x)) + inst.dgf.bregman(y, x)?)
}

/// The mirror step `argmin_{y in X} eta (<g, y> + r(y)) + D(y, x)`.
///
/// `objective_value` is the model shifted to vanish at `y = x`, so it is never
/// positive at the solution.
pub fn mirror_step(
    x: &Vector,
    g: &Vector,
    eta: f64,
    inst: &CompositeInstance,
) -> Result<SubproblemSolution> {
    let theta = inst.dgf.grad(x)?;
    let mut sol = dual_anchored_step(&theta, g, eta, inst)?;
    sol.objective_value = step_model(x, &sol.point, g, eta, inst)?;
    Ok(sol)
}

/// Minimizer `x+` of the linearized model
/// `Q(x, y) = <grad F(x), y - x> + r(y) - r(x) + rho D(y, x)` and its minimum
/// value, which is at most zero.
pub fn linearized_min(
    x: &Vector,
    rho: f64,
    inst: &CompositeInstance,
) -> Result<SubproblemSolution> {
    if !(rho > 0.0) {
        return Err(Error::invalid(format!("rho must be positive, got {rho}")));
    }
    let g = inst.f_grad(x);
    let mut sol = mirror_step(x, &g, 1.0 / rho, inst)?;
    sol.objective_value *= rho;
    Ok(sol)
}

/// Bregman proximal point `x^ = argmin_y Phi(y) + rho D(y, x)` and the
/// envelope value `Phi(x^) + rho D(x^, x)`.
///
/// Majorize-minimize: relative smoothness gives the upper model
/// `F(y) <= F(z) + <grad F(z), y - z> + ell D(y, z)`, whose minimizer is a
/// dual-anchored step with `theta = (rho grad omega(x) + ell grad omega(z)) / (rho + ell)`
/// and `eta = 1 / (rho + ell)`. The objective is `(rho - ell)`-relatively
/// strongly convex, so the iteration converges to the unique minimizer.
/// `residual` is the primal-norm change of the last iteration.
pub fn phi_prox(x: &Vector, rho: f64, inst: &CompositeInstance) -> Result<SubproblemSolution> {
    phi_prox_with_tol(x, rho, inst, PHI_PROX_TOL)
}

pub fn phi_prox_with_tol(
    x: &Vector,
    rho: f64,
    inst: &CompositeInstance,
    tol: f64,
) -> Result<SubproblemSolution> {
    let ell = inst.ell;
    if !(rho > ell) {
        return Err(Error::invalid(format!(
            "proximal point needs rho > ell ({rho} <= {ell})"
        )));
    }
    let gx = inst.dgf.grad(x)?;
    let eta = 1.0 / (rho + ell);
    let mut z = x.clone();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < PHI_PROX_MAX_ITERS {
        iterations += 1;
        let theta = if ell > 0.0 {
            (&gx * rho + inst.dgf.grad(&z)? * ell) * eta
        } else {
            gx.clone()
        };
        let next = dual_anchored_step(&theta, &inst.f_grad(&z), eta, inst)?.point;
        residual = inst.dgf.norm(&(&next - &z));
        z = next;
        if residual <= tol * (1.0 + inst.dgf.norm(&z)) || ell == 0.0 {
            break;
        }
    }
    if residual > tol * (1.0 + inst.dgf.norm(&z)) && ell > 0.0 {
        return Err(Error::Solver {
            iterations,
            residual,
        });
    }
    let objective_value = inst.phi_value(&z) + rho * inst.dgf.bregman(&z, x)?;
    Ok(SubproblemSolution {
        point: z,
        objective_value,
        residual,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{lemma2_instance, make_quadratic_l1, Curvature};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn v(c: &[f64]) -> Vector {
        Vector::from_row_slice(c)
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(0.3, 1.0), 0.0);
        assert_eq!(soft_threshold(1.5, 1.0), 0.5);
        assert_eq!(soft_threshold(-2.0, 0.5), -1.5);
    }

    #[test]
    fn simplex_project_examples() {
        assert_eq!(simplex_project(&v(&[0.2, 0.3, 0.5])), v(&[0.2, 0.3, 0.5]));
        assert_eq!(simplex_project(&v(&[1.0, 0.5])), v(&[0.75, 0.25]));
        assert_eq!(simplex_project(&v(&[10.0, 0.0, 0.0])), v(&[1.0, 0.0, 0.0]));
    }

    #[test]
    fn entropy_step_examples() {
        let x = v(&[0.5, 0.5]);
        assert_eq!(entropy_step(&x, &v(&[0.0, 0.0]), 1.0, 2).unwrap(), x);
        let y = entropy_step(&x, &v(&[2f64.ln(), 0.0]), 1.0, 2).unwrap();
        assert_relative_eq!(y[0], 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(y[1], 2.0 / 3.0, epsilon = 1e-15);
        assert!(entropy_step(&v(&[0.0, 1.0]), &v(&[0.0, 0.0]), 1.0, 2).is_err());
    }

    #[test]
    fn entropy_step_never_hits_zero() {
        let x = v(&[0.5, 0.25, 0.25]);
        let y = entropy_step(&x, &v(&[1e6, 0.0, -1e6]), 1.0, 3).unwrap();
        assert!(y.iter().all(|&c| c > 0.0));
        assert!((y.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn polynorm_step_examples() {
        let x = v(&[0.3, -1.2]);
        assert_relative_eq!(
            polynorm_step(&x, &v(&[0.0, 0.0]), 0.7, 1.0),
            x,
            epsilon = 1e-14
        );
        // with x = 0 the anchor is c = -eta g; choose ||c|| = 2, so theta = 1
        let out = polynorm_step(&v(&[0.0, 0.0]), &v(&[-1.2, -1.6]), 1.0, 1.0);
        assert_relative_eq!(out, v(&[0.6, 0.8]), epsilon = 1e-15);
    }

    #[test]
    fn polynorm_p0_is_half_step_in_doubled_geometry() {
        // omega = ||x||^2, so grad omega(y) = 2y and y = x - eta g / 2
        let x = v(&[1.0, -2.0, 0.5]);
        let g = v(&[0.4, 0.1, -3.0]);
        assert_relative_eq!(
            polynorm_step(&x, &g, 0.3, 0.0),
            &x - &g * 0.15,
            epsilon = 1e-15
        );
    }

    #[test]
    fn mirror_step_trivial_cases() {
        let inst = make_quadratic_l1(
            Curvature::Diagonal(vec![1.0, 1.0]),
            None,
            0.0,
            FeasibleSet::AllSpace,
        )
        .unwrap();
        let x = v(&[1.0, 2.0]);
        let s = mirror_step(&x, &v(&[0.0, 0.0]), 0.5, &inst).unwrap();
        assert_eq!(s.point, x);
        let s = mirror_step(&x, &v(&[1.0, -1.0]), 0.5, &inst).unwrap();
        assert_eq!(s.point, v(&[0.5, 2.5]));
        assert!(s.objective_value <= 0.0);
    }

    #[test]
    fn lemma2_linearized_min_is_zero() {
        let inst = lemma2_instance();
        for rho in [1.0, 1.5, 2.0] {
            for k in 1..=10 {
                let x = v(&[k as f64 / 10.0]);
                assert_eq!(linearized_min(&x, rho, &inst).unwrap().point, v(&[0.0]));
            }
        }
    }

    #[test]
    fn phi_prox_quadratic() {
        // Phi = y^2/2, rho = 1, x = 1 -> x^ = 1/2, envelope 1/4
        let inst = make_quadratic_l1(
            Curvature::Diagonal(vec![1.0]),
            None,
            0.0,
            FeasibleSet::AllSpace,
        )
        .unwrap()
        .with_geometry(DistanceGenerator::Euclidean, 0.5)
        .unwrap();
        let s = phi_prox(&v(&[1.0]), 1.0, &inst).unwrap();
        assert_relative_eq!(s.point[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(s.objective_value, 0.25, epsilon = 1e-12);
        let inst = make_quadratic_l1(
            Curvature::Diagonal(vec![1.0]),
            None,
            0.0,
            FeasibleSet::AllSpace,
        )
        .unwrap();
        assert!(
            phi_prox(&v(&[1.0]), 1.0, &inst).is_err(),
            "rho <= ell is rejected"
        );
        let s = phi_prox(&v(&[0.0]), 2.0, &inst).unwrap();
        assert_eq!(s.point, v(&[0.0]));
    }

    #[test]
    fn fallback_matches_closed_form_where_both_apply() {
        let base = make_quadratic_l1(
            Curvature::Diagonal(vec![1.0, 3.0]),
            None,
            0.7,
            FeasibleSet::AllSpace,
        )
        .unwrap()
        .with_geometry(DistanceGenerator::polynorm(2.0).unwrap(), 3.0)
        .unwrap();
        let x = v(&[0.8, -1.1]);
        let g = v(&[2.0, -0.5]);
        let closed = mirror_step(&x, &g, 0.4, &base).unwrap();
        let c = base.dgf.grad(&x).unwrap() - &g * 0.4;
        let fb = proximal_gradient_fallback(&c, 0.4, &base).unwrap();
        assert!(fb.iterations > 0);
        assert_relative_eq!(fb.point, closed.point, epsilon = 1e-10);
    }

    #[test]
    fn custom_regularizer_on_a_set_is_unsupported() {
        let mut inst = lemma2_instance();
        inst.reg = Regularizer::Custom {
            name: "sq".into(),
            value: std::sync::Arc::new(|x: &Vector| x.norm_squared()),
            prox: std::sync::Arc::new(|x: &Vector, t: f64| x / (1.0 + 2.0 * t)),
        };
        assert!(matches!(
            mirror_step(&v(&[0.5]), &v(&[1.0]), 0.1, &inst),
            Err(Error::Unsupported(_))
        ));
    }

    proptest! {
        #[test]
        fn simplex_projection_is_a_projection(raw in prop::collection::vec(-5.0f64..5.0, 1..8)) {
            let x = Vector::from_vec(raw);
            let p = simplex_project(&x);
            prop_assert!(p.iter().all(|&c| c >= 0.0));
            prop_assert!((p.sum() - 1.0).abs() < 1e-12);
            // variational inequality <x - p, q - p> <= 0 at vertices q
            for i in 0..x.len() {
                let mut q = Vector::zeros(x.len());
                q[i] = 1.0;
                prop_assert!((&x - &p).dot(&(q - &p)) <= 1e-12);
            }
        }

        #[test]
        fn entropy_step_is_row_stochastic(raw in prop::collection::vec(-3.0f64..3.0, 6), g in prop::collection::vec(-50.0f64..50.0, 6)) {
            let x = softmax_rows(&Vector::from_vec(raw), 3);
            let y = entropy_step(&x, &Vector::from_vec(g), 1.3, 3).unwrap();
            for row in y.as_slice().chunks(3) {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(row.iter().all(|&c| c > 0.0));
            }
        }
    }
}
