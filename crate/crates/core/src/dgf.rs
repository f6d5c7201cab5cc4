//! Distance-generating functions and the Bregman divergences they induce.
//!
//! A distance-generating function (DGF) `omega` is 1-strongly convex with
//! respect to some primal norm on the closure of its zone `S` and
//! differentiable on `S`. It induces
//!
//! ```text
//! D(x, y) = omega(x) - omega(y) - <grad omega(y), x - y>,   x in cl(S), y in S.
//! ```
//!
//! Four geometries are built in. Anything else plugs in through
//! [`BregmanGeometry`] and the [`DistanceGenerator::Custom`] variant, so
//! callers never need to match on the kind themselves.

use std::fmt;
use std::sync::Arc;

use crate::prox::roots;
use crate::{Error, Result, Vector};

/// Extension point for geometries that are not built in.
pub trait BregmanGeometry: Send + Sync + fmt::Debug {
    fn name(&self) -> String;
    fn value(&self, x: &Vector) -> Result<f64>;
    fn grad(&self, x: &Vector) -> Result<Vector>;
    fn in_zone(&self, x: &Vector) -> bool;
    fn in_closure(&self, x: &Vector) -> bool;
    fn norm(&self, v: &Vector) -> f64;
    fn dual_norm(&self, v: &Vector) -> f64;

    /// `argmin_y omega(y) - <theta, y>` over all of R^d, when it has a closed form.
    fn mirror_inverse(&self, _theta: &Vector) -> Option<Vector> {
        None
    }
}

#[derive(Clone)]
pub enum DistanceGenerator {
    /// `omega(x) = ||x||_2^2 / 2`.
    Euclidean,
    /// `omega(x) = sum_i x_i log x_i` on the positive orthant, 1-strongly convex
    /// in the l1 norm on the unit simplex.
    SimplexEntropy {
        dim: usize,
    },
    /// Row-wise entropy of a `rows x cols` matrix stored row-major, 1-strongly
    /// convex in the (2,1) norm on a product of simplices.
    ProductSimplexEntropy {
        rows: usize,
        cols: usize,
    },
    /// `omega(x) = ||x||^(p+2) / (p+2) + ||x||^2 / 2`.
    PolyNorm {
        p: f64,
    },
    Custom(Arc<dyn BregmanGeometry>),
}

impl fmt::Debug for DistanceGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Norm pairs used across the crate.
pub mod norms {
    use crate::Vector;

    pub fn l1(v: &Vector) -> f64 {
        v.iter().map(|c| c.abs()).sum()
    }

    pub fn l2(v: &Vector) -> f64 {
        v.norm()
    }

    pub fn linf(v: &Vector) -> f64 {
        v.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// `sqrt(sum_s (sum_a |v_sa|)^2)` for a row-major `rows x cols` matrix.
    pub fn l21(v: &Vector, cols: usize) -> f64 {
        v.as_slice()
            .chunks(cols)
            .map(|row| row.iter().map(|c| c.abs()).sum::<f64>().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// `sqrt(sum_s (max_a |v_sa|)^2)`, the dual of [`l21`].
    pub fn l2inf(v: &Vector, cols: usize) -> f64 {
        v.as_slice()
            .chunks(cols)
            .map(|row| row.iter().fold(0.0_f64, |m, c| m.max(c.abs())).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

fn xlogx(t: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        t * t.ln()
    }
}

impl DistanceGenerator {
    pub fn polynorm(p: f64) -> Result<Self> {
        if !(p.is_finite() && p >= 0.0) {
            return Err(Error::invalid(format!(
                "growth exponent must be >= 0, got {p}"
            )));
        }
        Ok(DistanceGenerator::PolyNorm { p })
    }

    pub fn name(&self) -> String {
        match self {
            DistanceGenerator::Euclidean => "euclidean".into(),
            DistanceGenerator::SimplexEntropy { dim } => format!("entropy({dim})"),
            DistanceGenerator::ProductSimplexEntropy { rows, cols } => {
                format!("product-entropy({rows}x{cols})")
            }
            DistanceGenerator::PolyNorm { p } => format!("polynorm({p})"),
            DistanceGenerator::Custom(g) => g.name(),
        }
    }

    /// Dimension the geometry is tied to, if any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            DistanceGenerator::SimplexEntropy { dim } => Some(*dim),
            DistanceGenerator::ProductSimplexEntropy { rows, cols } => Some(rows * cols),
            _ => None,
        }
    }

    fn check_dim(&self, x: &Vector) -> Result<()> {
        match self.dim() {
            Some(d) => Error::check_dim(d, x.len()),
            None => Ok(()),
        }
    }

    fn is_entropy(&self) -> bool {
        matches!(
            self,
            DistanceGenerator::SimplexEntropy { .. }
                | DistanceGenerator::ProductSimplexEntropy { .. }
        )
    }

    /// Zone membership with entries of the entropy kinds above `margin`.
    pub fn in_zone_with_margin(&self, x: &Vector, margin: f64) -> bool {
        if self.check_dim(x).is_err() || x.iter().any(|c| !c.is_finite()) {
            return false;
        }
        match self {
            DistanceGenerator::Custom(g) => g.in_zone(x),
            _ if self.is_entropy() => x.iter().all(|&c| c > margin),
            _ => true,
        }
    }

    /// Open zone membership (strict positivity for the entropy kinds).
    pub fn in_zone(&self, x: &Vector) -> bool {
        self.in_zone_with_margin(x, 0.0)
    }

    pub fn in_closure(&self, x: &Vector) -> bool {
        if self.check_dim(x).is_err() || x.iter().any(|c| !c.is_finite()) {
            return false;
        }
        match self {
            DistanceGenerator::Custom(g) => g.in_closure(x),
            _ if self.is_entropy() => x.iter().all(|&c| c >= 0.0),
            _ => true,
        }
    }

    pub fn value(&self, x: &Vector) -> Result<f64> {
        self.check_dim(x)?;
        if !self.in_closure(x) {
            return Err(Error::domain(format!(
                "{} value outside cl(zone)",
                self.name()
            )));
        }
        Ok(match self {
            DistanceGenerator::Euclidean => 0.5 * x.norm_squared(),
            DistanceGenerator::SimplexEntropy { .. }
            | DistanceGenerator::ProductSimplexEntropy { .. } => x.iter().map(|&c| xlogx(c)).sum(),
            DistanceGenerator::PolyNorm { p } => {
                let n = x.norm();
                n.powf(p + 2.0) / (p + 2.0) + 0.5 * n * n
            }
            DistanceGenerator::Custom(g) => g.value(x)?,
        })
    }

    pub fn grad(&self, x: &Vector) -> Result<Vector> {
        self.check_dim(x)?;
        if !self.in_zone(x) {
            return Err(Error::domain(format!(
                "{} gradient outside the open zone",
                self.name()
            )));
        }
        Ok(match self {
            DistanceGenerator::Euclidean => x.clone(),
            DistanceGenerator::SimplexEntropy { .. }
            | DistanceGenerator::ProductSimplexEntropy { .. } => x.map(|c| 1.0 + c.ln()),
            DistanceGenerator::PolyNorm { p } => x * (x.norm().powf(*p) + 1.0),
            DistanceGenerator::Custom(g) => g.grad(x)?,
        })
    }

    /// `D(x, y)`; `x` may sit on the boundary, `y` must be interior.
    pub fn bregman(&self, x: &Vector, y: &Vector) -> Result<f64> {
        Error::check_dim(x.len(), y.len())?;
        if !self.in_closure(x) {
            return Err(Error::domain("first argument outside cl(zone)"));
        }
        if !self.in_zone(y) {
            return Err(Error::domain("second argument outside the open zone"));
        }
        Ok(match self {
            DistanceGenerator::Euclidean => 0.5 * (x - y).norm_squared(),
            // sum x log(x/y) - x + y, which avoids cancelling the two entropies
            DistanceGenerator::SimplexEntropy { .. }
            | DistanceGenerator::ProductSimplexEntropy { .. } => x
                .iter()
                .zip(y.iter())
                .map(|(&a, &b)| {
                    if a == 0.0 {
                        b
                    } else {
                        a * (a / b).ln() - a + b
                    }
                })
                .sum::<f64>()
                .max(0.0),
            _ => {
                let gy = self.grad(y)?;
                (self.value(x)? - self.value(y)? - gy.dot(&(x - y))).max(0.0)
            }
        })
    }

    /// `D(x, y) + D(y, x) = <grad omega(x) - grad omega(y), x - y>`.
    pub fn bregman_sym(&self, x: &Vector, y: &Vector) -> Result<f64> {
        Error::check_dim(x.len(), y.len())?;
        match self {
            DistanceGenerator::Euclidean => Ok((x - y).norm_squared()),
            DistanceGenerator::SimplexEntropy { .. }
            | DistanceGenerator::ProductSimplexEntropy { .. } => {
                if !self.in_zone(x) || !self.in_zone(y) {
                    return Err(Error::domain("symmetric divergence needs interior points"));
                }
                Ok(x.iter()
                    .zip(y.iter())
                    .map(|(&a, &b)| (a - b) * (a.ln() - b.ln()))
                    .sum::<f64>()
                    .max(0.0))
            }
            _ => {
                let diff = self.grad(x)? - self.grad(y)?;
                Ok(diff.dot(&(x - y)).max(0.0))
            }
        }
    }

    /// Primal norm the geometry is 1-strongly convex in.
    pub fn norm(&self, v: &Vector) -> f64 {
        match self {
            DistanceGenerator::Euclidean | DistanceGenerator::PolyNorm { .. } => norms::l2(v),
            DistanceGenerator::SimplexEntropy { .. } => norms::l1(v),
            DistanceGenerator::ProductSimplexEntropy { cols, .. } => norms::l21(v, *cols),
            DistanceGenerator::Custom(g) => g.norm(v),
        }
    }

    pub fn dual_norm(&self, v: &Vector) -> f64 {
        match self {
            DistanceGenerator::Euclidean | DistanceGenerator::PolyNorm { .. } => norms::l2(v),
            DistanceGenerator::SimplexEntropy { .. } => norms::linf(v),
            DistanceGenerator::ProductSimplexEntropy { cols, .. } => norms::l2inf(v, *cols),
            DistanceGenerator::Custom(g) => g.dual_norm(v),
        }
    }

    /// Solves `grad omega(y) = theta` over all of R^d when the zone is the
    /// whole space and the inverse is explicit.
    pub fn mirror_inverse(&self, theta: &Vector) -> Option<Vector> {
        match self {
            DistanceGenerator::Euclidean => Some(theta.clone()),
            DistanceGenerator::PolyNorm { p } => {
                let root = roots::growth_root(*p, theta.norm());
                Some(theta / (1.0 + root.powf(*p)))
            }
            DistanceGenerator::Custom(g) => g.mirror_inverse(theta),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn v(c: &[f64]) -> Vector {
        Vector::from_row_slice(c)
    }

    /// KL divergence coded independently of the DGF machinery.
    fn kl(p: &[f64], q: &[f64]) -> f64 {
        p.iter()
            .zip(q)
            .filter(|(a, _)| **a > 0.0)
            .map(|(a, b)| a * (a / b).ln())
            .sum()
    }

    #[test]
    fn omega_value_examples() {
        assert_eq!(
            DistanceGenerator::Euclidean.value(&v(&[3.0, 4.0])).unwrap(),
            12.5
        );
        let ent = DistanceGenerator::SimplexEntropy { dim: 2 };
        assert_eq!(ent.value(&v(&[1.0, 0.0])).unwrap(), 0.0);
        let poly = DistanceGenerator::polynorm(1.0).unwrap();
        assert_relative_eq!(
            poly.value(&v(&[0.0, 2.0])).unwrap(),
            14.0 / 3.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn entropy_value_rejects_negative() {
        let ent = DistanceGenerator::SimplexEntropy { dim: 2 };
        assert!(matches!(ent.value(&v(&[1.5, -0.5])), Err(Error::Domain(_))));
        assert!(matches!(
            ent.value(&v(&[1.0, 0.0, 0.0])),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn omega_grad_examples() {
        assert_eq!(
            DistanceGenerator::Euclidean.grad(&v(&[1.0, 2.0])).unwrap(),
            v(&[1.0, 2.0])
        );
        let poly = DistanceGenerator::polynorm(1.0).unwrap();
        assert_eq!(poly.grad(&v(&[0.0, 2.0])).unwrap(), v(&[0.0, 6.0]));
        let ent = DistanceGenerator::SimplexEntropy { dim: 2 };
        let e = (-1.0_f64).exp();
        let g = ent.grad(&v(&[e, e])).unwrap();
        assert!(g.iter().all(|c| c.abs() < 1e-15));
        assert!(matches!(ent.grad(&v(&[1.0, 0.0])), Err(Error::Domain(_))));
    }

    #[test]
    fn bregman_examples() {
        let euc = DistanceGenerator::Euclidean;
        assert_eq!(euc.bregman(&v(&[0.0, 0.0]), &v(&[1.0, 1.0])).unwrap(), 1.0);
        assert_eq!(
            euc.bregman_sym(&v(&[0.0, 0.0]), &v(&[1.0, 1.0])).unwrap(),
            2.0
        );

        let ent = DistanceGenerator::SimplexEntropy { dim: 2 };
        let (x, y) = (v(&[1.0, 0.0]), v(&[0.5, 0.5]));
        let d = ent.bregman(&x, &y).unwrap();
        // definition evaluated term by term
        let direct =
            ent.value(&x).unwrap() - ent.value(&y).unwrap() - ent.grad(&y).unwrap().dot(&(&x - &y));
        assert_relative_eq!(d, 2f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(direct, 2f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(d, kl(&[1.0, 0.0], &[0.5, 0.5]), epsilon = 1e-15);
        assert!(matches!(ent.bregman(&y, &x), Err(Error::Domain(_))));

        let (a, b) = (v(&[0.25, 0.75]), v(&[0.5, 0.5]));
        let sym = kl(&[0.25, 0.75], &[0.5, 0.5]) + kl(&[0.5, 0.5], &[0.25, 0.75]);
        assert_relative_eq!(ent.bregman_sym(&a, &b).unwrap(), sym, epsilon = 1e-14);
        assert_eq!(ent.bregman_sym(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn polynorm_zero_is_squared_norm() {
        let poly = DistanceGenerator::polynorm(0.0).unwrap();
        let x = v(&[0.3, -1.2, 2.0]);
        assert_relative_eq!(poly.value(&x).unwrap(), x.norm_squared(), epsilon = 1e-14);
        assert_relative_eq!(poly.grad(&x).unwrap(), &x * 2.0, epsilon = 1e-14);
        assert!(DistanceGenerator::polynorm(-1.0).is_err());
    }

    #[test]
    fn product_norms() {
        let g = DistanceGenerator::ProductSimplexEntropy { rows: 2, cols: 2 };
        let x = v(&[0.5, -0.5, 1.0, 0.0]);
        assert_relative_eq!(g.norm(&x), 2f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(g.dual_norm(&x), (0.25f64 + 1.0).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn mirror_inverse_round_trips() {
        for p in [0.0, 1.0, 2.0, 3.5] {
            let g = DistanceGenerator::polynorm(p).unwrap();
            let x = v(&[0.7, -1.1, 0.2]);
            let back = g.mirror_inverse(&g.grad(&x).unwrap()).unwrap();
            assert_relative_eq!(back, x, epsilon = 1e-12);
        }
    }

    fn geometries() -> Vec<DistanceGenerator> {
        vec![
            DistanceGenerator::Euclidean,
            DistanceGenerator::SimplexEntropy { dim: 3 },
            DistanceGenerator::ProductSimplexEntropy { rows: 1, cols: 3 },
            DistanceGenerator::polynorm(1.0).unwrap(),
            DistanceGenerator::polynorm(2.5).unwrap(),
        ]
    }

    /// Maps raw coordinates into the natural domain of each geometry:
    /// the simplex interior for the entropy kinds, unchanged otherwise.
    fn place(g: &DistanceGenerator, raw: &[f64]) -> Vector {
        match g {
            DistanceGenerator::SimplexEntropy { .. }
            | DistanceGenerator::ProductSimplexEntropy { .. } => {
                let w: Vec<f64> = raw.iter().map(|c| c.exp()).collect();
                let s: f64 = w.iter().sum();
                v(&w.iter().map(|c| c / s).collect::<Vec<_>>())
            }
            _ => v(raw),
        }
    }

    proptest! {
        #[test]
        fn nonnegative_and_strongly_convex(
            a in prop::collection::vec(-2.0f64..2.0, 3),
            b in prop::collection::vec(-2.0f64..2.0, 3),
        ) {
            for g in geometries() {
                let (x, y) = (place(&g, &a), place(&g, &b));
                let d = g.bregman(&x, &y).unwrap();
                let n = g.norm(&(&x - &y));
                prop_assert!(d >= 0.5 * n * n - 1e-12 * (1.0 + d), "{:?}: {} < {}", g, d, 0.5 * n * n);
                prop_assert!(g.bregman(&x, &x).unwrap().abs() < 1e-12);
                let s = g.bregman_sym(&x, &y).unwrap();
                prop_assert!((s - g.bregman_sym(&y, &x).unwrap()).abs() <= 1e-12 * (1.0 + s));
                prop_assert!(s >= n * n - 1e-12 * (1.0 + s));
            }
        }

        #[test]
        fn three_point_identity(
            a in prop::collection::vec(-2.0f64..2.0, 3),
            b in prop::collection::vec(-2.0f64..2.0, 3),
            c in prop::collection::vec(-2.0f64..2.0, 3),
        ) {
            for g in geometries() {
                let (x, y, z) = (place(&g, &a), place(&g, &b), place(&g, &c));
                let lhs = g.bregman(&x, &y).unwrap() + g.bregman(&y, &z).unwrap();
                let rhs = g.bregman(&x, &z).unwrap()
                    + (g.grad(&z).unwrap() - g.grad(&y).unwrap()).dot(&(&x - &y));
                let scale = lhs.abs().max(rhs.abs()).max(1.0);
                prop_assert!((lhs - rhs).abs() <= 1e-9 * scale, "{:?}: {} vs {}", g, lhs, rhs);
            }
        }

        #[test]
        fn gradient_matches_central_differences(a in prop::collection::vec(-2.0f64..2.0, 3)) {
            for g in geometries() {
                let x = place(&g, &a);
                let grad = g.grad(&x).unwrap();
                for i in 0..x.len() {
                    let h = 1e-6 * x[i].abs().max(1e-2);
                    let mut up = x.clone();
                    let mut dn = x.clone();
                    up[i] += h;
                    dn[i] -= h;
                    let fd = (g.value(&up).unwrap() - g.value(&dn).unwrap()) / (2.0 * h);
                    prop_assert!((fd - grad[i]).abs() <= 1e-6 * grad[i].abs().max(1.0),
                        "{:?} coord {}: fd {} vs {}", g, i, fd, grad[i]);
                }
            }
        }
    }
}
