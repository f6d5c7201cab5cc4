//! Composite instances `Phi = F + r` over a closed convex set, their gradient
//! oracles, and the built-in benchmark problems.

use std::fmt;
use std::sync::Arc;

use crate::dgf::DistanceGenerator;
use crate::prox;
use crate::{Error, Result, Vector};

mod builtin;
mod oracle;
mod spec;

pub use builtin::{
    autoencoder_init, estimate_phi_star, lemma2_instance, make_autoencoder, make_quadratic_l1,
    make_simplex_quadratic, random_quadratic_l1, random_simplex_quadratic, sample_points,
    Autoencoder, Curvature, GrowthCertificate, Quadratic,
};
pub use oracle::{DualNorm, NoiseModel, StochasticOracle};
pub use spec::InstanceSpec;

/// Tolerance used when deciding whether a point lies in the feasible set.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// The smooth part `F` of the objective.
pub trait SmoothObjective: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &Vector) -> f64;
    fn grad(&self, x: &Vector) -> Vector;

    /// Unbiased minibatch estimate of the gradient, for objectives that are
    /// finite sums.
    fn minibatch_grad(
        &self,
        _x: &Vector,
        _batch: usize,
        _rng: &mut crate::rng::Rng,
    ) -> Option<Vector> {
        None
    }
}

/// Euclidean proximal map `argmin_y t r(y) + ||y - v||^2 / 2`.
pub type ProxFn = Arc<dyn Fn(&Vector, f64) -> Vector + Send + Sync>;
pub type ValueFn = Arc<dyn Fn(&Vector) -> f64 + Send + Sync>;

/// Convex, proper, lower-semicontinuous regularizer `r`.
#[derive(Clone)]
pub enum Regularizer {
    Zero,
    L1(f64),
    Custom {
        name: String,
        value: ValueFn,
        prox: ProxFn,
    },
}

impl fmt::Debug for Regularizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regularizer::Zero => f.write_str("Zero"),
            Regularizer::L1(w) => write!(f, "L1({w})"),
            Regularizer::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

impl Regularizer {
    pub fn l1(weight: f64) -> Result<Self> {
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(Error::invalid(format!(
                "l1 weight must be >= 0, got {weight}"
            )));
        }
        Ok(if weight == 0.0 {
            Regularizer::Zero
        } else {
            Regularizer::L1(weight)
        })
    }

    pub fn value(&self, x: &Vector) -> f64 {
        match self {
            Regularizer::Zero => 0.0,
            Regularizer::L1(w) => w * crate::dgf::norms::l1(x),
            Regularizer::Custom { value, .. } => value(x),
        }
    }

    /// Euclidean prox with parameter `t`.
    pub fn prox(&self, v: &Vector, t: f64) -> Vector {
        match self {
            Regularizer::Zero => v.clone(),
            Regularizer::L1(w) => v.map(|c| prox::soft_threshold(c, t * w)),
            Regularizer::Custom { prox, .. } => prox(v, t),
        }
    }
}

/// The closed convex set `X`.
#[derive(Debug, Clone, PartialEq)]
pub enum FeasibleSet {
    AllSpace,
    Box {
        lo: Vector,
        hi: Vector,
    },
    /// `{x >= 0, sum x = 1}` in R^d.
    Simplex(usize),
    /// Row-major `rows x cols` matrices with every row in the simplex.
    ProductSimplex {
        rows: usize,
        cols: usize,
    },
}

impl FeasibleSet {
    pub fn new_box(lo: Vector, hi: Vector) -> Result<Self> {
        Error::check_dim(lo.len(), hi.len())?;
        if let Some(i) = (0..lo.len()).find(|&i| lo[i] > hi[i] || lo[i].is_nan() || hi[i].is_nan())
        {
            return Err(Error::invalid(format!(
                "empty box in coordinate {i}: lo > hi"
            )));
        }
        Ok(FeasibleSet::Box { lo, hi })
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            FeasibleSet::AllSpace => None,
            FeasibleSet::Box { lo, .. } => Some(lo.len()),
            FeasibleSet::Simplex(d) => Some(*d),
            FeasibleSet::ProductSimplex { rows, cols } => Some(rows * cols),
        }
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        if self.dim().is_some_and(|d| d != x.len()) || x.iter().any(|c| !c.is_finite()) {
            return false;
        }
        match self {
            FeasibleSet::AllSpace => true,
            FeasibleSet::Box { lo, hi } => {
                (0..x.len()).all(|i| x[i] >= lo[i] - tol && x[i] <= hi[i] + tol)
            }
            FeasibleSet::Simplex(_) => {
                x.iter().all(|&c| c >= -tol) && (x.sum() - 1.0).abs() <= tol * x.len() as f64
            }
            FeasibleSet::ProductSimplex { cols, .. } => x.as_slice().chunks(*cols).all(|row| {
                row.iter().all(|&c| c >= -tol)
                    && (row.iter().sum::<f64>() - 1.0).abs() <= tol * *cols as f64
            }),
        }
    }

    /// Euclidean projection.
    pub fn project(&self, v: &Vector) -> Vector {
        match self {
            FeasibleSet::AllSpace => v.clone(),
            FeasibleSet::Box { lo, hi } => {
                Vector::from_iterator(v.len(), (0..v.len()).map(|i| v[i].clamp(lo[i], hi[i])))
            }
            FeasibleSet::Simplex(_) => prox::simplex_project(v),
            FeasibleSet::ProductSimplex { cols, .. } => {
                let mut out = Vec::with_capacity(v.len());
                for row in v.as_slice().chunks(*cols) {
                    out.extend(prox::simplex_project(&Vector::from_row_slice(row)).iter());
                }
                Vector::from_vec(out)
            }
        }
    }

    /// Euclidean diameter.
    pub fn diameter(&self) -> f64 {
        match self {
            FeasibleSet::AllSpace => f64::INFINITY,
            FeasibleSet::Box { lo, hi } => (hi - lo).norm(),
            FeasibleSet::Simplex(d) => {
                if *d > 1 {
                    2f64.sqrt()
                } else {
                    0.0
                }
            }
            FeasibleSet::ProductSimplex { rows, cols } => {
                if *cols > 1 {
                    (2.0 * *rows as f64).sqrt()
                } else {
                    0.0
                }
            }
        }
    }

    /// A canonical interior starting point: the barycenter of the simplex
    /// kinds, the box midpoint (clamped to finite values), the origin otherwise.
    pub fn center(&self, dim: usize) -> Vector {
        match self {
            FeasibleSet::AllSpace => Vector::zeros(dim),
            FeasibleSet::Box { lo, hi } => Vector::from_iterator(
                dim,
                (0..dim).map(|i| match (lo[i].is_finite(), hi[i].is_finite()) {
                    (true, true) => 0.5 * (lo[i] + hi[i]),
                    (true, false) => lo[i].max(0.0),
                    (false, true) => hi[i].min(0.0),
                    (false, false) => 0.0,
                }),
            ),
            FeasibleSet::Simplex(d) => Vector::from_element(*d, 1.0 / *d as f64),
            FeasibleSet::ProductSimplex { rows, cols } => {
                Vector::from_element(rows * cols, 1.0 / *cols as f64)
            }
        }
    }
}

/// A known (or carefully estimated) optimal value with a note on how it was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalValue {
    pub value: f64,
    pub provenance: String,
}

/// `min_{x in X} F(x) + r(x)` together with the geometry in which `F` is
/// relatively smooth with constant `ell`.
#[derive(Clone)]
pub struct CompositeInstance {
    pub name: String,
    pub objective: Arc<dyn SmoothObjective>,
    pub reg: Regularizer,
    pub feasible: FeasibleSet,
    pub dgf: DistanceGenerator,
    pub ell: f64,
    pub phi_star: Option<OptimalValue>,
}

impl fmt::Debug for CompositeInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CompositeInstance")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("reg", &self.reg)
            .field("feasible", &self.feasible)
            .field("dgf", &self.dgf)
            .field("ell", &self.ell)
            .field("phi_star", &self.phi_star)
            .finish()
    }
}

impl CompositeInstance {
    pub fn new(
        name: impl Into<String>,
        objective: Arc<dyn SmoothObjective>,
        reg: Regularizer,
        feasible: FeasibleSet,
        dgf: DistanceGenerator,
        ell: f64,
    ) -> Result<Self> {
        let dim = objective.dim();
        if dim == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if let Some(d) = feasible.dim() {
            Error::check_dim(dim, d)?;
        }
        if let Some(d) = dgf.dim() {
            Error::check_dim(dim, d)?;
        }
        if !(ell.is_finite() && ell >= 0.0) {
            return Err(Error::invalid(format!(
                "smoothness constant must be >= 0, got {ell}"
            )));
        }
        Ok(CompositeInstance {
            name: name.into(),
            objective,
            reg,
            feasible,
            dgf,
            ell,
            phi_star: None,
        })
    }

    pub fn with_phi_star(mut self, value: f64, provenance: impl Into<String>) -> Self {
        self.phi_star = Some(OptimalValue {
            value,
            provenance: provenance.into(),
        });
        self
    }

    /// The same problem measured in another geometry, with the smoothness
    /// constant that holds there.
    pub fn with_geometry(mut self, dgf: DistanceGenerator, ell: f64) -> Result<Self> {
        if let Some(d) = dgf.dim() {
            Error::check_dim(self.dim(), d)?;
        }
        self.dgf = dgf;
        self.ell = ell;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn f_value(&self, x: &Vector) -> f64 {
        self.objective.value(x)
    }

    pub fn f_grad(&self, x: &Vector) -> Vector {
        self.objective.grad(x)
    }

    /// `Phi(x) = F(x) + r(x)`, or `+inf` outside the feasible set.
    pub fn phi_value(&self, x: &Vector) -> f64 {
        if x.len() != self.dim() || !self.feasible.contains(x, FEASIBILITY_TOL) {
            return f64::INFINITY;
        }
        self.objective.value(x) + self.reg.value(x)
    }

    pub fn phi_star_value(&self) -> Result<f64> {
        self.phi_star
            .as_ref()
            .map(|p| p.value)
            .ok_or(Error::MissingOptimalValue)
    }

    /// Default starting point: a feasible interior point of the declared geometry.
    pub fn default_start(&self) -> Vector {
        self.feasible.center(self.dim())
    }

    /// Checks both sides of the relative-smoothness inequality
    /// `|F(x) - F(y) - <grad F(y), x - y>| <= ell D(x, y)` on the given pairs and
    /// returns the largest violation (zero when it holds everywhere).
    pub fn relative_smoothness_violation(&self, pairs: &[(Vector, Vector)]) -> Result<f64> {
        let mut worst = 0.0_f64;
        for (x, y) in pairs {
            let lin = self.f_value(x) - self.f_value(y) - self.f_grad(y).dot(&(x - y));
            let d = self.dgf.bregman(x, y)?;
            let slack = 1e-10 * (1.0 + lin.abs() + self.ell * d);
            worst = worst.max(lin.abs() - self.ell * d - slack);
        }
        Ok(worst.max(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_value_examples() {
        let inst = lemma2_instance();
        assert_eq!(inst.phi_value(&Vector::from_element(1, 0.5)), 0.625);
        assert_eq!(inst.phi_value(&Vector::from_element(1, 1.5)), f64::INFINITY);
        assert_eq!(
            inst.phi_value(&Vector::from_element(1, -0.1)),
            f64::INFINITY
        );

        let smooth = make_quadratic_l1(
            Curvature::Diagonal(vec![1.0]),
            None,
            0.0,
            FeasibleSet::AllSpace,
        )
        .unwrap();
        let x = Vector::from_element(1, 3.0);
        assert_eq!(smooth.phi_value(&x), smooth.f_value(&x));
    }

    #[test]
    fn box_rejects_empty() {
        let err = FeasibleSet::new_box(Vector::from_element(1, 1.0), Vector::from_element(1, 0.0));
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn projection_is_consistent_with_membership() {
        let sets = [
            FeasibleSet::new_box(
                Vector::from_row_slice(&[-1.0, 0.0]),
                Vector::from_row_slice(&[1.0, 2.0]),
            )
            .unwrap(),
            FeasibleSet::Simplex(2),
            FeasibleSet::ProductSimplex { rows: 1, cols: 2 },
            FeasibleSet::AllSpace,
        ];
        let v = Vector::from_row_slice(&[3.0, -4.0]);
        for s in &sets {
            let p = s.project(&v);
            assert!(s.contains(&p, 1e-12), "{s:?}");
            assert_eq!(s.project(&p), p, "{s:?} projection is idempotent");
        }
    }

    #[test]
    fn l1_regularizer_prox_is_soft_threshold() {
        let r = Regularizer::l1(0.5).unwrap();
        let p = r.prox(&Vector::from_row_slice(&[1.0, -0.2, -2.0]), 2.0);
        assert_eq!(p, Vector::from_row_slice(&[0.0, 0.0, -1.0]));
        assert!(matches!(Regularizer::l1(0.0).unwrap(), Regularizer::Zero));
        assert!(Regularizer::l1(-1.0).is_err());
    }
}
