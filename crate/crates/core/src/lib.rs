//! Stochastic mirror descent for nonconvex composite problems
//!
//! ```text
//! min_{x in X}  F(x) + r(x),      F(x) = E f(x, xi)
//! ```
//!
//! with updates taken in an arbitrary (possibly nonsmooth) Bregman geometry.
//! The crate is organised by role:
//!
//! - [`dgf`]: distance-generating functions and their Bregman divergences.
//! - [`problems`]: composite instances, stochastic oracles, built-in benchmarks.
//! - [`prox`]: mirror steps, Bregman proximal points and the closed forms behind them.
//! - [`fosp`]: the three stationarity measures (proximal mapping, gradient mapping,
//!   forward-backward envelope) and numerical checks of the relations between them.
//! - [`smd`]: the iteration loop, step-size schedules, iterate selection and replicas.
//! - [`dp`]: gradient-perturbation private optimisation in l2 and l1 geometry.
//! - [`rl`]: tabular discounted MDPs, exact and sampled policy gradients.
//!
//! All randomness flows through [`rng`], so a run is a pure function of its
//! configuration and seed.

// `!(a > b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dgf;
pub mod dp;
pub mod error;
pub mod fosp;
pub mod problems;
pub mod prox;
pub mod rl;
pub mod rng;
pub mod smd;
pub mod stats;

pub use dgf::DistanceGenerator;
pub use error::{Error, Result};
pub use problems::{CompositeInstance, FeasibleSet, NoiseModel, Regularizer, StochasticOracle};
pub use prox::SubproblemSolution;
pub use smd::{RunRecord, Schedule};

/// Dense real vector used for iterates, gradients and dual points.
pub type Vector = nalgebra::DVector<f64>;

/// Builds a [`Vector`], rejecting NaN and infinite coordinates.
pub fn vector(coords: impl Into<Vec<f64>>) -> Result<Vector> {
    let coords = coords.into();
    if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
        return Err(Error::NonFinite { index: i });
    }
    Ok(Vector::from_vec(coords))
}
