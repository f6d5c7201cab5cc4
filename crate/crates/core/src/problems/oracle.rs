use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::CompositeInstance;
use crate::dgf::DistanceGenerator;
use crate::rng::{self, Purpose, Rng};
use crate::{Error, Result, Vector};

/// How the oracle perturbs the exact gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseModel {
    None,
    /// Additive `N(0, sigma^2 I)`.
    GaussianIso {
        sigma: f64,
    },
    /// Additive `N(0, sigma^2 I)` used as a privacy mechanism; same draws as
    /// `GaussianIso`, kept separate so records say which one was meant.
    GaussianPerturb {
        sigma: f64,
    },
    /// Unbiased minibatch estimate from a finite-sum objective.
    Minibatch {
        batch: usize,
    },
}

impl NoiseModel {
    fn gaussian_sigma(&self) -> Option<f64> {
        match *self {
            NoiseModel::GaussianIso { sigma } | NoiseModel::GaussianPerturb { sigma } => {
                Some(sigma)
            }
            _ => None,
        }
    }
}

/// Norm in which the gradient error is measured.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DualNorm {
    L2,
    Linf,
    /// `(2, inf)` norm of a row-major matrix with `cols` columns.
    L2Inf {
        cols: usize,
    },
}

impl DualNorm {
    pub fn of(dgf: &DistanceGenerator) -> Option<Self> {
        match dgf {
            DistanceGenerator::Euclidean | DistanceGenerator::PolyNorm { .. } => Some(DualNorm::L2),
            DistanceGenerator::SimplexEntropy { .. } => Some(DualNorm::Linf),
            DistanceGenerator::ProductSimplexEntropy { cols, .. } => {
                Some(DualNorm::L2Inf { cols: *cols })
            }
            DistanceGenerator::Custom(_) => None,
        }
    }
}

/// Stochastic first-order oracle. Owns its random stream and a draw counter, so
/// each worker needs its own instance.
#[derive(Debug, Clone)]
pub struct StochasticOracle {
    instance: CompositeInstance,
    noise: NoiseModel,
    rng: Rng,
    draws: u64,
}

impl StochasticOracle {
    pub fn new(
        instance: CompositeInstance,
        noise: NoiseModel,
        seed: u64,
        replica: u64,
    ) -> Result<Self> {
        match noise {
            NoiseModel::GaussianIso { sigma } | NoiseModel::GaussianPerturb { sigma }
                if !(sigma.is_finite() && sigma >= 0.0) =>
            {
                return Err(Error::invalid(format!(
                    "noise level must be >= 0, got {sigma}"
                )));
            }
            NoiseModel::Minibatch { batch: 0 } => {
                return Err(Error::invalid("minibatch size must be positive"));
            }
            _ => {}
        }
        let purpose = match noise {
            NoiseModel::Minibatch { .. } => Purpose::Minibatch,
            _ => Purpose::GradientNoise,
        };
        Ok(StochasticOracle {
            instance,
            noise,
            rng: rng::stream(seed, replica, purpose),
            draws: 0,
        })
    }

    pub fn instance(&self) -> &CompositeInstance {
        &self.instance
    }

    pub fn noise(&self) -> NoiseModel {
        self.noise
    }

    /// Number of stochastic gradients handed out so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    pub fn stoch_grad(&mut self, x: &Vector) -> Result<Vector> {
        Error::check_dim(self.instance.dim(), x.len())?;
        self.draws += 1;
        match self.noise {
            NoiseModel::None => Ok(self.instance.f_grad(x)),
            NoiseModel::GaussianIso { sigma } | NoiseModel::GaussianPerturb { sigma } => {
                let mut g = self.instance.f_grad(x);
                if sigma > 0.0 {
                    for c in g.iter_mut() {
                        *c += sigma * self.rng.sample::<f64, _>(StandardNormal);
                    }
                }
                Ok(g)
            }
            NoiseModel::Minibatch { batch } => self
                .instance
                .objective
                .minibatch_grad(x, batch, &mut self.rng)
                .ok_or_else(|| {
                    Error::Unsupported(format!("{} is not a finite sum", self.instance.name))
                }),
        }
    }

    /// Upper bound on `E ||noise||_*^2` in the given norm, when it is known in
    /// closed form. Minibatch variance is data-dependent and has no declared bound.
    pub fn variance_bound(&self, norm: DualNorm) -> Option<f64> {
        let s2 = self
            .noise
            .gaussian_sigma()
            .map(|s| s * s)
            .or(match self.noise {
                NoiseModel::None => Some(0.0),
                _ => None,
            })?;
        let d = self.instance.dim() as f64;
        Some(match norm {
            DualNorm::L2 => d * s2,
            DualNorm::Linf => 2.0 * (2.0 * d).ln() * s2,
            DualNorm::L2Inf { cols } => {
                let rows = d / cols as f64;
                rows * 2.0 * (2.0 * cols as f64).ln() * s2
            }
        })
    }

    /// A `sigma^2` for which `E exp(||noise||_*^2 / sigma^2) <= e`.
    pub fn subgaussian_param(&self, norm: DualNorm) -> Option<f64> {
        let s = match self.noise {
            NoiseModel::None => return Some(0.0),
            _ => self.noise.gaussian_sigma()?,
        };
        Some(gaussian_subgaussian_param(s * s, self.instance.dim(), norm))
    }
}

/// Sub-Gaussian parameter of `N(0, s2 I_d)` measured in `norm`.
///
/// In l2, `E exp(t||z||^2) = (1 - 2 t s2)^(-d/2)`, which equals `e` at
/// `1/t = 2 s2 / (1 - exp(-2/d))`. For the max-type norms, Jensen with power
/// `k = max(1, 2 ln m)` over `m` coordinates plus a union bound gives
/// `1/t = 2 k s2 / (1 - exp(-k))` per row, and rows add up in `(2, inf)`.
pub fn gaussian_subgaussian_param(s2: f64, d: usize, norm: DualNorm) -> f64 {
    let max_type = |m: usize| {
        let k = (2.0 * (m as f64).ln()).max(1.0);
        2.0 * k * s2 / (1.0 - (-k).exp())
    };
    match norm {
        DualNorm::L2 => 2.0 * s2 / (1.0 - (-2.0 / d as f64).exp()),
        DualNorm::Linf => max_type(d),
        // rows are independent; Jensen on each factor with power `rows`
        DualNorm::L2Inf { cols } => (d / cols) as f64 * max_type(cols),
    }
}
