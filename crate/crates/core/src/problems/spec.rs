use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{
    lemma2_instance, make_autoencoder, make_quadratic_l1, make_simplex_quadratic,
    random_quadratic_l1, random_simplex_quadratic, CompositeInstance, Curvature, FeasibleSet,
};
use crate::{vector, Error, Result};

/// Config-file description of an instance. Data is always regenerated from
/// the seed.
///
/// ```toml
/// [instance]
/// kind = "quadratic_l1"
/// diagonal = [1.0, 2.0]
/// l1 = 0.5
/// lo = [-1.0, -1.0]
/// hi = [1.0, 1.0]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSpec {
    Lemma2 {},
    QuadraticL1 {
        diagonal: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        linear: Option<Vec<f64>>,
        #[serde(default)]
        l1: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lo: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        hi: Option<Vec<f64>>,
    },
    RandomQuadraticL1 {
        dim: usize,
        seed: u64,
    },
    SimplexQuadratic {
        /// Row-major symmetric matrix.
        matrix: Vec<Vec<f64>>,
        linear: Vec<f64>,
    },
    RandomSimplexQuadratic {
        dim: usize,
        seed: u64,
    },
    Autoencoder {
        d_f: usize,
        d_e: usize,
        n: usize,
        seed: u64,
    },
}

impl InstanceSpec {
    pub fn build(&self) -> Result<CompositeInstance> {
        match self {
            InstanceSpec::Lemma2 {} => Ok(lemma2_instance()),
            InstanceSpec::QuadraticL1 {
                diagonal,
                linear,
                l1,
                lo,
                hi,
            } => {
                let d = diagonal.len();
                let linear = linear.clone().map(vector).transpose()?;
                let feasible = match (lo, hi) {
                    (None, None) => FeasibleSet::AllSpace,
                    _ => {
                        let lo = lo.clone().unwrap_or_else(|| vec![f64::NEG_INFINITY; d]);
                        let hi = hi.clone().unwrap_or_else(|| vec![f64::INFINITY; d]);
                        FeasibleSet::new_box(lo.into(), hi.into())?
                    }
                };
                make_quadratic_l1(Curvature::Diagonal(diagonal.clone()), linear, *l1, feasible)
            }
            InstanceSpec::RandomQuadraticL1 { dim, seed } => random_quadratic_l1(*dim, *seed),
            InstanceSpec::SimplexQuadratic { matrix, linear } => {
                let d = linear.len();
                if matrix.len() != d || matrix.iter().any(|r| r.len() != d) {
                    return Err(Error::invalid("simplex quadratic matrix must be d x d"));
                }
                let flat: Vec<f64> = matrix.iter().flatten().copied().collect();
                make_simplex_quadratic(
                    DMatrix::from_row_slice(d, d, &flat),
                    vector(linear.clone())?,
                )
            }
            InstanceSpec::RandomSimplexQuadratic { dim, seed } => {
                random_simplex_quadratic(*dim, *seed)
            }
            InstanceSpec::Autoencoder { d_f, d_e, n, seed } => {
                make_autoencoder(*d_f, *d_e, *n, *seed)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Deserialize, Serialize)]
    struct Wrapper {
        instance: InstanceSpec,
    }

    #[test]
    fn builds_from_toml() {
        let text = r#"
            [instance]
            kind = "quadratic_l1"
            diagonal = [1.0, 2.0]
            l1 = 0.5
            lo = [-1.0, -1.0]
            hi = [1.0, 1.0]
        "#;
        let w: Wrapper = toml::from_str(text).unwrap();
        let inst = w.instance.build().unwrap();
        assert_eq!(inst.ell, 2.0);
        assert_eq!(inst.dim(), 2);
        let back: Wrapper = toml::from_str(&toml::to_string(&w).unwrap()).unwrap();
        assert_eq!(back.instance, w.instance);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = "[instance]\nkind = \"lemma2\"\nfoo = 1\n";
        assert!(toml::from_str::<Wrapper>(text).is_err());
    }

    #[test]
    fn rejects_ragged_matrix() {
        let spec = InstanceSpec::SimplexQuadratic {
            matrix: vec![vec![1.0], vec![0.0, 1.0]],
            linear: vec![0.0, 0.0],
        };
        assert!(spec.build().is_err());
    }
}
