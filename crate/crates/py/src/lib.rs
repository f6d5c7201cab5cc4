//! Python bindings. Build with `--features extension-module` for a module that
//! Python can import as `smd_py`.

// Python-facing signatures mirror keyword arguments, so they get long.
#![allow(clippy::too_many_arguments)]

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use smd_core::dp::{self, DpGeometry, HorizonRule, PrivacyBudget, ScanConfig};
use smd_core::problems::{self, Curvature};
use smd_core::rl::{self, GradientSource, RlAlgo, RlConfig, TabularDMDP};
use smd_core::smd::{self as smd_loop, ReplicaConfig, RunConfig};
use smd_core::{
    fosp, prox, CompositeInstance, DistanceGenerator, Error, FeasibleSet, NoiseModel, Schedule,
    StochasticOracle, Vector,
};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Solver { .. } | Error::NonFinite { .. } | Error::Singular | Error::Aborted(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn vec_in(x: Vec<f64>) -> PyResult<Vector> {
    smd_core::vector(x).map_err(py_err)
}

/// Builds a tagged config value (`{"kind": ..., ...}`) from flat key/value pairs.
pub fn tagged<T: serde::de::DeserializeOwned>(fields: toml::Table) -> Result<T, String> {
    toml::Value::Table(fields)
        .try_into()
        .map_err(|e: toml::de::Error| e.message().to_string())
}

fn dict_table(d: &Bound<'_, PyDict>) -> PyResult<toml::Table> {
    let mut t = toml::Table::new();
    for (k, v) in d.iter() {
        let key: String = k.extract()?;
        let value = if let Ok(b) = v.extract::<bool>() {
            toml::Value::Boolean(b)
        } else if let Ok(i) = v.extract::<i64>() {
            toml::Value::Integer(i)
        } else if let Ok(f) = v.extract::<f64>() {
            toml::Value::Float(f)
        } else {
            toml::Value::String(v.extract()?)
        };
        t.insert(key, value);
    }
    Ok(t)
}

fn from_dict<T: serde::de::DeserializeOwned>(d: &Bound<'_, PyDict>) -> PyResult<T> {
    tagged(dict_table(d)?).map_err(PyValueError::new_err)
}

/// Composite problem `min F(x) + r(x)` over a feasible set, with its geometry.
#[pyclass(name = "Instance", frozen)]
struct PyInstance {
    inner: CompositeInstance,
}

#[pymethods]
impl PyInstance {
    #[staticmethod]
    fn random_quadratic_l1(dim: usize, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: problems::random_quadratic_l1(dim, seed).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn random_simplex_quadratic(dim: usize, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: problems::random_simplex_quadratic(dim, seed).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn lemma2() -> Self {
        Self {
            inner: problems::lemma2_instance(),
        }
    }

    #[staticmethod]
    fn autoencoder(d_f: usize, d_e: usize, n: usize, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: problems::make_autoencoder(d_f, d_e, n, seed).map_err(py_err)?,
        })
    }

    /// Separable quadratic plus `l1 * ||x||_1`, on a box when `lo` and `hi` are given.
    #[staticmethod]
    #[pyo3(signature = (diagonal, linear=None, l1=0.0, lo=None, hi=None))]
    fn quadratic_l1(
        diagonal: Vec<f64>,
        linear: Option<Vec<f64>>,
        l1: f64,
        lo: Option<Vec<f64>>,
        hi: Option<Vec<f64>>,
    ) -> PyResult<Self> {
        let set = match (lo, hi) {
            (Some(lo), Some(hi)) => {
                FeasibleSet::new_box(vec_in(lo)?, vec_in(hi)?).map_err(py_err)?
            }
            (None, None) => FeasibleSet::AllSpace,
            _ => return Err(PyValueError::new_err("give both lo and hi, or neither")),
        };
        let linear = linear.map(vec_in).transpose()?;
        let inst = problems::make_quadratic_l1(Curvature::Diagonal(diagonal), linear, l1, set)
            .map_err(py_err)?;
        Ok(Self { inner: inst })
    }

    /// Same problem in another geometry: "euclidean", "entropy" or "polynorm" (with `p`).
    #[pyo3(signature = (kind, ell, p=None))]
    fn with_geometry(&self, kind: &str, ell: f64, p: Option<f64>) -> PyResult<Self> {
        let d = self.inner.dim();
        let dgf = match (kind, p) {
            ("euclidean", None) => DistanceGenerator::Euclidean,
            ("entropy", None) => match self.inner.feasible {
                FeasibleSet::ProductSimplex { rows, cols } => {
                    DistanceGenerator::ProductSimplexEntropy { rows, cols }
                }
                _ => DistanceGenerator::SimplexEntropy { dim: d },
            },
            ("polynorm", Some(p)) => DistanceGenerator::polynorm(p).map_err(py_err)?,
            _ => {
                return Err(PyValueError::new_err(format!(
                    "unknown geometry {kind:?} (p = {p:?})"
                )))
            }
        };
        Ok(Self {
            inner: self.inner.clone().with_geometry(dgf, ell).map_err(py_err)?,
        })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn ell(&self) -> f64 {
        self.inner.ell
    }

    #[getter]
    fn geometry(&self) -> String {
        self.inner.dgf.name()
    }

    #[getter]
    fn phi_star(&self) -> Option<f64> {
        self.inner.phi_star_value().ok()
    }

    fn default_start(&self) -> Vec<f64> {
        self.inner.default_start().as_slice().to_vec()
    }

    fn phi(&self, x: Vec<f64>) -> PyResult<f64> {
        Ok(self.inner.phi_value(&vec_in(x)?))
    }

    fn bfbe(&self, x: Vec<f64>, rho: f64) -> PyResult<f64> {
        fosp::bfbe(&vec_in(x)?, rho, &self.inner).map_err(py_err)
    }

    fn bgm(&self, x: Vec<f64>, rho: f64) -> PyResult<f64> {
        fosp::bgm(&vec_in(x)?, rho, &self.inner).map_err(py_err)
    }

    fn bpm(&self, x: Vec<f64>, rho: f64) -> PyResult<f64> {
        fosp::bpm(&vec_in(x)?, rho, &self.inner).map_err(py_err)
    }

    /// `argmin <g, y> + r(y) + D(y, x) / eta` over the feasible set.
    fn mirror_step(&self, x: Vec<f64>, g: Vec<f64>, eta: f64) -> PyResult<Vec<f64>> {
        let sol = prox::mirror_step(&vec_in(x)?, &vec_in(g)?, eta, &self.inner).map_err(py_err)?;
        Ok(sol.point.as_slice().to_vec())
    }

    /// `argmin Phi(y) + rho D(y, x)`.
    fn phi_prox(&self, x: Vec<f64>, rho: f64) -> PyResult<Vec<f64>> {
        let sol = prox::phi_prox(&vec_in(x)?, rho, &self.inner).map_err(py_err)?;
        Ok(sol.point.as_slice().to_vec())
    }

    /// Sample count and violation count of `Delta+_rho <= 2 D_{rho/2}` at random points.
    #[pyo3(signature = (rho, points=20, seed=0))]
    fn check_envelope_bound(&self, rho: f64, points: usize, seed: u64) -> PyResult<(usize, usize)> {
        let pts = problems::sample_points(&self.inner, points, 1.0, seed);
        let rep = fosp::verify_lemma2(&self.inner, &pts, rho).map_err(py_err)?;
        Ok((rep.samples, rep.violations))
    }

    fn __repr__(&self) -> String {
        format!(
            "Instance({}, dim={}, ell={}, {})",
            self.inner.name,
            self.inner.dim(),
            self.inner.ell,
            self.inner.dgf.name()
        )
    }
}

fn schedule_or_default(schedule: Option<&Bound<'_, PyDict>>, ell: f64) -> PyResult<Schedule> {
    match schedule {
        Some(d) => from_dict(d),
        None => Ok(Schedule::Constant { eta: 0.5 / ell }),
    }
}

fn noise_or_none(noise: Option<&Bound<'_, PyDict>>) -> PyResult<NoiseModel> {
    noise.map_or(Ok(NoiseModel::None), from_dict)
}

/// One run of stochastic mirror descent. Returns a dict of per-step arrays.
///
/// `schedule` and `noise` are dicts such as `{"kind": "constant", "eta": 0.1}`
/// or `{"kind": "gaussian_iso", "sigma": 0.5}`.
#[pyfunction]
#[pyo3(signature = (instance, horizon, schedule=None, noise=None, seed=0, replica=0, x0=None, bfbe_rho=None))]
fn run<'py>(
    py: Python<'py>,
    instance: &PyInstance,
    horizon: usize,
    schedule: Option<&Bound<'py, PyDict>>,
    noise: Option<&Bound<'py, PyDict>>,
    seed: u64,
    replica: u64,
    x0: Option<Vec<f64>>,
    bfbe_rho: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let inst = &instance.inner;
    let schedule = schedule_or_default(schedule, inst.ell)?;
    let noise = noise_or_none(noise)?;
    let cfg = RunConfig {
        horizon,
        seed,
        replica,
        stride: 0,
        checkpoint_every: Some(1),
        bfbe_rho,
        x0: x0.map(vec_in).transpose()?,
        ..Default::default()
    };
    let rec = py
        .detach(|| {
            let mut oracle = StochasticOracle::new(inst.clone(), noise, seed, replica)?;
            smd_loop::run_smd(&mut oracle, &schedule, &cfg)
        })
        .map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("t", rec.checkpoints.iter().map(|c| c.t).collect::<Vec<_>>())?;
    out.set_item(
        "phi",
        rec.checkpoints.iter().map(|c| c.phi).collect::<Vec<_>>(),
    )?;
    out.set_item(
        "bfbe",
        rec.checkpoints.iter().map(|c| c.bfbe).collect::<Vec<_>>(),
    )?;
    out.set_item("eta", rec.etas.clone())?;
    out.set_item("final_point", rec.final_point.as_slice().to_vec())?;
    out.set_item("weighted_bfbe", rec.weighted_bfbe())?;
    out.set_item("diverged", rec.diverged.is_some())?;
    Ok(out)
}

/// Independent replicas; returns `(values, quantile, bound)`.
#[pyfunction]
#[pyo3(signature = (instance, horizon, replicas, noise, schedule=None, beta=0.1, seed=0))]
fn replicas(
    py: Python<'_>,
    instance: &PyInstance,
    horizon: usize,
    replicas: usize,
    noise: &Bound<'_, PyDict>,
    schedule: Option<&Bound<'_, PyDict>>,
    beta: f64,
    seed: u64,
) -> PyResult<(Vec<f64>, f64, Option<f64>)> {
    let cfg = ReplicaConfig {
        noise: from_dict(noise)?,
        schedule: schedule_or_default(schedule, instance.inner.ell)?,
        horizon,
        replicas,
        beta,
        bfbe_rho: None,
        seed,
    };
    let s = py
        .detach(|| smd_loop::replica_experiment(&instance.inner, &cfg))
        .map_err(py_err)?;
    Ok((s.values, s.quantile, s.bound))
}

/// Step sizes `eta_0, ..., eta_{T-1}` of a schedule dict.
#[pyfunction]
fn schedule_etas(schedule: &Bound<'_, PyDict>, horizon: usize) -> PyResult<Vec<f64>> {
    let s: Schedule = from_dict(schedule)?;
    s.validate(None).map_err(py_err)?;
    Ok(s.etas(horizon))
}

/// Private simplex learning in both geometries. Returns `(rows, ratios, trend)`
/// where each row is `(dim, geometry, horizon, sigma2, mean_bfbe)`.
#[pyfunction]
#[pyo3(signature = (dims, eps=1.0, delta=1e-5, n=10_000, replicas=20, max_horizon=2000, seed=0))]
#[allow(clippy::type_complexity)]
fn dp_scan(
    py: Python<'_>,
    dims: Vec<usize>,
    eps: f64,
    delta: f64,
    n: usize,
    replicas: usize,
    max_horizon: usize,
    seed: u64,
) -> PyResult<(
    Vec<(usize, String, usize, f64, f64)>,
    Vec<(usize, f64)>,
    f64,
)> {
    let cfg = ScanConfig {
        dims,
        geometries: vec![DpGeometry::Euclidean, DpGeometry::SimplexEntropy],
        budget: PrivacyBudget::new(eps, delta, n, 1.0).map_err(py_err)?,
        exact_g: true,
        horizon: HorizonRule::Utility { max: max_horizon },
        replicas,
        beta: 0.1,
        seed,
    };
    let s = py.detach(|| dp::dimension_scan(&cfg)).map_err(py_err)?;
    let rows = s
        .rows
        .iter()
        .map(|r| {
            (
                r.dim,
                r.geometry.name().to_string(),
                r.horizon,
                r.sigma2,
                r.mean,
            )
        })
        .collect();
    Ok((rows, s.ratios, s.trend))
}

/// Tabular discounted MDP.
#[pyclass(name = "Mdp", frozen)]
struct PyMdp {
    inner: TabularDMDP,
}

#[pymethods]
impl PyMdp {
    #[staticmethod]
    fn garnet(
        states: usize,
        actions: usize,
        branching: usize,
        gamma: f64,
        seed: u64,
    ) -> PyResult<Self> {
        Ok(Self {
            inner: rl::garnet(states, actions, branching, gamma, seed).map_err(py_err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (gamma=0.9, slip=0.1))]
    fn gridworld(gamma: f64, slip: f64) -> PyResult<Self> {
        Ok(Self {
            inner: rl::gridworld(gamma, slip).map_err(py_err)?,
        })
    }

    #[getter]
    fn states(&self) -> usize {
        self.inner.states
    }

    #[getter]
    fn actions(&self) -> usize {
        self.inner.actions
    }

    /// `(L_F, L_21)`.
    fn smoothness(&self) -> (f64, f64) {
        let c = rl::smoothness_constants(&self.inner);
        (c.l_f, c.l_21)
    }

    /// Optimal value of `V_p = -V` from the initial distribution.
    fn optimal_value(&self) -> PyResult<f64> {
        Ok(-rl::optimal_policy(&self.inner).map_err(py_err)?.1)
    }

    /// Runs "pspg" or "smpg" with exact gradients, or sampled ones when
    /// `batch` is given. Returns `(t, V_p, gap)` rows and the iteration at
    /// which `target_gap` was first met.
    #[pyo3(signature = (algo, iterations, eta=None, batch=None, episode_horizon=None, target_gap=None, seed=0))]
    #[allow(clippy::type_complexity)]
    fn solve(
        &self,
        py: Python<'_>,
        algo: &str,
        iterations: usize,
        eta: Option<f64>,
        batch: Option<usize>,
        episode_horizon: Option<usize>,
        target_gap: Option<f64>,
        seed: u64,
    ) -> PyResult<(Vec<(usize, f64, f64)>, Option<usize>)> {
        let algo: RlAlgo = algo.parse().map_err(py_err)?;
        let c = rl::smoothness_constants(&self.inner);
        let ell = if algo == RlAlgo::Pspg { c.l_f } else { c.l_21 };
        let gradient = match batch {
            Some(batch) => GradientSource::Sampled {
                horizon: episode_horizon.unwrap_or_else(|| rl::default_horizon(self.inner.gamma)),
                batch,
            },
            None => GradientSource::Exact,
        };
        let cfg = RlConfig {
            algo,
            schedule: Schedule::Constant {
                eta: eta.unwrap_or(0.5 / ell),
            },
            iterations,
            gradient,
            seed,
            record_every: 1,
            target_gap,
            bfbe: false,
        };
        let rec = py
            .detach(|| rl::rl_run(&self.inner, &cfg))
            .map_err(py_err)?;
        Ok((
            rec.rows.iter().map(|r| (r.t, r.value, r.gap)).collect(),
            rec.reached_target,
        ))
    }
}

/// Constant `C` with `Delta / C <= Delta+ <= C Delta`; needs `rho > ell/s + 2 ell`.
#[pyfunction]
fn sandwich_constant(ell: f64, rho: f64, s: f64) -> PyResult<f64> {
    fosp::sandwich_constant(ell, rho, s).map_err(py_err)
}

/// Nonnegative root of `theta^(p+1) + theta = c`.
#[pyfunction]
fn growth_root(p: f64, c: f64) -> f64 {
    prox::roots::growth_root(p, c)
}

#[pymodule]
fn smd_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInstance>()?;
    m.add_class::<PyMdp>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(replicas, m)?)?;
    m.add_function(wrap_pyfunction!(schedule_etas, m)?)?;
    m.add_function(wrap_pyfunction!(dp_scan, m)?)?;
    m.add_function(wrap_pyfunction!(sandwich_constant, m)?)?;
    m.add_function(wrap_pyfunction!(growth_root, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
