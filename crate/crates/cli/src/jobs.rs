//! Resolved configurations of every subcommand. These are what the sidecar
//! echoes and what `replay` feeds back in.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use smd_core::dgf::DistanceGenerator;
use smd_core::dp::DpGeometry;
use smd_core::problems::InstanceSpec;
use smd_core::rl::{GradientSource, RlAlgo};
use smd_core::{CompositeInstance, NoiseModel, Schedule};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Job {
    FospCheck(FospCheckJob),
    Run(RunJob),
    Sweep(SweepJob),
    Dp(DpJob),
    Rl(RlJob),
    ScheduleDump(ScheduleDumpJob),
}

impl Job {
    pub fn command(&self) -> &'static str {
        match self {
            Job::FospCheck(_) => "fosp-check",
            Job::Run(_) => "run",
            Job::Sweep(_) => "sweep",
            Job::Dp(_) => "dp",
            Job::Rl(_) => "rl",
            Job::ScheduleDump(_) => "schedule-dump",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FospCheckJob {
    pub instances: Vec<InstanceSpec>,
    /// Sampled points per instance.
    pub points: usize,
    /// Standard deviation of the raw Gaussian draws behind the sample points.
    pub scale: f64,
    /// `rho / ell` values for the BGM-vs-BFBE inequality.
    pub rho_factors: Vec<f64>,
    pub seed: u64,
    /// Inflate the BGM by a factor of 100 before checking; a negative control.
    pub perturb_measure: bool,
}

impl Default for FospCheckJob {
    fn default() -> Self {
        FospCheckJob {
            instances: vec![
                InstanceSpec::Lemma2 {},
                InstanceSpec::RandomQuadraticL1 { dim: 5, seed: 0 },
                InstanceSpec::RandomSimplexQuadratic { dim: 5, seed: 0 },
                InstanceSpec::Autoencoder {
                    d_f: 4,
                    d_e: 2,
                    n: 50,
                    seed: 0,
                },
            ],
            points: 20,
            scale: 1.0,
            rho_factors: vec![2.0, 4.0, 8.0],
            seed: 0,
            perturb_measure: false,
        }
    }
}

/// Replacement geometry for an instance. `ell` defaults to the instance's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometrySpec {
    Euclidean {
        #[serde(default)]
        ell: Option<f64>,
    },
    Entropy {
        #[serde(default)]
        ell: Option<f64>,
    },
    Polynorm {
        p: f64,
        #[serde(default)]
        ell: Option<f64>,
    },
}

impl GeometrySpec {
    pub fn apply(&self, inst: CompositeInstance) -> CliResult<CompositeInstance> {
        let (dgf, ell) = match *self {
            GeometrySpec::Euclidean { ell } => (DistanceGenerator::Euclidean, ell),
            GeometrySpec::Entropy { ell } => {
                (DistanceGenerator::SimplexEntropy { dim: inst.dim() }, ell)
            }
            GeometrySpec::Polynorm { p, ell } => (DistanceGenerator::polynorm(p)?, ell),
        };
        let ell = ell.unwrap_or(inst.ell);
        Ok(inst.with_geometry(dgf, ell)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunJob {
    pub instance: InstanceSpec,
    pub geometry: Option<GeometrySpec>,
    pub noise: NoiseModel,
    /// `None` means a constant step `1/(2 ell)`.
    pub schedule: Option<Schedule>,
    pub horizon: usize,
    pub replicas: usize,
    pub seed: u64,
    /// Diagnostics every this many steps; `None` means `ceil(T/100)`.
    pub checkpoint_every: Option<usize>,
    /// `rho` of the recorded BFBE; `None` means `3 ell`.
    pub bfbe_rho: Option<f64>,
    pub phi_plus: bool,
    pub lyapunov_rho: Option<f64>,
    pub clip: Option<f64>,
    pub enforce_step_bound: bool,
    pub x0: Option<Vec<f64>>,
}

impl Default for RunJob {
    fn default() -> Self {
        RunJob {
            instance: InstanceSpec::RandomQuadraticL1 { dim: 5, seed: 0 },
            geometry: None,
            noise: NoiseModel::None,
            schedule: None,
            horizon: 1000,
            replicas: 1,
            seed: 0,
            checkpoint_every: None,
            bfbe_rho: None,
            phi_plus: false,
            lyapunov_rho: None,
            clip: None,
            enforce_step_bound: true,
            x0: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMethod {
    Sgd,
    Smdr1,
    Smdr2,
    ClipSgd,
}

impl SweepMethod {
    pub const ALL: [SweepMethod; 4] = [
        SweepMethod::Sgd,
        SweepMethod::Smdr1,
        SweepMethod::Smdr2,
        SweepMethod::ClipSgd,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SweepMethod::Sgd => "sgd",
            SweepMethod::Smdr1 => "smdr1",
            SweepMethod::Smdr2 => "smdr2",
            SweepMethod::ClipSgd => "clip_sgd",
        }
    }
}

impl std::str::FromStr for SweepMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        SweepMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method {s:?}; expected sgd, smdr1, smdr2 or clip_sgd"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SweepProblem {
    /// Synthetic autoencoder with weights initialised around one.
    Autoencoder {
        d_f: usize,
        d_e: usize,
        n: usize,
        data_seed: u64,
        init_seed: u64,
    },
    /// `F(x) = sum_i a_i x_i^2 / 2` started from the all-ones point.
    Quadratic { diagonal: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepJob {
    pub problem: SweepProblem,
    pub methods: Vec<SweepMethod>,
    pub log2_eta_min: i32,
    pub log2_eta_max: i32,
    pub horizon: usize,
    /// Minibatch size; `None` means exact gradients.
    pub batch: Option<usize>,
    pub clip_radius: f64,
    /// A cell is good when its final loss is at most this times the best.
    pub good_factor: f64,
    pub seed: u64,
}

impl Default for SweepJob {
    fn default() -> Self {
        SweepJob {
            problem: SweepProblem::Autoencoder {
                d_f: 64,
                d_e: 8,
                n: 1000,
                data_seed: 0,
                init_seed: 0,
            },
            methods: SweepMethod::ALL.to_vec(),
            log2_eta_min: -19,
            log2_eta_max: 7,
            horizon: 10_000,
            batch: Some(100),
            clip_radius: 1.0,
            good_factor: 2.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpJob {
    /// `None` runs both geometries and reports their ratio.
    pub geometry: Option<DpGeometry>,
    pub dims: Vec<usize>,
    pub epsilon: f64,
    pub delta: f64,
    pub n: usize,
    /// Gradient norm bound; `None` uses the exact bound of each instance.
    pub g: Option<f64>,
    pub c1: f64,
    pub c2: f64,
    /// Fixed horizon; `None` picks it per cell from the utility rule.
    pub horizon: Option<usize>,
    pub max_horizon: usize,
    pub replicas: usize,
    pub beta: f64,
    pub seed: u64,
}

impl Default for DpJob {
    fn default() -> Self {
        DpJob {
            geometry: None,
            dims: vec![4, 16, 64, 256],
            epsilon: 1.0,
            delta: 1e-5,
            n: 10_000,
            g: None,
            c1: 1.0,
            c2: 1.0,
            horizon: None,
            max_horizon: 2000,
            replicas: 20,
            beta: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MdpSpec {
    Garnet {
        states: usize,
        actions: usize,
        branching: usize,
        gamma: f64,
        seed: u64,
    },
    Gridworld {
        gamma: f64,
        slip: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlJob {
    pub mdp: MdpSpec,
    pub algo: RlAlgo,
    /// `None` means the constant step `1/(2 ell)` of the algorithm's geometry.
    pub schedule: Option<Schedule>,
    pub iterations: usize,
    pub gradient: GradientSource,
    pub seed: u64,
    pub record_every: usize,
    pub target_gap: Option<f64>,
    pub bfbe: bool,
}

impl Default for RlJob {
    fn default() -> Self {
        RlJob {
            mdp: MdpSpec::Gridworld {
                gamma: 0.9,
                slip: 0.1,
            },
            algo: RlAlgo::Smpg,
            schedule: None,
            iterations: 1000,
            gradient: GradientSource::Exact,
            seed: 0,
            record_every: 1,
            target_gap: None,
            bfbe: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleDumpJob {
    pub schedule: Schedule,
    pub horizon: usize,
}

/// Parses `kind:key=value,key=value` into a tagged config value. Values are
/// read as TOML scalars or arrays and fall back to strings.
pub fn parse_tagged<T: DeserializeOwned>(text: &str) -> CliResult<T> {
    let (kind, rest) = text.split_once(':').unwrap_or((text, ""));
    let mut table = toml::Table::new();
    table.insert("kind".into(), toml::Value::String(kind.trim().to_string()));
    for pair in split_top_level(rest) {
        let (k, v) = pair.split_once('=').ok_or_else(|| {
            CliError::usage(format!("expected key=value in {text:?}, got {pair:?}"))
        })?;
        table.insert(k.trim().to_string(), scalar(v.trim()));
    }
    toml::Value::Table(table)
        .try_into()
        .map_err(|e| CliError::usage(format!("{text:?}: {e}")))
}

fn scalar(v: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {v}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(v.to_string()))
}

/// Splits on commas outside brackets, so `diagonal=[1,2],l1=0.5` has two parts.
fn split_top_level(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '[' => depth += 1,
            ']' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&s[start..]);
    parts.into_iter().filter(|p| !p.trim().is_empty()).collect()
}

/// A schedule flag: a bare number is a constant step.
pub fn parse_schedule(text: &str) -> CliResult<Schedule> {
    match text.trim().parse::<f64>() {
        Ok(eta) => Ok(Schedule::Constant { eta }),
        Err(_) => parse_tagged(text),
    }
}

/// `garnet:S,A,b,seed` or `gridworld`; the discount comes separately.
pub fn parse_mdp(text: &str, gamma: Option<f64>, slip: Option<f64>) -> CliResult<MdpSpec> {
    let gamma = gamma.unwrap_or(0.9);
    let (kind, rest) = text.split_once(':').unwrap_or((text, ""));
    match kind {
        "gridworld" if rest.is_empty() => Ok(MdpSpec::Gridworld {
            gamma,
            slip: slip.unwrap_or(0.1),
        }),
        "garnet" => {
            let nums: Result<Vec<u64>, _> =
                rest.split(',').map(|p| p.trim().parse::<u64>()).collect();
            match nums.as_deref() {
                Ok([s, a, b, seed]) => Ok(MdpSpec::Garnet {
                    states: *s as usize,
                    actions: *a as usize,
                    branching: *b as usize,
                    gamma,
                    seed: *seed,
                }),
                _ => Err(CliError::usage(format!(
                    "expected garnet:S,A,b,seed, got {text:?}"
                ))),
            }
        }
        _ => Err(CliError::usage(format!(
            "unknown mdp {text:?}; expected garnet:S,A,b,seed or gridworld"
        ))),
    }
}

/// Reads a job config file, where the job's fields sit at the top level.
pub fn load<T: DeserializeOwned + Default>(path: Option<&std::path::Path>) -> CliResult<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))
        }
    }
}
