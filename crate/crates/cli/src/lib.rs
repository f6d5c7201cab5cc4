//! The `smd` command-line tool: experiment drivers that write a CSV and a
//! `<out>.meta.toml` sidecar from which the CSV can be regenerated exactly.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use smd_core::dp::DpGeometry;
use smd_core::rl::{GradientSource, RlAlgo};

pub mod commands;
pub mod error;
pub mod jobs;
pub mod output;

use error::{exit, CliError, CliResult};
use jobs::*;
use output::{sidecar_path, Sidecar};

#[derive(Parser, Debug)]
#[command(name = "smd", version, about = "Stochastic mirror descent experiments")]
struct Cli {
    /// Worker threads for replicas and sweep cells; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Job config file (TOML); flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV path. Metadata goes next to it as <out>.meta.toml.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the BPM/BGM/BFBE inequalities on sampled points.
    FospCheck {
        #[command(flatten)]
        common: Common,
        /// Instance as kind:key=value,... (repeatable; replaces the config list).
        #[arg(long)]
        instance: Vec<String>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        scale: Option<f64>,
        /// Inflate the BGM so the checks must fail.
        #[arg(long)]
        perturb_measure: bool,
    },
    /// Run SMD on one instance, optionally over several replicas.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        instance: Option<String>,
        /// euclidean, entropy or polynorm:p=<p>, with optional ell=<ell>.
        #[arg(long)]
        geometry: Option<String>,
        /// none, gaussian_iso:sigma=<s>, gaussian_perturb:sigma=<s> or minibatch:batch=<b>.
        #[arg(long)]
        noise: Option<String>,
        /// A constant step, or kind:key=value,... for any schedule.
        #[arg(long)]
        schedule: Option<String>,
        #[arg(long, visible_alias = "T")]
        horizon: Option<usize>,
        #[arg(long)]
        replicas: Option<usize>,
        #[arg(long)]
        checkpoint_every: Option<usize>,
        #[arg(long)]
        bfbe_rho: Option<f64>,
        /// Record Phi at the mirror step with rho = ell.
        #[arg(long)]
        phi_plus: bool,
        #[arg(long)]
        lyapunov_rho: Option<f64>,
        #[arg(long)]
        clip: Option<f64>,
        /// Allow steps above 1/(2 ell).
        #[arg(long)]
        no_step_bound: bool,
    },
    /// Step-size sensitivity sweep of SGD, SMDr1, SMDr2 and clipped SGD.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated subset of sgd, smdr1, smdr2, clip_sgd.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<SweepMethod>,
        #[arg(long, allow_negative_numbers = true)]
        log2_eta_min: Option<i32>,
        #[arg(long, allow_negative_numbers = true)]
        log2_eta_max: Option<i32>,
        #[arg(long, visible_alias = "T")]
        horizon: Option<usize>,
        /// Minibatch size; 0 means exact gradients.
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        clip_radius: Option<f64>,
        /// autoencoder:d_f=..,d_e=..,n=..,data_seed=..,init_seed=.. or quadratic:diagonal=[..].
        #[arg(long)]
        problem: Option<String>,
    },
    /// Private optimisation on simplex problems of growing dimension.
    Dp {
        #[command(flatten)]
        common: Common,
        /// euclidean or entropy; both when omitted.
        #[arg(long)]
        geometry: Option<String>,
        #[arg(long, value_delimiter = ',')]
        dims: Vec<usize>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
        /// Gradient norm bound; the exact bound of each instance when omitted.
        #[arg(long = "G")]
        g: Option<f64>,
        #[arg(long)]
        c1: Option<f64>,
        #[arg(long)]
        c2: Option<f64>,
        /// Fixed horizon; picked per cell from the budget when omitted.
        #[arg(long, visible_alias = "T")]
        horizon: Option<usize>,
        #[arg(long)]
        max_horizon: Option<usize>,
        #[arg(long)]
        replicas: Option<usize>,
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Policy optimisation on a tabular MDP.
    Rl {
        #[command(flatten)]
        common: Common,
        /// garnet:S,A,b,seed or gridworld.
        #[arg(long)]
        mdp: Option<String>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        slip: Option<f64>,
        #[arg(long)]
        algo: Option<String>,
        /// Step rule: a constant, or kind:key=value,...
        #[arg(long)]
        eta: Option<String>,
        #[arg(long, visible_alias = "T")]
        iterations: Option<usize>,
        /// Episodes per sampled gradient; switches to sampled gradients.
        #[arg(long)]
        batch: Option<usize>,
        /// Episode truncation for sampled gradients.
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        record_every: Option<usize>,
        #[arg(long)]
        target_gap: Option<f64>,
        #[arg(long)]
        no_bfbe: bool,
    },
    /// Print eta_t for t = 0..T-1.
    ScheduleDump {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        schedule: Option<String>,
        #[arg(long, visible_alias = "T")]
        horizon: Option<usize>,
    },
    /// Regenerate a CSV from its metadata sidecar.
    Replay {
        sidecar: PathBuf,
        /// Where to write; defaults to the path recorded in the sidecar.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn resolve(command: Command) -> CliResult<(Job, Option<PathBuf>)> {
    Ok(match command {
        Command::FospCheck {
            common,
            instance,
            points,
            scale,
            perturb_measure,
        } => {
            let mut j: FospCheckJob = load(common.config.as_deref())?;
            if !instance.is_empty() {
                j.instances = instance
                    .iter()
                    .map(|s| parse_tagged(s))
                    .collect::<CliResult<_>>()?;
            }
            set(&mut j.points, points);
            set(&mut j.scale, scale);
            set(&mut j.seed, common.seed);
            j.perturb_measure |= perturb_measure;
            (Job::FospCheck(j), common.out)
        }
        Command::Run {
            common,
            instance,
            geometry,
            noise,
            schedule,
            horizon,
            replicas,
            checkpoint_every,
            bfbe_rho,
            phi_plus,
            lyapunov_rho,
            clip,
            no_step_bound,
        } => {
            let mut j: RunJob = load(common.config.as_deref())?;
            set(
                &mut j.instance,
                instance.as_deref().map(parse_tagged).transpose()?,
            );
            if let Some(g) = geometry {
                j.geometry = Some(parse_tagged(&g)?);
            }
            set(
                &mut j.noise,
                noise.as_deref().map(parse_tagged).transpose()?,
            );
            if let Some(s) = schedule {
                j.schedule = Some(parse_schedule(&s)?);
            }
            set(&mut j.horizon, horizon);
            set(&mut j.replicas, replicas);
            set(&mut j.seed, common.seed);
            j.checkpoint_every = checkpoint_every.or(j.checkpoint_every);
            j.bfbe_rho = bfbe_rho.or(j.bfbe_rho);
            j.phi_plus |= phi_plus;
            j.lyapunov_rho = lyapunov_rho.or(j.lyapunov_rho);
            j.clip = clip.or(j.clip);
            j.enforce_step_bound &= !no_step_bound;
            (Job::Run(j), common.out)
        }
        Command::Sweep {
            common,
            methods,
            log2_eta_min,
            log2_eta_max,
            horizon,
            batch,
            clip_radius,
            problem,
        } => {
            let mut j: SweepJob = load(common.config.as_deref())?;
            if !methods.is_empty() {
                j.methods = methods;
            }
            set(&mut j.log2_eta_min, log2_eta_min);
            set(&mut j.log2_eta_max, log2_eta_max);
            set(&mut j.horizon, horizon);
            if let Some(b) = batch {
                j.batch = (b > 0).then_some(b);
            }
            set(&mut j.clip_radius, clip_radius);
            if let Some(p) = problem {
                j.problem = parse_tagged(&p)?;
            }
            set(&mut j.seed, common.seed);
            (Job::Sweep(j), common.out)
        }
        Command::Dp {
            common,
            geometry,
            dims,
            epsilon,
            delta,
            n,
            g,
            c1,
            c2,
            horizon,
            max_horizon,
            replicas,
            beta,
        } => {
            let mut j: DpJob = load(common.config.as_deref())?;
            if let Some(g) = geometry {
                j.geometry = Some(g.parse::<DpGeometry>()?);
            }
            if !dims.is_empty() {
                j.dims = dims;
            }
            set(&mut j.epsilon, epsilon);
            set(&mut j.delta, delta);
            set(&mut j.n, n);
            j.g = g.or(j.g);
            set(&mut j.c1, c1);
            set(&mut j.c2, c2);
            j.horizon = horizon.or(j.horizon);
            set(&mut j.max_horizon, max_horizon);
            set(&mut j.replicas, replicas);
            set(&mut j.beta, beta);
            set(&mut j.seed, common.seed);
            (Job::Dp(j), common.out)
        }
        Command::Rl {
            common,
            mdp,
            gamma,
            slip,
            algo,
            eta,
            iterations,
            batch,
            horizon,
            record_every,
            target_gap,
            no_bfbe,
        } => {
            let mut j: RlJob = load(common.config.as_deref())?;
            match mdp {
                Some(m) => j.mdp = parse_mdp(&m, gamma, slip)?,
                None => match &mut j.mdp {
                    MdpSpec::Garnet { gamma: g, .. } => set(g, gamma),
                    MdpSpec::Gridworld { gamma: g, slip: s } => {
                        set(g, gamma);
                        set(s, slip);
                    }
                },
            }
            set(
                &mut j.algo,
                algo.as_deref().map(str::parse::<RlAlgo>).transpose()?,
            );
            if let Some(e) = eta {
                j.schedule = Some(parse_schedule(&e)?);
            }
            set(&mut j.iterations, iterations);
            if batch.is_some() || horizon.is_some() {
                let (h0, b0) = match j.gradient {
                    GradientSource::Sampled { horizon, batch } => (horizon, batch),
                    GradientSource::Exact => (0, 1),
                };
                let h = horizon.unwrap_or(if h0 > 0 {
                    h0
                } else {
                    smd_core::rl::default_horizon(mdp_gamma(&j.mdp))
                });
                j.gradient = GradientSource::Sampled {
                    horizon: h,
                    batch: batch.unwrap_or(b0),
                };
            }
            set(&mut j.record_every, record_every);
            j.target_gap = target_gap.or(j.target_gap);
            j.bfbe &= !no_bfbe;
            set(&mut j.seed, common.seed);
            (Job::Rl(j), common.out)
        }
        Command::ScheduleDump {
            common,
            schedule,
            horizon,
        } => {
            let from_file = common
                .config
                .as_deref()
                .map(|p| -> CliResult<ScheduleDumpJob> {
                    let text = std::fs::read_to_string(p)
                        .map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?;
                    toml::from_str(&text)
                        .map_err(|e| CliError::usage(format!("{}: {e}", p.display())))
                })
                .transpose()?;
            let schedule = match (schedule, &from_file) {
                (Some(s), _) => parse_schedule(&s)?,
                (None, Some(j)) => j.schedule.clone(),
                (None, None) => {
                    return Err(CliError::usage(
                        "schedule-dump needs --schedule or --config",
                    ))
                }
            };
            let horizon = match (horizon, &from_file) {
                (Some(h), _) => h,
                (None, Some(j)) => j.horizon,
                (None, None) => {
                    return Err(CliError::usage("schedule-dump needs --horizon or --config"))
                }
            };
            (
                Job::ScheduleDump(ScheduleDumpJob { schedule, horizon }),
                common.out,
            )
        }
        Command::Replay { .. } => unreachable!("replay is handled before resolution"),
    })
}

fn mdp_gamma(spec: &MdpSpec) -> f64 {
    match *spec {
        MdpSpec::Garnet { gamma, .. } | MdpSpec::Gridworld { gamma, .. } => gamma,
    }
}

/// Runs a resolved job, then writes its sidecar. Returns the lines to print.
pub fn run_job(job: &Job, out: &Path, threads: Option<usize>) -> CliResult<Vec<String>> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::usage(format!("thread pool: {e}")))?;
    let outcome = pool.install(|| commands::execute(job, out))?;
    Sidecar::new(job.clone(), out, outcome.notes).write(&sidecar_path(out))?;
    match outcome.failure {
        Some(e) => Err(e),
        None => Ok(outcome.summary),
    }
}

fn dispatch(cli: Cli) -> CliResult<Vec<String>> {
    match cli.command {
        Command::Replay { sidecar, out } => {
            let meta = Sidecar::read(&sidecar)?;
            let out = out.unwrap_or_else(|| PathBuf::from(&meta.output));
            run_job(&meta.job, &out, cli.threads)
        }
        command => {
            let (job, out) = resolve(command)?;
            let out = out.unwrap_or_else(|| PathBuf::from(format!("smd-{}.csv", job.command())));
            run_job(&job, &out, cli.threads)
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                exit::USAGE
            } else {
                exit::OK
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            exit::OK
        }
        Err(e) => {
            eprintln!("smd: {e}");
            e.code()
        }
    }
}
