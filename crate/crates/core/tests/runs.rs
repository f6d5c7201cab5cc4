use smd_core::problems::random_simplex_quadratic;
use smd_core::rl::{self, Policy};
use smd_core::smd::{replica_experiment, run_smd, ReplicaConfig, RunConfig};
use smd_core::{NoiseModel, Schedule, StochasticOracle};

fn noisy_run(seed: u64, replica: u64) -> Vec<f64> {
    let inst = random_simplex_quadratic(5, 1).unwrap();
    let noise = NoiseModel::GaussianIso { sigma: 0.5 };
    let mut oracle = StochasticOracle::new(inst.clone(), noise, seed, replica).unwrap();
    let cfg = RunConfig {
        horizon: 200,
        seed,
        replica,
        ..Default::default()
    };
    let rec = run_smd(
        &mut oracle,
        &Schedule::Constant {
            eta: 0.5 / inst.ell,
        },
        &cfg,
    )
    .unwrap();
    assert!(rec.ok());
    rec.final_point.as_slice().to_vec()
}

#[test]
fn runs_depend_only_on_seed_and_replica() {
    assert_eq!(noisy_run(3, 0), noisy_run(3, 0));
    assert_ne!(noisy_run(3, 0), noisy_run(3, 1));
    assert_ne!(noisy_run(3, 0), noisy_run(4, 0));
}

#[test]
fn replica_summaries_ignore_the_thread_count() {
    let inst = random_simplex_quadratic(4, 2).unwrap();
    let cfg = ReplicaConfig {
        noise: NoiseModel::GaussianIso { sigma: 0.2 },
        schedule: Schedule::Constant {
            eta: 0.5 / inst.ell,
        },
        horizon: 100,
        replicas: 8,
        beta: 0.25,
        bfbe_rho: None,
        seed: 1,
    };
    let one = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let four = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap();
    let a = one.install(|| replica_experiment(&inst, &cfg)).unwrap();
    let b = four.install(|| replica_experiment(&inst, &cfg)).unwrap();
    assert_eq!(a.values, b.values);
    assert_eq!(a.quantile, b.quantile);
}

#[test]
fn optimal_policy_beats_the_uniform_one() {
    let mdp = rl::garnet(6, 3, 2, 0.8, 5).unwrap();
    let (best, v_star) = rl::optimal_policy(&mdp).unwrap();
    let uniform = Policy::uniform(6, 3);
    // rewards: larger is better
    assert!(v_star >= rl::exact_value(&mdp, &uniform, &mdp.p0).unwrap() - 1e-12);
    assert!((rl::exact_value(&mdp, &best, &mdp.p0).unwrap() - v_star).abs() < 1e-9);
}
