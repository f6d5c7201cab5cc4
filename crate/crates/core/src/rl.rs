//! Tabular discounted MDPs and policy optimization in two geometries.
//!
//! Policies use the direct parametrization: a row-major `|S| x |A|` matrix
//! stored as a vector, one probability row per state. The optimization
//! problem is the minimization `V_p(pi) = -V+_p(pi)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dgf::{norms, DistanceGenerator};
use crate::problems::{CompositeInstance, FeasibleSet, Regularizer, SmoothObjective};
use crate::rng::{self, Purpose, Rng};
use crate::smd::Schedule;
use crate::{fosp, prox, Error, Result, Vector};

const STOCHASTIC_TOL: f64 = 1e-12;

/// Finite discounted MDP. `p[(s * A + a) * S + s']` is the probability of
/// moving from `s` to `s'` under action `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDMDP {
    pub states: usize,
    pub actions: usize,
    pub p: Vec<f64>,
    /// `|S| x |A|` rewards in `[0, 1]`.
    pub r: DMatrix<f64>,
    pub gamma: f64,
    /// Initial distribution of the objective.
    pub p0: Vector,
    /// Strictly positive distribution used for gradients.
    pub mu: Vector,
}

fn is_distribution(v: &[f64]) -> bool {
    v.iter().all(|&c| c >= 0.0 && c.is_finite())
        && (v.iter().sum::<f64>() - 1.0).abs() <= STOCHASTIC_TOL * v.len() as f64
}

impl TabularDMDP {
    pub fn new(
        states: usize,
        actions: usize,
        p: Vec<f64>,
        r: DMatrix<f64>,
        gamma: f64,
        p0: Vector,
        mu: Vector,
    ) -> Result<Self> {
        if states == 0 || actions == 0 {
            return Err(Error::invalid(
                "an MDP needs at least one state and one action",
            ));
        }
        Error::check_dim(states * actions * states, p.len())?;
        if r.shape() != (states, actions) {
            return Err(Error::invalid(format!(
                "reward matrix must be {states} x {actions}"
            )));
        }
        Error::check_dim(states, p0.len())?;
        Error::check_dim(states, mu.len())?;
        if !p.chunks(states).all(is_distribution) {
            return Err(Error::invalid(
                "transition rows must be probability vectors",
            ));
        }
        if r.iter().any(|&c| !(0.0..=1.0).contains(&c)) {
            return Err(Error::invalid("rewards must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::invalid(format!(
                "discount must lie in [0, 1), got {gamma}"
            )));
        }
        if !is_distribution(p0.as_slice())
            || !is_distribution(mu.as_slice())
            || mu.iter().any(|&c| c <= 0.0)
        {
            return Err(Error::invalid(
                "p0 must be a distribution and mu a strictly positive one",
            ));
        }
        Ok(TabularDMDP {
            states,
            actions,
            p,
            r,
            gamma,
            p0,
            mu,
        })
    }

    fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.actions + a) * self.states;
        &self.p[start..start + self.states]
    }

    pub fn policy_dim(&self) -> usize {
        self.states * self.actions
    }

    /// `P_pi` and `r_pi`.
    fn induced(&self, pi: &Policy) -> (DMatrix<f64>, DVector<f64>) {
        let (ns, na) = (self.states, self.actions);
        let mut p = DMatrix::zeros(ns, ns);
        let mut r = DVector::zeros(ns);
        for s in 0..ns {
            for a in 0..na {
                let w = pi.prob(s, a);
                if w == 0.0 {
                    continue;
                }
                r[s] += w * self.r[(s, a)];
                for (t, &q) in self.row(s, a).iter().enumerate() {
                    p[(s, t)] += w * q;
                }
            }
        }
        (p, r)
    }

    fn resolvent(&self, p_pi: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::identity(self.states, self.states) - p_pi * self.gamma
    }

    /// State values `v = (I - gamma P_pi)^{-1} r_pi`.
    pub fn state_values(&self, pi: &Policy) -> Result<Vector> {
        self.check_policy(pi)?;
        let (p, r) = self.induced(pi);
        let m = self.resolvent(&p);
        let v = m.clone().lu().solve(&r).ok_or(Error::Singular)?;
        let res = (&m * &v - &r).amax();
        if !(res <= 1e-10 * (1.0 + v.amax())) {
            return Err(Error::Solver {
                iterations: 1,
                residual: res,
            });
        }
        Ok(v)
    }

    /// `Q(s, a) = R(s, a) + gamma sum_s' P(s'|s, a) v(s')`.
    pub fn q_values(&self, v: &Vector) -> DMatrix<f64> {
        DMatrix::from_fn(self.states, self.actions, |s, a| {
            self.r[(s, a)]
                + self.gamma
                    * self
                        .row(s, a)
                        .iter()
                        .zip(v.iter())
                        .map(|(q, x)| q * x)
                        .sum::<f64>()
        })
    }

    /// Discounted visitation `dist' (I - gamma P_pi)^{-1}` (total mass `1/(1 - gamma)`).
    pub fn occupancy(&self, pi: &Policy, dist: &Vector) -> Result<Vector> {
        self.check_policy(pi)?;
        let (p, _) = self.induced(pi);
        let mt = self.resolvent(&p).transpose();
        mt.lu().solve(dist).ok_or(Error::Singular)
    }

    fn check_policy(&self, pi: &Policy) -> Result<()> {
        if pi.states != self.states || pi.actions != self.actions {
            return Err(Error::Dimension {
                expected: self.policy_dim(),
                got: pi.pi.len(),
            });
        }
        Ok(())
    }
}

/// Row-stochastic `|S| x |A|` policy stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub states: usize,
    pub actions: usize,
    pub pi: Vector,
}

impl Policy {
    pub fn from_vector(states: usize, actions: usize, pi: Vector) -> Result<Self> {
        Error::check_dim(states * actions, pi.len())?;
        if !pi.as_slice().chunks(actions).all(is_distribution) {
            return Err(Error::invalid("policy rows must be probability vectors"));
        }
        Ok(Policy {
            states,
            actions,
            pi,
        })
    }

    pub fn uniform(states: usize, actions: usize) -> Self {
        Policy {
            states,
            actions,
            pi: Vector::from_element(states * actions, 1.0 / actions as f64),
        }
    }

    /// Rows drawn uniformly from the simplex.
    pub fn random(states: usize, actions: usize, rng: &mut Rng) -> Self {
        let mut pi = Vector::from_fn(states * actions, |_, _| -(1.0 - rng.random::<f64>()).ln());
        for row in pi.as_mut_slice().chunks_mut(actions) {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|c| *c /= s);
        }
        Policy {
            states,
            actions,
            pi,
        }
    }

    pub fn deterministic(actions_taken: &[usize], actions: usize) -> Self {
        let states = actions_taken.len();
        let mut pi = Vector::zeros(states * actions);
        for (s, &a) in actions_taken.iter().enumerate() {
            pi[s * actions + a] = 1.0;
        }
        Policy {
            states,
            actions,
            pi,
        }
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.pi[s * self.actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.pi.as_slice()[s * self.actions..(s + 1) * self.actions]
    }
}

/// `V+_dist(pi) = <dist, v>` (a reward, so larger is better).
pub fn exact_value(mdp: &TabularDMDP, pi: &Policy, dist: &Vector) -> Result<f64> {
    Ok(dist.dot(&mdp.state_values(pi)?))
}

/// Gradient of the minimization objective `-V+_mu` with respect to the
/// policy entries: `-d(s) Q(s, a)` with `d` the discounted visitation from `mu`.
pub fn exact_policy_gradient(mdp: &TabularDMDP, pi: &Policy, mu: &Vector) -> Result<Vector> {
    let v = mdp.state_values(pi)?;
    let q = mdp.q_values(&v);
    let d = mdp.occupancy(pi, mu)?;
    Ok(Vector::from_fn(mdp.policy_dim(), |i, _| {
        -d[i / mdp.actions] * q[(i / mdp.actions, i % mdp.actions)]
    }))
}

/// Monte Carlo gradient with its empirical spread.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledGradient {
    pub grad: Vector,
    /// `E ||g_hat - E g_hat||^2` of the batch mean in the Frobenius norm.
    pub var_frobenius: f64,
    /// The same in the `(2, inf)` norm.
    pub var_2inf: f64,
}

/// Truncation horizon making the truncation bias below `1e-3 (1 - gamma)` in value.
pub fn default_horizon(gamma: f64) -> usize {
    if gamma <= 0.0 {
        return 1;
    }
    ((1e-3 * (1.0 - gamma)).ln() / gamma.ln()).ceil().max(1.0) as usize
}

fn sample_from(rng: &mut Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Exploratory Monte Carlo estimate of [`exact_policy_gradient`].
///
/// Each episode draws a state from the discounted visitation of `mu`
/// (geometric stopping with continuation probability `gamma`), a uniform
/// action, and an undiscounted return under geometric stopping; both stages
/// are truncated at `horizon` steps. The estimate is `-|A| Q_hat / (1 - gamma)`
/// at the sampled entry, which is unbiased up to a truncation error of order
/// `gamma^H / (1 - gamma)^2` and needs no positivity of the policy.
pub fn sampled_policy_gradient(
    mdp: &TabularDMDP,
    pi: &Policy,
    mu: &Vector,
    horizon: usize,
    batch: usize,
    rng: &mut Rng,
) -> Result<SampledGradient> {
    mdp.check_policy(pi)?;
    Error::check_dim(mdp.states, mu.len())?;
    if horizon == 0 || batch == 0 {
        return Err(Error::invalid("horizon and batch must be at least 1"));
    }
    let (ns, na) = (mdp.states, mdp.actions);
    let start =
        WeightedIndex::new(mu.as_slice()).map_err(|e| Error::invalid(format!("mu: {e}")))?;
    let scale = na as f64 / (1.0 - mdp.gamma);
    let mut episodes: Vec<(usize, f64)> = Vec::with_capacity(batch);
    for _ in 0..batch {
        let mut s = start.sample(rng);
        for _ in 0..horizon {
            if rng.random::<f64>() >= mdp.gamma {
                break;
            }
            let act = sample_from(rng, pi.row(s));
            s = sample_from(rng, mdp.row(s, act));
        }
        let a = rng.random_range(0..na);
        let mut ret = mdp.r[(s, a)];
        let mut cur = sample_from(rng, mdp.row(s, a));
        for _ in 1..horizon {
            if rng.random::<f64>() >= mdp.gamma {
                break;
            }
            let act = sample_from(rng, pi.row(cur));
            ret += mdp.r[(cur, act)];
            cur = sample_from(rng, mdp.row(cur, act));
        }
        episodes.push((s * na + a, -scale * ret));
    }
    let b = batch as f64;
    let mut grad = Vector::zeros(ns * na);
    for &(i, v) in &episodes {
        grad[i] += v / b;
    }
    // each episode estimate is one-hot, so only one row of e - m differs from -m
    let row_max = |row: &[f64]| row.iter().fold(0.0_f64, |x, c| x.max(c.abs()));
    let base: Vec<f64> = grad
        .as_slice()
        .chunks(na)
        .map(|r| row_max(r).powi(2))
        .collect();
    let base_total: f64 = base.iter().sum();
    let (mut fro, mut inf) = (0.0, 0.0);
    for &(i, v) in &episodes {
        let s = i / na;
        let mut row = grad.as_slice()[s * na..(s + 1) * na].to_vec();
        row[i % na] -= v;
        fro += grad.norm_squared() - grad[i] * grad[i] + (v - grad[i]).powi(2);
        inf += base_total - base[s] + row_max(&row).powi(2);
    }
    // variance of the batch mean
    let var_frobenius = fro / (b * b);
    let var_2inf = inf / (b * b);
    Ok(SampledGradient {
        grad,
        var_frobenius,
        var_2inf,
    })
}

/// Projected step `Proj(pi - eta grad)` on every row.
pub fn pspg_step(pi: &Policy, grad: &Vector, eta: f64) -> Result<Policy> {
    Error::check_dim(pi.pi.len(), grad.len())?;
    let v = &pi.pi - grad * eta;
    let mut out = Vector::zeros(v.len());
    for (s, row) in v.as_slice().chunks(pi.actions).enumerate() {
        let p = prox::simplex_project(&Vector::from_row_slice(row));
        out.rows_mut(s * pi.actions, pi.actions).copy_from(&p);
    }
    Ok(Policy { pi: out, ..*pi })
}

/// Multiplicative step `pi * exp(-eta grad)` renormalized per row.
pub fn smpg_step(pi: &Policy, grad: &Vector, eta: f64) -> Result<Policy> {
    Ok(Policy {
        pi: prox::entropy_step(&pi.pi, grad, eta, pi.actions)?,
        ..*pi
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessConstants {
    /// Frobenius smoothness `2 gamma |A| / (1 - gamma)^3`.
    pub l_f: f64,
    /// `(2,1) -> (2,inf)` smoothness `2 gamma / (1 - gamma)^3`.
    pub l_21: f64,
}

pub fn smoothness_constants(mdp: &TabularDMDP) -> SmoothnessConstants {
    let l_21 = 2.0 * mdp.gamma / (1.0 - mdp.gamma).powi(3);
    SmoothnessConstants {
        l_f: l_21 * mdp.actions as f64,
        l_21,
    }
}

/// `(||dV - dV'||_{2,inf} / (L_21 ||pi - pi'||_{2,1}), ||dV - dV'||_F / (L_F ||pi - pi'||_F))`.
/// Both ratios are at most one when the smoothness bounds hold.
pub fn smoothness_ratios(mdp: &TabularDMDP, a: &Policy, b: &Policy) -> Result<(f64, f64)> {
    let c = smoothness_constants(mdp);
    let diff = exact_policy_gradient(mdp, a, &mdp.mu)? - exact_policy_gradient(mdp, b, &mdp.mu)?;
    let dpi = &a.pi - &b.pi;
    let na = mdp.actions;
    let ratio = |num: f64, den: f64| if num == 0.0 { 0.0 } else { num / den };
    Ok((
        ratio(norms::l2inf(&diff, na), c.l_21 * norms::l21(&dpi, na)),
        ratio(diff.norm(), c.l_f * dpi.norm()),
    ))
}

/// Optimal values by value iteration, stopped when the sup-norm update is
/// below `tol`, and the greedy policy (lowest index among near-ties).
pub fn value_iteration(mdp: &TabularDMDP, tol: f64) -> (Vector, Policy) {
    let mut v = Vector::zeros(mdp.states);
    let max_iters = if mdp.gamma == 0.0 {
        1
    } else {
        ((tol * (1.0 - mdp.gamma)).ln() / mdp.gamma.ln()).ceil() as usize + 10
    };
    for _ in 0..max_iters.max(1) * 2 {
        let q = mdp.q_values(&v);
        let next = Vector::from_fn(mdp.states, |s, _| q.row(s).max());
        let delta = (&next - &v).amax();
        v = next;
        if delta <= tol {
            break;
        }
    }
    let q = mdp.q_values(&v);
    let greedy: Vec<usize> = (0..mdp.states)
        .map(|s| {
            let best = q.row(s).max();
            (0..mdp.actions)
                .find(|&a| q[(s, a)] >= best - 1e-10 * (1.0 + best.abs()))
                .unwrap_or(0)
        })
        .collect();
    (v, Policy::deterministic(&greedy, mdp.actions))
}

/// Optimal policy and `V+_p*` evaluated exactly for that policy.
pub fn optimal_policy(mdp: &TabularDMDP) -> Result<(Policy, f64)> {
    let (_, pi) = value_iteration(mdp, 1e-12);
    let v = exact_value(mdp, &pi, &mdp.p0)?;
    Ok((pi, v))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradDominationReport {
    /// `V_p(pi) - V_p*` (minimization sign).
    pub gap: f64,
    /// `max_{pi'} <grad V_mu(pi), pi - pi'>`.
    pub fw_gap: f64,
    /// `||d_p(pi*) / mu||_inf / (1 - gamma)` with `d_p` normalized.
    pub constant: f64,
    pub holds: bool,
}

/// Evaluates `V_p(pi) - V_p* <= C max_{pi'} <grad V_mu(pi), pi - pi'>`.
pub fn grad_domination_check(mdp: &TabularDMDP, pi: &Policy) -> Result<GradDominationReport> {
    let (star, v_star) = optimal_policy(mdp)?;
    let gap = v_star - exact_value(mdp, pi, &mdp.p0)?;
    let g = exact_policy_gradient(mdp, pi, &mdp.mu)?;
    let fw: f64 = g
        .as_slice()
        .chunks(mdp.actions)
        .zip(pi.pi.as_slice().chunks(mdp.actions))
        .map(|(gr, pr)| {
            gr.iter().zip(pr).map(|(a, b)| a * b).sum::<f64>()
                - gr.iter().fold(f64::INFINITY, |m, &c| m.min(c))
        })
        .sum();
    let d = mdp.occupancy(&star, &mdp.p0)? * (1.0 - mdp.gamma);
    let ratio = d
        .iter()
        .zip(mdp.mu.iter())
        .map(|(a, b)| a / b)
        .fold(0.0, f64::max);
    let constant = ratio / (1.0 - mdp.gamma);
    let holds = gap <= constant * fw + 1e-9 * (1.0 + gap.abs());
    Ok(GradDominationReport {
        gap,
        fw_gap: fw,
        constant,
        holds,
    })
}

/// Garnet-style random MDP: every state-action pair reaches `branching`
/// distinct states with random probabilities, rewards are uniform on `[0, 1]`,
/// and both `p0` and `mu` are uniform.
pub fn garnet(
    states: usize,
    actions: usize,
    branching: usize,
    gamma: f64,
    seed: u64,
) -> Result<TabularDMDP> {
    if branching == 0 || branching > states {
        return Err(Error::invalid(format!(
            "branching must lie in [1, {states}]"
        )));
    }
    let mut rng = rng::stream(seed, 0, Purpose::Data);
    let mut p = vec![0.0; states * actions * states];
    for sa in 0..states * actions {
        let targets = rand::seq::index::sample(&mut rng, states, branching);
        let mut cuts: Vec<f64> = (0..branching - 1).map(|_| rng.random::<f64>()).collect();
        cuts.sort_by(f64::total_cmp);
        cuts.insert(0, 0.0);
        cuts.push(1.0);
        for (k, t) in targets.iter().enumerate() {
            p[sa * states + t] += cuts[k + 1] - cuts[k];
        }
    }
    let r = DMatrix::from_fn(states, actions, |_, _| rng.random::<f64>());
    let u = Vector::from_element(states, 1.0 / states as f64);
    TabularDMDP::new(states, actions, p, r, gamma, u.clone(), u)
}

const FOUR_ROOMS: [&str; 9] = [
    "#########",
    "#...#...#",
    "#.......#",
    "#...#...#",
    "##.###.##",
    "#...#...#",
    "#.......#",
    "#...#..G#",
    "#########",
];

/// Four-room gridworld with actions up, down, left, right. A move goes in a
/// uniformly random other direction with probability `slip`, and moves into
/// walls stay put. The goal is absorbing and pays 1 per step. `p0` is the
/// top-left cell and `mu` is uniform.
pub fn gridworld(gamma: f64, slip: f64) -> Result<TabularDMDP> {
    if !(0.0..=1.0).contains(&slip) {
        return Err(Error::invalid("slip probability must lie in [0, 1]"));
    }
    let cells: Vec<(usize, usize)> = FOUR_ROOMS
        .iter()
        .enumerate()
        .flat_map(|(i, row)| {
            row.bytes()
                .enumerate()
                .filter(|&(_, c)| c != b'#')
                .map(move |(j, _)| (i, j))
        })
        .collect();
    let index = |i: usize, j: usize| cells.iter().position(|&c| c == (i, j));
    let goal = FOUR_ROOMS
        .iter()
        .enumerate()
        .find_map(|(i, row)| row.find('G').map(|j| (i, j)))
        .expect("goal cell");
    let goal = index(goal.0, goal.1).expect("goal is free");
    let ns = cells.len();
    let na = 4;
    let moves: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
    let mut p = vec![0.0; ns * na * ns];
    let mut r = DMatrix::zeros(ns, na);
    for (s, &(i, j)) in cells.iter().enumerate() {
        for a in 0..na {
            let row = &mut p[(s * na + a) * ns..(s * na + a + 1) * ns];
            if s == goal {
                row[s] = 1.0;
                r[(s, a)] = 1.0;
                continue;
            }
            for (m, &(di, dj)) in moves.iter().enumerate() {
                let w = if m == a { 1.0 - slip } else { slip / 3.0 };
                let target =
                    index((i as isize + di) as usize, (j as isize + dj) as usize).unwrap_or(s);
                row[target] += w;
            }
        }
    }
    let mut p0 = Vector::zeros(ns);
    p0[0] = 1.0;
    TabularDMDP::new(
        ns,
        na,
        p,
        r,
        gamma,
        p0,
        Vector::from_element(ns, 1.0 / ns as f64),
    )
}

/// `-V+_dist` as a smooth objective over flattened policies.
#[derive(Debug, Clone)]
pub struct PolicyObjective {
    pub mdp: Arc<TabularDMDP>,
}

impl SmoothObjective for PolicyObjective {
    fn dim(&self) -> usize {
        self.mdp.policy_dim()
    }

    fn value(&self, x: &Vector) -> f64 {
        let pi = Policy {
            states: self.mdp.states,
            actions: self.mdp.actions,
            pi: x.clone(),
        };
        exact_value(&self.mdp, &pi, &self.mdp.mu)
            .map(|v| -v)
            .unwrap_or(f64::NAN)
    }

    fn grad(&self, x: &Vector) -> Vector {
        let pi = Policy {
            states: self.mdp.states,
            actions: self.mdp.actions,
            pi: x.clone(),
        };
        exact_policy_gradient(&self.mdp, &pi, &self.mdp.mu)
            .unwrap_or_else(|_| Vector::from_element(x.len(), f64::NAN))
    }

    fn minibatch_grad(&self, _x: &Vector, _batch: usize, _rng: &mut Rng) -> Option<Vector> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RlAlgo {
    /// Projected policy gradient (Euclidean geometry).
    Pspg,
    /// Mirror policy gradient (entropy geometry).
    Smpg,
}

impl std::str::FromStr for RlAlgo {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pspg" => Ok(RlAlgo::Pspg),
            "smpg" => Ok(RlAlgo::Smpg),
            _ => Err(Error::invalid(format!("unknown algorithm {s:?}"))),
        }
    }
}

/// The policy problem `min -V+_mu(pi)` over the product of simplices, in the
/// geometry of `algo` with its smoothness constant.
pub fn policy_instance(mdp: &TabularDMDP, algo: RlAlgo) -> Result<CompositeInstance> {
    let c = smoothness_constants(mdp);
    let (rows, cols) = (mdp.states, mdp.actions);
    let (dgf, ell) = match algo {
        RlAlgo::Pspg => (DistanceGenerator::Euclidean, c.l_f),
        RlAlgo::Smpg => (
            DistanceGenerator::ProductSimplexEntropy { rows, cols },
            c.l_21,
        ),
    };
    CompositeInstance::new(
        format!("policy({}x{}, gamma={})", rows, cols, mdp.gamma),
        Arc::new(PolicyObjective {
            mdp: Arc::new(mdp.clone()),
        }),
        Regularizer::Zero,
        FeasibleSet::ProductSimplex { rows, cols },
        dgf,
        ell,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GradientSource {
    Exact,
    Sampled { horizon: usize, batch: usize },
}

#[derive(Debug, Clone)]
pub struct RlConfig {
    pub algo: RlAlgo,
    pub schedule: Schedule,
    pub iterations: usize,
    pub gradient: GradientSource,
    pub seed: u64,
    /// Record a row every this many iterations (and at the end).
    pub record_every: usize,
    /// Stop once `V_p - V_p*` is at most this.
    pub target_gap: Option<f64>,
    /// Also compute the BFBE (with `rho = 3 ell`) at recorded rows.
    pub bfbe: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RlRow {
    pub t: usize,
    /// `V_p(pi_t)` in the minimization sign.
    pub value: f64,
    pub gap: f64,
    pub bfbe: Option<f64>,
    pub var_frobenius: Option<f64>,
    pub var_2inf: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RlRecord {
    pub rows: Vec<RlRow>,
    pub policy: Policy,
    pub optimal_value: f64,
    /// First iteration at which the target gap was reached.
    pub reached_target: Option<usize>,
}

/// Runs P-SPG or SMPG from the uniform policy.
pub fn rl_run(mdp: &TabularDMDP, cfg: &RlConfig) -> Result<RlRecord> {
    cfg.schedule.validate(None)?;
    let inst = policy_instance(mdp, cfg.algo)?;
    let rho = if inst.ell > 0.0 { 3.0 * inst.ell } else { 1.0 };
    let (_, v_star) = optimal_policy(mdp)?;
    let mut rng = rng::stream(cfg.seed, 0, Purpose::Episodes);
    let mut pi = Policy::uniform(mdp.states, mdp.actions);
    let every = cfg.record_every.max(1);
    let mut rows = Vec::new();
    let mut reached = None;
    let mut last_var = (None, None);
    let mut record = |pi: &Policy, t: usize, var: (Option<f64>, Option<f64>)| -> Result<f64> {
        let value = -exact_value(mdp, pi, &mdp.p0)?;
        let gap = value + v_star;
        let bfbe = if cfg.bfbe {
            Some(fosp::bfbe(&pi.pi, rho, &inst)?)
        } else {
            None
        };
        rows.push(RlRow {
            t,
            value,
            gap,
            bfbe,
            var_frobenius: var.0,
            var_2inf: var.1,
        });
        Ok(gap)
    };
    for t in 0..=cfg.iterations {
        let gap_now = if t % every == 0 || t == cfg.iterations || cfg.target_gap.is_some() {
            let value = -exact_value(mdp, &pi, &mdp.p0)?;
            Some(value + v_star)
        } else {
            None
        };
        if t % every == 0 || t == cfg.iterations {
            record(&pi, t, last_var)?;
        }
        if let (Some(target), Some(gap)) = (cfg.target_gap, gap_now) {
            if gap <= target {
                reached = Some(t);
                if t % every != 0 && t != cfg.iterations {
                    record(&pi, t, last_var)?;
                }
                break;
            }
        }
        if t == cfg.iterations {
            break;
        }
        let grad = match cfg.gradient {
            GradientSource::Exact => exact_policy_gradient(mdp, &pi, &mdp.mu)?,
            GradientSource::Sampled { horizon, batch } => {
                let s = sampled_policy_gradient(mdp, &pi, &mdp.mu, horizon, batch, &mut rng)?;
                last_var = (Some(s.var_frobenius), Some(s.var_2inf));
                s.grad
            }
        };
        let eta = cfg.schedule.eta(t);
        pi = match cfg.algo {
            RlAlgo::Pspg => pspg_step(&pi, &grad, eta)?,
            RlAlgo::Smpg => smpg_step(&pi, &grad, eta)?,
        };
    }
    Ok(RlRecord {
        rows,
        policy: pi,
        optimal_value: -v_star,
        reached_target: reached,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bandit(gamma: f64) -> TabularDMDP {
        let r = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let one = Vector::from_element(1, 1.0);
        TabularDMDP::new(1, 2, vec![1.0, 1.0], r, gamma, one.clone(), one).unwrap()
    }

    #[test]
    fn value_examples() {
        let m = bandit(0.5);
        let pi = Policy::uniform(1, 2);
        assert_relative_eq!(exact_value(&m, &pi, &m.p0).unwrap(), 1.0, epsilon = 1e-14);

        let g = garnet(4, 3, 2, 0.0, 1).unwrap();
        let pi = Policy::random(4, 3, &mut rng::stream(1, 0, Purpose::Sampling));
        let want: f64 = (0..4)
            .map(|s| g.p0[s] * (0..3).map(|a| pi.prob(s, a) * g.r[(s, a)]).sum::<f64>())
            .sum();
        assert_relative_eq!(exact_value(&g, &pi, &g.p0).unwrap(), want, epsilon = 1e-14);
        let grad = exact_policy_gradient(&g, &pi, &g.mu).unwrap();
        for s in 0..4 {
            for a in 0..3 {
                assert_relative_eq!(grad[s * 3 + a], -g.mu[s] * g.r[(s, a)], epsilon = 1e-14);
            }
        }

        let mut ones = garnet(3, 2, 2, 0.8, 2).unwrap();
        ones.r.fill(1.0);
        let pi = Policy::random(3, 2, &mut rng::stream(2, 0, Purpose::Sampling));
        assert_relative_eq!(
            exact_value(&ones, &pi, &ones.p0).unwrap(),
            5.0,
            epsilon = 1e-12
        );
        let grad = exact_policy_gradient(&ones, &pi, &ones.mu).unwrap();
        for s in 0..3 {
            assert_relative_eq!(grad[2 * s], grad[2 * s + 1], epsilon = 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..5 {
            let m = garnet(3, 2, 2, 0.7, seed).unwrap();
            let pi = Policy::random(3, 2, &mut rng::stream(seed, 1, Purpose::Sampling));
            let g = exact_policy_gradient(&m, &pi, &m.mu).unwrap();
            let h = 1e-6;
            for i in 0..m.policy_dim() {
                let mut e = Vector::zeros(m.policy_dim());
                e[i] = h;
                let f = |p: Vector| {
                    -exact_value(
                        &m,
                        &Policy {
                            pi: p,
                            ..pi.clone()
                        },
                        &m.mu,
                    )
                    .unwrap()
                };
                let fd = (f(&pi.pi + &e) - f(&pi.pi - &e)) / (2.0 * h);
                assert!(
                    (fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1.0),
                    "{fd} vs {}",
                    g[i]
                );
            }
        }
    }

    #[test]
    fn smoothness_constant_examples() {
        let mut m = garnet(2, 4, 1, 0.9, 0).unwrap();
        let c = smoothness_constants(&m);
        assert_relative_eq!(c.l_f, 7200.0, max_relative = 1e-12);
        assert_relative_eq!(c.l_21, c.l_f / 4.0);
        m.gamma = 0.0;
        assert_eq!(smoothness_constants(&m).l_f, 0.0);
    }

    #[test]
    fn step_examples() {
        let pi = Policy::from_vector(1, 2, Vector::from_row_slice(&[0.5, 0.5])).unwrap();
        let zero = Vector::zeros(2);
        assert_eq!(pspg_step(&pi, &zero, 1.0).unwrap(), pi);
        assert_eq!(smpg_step(&pi, &zero, 1.0).unwrap(), pi);
        let g = Vector::from_row_slice(&[2f64.ln(), 0.0]);
        let next = smpg_step(&pi, &g, 1.0).unwrap();
        assert_relative_eq!(next.pi[0], 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(next.pi[1], 2.0 / 3.0, epsilon = 1e-15);
        // (0.5, 0.5) - (0.3, -0.1) = (0.2, 0.6) projects to (0.3, 0.7)
        let next = pspg_step(&pi, &Vector::from_row_slice(&[0.3, -0.1]), 1.0).unwrap();
        assert_relative_eq!(next.pi[0], 0.3, epsilon = 1e-15);
        let far = pspg_step(&pi, &Vector::from_row_slice(&[1.0, 2.0]), 1e3).unwrap();
        assert_eq!(far.pi.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn sampled_gradient_is_close_and_reproducible() {
        let m = garnet(3, 2, 2, 0.6, 4).unwrap();
        let pi = Policy::random(3, 2, &mut rng::stream(4, 0, Purpose::Sampling));
        let exact = exact_policy_gradient(&m, &pi, &m.mu).unwrap();
        let h = 60;
        let est = sampled_policy_gradient(
            &m,
            &pi,
            &m.mu,
            h,
            40_000,
            &mut rng::stream(7, 0, Purpose::Episodes),
        )
        .unwrap();
        let again = sampled_policy_gradient(
            &m,
            &pi,
            &m.mu,
            h,
            40_000,
            &mut rng::stream(7, 0, Purpose::Episodes),
        )
        .unwrap();
        assert_eq!(est, again);
        let sd = est.var_frobenius.sqrt();
        assert!(
            (&est.grad - &exact).norm() <= 4.0 * sd,
            "{} vs sd {sd}",
            (&est.grad - &exact).norm()
        );
        assert!(est.var_2inf <= est.var_frobenius + 1e-12);

        let single = TabularDMDP::new(
            1,
            1,
            vec![1.0],
            DMatrix::from_element(1, 1, 0.5),
            0.5,
            Vector::from_element(1, 1.0),
            Vector::from_element(1, 1.0),
        )
        .unwrap();
        let est = sampled_policy_gradient(
            &single,
            &Policy::uniform(1, 1),
            &single.mu,
            1,
            100,
            &mut rng::stream(0, 0, Purpose::Episodes),
        )
        .unwrap();
        assert!(est.var_frobenius < 1e-25);
    }

    #[test]
    fn optimal_policy_dominates() {
        let m = garnet(5, 3, 2, 0.9, 3).unwrap();
        let (star, v) = optimal_policy(&m).unwrap();
        let mut rng = rng::stream(3, 0, Purpose::Sampling);
        for _ in 0..20 {
            let pi = Policy::random(5, 3, &mut rng);
            assert!(exact_value(&m, &pi, &m.p0).unwrap() <= v + 1e-10);
            let rep = grad_domination_check(&m, &pi).unwrap();
            assert!(rep.holds, "{rep:?}");
        }
        let rep = grad_domination_check(&m, &star).unwrap();
        assert!(rep.gap.abs() < 1e-9);
    }

    #[test]
    fn exact_runs_descend() {
        let m = garnet(4, 3, 2, 0.8, 5).unwrap();
        let c = smoothness_constants(&m);
        for (algo, ell) in [(RlAlgo::Pspg, c.l_f), (RlAlgo::Smpg, c.l_21)] {
            let cfg = RlConfig {
                algo,
                schedule: Schedule::Constant { eta: 0.5 / ell },
                iterations: 100,
                gradient: GradientSource::Exact,
                seed: 0,
                record_every: 1,
                target_gap: None,
                bfbe: false,
            };
            let rec = rl_run(&m, &cfg).unwrap();
            for w in rec.rows.windows(2) {
                assert!(w[1].value <= w[0].value + 1e-12, "{algo:?}");
            }
            assert!(rec
                .policy
                .pi
                .iter()
                .all(|&p| algo == RlAlgo::Pspg || p > 0.0));
        }
    }

    #[test]
    fn gridworld_is_valid() {
        let g = gridworld(0.9, 0.1).unwrap();
        assert_eq!(g.actions, 4);
        assert_eq!(g.states, 40);
        let (_, v) = optimal_policy(&g).unwrap();
        assert!(v > 0.0 && v < 10.0);
    }
}
