use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng as _;
use rand_distr::StandardNormal;

use super::{CompositeInstance, FeasibleSet, Regularizer, SmoothObjective};
use crate::dgf::DistanceGenerator;
use crate::rng::{self, Purpose, Rng};
use crate::{prox, Error, Result, Vector};

/// Curvature of a quadratic objective.
#[derive(Debug, Clone, PartialEq)]
pub enum Curvature {
    Diagonal(Vec<f64>),
    /// Symmetric dense matrix.
    Dense(DMatrix<f64>),
}

impl Curvature {
    pub fn dim(&self) -> usize {
        match self {
            Curvature::Diagonal(d) => d.len(),
            Curvature::Dense(a) => a.nrows(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Curvature::Diagonal(d) => {
                if d.iter().any(|c| !c.is_finite()) {
                    return Err(Error::invalid("curvature must be finite"));
                }
            }
            Curvature::Dense(a) => {
                if !a.is_square() {
                    return Err(Error::invalid("curvature matrix must be square"));
                }
                if a.iter().any(|c| !c.is_finite()) {
                    return Err(Error::invalid("curvature must be finite"));
                }
                let scale = a.amax().max(1.0);
                if (a - a.transpose()).amax() > 1e-12 * scale {
                    return Err(Error::invalid("curvature matrix must be symmetric"));
                }
            }
        }
        Ok(())
    }

    /// Largest absolute eigenvalue.
    pub fn operator_norm(&self) -> f64 {
        match self {
            Curvature::Diagonal(d) => d.iter().fold(0.0_f64, |m, c| m.max(c.abs())),
            Curvature::Dense(a) => SymmetricEigen::new(a.clone())
                .eigenvalues
                .iter()
                .fold(0.0_f64, |m, c| m.max(c.abs())),
        }
    }

    /// Largest absolute entry, the l1 -> l_inf operator norm.
    pub fn max_abs_entry(&self) -> f64 {
        match self {
            Curvature::Diagonal(d) => d.iter().fold(0.0_f64, |m, c| m.max(c.abs())),
            Curvature::Dense(a) => a.amax(),
        }
    }

    fn apply(&self, x: &Vector) -> Vector {
        match self {
            Curvature::Diagonal(d) => {
                Vector::from_iterator(x.len(), x.iter().zip(d).map(|(a, b)| a * b))
            }
            Curvature::Dense(a) => a * x,
        }
    }
}

/// `F(x) = x^T A x / 2 + <q, x>`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub curvature: Curvature,
    pub linear: Vector,
}

impl Quadratic {
    pub fn new(curvature: Curvature, linear: Option<Vector>) -> Result<Self> {
        curvature.validate()?;
        let d = curvature.dim();
        let linear = linear.unwrap_or_else(|| Vector::zeros(d));
        Error::check_dim(d, linear.len())?;
        Ok(Quadratic { curvature, linear })
    }
}

impl SmoothObjective for Quadratic {
    fn dim(&self) -> usize {
        self.linear.len()
    }

    fn value(&self, x: &Vector) -> f64 {
        0.5 * x.dot(&self.curvature.apply(x)) + self.linear.dot(x)
    }

    fn grad(&self, x: &Vector) -> Vector {
        self.curvature.apply(x) + &self.linear
    }
}

/// Euclidean quadratic plus weighted l1 norm over `feasible`, with `ell` the
/// operator norm of the curvature. When the curvature is diagonal and the set
/// is a box (or the whole space) the problem separates and its optimal value is
/// computed exactly.
pub fn make_quadratic_l1(
    curvature: Curvature,
    linear: Option<Vector>,
    l1_weight: f64,
    feasible: FeasibleSet,
) -> Result<CompositeInstance> {
    let objective = Quadratic::new(curvature, linear)?;
    if !matches!(feasible, FeasibleSet::AllSpace | FeasibleSet::Box { .. }) {
        return Err(Error::invalid(
            "quadratic+l1 instances live on a box or the whole space",
        ));
    }
    let ell = objective.curvature.operator_norm();
    let phi_star = separable_optimum(&objective, l1_weight, &feasible);
    let mut inst = CompositeInstance::new(
        "quadratic_l1",
        Arc::new(objective),
        Regularizer::l1(l1_weight)?,
        feasible,
        DistanceGenerator::Euclidean,
        ell,
    )?;
    if let Some(v) = phi_star {
        inst = inst.with_phi_star(v, "exact: separable one-dimensional minimization");
    }
    Ok(inst)
}

fn separable_optimum(obj: &Quadratic, w: f64, feasible: &FeasibleSet) -> Option<f64> {
    let Curvature::Diagonal(diag) = &obj.curvature else {
        return None;
    };
    let d = diag.len();
    let (lo, hi) = match feasible {
        FeasibleSet::AllSpace => (
            Vector::from_element(d, f64::NEG_INFINITY),
            Vector::from_element(d, f64::INFINITY),
        ),
        FeasibleSet::Box { lo, hi } => (lo.clone(), hi.clone()),
        _ => return None,
    };
    let mut total = 0.0;
    for i in 0..d {
        let (a, q) = (diag[i], obj.linear[i]);
        let h = |x: f64| 0.5 * a * x * x + q * x + w * x.abs();
        // unbounded below along an infinite arm
        if hi[i] == f64::INFINITY && (a < 0.0 || (a == 0.0 && q + w < 0.0)) {
            return None;
        }
        if lo[i] == f64::NEG_INFINITY && (a < 0.0 || (a == 0.0 && q - w > 0.0)) {
            return None;
        }
        let mut cands = vec![lo[i], hi[i], 0.0];
        if a != 0.0 {
            cands.push(-(q + w) / a);
            cands.push(-(q - w) / a);
        }
        let best = cands
            .into_iter()
            .filter(|c| c.is_finite())
            .map(|c| c.clamp(lo[i], hi[i]))
            .map(h)
            .fold(f64::INFINITY, f64::min);
        total += best;
    }
    Some(total)
}

/// `F(x) = x^2/2`, `r(x) = |x|` on `[0, 1]`: BFBE is not dominated by the
/// gradient mapping on this instance.
pub fn lemma2_instance() -> CompositeInstance {
    let feasible = FeasibleSet::new_box(Vector::from_element(1, 0.0), Vector::from_element(1, 1.0))
        .expect("valid box");
    let mut inst = make_quadratic_l1(Curvature::Diagonal(vec![1.0]), None, 1.0, feasible)
        .expect("valid instance");
    inst.name = "lemma2".into();
    inst
}

/// Dense random instance for the sandwich checks: symmetric Gaussian
/// curvature (possibly indefinite), Gaussian linear term, l1 weight in
/// `[0, 1)`, box `[-1, 1]^d`.
pub fn random_quadratic_l1(dim: usize, seed: u64) -> Result<CompositeInstance> {
    if dim == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    let mut rng = rng::stream(seed, 0, Purpose::Data);
    let b = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let a = (&b + b.transpose()) * 0.5;
    let q = Vector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let w = rng.random::<f64>();
    let feasible = FeasibleSet::new_box(
        Vector::from_element(dim, -1.0),
        Vector::from_element(dim, 1.0),
    )?;
    let mut inst = make_quadratic_l1(Curvature::Dense(a), Some(q), w, feasible)?;
    inst.name = format!("random_quadratic_l1(d={dim},seed={seed})");
    Ok(inst)
}

/// `F(x) = x^T A x / 2 + <q, x>` on the simplex in entropy geometry, with
/// `ell = max_ij |A_ij|` (l1-smoothness plus Pinsker). For `d <= 12` the
/// optimal value is found by enumerating supports.
pub fn make_simplex_quadratic(a: DMatrix<f64>, q: Vector) -> Result<CompositeInstance> {
    let d = q.len();
    let objective = Quadratic::new(Curvature::Dense(a), Some(q))?;
    let ell = objective.curvature.max_abs_entry();
    let phi_star = if d <= 12 {
        Some(simplex_optimum(&objective))
    } else {
        None
    };
    let mut inst = CompositeInstance::new(
        "simplex_quadratic",
        Arc::new(objective),
        Regularizer::Zero,
        FeasibleSet::Simplex(d),
        DistanceGenerator::SimplexEntropy { dim: d },
        ell,
    )?;
    if let Some(v) = phi_star {
        inst = inst.with_phi_star(v, "exact: KKT systems on every face of the simplex");
    }
    Ok(inst)
}

pub fn random_simplex_quadratic(dim: usize, seed: u64) -> Result<CompositeInstance> {
    if dim == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    let mut rng = rng::stream(seed, 0, Purpose::Data);
    let b = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let a = (&b + b.transpose()) * 0.5;
    let q = Vector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut inst = make_simplex_quadratic(a, q)?;
    inst.name = format!("random_simplex_quadratic(d={dim},seed={seed})");
    Ok(inst)
}

/// The global minimum of a quadratic over the simplex is a stationary point of
/// its restriction to some face; solve the KKT system on every face.
fn simplex_optimum(obj: &Quadratic) -> f64 {
    let Curvature::Dense(a) = &obj.curvature else {
        unreachable!("simplex quadratics are dense")
    };
    let d = obj.linear.len();
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << d) {
        let support: Vec<usize> = (0..d).filter(|i| mask & (1 << i) != 0).collect();
        let k = support.len();
        let mut kkt = DMatrix::zeros(k + 1, k + 1);
        let mut rhs = Vector::zeros(k + 1);
        for (r, &i) in support.iter().enumerate() {
            for (c, &j) in support.iter().enumerate() {
                kkt[(r, c)] = a[(i, j)];
            }
            kkt[(r, k)] = 1.0;
            kkt[(k, r)] = 1.0;
            rhs[r] = -obj.linear[i];
        }
        rhs[k] = 1.0;
        let Some(sol) = kkt.lu().solve(&rhs) else {
            continue;
        };
        if sol.iter().take(k).any(|&c| c < -1e-12 || !c.is_finite()) {
            continue;
        }
        let mut x = Vector::zeros(d);
        for (r, &i) in support.iter().enumerate() {
            x[i] = sol[r].max(0.0);
        }
        let s = x.sum();
        x /= s;
        best = best.min(obj.value(&x));
    }
    best
}

/// Bound `||hess F(x)||_op <= l0 + lp ||x||^p` on all of R^d.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthCertificate {
    pub p: f64,
    pub l0: f64,
    pub lp: f64,
}

impl GrowthCertificate {
    /// Relative smoothness constant in the matching polynomial geometry.
    pub fn ell(&self) -> f64 {
        self.l0.max(self.lp)
    }
}

/// Two-layer linear autoencoder `F(W) = (1/n) sum ||W2 W1 a_i - a_i||^2` with
/// `W1` of shape `d_e x d_f` and `W2` of shape `d_f x d_e`. The variable is
/// `x = (vec W1, vec W2)` with column-major `vec`.
#[derive(Debug, Clone)]
pub struct Autoencoder {
    pub d_f: usize,
    pub d_e: usize,
    data: DMatrix<f64>,
    cov: DMatrix<f64>,
    cov_trace: f64,
    pub certificate: GrowthCertificate,
}

impl Autoencoder {
    /// Synthetic standard-normal data, one sample per column.
    pub fn new(d_f: usize, d_e: usize, n: usize, seed: u64) -> Result<Self> {
        if d_e == 0 || d_f == 0 || n == 0 || d_e > d_f {
            return Err(Error::invalid(format!(
                "autoencoder needs 0 < d_e <= d_f and n >= 1, got d_f={d_f}, d_e={d_e}, n={n}"
            )));
        }
        let mut rng = rng::stream(seed, 0, Purpose::Data);
        let data = DMatrix::from_fn(d_f, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        Ok(Self::from_data(d_e, data))
    }

    pub fn from_data(d_e: usize, data: DMatrix<f64>) -> Self {
        let (d_f, n) = data.shape();
        let cov = &data * data.transpose() / n as f64;
        let cov_norm = SymmetricEigen::new(cov.clone()).eigenvalues.amax();
        // hess F[U, U] = 2||(U2 W1 + W2 U1) S||^2 + 4<(M - I) Sigma, U2 U1>,
        // bounded by ||Sigma|| (3||W||^2 + 2 sqrt(d_f)) ||U||^2.
        let certificate = GrowthCertificate {
            p: 2.0,
            l0: 2.0 * (d_f as f64).sqrt() * cov_norm,
            lp: 3.0 * cov_norm,
        };
        Autoencoder {
            d_f,
            d_e,
            cov_trace: cov.trace(),
            data,
            cov,
            certificate,
        }
    }

    pub fn n(&self) -> usize {
        self.data.ncols()
    }

    pub fn dim(&self) -> usize {
        2 * self.d_e * self.d_f
    }

    pub fn split(&self, x: &Vector) -> (DMatrix<f64>, DMatrix<f64>) {
        let k = self.d_e * self.d_f;
        let w1 = DMatrix::from_column_slice(self.d_e, self.d_f, &x.as_slice()[..k]);
        let w2 = DMatrix::from_column_slice(self.d_f, self.d_e, &x.as_slice()[k..]);
        (w1, w2)
    }

    pub fn join(&self, w1: &DMatrix<f64>, w2: &DMatrix<f64>) -> Vector {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(w1.as_slice());
        v.extend_from_slice(w2.as_slice());
        Vector::from_vec(v)
    }
}

impl SmoothObjective for Autoencoder {
    fn dim(&self) -> usize {
        Autoencoder::dim(self)
    }

    // F = tr(W2 (W1 S W1^T) W2^T) - 2 tr(W2 W1 S) + tr(S)
    fn value(&self, x: &Vector) -> f64 {
        let (w1, w2) = self.split(x);
        let w1s = &w1 * &self.cov;
        let inner = &w1s * w1.transpose();
        let quad = (&w2 * inner).component_mul(&w2).sum();
        let cross = w1s.component_mul(&w2.transpose()).sum();
        quad - 2.0 * cross + self.cov_trace
    }

    fn grad(&self, x: &Vector) -> Vector {
        let (w1, w2) = self.split(x);
        let w1s = &w1 * &self.cov;
        let inner = &w1s * w1.transpose();
        // dF/dW2 = 2 (W2 W1 S W1^T - S W1^T), dF/dW1 = 2 (W2^T W2 W1 S - W2^T S)
        let g2 = (&w2 * inner - w1s.transpose()) * 2.0;
        let g1 = ((w2.transpose() * &w2) * &w1s - (&self.cov * &w2).transpose()) * 2.0;
        self.join(&g1, &g2)
    }

    fn minibatch_grad(&self, x: &Vector, batch: usize, rng: &mut Rng) -> Option<Vector> {
        let n = self.n();
        let batch = batch.clamp(1, n);
        let idx = rand::seq::index::sample(rng, n, batch);
        let cols: Vec<usize> = idx.into_iter().collect();
        let a = self.data.select_columns(&cols);
        let (w1, w2) = self.split(x);
        let h = &w1 * &a;
        let resid = &w2 * &h - &a;
        let scale = 2.0 / batch as f64;
        let g2 = &resid * h.transpose() * scale;
        let g1 = (w2.transpose() * &resid) * a.transpose() * scale;
        Some(self.join(&g1, &g2))
    }
}

/// Autoencoder instance in the polynomial geometry certified by its growth
/// bound. The optimal value follows from the principal subspace of the data
/// covariance: `Phi* = sum of the d_f - d_e smallest eigenvalues`.
pub fn make_autoencoder(d_f: usize, d_e: usize, n: usize, seed: u64) -> Result<CompositeInstance> {
    let ae = Autoencoder::new(d_f, d_e, n, seed)?;
    let cert = ae.certificate;
    let mut eig: Vec<f64> = SymmetricEigen::new(ae.cov.clone())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eig.sort_by(f64::total_cmp);
    let phi_star: f64 = eig[..d_f - d_e].iter().sum();
    let mut inst = CompositeInstance::new(
        format!("autoencoder(d_f={d_f},d_e={d_e},n={n},seed={seed})"),
        Arc::new(ae),
        Regularizer::Zero,
        FeasibleSet::AllSpace,
        DistanceGenerator::polynorm(cert.p)?,
        cert.ell(),
    )?;
    inst = inst.with_phi_star(
        phi_star,
        "exact: Eckart-Young, tail eigenvalues of the covariance",
    );
    Ok(inst)
}

/// Initial weights with i.i.d. entries of mean 1 and standard deviation 0.01.
pub fn autoencoder_init(d_f: usize, d_e: usize, seed: u64) -> Vector {
    let mut rng = rng::stream(seed, 0, Purpose::Init);
    Vector::from_fn(2 * d_f * d_e, |_, _| {
        1.0 + 0.01 * rng.sample::<f64, _>(StandardNormal)
    })
}

/// Best objective value found by deterministic mirror descent with step
/// `1/(2 ell)` from the default start and `starts - 1` random feasible starts.
pub fn estimate_phi_star(
    inst: &CompositeInstance,
    starts: usize,
    iters: usize,
    seed: u64,
) -> Result<f64> {
    let eta = if inst.ell > 0.0 { 0.5 / inst.ell } else { 1.0 };
    let mut rng = rng::stream(seed, 0, Purpose::Init);
    let d = inst.dim();
    let mut best = f64::INFINITY;
    for s in 0..starts.max(1) {
        let mut x = if s == 0 {
            inst.default_start()
        } else {
            let raw = Vector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            random_feasible(inst, raw)
        };
        best = best.min(inst.phi_value(&x));
        for _ in 0..iters {
            let g = inst.f_grad(&x);
            x = prox::mirror_step(&x, &g, eta, inst)?.point;
            best = best.min(inst.phi_value(&x));
        }
    }
    Ok(best)
}

/// `count` feasible points from Gaussian draws of standard deviation `scale`,
/// mapped into the set by projection (softmax for simplices, so the points are
/// interior).
pub fn sample_points(inst: &CompositeInstance, count: usize, scale: f64, seed: u64) -> Vec<Vector> {
    let mut rng = rng::stream(seed, 0, Purpose::Sampling);
    let d = inst.dim();
    (0..count)
        .map(|_| {
            let raw = Vector::from_fn(d, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
            random_feasible(inst, raw)
        })
        .collect()
}

fn random_feasible(inst: &CompositeInstance, raw: Vector) -> Vector {
    match &inst.feasible {
        FeasibleSet::Simplex(_) => prox::softmax_rows(&raw, raw.len()),
        FeasibleSet::ProductSimplex { cols, .. } => prox::softmax_rows(&raw, *cols),
        set => set.project(&raw),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quadratic_l1_examples() {
        let inst = lemma2_instance();
        assert_eq!(inst.ell, 1.0);
        assert_eq!(inst.phi_star_value().unwrap(), 0.0);
        let two = make_quadratic_l1(
            Curvature::Diagonal(vec![1.0, 2.0]),
            None,
            0.0,
            FeasibleSet::AllSpace,
        )
        .unwrap();
        assert_eq!(two.ell, 2.0);
        assert!(matches!(two.reg, Regularizer::Zero));
    }

    #[test]
    fn separable_optimum_against_grid() {
        let lo = Vector::from_row_slice(&[-1.0, -2.0, 0.5]);
        let hi = Vector::from_row_slice(&[2.0, 1.0, 3.0]);
        let diag = vec![-1.5, 0.7, 2.0];
        let q = Vector::from_row_slice(&[0.3, -0.4, -5.0]);
        let w = 0.25;
        let inst = make_quadratic_l1(
            Curvature::Diagonal(diag.clone()),
            Some(q.clone()),
            w,
            FeasibleSet::new_box(lo.clone(), hi.clone()).unwrap(),
        )
        .unwrap();
        let mut grid_total = 0.0;
        for i in 0..3 {
            let n = 200_000;
            let best = (0..=n)
                .map(|k| lo[i] + (hi[i] - lo[i]) * k as f64 / n as f64)
                .map(|x| 0.5 * diag[i] * x * x + q[i] * x + w * x.abs())
                .fold(f64::INFINITY, f64::min);
            grid_total += best;
        }
        assert_relative_eq!(inst.phi_star_value().unwrap(), grid_total, epsilon = 1e-8);
    }

    #[test]
    fn unbounded_quadratic_has_no_optimum() {
        let inst = make_quadratic_l1(
            Curvature::Diagonal(vec![-1.0]),
            None,
            0.0,
            FeasibleSet::AllSpace,
        )
        .unwrap();
        assert!(inst.phi_star.is_none());
    }

    #[test]
    fn simplex_quadratic_examples() {
        let zero = make_simplex_quadratic(
            DMatrix::zeros(3, 3),
            Vector::from_row_slice(&[1.0, 2.0, 3.0]),
        )
        .unwrap();
        assert_eq!(zero.ell, 0.0);
        assert_eq!(zero.phi_star_value().unwrap(), 1.0);
        let neg = make_simplex_quadratic(-DMatrix::identity(3, 3), Vector::zeros(3)).unwrap();
        assert_eq!(neg.ell, 1.0);
        assert_relative_eq!(neg.phi_star_value().unwrap(), -0.5, epsilon = 1e-15);
        let asym = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(make_simplex_quadratic(asym, Vector::zeros(2)).is_err());
    }

    #[test]
    fn simplex_optimum_against_sampling() {
        let inst = random_simplex_quadratic(4, 7).unwrap();
        let star = inst.phi_star_value().unwrap();
        let mut rng = rng::stream(1, 0, Purpose::Sampling);
        for _ in 0..20_000 {
            let raw = Vector::from_fn(4, |_, _| 3.0 * rng.sample::<f64, _>(StandardNormal));
            let x = prox::softmax_rows(&raw, 4);
            assert!(inst.phi_value(&x) >= star - 1e-12);
        }
        let est = estimate_phi_star(&inst, 8, 3000, 3).unwrap();
        assert!(est >= star - 1e-12 && est <= star + 1e-6, "{est} vs {star}");
    }

    #[test]
    fn autoencoder_examples() {
        let ae = Autoencoder::new(4, 4, 30, 1).unwrap();
        let eye = DMatrix::identity(4, 4);
        assert!(ae.value(&ae.join(&eye, &eye)).abs() < 1e-12);
        let zero = Vector::zeros(ae.dim());
        let mean_sq = ae.data.column_iter().map(|c| c.norm_squared()).sum::<f64>() / 30.0;
        assert_relative_eq!(ae.value(&zero), mean_sq, max_relative = 1e-12);
        assert!(Autoencoder::new(3, 4, 10, 0).is_err());
    }

    #[test]
    fn autoencoder_value_matches_sample_sum() {
        let ae = Autoencoder::new(5, 2, 17, 3).unwrap();
        let x = autoencoder_init(5, 2, 9);
        let (w1, w2) = ae.split(&x);
        let direct = ae
            .data
            .column_iter()
            .map(|a| (&w2 * (&w1 * a) - a).norm_squared())
            .sum::<f64>()
            / 17.0;
        assert_relative_eq!(ae.value(&x), direct, max_relative = 1e-12);
    }

    #[test]
    fn autoencoder_gradient_matches_finite_differences() {
        let ae = Autoencoder::new(6, 3, 40, 5).unwrap();
        let mut rng = rng::stream(2, 0, Purpose::Sampling);
        for _ in 0..10 {
            let x = Vector::from_fn(ae.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
            let g = ae.grad(&x);
            let h = 1e-5;
            let fd = Vector::from_fn(ae.dim(), |i, _| {
                let mut p = x.clone();
                let mut m = x.clone();
                p[i] += h;
                m[i] -= h;
                (ae.value(&p) - ae.value(&m)) / (2.0 * h)
            });
            assert!(
                (&g - &fd).norm() <= 1e-4 * g.norm().max(1.0),
                "{}",
                (&g - &fd).norm()
            );
        }
    }

    #[test]
    fn full_batch_minibatch_equals_gradient() {
        let ae = Autoencoder::new(5, 2, 12, 4).unwrap();
        let x = autoencoder_init(5, 2, 1);
        let mut rng = rng::stream(0, 0, Purpose::Minibatch);
        let mb = ae.minibatch_grad(&x, 12, &mut rng).unwrap();
        assert!((mb - ae.grad(&x)).norm() < 1e-9 * ae.grad(&x).norm());
    }

    #[test]
    fn autoencoder_optimum_is_attained_by_principal_subspace() {
        let inst = make_autoencoder(5, 2, 50, 8).unwrap();
        let ae = Autoencoder::new(5, 2, 50, 8).unwrap();
        let eig = SymmetricEigen::new(ae.cov.clone());
        let mut order: Vec<usize> = (0..5).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let u = eig.eigenvectors.select_columns(&order[..2]);
        let x = ae.join(&u.transpose(), &u);
        assert_relative_eq!(
            inst.phi_value(&x),
            inst.phi_star_value().unwrap(),
            max_relative = 1e-10
        );
    }

    #[test]
    fn autoencoder_hessian_respects_growth_certificate() {
        let ae = Autoencoder::new(5, 2, 30, 6).unwrap();
        let cert = ae.certificate;
        let mut rng = rng::stream(4, 0, Purpose::Sampling);
        for k in 0..30 {
            let scale = 0.3 * k as f64;
            let x = Vector::from_fn(ae.dim(), |_, _| {
                scale * rng.sample::<f64, _>(StandardNormal)
            });
            let u =
                Vector::from_fn(ae.dim(), |_, _| rng.sample::<f64, _>(StandardNormal)).normalize();
            let h = 1e-4;
            let curv = (ae.grad(&(&x + &u * h)) - ae.grad(&(&x - &u * h))).dot(&u) / (2.0 * h);
            let bound = cert.l0 + cert.lp * x.norm().powf(cert.p);
            assert!(curv.abs() <= bound * (1.0 + 1e-6), "{curv} > {bound}");
        }
    }
}
