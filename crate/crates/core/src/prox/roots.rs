//! Scalar root finding for the polynomial-geometry mirror step.
//!
//! The step needs the nonnegative root of `theta^(p+1) + theta = c`. The left
//! side is strictly increasing on `[0, inf)`, so the root is unique and lies in
//! `[0, min(c, c^(1/(p+1)))]`.

/// Nonnegative solution of `theta^(p+1) + theta = c` for `c >= 0`.
///
/// Closed forms for `p` in {0, 1, 2}, bisection otherwise.
pub fn growth_root(p: f64, c: f64) -> f64 {
    debug_assert!(p >= 0.0 && c >= 0.0, "growth_root({p}, {c})");
    if c <= 0.0 {
        return 0.0;
    }
    let root = if p == 0.0 {
        0.5 * c
    } else if p == 1.0 {
        quadratic_growth_root(c)
    } else if p == 2.0 {
        cubic_growth_root(c)
    } else {
        bisect_growth_root(p, c)
    };
    debug_assert!(
        (residual(p, c, root)).abs() <= 1e-9 * c.max(1.0),
        "growth root residual {} at p={p}, c={c}",
        residual(p, c, root)
    );
    root
}

/// `theta^(p+1) + theta - c`.
pub fn residual(p: f64, c: f64, theta: f64) -> f64 {
    theta.powf(p + 1.0) + theta - c
}

/// `theta^2 + theta = c`, written as `2c / (1 + sqrt(1 + 4c))` to avoid the
/// cancellation in `(-1 + sqrt(1 + 4c)) / 2` for small `c`.
pub fn quadratic_growth_root(c: f64) -> f64 {
    2.0 * c / (1.0 + (1.0 + 4.0 * c).sqrt())
}

/// `theta^3 + theta = c` through the real root of the depressed cubic.
pub fn cubic_growth_root(c: f64) -> f64 {
    let roots = depressed_cubic_roots(1.0, -c);
    debug_assert_eq!(roots.len(), 1);
    roots[0].max(0.0)
}

/// Real roots of `t^3 + a t + b = 0`, in increasing order.
///
/// Uses the trigonometric form when there are three real roots, and the
/// hyperbolic forms otherwise; both avoid the cancellation of the radical
/// formula.
pub fn depressed_cubic_roots(a: f64, b: f64) -> Vec<f64> {
    if a == 0.0 {
        return vec![(-b).cbrt()];
    }
    if a > 0.0 {
        let m = 2.0 * (a / 3.0).sqrt();
        let arg = 1.5 * b / a * (3.0 / a).sqrt();
        return vec![-m * (arg.asinh() / 3.0).sinh()];
    }
    let m = 2.0 * (-a / 3.0).sqrt();
    let arg = 1.5 * b / a * (-3.0 / a).sqrt();
    if arg.abs() <= 1.0 {
        let phi = arg.acos() / 3.0;
        let mut r: Vec<f64> = (0..3)
            .map(|k| m * (phi - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos())
            .collect();
        r.sort_by(f64::total_cmp);
        r
    } else {
        vec![arg.signum() * m * (arg.abs().acosh() / 3.0).cosh()]
    }
}

/// Bisection on the bracket, run until the interval stops shrinking, then one
/// safeguarded Newton step.
pub fn bisect_growth_root(p: f64, c: f64) -> f64 {
    if c <= 0.0 {
        return 0.0;
    }
    let mut lo = 0.0_f64;
    let mut hi = c.min(c.powf(1.0 / (p + 1.0)));
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if residual(p, c, mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let (rl, rh) = (residual(p, c, lo).abs(), residual(p, c, hi).abs());
    let theta = if rl <= rh { lo } else { hi };
    let slope = (p + 1.0) * theta.powf(p) + 1.0;
    let newton = theta - residual(p, c, theta) / slope;
    if newton >= 0.0 && residual(p, c, newton).abs() < residual(p, c, theta).abs() {
        newton
    } else {
        theta
    }
}
