"""Smoke test for the smd_py extension module.

Build and install first, e.g. `pip install maturin && maturin develop -m crates/py/Cargo.toml`,
or copy target/release/libsmd_py.so next to this file as smd_py.so.
"""

import math
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

import smd_py


def check(cond, what):
    if not cond:
        raise SystemExit(f"FAIL: {what}")
    print(f"ok   {what}")


inst = smd_py.Instance.lemma2()
for x in (0.1, 0.5, 1.0):
    for rho in (1.0, 1.5, 2.0):
        want = 2 * rho * x + 2 * rho * (1 - rho / 2) * x * x
        check(abs(inst.bfbe([x], rho) - want) < 1e-9, f"envelope closed form x={x} rho={rho}")
    check(abs(inst.bgm([x], 1.0) - x * x) < 1e-9, f"gradient mapping x={x}")

check(abs(smd_py.sandwich_constant(1.0, 4.0, 1.0) - 8.0) < 1e-12, "sandwich constant is 8")
theta = smd_py.growth_root(2.0, 10.0)
check(abs(theta**3 + theta - 10.0) < 1e-10, "growth root")

q = smd_py.Instance.random_quadratic_l1(5, 0)
samples, violations = q.check_envelope_bound(4 * q.ell)
check(samples > 0 and violations == 0, "envelope bound on a random quadratic")

simplex = smd_py.Instance.random_simplex_quadratic(6, 0)
x = simplex.default_start()
y = simplex.mirror_step(x, [1.0, 0, 0, 0, 0, 0], 0.5)
check(abs(sum(y) - 1) < 1e-12 and y[0] < x[0], "entropy mirror step stays on the simplex")

res = smd_py.run(simplex, 2000, seed=3)
check(res["bfbe"][-1] < res["bfbe"][0], "deterministic run decreases the envelope")
check(len(res["eta"]) == 2000 and not res["diverged"], "run record shape")
again = smd_py.run(simplex, 2000, seed=3)
check(again["final_point"] == res["final_point"], "runs are reproducible")

noisy = smd_py.run(q, 500, noise={"kind": "gaussian_iso", "sigma": 0.3}, seed=1)
check(math.isfinite(noisy["weighted_bfbe"]), "noisy run")

values, quantile, bound = smd_py.replicas(
    simplex, 300, 20, {"kind": "gaussian_iso", "sigma": 0.3}, beta=0.1
)
check(len(values) == 20 and (bound is None or quantile <= bound), "replica quantile below bound")

etas = smd_py.schedule_etas({"kind": "square_summable", "eta0": 0.5, "power": 0.75}, 10)
check(etas[0] == 0.5 and etas[-1] < etas[0], "square-summable schedule")

rows, ratios, trend = smd_py.dp_scan([4, 16], replicas=4)
check(len(rows) == 4 and len(ratios) == 2, "private scan")

grid = smd_py.Mdp.gridworld()
trace, hit = grid.solve("smpg", 500, eta=10.0, target_gap=1e-3)
check(hit is not None, f"gridworld solved in {hit} iterations")
t, v_p, gap = trace[-1]
check(abs(v_p - grid.optimal_value() - gap) < 1e-9, "gap is measured from the optimal value")
l_f, l_21 = grid.smoothness()
check(l_21 < l_f, "mixed-norm constant is the smaller one")

try:
    smd_py.run(q, 10, schedule={"kind": "constant", "step": 1.0})
except ValueError:
    check(True, "bad schedule raises ValueError")
else:
    check(False, "bad schedule raises ValueError")

print("all smoke checks passed")
