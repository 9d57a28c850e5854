"""Quick oracle checks run by ``hdopt check``.

Each check compares an engine result against an independent reference
(finite differences, closed-form derivatives, a second AD mode) and returns
``(name, passed, detail)``.
"""
from __future__ import annotations

from typing import Callable, List, Tuple

import numpy as np

from ..hyperdual import PRIMITIVES, HyperDual, batch_eval_tangent_pairs, eval_fn_hd, hd_unary, hessian_full
from ..models import DatasetBatch, init_params, mlp, quadratic, rosenbrock
from ..optimizers import fomoh_kd_step
from ..reverse import jvp_crosscheck

CheckResult = Tuple[str, bool, str]

_INTERIOR = {"log": (0.2, 3.0), "sqrt": (0.2, 3.0), "recip": (0.5, 3.0),
             "relu": (0.1, 3.0), "abs": (0.1, 3.0)}


def check_primitives(rng, h=1e-5, rtol=1e-5) -> CheckResult:
    worst = 0.0
    for name, p in PRIMITIVES.items():
        lo, hi = _INTERIOR.get(name, (-2.0, 2.0))
        for x in rng.uniform(lo, hi, 20):
            out = hd_unary(p, HyperDual(x, 1.0, 1.0, 0.0))
            d1 = (p.f(x + h) - p.f(x - h)) / (2 * h)
            d2 = (p.df(x + h) - p.df(x - h)) / (2 * h)
            for got, ref in ((out.e1, d1), (out.e12, d2)):
                worst = max(worst, abs(got - ref) / max(1.0, abs(ref)))
    return "primitive derivatives vs finite differences", worst < rtol, f"max rel err {worst:.2e}"


def check_rosenbrock_hessian(rng, atol=1e-8) -> CheckResult:
    worst = 0.0
    for d in (2, 5, 10):
        m = rosenbrock(d)
        for _ in range(10):
            x = rng.uniform(-2, 2, d)
            worst = max(worst, np.abs(hessian_full(m.objective(), x) - m.hessian(x)).max())
    return "hessian_full vs analytic Rosenbrock Hessian", worst < atol, f"max abs err {worst:.2e}"


def check_newton_equivalence(rng, tol=1e-8) -> CheckResult:
    d = 6
    Q = rng.standard_normal((d, d))
    A = Q @ Q.T + d * np.eye(d)
    b = rng.standard_normal(d)
    m = quadratic(A, b)
    theta = rng.standard_normal(d)
    V = rng.standard_normal((d, d))
    new, _ = fomoh_kd_step(m.objective(), theta, 1.0, d, rng, V=V)
    err = float(np.linalg.norm(new - np.linalg.solve(A, b)))
    return "FoMoH-KD (K=D) one-step minimiser on a quadratic", err < tol, f"error {err:.2e}"


def check_forward_reverse(rng, rtol=1e-9) -> CheckResult:
    m = mlp([6, 5, 3])
    batch = DatasetBatch(rng.standard_normal((8, 6)), rng.integers(0, 3, 8))
    f = m.objective(batch)
    worst = 0.0
    for seed in range(5):
        theta = init_params(m, seed)
        fwd, rev = jvp_crosscheck(f, theta, rng.standard_normal(m.dim))
        worst = max(worst, abs(fwd - rev) / (1.0 + abs(fwd)))
    return "forward-mode JVP vs reverse-mode gradient", worst < rtol, f"max rel diff {worst:.2e}"


def check_batched_pairs(rng, rtol=1e-12) -> CheckResult:
    m = rosenbrock(5)
    f = m.objective()
    theta = rng.uniform(-2, 2, 5)
    V = rng.standard_normal((3, 5))
    res = batch_eval_tangent_pairs(f, theta, V)
    worst = 0.0
    for i in range(3):
        for j in range(i, 3):
            _, g, _, c = eval_fn_hd(f, theta, V[i], V[j])
            worst = max(worst, abs(res.H[i, j] - c) / max(1.0, abs(c)))
            if i == j:
                worst = max(worst, abs(res.G[i] - g) / max(1.0, abs(g)))
    return "batched tangent pairs vs separate passes", worst < rtol, f"max rel diff {worst:.2e}"


CHECKS: List[Callable] = [check_primitives, check_rosenbrock_hessian, check_newton_equivalence,
                          check_forward_reverse, check_batched_pairs]


def run_checks(seed=0, verbose=True) -> bool:
    rng = np.random.default_rng(seed)
    ok = True
    for check in CHECKS:
        name, passed, detail = check(rng)
        ok &= passed
        if verbose:
            print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    return ok
