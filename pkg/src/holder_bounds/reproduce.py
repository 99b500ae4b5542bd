"""The reproduction suite: twelve checks over the bundled instances.

Each check returns a :class:`Row`; ``run`` executes a selection of them and the
CLI renders the table. Checks load instances through a loader so that an
alternative instance directory can be substituted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import moduli as M
from .calmness import (CalmVerdict, MapKind, build_perturbation_P32, build_perturbation_T602,
                       estimate_clm, upper_bound_T602)
from .errors import HolderBoundsError, InstanceParseError, PostconditionError
from .functions import FinGenConvexSet, Smooth, affine, constant
from .geometry import min_norm_point, sublevel_distance, sublevel_distance_oracle
from .instances import BUILTIN_NAMES, FunctionInstance, builtin_instance, load_instance
from .sip import SIProgram, f_D, kkt_check, kkt_subsets, solve, sup_function


@dataclass
class Row:
    number: int
    key: str
    title: str
    passed: bool
    detail: str


class Loader:
    def __init__(self, directory: str | Path | None = None):
        self.directory = None if directory is None else Path(directory)
        self._cache: dict = {}

    def __call__(self, name: str):
        if name not in self._cache:
            if self.directory is None:
                self._cache[name] = builtin_instance(name)
            else:
                self._cache[name] = load_instance(self.directory / f"{name}.json")
        return self._cache[name]

    def override(self, instance) -> None:
        self._cache[instance.name] = instance

    def function_view(self, name: str):
        """(f, center): the function itself, or the supremum function of a program."""
        inst = self(name)
        if isinstance(inst, FunctionInstance):
            return inst.function, inst.center
        return sup_function(inst.program, inst.center), inst.center


def _close(a: float, b: float, tol: float) -> bool:
    return abs(a - b) <= tol


def check_1(load: Loader, workers: int) -> Row:
    f, c = load.function_view("example-3.6")
    q = M.LiminfQuery(workers=workers)
    under = M.estimate_Er_under(f, c, 0.5, q).value
    er = M.estimate_Er(f, c, 0.5, q).value
    cert = M.certify_error_bound(f, c, 0.5, 0.99, 1.0)
    ok = _close(under, 1.0, 1e-6) and _close(er, 1.0, 1e-3) and cert.holds
    return Row(1, "example-3.6", "lower estimate, modulus and certified bound at q=1/2", ok,
               f"ErUnder={under:.12g} Er={er:.12g} certify(tau=0.99)={'holds' if cert.holds else 'violated'}")


def check_2(load: Loader, workers: int) -> Row:
    f, c = load.function_view("example-sqrt")
    val = M.estimate_Er_under(f, c, 2.0, M.LiminfQuery(workers=workers)).value
    return Row(2, "example-sqrt", "lower estimate at q=2", _close(val, 1.0, 1e-6), f"ErUnder={val:.12g}")


def check_3(load: Loader, workers: int) -> Row:
    f, c = load.function_view("example-3.16")
    val = M.estimate_Er_under_prime(f, c, 0.5, M.LiminfQuery(workers=workers)).value
    return Row(3, "example-3.16", "scaled slope estimate at q=1/2", _close(val, 1 / math.sqrt(2), 1e-3),
               f"ErUnderPrime={val:.12g} target={1 / math.sqrt(2):.12g}")


def check_4(load: Loader, workers: int) -> Row:
    f, c = load.function_view("example-3.20")
    short = M.LiminfQuery(K=5, workers=workers)
    pts = np.concatenate([M.shell_points(c, k, short) for k in range(short.K + 1)])
    pts = pts[pts[:, 0] > 0]
    unscaled = np.array([M.unscaled_prime_quantity(f, x, 0.5) for x in pts])
    worst = float(np.max(np.abs(unscaled - math.sqrt(2))))
    under = M.estimate_Er_under(f, c, 0.5, short).value
    prime = M.estimate_Er_under_prime(f, c, 0.5, M.LiminfQuery(workers=workers)).value
    ok = worst <= 1e-9 and under <= 0.2 and _close(prime, math.sqrt(2) / 2, 1e-3)
    return Row(4, "example-3.20", "staircase: unscaled slope, vanishing lower estimate, scaled estimate", ok,
               f"max|unscaled-sqrt2|={worst:.3g} over {len(pts)} points; ErUnder(shells to 2^-6)={under:.4g}; "
               f"ErUnderPrime={prime:.12g}")


def check_5(load: Loader, workers: int) -> Row:
    f, c = load.function_view("example-abs")
    rep = M.check_condition(f, c, 1.0, 2.0, 1.0, "p316", beta=0.5)
    _, const, radius = M.conclusion_for("p316", 1.0, 2.0, 1.0, beta=0.5)
    plan = M.SamplePlan()
    pts = plan.points(c, radius)
    pts = pts[np.linalg.norm(pts - c, axis=1) > 0]
    violated = sum(const * sublevel_distance(f, x).distance > max(f(x), 0.0) for x in pts)
    ok = rep.verdict is M.Verdict.VACUOUS and violated == len(pts)
    return Row(5, "example-abs", "gated hypothesis vacuous, conclusion violated everywhere", ok,
               f"verdict={rep.verdict.value}; conclusion violated at {violated}/{len(pts)} points")


def check_6(load: Loader, workers: int) -> Row:
    worst, fails, eq_gap = math.inf, [], math.nan
    for name in BUILTIN_NAMES:
        f, c = load.function_view(name)
        query = M.LiminfQuery(workers=workers, samples_nd=128)
        for q in (0.25, 0.5, 0.75, 1.0):
            rep = M.check_ordering_inequality(f, c, q, query)
            slack = rep.upper + rep.tolerance - rep.lower
            if math.isfinite(slack):
                worst = min(worst, slack)
            if not rep.holds:
                fails.append(f"{name}@{q}")
            if name == "example-3.6" and q == 0.5:
                eq_gap = abs(rep.upper - rep.lower)
    ok = not fails and eq_gap <= 1e-3
    return Row(6, "ordering", "ordering of the two lower estimates on every instance", ok,
               f"min slack={worst:.3g}; equality gap on example-3.6 at q=1/2={eq_gap:.3g}"
               + (f"; failing: {', '.join(fails)}" if fails else ""))


def check_7(load: Loader, workers: int) -> Row:
    grid = np.arange(0, 1_000_001) * 1e-6
    worst = 0.0
    for q in np.round(np.arange(1, 11) * 0.1, 10):
        alpha, value = M.alpha_factor_argmax(float(q))
        vals = M.alpha_factor(grid, float(q))
        j = int(np.argmax(vals))
        worst = max(worst, abs(alpha - grid[j]), abs(value - vals[j]))
    _, v1 = M.alpha_factor_argmax(1.0)
    ok = worst <= 1e-6 and v1 == 1.0
    return Row(7, "alpha-argmax", "closed-form maximiser of a^q (1-a)^(1-q) vs grid sweep", ok,
               f"max deviation={worst:.3g}; value at q=1: {v1}")


def check_8(load: Loader, workers: int) -> Row:
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(100):
        q, lam, alpha, tau = rng.uniform(0.05, 1.0), rng.uniform(0, 1), rng.uniform(0.05, 1), rng.uniform(0.1, 5)
        t = M.solve_tau_alpha(q, lam, alpha, tau)
        worst = max(worst, abs(M.tau_alpha_residual(q, lam, alpha, tau, t)))
    exact = all(M.solve_tau_alpha(q, lam, a, tau) == a * tau
                for q, lam, a, tau in [(0.5, 0.0, 0.3, 2.0), (1.0, 0.7, 0.4, 3.0), (0.2, 0.0, 0.9, 0.5)])
    return Row(8, "tau-alpha", "implicit constant of the mixed condition", worst <= 1e-12 and exact,
               f"max residual={worst:.3g}; degenerate cases exact={exact}")


def check_9(load: Loader, workers: int) -> Row:
    inst = load("sip-remark")
    P, xbar = inst.program, inst.center
    table_err = 0.0
    for b in np.round(np.arange(-9, 10) * 0.1, 10):
        x = solve(P.with_parameters(b=[b])).point[0]
        table_err = max(table_err, abs(x - min(b, 0.0)))
    partial = estimate_clm(P, xbar, 2 / 3, MapKind.PARTIAL, M.LiminfQuery(workers=workers))
    level = estimate_clm(P, xbar, 0.75, MapKind.LEVEL, M.LiminfQuery(r0=1e-3, workers=workers))
    er = M.estimate_Er(sup_function(P, xbar), xbar, 0.5, M.LiminfQuery(workers=workers)).value
    ok = (table_err <= 1e-15 and partial.verdict is CalmVerdict.CALM and partial.estimate.value >= 1
          and level.verdict is CalmVerdict.NOT_CALM and level.estimate.value <= 1e-2 and _close(er, 1.0, 1e-3))
    return Row(9, "sip-remark", "solution table, calmness verdicts, error bound of the supremum function", ok,
               f"table error={table_err:.3g}; fixed-c q=2/3: {partial.verdict.value} tail={partial.estimate.value:.4g}; "
               f"level q=3/4: {level.verdict.value} tail={level.estimate.value:.3g}; Er(q=1/2)={er:.12g}")


def _perturbation_run(P: SIProgram, xbar: np.ndarray, count: int, seed: int):
    rng = np.random.default_rng(seed)
    fbar = sup_function(P, xbar)
    cert = kkt_check(P, xbar)
    subsets = kkt_subsets(P, xbar).subsets
    p32 = t602 = 0
    chain_ok = True
    for i in range(count):
        x = xbar + rng.uniform(-1e-2, 1e-2, P.n)
        if fbar(x) <= 0:
            continue
        build_perturbation_P32(P, xbar, x, cert)
        p32 += 1
        for D in subsets:
            if f_D(P, xbar, D)(x) <= 0:
                continue
            rep = build_perturbation_T602(P, xbar, D, x, r=i + 1)
            chain_ok &= rep.ratio <= rep.ratio_bound * (1 + 1e-12)
            t602 += 1
    return p32, t602, chain_ok


def check_10(load: Loader, workers: int) -> Row:
    parts, ok = [], True
    for name in ("sip-remark", "lp-quadrant"):
        inst = load(name)
        try:
            p32, t602, chain = _perturbation_run(inst.program, inst.center, 100, seed=10)
        except PostconditionError as exc:
            ok = False
            parts.append(f"{name}: {exc}")
            continue
        ok &= chain and p32 > 0 and t602 > 0
        parts.append(f"{name}: {p32} first-kind and {t602} second-kind builds, ratio chain {'ok' if chain else 'broken'}")
    return Row(10, "perturbations", "perturbation constructions meet their postconditions", ok, "; ".join(parts))


def check_11(load: Loader, workers: int) -> Row:
    inst = load("lp-quadrant")
    P, xbar = inst.program, inst.center
    query = M.LiminfQuery(samples_nd=128, workers=workers)
    full = estimate_clm(P, xbar, 1.0, MapKind.FULL, query).estimate
    part = estimate_clm(P, xbar, 1.0, MapKind.PARTIAL, query).estimate
    bound = upper_bound_T602(P, xbar, 1.0, query)
    tol = full.trace.tail_spread + part.trace.tail_spread + bound.estimates[bound.argmin_D].trace.tail_spread
    ok = full.value <= part.value + tol and part.value <= bound.value + tol
    return Row(11, "lp-quadrant", "full map <= fixed-c map <= subset upper bound", ok,
               f"full={full.value:.6g} fixed-c={part.value:.6g} bound={bound.value:.6g} (D={bound.argmin_D}) tol={tol:.3g}")


def _random_lp(rng) -> SIProgram:
    rows = [affine(rng.normal(size=2)) for _ in range(3)]
    rows += [affine([1.0, 0.0]), affine([-1.0, 0.0]), affine([0.0, 1.0]), affine([0.0, -1.0])]
    b = np.concatenate([rng.uniform(0.1, 1.0, 3), np.full(4, 2.0)])
    return SIProgram(Smooth(constant(0.0, 2)), rng.normal(size=2), rows, b)


def check_12(load: Loader, workers: int) -> Row:
    step = 1e-3
    worst_dist = 0.0
    for name in BUILTIN_NAMES:
        f, c = load.function_view(name)
        n = c.size
        if n > 2:
            continue
        h = 0.01 if n == 2 else step
        rng = np.random.default_rng(12)
        for x in c + rng.uniform(-0.5, 0.5, (8, n)):
            box = np.column_stack([x - 1.0, x + 1.0])
            d = sublevel_distance(f, x).distance
            o = sublevel_distance_oracle(f, x, box, h, anchors=c)
            worst_dist = max(worst_dist, abs(d - o) - h * math.sqrt(n))
    dist_ok = worst_dist <= 1e-9

    rng = np.random.default_rng(1212)
    worst_cert = math.inf
    for _ in range(1000):
        n = int(rng.integers(1, 5))
        G = rng.normal(size=(int(rng.integers(1, 7)), n)) + rng.normal(size=n)
        R = rng.normal(size=(int(rng.integers(0, 3)), n))
        res = min_norm_point(FinGenConvexSet(G, R))
        if res.certificate.size:
            worst_cert = min(worst_cert, float(res.certificate.min()))
    wolfe_ok = worst_cert >= -1e-9

    rng = np.random.default_rng(4242)
    agree = 0
    for _ in range(50):
        P = _random_lp(rng)
        x = solve(P).point
        inner = 0.5 * x + 0.5 * np.zeros(2)  # strictly feasible convex combination, usually suboptimal
        good = kkt_check(P, x) is not None
        bad = kkt_check(P, inner) is not None
        opt_inner = P.objective_value(inner) <= P.objective_value(x) + 1e-9
        agree += good and (bad == opt_inner)
    ok = dist_ok and wolfe_ok and agree == 50
    return Row(12, "oracles", "distance oracle, min-norm certificates, KKT test vs solver", ok,
               f"distance excess={worst_dist:.3g}; worst Wolfe certificate={worst_cert:.3g}; KKT agreement {agree}/50")


CHECKS: list[Callable[[Loader, int], Row]] = [check_1, check_2, check_3, check_4, check_5, check_6,
                                               check_7, check_8, check_9, check_10, check_11, check_12]
KEYS = {1: "example-3.6", 2: "example-sqrt", 3: "example-3.16", 4: "example-3.20", 5: "example-abs",
        6: "ordering", 7: "alpha-argmax", 8: "tau-alpha", 9: "sip-remark", 10: "perturbations",
        11: "lp-quadrant", 12: "oracles"}


def select(only: list[str] | None) -> list[int]:
    if not only:
        return list(KEYS)
    out = []
    for token in only:
        if token.isdigit() and int(token) in KEYS:
            out.append(int(token))
        elif token in KEYS.values():
            out.append(next(k for k, v in KEYS.items() if v == token))
        else:
            raise ValueError(f"unknown check {token!r}; choose from {', '.join(KEYS.values())}")
    return sorted(set(out))


def run(numbers: list[int] | None = None, loader: Loader | None = None, workers: int = 1) -> list[Row]:
    loader = loader or Loader()
    rows = []
    for k in numbers or list(KEYS):
        try:
            rows.append(CHECKS[k - 1](loader, workers))
        except InstanceParseError:
            raise
        except HolderBoundsError as exc:
            rows.append(Row(k, KEYS[k], "raised", False, f"{type(exc).__name__}: {exc}"))
    return rows
