"""Liminf estimation of error-bound moduli and pointwise checks of sufficient conditions.

Every liminf-type quantity is sampled on shells r_{k+1} < |x - center| <= r_k with
r_k = r0 * gamma**k. The per-shell minima form a trace; the reported value is the
minimum over the last few nonempty shells.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable

import numpy as np

from .errors import CenterNotInSetError
from .functions import FunctionHandle, MaxFamily, _pow
from .geometry import distance_to_set, sublevel_distance


class Kind(str, Enum):
    ER = "Er"
    ER_UNDER = "ErUnder"
    ER_UNDER_PRIME = "ErUnderPrime"
    CLM = "Clm"


@dataclass(frozen=True)
class LiminfQuery:
    r0: float = 0.5
    gamma: float = 0.5
    K: int = 20
    samples_1d: int = 64
    samples_nd: int = 512
    positivity_floor: float = 1e-14
    value_ceiling: bool = True
    tail: int = 5
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if not (self.r0 > 0 and 0 < self.gamma < 1 and self.K >= 0 and self.tail >= 1):
            raise ValueError("invalid shell schedule")

    def radii(self) -> np.ndarray:
        """Outer radii r_0 > r_1 > ... > r_K."""
        return self.r0 * self.gamma ** np.arange(self.K + 1)

    def ceilings(self, top: float) -> np.ndarray:
        """eta_k = sqrt(r_k / r_0) * top, nonincreasing to 0."""
        if not self.value_ceiling or not math.isfinite(top) or top <= 0:
            return np.full(self.K + 1, math.inf)
        return np.sqrt(self.radii() / self.r0) * top


def shell_points(center, k: int, query: LiminfQuery) -> np.ndarray:
    """Sample points of shell k: a symmetric grid in 1-D, seeded uniform draws otherwise."""
    center = np.atleast_1d(np.asarray(center, dtype=float))
    n = center.size
    outer = query.r0 * query.gamma ** k
    inner = outer * query.gamma
    if n == 1:
        half = max(1, query.samples_1d // 2)
        rho = inner + (outer - inner) * np.arange(1, half + 1) / half
        return center + np.concatenate([-rho[::-1], rho])[:, None]
    pts = np.empty((query.samples_nd, n))
    for j in range(query.samples_nd):
        rng = np.random.default_rng([query.seed, k, j])
        d = rng.standard_normal(n)
        d /= np.linalg.norm(d)
        # radius uniform in volume between the shell boundaries
        u = rng.random()
        rad = (inner ** n + u * (outer ** n - inner ** n)) ** (1.0 / n)
        pts[j] = center + rad * d
    return pts


@dataclass
class ShellRecord:
    radius: float
    min_value: float
    argmin: np.ndarray | None
    count: int


@dataclass
class TraceRow:
    radius: float
    point: np.ndarray
    f: float
    distance: float
    subgradient_norm: float
    ratio: float


@dataclass
class LiminfTrace:
    shells: list[ShellRecord]
    rows: list[TraceRow] = field(default_factory=list)
    tail: int = 5

    def tail_shells(self) -> list[ShellRecord]:
        return self.shells[-self.tail:]

    @property
    def extracted_value(self) -> float:
        vals = [s.min_value for s in self.tail_shells() if s.count > 0]
        return min(vals) if vals else math.inf

    @property
    def tail_spread(self) -> float:
        vals = [s.min_value for s in self.tail_shells() if s.count > 0 and math.isfinite(s.min_value)]
        return (max(vals) - min(vals)) if len(vals) > 1 else 0.0

    def to_csv(self, stream=None) -> str:
        """One row per admitted sample; returns the text when no stream is given."""
        out = stream or io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["shell_radius", "point", "f", "dist_to_sublevel", "dist_0_subdiff", "ratio"])
        for r in self.rows:
            w.writerow([f"{r.radius:.17g}", " ".join(f"{v:.17g}" for v in r.point),
                        f"{r.f:.17g}", f"{r.distance:.17g}", f"{r.subgradient_norm:.17g}", f"{r.ratio:.17g}"])
        return out.getvalue() if stream is None else ""


@dataclass
class ModulusEstimate:
    kind: Kind
    q: float
    value: float
    trace: LiminfTrace


def build_trace(radii: Iterable[float], shell_rows: list[list[TraceRow]], tail: int) -> LiminfTrace:
    """Reduce per-shell rows to per-shell minima (empty shells carry +inf)."""
    shells, rows = [], []
    for r, srows in zip(radii, shell_rows):
        rows.extend(srows)
        if srows:
            best = min(srows, key=lambda row: row.ratio)
            shells.append(ShellRecord(float(r), best.ratio, best.point, len(srows)))
        else:
            shells.append(ShellRecord(float(r), math.inf, None, 0))
    return LiminfTrace(shells, rows, tail)


def scaling_constant(q: float) -> float:
    """q^q (1-q)^(1-q) with 0^0 = 1."""
    return float(_pow(q, q) * _pow(1.0 - q, 1.0 - q))


def _check_center(f: FunctionHandle, center, query: LiminfQuery) -> np.ndarray:
    center = np.atleast_1d(np.asarray(center, dtype=float))
    if f(center) > query.positivity_floor:
        raise CenterNotInSetError(f"f(center) = {f(center):.3e} > 0")
    return center


def kink_points(f: FunctionHandle, pts: np.ndarray, center: np.ndarray, inner: float,
                outer: float) -> np.ndarray:
    """Projections of samples onto the sets where their top affine pieces tie.

    Random draws almost surely miss these sets, yet the subdifferential of a
    max of affine pieces is largest (and its norm smallest) exactly there.
    Only projections that stay inside the shell are returned.
    """
    n = center.size
    if not isinstance(f, MaxFamily) or n == 1 or len(f.pieces) < 2 or not all(p.affine for p in f.pieces):
        return np.zeros((0, n))
    A = np.array([p.grad(np.zeros(n)) for p in f.pieces])
    k = np.array([p(np.zeros(n)) for p in f.pieces])
    out = []
    for x in pts:
        order = np.argsort(-(A @ x + k), kind="stable")
        for m in range(2, min(n, len(order)) + 1):
            top = order[:m]
            M = A[top[1:]] - A[top[0]]
            r = k[top[0]] - k[top[1:]]
            y = x - np.linalg.pinv(M) @ (M @ x - r)
            rad = np.linalg.norm(y - center)
            if inner < rad <= outer:
                out.append(y)
    return np.array(out).reshape(-1, n)


def liminf_estimate(f: FunctionHandle, center, q: float, query: LiminfQuery, kind: Kind,
                    ratio: Callable[[float, float, float], float], need_d: bool, need_s: bool,
                    ceiling: bool) -> ModulusEstimate:
    """Shell-by-shell minimum of ratio(f, d, s) over admitted samples.

    ``d`` is the distance to [f <= 0] and ``s`` the distance from 0 to the
    subdifferential; each is computed only when requested.
    """
    center = _check_center(f, center, query)
    radii = query.radii()
    points = [shell_points(center, k, query) for k in range(query.K + 1)]
    if need_s:
        points = [np.vstack([P, kink_points(f, P, center, r * query.gamma, r)])
                  for P, r in zip(points, radii)]
    values = [f.values(P) for P in points]
    top = float(np.max(values[0], initial=0.0))
    etas = query.ceilings(top) if ceiling else np.full(query.K + 1, math.inf)

    def run_shell(k: int) -> list[TraceRow]:
        rows = []
        for x, fx in zip(points[k], values[k]):
            if not (fx > query.positivity_floor and fx <= etas[k] * (1 + 1e-12)):
                continue
            d = sublevel_distance(f, x).distance if need_d else math.nan
            s = distance_to_set(f.subdifferential(x)) if need_s else math.nan
            rows.append(TraceRow(float(radii[k]), x, float(fx), d, s, ratio(float(fx), d, s)))
        return rows

    if query.workers > 1:
        with ThreadPoolExecutor(query.workers) as pool:
            shell_rows = list(pool.map(run_shell, range(query.K + 1)))
    else:
        shell_rows = [run_shell(k) for k in range(query.K + 1)]
    trace = build_trace(radii, shell_rows, query.tail)
    return ModulusEstimate(kind, q, trace.extracted_value, trace)


def _safe_div(a: float, b: float) -> float:
    if b == 0:
        return math.inf if a > 0 else (0.0 if a == 0 else -math.inf)
    return a / b


def estimate_Er(f: FunctionHandle, center, q: float, query: LiminfQuery = LiminfQuery()) -> ModulusEstimate:
    """liminf of f(x)^q / d(x, [f <= 0]) over x -> center with f(x) > 0."""
    if not q > 0:
        raise ValueError("q must be positive")
    return liminf_estimate(f, center, q, query, Kind.ER,
                     lambda fx, d, s: _safe_div(fx ** q, d), True, False, ceiling=False)


def estimate_Er_under(f: FunctionHandle, center, q: float, query: LiminfQuery = LiminfQuery()) -> ModulusEstimate:
    """liminf of q d(0, subdiff f(x)) / f(x)^(1-q) as f(x) decreases to 0."""
    if not q > 0:
        raise ValueError("q must be positive")
    return liminf_estimate(f, center, q, query, Kind.ER_UNDER,
                     lambda fx, d, s: q * s / fx ** (1.0 - q) if math.isfinite(s) else math.inf,
                     False, True, ceiling=True)


def estimate_Er_under_prime(f: FunctionHandle, center, q: float,
                            query: LiminfQuery = LiminfQuery()) -> ModulusEstimate:
    """liminf of q^q (1-q)^(1-q) d(0, subdiff f(x))^q / d(x, [f <= 0])^(1-q)."""
    if not 0 < q <= 1:
        raise ValueError("q must lie in (0, 1]")
    c = scaling_constant(q)

    def ratio(fx, d, s):
        if not math.isfinite(s):
            return math.inf
        return c * float(_pow(s, q)) / float(_pow(d, 1.0 - q))

    return liminf_estimate(f, center, q, query, Kind.ER_UNDER_PRIME, ratio, True, True, ceiling=True)


def unscaled_prime_quantity(f: FunctionHandle, x, q: float) -> float:
    """d(x, [f <= 0])^(q-1) * d(0, subdiff f(x))^q at a single point."""
    d = sublevel_distance(f, x).distance
    s = distance_to_set(f.subdifferential(np.atleast_1d(x)))
    return float(_pow(d, q - 1.0) * _pow(s, q))


# ------------------------------------------------------------------ sufficient conditions

class Verdict(str, Enum):
    HOLDS = "HOLDS"
    FAILS = "FAILS"
    VACUOUS = "VACUOUS"


VARIANTS = ("t31", "t32", "t33", "c314", "t37", "p316")


@dataclass(frozen=True)
class SamplePlan:
    """Deterministic 1-D grid or seeded n-D draws inside a ball of radius min(delta, box)."""

    count: int = 2000
    box: float = 10.0
    seed: int = 0

    def points(self, center, radius: float) -> np.ndarray:
        center = np.atleast_1d(np.asarray(center, dtype=float))
        n = center.size
        radius = min(radius, self.box)
        if n == 1:
            half = self.count // 2
            # geometric near the center, uniform further out; strictly inside the open ball
            rho = np.unique(np.concatenate([
                radius * np.geomspace(1e-6, 1.0, half // 2, endpoint=False),
                radius * np.arange(1, half - half // 2 + 1) / (half - half // 2 + 1),
            ]))
            return center + np.concatenate([-rho[::-1], rho])[:, None]
        rng = np.random.default_rng([self.seed, 7919])
        d = rng.standard_normal((self.count, n))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        rad = radius * rng.random(self.count) ** (1.0 / n)
        return center + rad[:, None] * d


@dataclass
class ConditionReport:
    variant: str
    verdict: Verdict
    holds_on_samples: bool
    violating_points: list
    gated: int
    sampled: int
    box_limited: bool


@dataclass
class CertifyReport:
    holds: bool
    violations: list
    sampled: int
    positive: int
    tau: float
    radius: float
    box_limited: bool


def _gate_and_condition(variant: str, q: float, tau: float, lam: float, beta: float,
                        fx: float, d: float, s: float, dist_center: float, gate: str):
    """Return (gated, condition_holds) for one sample."""
    c = scaling_constant(q)
    simplified = gate == "simplified"
    ref = dist_center if simplified else d
    if variant == "t31":
        return fx < tau * ref, s >= tau
    if variant == "t32":
        return fx ** q < tau * ref, q * fx ** (q - 1) * s >= tau
    if variant == "t33":
        return fx ** q < tau * ref, float(_pow(d, q - 1) * _pow(s, q)) >= tau
    if variant == "c314":
        return c * fx ** q < tau * ref, c * float(_pow(d, q - 1) * _pow(s, q)) >= tau
    if variant == "t37":
        e = 1.0 / q - 1.0
        dq = float(_pow(d, e))
        gated = lam * fx / dq + (1 - lam) * fx ** q < tau * ref
        return gated, (lam / dq + q * (1 - lam) * fx ** (q - 1)) * s >= tau
    if variant == "p316":
        return fx < beta * dist_center, float(_pow(d, q - 1) * _pow(s, q)) >= tau
    raise ValueError(f"unknown variant {variant!r}")


def check_condition(f: FunctionHandle, center, q: float, tau: float, delta: float, variant: str,
                    plan: SamplePlan = SamplePlan(), gate: str = "distance", lam: float = 0.5,
                    beta: float = 1.0, level_cap: float = math.inf) -> ConditionReport:
    """Check a sufficient condition on sampled points of B_delta(center) with f > 0.

    ``level_cap`` optionally restricts samples to f(x) < level_cap.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if variant in ("t33", "c314", "t37", "p316") and not 0 < q <= 1:
        raise ValueError("this variant needs q in (0, 1]")
    if variant == "t37" and not 0 <= lam <= 1:
        raise ValueError("lambda must lie in [0, 1]")
    if gate not in ("distance", "simplified"):
        raise ValueError("gate must be 'distance' or 'simplified'")
    center = np.atleast_1d(np.asarray(center, dtype=float))
    if f(center) > 0:
        raise CenterNotInSetError("center must lie in [f <= 0]")
    pts = plan.points(center, delta)
    vals = f.values(pts)
    gated, violating = 0, []
    for x, fx in zip(pts, vals):
        if not (0 < fx < level_cap):
            continue
        d = sublevel_distance(f, x).distance
        s = distance_to_set(f.subdifferential(x))
        g, ok = _gate_and_condition(variant, q, tau, lam, beta, float(fx), d, s,
                                    float(np.linalg.norm(x - center)), gate)
        if g:
            gated += 1
            if not ok:
                violating.append(x)
    if gated == 0:
        verdict = Verdict.VACUOUS
    else:
        verdict = Verdict.HOLDS if not violating else Verdict.FAILS
    return ConditionReport(variant, verdict, not violating, violating, gated, len(pts),
                           box_limited=delta > plan.box)


def certify_error_bound(f: FunctionHandle, center, q: float, tau: float, delta: float,
                        plan: SamplePlan = SamplePlan()) -> CertifyReport:
    """Directly test tau * d(x, [f <= 0]) <= f_+(x)^q on samples of B_delta(center)."""
    center = np.atleast_1d(np.asarray(center, dtype=float))
    pts = plan.points(center, delta)
    vals = f.values(pts)
    violations, positive = [], 0
    for x, fx in zip(pts, vals):
        if fx <= 0:
            continue
        positive += 1
        d = sublevel_distance(f, x).distance
        rhs = fx ** q
        if tau * d > rhs * (1 + 1e-12) + 1e-300:
            violations.append(x)
    return CertifyReport(not violations, violations, len(pts), positive, tau, delta,
                         box_limited=delta > plan.box)


def alpha_factor(alpha, q: float):
    """alpha^q (1-alpha)^(1-q) with 0^0 = 1."""
    alpha = np.asarray(alpha, dtype=float)
    return _pow(alpha, q) * _pow(1.0 - alpha, 1.0 - q)


def alpha_factor_argmax(q: float, grid_step: float = 1e-6) -> tuple[float, float]:
    """Maximizer q and maximum q^q (1-q)^(1-q), confirmed by a grid sweep."""
    if not 0 < q <= 1:
        raise ValueError("q must lie in (0, 1]")
    value = scaling_constant(q)
    grid = np.linspace(0.0, 1.0, int(round(1.0 / grid_step)) + 1)
    sweep = alpha_factor(grid, q)
    j = int(np.argmax(sweep))
    if abs(grid[j] - q) > 2 * grid_step or abs(sweep[j] - value) > 1e-9:
        raise ArithmeticError(f"grid sweep disagrees: alpha={grid[j]}, value={sweep[j]}")
    return q, value


def conclusion_for(variant: str, q: float, tau: float, delta: float, lam: float = 0.5,
                   beta: float = 1.0, alpha: float | None = None) -> tuple[float, float, float]:
    """(exponent, constant, radius) of the error bound a variant promises."""
    if variant in ("t31", "t32"):
        a = 1.0 if alpha is None else alpha
        return (1.0 if variant == "t31" else q), a * tau, delta / (1 + a)
    if variant == "t33":
        a = q if alpha is None else alpha
        return q, float(alpha_factor(a, q)) * tau, delta / (1 + a)
    if variant == "c314":
        return q, tau, delta / (1 + q)
    if variant == "t37":
        a = 0.5 if alpha is None else alpha
        return q, solve_tau_alpha(q, lam, a, tau), delta / (1 + a)
    if variant == "p316":
        a = q if alpha is None else alpha
        if q < 1:
            r = min(delta, beta ** (q / (1 - q)) * tau ** (-1 / (1 - q)))
        else:
            r = delta
        return q, float(alpha_factor(a, q)) * tau, r / (1 + a)
    raise ValueError(f"unknown variant {variant!r}")


def solve_tau_alpha(q: float, lam: float, alpha: float, tau: float) -> float:
    """Unique t > 0 with lam t^(1/q) / (1-alpha)^(1/q-1) + (1-lam) t = alpha tau."""
    if not (0 < q <= 1 and 0 <= lam <= 1 and 0 < alpha < 1 and tau > 0):
        raise ValueError("parameters out of range")
    target = alpha * tau
    if lam == 0 or q == 1:
        return target
    coef = lam * (1.0 - alpha) ** (1.0 - 1.0 / q)
    p = 1.0 / q

    def phi(t):
        return coef * t ** p + (1.0 - lam) * t

    lo, hi = 0.0, max(target, 1.0)
    while phi(hi) < target:
        hi *= 2.0
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if phi(mid) < target:
            lo = mid
        else:
            hi = mid
    return lo if abs(phi(lo) - target) <= abs(phi(hi) - target) else hi


def tau_alpha_residual(q: float, lam: float, alpha: float, tau: float, t: float) -> float:
    return abs(lam * t ** (1.0 / q) / (1.0 - alpha) ** (1.0 / q - 1.0) + (1.0 - lam) * t - alpha * tau)


@dataclass
class OrderingReport:
    q: float
    lower: float        # (1-q)^(1-q) * ErUnder
    upper: float        # ErUnderPrime
    tolerance: float
    holds: bool
    er_under: ModulusEstimate
    er_under_prime: ModulusEstimate


def check_ordering_inequality(f: FunctionHandle, center, q: float,
                              query: LiminfQuery = LiminfQuery()) -> OrderingReport:
    """(1-q)^(1-q) * ErUnder <= ErUnderPrime, up to twice the larger tail spread."""
    if not 0 < q <= 1:
        raise ValueError("q must lie in (0, 1]")
    a = estimate_Er_under(f, center, q, query)
    b = estimate_Er_under_prime(f, center, q, query)
    lower = float(_pow(1.0 - q, 1.0 - q)) * a.value
    tol = 2.0 * max(a.trace.tail_spread, b.trace.tail_spread)
    holds = (lower <= b.value + tol) if math.isfinite(lower) else not math.isfinite(b.value)
    return OrderingReport(q, lower, b.value, tol, bool(holds), a, b)


def p_order_view(p: float, tau: float) -> tuple[float, float]:
    """A (p+1)-order statement with constant tau is the q = 1/(p+1) statement with tau^q."""
    if not (p >= 0 and tau > 0):
        raise ValueError("need p >= 0 and tau > 0")
    q = 1.0 / (p + 1.0)
    return q, tau ** q


def from_q_view(q: float, tau_eq: float) -> tuple[float, float]:
    """Inverse of :func:`p_order_view`."""
    return 1.0 / q - 1.0, tau_eq ** (1.0 / q)
