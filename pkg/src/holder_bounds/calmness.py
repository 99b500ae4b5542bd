"""Hölder calmness of solution and level-set maps of parametric programs.

The solution map sends parameters (c, b) to the optimal set of
min f + <c, .> s.t. g_t <= b_t. Its calmness rate at (c̄, b̄, x̄) is the liminf of
|(c, b) - (c̄, b̄)|^q / d(x, S(c̄, b̄)) over x in S(c, b), with the parameter norm
max(|c|_2, |b|_inf). Three maps are supported: the full map, the map with c fixed
at c̄, and the lower level-set map (alpha, b) -> {f + <c̄, .> <= alpha, g <= b}.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from . import lp
from .errors import (CenterNotOptimalError, DisjointnessViolationError, HolderBoundsError,
                     NoCertificateError, NoSlaterError, PostconditionError,
                     SolutionNotUniqueError)
from .functions import _pow
from .geometry import distance_to_set, sublevel_distance
from .moduli import (Kind, LiminfQuery, ModulusEstimate, TraceRow, build_trace,
                     estimate_Er, liminf_estimate, shell_points)
from .sip import (SIProgram, _affine_rows, _cone_test, _objective_pieces, active_indices,
                  enc_check, f_D, is_optimal, kkt_check, kkt_subsets,
                  level_preimage_distance, parameter_norm, slater_point, solve,
                  sup_function)

THETA = 1e-3
DECAY_SLOPE = 0.1


class MapKind(str, Enum):
    FULL = "FullS"
    PARTIAL = "PartialS_c"
    LEVEL = "LevelL"


class CalmVerdict(str, Enum):
    CALM = "CALM"
    NOT_CALM = "NOT CALM"
    INCONCLUSIVE = "INCONCLUSIVE"


@dataclass(frozen=True)
class Perturbation:
    """Parameters (c, b); for the level map ``c`` holds the one-element level shift."""

    c: np.ndarray
    b: np.ndarray
    norm: float


@dataclass
class CalmnessReport:
    kind: MapKind
    q: float
    estimate: ModulusEstimate
    adversarial_paths: list = field(default_factory=list)  # per shell: (Perturbation, x, ratio)
    verdict: CalmVerdict = CalmVerdict.INCONCLUSIVE
    solver_failures: int = 0


# ------------------------------------------------------------------ verdicts

def calm_verdict(estimate: ModulusEstimate, theta: float = THETA,
                 decay_slope: float = DECAY_SLOPE) -> CalmVerdict:
    """Classify the tail of a liminf trace.

    All tail minima below theta means not calm; all above means calm unless the
    minima fall steadily like a power of the radius (log-log slope at least
    ``decay_slope``), which signals a zero liminf reached slowly.
    """
    tail = [s for s in estimate.trace.tail_shells() if s.count > 0]
    vals = np.array([s.min_value for s in tail])
    if vals.size == 0:
        return CalmVerdict.INCONCLUSIVE
    if np.all(vals < theta):
        return CalmVerdict.NOT_CALM
    if not np.all(vals >= theta):
        return CalmVerdict.INCONCLUSIVE
    if vals.size >= 3 and np.all(np.isfinite(vals)) and np.all(np.diff(vals) < 0):
        radii = np.array([s.radius for s in tail])
        slope = np.polyfit(np.log(radii), np.log(vals), 1)[0]
        if slope >= decay_slope:
            return CalmVerdict.NOT_CALM
    return CalmVerdict.CALM


# ------------------------------------------------------------------ parameter shells

def _scaled_to_norm(dc: np.ndarray, db: np.ndarray, rho: float):
    nrm = parameter_norm(dc, db)
    return dc * (rho / nrm), db * (rho / nrm)


def _rhs_shell(m: int, k: int, query: LiminfQuery) -> list[np.ndarray]:
    """b-perturbations with |db|_inf in shell k."""
    outer = query.r0 * query.gamma ** k
    inner = outer * query.gamma
    if m == 1:
        half = max(1, query.samples_1d // 2)
        rho = inner + (outer - inner) * np.arange(1, half + 1) / half
        return [np.array([s]) for s in np.concatenate([-rho[::-1], rho])]
    out = []
    for j in range(query.samples_nd):
        rng = np.random.default_rng([query.seed, k, j, 0])
        db = rng.uniform(-1.0, 1.0, m)
        db[rng.integers(m)] = rng.choice([-1.0, 1.0])
        out.append(db * (inner + (outer - inner) * rng.random()))
    return out


def _joint_shell(n: int, m: int, k: int, query: LiminfQuery) -> list[tuple[np.ndarray, np.ndarray]]:
    outer = query.r0 * query.gamma ** k
    inner = outer * query.gamma
    count = query.samples_1d if n + m == 1 else query.samples_nd
    out = []
    for j in range(count):
        rng = np.random.default_rng([query.seed, k, j, 1])
        dc = rng.standard_normal(n)
        dc *= rng.random() / np.linalg.norm(dc)
        db = rng.uniform(-1.0, 1.0, m)
        out.append(_scaled_to_norm(dc, db, inner + (outer - inner) * rng.random()))
    return out


def parameter_shell(P: SIProgram, kind: MapKind, k: int, query: LiminfQuery) -> list[Perturbation]:
    """Perturbed parameters of shell k. The full map reuses every fixed-c sample."""
    m = P.b.size
    out = [Perturbation(P.c, P.b + db, parameter_norm(np.zeros(P.n), db)) for db in _rhs_shell(m, k, query)]
    if kind is MapKind.FULL:
        out += [Perturbation(P.c + dc, P.b + db, parameter_norm(dc, db))
                for dc, db in _joint_shell(P.n, m, k, query)]
    return out


# ------------------------------------------------------------------ estimation

def _check_base(P: SIProgram, xbar) -> np.ndarray:
    xbar = np.asarray(xbar, dtype=float).reshape(P.n)
    if not is_optimal(P, xbar):
        raise CenterNotOptimalError("xbar does not solve the program")
    return xbar


def estimate_clm(P: SIProgram, xbar, q: float, kind: MapKind | str = MapKind.PARTIAL,
                 query: LiminfQuery = LiminfQuery(), theta: float = THETA) -> CalmnessReport:
    """Sampled q-calmness rate of the chosen map at (c̄, b̄, x̄).

    Points with d(x, S(c̄, b̄)) = 0 never enter the liminf. The level map is
    sampled in x: each x near x̄ is paired with the smallest (alpha, b) move whose
    level set contains it.
    """
    kind = MapKind(kind)
    if not 0 < q:
        raise ValueError("q must be positive")
    xbar = _check_base(P, xbar)
    fbar = sup_function(P, xbar, check=False)
    level = P.objective_value(xbar)
    radii = query.radii()

    def admit(rows, radius, x, pert):
        d = sublevel_distance(fbar, x).distance
        if d > 0 and math.isfinite(d):
            rows.append((TraceRow(float(radius), np.asarray(x, dtype=float), pert.norm, d, math.nan,
                                  _pow(pert.norm, q) / d), pert))

    def run_shell(k: int):
        rows: list = []
        failed = 0
        if kind is MapKind.LEVEL:
            for x in shell_points(xbar, k, query):
                norm = level_preimage_distance(P, xbar, x)
                if norm <= 0:
                    continue
                alpha = max(level, P.objective_value(x))
                b = np.maximum(P.b, P.constraint_values(x))
                admit(rows, radii[k], x, Perturbation(np.array([alpha - level]), b, norm))
        else:
            for pert in parameter_shell(P, kind, k, query):
                try:
                    x = solve(P.with_parameters(pert.c, pert.b), certify=False).point
                except HolderBoundsError:
                    failed += 1
                    continue
                admit(rows, radii[k], x, pert)
        return rows, failed

    if query.workers > 1:
        with ThreadPoolExecutor(query.workers) as pool:
            results = list(pool.map(run_shell, range(query.K + 1)))
    else:
        results = [run_shell(k) for k in range(query.K + 1)]
    shell_rows = [rows for rows, _ in results]
    failures = sum(f for _, f in results)

    trace = build_trace(radii, [[r for r, _ in rows] for rows in shell_rows], query.tail)
    est = ModulusEstimate(Kind.CLM, q, trace.extracted_value, trace)
    paths = []
    for rows in shell_rows:
        if rows:
            row, pert = min(rows, key=lambda item: item[0].ratio)
            paths.append((pert, row.point, row.ratio))
    return CalmnessReport(kind, q, est, paths, calm_verdict(est, theta), failures)


# ------------------------------------------------------------------ perturbation builders

@dataclass
class P32Perturbation:
    b: np.ndarray
    N: float
    T0: list
    T0_minus: list
    phi: np.ndarray
    fbar_value: float
    feasible: bool
    contains_T0: bool
    within_bound: bool


def _ramp(values: np.ndarray, start: float, width: float) -> np.ndarray:
    """0 for values >= start, 1 for values <= start - width, linear between."""
    return np.clip((start - values) / width, 0.0, 1.0)


def build_perturbation_P32(P: SIProgram, xbar, x_r, certificate=None, strict: bool = True,
                           tol: float = 1e-12) -> P32Perturbation:
    """Right-hand side b_r making x_r feasible with every certificate index active,
    at distance at most (N + 1) f̄(x_r) from b̄."""
    xbar = np.asarray(xbar, dtype=float).reshape(P.n)
    x_r = np.asarray(x_r, dtype=float).reshape(P.n)
    cert = certificate if certificate is not None else kkt_check(P, xbar)
    if cert is None:
        raise NoCertificateError("no KKT certificate at xbar")
    fval = float(sup_function(P, xbar, check=False)(x_r))
    if not fval > 0:
        raise ValueError("x_r must lie outside the solution set (positive supremum function)")
    gam = {t: g for t, g, _ in cert.support}
    T0 = sorted(gam)
    gx = P.constraint_values(x_r)
    v = gx - P.b
    T0_minus = [t for t in T0 if v[t] < 0]
    plus_mass = sum(gam[t] for t in T0 if t not in T0_minus)
    N = max(((1.0 + plus_mass) / gam[t] for t in T0_minus), default=1.0)

    phi = _ramp(v, -N * fval, fval)
    b = (1 - phi) * gx + phi * (P.b + fval)
    out = P32Perturbation(
        b=b, N=N, T0=T0, T0_minus=T0_minus, phi=phi, fbar_value=fval,
        feasible=bool(np.all(gx <= b)),
        contains_T0=all(b[t] - gx[t] <= P.eps_act for t in T0),
        within_bound=float(np.max(np.abs(b - P.b), initial=0.0)) <= (N + 1) * fval * (1 + tol))
    if strict and not (out.feasible and out.contains_T0 and out.within_bound):
        raise PostconditionError(f"perturbation postcondition failed at x_r = {x_r}")
    return out


@dataclass
class T602Perturbation:
    b: np.ndarray
    phi: np.ndarray
    fD_value: float
    feasible: bool
    contains_D: bool
    within_bound: bool
    ratio: float
    ratio_bound: float


def _require_kkt_subset(P: SIProgram, xbar, D, tol: float = 1e-8) -> None:
    if not set(D) <= set(active_indices(P, xbar)) or _cone_test(P, xbar, D)[2].residual > tol:
        raise ValueError(f"D = {tuple(D)} does not pass the KKT cone test at xbar")


def build_perturbation_T602(P: SIProgram, xbar, D: Sequence[int], x_r, r: float, q: float = 1.0,
                            strict: bool = True, tol: float = 1e-12) -> T602Perturbation:
    """Right-hand side b_r keeping D active at x_r, within (1 + 1/r) f_D(x_r) of b̄."""
    if not r > 0:
        raise ValueError("r must be positive")
    xbar = np.asarray(xbar, dtype=float).reshape(P.n)
    x_r = np.asarray(x_r, dtype=float).reshape(P.n)
    D = sorted(D)
    _require_kkt_subset(P, xbar, D)
    fD = f_D(P, xbar, D)
    fval = float(fD(x_r))
    if not fval > 0:
        raise ValueError("f_D(x_r) must be positive")
    gx = P.constraint_values(x_r)
    v = gx - P.b
    full = v <= -(1 + 1 / r) * fval
    if any(full[t] for t in D):
        raise DisjointnessViolationError("an index of D lies in the saturated region")
    phi = _ramp(v, -fval, fval / r)
    phi[D] = 0.0
    b = (1 - phi) * gx + phi * (P.b + fval)
    move = float(np.max(np.abs(b - P.b), initial=0.0))
    s = distance_to_set(fD.subdifferential(x_r))
    out = T602Perturbation(
        b=b, phi=phi, fD_value=fval,
        feasible=bool(np.all(gx <= b)),
        contains_D=all(b[t] - gx[t] <= P.eps_act for t in D),
        within_bound=move <= (1 + 1 / r) * fval * (1 + tol),
        ratio=_pow(move, q) / float(np.linalg.norm(x_r - xbar)),
        ratio_bound=_pow(1 + 1 / r, q) * _pow(fval, q - 1) * s)
    if strict and not (out.feasible and out.contains_D and out.within_bound):
        raise PostconditionError(f"perturbation postcondition failed at x_r = {x_r}")
    return out


# ------------------------------------------------------------------ upper bound

@dataclass
class UpperBound:
    value: float
    argmin_D: tuple | None
    estimates: dict  # D -> ModulusEstimate


def _linear_face_is_point(P: SIProgram, xbar: np.ndarray, tol: float = 1e-9) -> bool:
    n = P.n
    rows, rhs = [], []
    A, k = _affine_rows(P.constraints, n)
    rows += list(A)
    rhs += list(P.b - k)
    level = P.objective_value(xbar)
    Af, kf = _affine_rows(_objective_pieces(P.objective), n)
    rows += [a + P.c for a in Af]
    rhs += [level - kk for kk in kf]
    for i in range(n):
        for sign in (1.0, -1.0):
            try:
                res = lp.solve_inequality_lp(sign * np.eye(n)[i], np.array(rows), np.array(rhs))
            except HolderBoundsError:
                return False
            if abs(res.x[i] - xbar[i]) > tol * (1 + abs(xbar[i])):
                return False
    return True


def _probe_isolated(fbar, xbar: np.ndarray, h: float = 1e-4, count: int = 64) -> bool:
    rng = np.random.default_rng(0)
    dirs = np.vstack([np.eye(xbar.size), -np.eye(xbar.size), rng.standard_normal((count, xbar.size))])
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return bool(np.all(fbar.values(xbar + h * dirs) > 0))


def upper_bound_T602(P: SIProgram, xbar, q: float, query: LiminfQuery = LiminfQuery()) -> UpperBound:
    """inf over KKT subsets D of liminf f_D^(q-1) d(0, subdiff f_D) as x -> x̄ with f_D > 0.

    Needs a Slater point and a unique solution x̄; uniqueness is exact for linear
    programs and probed along sample directions otherwise.
    """
    if not 0 < q <= 1:
        raise ValueError("q must lie in (0, 1]")
    if slater_point(P) is None:
        raise NoSlaterError("upper bound needs a Slater point")
    xbar = _check_base(P, xbar)
    unique = (_linear_face_is_point(P, xbar) if P.is_linear
              else _probe_isolated(sup_function(P, xbar, check=False), xbar))
    if not unique:
        raise SolutionNotUniqueError("the solution set is not a single point")

    def ratio(fx, d, s):
        return _pow(fx, q - 1) * s

    estimates = {}
    for D in kkt_subsets(P, xbar).subsets:
        estimates[D] = liminf_estimate(f_D(P, xbar, D), xbar, q, query, Kind.CLM, ratio,
                                       need_d=False, need_s=True, ceiling=False)
    if not estimates:
        return UpperBound(math.inf, None, estimates)
    best = min(estimates, key=lambda D: estimates[D].value)
    return UpperBound(estimates[best].value, best, estimates)


# ------------------------------------------------------------------ consistency checks

@dataclass
class ChainReport:
    verdicts: dict  # "i".."iv" -> CalmVerdict
    estimates: dict  # "i".."iv" -> ModulusEstimate
    implications_ok: bool
    problems: list = field(default_factory=list)


def check_equivalence_chain(P: SIProgram, xbar, q: float, query: LiminfQuery = LiminfQuery(),
                            theta: float = THETA) -> ChainReport:
    """Compare calmness of the full map (i), the fixed-c map (ii), the level map (iii)
    and the error bound of the supremum function (iv).

    Required: (iii) and (iv) agree, (iv) implies (i) and (ii), and for linear
    programs all four agree. Inconclusive verdicts never count as violations.
    """
    xbar = _check_base(P, xbar)
    er = estimate_Er(sup_function(P, xbar, check=False), xbar, q, query)
    ests = {
        "i": estimate_clm(P, xbar, q, MapKind.FULL, query, theta).estimate,
        "ii": estimate_clm(P, xbar, q, MapKind.PARTIAL, query, theta).estimate,
        "iii": estimate_clm(P, xbar, q, MapKind.LEVEL, query, theta).estimate,
        "iv": er,
    }
    verdicts = {key: calm_verdict(e, theta) for key, e in ests.items()}
    undecided = CalmVerdict.INCONCLUSIVE
    problems = []

    def clash(a, b):
        return undecided not in (verdicts[a], verdicts[b]) and verdicts[a] != verdicts[b]

    if clash("iii", "iv"):
        problems.append("level map and error bound disagree")
    if verdicts["iv"] is CalmVerdict.CALM:
        for key in ("i", "ii"):
            if verdicts[key] is CalmVerdict.NOT_CALM:
                problems.append(f"error bound holds but map ({key}) is not calm")
    if P.is_linear:
        for key in ("i", "ii", "iii"):
            if clash(key, "iv"):
                problems.append(f"linear program: map ({key}) disagrees with the error bound")
    return ChainReport(verdicts, ests, not problems, problems)


@dataclass
class EqualityProbe:
    status: str  # EQUAL, DIFFERENT or SKIPPED_NO_ENC
    full: ModulusEstimate | None = None
    partial: ModulusEstimate | None = None
    tolerance: float = 0.0


def clm_enc_equality_probe(P: SIProgram, xbar, q: float, query: LiminfQuery = LiminfQuery(),
                           rel_tol: float = 1e-6) -> EqualityProbe:
    """Under the extended nondegeneracy condition the full and fixed-c rates coincide."""
    xbar = np.asarray(xbar, dtype=float).reshape(P.n)
    if not enc_check(P, xbar).enc_holds:
        return EqualityProbe("SKIPPED_NO_ENC")
    full = estimate_clm(P, xbar, q, MapKind.FULL, query).estimate
    part = estimate_clm(P, xbar, q, MapKind.PARTIAL, query).estimate
    tol = full.trace.tail_spread + part.trace.tail_spread + rel_tol * max(1.0, abs(part.value))
    status = "EQUAL" if abs(full.value - part.value) <= tol else "DIFFERENT"
    return EqualityProbe(status, full, part, tol)
