"""Discretized convex semi-infinite programs

    minimize f(x) + <c, x>  subject to  g_t(x) <= b_t,  t in T,

with T a finite grid. Linear instances go through the internal simplex; convex
ones through a subgradient warm start followed by a smooth polish, and every
returned point is checked against the KKT cone condition.
"""
from __future__ import annotations

import dataclasses
import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from . import lp
from .errors import (ActiveSetTooLargeError, CenterNotOptimalError, InfeasibleError,
                     NoCertificateError, NoSlaterError, UnboundedError)
from .functions import EPS_ACT, FinGenConvexSet, FunctionHandle, MaxFamily, Smooth, SmoothPiece


@dataclass(frozen=True)
class IndexGrid:
    points: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        pts = pts.reshape(pts.shape[0], -1) if pts.ndim else pts.reshape(1, 1)
        if len({tuple(p) for p in pts}) != pts.shape[0]:
            raise ValueError("grid points must be pairwise distinct")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    def distance(self, i: int, j: int) -> float:
        return float(np.linalg.norm(self.points[i] - self.points[j]))


def _objective_pieces(f: FunctionHandle) -> list[SmoothPiece]:
    if isinstance(f, MaxFamily):
        return list(f.pieces)
    if isinstance(f, Smooth):
        return [f.piece]
    raise TypeError("objective must be Smooth or MaxFamily")


@dataclass(frozen=True)
class SIProgram:
    objective: FunctionHandle
    c: np.ndarray
    constraints: tuple
    b: np.ndarray
    grid: IndexGrid | None = None
    eps_act: float = EPS_ACT
    name: str = ""

    def __post_init__(self):
        cons = tuple(self.constraints)
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if len(cons) != b.size:
            raise ValueError("need one right-hand side per constraint")
        if any(g.dim != c.size for g in cons) or self.objective.dim != c.size:
            raise ValueError("dimension mismatch")
        if not all(g.convex for g in cons) or not self.objective.convex:
            raise ValueError("objective and constraints must be convex")
        _objective_pieces(self.objective)
        grid = self.grid or IndexGrid(np.arange(len(cons), dtype=float)[:, None], "index labels")
        if len(grid) != len(cons):
            raise ValueError("grid size must match the constraint count")
        object.__setattr__(self, "constraints", cons)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "grid", grid)

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def is_linear(self) -> bool:
        return all(p.affine for p in _objective_pieces(self.objective)) and all(g.affine for g in self.constraints)

    def with_parameters(self, c=None, b=None) -> "SIProgram":
        return dataclasses.replace(self, c=self.c if c is None else c, b=self.b if b is None else b)

    def constraint_values(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(self.n)
        return np.array([g(x) for g in self.constraints])

    def objective_value(self, x) -> float:
        x = np.asarray(x, dtype=float).reshape(self.n)
        return self.objective(x) + float(self.c @ x)


def parameter_norm(c, b) -> float:
    """max(||c||_2, ||b||_inf)."""
    return max(float(np.linalg.norm(np.asarray(c, dtype=float))),
               float(np.max(np.abs(np.asarray(b, dtype=float)), initial=0.0)))


def feasible(P: SIProgram, x, tol: float = 1e-12) -> bool:
    return bool(np.all(P.constraint_values(x) <= P.b + tol))


def active_indices(P: SIProgram, x, eps_act: float | None = None) -> list[int]:
    eps = P.eps_act if eps_act is None else eps_act
    return [int(t) for t in np.flatnonzero(P.b - P.constraint_values(x) <= eps)]


# ------------------------------------------------------------------ Slater

def _affine_rows(pieces: Sequence[SmoothPiece], n: int):
    A = np.array([p.grad(np.zeros(n)) for p in pieces]).reshape(-1, n)
    k = np.array([p(np.zeros(n)) for p in pieces])
    return A, k


def _max_margin(P: SIProgram, cap: float = 1.0):
    """max s subject to g_t(x) + s <= b_t, s <= cap; returns (x, s)."""
    n = P.n
    if not P.constraints:
        return np.zeros(n), cap
    if all(g.affine for g in P.constraints):
        A, k = _affine_rows(P.constraints, n)
        A_ub = np.vstack([np.hstack([A, np.ones((A.shape[0], 1))]), np.eye(1, n + 1, n)])
        b_ub = np.concatenate([P.b - k, [cap]])
        res = lp.solve_inequality_lp(-np.eye(1, n + 1, n).ravel(), A_ub, b_ub)
        return res.x[:n], float(res.x[n])
    cons = [{"type": "ineq", "fun": (lambda z, g=g, bt=bt: bt - g(z[:n]) - z[n]),
             "jac": (lambda z, g=g: np.concatenate([-g.grad(z[:n]), [-1.0]]))}
            for g, bt in zip(P.constraints, P.b)]
    cons.append({"type": "ineq", "fun": lambda z: cap - z[n], "jac": lambda z: -np.eye(1, n + 1, n).ravel()})
    z0 = np.zeros(n + 1)
    z0[n] = float(np.min(P.b - P.constraint_values(np.zeros(n))))
    res = minimize(lambda z: -z[n], z0, jac=lambda z: -np.eye(1, n + 1, n).ravel(),
                   constraints=cons, method="SLSQP", options={"maxiter": 500, "ftol": 1e-14})
    x = res.x[:n]
    return x, float(np.min(P.b - P.constraint_values(x)))


def slater_point(P: SIProgram, margin: float = 1e-9):
    """A strictly feasible point, or None when the best margin is at most ``margin``."""
    x, s = _max_margin(P)
    return x if s > margin else None


# ------------------------------------------------------------------ supremum function

def sup_function(P: SIProgram, xbar, check: bool = True) -> MaxFamily:
    """max{ f + <c,.> - (f(xbar) + <c,xbar>) ; g_t - b_t }, zero at xbar.

    The objective pieces come first, then one piece per index in grid order.
    """
    xbar = np.asarray(xbar, dtype=float).reshape(P.n)
    if check and not is_optimal(P, xbar):
        raise CenterNotOptimalError("xbar does not solve the program")
    level = P.objective_value(xbar)
    pieces = [p.shifted(P.c, -level) for p in _objective_pieces(P.objective)]
    pieces += [g.shifted(None, -bt) for g, bt in zip(P.constraints, P.b)]
    return MaxFamily(tuple(pieces), P.eps_act)


def sup_subdifferential(P: SIProgram, xbar, x) -> FinGenConvexSet:
    return sup_function(P, xbar, check=False).subdifferential(np.asarray(x, dtype=float).reshape(P.n))


def level_preimage_distance(P: SIProgram, xbar, x) -> float:
    """Distance in the (alpha, b) parameter space from (level(xbar), b) to the set of
    parameters whose level set contains x."""
    x = np.asarray(x, dtype=float).reshape(P.n)
    level = P.objective_value(np.asarray(xbar, dtype=float).reshape(P.n))
    gaps = np.concatenate([[P.objective_value(x) - level], P.constraint_values(x) - P.b])
    return float(np.max(np.maximum(gaps, 0.0)))


# ------------------------------------------------------------------ KKT

@dataclass
class KKTCertificate:
    u: np.ndarray
    support: list  # (t, gamma_t, u_t)
    residual: float

    @property
    def multiplier_sum(self) -> float:
        return float(sum(g for _, g, _ in self.support))

    @property
    def indices(self) -> list[int]:
        return [t for t, _, _ in self.support]


def _caratheodory(vectors: np.ndarray, weights: np.ndarray, tol: float = 1e-12):
    """Reduce a conic combination to at most dim linearly independent vectors."""
    idx = [i for i in range(len(weights)) if weights[i] > tol]
    w = weights.copy()
    while True:
        V = vectors[idx]
        if len(idx) == 0 or np.linalg.matrix_rank(V) == len(idx):
            break
        null = np.linalg.svd(V.T)[2][-1]
        if null.max() <= 0:
            null = -null
        pos = null > 1e-14
        ratios = w[idx][pos] / null[pos]
        theta = ratios.min()
        w[idx] = w[idx] - theta * null
        drop = idx[int(np.flatnonzero(pos)[int(np.argmin(ratios))])]
        w[drop] = 0.0
        idx = [i for i in idx if w[i] > tol]
    out = np.zeros_like(weights)
    out[idx] = w[idx]
    return out


def _cone_test(P: SIProgram, x, D: Sequence[int]):
    """Best representation of 0 = u + c + sum gamma_t v_t with u in subdiff f(x), t in D."""
    x = np.asarray(x, dtype=float).reshape(P.n)
    sf = P.objective.subdifferential(x)
    grads = np.array([P.constraints[t].grad(x) for t in D]).reshape(-1, P.n)
    cone = np.vstack([sf.rays, grads])
    rep = lp.best_representation(np.zeros(P.n), sf.generators + P.c, cone)
    return sf, grads, rep


def kkt_check(P: SIProgram, x, eps_act: float | None = None, tol: float = 1e-8,
              require_slater: bool = True) -> KKTCertificate | None:
    """Certificate for -(subdiff f(x) + c) meeting cone(active gradients), or None."""
    if require_slater and slater_point(P) is None:
        raise NoSlaterError("KKT characterization needs a Slater point")
    x = np.asarray(x, dtype=float).reshape(P.n)
    active = active_indices(P, x, eps_act)
    sf, grads, rep = _cone_test(P, x, active)
    if rep.residual > tol:
        return None
    k = sf.rays.shape[0]
    gamma = _caratheodory(grads, rep.cone_weights[k:]) if active else np.zeros(0)
    u = rep.hull_weights @ sf.generators + rep.cone_weights[:k] @ sf.rays
    support = [(active[i], float(gamma[i]), grads[i]) for i in range(len(active)) if gamma[i] > 0]
    resid = P.c + u + sum((g * v for _, g, v in support), np.zeros(P.n))
    return KKTCertificate(u, support, float(np.linalg.norm(resid)))


def _enumeration_size(m: int, kmax: int) -> int:
    return sum(math.comb(m, k) for k in range(0, min(m, kmax) + 1))


@dataclass
class ENCReport:
    enc_holds: bool
    slater: bool
    violating_D: tuple | None = None


def enc_check(P: SIProgram, xbar, budget: int = 10 ** 6, tol: float = 1e-8) -> ENCReport:
    """No D among the active indices with |D| < n passes the KKT cone test."""
    xbar = np.asarray(xbar, dtype=float).reshape(P.n)
    if slater_point(P) is None:
        return ENCReport(False, False)
    active = active_indices(P, xbar)
    if _enumeration_size(len(active), P.n - 1) > budget:
        raise ActiveSetTooLargeError(f"{len(active)} active indices")
    for k in range(0, min(len(active), P.n - 1) + 1):
        for D in itertools.combinations(active, k):
            if _cone_test(P, xbar, D)[2].residual <= tol:
                return ENCReport(False, True, D)
    return ENCReport(True, True)


@dataclass
class KKTSubsetFamily:
    subsets: list = field(default_factory=list)       # tuples of indices
    certificates: list = field(default_factory=list)  # hull/cone weights per subset

    def __contains__(self, D) -> bool:
        return tuple(sorted(D)) in self.subsets


def kkt_subsets(P: SIProgram, xbar, budget: int = 10 ** 6, tol: float = 1e-8) -> KKTSubsetFamily:
    """All D among the active indices with |D| <= n passing the cone test, lexicographic."""
    xbar = np.asarray(xbar, dtype=float).reshape(P.n)
    active = active_indices(P, xbar)
    if _enumeration_size(len(active), P.n) > budget:
        raise ActiveSetTooLargeError(f"{len(active)} active indices")
    fam = KKTSubsetFamily()
    for k in range(0, min(len(active), P.n) + 1):
        for D in itertools.combinations(active, k):
            rep = _cone_test(P, xbar, D)[2]
            if rep.residual <= tol:
                fam.subsets.append(tuple(D))
                fam.certificates.append(rep)
    return fam


def f_D(P: SIProgram, xbar, D: Sequence[int]) -> MaxFamily:
    """max{ g_t - b_t (all t) ; b_t - g_t (t in D) }."""
    pieces = [g.shifted(None, -bt) for g, bt in zip(P.constraints, P.b)]
    pieces += [P.constraints[t].shifted(None, -P.b[t]).negated() for t in D]
    return MaxFamily(tuple(pieces), P.eps_act)


# ------------------------------------------------------------------ solver

@dataclass
class Solution:
    point: np.ndarray
    value: float
    certificate: KKTCertificate | None
    vertices: list = field(default_factory=list)
    notes: list = field(default_factory=list)


def _solve_linear(P: SIProgram):
    n = P.n
    obj = _objective_pieces(P.objective)
    Af, kf = _affine_rows(obj, n)
    rows, rhs = [], []
    # epigraph: a_i x + c x + k_i - s <= 0
    for a, k in zip(Af, kf):
        rows.append(np.concatenate([a + P.c, [-1.0]]))
        rhs.append(-k)
    if P.constraints:
        A, k = _affine_rows(P.constraints, n)
        for a, kt, bt in zip(A, k, P.b):
            rows.append(np.concatenate([a, [0.0]]))
            rhs.append(bt - kt)
    cost = np.eye(1, n + 1, n).ravel()
    res = lp.solve_inequality_lp(cost, np.array(rows), np.array(rhs))
    return res.x[:n], float(res.x[n])


def _optimal_vertices(P: SIProgram, value: float, budget: int = 10 ** 4, tol: float = 1e-9) -> list:
    """Vertices of the optimal face at desk scale (linear programs only)."""
    n = P.n
    A, k = _affine_rows(P.constraints, n)
    rows = list(range(len(P.constraints)))
    if math.comb(len(rows), n) > budget:
        return []
    found = []
    for S in itertools.combinations(rows, n):
        M = A[list(S)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, P.b[list(S)] - k[list(S)])
        if feasible(P, x, 1e-9) and P.objective_value(x) <= value + tol:
            if not any(np.allclose(x, y, atol=1e-10) for y in found):
                found.append(x)
    return found


def _subgradient_warm_start(P: SIProgram, x0, iters: int = 50):
    """Projected-subgradient iterations with averaging (constraint steps are Polyak steps)."""
    x = np.array(x0, dtype=float)
    avg, weight = np.zeros_like(x), 0.0
    for k in range(1, iters + 1):
        viol = P.constraint_values(x) - P.b
        t = int(np.argmax(viol)) if viol.size else -1
        if t >= 0 and viol[t] > 0:
            g = P.constraints[t].grad(x)
            gg = g @ g
            if gg == 0:
                raise InfeasibleError(f"constraint {t} violated with zero gradient")
            x = x - viol[t] / gg * g
            continue
        sf = P.objective.subdifferential(x)
        g = sf.generators[0] + P.c
        ng = np.linalg.norm(g)
        if ng == 0:
            return x
        step = 1.0 / math.sqrt(k)
        x = x - step * g / ng
        avg += step * x
        weight += step
    return avg / weight if weight else x


def _fd_hessian(piece: SmoothPiece, x: np.ndarray) -> np.ndarray:
    n = x.size
    H = np.zeros((n, n))
    for j in range(n):
        h = 1e-5 * max(1.0, abs(x[j]))
        e = np.zeros(n)
        e[j] = h
        H[:, j] = (piece.grad(x + e) - piece.grad(x - e)) / (2 * h)
    return 0.5 * (H + H.T)


def _kkt_residual(P: SIProgram, x: np.ndarray, active: list[int]) -> float:
    g = P.objective.subdifferential(x).generators[0] + P.c
    if not active:
        return float(np.linalg.norm(g))
    G = np.array([P.constraints[t].grad(x) for t in active])
    gamma = np.linalg.lstsq(G.T, -g, rcond=None)[0]
    return float(np.linalg.norm(g + G.T @ gamma))


def _newton_polish(P: SIProgram, x: np.ndarray, steps: int = 8) -> np.ndarray:
    """Newton steps on the KKT system of the detected active set (smooth objective only)."""
    if not isinstance(P.objective, Smooth):
        return x
    active = active_indices(P, x, 1e-7)
    best, best_res = x, _kkt_residual(P, x, active)
    for _ in range(steps):
        grad = P.objective.piece.grad(x) + P.c
        G = np.array([P.constraints[t].grad(x) for t in active]).reshape(-1, P.n)
        gamma = np.linalg.lstsq(G.T, -grad, rcond=None)[0] if active else np.zeros(0)
        H = _fd_hessian(P.objective.piece, x)
        for t, gm in zip(active, gamma):
            H = H + gm * _fd_hessian(P.constraints[t], x)
        k = len(active)
        M = np.zeros((P.n + k, P.n + k))
        M[:P.n, :P.n] = H
        M[:P.n, P.n:] = G.T
        M[P.n:, :P.n] = G
        rhs = np.concatenate([-(grad + G.T @ gamma), -(P.constraint_values(x)[active] - P.b[active])])
        step = np.linalg.lstsq(M, rhs, rcond=None)[0][:P.n]
        x = x + step
        if not feasible(P, x, 0.0):
            break
        res = _kkt_residual(P, x, active)
        if res <= best_res and P.objective_value(x) <= P.objective_value(best) + 1e-15:
            best, best_res = x, res
        if np.linalg.norm(step) <= 1e-16 * (1 + np.linalg.norm(x)):
            break
    return best


def _solve_convex(P: SIProgram):
    n = P.n
    x_ss, s = _max_margin(P)
    if s < -1e-9:
        raise InfeasibleError(f"best constraint margin {s:.3e}")
    x0 = _subgradient_warm_start(P, x_ss)
    obj = _objective_pieces(P.objective)
    # smooth epigraph polish of the warm start
    cons = [{"type": "ineq", "fun": (lambda z, p=p: z[n] - p(z[:n]) - P.c @ z[:n]),
             "jac": (lambda z, p=p: np.concatenate([-(p.grad(z[:n]) + P.c), [1.0]]))} for p in obj]
    cons += [{"type": "ineq", "fun": (lambda z, g=g, bt=bt: bt - g(z[:n])),
              "jac": (lambda z, g=g: np.concatenate([-g.grad(z[:n]), [0.0]]))}
             for g, bt in zip(P.constraints, P.b)]
    z0 = np.concatenate([x0, [P.objective_value(x0)]])
    res = minimize(lambda z: z[n], z0, jac=lambda z: np.eye(1, n + 1, n).ravel(), constraints=cons,
                   method="SLSQP", options={"maxiter": 1000, "ftol": 1e-16})
    x = res.x[:n]
    if not np.all(np.isfinite(x)) or np.linalg.norm(x) > 1e8:
        raise UnboundedError("iterates diverged")
    # restore exact feasibility when the polish overshoots by rounding
    viol = P.constraint_values(x) - P.b
    if viol.size and viol.max() > 0:
        lo, hi = 0.0, 1.0
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            if feasible(P, x + mid * (x_ss - x), 0.0):
                hi = mid
            else:
                lo = mid
        x = x + hi * (x_ss - x)
    x = _newton_polish(P, x)
    return x, P.objective_value(x)


def solve(P: SIProgram, all_vertices: bool = False, certify: bool = True,
          kkt_eps: float = 1e-6) -> Solution:
    """Solve P; convex solutions are certified by the KKT cone test at tolerance kkt_eps."""
    if P.is_linear:
        x, value = _solve_linear(P)
        sol = Solution(x, value, None)
        if all_vertices:
            sol.vertices = _optimal_vertices(P, value)
        if certify and slater_point(P) is not None:
            sol.certificate = kkt_check(P, x, eps_act=1e-9, require_slater=False)
        return sol
    x, value = _solve_convex(P)
    sol = Solution(x, value, None)
    if certify:
        if slater_point(P) is None:
            sol.notes.append("no Slater point: KKT certification skipped")
            return sol
        cert = kkt_check(P, x, eps_act=kkt_eps, tol=kkt_eps, require_slater=False)
        if cert is None:
            raise NoCertificateError(f"KKT test failed at {x}")
        sol.certificate = cert
    return sol


def is_optimal(P: SIProgram, x, tol: float = 1e-8) -> bool:
    """x is feasible and attains the optimal value within tol."""
    x = np.asarray(x, dtype=float).reshape(P.n)
    if not feasible(P, x, tol):
        return False
    return P.objective_value(x) <= solve(P, certify=False).value + tol


def multiplier_bound_probe(P: SIProgram, xbar, radius: float = 1e-2, count: int = 20,
                           seed: int = 0) -> float:
    """Largest multiplier sum seen over KKT certificates of nearby perturbed programs."""
    if slater_point(P) is None:
        raise NoSlaterError("probe needs a Slater point")
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(count):
        dc = rng.uniform(-1, 1, P.n)
        dc *= radius * rng.random() / max(np.linalg.norm(dc), 1e-300)
        db = rng.uniform(-radius, radius, P.b.size)
        Q = P.with_parameters(P.c + dc, P.b + db)
        try:
            sol = solve(Q)
        except (InfeasibleError, UnboundedError, NoCertificateError):
            continue
        if sol.certificate is not None:
            best = max(best, sol.certificate.multiplier_sum)
    return best
