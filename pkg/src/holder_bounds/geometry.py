"""Distances: d(0, S) for finitely generated sets and d(x, [f <= 0]) for handles."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import minimize, nnls

from .errors import DimensionTooLargeError, EmptySetError, NoConvergenceError
from .functions import FinGenConvexSet, FunctionHandle, MaxFamily, PlusPart, PowerWrap, Smooth


# ------------------------------------------------------------------ min-norm point

@dataclass
class MinNormResult:
    point: np.ndarray
    norm: float
    certificate: np.ndarray  # <p, g - p> per generator, then <p, r/|r|> per ray
    iterations: int = 0

    @property
    def certified(self) -> bool:
        return bool(self.certificate.size == 0 or self.certificate.min() >= -1e-9)


def _affine_minimizer(G: np.ndarray, R: np.ndarray):
    """Min-norm point of aff(G) + span(R), with coefficients (alpha sums to 1)."""
    A = np.vstack([G, R])
    k, j = G.shape[0], R.shape[0]
    M = np.zeros((k + j + 1, k + j + 1))
    M[:k + j, :k + j] = A @ A.T
    M[:k, -1] = 1.0
    M[-1, :k] = 1.0
    rhs = np.zeros(k + j + 1)
    rhs[-1] = 1.0
    sol = np.linalg.lstsq(M, rhs, rcond=None)[0]
    coef = sol[:k + j]
    return coef[:k], coef[k:], coef @ A


def min_norm_point(S: FinGenConvexSet, max_iter: int = 10_000) -> MinNormResult:
    """Wolfe's active-set method, extended so rays enter the corral as conic atoms.

    Generators carry affine weights summing to one, rays carry free weights in
    the affine subproblem; the minor cycle keeps all weights nonnegative.
    """
    if S.is_empty:
        raise EmptySetError("min-norm point of the empty set")
    G = S.generators
    # only ray directions matter; unit rays keep the affine subproblem well scaled
    rn = np.linalg.norm(S.rays, axis=1) if S.rays.size else np.zeros(0)
    R_unit = np.where(rn[:, None] > 0, S.rays / np.where(rn > 0, rn, 1.0)[:, None], 0.0) if rn.size else S.rays
    R = R_unit[rn > 0] if rn.size else S.rays
    scale = max(1.0, float(np.max(np.abs(G))) ** 2, float(np.max(np.abs(R), initial=0.0)) ** 2)
    tol = 1e-13 * scale

    i0 = int(np.argmin(np.einsum("ij,ij->i", G, G)))
    gens, rays = [i0], []
    lam, mu = np.array([1.0]), np.zeros(0)
    p = G[i0].copy()

    it = 0
    for it in range(1, max_iter + 1):
        pp = p @ p
        if pp <= tol * 1e-6:
            break
        gaps = G @ p - pp
        rgaps = R @ p if R.size else np.zeros(0)
        jg = int(np.argmin(gaps))
        jr = int(np.argmin(rgaps)) if rgaps.size else -1
        # normalize ray scores so both kinds of atom compete on equal terms
        rcos = rgaps[jr] / max(np.linalg.norm(R[jr]), 1e-300) / math.sqrt(pp) if jr >= 0 else 0.0
        rscore = rcos * pp
        # any ray at an obtuse angle to p helps, however small p is
        ray_helps = rcos < -1e-10
        if gaps[jg] >= -tol and not ray_helps:
            break
        if gaps[jg] < -tol and (gaps[jg] <= rscore or not ray_helps):
            if jg in gens:
                break
            gens.append(jg)
            lam = np.append(lam, 0.0)
        else:
            if jr in rays:
                break
            rays.append(jr)
            mu = np.append(mu, 0.0)

        while True:
            alpha, beta, y = _affine_minimizer(G[gens], R[rays] if rays else np.zeros((0, G.shape[1])))
            if np.all(alpha > 1e-14) and np.all(beta > 1e-14):
                lam, mu, p = alpha, beta, y
                break
            # step from (lam, mu) toward (alpha, beta) until a weight hits zero
            old = np.concatenate([lam, mu])
            new = np.concatenate([alpha, beta])
            drop = new <= 1e-14
            theta = min(1.0, float(np.min(old[drop] / np.maximum(old[drop] - new[drop], 1e-300))))
            mix = old + theta * (new - old)
            mix[np.abs(mix) <= 1e-14] = 0.0
            lam_new, mu_new = mix[:len(gens)], mix[len(gens):]
            keep_g = [i for i, w in enumerate(lam_new) if w > 0]
            keep_r = [i for i, w in enumerate(mu_new) if w > 0]
            if not keep_g:  # cannot lose every generator; keep the heaviest
                keep_g = [int(np.argmax(lam_new))]
            gens = [gens[i] for i in keep_g]
            rays = [rays[i] for i in keep_r]
            lam = lam_new[keep_g] / lam_new[keep_g].sum()
            mu = mu_new[keep_r]
            p = lam @ G[gens] + (mu @ R[rays] if rays else 0.0)
    else:
        raise NoConvergenceError("min-norm iteration budget exhausted")

    cert = np.concatenate([G @ p - p @ p, R_unit @ p if R_unit.size else np.zeros(0)])
    return MinNormResult(point=p, norm=float(np.linalg.norm(p)), certificate=cert, iterations=it)


def distance_to_set(S: FinGenConvexSet) -> float:
    """d(0, S), with d(0, empty) = +inf."""
    if S.is_empty:
        return math.inf
    return min_norm_point(S).norm


# ------------------------------------------------------------------ sublevel distance

class Status(str, Enum):
    EXACT = "EXACT"
    CERTIFIED = "CERTIFIED"
    ORACLE = "ORACLE"
    EMPTY = "EMPTY"
    NO_CONVERGENCE = "NO_CONVERGENCE"


@dataclass
class SublevelDistance:
    distance: float
    witness: np.ndarray | None
    status: Status
    tolerance: float = 0.0
    region: float | None = None
    notes: list[str] = field(default_factory=list)


def _sublevel_base(f: FunctionHandle) -> FunctionHandle:
    """[PowerWrap(PlusPart(g)) <= 0] == [PlusPart(g) <= 0] == [g <= 0]."""
    while isinstance(f, (PlusPart, PowerWrap)):
        f = f.inner
    return f


def _first_descent_1d(f: FunctionHandle, x: float, sign: float, reach: float) -> float | None:
    """Smallest s in (0, reach] (up to bracketing) with f(x + sign*s) <= 0, refined by bisection."""
    # geometric scan from the far end inward, plus breakpoints, sorted by distance
    scan = reach * 2.0 ** (-np.arange(0, 240) / 4.0)
    lo_pt, hi_pt = sorted((x, x + sign * reach))
    bps = f.special_points(lo_pt, hi_pt)
    extra = np.abs(bps - x)
    s_grid = np.unique(np.concatenate([scan, extra[extra > 0]]))
    pts = x + sign * s_grid
    vals = f.values(pts[:, None])
    hits = np.flatnonzero(vals <= 0.0)
    if hits.size == 0:
        return None
    j = int(hits[0])
    s_in = float(s_grid[j])
    s_out = float(s_grid[j - 1]) if j > 0 else 0.0
    # bisection with a relative width stop so tiny distances keep full precision
    for _ in range(400):
        width = s_in - s_out
        if width <= 1e-14 * s_in:
            break
        mid = s_out + 0.5 * width
        if mid <= s_out or mid >= s_in:
            break
        if f(x + sign * mid) <= 0.0:
            s_in = mid
        else:
            s_out = mid
    return s_in


def _distance_1d(f: FunctionHandle, x: float, reach: float) -> SublevelDistance:
    if f(x) <= 0.0:
        return SublevelDistance(0.0, np.array([x]), Status.EXACT)
    best, witness = math.inf, None
    for sign in (-1.0, 1.0):
        s = _first_descent_1d(f, x, sign, reach)
        if s is not None and s < best:
            best, witness = s, np.array([x + sign * s])
    if witness is None:
        return SublevelDistance(math.inf, None, Status.EMPTY, region=reach)
    return SublevelDistance(best, witness, Status.EXACT, tolerance=1e-14 * best)


def _pieces(f: FunctionHandle):
    if isinstance(f, MaxFamily):
        return list(f.pieces)
    if isinstance(f, Smooth):
        return [f.piece]
    raise TypeError(f"no n-dimensional projection for {type(f).__name__}")


FEAS_TOL = 1e-12
_SUBSET_BUDGET = 5000


def _project_polyhedron(A: np.ndarray, b: np.ndarray, x: np.ndarray):
    """Exact projection of x onto {u : A u + b <= 0} by active-set enumeration.

    Returns None when the enumeration budget is exceeded or no subset passes
    (empty polyhedron). KKT conditions are sufficient for this convex QP, so the
    first subset passing primal and dual feasibility is optimal.
    """
    m, n = A.shape
    if sum(math.comb(m, k) for k in range(min(m, n) + 1)) > _SUBSET_BUDGET:
        return None
    scale = max(1.0, float(np.abs(A).max()))
    for k in range(min(m, n) + 1):
        for S in itertools.combinations(range(m), k):
            if k == 0:
                u, lam = x, np.zeros(0)
            else:
                As = A[list(S)]
                gram = As @ As.T
                if np.linalg.matrix_rank(gram) < k:
                    continue
                lam = np.linalg.solve(gram, As @ x + b[list(S)])
                u = x - As.T @ lam
            if np.all(lam >= -1e-12 * scale) and np.all(A @ u + b <= 1e-12 * scale * max(1.0, np.abs(u).max())):
                return u
    return None




def _distance_nd(f: FunctionHandle, x: np.ndarray, tol: float, max_iter: int) -> SublevelDistance:
    pieces = _pieces(f)
    fx = f(x)
    if fx <= 0.0:
        return SublevelDistance(0.0, x.copy(), Status.EXACT)

    if all(p.affine for p in pieces):
        A = np.array([p.grad(x) for p in pieces])
        b = np.array([p(np.zeros_like(x)) for p in pieces])
        u = _project_polyhedron(A, b, x)
        if u is not None:
            return SublevelDistance(float(np.linalg.norm(u - x)), u, Status.EXACT)

    # work in v = (u - x) / sigma so that tiny distances are solved at unit scale
    sigma = 0.0
    for p in pieces:
        g = p.grad(x)
        if p(x) > 0 and np.linalg.norm(g) > 0:
            sigma = max(sigma, p(x) / np.linalg.norm(g))
    sigma = sigma if sigma > 0 else 1.0
    feas = FEAS_TOL * min(1.0, sigma)

    cons = [{"type": "ineq", "fun": (lambda v, p=p: -p(x + sigma * v) / sigma),
             "jac": (lambda v, p=p: -p.grad(x + sigma * v))} for p in pieces]
    res = minimize(lambda v: 0.5 * v @ v, np.zeros_like(x), jac=lambda v: v,
                   constraints=cons, method="SLSQP", options={"maxiter": max_iter, "ftol": 1e-16})
    u = x + sigma * res.x
    if f(u) > feas:
        # a point of least f value proves emptiness or anchors the feasibility repair
        n = x.size
        epi = [{"type": "ineq",
                "fun": (lambda z, p=p: z[-1] - p(z[:-1])),
                "jac": (lambda z, p=p: np.concatenate([-p.grad(z[:-1]), [1.0]]))} for p in pieces]
        res0 = minimize(lambda z: z[-1], np.concatenate([u, [f(u)]]), jac=lambda z: np.eye(n + 1)[-1],
                        constraints=epi, method="SLSQP", options={"maxiter": max_iter, "ftol": 1e-15})
        anchor = res0.x[:-1]
        if f(anchor) > feas:
            return SublevelDistance(math.inf, None, Status.EMPTY, notes=[f"min f found {f(anchor):.3e}"])
        lo, hi = 0.0, 1.0  # fraction of the way from u to the anchor
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if f(u + mid * (anchor - u)) <= feas:
                hi = mid
            else:
                lo = mid
        u = u + hi * (anchor - u)
    upper = float(np.linalg.norm(u - x))

    # aggregated cutting plane through the pieces active at u bounds the distance from below
    vals = np.array([p(u) for p in pieces])
    act = [i for i, v in enumerate(vals) if v >= -1e-7 * max(upper, 1e-300)]
    if not act:
        act = [int(np.argmax(vals))]
    A = np.array([pieces[i].grad(u) for i in act])
    weights, _ = nnls(A.T, x - u)
    a = weights @ A
    beta = weights @ (vals[act] - A @ u)
    lower = 0.0
    if np.linalg.norm(a) > 0:
        lower = max(0.0, float((a @ x + beta) / np.linalg.norm(a)))
    for i, p in enumerate(pieces):
        g = p.grad(u)
        ng = np.linalg.norm(g)
        if ng > 0:
            lower = max(lower, float((vals[i] + g @ (x - u)) / ng))
    gap = max(upper - lower, 0.0)
    # the gap is judged relative to the distance itself
    status = Status.CERTIFIED if gap <= tol * max(upper, 1e-300) else Status.NO_CONVERGENCE
    return SublevelDistance(upper, u, status, tolerance=gap,
                            notes=[] if status is Status.CERTIFIED else [f"gap {gap:.3e} > tol"])


def sublevel_distance(f: FunctionHandle, x, tol: float = 1e-9, reach: float = 10.0,
                      max_iter: int = 500) -> SublevelDistance:
    """d(x, [f <= 0]): exact 1-D search, certified projection in higher dimension.

    ``reach`` bounds the 1-D search region; an empty result reports it.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    base = _sublevel_base(f)
    if x.size == 1:
        return _distance_1d(base, float(x[0]), reach)
    if not base.convex:
        raise TypeError("n-dimensional sublevel distances need a convex function")
    return _distance_nd(base, x, tol, max_iter)


def sublevel_distance_oracle(f: FunctionHandle, x, box, step: float, chunk: int = 1 << 20,
                             anchors=None) -> float:
    """Brute-force min of |g - x| over grid points g of the box with f(g) <= 0.

    ``anchors`` (points of shape (k, n)) add their coordinates to every axis, so
    sublevel sets without interior, such as a single point, can still be hit.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = x.size
    if n > 3:
        raise DimensionTooLargeError(f"oracle grid limited to dimension 3, got {n}")
    if not step > 0:
        raise ValueError("step must be positive")
    box = np.asarray(box, dtype=float).reshape(n, 2)
    axes = [np.arange(lo, hi + 0.5 * step, step) for lo, hi in box]
    # include the coordinates of x itself so zero distance is detected exactly
    axes = [np.unique(np.append(ax, xi)) for ax, xi in zip(axes, x)]
    if anchors is not None:
        A = np.asarray(anchors, dtype=float).reshape(-1, n)
        axes = [np.unique(np.concatenate([ax, A[:, i]])) for i, ax in enumerate(axes)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    best = math.inf
    for start in range(0, grid.shape[0], chunk):
        block = grid[start:start + chunk]
        inside = block[f.values(block) <= 0.0]
        if inside.size:
            best = min(best, float(np.min(np.linalg.norm(inside - x, axis=1))))
    return best
