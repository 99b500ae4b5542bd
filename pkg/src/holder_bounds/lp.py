"""Dense two-phase simplex with Bland's rule, plus the membership tests built on it.

Everything here works on small dense problems (tens of rows), which is all the
subdifferential and KKT machinery ever produces.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleError, NoConvergenceError, UnboundedError


@dataclass
class LPResult:
    x: np.ndarray
    value: float
    basis: list[int]


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    for i in range(T.shape[0]):
        if i != row and T[i, col] != 0.0:
            T[i] -= T[i, col] * T[row]


def _run(T: np.ndarray, basis: list[int], ncols: int, tol: float, max_iter: int) -> None:
    """Pivot until the last row has no negative reduced cost among the first ncols columns."""
    m = T.shape[0] - 1
    for _ in range(max_iter):
        reduced = T[m, :ncols]
        candidates = np.flatnonzero(reduced < -tol)
        if candidates.size == 0:
            return
        col = int(candidates[0])  # Bland: lowest index enters
        column = T[:m, col]
        rows = np.flatnonzero(column > tol)
        if rows.size == 0:
            raise UnboundedError("objective unbounded below")
        ratios = T[rows, -1] / column[rows]
        best = ratios.min()
        ties = rows[ratios <= best + tol * max(1.0, abs(best))]
        row = int(min(ties, key=lambda i: basis[i]))  # Bland: lowest basic index leaves
        _pivot(T, row, col)
        basis[row] = col
    raise NoConvergenceError("simplex iteration budget exhausted")


def simplex(c, A, b, tol: float = 1e-10, max_iter: int = 50_000) -> LPResult:
    """Minimize c @ x subject to A @ x == b, x >= 0."""
    A = np.atleast_2d(np.asarray(A, dtype=float)).copy()
    b = np.asarray(b, dtype=float).copy()
    c = np.asarray(c, dtype=float)
    m, n = A.shape
    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0

    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[m, :n] = -A.sum(axis=0)
    T[m, -1] = -b.sum()
    basis = list(range(n, n + m))
    _run(T, basis, n + m, tol, max_iter)

    feas_tol = 1e-9 * max(1.0, float(np.abs(b).sum()))
    if -T[m, -1] > feas_tol:
        raise InfeasibleError(f"phase-1 residual {-T[m, -1]:.3e}")

    # drive artificial variables out of the basis; rows where that fails are redundant
    keep = []
    for i in range(m):
        if basis[i] >= n:
            cols = np.flatnonzero(np.abs(T[i, :n]) > 1e-9)
            if cols.size == 0:
                continue
            _pivot(T, i, int(cols[0]))
            basis[i] = int(cols[0])
        keep.append(i)
    T = np.vstack([T[keep][:, list(range(n)) + [n + m]], np.zeros((1, n + 1))])
    basis = [basis[i] for i in keep]
    k = len(keep)

    T[k, :n] = c
    for i, j in enumerate(basis):
        if T[k, j] != 0.0:
            T[k] -= T[k, j] * T[i]
    _run(T, basis, n, tol, max_iter)

    x = np.zeros(n)
    for i, j in enumerate(basis):
        x[j] = T[i, -1]
    x = np.maximum(x, 0.0)
    return LPResult(x=x, value=float(c @ x), basis=basis)


def solve_inequality_lp(c, A_ub, b_ub, tol: float = 1e-10) -> LPResult:
    """Minimize c @ x subject to A_ub @ x <= b_ub with x free."""
    A_ub = np.atleast_2d(np.asarray(A_ub, dtype=float))
    b_ub = np.asarray(b_ub, dtype=float)
    c = np.asarray(c, dtype=float)
    m, n = A_ub.shape
    A = np.hstack([A_ub, -A_ub, np.eye(m)])
    cost = np.concatenate([c, -c, np.zeros(m)])
    res = simplex(cost, A, b_ub, tol=tol)
    x = res.x[:n] - res.x[n:2 * n]
    return LPResult(x=x, value=float(c @ x), basis=res.basis)


@dataclass
class Representation:
    """Weights expressing a target as hull_weights @ hull + cone_weights @ cone."""

    hull_weights: np.ndarray
    cone_weights: np.ndarray
    residual: float


def best_representation(target, hull=None, cone=None, tol: float = 1e-10) -> Representation:
    """Closest (in l1) point of conv(hull) + cone(cone) to target, with its weights.

    When hull is empty the convex part is dropped entirely, so the set is the cone
    itself (which always contains 0).
    """
    target = np.asarray(target, dtype=float).ravel()
    n = target.size
    H = np.zeros((0, n)) if hull is None else np.asarray(hull, dtype=float).reshape(-1, n)
    C = np.zeros((0, n)) if cone is None else np.asarray(cone, dtype=float).reshape(-1, n)
    p, k = H.shape[0], C.shape[0]

    rows = [np.hstack([H.T, C.T, np.eye(n), -np.eye(n)])]
    rhs = [target]
    if p:
        rows.append(np.concatenate([np.ones(p), np.zeros(k + 2 * n)])[None, :])
        rhs.append(np.array([1.0]))
    A = np.vstack(rows)
    b = np.concatenate(rhs)
    cost = np.concatenate([np.zeros(p + k), np.ones(2 * n)])
    res = simplex(cost, A, b, tol=tol)
    lam, mu = res.x[:p], res.x[p:p + k]
    if p:
        lam = lam / lam.sum()
    point = lam @ H + mu @ C if (p or k) else np.zeros(n)
    return Representation(lam, mu, float(np.linalg.norm(point - target)))


def is_member(target, hull=None, cone=None, tol: float = 1e-9) -> bool:
    return best_representation(target, hull, cone).residual <= tol
