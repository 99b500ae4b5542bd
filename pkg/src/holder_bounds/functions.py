"""Function handles with exact values and exact subdifferentials.

A handle is immutable. Values are vectorized over leading axes via ``values``;
``subdifferential`` always returns a :class:`FinGenConvexSet`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import lp
from .errors import NonpositiveDerivativeError

EPS_ACT = 1e-9


def _pow(base, exponent):
    """Power with the 0**0 == 1 convention (numpy already follows it, made explicit here)."""
    base = np.asarray(base, dtype=float)
    if exponent == 0:
        return np.ones_like(base)
    return np.power(base, exponent)


# ---------------------------------------------------------------- convex sets

@dataclass(frozen=True)
class FinGenConvexSet:
    """conv(generators) + cone(rays). No generators means the empty set."""

    generators: np.ndarray
    rays: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.generators, dtype=float)
        r = np.asarray(self.rays, dtype=float)
        dim = g.shape[-1] if g.size else (r.shape[-1] if r.size else 1)
        g = g.reshape(-1, dim)
        r = r.reshape(-1, dim)
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(r))):
            raise ValueError("generators and rays must be finite")
        object.__setattr__(self, "generators", g)
        object.__setattr__(self, "rays", r)

    @classmethod
    def point(cls, p) -> "FinGenConvexSet":
        p = np.atleast_1d(np.asarray(p, dtype=float))
        return cls(p[None, :], np.zeros((0, p.size)))

    @classmethod
    def empty(cls, dim: int) -> "FinGenConvexSet":
        return cls(np.zeros((0, dim)), np.zeros((0, dim)))

    @property
    def dim(self) -> int:
        return self.generators.shape[1]

    @property
    def is_empty(self) -> bool:
        return self.generators.shape[0] == 0

    @property
    def is_bounded(self) -> bool:
        return self.rays.shape[0] == 0

    def scaled(self, factor: float) -> "FinGenConvexSet":
        return FinGenConvexSet(self.generators * factor, self.rays * factor)

    def translated(self, shift) -> "FinGenConvexSet":
        return FinGenConvexSet(self.generators + np.asarray(shift, dtype=float), self.rays)

    def contains(self, p, tol: float = 1e-9) -> bool:
        if self.is_empty:
            return False
        return lp.is_member(np.atleast_1d(p), self.generators, self.rays, tol)

    @staticmethod
    def hull(sets: Sequence["FinGenConvexSet"]) -> "FinGenConvexSet":
        """Convex hull of a union of finitely generated sets (empty members skipped)."""
        sets = [s for s in sets if not s.is_empty]
        if not sets:
            raise ValueError("hull of nothing")
        return FinGenConvexSet(
            np.vstack([s.generators for s in sets]), np.vstack([s.rays for s in sets])
        )


# ------------------------------------------------------------ smooth pieces

@dataclass(frozen=True)
class SmoothPiece:
    """A C^1 function on R^n given by closed-form value and gradient.

    ``value`` must accept arrays of shape (..., dim) and return shape (...).
    ``gradient`` maps a single point of shape (dim,) to shape (dim,).
    """

    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    dim: int = 1
    convex: bool = True
    affine: bool = False
    description: str = ""
    roots: Callable[[], np.ndarray] | None = None  # real zeros, 1-D pieces only
    poly: tuple | None = None  # ascending coefficients when a 1-D piece is a polynomial

    def __post_init__(self):
        if self.poly is not None and self.roots is None:
            coef = self.poly
            object.__setattr__(self, "roots", lambda: _poly_roots(coef))

    def __call__(self, x) -> float:
        return float(self.value(np.asarray(x, dtype=float).reshape(self.dim)))

    def grad(self, x) -> np.ndarray:
        return np.asarray(self.gradient(np.asarray(x, dtype=float).reshape(self.dim)), dtype=float).reshape(self.dim)

    def shifted(self, linear=None, constant: float = 0.0) -> "SmoothPiece":
        """x -> self(x) + <linear, x> + constant."""
        a = np.zeros(self.dim) if linear is None else np.asarray(linear, dtype=float).reshape(self.dim)
        val, grad = self.value, self.gradient
        poly, roots = None, None
        if self.poly is not None:
            poly = _poly_add(self.poly, (constant, a[0]))
        elif not np.any(a) and constant == 0.0:
            roots = self.roots
        return SmoothPiece(
            lambda x: val(x) + np.asarray(x, dtype=float) @ a + constant,
            lambda x: np.asarray(grad(x), dtype=float) + a,
            self.dim, self.convex, self.affine,
            f"{self.description} + <{a.tolist()}, x> + {constant:g}",
            roots, poly,
        )

    def negated(self) -> "SmoothPiece":
        val, grad = self.value, self.gradient
        return SmoothPiece(
            lambda x: -val(x), lambda x: -np.asarray(grad(x), dtype=float),
            self.dim, self.affine, self.affine, f"-({self.description})",
            self.roots if self.poly is None else None,
            None if self.poly is None else tuple(-c for c in self.poly),
        )


def affine(a, const: float = 0.0) -> SmoothPiece:
    a = np.atleast_1d(np.asarray(a, dtype=float))
    return SmoothPiece(
        lambda x: np.asarray(x, dtype=float) @ a + const,
        lambda x: a.copy(),
        a.size, True, True, f"<{a.tolist()}, x> + {const:g}",
        poly=(float(const), float(a[0])) if a.size == 1 else None,
    )


def constant(value: float, dim: int = 1) -> SmoothPiece:
    return SmoothPiece(
        lambda x: np.zeros(np.shape(x)[:-1]) + value,
        lambda x: np.zeros(dim),
        dim, True, True, f"{value:g}",
        poly=(float(value),) if dim == 1 else None,
    )


def quadratic(Q, a=None, const: float = 0.0) -> SmoothPiece:
    """x -> 0.5 x'Qx + <a, x> + const, with Q symmetrized."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    Q = 0.5 * (Q + Q.T)
    n = Q.shape[0]
    a = np.zeros(n) if a is None else np.asarray(a, dtype=float).reshape(n)
    convex = bool(np.linalg.eigvalsh(Q).min() >= -1e-12)
    return SmoothPiece(
        lambda x: 0.5 * np.einsum("...i,ij,...j->...", x, Q, x) + np.asarray(x) @ a + const,
        lambda x: Q @ x + a,
        n, convex, bool(np.allclose(Q, 0.0)), "quadratic",
        poly=(float(const), float(a[0]), 0.5 * float(Q[0, 0])) if n == 1 else None,
    )


def power_sum(terms: Sequence[tuple[float, float]], convex: bool | None = None) -> SmoothPiece:
    """1-D piece sum_i coef_i * x**p_i.

    Integer exponents use the ordinary power; fractional exponents act on |x|.
    Convexity must be declared for fractional terms (it is inferred for
    polynomials of degree <= 2).
    """
    terms = [(float(c), float(p)) for c, p in terms]

    def term_value(x, p):
        if p == int(p):
            return _pow(x, int(p))
        return _pow(np.abs(x), p)

    def value(x):
        x = np.asarray(x, dtype=float)[..., 0]
        out = np.zeros_like(x)
        for c, p in terms:
            out = out + c * term_value(x, p)
        return out

    def gradient(x):
        x = float(np.asarray(x, dtype=float).reshape(-1)[0])
        g = 0.0
        for c, p in terms:
            if p == 0:
                continue
            if p == int(p):
                g += c * p * x ** (int(p) - 1) if p != 1 else c
            else:
                if x == 0.0 and p < 1:
                    g += math.copysign(math.inf, c)
                else:
                    g += c * p * abs(x) ** (p - 1) * math.copysign(1.0, x)
        return np.array([g])

    is_affine = all(p in (0.0, 1.0) for c, p in terms)
    if convex is None:
        if all(p == int(p) and p <= 2 for c, p in terms):
            convex = all(c >= 0 for c, p in terms if p == 2)
        else:
            convex = False
    desc = " + ".join(f"{c:g}*x^{p:g}" for c, p in terms) or "0"
    if all(p == int(p) and p >= 0 for c, p in terms):
        coef = np.zeros(int(max((p for c, p in terms), default=0)) + 1)
        for c, p in terms:
            coef[int(p)] += c
        return SmoothPiece(value, gradient, 1, bool(convex), is_affine, desc, poly=tuple(coef))
    roots = (lambda: np.zeros(1)) if all(p > 0 for c, p in terms) else (lambda: np.zeros(0))
    return SmoothPiece(value, gradient, 1, bool(convex), is_affine, desc, roots)


def _poly_add(p1, p2) -> tuple:
    out = np.zeros(max(len(p1), len(p2)))
    out[:len(p1)] += p1
    out[:len(p2)] += p2
    return tuple(float(v) for v in out)


def _poly_roots(coef) -> np.ndarray:
    """Real zeros of the polynomial with ascending coefficients (none for the zero polynomial)."""
    coef = np.trim_zeros(np.asarray(coef, dtype=float), "b")
    if coef.size <= 1:
        return np.zeros(0)
    r = np.polynomial.polynomial.polyroots(coef)
    real = r[np.abs(r.imag) <= 1e-8 * (1 + np.abs(r.real))].real
    return np.unique(real)


# ------------------------------------------------------------ chain maps

@dataclass(frozen=True)
class ChainMap:
    psi: Callable[[float], float]
    psi_prime: Callable[[float], float]
    monotone_from: float = 0.0


def power_map(q: float) -> ChainMap:
    return ChainMap(lambda t: float(_pow(t, q)), lambda t: q * float(_pow(t, q - 1)), 0.0)


IDENTITY_MAP = ChainMap(lambda t: t, lambda t: 1.0, -math.inf)


# ------------------------------------------------------------ handles

class FunctionHandle:
    """Base class: subclasses implement ``values`` and ``subdifferential``."""

    dim: int = 1
    convex: bool = True

    def values(self, X) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float).reshape(self.dim)
        return float(self.values(x[None, :])[0])

    def subdifferential(self, x) -> FinGenConvexSet:
        raise NotImplementedError

    def special_points(self, lo: float, hi: float) -> np.ndarray:
        """1-D breakpoints and known piece zeros inside [lo, hi]."""
        return np.zeros(0)


def eval(f: FunctionHandle, x) -> float:  # noqa: A001 - mirrors the operation name
    return f(x)


def subdifferential(f: FunctionHandle, x) -> FinGenConvexSet:
    return f.subdifferential(np.asarray(x, dtype=float).reshape(f.dim))


def chain_subdifferential(f: FunctionHandle, psi: ChainMap, x) -> FinGenConvexSet:
    """psi'(f(x)) * subdifferential(f, x) for psi nondecreasing from f(x) on."""
    fx = f(x)
    if fx < psi.monotone_from:
        raise ValueError(f"f(x) = {fx} lies below the monotone range of psi")
    slope = psi.psi_prime(fx)
    if not slope > 0:
        raise NonpositiveDerivativeError(f"psi'(f(x)) = {slope}")
    return subdifferential(f, x).scaled(slope)


@dataclass(frozen=True)
class Smooth(FunctionHandle):
    piece: SmoothPiece

    @property
    def dim(self) -> int:
        return self.piece.dim

    @property
    def convex(self) -> bool:
        return self.piece.convex

    def values(self, X) -> np.ndarray:
        return np.asarray(self.piece.value(np.asarray(X, dtype=float)), dtype=float)

    def subdifferential(self, x) -> FinGenConvexSet:
        return FinGenConvexSet.point(self.piece.grad(x))

    def special_points(self, lo: float, hi: float) -> np.ndarray:
        pts = _piece_roots([self.piece]) if self.dim == 1 else np.zeros(0)
        return pts[(pts >= lo) & (pts <= hi)]


@dataclass(frozen=True)
class MaxFamily(FunctionHandle):
    """Pointwise maximum of finitely many smooth pieces."""

    pieces: tuple
    eps_act: float = EPS_ACT

    def __post_init__(self):
        pieces = tuple(self.pieces)
        if not pieces:
            raise ValueError("MaxFamily needs at least one piece")
        dims = {p.dim for p in pieces}
        if len(dims) != 1:
            raise ValueError("pieces disagree on dimension")
        if dims.pop() > 1 and not all(p.convex for p in pieces):
            raise ValueError("nonconvex pieces are only admitted in one dimension")
        object.__setattr__(self, "pieces", pieces)

    @property
    def dim(self) -> int:
        return self.pieces[0].dim

    @property
    def convex(self) -> bool:
        return all(p.convex for p in self.pieces)

    def piece_values(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.stack([np.asarray(p.value(X), dtype=float) for p in self.pieces], axis=-1)

    def values(self, X) -> np.ndarray:
        return self.piece_values(X).max(axis=-1)

    def special_points(self, lo: float, hi: float) -> np.ndarray:
        if self.dim != 1:
            return np.zeros(0)
        pts = _piece_roots(self.pieces)
        return np.unique(pts[(pts >= lo) & (pts <= hi)])

    def active(self, x) -> list[int]:
        vals = self.piece_values(np.asarray(x, dtype=float).reshape(1, self.dim))[0]
        top = vals.max()
        tol = self.eps_act * max(1.0, abs(top))
        return [i for i, v in enumerate(vals) if v >= top - tol]

    def subdifferential(self, x) -> FinGenConvexSet:
        grads = np.array([self.pieces[i].grad(x) for i in self.active(x)])
        return FinGenConvexSet(grads, np.zeros((0, self.dim)))


def _piece_roots(pieces) -> np.ndarray:
    found = [p.roots() for p in pieces if p.roots is not None]
    return np.concatenate(found) if found else np.zeros(0)


class Piecewise1D(FunctionHandle):
    """Lower semicontinuous piecewise-smooth function of one variable.

    ``pieces[i]`` applies on the open interval between breakpoints i-1 and i;
    the value at a breakpoint is the lsc closure: the minimum of both one-sided
    limits and the optional assigned value.
    """

    dim = 1
    convex = False
    _same = 1e-12

    def __init__(self, breakpoints: Sequence[float], pieces: Sequence[SmoothPiece],
                 assigned: Sequence[float | None] | None = None):
        self.bps = np.asarray(breakpoints, dtype=float)
        if self.bps.size and np.any(np.diff(self.bps) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        self.pieces = tuple(pieces)
        if len(self.pieces) != self.bps.size + 1:
            raise ValueError("need exactly one more piece than breakpoints")
        if assigned is None:
            assigned = [None] * self.bps.size
        self.assigned = tuple(math.inf if a is None else float(a) for a in assigned)

    # hooks a subclass can override for infinitely many breakpoints
    def _segment(self, x: float) -> int:
        return int(np.searchsorted(self.bps, x, side="left"))

    def _breakpoint_index(self, x: float) -> int | None:
        i = int(np.searchsorted(self.bps, x, side="left"))
        if i < self.bps.size and self.bps[i] == x:
            return i
        return None

    def _sides(self, k: int) -> tuple[SmoothPiece, SmoothPiece, float]:
        return self.pieces[k], self.pieces[k + 1], self.assigned[k]

    def _piece_at(self, x: float) -> SmoothPiece:
        return self.pieces[self._segment(x)]

    def special_points(self, lo: float, hi: float) -> np.ndarray:
        pts = np.concatenate([self.bps, _piece_roots(self.pieces)])
        return np.unique(pts[(pts >= lo) & (pts <= hi)])

    def values(self, X) -> np.ndarray:
        x = np.asarray(X, dtype=float)[..., 0]
        out = np.empty_like(x)
        seg = np.searchsorted(self.bps, x, side="left")
        for k, piece in enumerate(self.pieces):
            mask = seg == k
            if mask.any():
                out[mask] = piece.value(x[mask][:, None])
        for k, b in enumerate(self.bps):
            mask = x == b
            if mask.any():
                left, right, a = self._sides(k)
                out[mask] = min(left(b), right(b), a)
        return out

    def __call__(self, x) -> float:
        x = float(np.asarray(x, dtype=float).reshape(-1)[0])
        k = self._breakpoint_index(x)
        if k is not None:
            left, right, a = self._sides(k)
            return min(left(x), right(x), a)
        return self.pieces[self._segment(x)](x)

    def subdifferential(self, x) -> FinGenConvexSet:
        x = float(np.asarray(x, dtype=float).reshape(-1)[0])
        k = self._breakpoint_index(x)
        if k is None:
            return FinGenConvexSet.point(self._piece_at(x).grad(x))
        left, right, a = self._sides(k)
        return one_sided_subdifferential(x, left, right, a)


def one_sided_subdifferential(x: float, left: SmoothPiece, right: SmoothPiece,
                              assigned: float = math.inf) -> FinGenConvexSet:
    """Frechet subdifferential at a 1-D breakpoint from the adjacent pieces.

    A side whose limit sits strictly above the value imposes no constraint; a
    side that attains the value contributes its one-sided derivative as a bound.
    """
    lval, rval = left(x), right(x)
    v = min(lval, rval, assigned)
    tol = 1e-12 * max(1.0, abs(v))
    lower = float(left.grad(x)[0]) if lval <= v + tol else None
    upper = float(right.grad(x)[0]) if rval <= v + tol else None
    if lower is not None and upper is not None:
        if lower > upper:
            return FinGenConvexSet.empty(1)
        return FinGenConvexSet(np.array([[lower], [upper]]), np.zeros((0, 1)))
    if lower is not None:
        return FinGenConvexSet(np.array([[lower]]), np.array([[1.0]]))
    if upper is not None:
        return FinGenConvexSet(np.array([[upper]]), np.array([[-1.0]]))
    return FinGenConvexSet(np.zeros((1, 1)), np.array([[1.0], [-1.0]]))


class Staircase1D(Piecewise1D):
    """f(x) = x^2 + 1/n - 1/n^2 on (1/n, 1/(n-1)] (n >= 3), x^2 + 1/4 for x > 1/2, 0 for x <= 0.

    Breakpoints 1/m (m >= 2) accumulate at 0; the function is continuous from
    the left there and jumps up on the right.
    """

    def __init__(self):
        super().__init__([], [constant(0.0)])

    @staticmethod
    def _tread(n: int) -> SmoothPiece:
        return power_sum([(1.0, 2), (1.0 / n - 1.0 / n ** 2, 0)], convex=True)

    @staticmethod
    def tread_index(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", over="ignore"):
            n = np.floor(1.0 / np.where(x > 0, x, 1.0)) + 1
        return np.clip(n, 2, 1e15).astype(np.int64)

    def values(self, X) -> np.ndarray:
        x = np.asarray(X, dtype=float)[..., 0]
        n = self.tread_index(x).astype(float)
        # exact breakpoints 1/m belong to the tread on their left
        m = np.rint(1.0 / np.where(x > 0, x, 1.0))
        on_break = (x > 0) & (x <= 0.5) & (1.0 / np.maximum(m, 1.0) == x)
        n = np.where(on_break, m + 1, n)
        return np.where(x > 0, x * x + 1.0 / n - 1.0 / n ** 2, 0.0)

    def __call__(self, x) -> float:
        return float(self.values(np.asarray(x, dtype=float).reshape(1, 1))[0])

    def _breakpoint_index(self, x: float) -> int | None:
        if x == 0.0:
            return 0
        if 0 < x <= 0.5:
            m = int(round(1.0 / x))
            if m >= 2 and 1.0 / m == x:
                return m
        return None

    def _sides(self, k: int):
        if k == 0:
            # right slope of the tread envelope at 0 tends to 1
            return constant(0.0), affine([1.0]), math.inf
        return self._tread(k + 1), self._tread(k), math.inf

    def _piece_at(self, x: float) -> SmoothPiece:
        if x <= 0:
            return constant(0.0)
        return self._tread(int(self.tread_index(x)))

    def special_points(self, lo: float, hi: float) -> np.ndarray:
        lo, hi = max(lo, 0.0), min(hi, 0.5)
        if hi < lo:
            return np.zeros(0)
        pts = [0.0] if lo == 0.0 else []
        if hi > 0:
            m_lo = max(2, math.ceil(1.0 / hi))
            m_hi = math.floor(1.0 / lo) if lo > 0 else m_lo + 10_000
            m_hi = min(m_hi, m_lo + 10_000)
            pts += [1.0 / m for m in range(m_lo, m_hi + 1)]
        return np.array(sorted(p for p in pts if lo <= p <= hi))


@dataclass(frozen=True)
class PlusPart(FunctionHandle):
    inner: FunctionHandle

    @property
    def dim(self) -> int:
        return self.inner.dim

    @property
    def convex(self) -> bool:
        return self.inner.convex

    def values(self, X) -> np.ndarray:
        return np.maximum(self.inner.values(X), 0.0)

    def special_points(self, lo, hi):
        return self.inner.special_points(lo, hi)

    def subdifferential(self, x) -> FinGenConvexSet:
        v = self.inner(x)
        tol = EPS_ACT * max(1.0, abs(v))
        if v > tol:
            return self.inner.subdifferential(x)
        if v < -tol:
            return FinGenConvexSet.point(np.zeros(self.dim))
        inner = self.inner.subdifferential(x)
        zero = FinGenConvexSet.point(np.zeros(self.dim))
        return FinGenConvexSet.hull([inner, zero]) if not inner.is_empty else zero


@dataclass(frozen=True)
class PowerWrap(FunctionHandle):
    """x -> inner(x)**q for a nonnegative inner function."""

    inner: FunctionHandle
    q: float

    def __post_init__(self):
        if not self.q > 0:
            raise ValueError("exponent must be positive")

    @property
    def dim(self) -> int:
        return self.inner.dim

    @property
    def convex(self) -> bool:
        return False

    def values(self, X) -> np.ndarray:
        v = self.inner.values(X)
        if np.any(v < 0):
            raise ValueError("PowerWrap applied to a negative value; wrap the inner function in PlusPart")
        return _pow(v, self.q)

    def special_points(self, lo, hi):
        return self.inner.special_points(lo, hi)

    def subdifferential(self, x) -> FinGenConvexSet:
        return chain_subdifferential(self.inner, power_map(self.q), x)
