"""Instance files: JSON documents describing a function or a convex program.

Format ``holder-bounds-instance/1``. Top level::

    {"format": "holder-bounds-instance/1", "name": str, "kind": "function" | "sip",
     "description": str (optional), "center": [floats], ...}

A function instance adds ``"function": <function node>``. Function nodes:

    {"form": "smooth", "piece": <piece>}
    {"form": "max", "pieces": [<piece>, ...]}
    {"form": "piecewise1d", "breakpoints": [...], "pieces": [...], "assigned": [float | null, ...]}
    {"form": "staircase"}
    {"form": "plus", "inner": <function node>}
    {"form": "power", "q": float, "inner": <function node>}

Pieces:

    {"type": "affine", "a": [...], "const": float}
    {"type": "constant", "value": float, "dim": int}
    {"type": "quadratic", "Q": [[...]], "a": [...], "const": float}
    {"type": "power_sum", "terms": [[coef, exponent], ...], "convex": bool (optional)}

A sip instance adds ``"objective"`` (a smooth or max node), ``"c"``,
``"constraints"`` (pieces), ``"b"`` and optionally ``"grid"`` (one coordinate
list per constraint). Its ``center`` is the reference solution.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import InstanceParseError
from .functions import (FunctionHandle, MaxFamily, Piecewise1D, PlusPart, PowerWrap, Smooth,
                        SmoothPiece, Staircase1D, affine, constant, power_sum, quadratic)
from .sip import IndexGrid, SIProgram

FORMAT = "holder-bounds-instance/1"
BUILTIN_NAMES = ("example-3.6", "example-sqrt", "example-3.16", "example-3.20",
                 "example-abs", "sip-remark", "lp-quadrant")


@dataclass
class FunctionInstance:
    name: str
    function: FunctionHandle
    center: np.ndarray
    description: str = ""
    digest: str = ""
    notes: list = field(default_factory=list)


@dataclass
class SIPInstance:
    name: str
    program: SIProgram
    center: np.ndarray
    description: str = ""
    digest: str = ""
    notes: list = field(default_factory=list)


class _Path:
    """Tracks the JSON location for diagnostics."""

    def __init__(self, parts=()):
        self.parts = tuple(parts)

    def __truediv__(self, key):
        return _Path(self.parts + (key,))

    def __str__(self):
        return "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in self.parts)


def _fail(where: _Path, msg: str):
    raise InstanceParseError(f"{where}: {msg}")


def _get(node, key, where: _Path, kind=None, default=...):
    if not isinstance(node, dict):
        _fail(where, "expected an object")
    if key not in node:
        if default is ...:
            _fail(where / key, "missing")
        return default
    val = node[key]
    if kind is not None and not isinstance(val, kind):
        _fail(where / key, f"expected {kind.__name__ if isinstance(kind, type) else kind}")
    return val


def _floats(val, where: _Path, ndim: int = 1) -> np.ndarray:
    try:
        arr = np.asarray(val, dtype=float)
    except (TypeError, ValueError):
        _fail(where, "expected numbers")
    if arr.ndim != ndim or not np.all(np.isfinite(arr)):
        _fail(where, f"expected a finite {ndim}-d numeric array")
    return arr


def _number(val, where: _Path) -> float:
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
        _fail(where, "expected a finite number")
    return float(val)


def parse_piece(node, where: _Path = _Path()) -> SmoothPiece:
    kind = _get(node, "type", where, str)
    if kind == "affine":
        return affine(_floats(_get(node, "a", where), where / "a"),
                      _number(_get(node, "const", where, default=0.0), where / "const"))
    if kind == "constant":
        dim = _get(node, "dim", where, int, default=1)
        return constant(_number(_get(node, "value", where), where / "value"), dim)
    if kind == "quadratic":
        Q = _floats(_get(node, "Q", where), where / "Q", 2)
        a = node.get("a")
        return quadratic(Q, None if a is None else _floats(a, where / "a"),
                         _number(_get(node, "const", where, default=0.0), where / "const"))
    if kind == "power_sum":
        terms = _floats(_get(node, "terms", where, list), where / "terms", 2)
        if terms.shape[1] != 2:
            _fail(where / "terms", "each term is [coefficient, exponent]")
        convex = _get(node, "convex", where, bool, default=None)
        return power_sum([tuple(t) for t in terms], convex)
    _fail(where / "type", f"unknown piece type {kind!r}")


def parse_function(node, where: _Path = _Path()) -> FunctionHandle:
    form = _get(node, "form", where, str)
    try:
        if form == "smooth":
            return Smooth(parse_piece(_get(node, "piece", where), where / "piece"))
        if form == "max":
            pieces = _get(node, "pieces", where, list)
            return MaxFamily(tuple(parse_piece(p, where / "pieces" / i) for i, p in enumerate(pieces)))
        if form == "piecewise1d":
            bps = _floats(_get(node, "breakpoints", where, list), where / "breakpoints")
            pieces = [parse_piece(p, where / "pieces" / i)
                      for i, p in enumerate(_get(node, "pieces", where, list))]
            assigned = _get(node, "assigned", where, list, default=None)
            if assigned is not None:
                assigned = [None if a is None else _number(a, where / "assigned" / i)
                            for i, a in enumerate(assigned)]
            return Piecewise1D(bps, pieces, assigned)
        if form == "staircase":
            return Staircase1D()
        if form == "plus":
            return PlusPart(parse_function(_get(node, "inner", where), where / "inner"))
        if form == "power":
            q = _number(_get(node, "q", where), where / "q")
            return PowerWrap(parse_function(_get(node, "inner", where), where / "inner"), q)
    except ValueError as exc:
        _fail(where, str(exc))
    _fail(where / "form", f"unknown function form {form!r}")


def _convention_notes(f: FunctionHandle) -> list[str]:
    """Breakpoints where the value is not the left limit fall outside the staircase pattern."""
    if type(f) is not Piecewise1D:
        return []
    notes = []
    for k, x in enumerate(f.bps):
        left, right, _ = f._sides(k)
        if abs(f(x) - left(x)) > 1e-12 * max(1.0, abs(left(x))):
            notes.append(f"breakpoint {x:g}: value differs from the left limit; "
                         "one-sided derivative rule applied")
    return notes


def parse_instance(doc, source: str = "<memory>") -> FunctionInstance | SIPInstance:
    root = _Path()
    if not isinstance(doc, dict):
        _fail(root, "top level must be an object")
    if _get(doc, "format", root, str) != FORMAT:
        _fail(root / "format", f"expected {FORMAT!r}")
    name = _get(doc, "name", root, str)
    kind = _get(doc, "kind", root, str)
    desc = _get(doc, "description", root, str, default="")
    center = _floats(_get(doc, "center", root), root / "center")
    digest = hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]
    if kind == "function":
        f = parse_function(_get(doc, "function", root), root / "function")
        if center.size != f.dim:
            _fail(root / "center", f"dimension {center.size} does not match the function ({f.dim})")
        return FunctionInstance(name, f, center, desc, digest, _convention_notes(f))
    if kind == "sip":
        obj = parse_function(_get(doc, "objective", root), root / "objective")
        cons = [parse_piece(p, root / "constraints" / i)
                for i, p in enumerate(_get(doc, "constraints", root, list))]
        grid = doc.get("grid")
        try:
            grid = None if grid is None else IndexGrid(_floats(grid, root / "grid", 2), source)
            prog = SIProgram(obj, _floats(_get(doc, "c", root), root / "c"), cons,
                             _floats(_get(doc, "b", root), root / "b"), grid, name=name)
        except (ValueError, TypeError) as exc:
            _fail(root, str(exc))
        if center.size != prog.n:
            _fail(root / "center", "dimension does not match the program")
        return SIPInstance(name, prog, center, desc, digest)
    _fail(root / "kind", f"unknown kind {kind!r}")


def load_instance(path) -> FunctionInstance | SIPInstance:
    """Read a file path or the name of a bundled instance."""
    p = Path(path)
    if not p.exists() and str(path) in BUILTIN_NAMES:
        return builtin_instance(str(path))
    try:
        text = p.read_text()
    except OSError as exc:
        raise InstanceParseError(f"{path}: cannot read ({exc.strerror})") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return parse_instance(doc, str(path))


def builtin_path(name: str):
    if name not in BUILTIN_NAMES:
        raise InstanceParseError(f"no bundled instance named {name!r}")
    return resources.files("holder_bounds") / "data" / f"{name}.json"


def builtin_instance(name: str) -> FunctionInstance | SIPInstance:
    ref = builtin_path(name)
    return parse_instance(json.loads(ref.read_text()), name)
