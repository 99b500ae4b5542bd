"""``holder-bounds`` command line.

Commands: ``modulus``, ``verify``, ``sip`` and ``reproduce``. Instances are JSON
files in the format documented in :mod:`holder_bounds.instances`; a bare name
such as ``example-3.6`` selects a bundled instance.

Exit codes: 0 pass, 1 reproduction failure, 2 instance parse error,
3 precondition failure, 4 verification failure.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import moduli as M
from .calmness import (MapKind, check_equivalence_chain, clm_enc_equality_probe,
                       estimate_clm, upper_bound_T602)
from .errors import HolderBoundsError, InstanceParseError
from .instances import FunctionInstance, SIPInstance, load_instance
from .reproduce import KEYS, Loader, run, select
from .sip import enc_check, kkt_check, kkt_subsets, slater_point, solve, sup_function

EXIT_OK, EXIT_REPRODUCE, EXIT_PARSE, EXIT_PRECONDITION, EXIT_VERIFY = 0, 1, 2, 3, 4
OUT_ENV = "HOLDER_BOUNDS_OUT"


class Precondition(Exception):
    pass


# ------------------------------------------------------------------ report plumbing

class Report:
    """Collects text lines, echoes them, and writes them to <out>/<name>.txt."""

    def __init__(self, args, name: str, instance=None):
        self.args, self.name, self.lines = args, name, []
        if not args.no_timestamp:
            self.lines.append(f"# generated {_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')}")
        self.lines.append(f"# command {args.command}; seed {args.seed}")
        if instance is not None:
            self.lines.append(f"# instance {instance.name} sha256:{instance.digest}")
        self.files: list[Path] = []

    def add(self, line: str = "") -> None:
        self.lines.append(line)

    def trace(self, stem: str, estimate: M.ModulusEstimate) -> None:
        path = self.outdir() / f"{stem}.csv"
        path.write_text(estimate.trace.to_csv())
        self.files.append(path)

    def outdir(self) -> Path:
        d = Path(self.args.out or os.environ.get(OUT_ENV) or "holder-bounds-out")
        d.mkdir(parents=True, exist_ok=True)
        return d

    def finish(self) -> None:
        text = "\n".join(self.lines) + "\n"
        sys.stdout.write(text)
        (self.outdir() / f"{self.name}.txt").write_text(text)


def _query(args) -> M.LiminfQuery:
    return M.LiminfQuery(r0=args.r0, gamma=args.gamma, K=args.shells, samples_1d=args.samples_1d,
                         samples_nd=args.samples_nd, tail=args.tail, seed=args.seed, workers=args.workers)


def _load(args):
    if not args.instance:
        raise Precondition("--instance is required for this command")
    return load_instance(args.instance)


def _fmt(v: float) -> str:
    return f"{v:.12g}" if math.isfinite(v) else str(v)


def _tail_schedule(est: M.ModulusEstimate) -> str:
    return " ".join(f"{s.radius:.3g}:{_fmt(s.min_value)}" for s in est.trace.tail_shells())


# ------------------------------------------------------------------ commands

def cmd_modulus(args) -> int:
    inst = _load(args)
    if isinstance(inst, SIPInstance):
        f, center = sup_function(inst.program, inst.center), inst.center
    else:
        f, center = inst.function, inst.center
    query = _query(args)
    rep = Report(args, "modulus", inst)
    rep.add(f"# shells r0={query.r0} gamma={query.gamma} K={query.K} tail={query.tail}")
    for note in getattr(inst, "notes", []):
        rep.add(f"# note: {note}")
    rep.add(f"{'q':>8}  {'kind':<13} {'value':>20}  {'tail_spread':>12}")
    status = EXIT_OK
    for q in args.q:
        if not q > 0:
            raise Precondition(f"q must be positive, got {q}")
        ests = [M.estimate_Er(f, center, q, query), M.estimate_Er_under(f, center, q, query)]
        if q <= 1:
            ests.append(M.estimate_Er_under_prime(f, center, q, query))
        for e in ests:
            rep.add(f"{q:>8g}  {e.kind.value:<13} {_fmt(e.value):>20}  {e.trace.tail_spread:>12.3g}")
            rep.trace(f"modulus_q{q:g}_{e.kind.value}", e)
        if q <= 1:
            order = M.check_ordering_inequality(f, center, q, query)
            verdict = "HOLDS" if order.holds else "VIOLATED"
            rep.add(f"{q:>8g}  ordering: (1-q)^(1-q)*ErUnder={_fmt(order.lower)} <= "
                    f"ErUnderPrime={_fmt(order.upper)} (+{order.tolerance:.3g}) {verdict}")
            if not order.holds:
                status = EXIT_VERIFY
    rep.finish()
    return status


def cmd_verify(args) -> int:
    inst = _load(args)
    if not isinstance(inst, FunctionInstance):
        raise Precondition("verify needs a function instance")
    f, center = inst.function, inst.center
    plan = M.SamplePlan(count=args.count, seed=args.seed)
    cond = M.check_condition(f, center, args.q[0], args.tau, args.delta, args.variant, plan,
                             gate=args.gate, lam=args.lam, beta=args.beta)
    exponent, const, radius = M.conclusion_for(args.variant, args.q[0], args.tau, args.delta,
                                               args.lam, args.beta)
    concl = M.certify_error_bound(f, center, exponent, const, radius, plan)
    rep = Report(args, "verify", inst)
    rep.add(f"variant {args.variant}; gate {args.gate}; q={args.q[0]:g} tau={args.tau:g} delta={args.delta:g}"
            + (f" lambda={args.lam:g}" if args.variant == "t37" else "")
            + (f" beta={args.beta:g}" if args.variant == "p316" else ""))
    rep.add(f"condition: {cond.verdict.value} ({cond.gated} gated of {cond.sampled} sampled)"
            + ("; BOX-LIMITED" if cond.box_limited else ""))
    for x in cond.violating_points[:args.max_witnesses]:
        rep.add(f"  violated at x = {np.array2string(np.asarray(x), precision=10)}")
    if len(cond.violating_points) > args.max_witnesses:
        rep.add(f"  ... {len(cond.violating_points) - args.max_witnesses} more")
    rep.add(f"conclusion: {_fmt(const)} * d(x, [f<=0]) <= f_+(x)^{exponent:g} on radius {_fmt(radius)}: "
            + ("holds" if concl.holds else f"violated at {len(concl.violations)} of {concl.positive} points with f > 0"))
    if cond.verdict is M.Verdict.FAILS or (cond.verdict is M.Verdict.HOLDS and not concl.holds):
        rep.add("result: FAIL")
        status = EXIT_VERIFY
    elif cond.verdict is M.Verdict.VACUOUS and not concl.holds:
        rep.add("result: VACUOUS (note: the conclusion is violated, so the gated hypothesis does not transfer)")
        status = EXIT_OK
    else:
        rep.add("result: PASS")
        status = EXIT_OK
    rep.finish()
    return status


def cmd_sip(args) -> int:
    inst = _load(args)
    if not isinstance(inst, SIPInstance):
        raise Precondition("sip needs a program instance")
    P, xbar = inst.program, inst.center
    query = _query(args)
    rep = Report(args, "sip", inst)
    status = EXIT_OK
    if not (args.analyze or args.clm or args.upper_bound or args.chain):
        args.analyze = True
    if args.analyze:
        sp = slater_point(P)
        rep.add(f"Slater: {'yes' if sp is not None else 'no'}"
                + (f" (strictly feasible point {np.array2string(sp, precision=6)})" if sp is not None else ""))
        cert = kkt_check(P, xbar, require_slater=False)
        if cert is None:
            rep.add("KKT at center: no certificate")
        else:
            rep.add(f"KKT at center: support {[(t, round(g, 12)) for t, g, _ in cert.support]} "
                    f"residual {cert.residual:.3g}")
        if sp is not None:
            enc = enc_check(P, xbar)
            rep.add(f"ENC: {'yes' if enc.enc_holds else 'no'}"
                    + ("" if enc.enc_holds else f" (violating subset {enc.violating_D})"))
            rep.add(f"KKT subsets: {kkt_subsets(P, xbar).subsets}")
        rep.add("right-hand-side shift table: b = b_center + s")
        rep.add(f"{'s':>6}  {'solution':<32} {'value':>14}")
        for s in np.round(np.arange(-9, 10) * 0.1, 10):
            try:
                sol = solve(P.with_parameters(b=P.b + s), certify=False)
                rep.add(f"{s:>6.1f}  {np.array2string(sol.point, precision=10):<32} {sol.value:>14.10g}")
            except HolderBoundsError as exc:
                rep.add(f"{s:>6.1f}  {type(exc).__name__}")
    for q in (args.q if (args.clm or args.upper_bound or args.chain) else []):
        if args.clm:
            for kind in args.map:
                r = estimate_clm(P, xbar, q, kind, query, args.theta)
                rep.add(f"clm q={q:g} {r.kind.value}: {r.verdict.value} tail={_fmt(r.estimate.value)} "
                        f"solver failures={r.solver_failures}")
                rep.add(f"  tail shells {_tail_schedule(r.estimate)}")
                rep.trace(f"clm_q{q:g}_{r.kind.value}", r.estimate)
            probe = clm_enc_equality_probe(P, xbar, q, query) if args.enc_probe else None
            if probe is not None:
                rep.add(f"  full vs fixed-c under ENC: {probe.status}")
        if args.upper_bound:
            ub = upper_bound_T602(P, xbar, q, query)
            rep.add(f"upper bound q={q:g}: {_fmt(ub.value)} witness D={ub.argmin_D}")
            for D, e in ub.estimates.items():
                rep.add(f"  D={D}: {_fmt(e.value)}")
        if args.chain:
            ch = check_equivalence_chain(P, xbar, q, query, args.theta)
            rep.add(f"equivalence chain q={q:g}: " + ", ".join(f"({k}) {v.value}" for k, v in ch.verdicts.items())
                    + (" consistent" if ch.implications_ok else " INCONSISTENT: " + "; ".join(ch.problems)))
            if not ch.implications_ok:
                status = EXIT_VERIFY
    rep.finish()
    return status


def cmd_reproduce(args) -> int:
    loader = Loader(args.instance_dir)
    numbers = select(args.only)
    if args.instance:
        # a supplied file replaces the bundled instance of the same name
        inst = load_instance(args.instance)
        loader.override(inst)
        if inst.name in KEYS.values():
            numbers = select([inst.name])
    rows = run(numbers, loader, args.workers)
    rep = Report(args, "reproduce")
    rep.add(f"{'#':>3}  {'check':<14} {'result':<6} detail")
    for r in rows:
        rep.add(f"{r.number:>3}  {r.key:<14} {'PASS' if r.passed else 'FAIL':<6} {r.title}: {r.detail}")
    failed = sum(not r.passed for r in rows)
    rep.add(f"{len(rows) - failed}/{len(rows)} passed")
    rep.finish()
    return EXIT_OK if failed == 0 else EXIT_REPRODUCE


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--instance", help="instance file or bundled instance name")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./holder-bounds-out)")
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    common.add_argument("--no-timestamp", action="store_true", help="omit the timestamp header line")
    common.add_argument("--q", type=float, nargs="+", default=[0.5])

    shells = argparse.ArgumentParser(add_help=False)
    shells.add_argument("--r0", type=float, default=0.5)
    shells.add_argument("--gamma", type=float, default=0.5)
    shells.add_argument("--shells", type=int, default=20, help="index of the innermost shell")
    shells.add_argument("--samples-1d", type=int, default=64)
    shells.add_argument("--samples-nd", type=int, default=512)
    shells.add_argument("--tail", type=int, default=5)

    p = argparse.ArgumentParser(prog="holder-bounds", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("modulus", parents=[common, shells], help="estimate the moduli and check their ordering")

    v = sub.add_parser("verify", parents=[common], help="check a sufficient condition and its conclusion")
    v.add_argument("--variant", choices=M.VARIANTS, required=True)
    v.add_argument("--gate", choices=("distance", "simplified"), default="distance")
    v.add_argument("--tau", type=float, default=1.0)
    v.add_argument("--delta", type=float, default=1.0)
    v.add_argument("--lam", type=float, default=0.5)
    v.add_argument("--beta", type=float, default=1.0)
    v.add_argument("--count", type=int, default=2000, help="sample count")
    v.add_argument("--max-witnesses", type=int, default=10)
    v.set_defaults(q=None)

    s = sub.add_parser("sip", parents=[common, shells], help="analyze a convex program")
    s.add_argument("--analyze", action="store_true")
    s.add_argument("--clm", action="store_true")
    s.add_argument("--map", nargs="+", choices=[k.value for k in MapKind], default=[MapKind.PARTIAL.value])
    s.add_argument("--enc-probe", action="store_true", help="compare full and fixed-c rates when ENC holds")
    s.add_argument("--upper-bound", action="store_true")
    s.add_argument("--chain", action="store_true")
    s.add_argument("--theta", type=float, default=1e-3)

    r = sub.add_parser("reproduce", parents=[common], help="run the reproduction suite")
    r.add_argument("--only", nargs="+", help="check numbers or keys")
    r.add_argument("--instance-dir", help="directory holding replacement instance files")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "verify" and args.q is None:
        args.q = [1.0]
    handlers = {"modulus": cmd_modulus, "verify": cmd_verify, "sip": cmd_sip, "reproduce": cmd_reproduce}
    try:
        return handlers[args.command](args)
    except InstanceParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (Precondition, HolderBoundsError, ValueError) as exc:
        print(f"precondition failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":
    sys.exit(main())
