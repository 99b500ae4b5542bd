import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from holder_bounds.calmness import (CalmVerdict, MapKind, build_perturbation_P32, build_perturbation_T602,
                                    calm_verdict, check_equivalence_chain, clm_enc_equality_probe,
                                    estimate_clm, parameter_shell, upper_bound_T602)
from holder_bounds.errors import NoSlaterError
from holder_bounds.functions import Smooth, affine
from holder_bounds.moduli import Kind, LiminfQuery, ModulusEstimate, TraceRow, build_trace
from holder_bounds.sip import SIProgram, kkt_check, parameter_norm, sup_function

SMALL = LiminfQuery(K=10, samples_1d=16, samples_nd=32, tail=4)


def fake_estimate(values, gamma=0.5):
    radii = [gamma ** k for k in range(len(values))]
    rows = [[TraceRow(r, np.zeros(1), 1.0, 1.0, 1.0, v)] for r, v in zip(radii, values)]
    return ModulusEstimate(Kind.CLM, 1.0, min(values), build_trace(radii, rows, 4))


@pytest.mark.parametrize("values, expected", [
    ([5, 5, 5, 5, 5, 5], CalmVerdict.CALM),
    ([1, 1e-4, 1e-5, 1e-6, 1e-7], CalmVerdict.NOT_CALM),
    ([1, 1, 1e-4, 2, 2], CalmVerdict.INCONCLUSIVE),
    # halving every shell: slope 1 in log-log
    ([8, 4, 2, 1, 0.5, 0.25], CalmVerdict.NOT_CALM),
    # slow oscillation stays calm
    ([3, 2, 3, 2, 3, 2], CalmVerdict.CALM),
])
def test_verdict_rule(values, expected):
    assert calm_verdict(fake_estimate(values)) is expected


def test_parameter_shell_norms(instances):
    P = instances("lp-quadrant").program
    q = LiminfQuery(samples_nd=10)
    for kind in MapKind:
        if kind is MapKind.LEVEL:
            continue
        outer = q.r0 * q.gamma ** 2
        for p in parameter_shell(P, kind, 2, q):
            assert q.gamma * outer * (1 - 1e-12) <= p.norm <= outer * (1 + 1e-12)
            assert p.norm == pytest.approx(parameter_norm(p.c - P.c, p.b - P.b))
            if kind is MapKind.PARTIAL:
                assert np.array_equal(p.c, P.c)


def test_full_map_never_exceeds_fixed_cost_map(instances):
    inst = instances("lp-quadrant")
    full = estimate_clm(inst.program, inst.center, 1.0, MapKind.FULL, SMALL)
    part = estimate_clm(inst.program, inst.center, 1.0, MapKind.PARTIAL, SMALL)
    assert full.estimate.value <= part.estimate.value + 1e-12
    assert full.verdict is CalmVerdict.CALM


quadrant = SIProgram(Smooth(affine([0.0, 0.0])), [1.0, 1.0], [affine([-1.0, 0.0]), affine([0.0, -1.0])], [0.0, 0.0])
near = st.floats(-0.01, 0.01).filter(lambda v: abs(v) > 1e-9)


@given(near, near)
def test_feasibility_perturbation_postconditions(a, b):
    rep = build_perturbation_P32(quadrant, [0.0, 0.0], [a, b])
    assert rep.feasible and rep.contains_T0 and rep.within_bound
    cert = kkt_check(quadrant, [0.0, 0.0])
    assert rep.N >= 1.0 and set(rep.T0) == set(cert.indices)


@given(near, near, st.floats(0.1, 10.0))
def test_subset_perturbation_ratio_chain(a, b, r):
    x = np.array([a, b])
    rep = build_perturbation_T602(quadrant, [0.0, 0.0], (0, 1), x, r)
    assert rep.feasible and rep.contains_D and rep.within_bound
    assert rep.ratio <= rep.ratio_bound * (1 + 1e-9)


def test_subset_perturbation_rejects_non_certificate_subset():
    with pytest.raises(ValueError):
        build_perturbation_T602(quadrant, [0.0, 0.0], (0,), [0.01, 0.01], 1.0)


def test_feasibility_perturbation_requires_positive_supremum():
    with pytest.raises(ValueError):
        build_perturbation_P32(quadrant, [0.0, 0.0], [0.0, 0.0])


def test_upper_bound_on_quadrant(instances):
    inst = instances("lp-quadrant")
    ub = upper_bound_T602(inst.program, inst.center, 1.0, LiminfQuery(K=10, samples_nd=128))
    assert ub.argmin_D == (0, 1)
    assert ub.value == pytest.approx(1 / math.sqrt(2), abs=1e-3)


def test_upper_bound_needs_slater():
    P = SIProgram(Smooth(affine([1.0])), [0.0], [affine([1.0]), affine([-1.0])], [0.0, 0.0])
    with pytest.raises(NoSlaterError):
        upper_bound_T602(P, [0.0], 1.0, SMALL)


def test_chain_and_equality_probe_on_quadrant(instances):
    inst = instances("lp-quadrant")
    rep = check_equivalence_chain(inst.program, inst.center, 1.0, SMALL)
    assert rep.implications_ok, rep.problems
    assert rep.verdicts["iv"] is CalmVerdict.CALM
    probe = clm_enc_equality_probe(inst.program, inst.center, 1.0, SMALL)
    assert probe.status == "EQUAL"


def test_equality_probe_skipped_without_enc(instances):
    inst = instances("sip-remark")
    assert clm_enc_equality_probe(inst.program, inst.center, 1.0, SMALL).status == "SKIPPED_NO_ENC"


def test_level_map_matches_supremum_function_on_remark(instances):
    inst = instances("sip-remark")
    q = LiminfQuery(r0=1e-3, K=10, samples_1d=16, tail=4)
    level = estimate_clm(inst.program, inst.center, 1.0, MapKind.LEVEL, q)
    part = estimate_clm(inst.program, inst.center, 1.0, MapKind.PARTIAL, q)
    assert level.verdict is CalmVerdict.NOT_CALM
    assert part.verdict is CalmVerdict.CALM
    fbar = sup_function(inst.program, inst.center)
    assert fbar(np.array([0.5])) == pytest.approx(0.5)
