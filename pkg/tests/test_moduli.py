import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from holder_bounds.errors import CenterNotInSetError
from holder_bounds.moduli import (LiminfQuery, Verdict, alpha_factor, alpha_factor_argmax,
                                  certify_error_bound, check_condition, check_ordering_inequality,
                                  conclusion_for, estimate_Er, estimate_Er_under,
                                  estimate_Er_under_prime, from_q_view, p_order_view,
                                  scaling_constant, shell_points, solve_tau_alpha,
                                  tau_alpha_residual)

FAST = LiminfQuery(K=14, samples_1d=32, samples_nd=64)


def test_half_square_moduli_at_half(instances):
    inst = instances("example-3.6")
    f, c = inst.function, inst.center
    # f = x^2 on the right: every ratio is constant in x at q = 1/2
    assert estimate_Er(f, c, 0.5, FAST).value == pytest.approx(1.0, rel=1e-9)
    assert estimate_Er_under(f, c, 0.5, FAST).value == pytest.approx(1.0, rel=1e-9)
    assert estimate_Er_under_prime(f, c, 0.5, FAST).value == pytest.approx(0.5 * math.sqrt(2.0), rel=1e-9)


def test_half_square_below_threshold_exponent_vanishes(instances):
    inst = instances("example-3.6")
    est = estimate_Er(inst.function, inst.center, 1.0, FAST)
    # ratio is x, shells shrink geometrically
    assert est.value < 1e-3
    vals = [s.min_value for s in est.trace.shells]
    assert all(b <= a for a, b in zip(vals, vals[1:]))


def test_center_outside_sublevel_set_rejected(instances):
    f = instances("example-abs").function
    with pytest.raises(CenterNotInSetError):
        estimate_Er(f, [1.0], 0.5, FAST)


def test_trace_csv_has_one_row_per_sample(instances):
    inst = instances("example-abs")
    est = estimate_Er(inst.function, inst.center, 1.0, FAST)
    text = est.trace.to_csv()
    assert text.count("\n") == 1 + len(est.trace.rows)
    assert est.value == pytest.approx(1.0)


def test_shell_points_respect_shell_bounds():
    q = LiminfQuery(samples_nd=50)
    for k in (0, 3):
        pts = shell_points([0.0, 0.0, 0.0], k, q)
        r = np.linalg.norm(pts, axis=1)
        outer = q.r0 * q.gamma ** k
        assert np.all(r <= outer * (1 + 1e-12)) and np.all(r >= outer * q.gamma * (1 - 1e-12))
    assert np.array_equal(shell_points([0.0, 0.0], 2, q), shell_points([0.0, 0.0], 2, q))


def test_invalid_query_rejected():
    with pytest.raises(ValueError):
        LiminfQuery(gamma=1.0)


@pytest.mark.parametrize("q", [0.25, 0.5, 0.75, 1.0])
def test_ordering_on_half_square(instances, q):
    inst = instances("example-3.6")
    rep = check_ordering_inequality(inst.function, inst.center, q, FAST)
    assert rep.holds


@given(st.floats(0.01, 1.0))
def test_alpha_factor_is_maximized_at_q(q):
    grid = np.linspace(0, 1, 2001)
    assert np.max(alpha_factor(grid, q)) <= scaling_constant(q) + 1e-12
    assert float(alpha_factor(q, q)) == pytest.approx(scaling_constant(q))


def test_alpha_argmax_sweep():
    a, v = alpha_factor_argmax(0.3)
    assert a == 0.3 and v == pytest.approx(0.3 ** 0.3 * 0.7 ** 0.7)
    with pytest.raises(ValueError):
        alpha_factor_argmax(1.5)


@given(st.floats(0.05, 1.0), st.floats(0.0, 1.0), st.floats(0.01, 0.99), st.floats(0.01, 100.0))
def test_tau_alpha_is_a_root(q, lam, alpha, tau):
    t = solve_tau_alpha(q, lam, alpha, tau)
    assert t > 0
    assert tau_alpha_residual(q, lam, alpha, tau, t) <= 1e-12 * max(1.0, alpha * tau)


def test_tau_alpha_reduces_to_alpha_tau():
    assert solve_tau_alpha(1.0, 0.4, 0.5, 3.0) == 1.5
    assert solve_tau_alpha(0.5, 0.0, 0.5, 3.0) == 1.5


@given(st.floats(0.0, 20.0), st.floats(0.01, 50.0))
def test_order_views_are_inverse(p, tau):
    q, t = p_order_view(p, tau)
    p2, tau2 = from_q_view(q, t)
    assert p2 == pytest.approx(p, abs=1e-9) and tau2 == pytest.approx(tau, rel=1e-9)


def test_sufficient_condition_and_conclusion_on_abs(instances):
    inst = instances("example-abs")
    # |x| has f = d, so the t31 gate never fires below tau = 1
    assert check_condition(inst.function, inst.center, 1.0, 0.9, 1.0, "t31").verdict is Verdict.VACUOUS
    rep = check_condition(inst.function, inst.center, 1.0, 0.9, 1.0, "p316", beta=2.0)
    assert rep.verdict is Verdict.HOLDS and rep.gated == rep.sampled
    exponent, const, radius = conclusion_for("p316", 1.0, 0.9, 1.0, beta=2.0)
    assert (exponent, const, radius) == (1.0, 0.9, 0.5)
    assert certify_error_bound(inst.function, inst.center, exponent, const, radius).holds


def test_condition_fails_when_tau_too_large(instances):
    inst = instances("example-abs")
    rep = check_condition(inst.function, inst.center, 1.0, 1.5, 1.0, "t31")
    assert rep.verdict is Verdict.FAILS and rep.violating_points


def test_condition_vacuous_and_box_limited(instances):
    inst = instances("example-3.6")
    rep = check_condition(inst.function, inst.center, 0.5, 1e-9, 20.0, "t33", gate="simplified")
    assert rep.box_limited
    rep = check_condition(inst.function, inst.center, 1.0, 1e-12, 1.0, "t31")
    assert rep.verdict is Verdict.VACUOUS


def test_condition_argument_validation(instances):
    f = instances("example-abs").function
    with pytest.raises(ValueError):
        check_condition(f, [0.0], 1.5, 1.0, 1.0, "t33")
    with pytest.raises(ValueError):
        check_condition(f, [0.0], 1.0, 1.0, 1.0, "nope")
