import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linprog

from holder_bounds import lp
from holder_bounds.errors import InfeasibleError, UnboundedError


def test_simplex_matches_scipy_on_random_bounded_lps(rng):
    for _ in range(60):
        m, n = rng.integers(1, 5), rng.integers(2, 6)
        A = rng.normal(size=(m, n))
        x0 = rng.uniform(0, 1, n)
        b = A @ x0
        c = rng.uniform(0.1, 2, n)  # positive costs over x >= 0 keep it bounded
        ours = lp.simplex(c, A, b)
        ref = linprog(c, A_eq=A, b_eq=b, bounds=[(0, None)] * n, method="highs")
        assert ours.value == pytest.approx(ref.fun, abs=1e-8)
        assert np.allclose(A @ ours.x, b, atol=1e-8)


def test_infeasible_and_unbounded():
    with pytest.raises(InfeasibleError):
        lp.simplex([1.0], [[1.0]], [-1.0])
    with pytest.raises(UnboundedError):
        lp.solve_inequality_lp([-1.0, 0.0], [[0.0, 1.0]], [1.0])


def test_inequality_form_with_free_variables():
    res = lp.solve_inequality_lp([1.0, 1.0], [[-1.0, 0.0], [0.0, -1.0]], [2.0, -3.0])
    assert np.allclose(res.x, [-2.0, 3.0])


@given(st.lists(st.floats(-3, 3), min_size=2, max_size=2), st.floats(0, 1))
def test_hull_membership_of_convex_combinations(p, lam):
    hull = np.array([[0.0, 0.0], [1.0, 0.0], p])
    target = lam * hull[1] + (1 - lam) * hull[2]
    assert lp.is_member(target, hull)


def test_representation_with_cone_only():
    rep = lp.best_representation([2.0, 3.0], None, np.eye(2))
    assert rep.residual == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(rep.cone_weights, [2.0, 3.0])
    assert not lp.is_member([-1.0, 0.0], None, np.eye(2))
