import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from holder_bounds.errors import NonpositiveDerivativeError
from holder_bounds.functions import (FinGenConvexSet, IDENTITY_MAP, MaxFamily, Piecewise1D, PlusPart,
                                     PowerWrap, Smooth, Staircase1D, affine, chain_subdifferential,
                                     constant, power_map, power_sum, quadratic, subdifferential)


def half_square():
    return Piecewise1D([0.0], [constant(0.0), power_sum([(1, 2)])])


def test_half_square_values_and_slopes():
    f = half_square()
    assert f(0.5) == 0.25 and f(-1.0) == 0.0 and f(0.0) == 0.0
    s = f.subdifferential(np.array([0.5]))
    assert np.allclose(s.generators, [[1.0]]) and s.is_bounded


def test_abs_subdifferential_at_kink_is_interval():
    f = MaxFamily((affine([1.0]), affine([-1.0])))
    s = f.subdifferential(np.array([0.0]))
    assert sorted(s.generators.ravel()) == [-1.0, 1.0]
    assert s.contains([0.3]) and not s.contains([1.5])


def test_staircase_tread_values_and_jump_subdifferential():
    f = Staircase1D()
    # on (1/3, 1/2] the tread index is 3
    assert f(0.4) == pytest.approx(0.16 + 1 / 3 - 1 / 9, abs=1e-15)
    assert f(-0.2) == 0.0 and f(0.0) == 0.0
    s = f.subdifferential(np.array([0.5]))  # breakpoint: left slope, upward ray
    assert np.allclose(s.generators, [[1.0]]) and np.allclose(s.rays, [[1.0]])


def test_piecewise_value_is_lower_closure():
    f = Piecewise1D([1.0], [constant(2.0), constant(5.0)], assigned=[3.0])
    assert f(1.0) == 2.0
    g = Piecewise1D([1.0], [constant(2.0), constant(5.0)], assigned=[0.5])
    assert g(1.0) == 0.5


def test_chain_rule_scales_and_rejects_flat_outer():
    f = Smooth(quadratic(np.eye(2), [1.0, 0.0], 1.0))
    x = np.array([0.5, -0.5])
    s = chain_subdifferential(f, power_map(0.5), x)
    expected = 0.5 * f(x) ** -0.5 * (x + [1.0, 0.0])
    assert np.allclose(s.generators[0], expected)
    assert np.allclose(chain_subdifferential(f, IDENTITY_MAP, x).generators[0], x + [1.0, 0.0])
    with pytest.raises(NonpositiveDerivativeError):
        chain_subdifferential(f, power_map(0.0), x)


def test_plus_part_and_power_wrap():
    f = PlusPart(Smooth(affine([1.0], -1.0)))
    assert f(0.0) == 0.0 and f(3.0) == 2.0
    s = f.subdifferential(np.array([1.0]))
    assert sorted(s.generators.ravel()) == [0.0, 1.0]
    g = PowerWrap(f, 2.0)
    assert g(3.0) == 4.0
    assert np.allclose(subdifferential(g, [3.0]).generators, [[4.0]])


def test_shifted_polynomial_keeps_exact_roots():
    p = power_sum([(1, 2)]).shifted([1.0], -2.0)  # x^2 + x - 2 = (x + 2)(x - 1)
    assert np.allclose(np.sort(p.roots()), [-2.0, 1.0])
    assert np.allclose(p.negated().roots(), [-2.0, 1.0])


def test_nonconvex_pieces_rejected_in_several_dimensions():
    bad = quadratic(-np.eye(2))
    with pytest.raises(ValueError):
        MaxFamily((bad, affine([1.0, 0.0])))


@given(st.lists(st.tuples(st.floats(-2, 2), st.floats(-2, 2), st.floats(-1, 1)), min_size=1, max_size=5),
       st.floats(-3, 3), st.floats(-3, 3))
def test_max_family_value_and_active_gradients(rows, x0, x1):
    f = MaxFamily(tuple(affine([a, b], c) for a, b, c in rows))
    x = np.array([x0, x1])
    vals = [a * x0 + b * x1 + c for a, b, c in rows]
    assert f(x) == pytest.approx(max(vals))
    s = f.subdifferential(x)
    for g in s.generators:
        # several pieces may share a gradient; one of them must be active
        assert any(np.allclose(g, [a, b]) and vals[i] >= max(vals) - 1e-8 * max(1.0, abs(max(vals)))
                   for i, (a, b, _) in enumerate(rows))


@given(st.floats(-5, 5), st.floats(-5, 5))
def test_convex_set_translation_and_scaling(a, b):
    S = FinGenConvexSet(np.array([[0.0, 0.0], [1.0, 1.0]]), np.zeros((0, 2)))
    T = S.translated([a, b]).scaled(2.0)
    assert T.contains([2 * a + 1, 2 * b + 1])
    assert math.isclose(T.generators[1, 0], 2 * (a + 1))
