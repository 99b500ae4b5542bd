import numpy as np
import pytest
from hypothesis import given, strategies as st

from holder_bounds.errors import DimensionTooLargeError, EmptySetError
from holder_bounds.functions import FinGenConvexSet, MaxFamily, Piecewise1D, Smooth, affine, constant, power_sum, quadratic
from holder_bounds.geometry import (Status, distance_to_set, min_norm_point, sublevel_distance,
                                    sublevel_distance_oracle)

coords = st.floats(-3, 3, allow_nan=False)


def projection_oracle(G, R):
    """Min-norm by SLSQP over simplex and cone weights; any feasible weights give an upper bound."""
    from scipy.optimize import minimize
    k, j = len(G), len(R)
    A = np.vstack([G, R]) if j else G
    obj = lambda w: float(np.sum((w @ A) ** 2))
    cons = [{"type": "eq", "fun": lambda w: np.sum(w[:k]) - 1.0}]
    res = minimize(obj, np.full(k + j, 1.0 / k if j == 0 else 0.0) + np.r_[np.full(k, 1.0 / k), np.zeros(j)] * (j > 0),
                   bounds=[(0, None)] * (k + j), constraints=cons, method="SLSQP",
                   options={"ftol": 1e-15, "maxiter": 500})
    return np.sqrt(res.fun)


def planar_hull_oracle(G):
    """Exact min-norm of a planar hull: zero if the origin is inside, else the nearest segment."""
    from scipy.optimize import linprog
    k = len(G)
    inside = linprog(np.zeros(k), A_eq=np.vstack([G.T, np.ones(k)]), b_eq=[0.0, 0.0, 1.0],
                     bounds=[(0, None)] * k, method="highs")
    if inside.status == 0:
        return 0.0
    best = np.inf
    for a in G:
        for b in G:
            d = b - a
            t = 0.0 if not d @ d else np.clip(-(a @ d) / (d @ d), 0.0, 1.0)
            best = min(best, float(np.linalg.norm(a + t * d)))
    return best


@given(st.lists(st.tuples(coords, coords), min_size=1, max_size=6))
def test_min_norm_matches_planar_oracle(pts):
    G = np.array(pts)
    res = min_norm_point(FinGenConvexSet(G, np.zeros((0, 2))))
    assert res.certified
    ref = planar_hull_oracle(G)
    if ref == 0.0:
        # membership comes from an LP with feasibility tolerance near 1e-7
        assert res.norm <= 1e-7 * max(1.0, np.abs(G).max())
    else:
        assert res.norm == pytest.approx(ref, rel=1e-9, abs=1e-12)


@given(st.lists(st.tuples(coords, coords), min_size=1, max_size=4),
       st.lists(st.tuples(coords, coords), min_size=1, max_size=3))
def test_min_norm_with_rays_is_certified_and_optimal(pts, rays):
    G, R = np.array(pts), np.array(rays)
    res = min_norm_point(FinGenConvexSet(G, R))
    assert res.certified
    assert res.norm <= projection_oracle(G, R) + 1e-6


@pytest.mark.parametrize("G, R, expected", [
    ([[0.0, -6e-8]], [[0.0, 1.0]], 0.0),            # tiny point pulled back by a ray
    ([[1.0, 0.0]], [[-2.6e-60, 0.0]], 0.0),         # ray of negligible length
    ([[1.0, 2.0]], [[0.0, 0.0], [-1.0, 0.0]], 2.0),  # zero ray is ignored
])
def test_min_norm_ray_edge_cases(G, R, expected):
    res = min_norm_point(FinGenConvexSet(np.array(G), np.array(R)))
    assert res.certified and res.norm == pytest.approx(expected, abs=1e-12)


def test_min_norm_of_empty_set_raises():
    with pytest.raises(EmptySetError):
        min_norm_point(FinGenConvexSet(np.zeros((0, 2)), np.zeros((0, 2))))


def test_distance_to_segment():
    S = FinGenConvexSet(np.array([[1.0, -1.0], [1.0, 1.0]]), np.zeros((0, 2)))
    assert distance_to_set(S) == pytest.approx(1.0)


def test_one_dimensional_distance_is_exact():
    f = Piecewise1D([0.0], [constant(0.0), power_sum([(1, 2)])])
    res = sublevel_distance(f, [0.3])
    assert res.status is Status.EXACT and res.distance == pytest.approx(0.3, abs=1e-15)
    assert sublevel_distance(f, [-0.4]).distance == 0.0


def test_one_dimensional_empty_within_reach():
    f = Smooth(constant(1.0))
    res = sublevel_distance(f, [0.0], reach=2.0)
    assert res.status is Status.EMPTY


def test_polyhedral_projection_matches_grid_oracle():
    f = MaxFamily((affine([-1.0, 0.0]), affine([0.0, -1.0]), affine([1.0, 1.0], -1.0)))
    for x in ([1.5, 1.5], [-0.5, 0.3], [2.0, -1.0]):
        res = sublevel_distance(f, x)
        ref = sublevel_distance_oracle(f, x, [[-1, 3], [-2, 3]], 0.005)
        assert res.distance == pytest.approx(ref, abs=0.01)


def test_smooth_convex_distance_against_oracle():
    f = Smooth(quadratic(np.eye(2), None, -0.5))  # disk of radius 1
    res = sublevel_distance(f, [2.0, 0.0])
    assert res.status in (Status.CERTIFIED, Status.EXACT)
    assert res.distance == pytest.approx(1.0, abs=1e-7)


def test_oracle_anchor_reaches_singleton_sets():
    f = MaxFamily((affine([1.0, 0.0], -0.3), affine([-1.0, 0.0], 0.3),
                   affine([0.0, 1.0], -0.3), affine([0.0, -1.0], 0.3)))
    assert sublevel_distance_oracle(f, [0.0, 0.0], [[-1, 1], [-1, 1]], 0.1) == np.inf
    d = sublevel_distance_oracle(f, [0.0, 0.0], [[-1, 1], [-1, 1]], 0.1, anchors=[[0.3, 0.3]])
    assert d == pytest.approx(np.hypot(0.3, 0.3))


def test_oracle_dimension_limit():
    f = Smooth(affine(np.ones(4)))
    with pytest.raises(DimensionTooLargeError):
        sublevel_distance_oracle(f, np.zeros(4), np.tile([-1, 1], (4, 1)), 0.5)


@given(coords, coords)
def test_distance_zero_on_sublevel_set_and_positive_outside(a, b):
    f = Smooth(quadratic(np.eye(2), None, -1.0))
    x = np.array([a, b])
    d = sublevel_distance(f, x).distance
    expected = max(0.0, np.linalg.norm(x) - np.sqrt(2.0))
    assert d == pytest.approx(expected, abs=1e-6)
