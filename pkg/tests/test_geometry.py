import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robust_lmp.geometry import InfeasibleSet, QuadConstraint, barrier_maximize, cutting_plane_maximize


def ellipsoid(rng, n, idx=None, radius=4.0):
    A = rng.normal(size=(n, n))
    P = A @ A.T + n * np.eye(n)
    idx = np.arange(n) if idx is None else np.asarray(idx)
    return QuadConstraint(idx, rng.normal(size=idx.size), P, radius)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 6))
def test_single_ellipsoid_closed_form(seed, n):
    # max c.z over (z-m)'P(z-m) <= r is c.m + sqrt(r c'P^-1 c)
    rng = np.random.default_rng(seed)
    q = ellipsoid(rng, n)
    c = rng.normal(size=n)
    exact = c @ q.center + np.sqrt(q.radius * c @ np.linalg.solve(q.P, c))
    res = barrier_maximize(c, [q], z0=q.center)
    assert res.objective == pytest.approx(exact, rel=1e-8, abs=1e-8)
    assert q.value(res.z) <= 1e-7


def test_barrier_agrees_with_cutting_planes_on_overlapping_windows():
    rng = np.random.default_rng(5)
    n = 6
    quads = [ellipsoid(rng, 3, idx=np.arange(s, s + 3), radius=6.0) for s in range(n - 2)]
    for q in quads:
        q.center[:] = 0.0
    c = rng.normal(size=n)
    lb, ub = np.full(n, -3.0), np.full(n, 3.0)
    a = barrier_maximize(c, quads, lb=lb, ub=ub)
    b = cutting_plane_maximize(c, quads, lb, ub, tol=1e-7)
    # outer approximation sits slightly above the true maximum
    assert b.objective >= a.objective - 1e-7
    assert a.objective == pytest.approx(b.objective, rel=1e-4, abs=1e-4)


def test_fixed_coordinates_are_respected():
    rng = np.random.default_rng(1)
    q = ellipsoid(rng, 4, radius=10.0)
    c = np.ones(4)
    res = barrier_maximize(c, [q], fixed={0: q.center[0], 2: q.center[2]}, z0=q.center)
    assert res.z[0] == q.center[0] and res.z[2] == q.center[2]
    assert q.value(res.z) <= 1e-7


def test_linear_rows_bind():
    q = QuadConstraint(np.arange(2), np.zeros(2), np.eye(2), 4.0)
    res = barrier_maximize([1.0, 0.0], [q], A=[[1.0, 0.0]], b=[1.0])
    assert res.objective == pytest.approx(1.0, abs=1e-8)


def test_infeasible_intersection():
    q1 = QuadConstraint(np.arange(2), np.zeros(2), np.eye(2), 1.0)
    q2 = QuadConstraint(np.arange(2), np.array([5.0, 0.0]), np.eye(2), 1.0)
    with pytest.raises(InfeasibleSet):
        barrier_maximize([1.0, 1.0], [q1, q2])
