import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minimax_cert import numlin
from minimax_cert.cones import PolyhedralCone
from minimax_cert.errors import SingularKkt
from minimax_cert.numlin import LinearProgram, max_quad_over_cone, solve_lp
from oracles import lp_oracle, min_eig_bisection


def test_trivial_lps():
    assert solve_lp(LinearProgram.build([1.0], ge=([[1.0]], [0.0]), free=True)).value == pytest.approx(0.0)
    assert solve_lp(LinearProgram.build([-1.0], ge=([[1.0]], [0.0]), free=True)).status == "unbounded"
    infeasible = LinearProgram.build([0.0], le=([[1.0]], [-1.0]), ge=([[1.0]], [1.0]), free=True)
    assert solve_lp(infeasible).status == "infeasible"


def test_lp_with_equalities_and_free_variables():
    # min x + 2y s.t. x + y = 1, x - y <= 3, y free, x >= 0
    lp = LinearProgram.build([1.0, 2.0], le=([[1.0, -1.0]], [3.0]), eq=([[1.0, 1.0]], [1.0]), free=[False, True])
    sol = solve_lp(lp)
    assert sol.optimal
    assert sol.value == pytest.approx(0.0)
    assert np.allclose(sol.z, [2.0, -1.0])


def test_degenerate_lp_terminates():
    # Beale-style cycling example
    c = [-0.75, 150.0, -0.02, 6.0]
    A = [[0.25, -60.0, -0.04, 9.0], [0.5, -90.0, -0.02, 3.0], [0.0, 0.0, 1.0, 0.0]]
    sol = solve_lp(LinearProgram.build(c, le=(A, [0.0, 0.0, 1.0])))
    assert sol.optimal
    assert sol.value == pytest.approx(-0.05)


def test_redundant_equalities():
    lp = LinearProgram.build([1.0, 1.0], eq=([[1.0, 1.0], [2.0, 2.0]], [1.0, 2.0]))
    sol = solve_lp(lp)
    assert sol.optimal and sol.value == pytest.approx(1.0)


def test_random_lps_against_vertex_enumeration():
    rng = np.random.default_rng(2)
    counts = {"optimal": 0, "infeasible": 0, "unbounded": 0}
    for _ in range(200):
        k = int(rng.integers(1, 5))
        r = int(rng.integers(1, 6))
        c = rng.integers(-3, 4, k).astype(float)
        A = rng.integers(-3, 4, (r, k)).astype(float)
        b = rng.integers(-4, 6, r).astype(float)
        status, value = lp_oracle(c, A, b)
        sol = solve_lp(LinearProgram.build(c, le=(A, b)))
        assert sol.status == status
        counts[status] += 1
        if status == "optimal":
            assert sol.value == pytest.approx(value, abs=1e-8)
    assert min(counts.values()) > 0


def test_lp_dual_values_agree():
    # weak/strong duality check built mechanically: min c.z, Az >= b, z >= 0 vs max b.w, A^T w <= c, w >= 0
    rng = np.random.default_rng(9)
    agreed = 0
    for _ in range(100):
        A = rng.integers(0, 4, (3, 3)).astype(float)
        b = rng.integers(0, 4, 3).astype(float)
        c = rng.integers(1, 5, 3).astype(float)
        primal = solve_lp(LinearProgram.build(c, ge=(A, b)))
        dual = solve_lp(LinearProgram.build(-b, le=(A.T, c)))
        if primal.optimal:
            assert dual.optimal
            assert primal.value == pytest.approx(-dual.value, abs=1e-9)
            agreed += 1
    assert agreed > 50


def test_solve_kkt():
    assert numlin.solve_kkt([[-2.0]], [1.0]) == pytest.approx([0.5])
    d = numlin.solve_kkt(-np.eye(2), [1.0, 0.0], [[0.0, 1.0]])
    assert np.allclose(d, [1.0, 0.0])
    with pytest.raises(SingularKkt):
        numlin.solve_kkt(np.zeros((2, 2)), [1.0, 0.0])


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(0, 10_000))
def test_min_eig_against_bisection(d, seed):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((d, d))
    H = B + B.T
    assert numlin.min_eig(H) == pytest.approx(min_eig_bisection(H), abs=1e-9)
    assert numlin.max_eig(H) == pytest.approx(-min_eig_bisection(-H), abs=1e-9)


def test_min_eig_edge_cases():
    assert numlin.min_eig(np.diag([-2.0, -1.0])) == -2.0
    assert numlin.min_eig(np.zeros((3, 3))) == 0.0


def test_rank_and_nullspace():
    A = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]])
    assert numlin.rank(A) == 1
    N = numlin.nullspace(A, 3)
    assert N.shape == (3, 2)
    assert np.allclose(A @ N, 0.0)
    assert np.allclose(N.T @ N, np.eye(2))


def test_max_quad_simple_cases():
    free = PolyhedralCone.full(1)
    r = max_quad_over_cone([[-4.0]], [2.0], free)
    assert r.value == pytest.approx(0.5) and r.direction == pytest.approx([0.5])
    half = PolyhedralCone(1, [[-1.0]], np.zeros((0, 1)))
    assert max_quad_over_cone([[1.0]], [0.0], half).unbounded
    assert max_quad_over_cone([[-1.0]], [0.0], half).value == pytest.approx(0.0)
    # linear growth along a flat direction
    assert max_quad_over_cone([[0.0]], [1.0], half).unbounded
    assert max_quad_over_cone([[0.0]], [-1.0], half).value == pytest.approx(0.0)
    # empty section
    empty = PolyhedralCone(1, [[1.0], [-1.0]], np.zeros((0, 1)), c_ineq=[1.0, 1.0])
    assert not max_quad_over_cone([[-1.0]], [0.0], empty).feasible


def test_max_quad_matches_dense_sampling():
    rng = np.random.default_rng(4)
    for _ in range(40):
        d = int(rng.integers(1, 4))
        B = rng.standard_normal((d, d))
        H = -(B @ B.T) - 0.1 * np.eye(d)
        g = rng.standard_normal(d)
        A = rng.standard_normal((2, d))
        cone = PolyhedralCone(d, A, np.zeros((0, d)), c_ineq=-np.ones(2))
        r = max_quad_over_cone(H, g, cone)
        assert cone.contains(r.direction, 1e-8)
        pts = rng.uniform(-5, 5, (4000, d))
        pts = pts[np.all(pts @ A.T - 1 <= 0, axis=1)]
        vals = 0.5 * np.einsum("ij,jk,ik->i", pts, H, pts) + pts @ g
        assert r.value >= vals.max() - 1e-9
        assert r.value == pytest.approx(0.5 * r.direction @ H @ r.direction + g @ r.direction)


def test_max_quad_indefinite_bounded_on_cone():
    # h1^2 - 3 h2^2 over {h2 >= 2|h1|}: bounded, value 0
    cone = PolyhedralCone(2, [[2.0, -1.0], [-2.0, -1.0]], np.zeros((0, 2)))
    r = max_quad_over_cone(np.diag([2.0, -6.0]), [0.0, 0.0], cone)
    assert not r.unbounded and r.value == pytest.approx(0.0)
    # same form on {h2 >= |h1| / 2}: positive curvature ray
    cone = PolyhedralCone(2, [[0.5, -1.0], [-0.5, -1.0]], np.zeros((0, 2)))
    r = max_quad_over_cone(np.diag([2.0, -6.0]), [0.0, 0.0], cone)
    assert r.unbounded and math.isinf(r.value)
