import math

import numpy as np
import pytest

from minimax_cert.cones import active_sets
from minimax_cert.errors import LambdaMaxEmpty
from minimax_cert.multipliers import (
    alpha_completions,
    full_multiplier_find,
    jacobian_uniqueness_check,
    kkt_residual,
    lagrangian_max_hessian_yy,
    lambda2_face_min,
    lambda2_max,
    lambda2_vertices,
    lambda_max_find,
)
from minimax_cert.problem import CandidatePoint, ProblemSpec

P2 = ProblemSpec.from_strings(1, 1, "y1", phi_ineq=["-x1"], varphi_ineq=["y1 - x1"])
SADDLE = ProblemSpec.from_strings(1, 1, "x1*y1 - y1^2")
# two parallel copies of the coupled constraint: Lambda_max is a segment
DOUBLE = ProblemSpec.from_strings(1, 1, "y1", phi_ineq=["-x1"], varphi_ineq=["y1 - x1", "2*y1 - 2*x1"])


def _setup(spec, x=(0.0,), y=(0.0,)):
    p = CandidatePoint.at(spec, x, y)
    return p, active_sets(spec, p)


def test_p2_multipliers():
    p, act = _setup(P2)
    inner = lambda_max_find(P2, p, act)
    assert inner.beta == pytest.approx([1.0])
    assert kkt_residual(P2, p, inner.alpha, inner.beta, block="inner").verdict == "pass"
    wit = full_multiplier_find(P2, p, act)
    assert wit.alpha == pytest.approx([1.0]) and wit.beta == pytest.approx([1.0])
    rep = kkt_residual(P2, p, wit.alpha, wit.beta)
    assert rep.verdict == "pass" and rep.stationarity <= 1e-9


def test_kkt_residual_reports_failures():
    p, _ = _setup(P2)
    assert kkt_residual(P2, p, [0.0], [1.0]).stationarity == pytest.approx(1.0)
    assert kkt_residual(P2, p, [0.0], [1.0]).verdict == "fail"
    assert kkt_residual(P2, p, [1.0], [-1.0]).sign_violation == pytest.approx(1.0)
    q, _ = _setup(P2, (1.0,), (0.0,))
    # inactive constraint with a nonzero multiplier breaks complementarity
    assert kkt_residual(P2, q, [0.0], [1.0]).complementarity == pytest.approx(1.0)


def test_lambda2_max_p2():
    p, act = _setup(P2)
    res = lambda2_max(P2, p, act, [1.0])
    assert res.value == pytest.approx(1.0)
    assert lambda2_max(P2, p, act, [0.0]).value == pytest.approx(0.0)


def test_lambda_max_empty():
    spec = ProblemSpec.from_strings(1, 1, "y1")  # unconstrained, grad_y f = 1
    p, act = _setup(spec)
    assert lambda_max_find(spec, p, act) is None
    with pytest.raises(LambdaMaxEmpty):
        lambda2_max(spec, p, act, [1.0])


def test_unconstrained_saddle():
    p, act = _setup(SADDLE)
    assert lambda_max_find(SADDLE, p, act).beta.size == 0
    wit = full_multiplier_find(SADDLE, p, act)
    assert wit.alpha.size == 0 and wit.beta.size == 0
    verts, exhaustive = lambda2_vertices(SADDLE, p, act, [1.0])
    assert exhaustive and len(verts) == 1 and verts[0].size == 0
    assert lagrangian_max_hessian_yy(SADDLE, p, []) == pytest.approx(np.array([[-2.0]]))


def test_segment_vertices_and_face_min():
    p, act = _setup(DOUBLE)
    verts, exhaustive = lambda2_vertices(DOUBLE, p, act, [1.0])
    assert exhaustive
    got = sorted(tuple(np.round(v, 9)) for v in verts)
    assert got == [(0.0, 0.5), (1.0, 0.0)]
    # minimise beta_1 - beta_2 over the face: attained at (0, 0.5)
    assert lambda2_face_min(DOUBLE, p, act, [1.0], [1.0, -1.0]) == pytest.approx(-0.5)
    for b in verts:
        assert kkt_residual(DOUBLE, p, [0.0], b, block="inner").verdict == "pass"


def test_lambda2_value_equals_brute_force_over_vertices():
    p, act = _setup(DOUBLE)
    verts, _ = lambda2_vertices(DOUBLE, p, act, [0.0])
    # u = 0: every beta is optimal, so the face is all of Lambda_max
    assert len(verts) == 2
    Jx = p.varphi_jacobian()[:, :1]
    for u in ([1.0], [2.5]):
        direct = min(float(p.f.grad[:1] @ u - b @ (Jx @ u)) for b in verts)
        assert lambda2_max(DOUBLE, p, act, u).value == pytest.approx(direct)


def test_unbounded_face_is_flagged():
    # beta_1 - beta_2 = 1 from an equality pair; face unbounded along (1, 1)
    spec = ProblemSpec.from_strings(1, 1, "y1", varphi_ineq=["y1 - x1", "x1 - y1"])
    p, act = _setup(spec)
    verts, exhaustive = lambda2_vertices(spec, p, act, [1.0])
    assert not exhaustive and verts


def test_alpha_completions():
    p, act = _setup(P2)
    alpha, value = alpha_completions(P2, p, act, [1.0], objective=[1.0])
    assert alpha == pytest.approx([1.0]) and value == pytest.approx(1.0)
    assert alpha_completions(P2, p, act, [0.5]) is None  # y-stationarity fails


def test_alpha_completion_unbounded():
    spec = ProblemSpec.from_strings(1, 1, "-y1^2", phi_ineq=["x1", "-x1"])
    p, act = _setup(spec)
    alpha, value = alpha_completions(spec, p, act, [], objective=[1.0, 1.0])
    assert math.isinf(value)


def test_jacobian_uniqueness():
    p, act = _setup(SADDLE)
    rep = jacobian_uniqueness_check(SADDLE, p, act)
    assert rep.overall
    convex = ProblemSpec.from_strings(1, 1, "y1^2")
    p, act = _setup(convex)
    assert not jacobian_uniqueness_check(convex, p, act).sosc
    p, act = _setup(DOUBLE)
    assert not jacobian_uniqueness_check(DOUBLE, p, act).licq
