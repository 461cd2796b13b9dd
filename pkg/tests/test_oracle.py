import math

import numpy as np
import pytest

from minimax_cert.config import RunConfig
from minimax_cert.errors import OracleBudgetExceeded, ValidationError
from minimax_cert.oracle import (
    GridSpec,
    ball_grid,
    fd_directional_derivative,
    fd_second_directional,
    localized_value,
    run_oracle,
    verify_calm_definition,
    verify_growth,
)
from minimax_cert.problem import CandidatePoint, ProblemSpec

P2 = ProblemSpec.from_strings(1, 1, "y1", phi_ineq=["-x1"], varphi_ineq=["y1 - x1"])
SADDLE = ProblemSpec.from_strings(1, 1, "x1*y1 - y1^2")
FLIPPED = ProblemSpec.from_strings(1, 1, "x1*y1 + y1^2")
GRID = GridSpec(delta=0.1, kappa=2.0, resolution=41)


def _p(spec, x=(0.0,), y=(0.0,)):
    return CandidatePoint.at(spec, x, y)


def test_grid_spec_validation():
    with pytest.raises(ValidationError):
        GridSpec(resolution=2)
    with pytest.raises(ValidationError):
        GridSpec(delta=0.0)
    assert GRID.half == 20


def test_ball_grid_is_a_centered_ball():
    pts = ball_grid([1.0, -1.0], 0.5, 4)
    assert np.all(np.linalg.norm(pts - [1.0, -1.0], axis=1) <= 0.5 + 1e-12)
    assert any(np.allclose(q, [1.0, -1.0]) for q in pts)


def test_localized_value_examples():
    assert localized_value(P2, [0.5], [0.0], 1.0, GRID) == pytest.approx(0.5)
    assert localized_value(SADDLE, [1.0], [0.0], 1.0, GRID) == pytest.approx(0.25)
    # y <= x - 5 has no point in the unit ball around 0
    far = ProblemSpec.from_strings(1, 1, "y1", varphi_ineq=["y1 - x1 + 5"])
    assert localized_value(far, [0.0], [0.0], 1.0, GRID) == -math.inf


def test_localized_value_monotone_in_radius():
    rng = np.random.default_rng(3)
    for _ in range(20):
        x = rng.uniform(-1, 1, 1)
        vals = [localized_value(SADDLE, x, [0.0], r, GRID) for r in (0.1, 0.2, 0.4, 0.8)]
        # grids with different radii are not nested, allow one grid step of slack
        for a, b in zip(vals, vals[1:]):
            assert b >= a - 0.05


def test_calm_definition():
    res = verify_calm_definition(SADDLE, _p(SADDLE), GRID, [0.2, 0.1, 0.05])
    assert res["verdict"] == "pass" and len(res["checks"]) == 3
    res = verify_calm_definition(P2, _p(P2), GRID, [0.1])
    assert res["verdict"] == "pass"
    res = verify_calm_definition(FLIPPED, _p(FLIPPED), GRID, [0.1])
    assert res["verdict"] == "fail"
    assert res["checks"][0].inner_witness is not None


def test_calm_definition_outer_failure_at_shifted_point():
    res = verify_calm_definition(SADDLE, _p(SADDLE, (0.5,), (0.25,)), GRID, [0.2])
    chk = res["checks"][0]
    assert res["verdict"] == "fail"
    assert chk.inner_witness is None and chk.outer_witness is not None


def test_empty_delta_list_warns():
    res = verify_calm_definition(SADDLE, _p(SADDLE), GRID, [])
    assert res["verdict"] == "pass" and res["warnings"]


def test_fd_directional_derivative():
    res = fd_directional_derivative(P2, _p(P2), [1.0], GRID, [0.05, 0.025])
    assert res["estimate"] == pytest.approx(1.0, abs=1e-9) and res["analytic"] == pytest.approx(1.0)
    res = fd_directional_derivative(SADDLE, _p(SADDLE), [1.0], GRID, [0.05, 0.025])
    assert res["estimate"] == pytest.approx(0.0, abs=1e-9)
    res = fd_directional_derivative(SADDLE, _p(SADDLE), [0.0], GRID, [0.05])
    assert res["estimate"] == 0.0


def test_fd_second_directional():
    res = fd_second_directional(SADDLE, _p(SADDLE), [1.0], GRID, [0.05, 0.025])
    assert res["lower_bound"] == pytest.approx(0.5)
    assert res["estimate"] == pytest.approx(0.5, abs=res["tol_fd"])
    assert res["verdict"] == "pass" and isinstance(res["tol_fd"], float)


def test_verify_growth():
    res = verify_growth(SADDLE, _p(SADDLE), GRID, 0.1)
    assert res["verdict"] == "pass"
    assert res["eps_hat"] == pytest.approx(1.0) and res["mu_hat"] == pytest.approx(0.25)
    res = verify_growth(P2, _p(P2), GRID, 0.1)
    assert res["eps_hat"] > 0 and res["mu_hat"] > 0
    neg = ProblemSpec.from_strings(1, 1, "-x1^2 - y1^2")
    res = verify_growth(neg, _p(neg), GRID, 0.1)
    assert res["verdict"] == "fail" and res["mu_hat"] < 0
    sq = ProblemSpec.from_strings(1, 1, "x1^2 - y1^2")
    res = verify_growth(sq, _p(sq), GRID, 0.1)
    assert res["eps_hat"] == pytest.approx(1.0) and res["mu_hat"] == pytest.approx(1.0)


def test_budget_guard():
    big = ProblemSpec.from_strings(4, 3, "x1 - y1^2")
    p = CandidatePoint.at(big, np.zeros(4), np.zeros(3))
    with pytest.raises(OracleBudgetExceeded):
        verify_growth(big, p, GRID, 0.1)
    assert run_oracle(big, p).verdict == "skipped"


def test_run_oracle():
    rep = run_oracle(SADDLE, _p(SADDLE))
    assert rep.verdict == "pass"
    assert all(d["verdict"] == "pass" for d in rep.derivatives)
    rep = run_oracle(FLIPPED, _p(FLIPPED))
    assert rep.verdict == "fail"
    rep = run_oracle(P2, _p(P2), RunConfig(deltas=(0.1,)))
    assert rep.verdict == "pass"
    d = rep.to_dict()
    assert d["calm_definition"]["checks"][0]["delta"] == 0.1
