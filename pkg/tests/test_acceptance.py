"""Acceptance criteria, one test each; run with ``pytest tests/test_acceptance.py -s``.

Every test prints a single ``criterion N: PASS|FAIL`` line with its measurements.
"""

import time

import numpy as np
import pytest

from minimax_cert import expr as ex
from minimax_cert import report as rp
from minimax_cert.cli import run_certify
from minimax_cert.cones import active_sets, linearization_cone_X, sample_directions
from minimax_cert.config import RunConfig
from minimax_cert.first_order import duality_gap, first_order_certificate, mfcq_check
from minimax_cert.multipliers import kkt_residual
from minimax_cert.numlin import LinearProgram, solve_lp
from minimax_cert.oracle import GridSpec, fd_directional_derivative, fd_second_directional
from minimax_cert.problem import CandidatePoint, ProblemSpec
from minimax_cert.second_order import (
    hstar,
    inner_sonc_check,
    reduced_hessian_value,
    second_order_certificate,
)
from generators import concave_quadratic, coupled_fixture
from oracles import fd_gradient, fd_hessian, lp_oracle, python_eval, random_expression

SADDLE = ProblemSpec.from_strings(1, 1, "x1*y1 - y1^2")
FLIPPED = ProblemSpec.from_strings(1, 1, "x1*y1 + y1^2")
P2 = ProblemSpec.from_strings(1, 1, "y1", phi_ineq=["-x1"], varphi_ineq=["y1 - x1"])
DELTAS = (0.2, 0.1, 0.05)
FD_FLOOR = 1e-10  # values this small count as converged in the refinement test


def _record(n: int, ok: bool, detail: str) -> None:
    print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def _rel(a, b) -> float:
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))


def test_criterion_1_autodiff():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst_g = worst_h = 0.0
    count = 0
    while count < 1000:
        n, m = (int(v) for v in rng.integers(1, 3, size=2))
        text = random_expression(rng, n, m, depth=3)
        e = ex.parse_expression(text, n, m)
        x, y = rng.uniform(-1, 1, n), rng.uniform(-1, 1, m)
        z = np.concatenate([x, y])
        j = ex.jet(e, x, y)
        g_fd = fd_gradient(lambda w: python_eval(text, w[:n], w[n:]), z)
        H_fd = fd_hessian(lambda w: ex.jet(e, w[:n], w[n:]).g, z)
        worst_g = max(worst_g, _rel(j.g, g_fd))
        worst_h = max(worst_h, _rel(j.H, H_fd))
        count += 1
    elapsed = time.perf_counter() - t0
    ok = worst_g <= 1e-6 and worst_h <= 1e-5 and elapsed < 30
    _record(1, ok, f"{count} expressions, max grad rel err {worst_g:.2e}, max Hessian rel err {worst_h:.2e}, "
                   f"{elapsed:.1f} s")


def test_criterion_2_lp():
    rng = np.random.default_rng(202)
    t0 = time.perf_counter()
    worst = 0.0
    mismatches = 0
    counts = {"optimal": 0, "infeasible": 0, "unbounded": 0}
    for _ in range(500):
        k = int(rng.integers(1, 7))
        r = int(rng.integers(1, 9))
        c = rng.integers(-3, 4, k).astype(float)
        A = rng.integers(-3, 4, (r, k)).astype(float)
        b = rng.integers(-4, 6, r).astype(float)
        status, value = lp_oracle(c, A, b)
        sol = solve_lp(LinearProgram.build(c, le=(A, b)))
        counts[status] += 1
        if sol.status != status:
            mismatches += 1
        elif status == "optimal":
            worst = max(worst, abs(sol.value - value))
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and worst <= 1e-8 and elapsed < 30
    _record(2, ok, f"500 LPs {counts}, status mismatches {mismatches}, max value err {worst:.2e}, {elapsed:.1f} s")


def test_criterion_3_strong_duality():
    rng = np.random.default_rng(303)
    fixtures = 0
    worst = 0.0
    directions = 0
    while fixtures < 100:
        n, m = int(rng.integers(2, 4)), int(rng.integers(1, 4))
        spec = coupled_fixture(rng, n, m, int(rng.integers(1, 4)))
        p = CandidatePoint.at(spec, np.zeros(n), np.zeros(m))
        act = active_sets(spec, p)
        if mfcq_check(spec, p, act).verdict != "pass":
            continue
        fixtures += 1
        for u in sample_directions(linearization_cone_X(spec, p, act), 64, fixtures):
            g = duality_gap(spec, p, act, u)
            worst = max(worst, abs(g.primal - g.dual) if np.isfinite(g.dual) else 0.0)
            directions += 1
    _record(3, worst <= 1e-7, f"{fixtures} MFCQ fixtures, {directions} directions, max |primal - dual| {worst:.2e}")


def test_criterion_4_saddle_end_to_end():
    t0 = time.perf_counter()
    cfg = RunConfig(resolution=41, deltas=DELTAS)
    p = CandidatePoint.at(SADDLE, [0.0], [0.0])
    first = first_order_certificate(SADDLE, p, cfg)
    second = second_order_certificate(SADDLE, p, cfg, first)
    rep = run_certify(SADDLE, [0.0], [0.0], cfg)
    elapsed = time.perf_counter() - t0
    orc = rep["oracle"]
    crit = sorted(second.critical, key=lambda d: float(d.u[0]))
    checks = {
        "first-order certified": first.overall == "certified",
        "empty multipliers": first.witness.alpha.size == 0 and first.witness.beta.size == 0,
        "critical u = -1, 1": [float(d.u[0]) for d in crit] == [-1.0, 1.0],
        "h* = u/2": all(np.allclose(hstar(SADDLE, p, [], [], d.u).h_star, 0.5 * d.u, atol=1e-12) for d in crit),
        "value u^2/2": all(abs(hstar(SADDLE, p, [], [], d.u).attained_value - 0.5 * d.u[0] ** 2) <= 1e-12
                           for d in crit),
        "SSOSC pass": all(d.ssosc.verdict == "pass" for d in crit),
        "overall sufficient-certified": rep["overall"] == "sufficient-certified",
        "calm definition pass": orc["calm_definition"]["verdict"] == "pass",
        "growth pass": all(g["verdict"] == "pass" for g in orc["growth"]),
        "eps_hat in [0.8, 1.2]": all(0.8 <= g["eps_hat"] <= 1.2 for g in orc["growth"]),
        "mu_hat in [0.2, 0.3]": all(0.2 <= g["mu_hat"] <= 0.3 for g in orc["growth"]),
        "runtime < 10 s": elapsed < 10,
    }
    failed = [k for k, v in checks.items() if not v]
    eps = [g["eps_hat"] for g in orc["growth"]]
    mu = [g["mu_hat"] for g in orc["growth"]]
    _record(4, not failed, f"eps_hat {eps}, mu_hat {mu}, {elapsed:.2f} s" + (f", failed {failed}" if failed else ""))


def test_criterion_5_p2_end_to_end():
    t0 = time.perf_counter()
    cfg = RunConfig()
    p = CandidatePoint.at(P2, [0.0], [0.0])
    act = active_sets(P2, p)
    first = first_order_certificate(P2, p, cfg)
    second = second_order_certificate(P2, p, cfg, first)
    mf = mfcq_check(P2, p, act)
    kkt = kkt_residual(P2, p, first.witness.alpha, first.witness.beta)
    gap = duality_gap(P2, p, act, [1.0])
    elapsed = time.perf_counter() - t0
    checks = {
        "witness (1, 1)": np.allclose(first.witness.alpha, [1.0]) and np.allclose(first.witness.beta, [1.0]),
        "KKT residual <= 1e-9": kkt.stationarity <= 1e-9 and kkt.verdict == "pass",
        "duality value 1 at u = 1": abs(gap.dual - 1.0) <= 1e-9 and abs(gap.primal - 1.0) <= 1e-9,
        "no critical directions": not second.critical,
        "MFCQ pass, w = -1": mf.verdict == "pass" and np.allclose(mf.witness, [-1.0]),
        "runtime < 5 s": elapsed < 5,
    }
    failed = [k for k, v in checks.items() if not v]
    _record(5, not failed, f"alpha {first.witness.alpha.tolist()}, beta {first.witness.beta.tolist()}, "
                           f"KKT residual {kkt.stationarity:.1e}, {elapsed:.2f} s"
                           + (f", failed {failed}" if failed else ""))


def test_criterion_6_refutations():
    cfg = RunConfig()
    rep = run_certify(SADDLE, [0.5], [0.25], cfg)
    fo = rep["first_order"]
    witness = [g for g in fo["outer"]["directions"] if g["dual"] < -1e-7]
    orc_wit = [c["outer_witness"] for c in rep["oracle"]["calm_definition"]["checks"] if c["outer_witness"]]
    p = CandidatePoint.at(FLIPPED, [0.0], [0.0])
    sonc = inner_sonc_check(FLIPPED, p, active_sets(FLIPPED, p))
    flipped = run_certify(FLIPPED, [0.0], [0.0], cfg)
    ok = (rep["overall"] == "refuted" and bool(witness) and bool(orc_wit)
          and sonc.verdict == "fail" and sonc.witness is not None
          and flipped["overall"] == "refuted" and flipped["second_order"]["overall"] == "refuted")
    u = witness[0]["u"] if witness else None
    _record(6, ok, f"shifted point refuted at u = {u} (dual {witness[0]['dual'] if witness else None}), "
                   f"grid witness x = {orc_wit[0]['x'] if orc_wit else None}; flipped sign: inner SONC "
                   f"{sonc.verdict}, witness h = {None if sonc.witness is None else np.ravel(sonc.witness).tolist()}")


def test_criterion_7_hstar_vs_reduced_value():
    rng = np.random.default_rng(707)
    worst = 0.0
    for _ in range(200):
        n, m = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        spec, _ = concave_quadratic(rng, n, m)
        p = CandidatePoint.at(spec, np.zeros(n), np.zeros(m))
        u = rng.standard_normal(n)
        h = hstar(spec, p, [], [], u)
        val = reduced_hessian_value(spec, p, [], [], u, h.correction)
        worst = max(worst, abs(h.attained_value - val))
    _record(7, worst <= 1e-8, f"200 instances, max |hstar value - reduced value| {worst:.2e}")


def _levels(spec, u):
    p = CandidatePoint.at(spec, [0.0], [0.0])
    diffs, residuals = [], []
    for k in range(3):
        grid = GridSpec(0.1, 2.0, 20 * 2**k + 1)
        steps = [0.1 / 2**k, 0.05 / 2**k]
        diffs.append(fd_directional_derivative(spec, p, u, grid, steps)["diff"])
        d2 = fd_second_directional(spec, p, u, grid, steps)
        residuals.append(abs(d2["estimate"] - d2["lower_bound"]))
    return diffs, residuals


def _halves(seq) -> bool:
    return all(b <= FD_FLOOR or b <= a / 2 for a, b in zip(seq, seq[1:]))


def test_criterion_8_fd_refinement():
    lines = []
    ok = True
    for name, spec, dirs in (("P-saddle", SADDLE, ([1.0], [-1.0])), ("P2", P2, ([1.0],))):
        for u in dirs:
            diffs, residuals = _levels(spec, u)
            ok = ok and _halves(diffs) and _halves(residuals)
            lines.append(f"{name} u={u[0]:+g}: diff {[f'{d:.1e}' for d in diffs]}, "
                         f"residual {[f'{r:.1e}' for r in residuals]}")
    _record(8, ok, f"3 levels (resolution 21/41/81, steps halved), floor {FD_FLOOR:g}; " + "; ".join(lines))


@pytest.mark.parametrize("spec_name", ["P-saddle", "P2"])
def test_criterion_9_determinism(spec_name):
    spec = SADDLE if spec_name == "P-saddle" else P2
    a = rp.dumps(run_certify(spec, [0.0], [0.0], RunConfig()))
    b = rp.dumps(run_certify(spec, [0.0], [0.0], RunConfig()))
    _record(9, a == b, f"{spec_name}: two certify runs, {len(a)} bytes each, byte-identical {a == b}")
