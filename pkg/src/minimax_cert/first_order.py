"""First-order certificate: constraint qualifications, strong duality of the
directional LPs and existence of minimax multipliers."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from minimax_cert import expr as ex
from minimax_cert import numlin
from minimax_cert.cones import (
    ActiveSets,
    active_sets,
    linearization_cone_X,
    linearization_cone_Y,
    sample_directions,
)
from minimax_cert.config import RunConfig
from minimax_cert.errors import DomainError, InfeasiblePoint, LambdaMaxEmpty
from minimax_cert.multipliers import (
    KktReport,
    MultiplierVector,
    full_multiplier_find,
    kkt_residual,
    lambda2_max,
)
from minimax_cert.numlin import LinearProgram, solve_lp
from minimax_cert.problem import CandidatePoint, ProblemSpec

MFCQ_MARGIN = 1e-7
RCRCQ_MAX_ACTIVE = 10


@dataclass(frozen=True)
class MfcqResult:
    verdict: str  # "pass" / "fail"
    witness: np.ndarray | None
    margin: float
    rank_ok: bool
    reason: str = ""

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "witness": None if self.witness is None else self.witness.tolist(),
            "margin": self.margin,
            "rank_ok": self.rank_ok,
            "reason": self.reason,
        }


def _mfcq(G_act: np.ndarray, G_eq: np.ndarray, dim: int) -> MfcqResult:
    """max s s.t. G_eq w = 0, G_act w + s <= 0, |w|_inf <= 1, s <= 1."""
    G_act = G_act.reshape(-1, dim)
    G_eq = G_eq.reshape(-1, dim)
    rank_ok = G_eq.shape[0] == 0 or numlin.rank(G_eq) == G_eq.shape[0]
    if not rank_ok:
        return MfcqResult("fail", None, -math.inf, False, "equality gradients are linearly dependent")
    if G_act.shape[0] == 0:
        return MfcqResult("pass", np.zeros(dim), math.inf, True, "no active inequalities")
    k = dim + 1
    c = np.zeros(k)
    c[-1] = -1.0
    rows = [np.hstack([G_act, np.ones((G_act.shape[0], 1))])]
    rows.append(np.hstack([np.eye(dim), np.zeros((dim, 1))]))
    rows.append(np.hstack([-np.eye(dim), np.zeros((dim, 1))]))
    top = np.zeros((1, k))
    top[0, -1] = 1.0
    rows.append(top)
    rhs = np.concatenate([np.zeros(G_act.shape[0]), np.ones(2 * dim), [1.0]])
    eq = (np.hstack([G_eq, np.zeros((G_eq.shape[0], 1))]), np.zeros(G_eq.shape[0])) if G_eq.shape[0] else None
    sol = solve_lp(LinearProgram.build(c, le=(np.vstack(rows), rhs), eq=eq, free=True))
    if not sol.optimal:
        return MfcqResult("fail", None, -math.inf, True, f"margin LP {sol.status}")
    s = float(sol.z[-1])
    w = sol.z[:-1].copy()
    if s > MFCQ_MARGIN:
        return MfcqResult("pass", w, s, True)
    return MfcqResult("fail", None, s, True, "no strictly interior direction for the active inequalities")


def mfcq_check(spec: ProblemSpec, p: CandidatePoint, act: ActiveSets) -> MfcqResult:
    """MFCQ of the inner system in y at the point."""
    J = p.varphi_jacobian()[:, spec.n:]
    return _mfcq(J[list(act.I_varphi)], J[spec.q1:], spec.m)


def outer_mfcq_check(spec: ProblemSpec, p: CandidatePoint, act: ActiveSets) -> MfcqResult:
    J = p.phi_jacobian()
    return _mfcq(J[list(act.I_phi)], J[spec.p1:], spec.n)


def licq_check(spec: ProblemSpec, p: CandidatePoint, act: ActiveSets) -> tuple[str, int, int]:
    J = p.varphi_jacobian()[:, spec.n:]
    rows = J[list(act.I_varphi) + list(range(spec.q1, spec.q1 + spec.q2))]
    if rows.shape[0] == 0:
        return "pass", 0, 0
    r = numlin.rank(rows)
    return ("pass" if r == rows.shape[0] else "fail"), r, rows.shape[0]


@dataclass(frozen=True)
class RcrcqResult:
    verdict: str  # "pass (sampled)" / "fail" / "skipped"
    samples: int
    witness: tuple | None = None  # (x, y, subset)
    reason: str = ""

    def to_dict(self) -> dict:
        wit = None
        if self.witness is not None:
            x, y, K = self.witness
            wit = {"x": list(map(float, x)), "y": list(map(float, y)), "subset": [int(k) + 1 for k in K]}
        return {"verdict": self.verdict, "samples": self.samples, "witness": wit, "reason": self.reason}


def _y_gradients(spec: ProblemSpec, x, y) -> np.ndarray:
    rows = [ex.jet(e, x, y).g[spec.n:] for e in spec.varphi]
    return np.array(rows).reshape(len(rows), spec.m)


def _rank_scaled(A: np.ndarray) -> int:
    if A.shape[0] == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    return int(np.sum(s > 1e-10 * max(1.0, np.linalg.norm(A))))


def rcrcq_check(spec: ProblemSpec, p: CandidatePoint, act: ActiveSets, n_samples: int = 32,
                radius: float = 1e-3, seed: int = 0) -> RcrcqResult:
    """Sampled relaxed constant rank test on every active inequality subset."""
    I = list(act.I_varphi)
    eq = list(range(spec.q1, spec.q1 + spec.q2))
    if not I and not eq:
        return RcrcqResult("pass (sampled)", 0, reason="no active coupled constraints")
    if len(I) > RCRCQ_MAX_ACTIVE:
        return RcrcqResult("skipped", 0, reason=f"{len(I)} active inequalities exceed cap {RCRCQ_MAX_ACTIVE}")
    subsets = [eq + list(K) for s in range(len(I) + 1) for K in itertools.combinations(I, s)]
    base = p.varphi_jacobian()[:, spec.n:]
    base_ranks = [_rank_scaled(base[S]) for S in subsets]
    rng = np.random.default_rng(seed)
    d = spec.n + spec.m
    done = 0
    for _ in range(n_samples):
        g = rng.standard_normal(d)
        g *= radius * rng.random() ** (1.0 / d) / np.linalg.norm(g)
        x = p.x + g[: spec.n]
        y = p.y + g[spec.n:]
        try:
            Jy = _y_gradients(spec, x, y)
        except DomainError:
            continue
        done += 1
        for S, r0 in zip(subsets, base_ranks):
            if _rank_scaled(Jy[S]) != r0:
                return RcrcqResult("fail", done, (x, y, tuple(S)), "rank changes near the point")
    return RcrcqResult("pass (sampled)", done)


def inner_constraints_affine(spec: ProblemSpec) -> bool:
    """Coupled constraints whose y-dependence is affine with constant coefficients."""
    return all(ex.is_affine(e, "y") for e in spec.varphi)


def outer_mscq_gate(spec: ProblemSpec, p: CandidatePoint, act: ActiveSets, outer: MfcqResult) -> str | None:
    """Which sufficient condition for metric subregularity of X holds, if any."""
    if spec.p1 + spec.p2 == 0:
        return "no outer constraints"
    if all(ex.is_affine(e, "x") for e in spec.phi):
        return "affine outer constraints"
    if outer.verdict == "pass":
        return "outer MFCQ"
    return None


@dataclass(frozen=True)
class CqReport:
    mfcq: MfcqResult
    licq: tuple
    rcrcq: RcrcqResult
    linear_cq: bool
    outer_mfcq: MfcqResult
    outer_gate: str | None
    notes: tuple = ()

    @property
    def inner_gate(self) -> str | None:
        if self.mfcq.verdict == "pass":
            return "MFCQ"
        if self.linear_cq:
            return "affine coupled constraints"
        if self.rcrcq.verdict.startswith("pass"):
            return "RCRCQ (sampled)"
        return None

    @property
    def ok(self) -> bool:
        return self.inner_gate is not None and self.outer_gate is not None

    def to_dict(self) -> dict:
        verdict, r, rows = self.licq
        return {
            "mfcq": self.mfcq.to_dict(),
            "licq": {"verdict": verdict, "rank": r, "rows": rows},
            "rcrcq": self.rcrcq.to_dict(),
            "linear_cq": self.linear_cq,
            "outer_mfcq": self.outer_mfcq.to_dict(),
            "inner_gate": self.inner_gate,
            "outer_gate": self.outer_gate,
            "notes": list(self.notes),
        }


def cq_report(spec: ProblemSpec, p: CandidatePoint, act: ActiveSets, cfg: RunConfig) -> CqReport:
    mf = mfcq_check(spec, p, act)
    omf = outer_mfcq_check(spec, p, act)
    rc = rcrcq_check(spec, p, act, cfg.rcrcq_samples, cfg.rcrcq_radius, cfg.seed)
    lin = inner_constraints_affine(spec)
    return CqReport(mf, licq_check(spec, p, act), rc, lin, omf, outer_mscq_gate(spec, p, act, omf))


# ---------------------------------------------------------------------------
# strong duality


@dataclass(frozen=True)
class DualityGap:
    u: np.ndarray
    primal: float
    dual: float
    gap: float
    structural: bool = False
    h: np.ndarray | None = None
    beta: MultiplierVector | None = None

    def to_dict(self) -> dict:
        return {
            "u": self.u.tolist(),
            "primal": self.primal,
            "dual": self.dual,
            "gap": self.gap,
            "structural": self.structural,
            "h": None if self.h is None else self.h.tolist(),
            "beta": None if self.beta is None else self.beta.to_dict(),
        }


def primal_directional_value(spec: ProblemSpec, p: CandidatePoint, act: ActiveSets, u):
    """sup over h in L(u) of grad f . (u, h): (value, argmax h or None)."""
    u = np.asarray(u, dtype=float).ravel()
    L = linearization_cone_Y(spec, p, act, u)
    gx, gy = p.f.grad[: spec.n], p.f.grad[spec.n:]
    le = (L.A_ineq, -L.c_ineq) if L.A_ineq.shape[0] else None
    eq = (L.A_eq, -L.c_eq) if L.A_eq.shape[0] else None
    sol = solve_lp(LinearProgram.build(-gy, le=le, eq=eq, free=True))
    if sol.status == "infeasible":
        return -math.inf, None
    if sol.status == "unbounded":
        return math.inf, None
    return float(gx @ u - sol.value), sol.z


def duality_gap(spec: ProblemSpec, p: CandidatePoint, act: ActiveSets, u) -> DualityGap:
    u = np.asarray(u, dtype=float).ravel()
    primal, h = primal_directional_value(spec, p, act, u)
    try:
        res = lambda2_max(spec, p, act, u)
        dual, beta = res.value, res.witness
    except LambdaMaxEmpty:
        dual, beta = math.inf, None
    if math.isinf(primal) or math.isinf(dual):
        structural = True
        gap = 0.0 if primal == dual else math.inf
    else:
        structural = False
        gap = abs(primal - dual)
    return DualityGap(u, primal, dual, gap, structural, h, beta)


# ---------------------------------------------------------------------------
# certificate


@dataclass(frozen=True)
class FirstOrderCertificate:
    overall: str  # "certified" / "refuted" / "inconclusive"
    inner_verdict: str
    inner_value: float
    inner_witness: np.ndarray | None
    outer_verdict: str
    gaps: tuple
    witness: MultiplierVector | None
    kkt: KktReport | None
    cq: CqReport | None
    active: ActiveSets | None
    reasons: tuple = ()
    sampled_only: bool = False
    notes: tuple = field(default=())

    def to_dict(self) -> dict:
        return {
            "overall": self.overall,
            "reasons": list(self.reasons),
            "active": None if self.active is None else {
                "phi_ineq": [i + 1 for i in self.active.I_phi],
                "varphi_ineq": [i + 1 for i in self.active.I_varphi],
                "eps_act": self.active.eps_act,
            },
            "inner": {
                "verdict": self.inner_verdict,
                "value": self.inner_value,
                "witness": None if self.inner_witness is None else self.inner_witness.tolist(),
            },
            "outer": {"verdict": self.outer_verdict, "directions": [g.to_dict() for g in self.gaps]},
            "multipliers": None if self.witness is None else self.witness.to_dict(),
            "kkt": None if self.kkt is None else self.kkt.to_dict(),
            "cq": None if self.cq is None else self.cq.to_dict(),
            "sampled_only": self.sampled_only,
            "notes": list(self.notes),
        }


def _infeasible(reason: str) -> FirstOrderCertificate:
    return FirstOrderCertificate("refuted", "skipped", math.nan, None, "skipped", (), None, None, None, None,
                                 (reason,))


def inner_stationarity_test(spec: ProblemSpec, p: CandidatePoint, act: ActiveSets):
    """max grad_y f . h over the u = 0 linearization section within the unit box."""
    L = linearization_cone_Y(spec, p, act, np.zeros(spec.n))
    m = spec.m
    gy = p.f.grad[spec.n:]
    box = (np.vstack([np.eye(m), -np.eye(m)]), np.ones(2 * m))
    le = (np.vstack([L.A_ineq, box[0]]), np.concatenate([np.zeros(L.A_ineq.shape[0]), box[1]]))
    eq = (L.A_eq, np.zeros(L.A_eq.shape[0])) if L.A_eq.shape[0] else None
    sol = solve_lp(LinearProgram.build(-gy, le=le, eq=eq, free=True))
    return float(-sol.value) + 0.0, sol.z


def first_order_certificate(spec: ProblemSpec, p: CandidatePoint, cfg: RunConfig | None = None) -> FirstOrderCertificate:
    cfg = cfg or RunConfig()
    try:
        act = active_sets(spec, p, cfg.eps_act)
    except InfeasiblePoint as err:
        return _infeasible(f"point infeasible: {err}")
    cq = cq_report(spec, p, act, cfg)
    reasons: list[str] = []
    notes: list[str] = []

    inner_value, h = inner_stationarity_test(spec, p, act)
    inner_ok = inner_value <= cfg.stationarity_tol
    inner_verdict = "pass" if inner_ok else "fail"
    if not inner_ok:
        reasons.append(f"inner stationarity fails: grad_y f increases along a linearized direction ({inner_value:.6g})")

    LX = linearization_cone_X(spec, p, act)
    sample = sample_directions(LX, cfg.budget, cfg.seed)
    if sample.warning:
        notes.append(sample.warning)
    gaps = tuple(duality_gap(spec, p, act, u) for u in sample)
    outer_ok = all(g.dual >= -cfg.duality_tol for g in gaps)
    outer_verdict = "pass" if outer_ok else "fail"
    if not outer_ok:
        worst = min(gaps, key=lambda g: g.dual)
        reasons.append(f"outer condition fails: dual directional value {worst.dual:.6g} < 0 at u = {worst.u.tolist()}")
    gaps_ok = all(g.gap <= cfg.duality_tol for g in gaps)
    if not gaps_ok:
        notes.append("nonzero duality gap on some sampled direction")

    wit = full_multiplier_find(spec, p, act)
    kkt = None
    if wit is None:
        reasons.append("no multiplier (alpha, beta) satisfies the KKT system")
    else:
        kkt = kkt_residual(spec, p, wit.alpha, wit.beta)
        if kkt.verdict != "pass":
            reasons.append("multiplier witness fails the KKT residual check")

    conditions_hold = inner_ok and outer_ok and wit is not None and kkt.verdict == "pass"
    if conditions_hold and gaps_ok:
        overall = "certified"
    elif conditions_hold:
        overall = "inconclusive"
        reasons.append("strong duality not observed on every sampled direction")
    elif cq.ok:
        overall = "refuted"
    else:
        overall = "inconclusive"
        if cq.inner_gate is None:
            reasons.append("MFCQ not established for the coupled constraints (tangent cones unavailable)")
        if cq.outer_gate is None:
            reasons.append("MSCQ not established for the outer constraints")
    return FirstOrderCertificate(
        overall, inner_verdict, inner_value, h if not inner_ok else None, outer_verdict, gaps, wit, kkt, cq, act,
        tuple(reasons), sample.sampled_only, tuple(notes),
    )
