"""Second-order certificate: inner necessary and strong sufficient conditions,
the inner maximiser h* of the Lagrangian form over C(u) and the quadratic-form
tests over critical directions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from minimax_cert import numlin
from minimax_cert.cones import (
    ActiveSets,
    active_sets,
    critical_cone_max,
    critical_set_C,
    linearization_cone_X,
    sample_directions,
)
from minimax_cert.config import RunConfig
from minimax_cert.errors import EmptyCriticalSet, InfeasiblePoint, LambdaMaxEmpty, NotNegativeDefinite
from minimax_cert.first_order import FirstOrderCertificate, first_order_certificate
from minimax_cert.multipliers import (
    _beta_vars,
    alpha_completions,
    lambda2_face_min,
    lambda2_max,
    lambda2_vertices,
    lambda_max_find,
    lagrangian_max_hessian_yy,
)
from minimax_cert.problem import CandidatePoint, ProblemSpec

NEG_DEF_TOL = 1e-9


def lagrangian_hessian(spec: ProblemSpec, p: CandidatePoint, alpha, beta) -> np.ndarray:
    n = spec.n
    H = p.f.hess.copy()
    for a, d in zip(np.asarray(alpha, dtype=float), p.phi):
        H[:n, :n] += a * d.hess[:n, :n]
    for b, d in zip(np.asarray(beta, dtype=float), p.varphi):
        H -= b * d.hess
    return 0.5 * (H + H.T)


def _curvature_weights(spec: ProblemSpec, p: CandidatePoint, h) -> np.ndarray:
    """-h^T hess_yy varphi_i h for every coupled constraint (full beta indexing)."""
    n = spec.n
    return np.array([-(h @ d.hess[n:, n:] @ h) for d in p.varphi])


def _unique_inner_multiplier(spec: ProblemSpec, p: CandidatePoint, act: ActiveSets) -> bool:
    idx = _beta_vars(spec, act)
    if not idx:
        return True
    Jy = p.varphi_jacobian()[:, spec.n:]
    return numlin.rank(Jy[idx]) == len(idx)


@dataclass(frozen=True)
class ConeCheck:
    verdict: str  # "pass" / "fail" / "inconclusive"
    records: tuple = ()  # (h, value)
    witness: np.ndarray | None = None
    exact: bool = False
    reason: str = ""

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "exact": self.exact,
            "reason": self.reason,
            "witness": None if self.witness is None else self.witness.tolist(),
            "samples": [{"h": h.tolist(), "value": v} for h, v in self.records],
        }


def _exact_sign_test(M: np.ndarray, cone, shift: float) -> tuple[bool, np.ndarray | None]:
    """True when h^T (M + shift I) h <= 0 on the homogeneous cone; otherwise a
    direction where it is positive."""
    Q = 2.0 * (M + shift * np.eye(M.shape[0]))
    res = numlin.max_quad_over_cone(Q, np.zeros(M.shape[0]), cone)
    if res.unbounded:
        d = res.direction
        return False, d / np.linalg.norm(d)
    return True, None


def inner_sonc_check(spec: ProblemSpec, p: CandidatePoint, act: ActiveSets, cfg: RunConfig | None = None) -> ConeCheck:
    """min over Lambda_max of h^T hess_yy L_max(beta) h <= tol on the inner critical cone."""
    cfg = cfg or RunConfig()
    wit = lambda_max_find(spec, p, act)
    if wit is None:
        return ConeCheck("inconclusive", reason="Lambda_max is empty")
    C = critical_cone_max(spec, p, act)
    if C.is_zero():
        return ConeCheck("pass", exact=True, reason="inner critical cone is {0}")
    n = spec.n
    records = []
    worst = None
    for h in sample_directions(C, cfg.budget, cfg.seed):
        value = float(h @ p.f.hess[n:, n:] @ h) + lambda2_face_min_over(spec, p, act, h)
        records.append((h, value))
        if value > cfg.curvature_tol and (worst is None or value > worst[1]):
            worst = (h, value)
    if worst is not None:
        return ConeCheck("fail", tuple(records), worst[0], reason="inner Lagrangian curvature positive on the critical cone")
    if _unique_inner_multiplier(spec, p, act):
        ok, d = _exact_sign_test(lagrangian_max_hessian_yy(spec, p, wit.beta), C, -cfg.curvature_tol)
        if not ok:
            return ConeCheck("fail", tuple(records), d, True, "positive curvature ray of the inner Lagrangian")
        return ConeCheck("pass", tuple(records), exact=True)
    return ConeCheck("pass", tuple(records))


def lambda2_face_min_over(spec: ProblemSpec, p: CandidatePoint, act: ActiveSets, h, u=None) -> float:
    """min over Lambda_max (u None) or over Lambda^2_max(u) of -sum beta_i h^T hess varphi_i h."""
    w = _curvature_weights(spec, p, h)
    if u is None:
        u = np.zeros(spec.n)  # the u = 0 dual problem has every beta optimal
    return lambda2_face_min(spec, p, act, u, w)


def ssosc_u_check(spec: ProblemSpec, p: CandidatePoint, act: ActiveSets, u, cfg: RunConfig | None = None) -> ConeCheck:
    """Strict negativity of the inner Lagrangian form on the inner critical cone,
    minimised over the optimal face Lambda^2_max(u)."""
    cfg = cfg or RunConfig()
    u = np.asarray(u, dtype=float).ravel()
    res = lambda2_max(spec, p, act, u)  # raises LambdaMaxEmpty
    C = critical_cone_max(spec, p, act)
    if C.is_zero():
        return ConeCheck("pass", exact=True, reason="inner critical cone is {0}")
    n = spec.n
    records = []
    worst = None
    for h in sample_directions(C, cfg.budget, cfg.seed):
        value = float(h @ p.f.hess[n:, n:] @ h) + lambda2_face_min_over(spec, p, act, h, u)
        records.append((h, value))
        if value > -cfg.curvature_tol and (worst is None or value > worst[1]):
            worst = (h, value)
    if worst is not None:
        return ConeCheck("fail", tuple(records), worst[0], reason="inner Lagrangian form not strictly negative")
    if _unique_inner_multiplier(spec, p, act) and res.witness is not None:
        ok, d = _exact_sign_test(lagrangian_max_hessian_yy(spec, p, res.witness.beta), C, cfg.curvature_tol)
        if not ok:
            return ConeCheck("fail", tuple(records), d, True, "inner Lagrangian form not strictly negative")
        return ConeCheck("pass", tuple(records), exact=True)
    return ConeCheck("pass", tuple(records))


# ---------------------------------------------------------------------------
# h* and the reduced Hessian


@dataclass(frozen=True)
class HStar:
    h_star: np.ndarray
    attained_value: float
    face: tuple
    correction: np.ndarray  # Lyy h* + Lyx u: the aggregate multiplier term on the active face

    def to_dict(self) -> dict:
        return {
            "h_star": self.h_star.tolist(),
            "attained_value": self.attained_value,
            "face": [int(i) for i in self.face],
            "correction": self.correction.tolist(),
        }


def _blocks(spec: ProblemSpec, M: np.ndarray):
    n = spec.n
    return M[:n, :n], M[:n, n:], M[n:, n:]


def _form_over_C(spec, p, act, M, u):
    """sup over h in C(u) of (u,h)^T M (u,h) as a ConeQuadResult plus constant."""
    Lxx, Lxy, Lyy = _blocks(spec, M)
    C = critical_set_C(spec, p, act, u)
    res = numlin.max_quad_over_cone(2.0 * Lyy, 2.0 * (Lxy.T @ u), C)
    return res, float(u @ Lxx @ u)


def hstar(spec: ProblemSpec, p: CandidatePoint, alpha, beta, u, act: ActiveSets | None = None) -> HStar:
    """Maximiser of the Lagrangian form over C(u) when hess_yy L is negative definite."""
    u = np.asarray(u, dtype=float).ravel()
    act = act or active_sets(spec, p)
    M = lagrangian_hessian(spec, p, alpha, beta)
    _, Lxy, Lyy = _blocks(spec, M)
    top = numlin.max_eig(Lyy)
    if not top < -NEG_DEF_TOL:
        raise NotNegativeDefinite(top)
    res, const = _form_over_C(spec, p, act, M, u)
    if not res.feasible:
        raise EmptyCriticalSet(f"C(u) is empty for u = {u.tolist()}")
    h = res.direction
    w = Lyy @ h + Lxy.T @ u
    return HStar(h, res.value + const, res.active_face, w)


def reduced_hessian_value(spec: ProblemSpec, p: CandidatePoint, alpha, beta, u, correction=None) -> float:
    """u^T (Lxx - Lxy Lyy^-1 Lyx) u + w^T Lyy^-1 w, with w the face correction
    (zero on the unconstrained face)."""
    u = np.asarray(u, dtype=float).ravel()
    M = lagrangian_hessian(spec, p, alpha, beta)
    Lxx, Lxy, Lyy = _blocks(spec, M)
    top = numlin.max_eig(Lyy)
    if not top < -NEG_DEF_TOL:
        raise NotNegativeDefinite(top)
    a = Lxy.T @ u
    val = float(u @ Lxx @ u - a @ np.linalg.solve(Lyy, a))
    if correction is not None:
        w = np.asarray(correction, dtype=float).ravel()
        val += float(w @ np.linalg.solve(Lyy, w))
    return val


# ---------------------------------------------------------------------------
# certificate


@dataclass(frozen=True)
class MultiplierRecord:
    beta: np.ndarray
    alpha: np.ndarray | None
    h: np.ndarray | None
    value: float
    path: str  # "hstar" / "face-enumeration" / "no-alpha" / "empty-C"

    def to_dict(self) -> dict:
        return {
            "beta": self.beta.tolist(),
            "alpha": None if self.alpha is None else self.alpha.tolist(),
            "h": None if self.h is None else self.h.tolist(),
            "value": self.value,
            "path": self.path,
        }


@dataclass(frozen=True)
class DirectionRecord:
    u: np.ndarray
    dual_value: float
    critical: bool
    ssosc: ConeCheck | None = None
    multipliers: tuple = ()
    best_value: float = math.nan
    worst_value: float = math.nan
    exhaustive: bool = True

    @property
    def best(self) -> MultiplierRecord | None:
        if not self.multipliers:
            return None
        return max(self.multipliers, key=lambda r: r.value)

    def to_dict(self) -> dict:
        best = self.best
        return {
            "u": self.u.tolist(),
            "dual_value": self.dual_value,
            "classification": "critical" if self.critical else "noncritical",
            "ssosc_u": None if self.ssosc is None else self.ssosc.verdict,
            "best_h": None if best is None or best.h is None else best.h.tolist(),
            "best_multiplier": None if best is None else {
                "alpha": None if best.alpha is None else best.alpha.tolist(), "beta": best.beta.tolist()},
            "best_value": self.best_value,
            "worst_value": self.worst_value,
            "vertices_exhaustive": self.exhaustive,
            "multipliers": [r.to_dict() for r in self.multipliers],
        }


@dataclass(frozen=True)
class SecondOrderCertificate:
    overall: str  # sufficient-certified / necessary-consistent / refuted / inconclusive
    inner_sonc: ConeCheck | None
    directions: tuple
    reasons: tuple = ()
    sampled_only: bool = False
    quantifier_weakened: bool = False
    kappa_estimate: float = 2.0
    growth_claim: bool = False
    notes: tuple = field(default=())

    @property
    def critical(self) -> tuple:
        return tuple(d for d in self.directions if d.critical)

    def to_dict(self) -> dict:
        return {
            "overall": self.overall,
            "reasons": list(self.reasons),
            "inner_sonc": None if self.inner_sonc is None else self.inner_sonc.to_dict(),
            "critical_directions": [d.to_dict() for d in self.critical],
            "noncritical_count": len(self.directions) - len(self.critical),
            "growth_claim": self.growth_claim,
            "kappa_estimate": self.kappa_estimate,
            "sampled_only": self.sampled_only,
            "quantifier_weakened": self.quantifier_weakened,
            "notes": list(self.notes),
        }


def _multiplier_record(spec, p, act, u, beta) -> MultiplierRecord:
    n = spec.n
    objective = np.array([u @ d.hess[:n, :n] @ u for d in p.phi])
    comp = alpha_completions(spec, p, act, beta, objective)
    if comp is None:
        return MultiplierRecord(beta, None, None, -math.inf, "no-alpha")
    alpha, aval = comp
    if math.isinf(aval):
        return MultiplierRecord(beta, alpha, None, math.inf, "alpha-unbounded")
    M = lagrangian_hessian(spec, p, alpha, beta)
    try:
        hs = hstar(spec, p, alpha, beta, u, act)
        return MultiplierRecord(beta, alpha, hs.h_star, hs.attained_value, "hstar")
    except NotNegativeDefinite:
        pass
    except EmptyCriticalSet:
        return MultiplierRecord(beta, alpha, None, -math.inf, "empty-C")
    res, const = _form_over_C(spec, p, act, M, u)
    if not res.feasible:
        return MultiplierRecord(beta, alpha, None, -math.inf, "empty-C")
    if res.unbounded:
        return MultiplierRecord(beta, alpha, res.direction, math.inf, "face-enumeration")
    return MultiplierRecord(beta, alpha, res.direction, res.value + const, "face-enumeration")


def direction_record(spec, p, act, u, cfg: RunConfig) -> DirectionRecord:
    u = np.asarray(u, dtype=float).ravel()
    dual = lambda2_max(spec, p, act, u).value
    if abs(dual) > cfg.critical_tol:
        return DirectionRecord(u, dual, False)
    ss = ssosc_u_check(spec, p, act, u, cfg)
    verts, exhaustive = lambda2_vertices(spec, p, act, u)
    recs = tuple(_multiplier_record(spec, p, act, u, b) for b in verts)
    values = [r.value for r in recs] or [-math.inf]
    return DirectionRecord(u, dual, True, ss, recs, max(values), min(values), exhaustive)


def second_order_certificate(spec: ProblemSpec, p: CandidatePoint, cfg: RunConfig | None = None,
                             first: FirstOrderCertificate | None = None) -> SecondOrderCertificate:
    cfg = cfg or RunConfig()
    first = first or first_order_certificate(spec, p, cfg)
    if first.overall != "certified":
        return SecondOrderCertificate("inconclusive", None, (), ("first-order conditions not certified",))
    try:
        act = active_sets(spec, p, cfg.eps_act)
    except InfeasiblePoint as err:
        return SecondOrderCertificate("refuted", None, (), (f"point infeasible: {err}",))
    hypotheses = first.cq.mfcq.verdict == "pass" and first.cq.outer_gate is not None
    reasons: list[str] = []
    notes: list[str] = []

    try:
        sonc = inner_sonc_check(spec, p, act, cfg)
    except LambdaMaxEmpty:
        sonc = ConeCheck("inconclusive", reason="Lambda_max is empty")
    LX = linearization_cone_X(spec, p, act)
    sample = sample_directions(LX, cfg.budget, cfg.seed)
    if sample.warning:
        notes.append(sample.warning)
    directions = tuple(direction_record(spec, p, act, u, cfg) for u in sample)
    critical = [d for d in directions if d.critical]
    exhaustive = all(d.exhaustive for d in critical)
    sampled_only = sample.sampled_only or not exhaustive or (LX.dim > 1 and not LX.is_zero())
    quantifier_weakened = any(len(d.multipliers) > 1 for d in critical)

    failing = [d for d in critical if d.best_value < -cfg.necessary_margin]
    sufficient = all(
        d.ssosc.verdict == "pass" and d.worst_value > cfg.sufficient_margin for d in critical
    )
    kappa = 2.0
    for d in critical:
        for r in d.multipliers:
            if r.h is not None and r.path == "hstar":
                kappa = max(kappa, 2.0 * np.linalg.norm(r.h) / np.linalg.norm(d.u))

    growth = False
    if sonc.verdict == "fail" or failing:
        if sonc.verdict == "fail":
            reasons.append("inner second-order necessary condition fails")
        for d in failing:
            reasons.append(f"quadratic form below {-cfg.necessary_margin:g} for every multiplier at u = {d.u.tolist()}")
        overall = "refuted" if hypotheses else "inconclusive"
        if not hypotheses:
            reasons.append("MFCQ/MSCQ not established, so the necessary conditions cannot refute")
    elif sonc.verdict == "inconclusive":
        overall = "inconclusive"
        reasons.append(sonc.reason)
    elif sufficient and hypotheses:
        overall = "sufficient-certified"
        growth = True
        if not critical:
            notes.append("no critical directions")
    else:
        overall = "necessary-consistent"
        if not hypotheses:
            reasons.append("MFCQ/MSCQ not established for the sufficient condition")
        for d in critical:
            if d.ssosc.verdict != "pass":
                reasons.append(f"SSOSC_u fails at u = {d.u.tolist()}")
            elif d.worst_value <= cfg.sufficient_margin:
                reasons.append(f"quadratic form {d.worst_value:.6g} not above margin at u = {d.u.tolist()}")
    return SecondOrderCertificate(
        overall, sonc, directions, tuple(reasons), sampled_only, quantifier_weakened, float(kappa), growth,
        tuple(notes),
    )
