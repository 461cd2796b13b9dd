"""Multiplier sets of the inner maximisation and of the minimax problem.

Inactive inequality multipliers are fixed at zero, so complementarity is
built into every LP and the multiplier sets stay polyhedral.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from minimax_cert import numlin
from minimax_cert.cones import ActiveSets
from minimax_cert.errors import LambdaMaxEmpty
from minimax_cert.numlin import LinearProgram, solve_lp
from minimax_cert.problem import CandidatePoint, ProblemSpec

STATIONARITY_TOL = 1e-7
SIGN_TOL = 1e-9
COMPLEMENTARITY_TOL = 1e-7
STRICT_COMPLEMENTARITY_TOL = 1e-7
MAX_VERTEX_BASES = 2**12


@dataclass(frozen=True)
class MultiplierVector:
    alpha_ineq: np.ndarray
    alpha_eq: np.ndarray
    beta_ineq: np.ndarray
    beta_eq: np.ndarray

    @property
    def alpha(self) -> np.ndarray:
        return np.concatenate([self.alpha_ineq, self.alpha_eq])

    @property
    def beta(self) -> np.ndarray:
        return np.concatenate([self.beta_ineq, self.beta_eq])

    @classmethod
    def from_vectors(cls, spec: ProblemSpec, alpha, beta) -> "MultiplierVector":
        alpha = np.asarray(alpha, dtype=float).ravel()
        beta = np.asarray(beta, dtype=float).ravel()
        return cls(alpha[: spec.p1], alpha[spec.p1:], beta[: spec.q1], beta[spec.q1:])

    def to_dict(self) -> dict:
        return {
            "alpha_ineq": self.alpha_ineq.tolist(),
            "alpha_eq": self.alpha_eq.tolist(),
            "beta_ineq": self.beta_ineq.tolist(),
            "beta_eq": self.beta_eq.tolist(),
        }


@dataclass(frozen=True)
class KktReport:
    stationarity: float
    sign_violation: float
    complementarity: float
    verdict: str  # "pass" / "fail"

    def to_dict(self) -> dict:
        return {
            "stationarity": self.stationarity,
            "sign_violation": self.sign_violation,
            "complementarity": self.complementarity,
            "verdict": self.verdict,
        }


# ---------------------------------------------------------------------------
# beta layout helpers


def _beta_vars(spec: ProblemSpec, act: ActiveSets) -> list[int]:
    """Indices into the full beta vector (ineq then eq) that may be nonzero."""
    return list(act.I_varphi) + [spec.q1 + j for j in range(spec.q2)]


def _alpha_vars(spec: ProblemSpec, act: ActiveSets) -> list[int]:
    return list(act.I_phi) + [spec.p1 + j for j in range(spec.p2)]


def _free_mask_beta(spec: ProblemSpec, idx: list[int]) -> list[bool]:
    return [i >= spec.q1 for i in idx]


def _free_mask_alpha(spec: ProblemSpec, idx: list[int]) -> list[bool]:
    return [i >= spec.p1 for i in idx]


def _expand(values, idx: list[int], size: int) -> np.ndarray:
    out = np.zeros(size)
    out[idx] = values
    return out


@dataclass(frozen=True)
class LambdaMaxPolytope:
    """Lambda_max in reduced coordinates: {b : G b = r, b_i >= 0 for ineq}."""

    idx: tuple
    free: tuple
    G: np.ndarray
    r: np.ndarray

    def lp(self, c, extra_le=None, extra_eq=None) -> LinearProgram:
        eq_A, eq_b = self.G, self.r
        if extra_eq is not None:
            eq_A = np.vstack([eq_A, extra_eq[0]])
            eq_b = np.concatenate([eq_b, extra_eq[1]])
        return LinearProgram.build(c, le=extra_le, eq=(eq_A, eq_b), free=list(self.free))


def lambda_max_polytope(spec: ProblemSpec, p: CandidatePoint, act: ActiveSets) -> LambdaMaxPolytope:
    idx = _beta_vars(spec, act)
    Jy = p.varphi_jacobian()[:, spec.n:]
    G = Jy[idx].T.reshape(spec.m, len(idx))
    return LambdaMaxPolytope(tuple(idx), tuple(_free_mask_beta(spec, idx)), G, p.f.grad[spec.n:].copy())


def _beta_from(spec: ProblemSpec, poly: LambdaMaxPolytope, z) -> MultiplierVector:
    beta = _expand(z, list(poly.idx), spec.q1 + spec.q2)
    return MultiplierVector.from_vectors(spec, np.zeros(spec.p1 + spec.p2), beta)


def lambda_max_find(spec: ProblemSpec, p: CandidatePoint, act: ActiveSets) -> MultiplierVector | None:
    """One element of Lambda_max (alpha part zero), or None when it is empty."""
    poly = lambda_max_polytope(spec, p, act)
    k = len(poly.idx)
    if k == 0:
        ok = np.linalg.norm(poly.r) <= STATIONARITY_TOL
        return _beta_from(spec, poly, np.zeros(0)) if ok else None
    sol = solve_lp(poly.lp(np.zeros(k)))
    return _beta_from(spec, poly, sol.z) if sol.optimal else None


def full_multiplier_find(spec: ProblemSpec, p: CandidatePoint, act: ActiveSets) -> MultiplierVector | None:
    """An element (alpha, beta) of Lambda, or None."""
    ia = _alpha_vars(spec, act)
    ib = _beta_vars(spec, act)
    n, m = spec.n, spec.m
    Jphi = p.phi_jacobian()
    Jvar = p.varphi_jacobian()
    # grad f + (Jphi^T alpha, 0) - Jvar^T beta = 0
    A = np.zeros((n + m, len(ia) + len(ib)))
    A[:n, : len(ia)] = Jphi[ia].T.reshape(n, len(ia))
    A[:, len(ia):] = -Jvar[ib].T.reshape(n + m, len(ib))
    rhs = -p.f.grad
    k = len(ia) + len(ib)
    if k == 0:
        if np.linalg.norm(rhs) > STATIONARITY_TOL:
            return None
        return MultiplierVector.from_vectors(spec, np.zeros(spec.p1 + spec.p2), np.zeros(spec.q1 + spec.q2))
    free = _free_mask_alpha(spec, ia) + _free_mask_beta(spec, ib)
    sol = solve_lp(LinearProgram.build(np.zeros(k), eq=(A, rhs), free=free))
    if not sol.optimal:
        return None
    alpha = _expand(sol.z[: len(ia)], ia, spec.p1 + spec.p2)
    beta = _expand(sol.z[len(ia):], ib, spec.q1 + spec.q2)
    return MultiplierVector.from_vectors(spec, alpha, beta)


def alpha_completions(spec: ProblemSpec, p: CandidatePoint, act: ActiveSets, beta, objective=None):
    """Best alpha with (alpha, beta) in Lambda for a fixed beta.

    Maximises ``objective . alpha`` (zero objective: any feasible alpha).
    Returns ``(alpha, value)``; value is +inf when the LP is unbounded and
    ``None`` is returned when no completion exists.
    """
    ia = _alpha_vars(spec, act)
    n = spec.n
    beta = np.asarray(beta, dtype=float)
    Jphi = p.phi_jacobian()
    Jvar = p.varphi_jacobian()
    # x-rows: grad_x f + Jphi^T alpha - Jvar_x^T beta = 0; y-rows hold through beta
    r_y = p.f.grad[n:] - Jvar[:, n:].T @ beta if Jvar.shape[0] else p.f.grad[n:]
    if np.linalg.norm(r_y) > STATIONARITY_TOL * 10:
        return None
    rhs = -(p.f.grad[:n] - (Jvar[:, :n].T @ beta if Jvar.shape[0] else 0.0))
    size = spec.p1 + spec.p2
    if not ia:
        if np.linalg.norm(rhs) > STATIONARITY_TOL:
            return None
        return np.zeros(size), 0.0
    obj = np.zeros(len(ia)) if objective is None else np.asarray(objective, dtype=float)[ia]
    A = Jphi[ia].T.reshape(n, len(ia))
    sol = solve_lp(LinearProgram.build(-obj, eq=(A, rhs), free=_free_mask_alpha(spec, ia)))
    if sol.status == "infeasible":
        return None
    if sol.status == "unbounded":
        feas = solve_lp(LinearProgram.build(np.zeros(len(ia)), eq=(A, rhs), free=_free_mask_alpha(spec, ia)))
        return _expand(feas.z, ia, size), math.inf
    return _expand(sol.z, ia, size), float(-sol.value)


# ---------------------------------------------------------------------------
# directional dual problem


@dataclass(frozen=True)
class Lambda2Result:
    value: float
    witness: MultiplierVector | None
    optimal_face: dict = field(default_factory=dict)
    status: str = "optimal"


def _dual_objective(spec: ProblemSpec, p: CandidatePoint, poly: LambdaMaxPolytope, u):
    """(constant, coefficients) of grad_x f.u - (grad_x varphi^T beta).u."""
    u = np.asarray(u, dtype=float).ravel()
    Jx = p.varphi_jacobian()[:, : spec.n]
    const = float(p.f.grad[: spec.n] @ u)
    coef = -(Jx[list(poly.idx)] @ u) if poly.idx else np.zeros(0)
    return const, coef


def lambda2_max(spec: ProblemSpec, p: CandidatePoint, act: ActiveSets, u) -> Lambda2Result:
    """Minimise the u-directional x-derivative of L_max over Lambda_max."""
    poly = lambda_max_polytope(spec, p, act)
    const, coef = _dual_objective(spec, p, poly, u)
    k = len(poly.idx)
    if k == 0:
        if np.linalg.norm(poly.r) > STATIONARITY_TOL:
            raise LambdaMaxEmpty("Lambda_max is empty")
        return Lambda2Result(const, _beta_from(spec, poly, np.zeros(0)), {"coef": [], "value": const, "idx": []})
    sol = solve_lp(poly.lp(coef))
    if sol.status == "infeasible":
        raise LambdaMaxEmpty("Lambda_max is empty")
    if sol.status == "unbounded":
        return Lambda2Result(-math.inf, None, {}, status="unbounded")
    value = const + float(sol.value)
    face = {
        "idx": list(poly.idx),
        "coef": coef.tolist(),
        "value": float(sol.value),
        "zero_at_witness": [int(poly.idx[i]) for i in range(k) if not poly.free[i] and abs(sol.z[i]) <= 1e-10],
    }
    return Lambda2Result(value, _beta_from(spec, poly, sol.z), face)


def _face_constraint(poly: LambdaMaxPolytope, coef: np.ndarray, opt: float):
    tol = 1e-9 * (1.0 + abs(opt))
    return (np.atleast_2d(coef), np.array([opt + tol]))


def lambda2_face_min(spec, p, act, u, weights) -> float:
    """min over beta in Lambda^2_max(u) of sum_i beta_i * weights_i (full-beta
    indexing); -inf when unbounded below."""
    poly = lambda_max_polytope(spec, p, act)
    k = len(poly.idx)
    w = np.asarray(weights, dtype=float)[list(poly.idx)] if k else np.zeros(0)
    res = lambda2_max(spec, p, act, u)
    if k == 0:
        return 0.0
    if res.status == "unbounded":
        return -math.inf
    const, coef = _dual_objective(spec, p, poly, u)
    sol = solve_lp(poly.lp(w, extra_le=_face_constraint(poly, coef, res.optimal_face["value"])))
    if sol.status == "unbounded":
        return -math.inf
    if not sol.optimal:
        # rounding pushed the face out of reach; fall back to the witness
        return float(w @ res.witness.beta[list(poly.idx)])
    return float(sol.value)


def lambda2_vertices(spec: ProblemSpec, p: CandidatePoint, act: ActiveSets, u):
    """Vertices of Lambda^2_max(u) as full beta vectors.

    Returns ``(vertices, exhaustive)``. When the face is unbounded or the
    basis budget is exceeded, a sample (witness plus centroid) is returned
    and ``exhaustive`` is False.
    """
    poly = lambda_max_polytope(spec, p, act)
    res = lambda2_max(spec, p, act, u)
    k = len(poly.idx)
    size = spec.q1 + spec.q2
    if k == 0:
        return [np.zeros(size)], True
    if res.witness is None:
        return [], False
    const, coef = _dual_objective(spec, p, poly, u)
    G = np.vstack([poly.G, coef[None, :]])
    r = np.concatenate([poly.r, [res.optimal_face["value"]]])
    signed = [i for i in range(k) if not poly.free[i]]
    exhaustive = True
    # recession test: any nonzero direction d with G d = 0, d_i >= 0 on signed coords
    if _face_unbounded(G, poly.free):
        exhaustive = False
    verts: list[np.ndarray] = []
    count = 0
    for s in range(len(signed) + 1):
        for Z in itertools.combinations(signed, s):
            count += 1
            if count > MAX_VERTEX_BASES:
                exhaustive = False
                break
            keep = [i for i in range(k) if i not in Z]
            Gk = G[:, keep]
            if numlin.rank(Gk) < len(keep):
                continue
            z = np.zeros(k)
            z[keep] = np.linalg.lstsq(Gk, r, rcond=None)[0]
            if np.linalg.norm(G @ z - r) > 1e-8 * (1.0 + np.linalg.norm(r)):
                continue
            if any(z[i] < -1e-9 for i in signed):
                continue
            z[signed] = np.maximum(z[signed], 0.0)
            if not any(np.linalg.norm(z - v) < 1e-9 for v in verts):
                verts.append(z)
        if count > MAX_VERTEX_BASES:
            break
    if not verts:
        verts = [res.witness.beta[list(poly.idx)]]
        exhaustive = False
    if not exhaustive:
        centroid = np.mean(verts, axis=0)
        if not any(np.linalg.norm(centroid - v) < 1e-9 for v in verts):
            verts.append(centroid)
    return [_expand(v, list(poly.idx), size) for v in verts], exhaustive


def _face_unbounded(G: np.ndarray, free) -> bool:
    """True when {d : G d = 0, d_i >= 0 on signed coordinates} is not {0}."""
    k = G.shape[1]
    if numlin.nullspace(G, k).shape[1] == 0:
        return False
    box = (np.vstack([np.eye(k), -np.eye(k)]), np.ones(2 * k))
    for j in range(k):
        for sgn in ((1.0, -1.0) if free[j] else (1.0,)):
            c = np.zeros(k)
            c[j] = -sgn
            sol = solve_lp(LinearProgram.build(c, le=box, eq=(G, np.zeros(G.shape[0])), free=list(free)))
            if sol.optimal and -sol.value > 1e-9:
                return True
    return False


# ---------------------------------------------------------------------------
# residuals and Jacobian uniqueness


def kkt_residual(spec: ProblemSpec, p: CandidatePoint, alpha, beta, block: str = "full") -> KktReport:
    """Stationarity, sign and complementarity of (alpha, beta) at the point.

    ``block="inner"`` checks only the y-stationarity of L_max and the beta part.
    """
    n = spec.n
    alpha = np.asarray(alpha, dtype=float).ravel()
    beta = np.asarray(beta, dtype=float).ravel()
    Jphi = p.phi_jacobian()
    Jvar = p.varphi_jacobian()
    grad = p.f.grad.copy()
    if Jvar.shape[0]:
        grad -= Jvar.T @ beta
    if Jphi.shape[0]:
        grad[:n] += Jphi.T @ alpha
    stat = float(np.linalg.norm(grad[n:] if block == "inner" else grad))
    signs = [-v for v in beta[: spec.q1]]
    comps = [abs(b * v) for b, v in zip(beta[: spec.q1], p.varphi_values()[: spec.q1])]
    if block != "inner":
        signs += [-v for v in alpha[: spec.p1]]
        comps += [abs(a * v) for a, v in zip(alpha[: spec.p1], p.phi_values()[: spec.p1])]
    sign_viol = max([0.0] + signs)
    comp = max([0.0] + comps)
    ok = stat <= STATIONARITY_TOL and sign_viol <= SIGN_TOL and comp <= COMPLEMENTARITY_TOL
    return KktReport(stat, sign_viol, comp, "pass" if ok else "fail")


def lagrangian_max_hessian_yy(spec: ProblemSpec, p: CandidatePoint, beta) -> np.ndarray:
    n = spec.n
    H = p.f.hess[n:, n:].copy()
    for b, d in zip(np.asarray(beta, dtype=float), p.varphi):
        H -= b * d.hess[n:, n:]
    return H


@dataclass(frozen=True)
class JacobianUniquenessReport:
    licq: bool
    kkt: bool
    strict_complementarity: bool
    sosc: bool
    overall: bool
    beta: MultiplierVector | None = None
    reduced_max_eig: float | None = None

    def to_dict(self) -> dict:
        return {
            "licq": self.licq,
            "kkt": self.kkt,
            "strict_complementarity": self.strict_complementarity,
            "sosc": self.sosc,
            "overall": "pass" if self.overall else "fail",
            "beta": None if self.beta is None else self.beta.to_dict(),
            "reduced_max_eig": self.reduced_max_eig,
        }


def jacobian_uniqueness_check(spec: ProblemSpec, p: CandidatePoint, act: ActiveSets) -> JacobianUniquenessReport:
    idx = _beta_vars(spec, act)
    Jy = p.varphi_jacobian()[:, spec.n:]
    rows = Jy[idx]
    licq = numlin.rank(rows) == len(idx) if idx else True
    wit = lambda_max_find(spec, p, act)
    kkt = wit is not None
    strict = kkt and all(wit.beta[i] >= STRICT_COMPLEMENTARITY_TOL for i in act.I_varphi)
    sosc = False
    top = None
    if kkt:
        H = lagrangian_max_hessian_yy(spec, p, wit.beta)
        Z = numlin.nullspace(rows, spec.m)
        if Z.shape[1] == 0:
            sosc = True
        else:
            top = numlin.max_eig(Z.T @ H @ Z)
            sosc = top < -1e-9
    overall = licq and kkt and strict and sosc
    return JacobianUniquenessReport(licq, kkt, strict, sosc, overall, wit, top)
