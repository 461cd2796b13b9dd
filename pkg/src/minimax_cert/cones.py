"""Active sets and the polyhedral cones built from first-order data.

Cone sections are stored as ``{d : A_ineq d + c_ineq <= 0, A_eq d + c_eq = 0}``;
the offsets ``c_*`` are zero for genuine cones and carry the u-part for the
direction-dependent sections over h.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from minimax_cert.errors import InfeasiblePoint
from minimax_cert.numlin import nullspace, rank
from minimax_cert.problem import CandidatePoint, ProblemSpec

MEMBER_TOL = 1e-9
EXTREME_RAY_MAX_DIM = 6
EXTREME_RAY_MAX_ROWS = 20
SAMPLING_MAX_DIM = 8


@dataclass(frozen=True)
class ActiveSets:
    I_phi: tuple
    I_varphi: tuple
    eps_act: float


def default_eps_act(p: CandidatePoint) -> float:
    vals = np.concatenate([p.phi_values(), p.varphi_values()])
    return 1e-7 * (1.0 + (np.abs(vals).max() if vals.size else 0.0))


def active_sets(spec: ProblemSpec, p: CandidatePoint, eps_act: float | None = None) -> ActiveSets:
    """Indices of the active inequality constraints (1-based in messages,
    0-based in the returned tuples)."""
    if eps_act is None:
        eps_act = default_eps_act(p)
    phi = p.phi_values()
    varphi = p.varphi_values()
    viol = []
    for k in range(spec.p1):
        if phi[k] > eps_act:
            viol.append((f"phi_ineq[{k + 1}]", float(phi[k])))
    for k in range(spec.p2):
        if abs(phi[spec.p1 + k]) > eps_act:
            viol.append((f"phi_eq[{k + 1}]", float(abs(phi[spec.p1 + k]))))
    for k in range(spec.q1):
        if varphi[k] > eps_act:
            viol.append((f"varphi_ineq[{k + 1}]", float(varphi[k])))
    for k in range(spec.q2):
        if abs(varphi[spec.q1 + k]) > eps_act:
            viol.append((f"varphi_eq[{k + 1}]", float(abs(varphi[spec.q1 + k]))))
    if viol:
        raise InfeasiblePoint(viol)
    I_phi = tuple(k for k in range(spec.p1) if abs(phi[k]) <= eps_act)
    I_varphi = tuple(k for k in range(spec.q1) if abs(varphi[k]) <= eps_act)
    return ActiveSets(I_phi, I_varphi, float(eps_act))


@dataclass(frozen=True)
class PolyhedralCone:
    dim: int
    A_ineq: np.ndarray
    A_eq: np.ndarray
    c_ineq: np.ndarray = field(default=None)
    c_eq: np.ndarray = field(default=None)

    def __post_init__(self):
        Ai = np.asarray(self.A_ineq, dtype=float).reshape(-1, self.dim)
        Ae = np.asarray(self.A_eq, dtype=float).reshape(-1, self.dim)
        ci = np.zeros(Ai.shape[0]) if self.c_ineq is None else np.asarray(self.c_ineq, dtype=float).ravel()
        ce = np.zeros(Ae.shape[0]) if self.c_eq is None else np.asarray(self.c_eq, dtype=float).ravel()
        for name, v in (("A_ineq", Ai), ("A_eq", Ae), ("c_ineq", ci), ("c_eq", ce)):
            object.__setattr__(self, name, v)

    @classmethod
    def full(cls, dim: int) -> "PolyhedralCone":
        return cls(dim, np.zeros((0, dim)), np.zeros((0, dim)))

    @property
    def homogeneous(self) -> bool:
        return not (np.any(self.c_ineq) or np.any(self.c_eq))

    def contains(self, d, tol: float = MEMBER_TOL) -> bool:
        d = np.asarray(d, dtype=float).ravel()
        ok_i = self.A_ineq.shape[0] == 0 or np.max(self.A_ineq @ d + self.c_ineq) <= tol
        ok_e = self.A_eq.shape[0] == 0 or np.max(np.abs(self.A_eq @ d + self.c_eq)) <= tol
        return bool(ok_i and ok_e)

    def with_equality(self, row, offset: float = 0.0) -> "PolyhedralCone":
        return PolyhedralCone(
            self.dim, self.A_ineq, np.vstack([self.A_eq, np.reshape(row, (1, self.dim))]),
            self.c_ineq, np.append(self.c_eq, offset),
        )

    def lineality_basis(self) -> np.ndarray:
        return nullspace(np.vstack([self.A_ineq, self.A_eq]), self.dim)

    def is_zero(self) -> bool:
        """True when the homogeneous cone is {0}."""
        return len(extreme_rays(self)) == 0 and self.lineality_basis().shape[1] == 0

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "A_ineq": self.A_ineq.tolist(),
            "c_ineq": self.c_ineq.tolist(),
            "A_eq": self.A_eq.tolist(),
            "c_eq": self.c_eq.tolist(),
        }


# ---------------------------------------------------------------------------
# cone constructors


def linearization_cone_X(spec: ProblemSpec, p: CandidatePoint, act: ActiveSets) -> PolyhedralCone:
    J = p.phi_jacobian()
    return PolyhedralCone(spec.n, J[list(act.I_phi)], J[spec.p1:])


def _varphi_rows(spec: ProblemSpec, p: CandidatePoint, act: ActiveSets):
    J = p.varphi_jacobian()
    return J[list(act.I_varphi)], J[spec.q1:]


def linearization_cone_Y(spec: ProblemSpec, p: CandidatePoint, act: ActiveSets, u) -> PolyhedralCone:
    """h-section {h : grad varphi_i . (u, h) <= 0 (active), = 0 (equalities)}."""
    u = np.asarray(u, dtype=float).ravel()
    Ji, Je = _varphi_rows(spec, p, act)
    n = spec.n
    return PolyhedralCone(spec.m, Ji[:, n:], Je[:, n:], Ji[:, :n] @ u, Je[:, :n] @ u)


def critical_cone_max(spec: ProblemSpec, p: CandidatePoint, act: ActiveSets) -> PolyhedralCone:
    """Critical cone of the inner maximisation: the u = 0 section intersected
    with {h : grad_y f . h = 0}."""
    L0 = linearization_cone_Y(spec, p, act, np.zeros(spec.n))
    return L0.with_equality(p.f.grad[spec.n:], 0.0)


def critical_set_C(spec: ProblemSpec, p: CandidatePoint, act: ActiveSets, u) -> PolyhedralCone:
    u = np.asarray(u, dtype=float).ravel()
    L = linearization_cone_Y(spec, p, act, u)
    g = p.f.grad
    return L.with_equality(g[spec.n:], float(g[: spec.n] @ u))


# ---------------------------------------------------------------------------
# extreme rays and direction sampling


def _pointed_part(cone: PolyhedralCone):
    """Basis B (columns) of null(A_eq) intersected with the orthogonal
    complement of the lineality space, and the inequality rows in B-coordinates."""
    L = cone.lineality_basis()
    Ne = nullspace(cone.A_eq, cone.dim)
    if L.shape[1]:
        M = Ne - L @ (L.T @ Ne)
        U, s, _ = np.linalg.svd(M, full_matrices=False)
        B = U[:, s > 1e-10]
    else:
        B = Ne
    return B, cone.A_ineq @ B


def _double_description(A: np.ndarray) -> list[np.ndarray]:
    """Extreme rays of the pointed cone {z : A z <= 0} (A has full column rank)."""
    k = A.shape[1]
    if k == 0:
        return []
    norms = np.linalg.norm(A, axis=1)
    A = A[norms > 0] / norms[norms > 0, None]
    # initial simplex cone from k independent rows
    chosen: list[int] = []
    for i in range(A.shape[0]):
        if rank(A[chosen + [i]]) == len(chosen) + 1:
            chosen.append(i)
        if len(chosen) == k:
            break
    A0 = A[chosen]
    rays = [-c for c in np.linalg.inv(A0).T]
    rays = [r / np.linalg.norm(r) for r in rays]
    processed = list(chosen)
    tol = 1e-10
    for i in range(A.shape[0]):
        if i in chosen:
            continue
        a = A[i]
        vals = [a @ r for r in rays]
        pos = [r for r, v in zip(rays, vals) if v > tol]
        neg = [(r, v) for r, v in zip(rays, vals) if v < -tol]
        zero = [r for r, v in zip(rays, vals) if abs(v) <= tol]
        new = []
        P = A[processed]
        for rp in pos:
            vp = a @ rp
            zp = np.abs(P @ rp) <= 1e-9
            for rn, vn in neg:
                common = zp & (np.abs(P @ rn) <= 1e-9)
                # algebraic adjacency test
                if common.sum() < k - 2 or rank(P[common]) < k - 2:
                    continue
                r = vp * rn - vn * rp
                nr = np.linalg.norm(r)
                if nr > 1e-12:
                    new.append(r / nr)
        rays = [r for r, _ in neg] + zero + new
        processed.append(i)
    # dedupe
    out: list[np.ndarray] = []
    for r in rays:
        if not any(np.linalg.norm(r - o) < 1e-9 for o in out):
            out.append(r)
    return out


def extreme_rays(cone: PolyhedralCone) -> list[np.ndarray]:
    """Unit extreme rays of the pointed part of a homogeneous cone."""
    B, A = _pointed_part(cone)
    if B.shape[1] == 0:
        return []
    if A.shape[0] == 0:
        return []  # pointed part of a subspace is {0}
    rays = _double_description(A)
    out = []
    for z in rays:
        d = B @ z
        d /= np.linalg.norm(d)
        out.append(d)
    out.sort(key=lambda v: tuple(np.round(-v, 12)))
    return out


@dataclass(frozen=True)
class DirectionSample:
    directions: tuple
    sampled_only: bool = False
    warning: str | None = None

    def __iter__(self):
        return iter(self.directions)

    def __len__(self):
        return len(self.directions)


def _sphere_points(dim: int, count: int, seed: int) -> np.ndarray:
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    sampler = qmc.Halton(d=dim, scramble=True, seed=seed)
    u = sampler.random(count)
    u = np.clip(u, 1e-12, 1 - 1e-12)
    from scipy.special import ndtri

    g = ndtri(u)
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def sample_directions(cone: PolyhedralCone, budget: int, seed: int = 0) -> DirectionSample:
    """Deterministic unit directions in a homogeneous cone: extreme rays, a
    signed lineality basis, then quasi-uniform sphere points inside the cone."""
    if not cone.homogeneous:
        raise ValueError("sample_directions needs a homogeneous cone")
    dim = cone.dim
    out: list[np.ndarray] = []

    def push(d) -> None:
        nd = np.linalg.norm(d)
        if nd < 1e-12 or len(out) >= budget:
            return
        d = d / nd
        if not cone.contains(d) or any(np.linalg.norm(d - o) < 1e-9 for o in out):
            return
        out.append(d)

    warning = None
    sampled_only = False
    if dim > SAMPLING_MAX_DIM:
        warning = f"dimension {dim} > {SAMPLING_MAX_DIM}: pure sphere sampling"
        sampled_only = True
    elif dim > EXTREME_RAY_MAX_DIM or cone.A_ineq.shape[0] > EXTREME_RAY_MAX_ROWS:
        sampled_only = True
    rays: list[np.ndarray] = []
    L = cone.lineality_basis()
    if not sampled_only:
        rays = extreme_rays(cone)
        for r in rays:
            push(r)
        for col in L.T:
            push(col)
            push(-col)
    if len(out) < budget and (rays or L.shape[1] or sampled_only):
        for d in _sphere_points(dim, max(8 * budget, 64), seed):
            push(d)
            if len(out) >= budget:
                break
        # thin cones: fill with conic combinations of the generators
        if len(out) < budget and not sampled_only and (len(rays) + L.shape[1]) > 1:
            rng = np.random.default_rng(seed)
            for _ in range(20 * budget):
                w = rng.random(len(rays))
                v = sum((wi * r for wi, r in zip(w, rays)), np.zeros(dim))
                if L.shape[1]:
                    v = v + L @ rng.standard_normal(L.shape[1])
                push(v)
                if len(out) >= budget:
                    break
    return DirectionSample(tuple(out), sampled_only, warning)
