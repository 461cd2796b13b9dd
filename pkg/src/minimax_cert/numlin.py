"""Dense linear algebra and optimisation kernels.

Everything here works on small dense problems: a two-phase tableau simplex
with Bland's rule, equality-constrained KKT solves, exact maximisation of a
quadratic over a polyhedron by face enumeration, and Jacobi eigenvalues.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from minimax_cert.errors import FaceBudgetExceeded, NumericalBreakdown, SingularKkt

FEAS_TOL = 1e-9
OPT_TOL = 1e-8
RANK_TOL = 1e-10
PIVOT_TOL = 1e-10
BREAKDOWN_TOL = 1e-12
MAX_FACES = 2**20


def rank(A: np.ndarray, tol: float = RANK_TOL) -> int:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    return int(np.sum(s > tol * max(1.0, s[0])))


def nullspace(A: np.ndarray, dim: int, tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal basis (columns) of the null space of ``A`` in R^dim."""
    A = np.asarray(A, dtype=float).reshape(-1, dim)
    if A.shape[0] == 0:
        return np.eye(dim)
    _, s, Vt = np.linalg.svd(A)
    r = int(np.sum(s > tol * max(1.0, s[0] if s.size else 0.0)))
    return Vt[r:].T.copy()


# ---------------------------------------------------------------------------
# linear programming


@dataclass(frozen=True)
class LinearProgram:
    """minimise c^T z subject to rows ``A z (sense) b``; ``free[j]`` marks
    unbounded variables, the rest are constrained to z_j >= 0."""

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    senses: tuple
    free: tuple

    def __post_init__(self):
        k = len(self.c)
        A = np.asarray(self.A, dtype=float).reshape(-1, k)
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).reshape(-1))
        if len(self.senses) != A.shape[0] or self.b.size != A.shape[0] or len(self.free) != k:
            raise ValueError("inconsistent LP dimensions")
        if any(s not in ("<=", "=", ">=") for s in self.senses):
            raise ValueError(f"bad row sense in {self.senses}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(self.b)) and np.all(np.isfinite(self.c))):
            raise ValueError("LP data must be finite")

    @classmethod
    def build(cls, c, le=None, eq=None, ge=None, free=False) -> "LinearProgram":
        """Assemble from ``(A, b)`` blocks; ``free`` is a bool or per-variable mask."""
        c = np.asarray(c, dtype=float).ravel()
        k = c.size
        rows, rhs, senses = [], [], []
        for block, sense in ((le, "<="), (eq, "="), (ge, ">=")):
            if block is None:
                continue
            A, b = block
            A = np.asarray(A, dtype=float).reshape(-1, k)
            rows.append(A)
            rhs.append(np.asarray(b, dtype=float).reshape(-1))
            senses += [sense] * A.shape[0]
        A = np.vstack(rows) if rows else np.zeros((0, k))
        b = np.concatenate(rhs) if rhs else np.zeros(0)
        mask = tuple([bool(free)] * k) if isinstance(free, bool) else tuple(bool(f) for f in free)
        return cls(c, A, b, tuple(senses), mask)


@dataclass(frozen=True)
class LpSolution:
    status: str  # "optimal", "infeasible", "unbounded"
    z: np.ndarray | None = None
    value: float | None = None
    basis: tuple = ()

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


class _Tableau:
    """Rows hold B^-1 [A | b]; ``basis[i]`` is the column basic in row i."""

    def __init__(self, T: np.ndarray, basis: list[int]):
        self.T = T
        self.basis = basis

    def pivot(self, r: int, j: int) -> None:
        piv = self.T[r, j]
        if abs(piv) < BREAKDOWN_TOL:
            raise NumericalBreakdown(f"pivot {piv:.3e} below breakdown threshold")
        self.T[r] /= piv
        col = self.T[:, j].copy()
        col[r] = 0.0
        self.T -= np.outer(col, self.T[r])
        self.basis[r] = j

    def run(self, cost: np.ndarray, allowed: np.ndarray, max_iter: int = 50_000) -> str:
        """Minimise ``cost`` over the columns in ``allowed`` with Bland's rule."""
        for _ in range(max_iter):
            cb = cost[self.basis]
            reduced = cost - cb @ self.T[:, :-1]
            candidates = np.flatnonzero(allowed & (reduced < -OPT_TOL * 1e-2))
            if candidates.size == 0:
                return "optimal"
            j = int(candidates[0])
            col = self.T[:, j]
            rows = np.flatnonzero(col > PIVOT_TOL)
            if rows.size == 0:
                return "unbounded"
            ratios = self.T[rows, -1] / col[rows]
            best = ratios.min()
            ties = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
            r = int(min(ties, key=lambda i: self.basis[i]))
            self.pivot(r, j)
        raise NumericalBreakdown("simplex iteration limit reached")


def solve_lp(lp: LinearProgram) -> LpSolution:
    """Two-phase dense simplex with Bland's anti-cycling rule."""
    k = lp.c.size
    # split free variables z = z+ - z-
    cols = []
    for j in range(k):
        cols.append((j, 1.0))
        if lp.free[j]:
            cols.append((j, -1.0))
    S = np.zeros((k, len(cols)))
    for t, (j, sgn) in enumerate(cols):
        S[j, t] = sgn
    A = lp.A @ S
    b = lp.b.copy()
    senses = list(lp.senses)
    for i in range(len(b)):
        if b[i] < 0:
            A[i] *= -1
            b[i] *= -1
            senses[i] = {"<=": ">=", ">=": "<=", "=": "="}[senses[i]]
    r, ns = A.shape
    n_slack = sum(s != "=" for s in senses)
    n_art = sum(s != "<=" for s in senses)
    width = ns + n_slack + n_art
    T = np.zeros((r, width + 1))
    T[:, :ns] = A
    T[:, -1] = b
    basis = [0] * r
    si, ai = ns, ns + n_slack
    for i, s in enumerate(senses):
        if s == "<=":
            T[i, si] = 1.0
            basis[i] = si
            si += 1
        elif s == ">=":
            T[i, si] = -1.0
            si += 1
        if s != "<=":
            T[i, ai] = 1.0
            basis[i] = ai
            ai += 1
    tab = _Tableau(T, basis)
    art = np.zeros(width, dtype=bool)
    art[ns + n_slack:] = True
    scale = 1.0 + np.linalg.norm(b)

    if n_art:
        status = tab.run(art.astype(float), np.ones(width, dtype=bool))
        if status != "optimal":  # phase 1 is bounded below by 0
            raise NumericalBreakdown("phase 1 reported unbounded")
        if tab.T[[i for i, bv in enumerate(tab.basis) if art[bv]], -1].sum() > FEAS_TOL * scale:
            return LpSolution("infeasible")
        # drive zero-level artificials out of the basis; drop redundant rows
        keep = []
        for i in range(len(tab.basis)):
            if art[tab.basis[i]]:
                nz = np.flatnonzero((np.abs(tab.T[i, :width]) > PIVOT_TOL) & ~art)
                if nz.size:
                    tab.pivot(i, int(nz[0]))
                    keep.append(i)
            else:
                keep.append(i)
        tab = _Tableau(tab.T[keep], [tab.basis[i] for i in keep])

    cost = np.zeros(width)
    cost[:ns] = lp.c @ S
    status = tab.run(cost, ~art)
    if status == "unbounded":
        return LpSolution("unbounded")

    # recompute the basic solution from the original data to shed tableau drift
    full = np.zeros((r, width))
    full[:, :ns] = A
    full[:, ns:] = _aux_columns(senses, ns, n_slack, n_art)
    B = full[:, tab.basis] if tab.basis else np.zeros((r, 0))
    xb = np.linalg.lstsq(B, b, rcond=None)[0] if tab.basis else np.zeros(0)
    if np.any(xb < -FEAS_TOL * scale):
        xb = tab.T[:, -1]
    xfull = np.zeros(width)
    xfull[tab.basis] = np.maximum(xb, 0.0)
    z = S @ xfull[:ns]
    sol = LpSolution("optimal", z, float(lp.c @ z), tuple(int(v) for v in tab.basis))
    _check_residuals(lp, z)
    return sol


def _aux_columns(senses, ns, n_slack, n_art) -> np.ndarray:
    """Slack/surplus/artificial columns of the standard-form matrix."""
    aux = np.zeros((len(senses), n_slack + n_art))
    si, ai = 0, n_slack
    for i, s in enumerate(senses):
        if s == "<=":
            aux[i, si] = 1.0
            si += 1
        elif s == ">=":
            aux[i, si] = -1.0
            si += 1
        if s != "<=":
            aux[i, ai] = 1.0
            ai += 1
    return aux


def _check_residuals(lp: LinearProgram, z: np.ndarray) -> None:
    tol = 1e-9 * (1.0 + np.linalg.norm(lp.b)) * max(1.0, np.abs(lp.A).max(initial=0.0)) * max(1.0, np.abs(z).max(initial=0.0))
    res = lp.A @ z - lp.b
    for i, s in enumerate(lp.senses):
        if (s == "<=" and res[i] > tol) or (s == ">=" and res[i] < -tol) or (s == "=" and abs(res[i]) > tol):
            raise NumericalBreakdown(f"row {i} residual {res[i]:.3e} after simplex")
    nonneg = ~np.asarray(lp.free, dtype=bool)
    if np.any(z[nonneg] < -FEAS_TOL):
        raise NumericalBreakdown("bound violation after simplex")


def lp_feasible_point(A_ineq, b_ineq, A_eq=None, b_eq=None) -> np.ndarray | None:
    """Any point with A_ineq z <= b_ineq and A_eq z = b_eq, or None."""
    A_ineq = np.asarray(A_ineq, dtype=float)
    k = A_ineq.shape[1]
    eq = None if A_eq is None or np.size(A_eq) == 0 else (A_eq, b_eq)
    le = None if A_ineq.shape[0] == 0 else (A_ineq, b_ineq)
    sol = solve_lp(LinearProgram.build(np.zeros(k), le=le, eq=eq, free=True))
    return sol.z if sol.optimal else None


# ---------------------------------------------------------------------------
# equality-constrained quadratic steps


def solve_kkt(H, g, A_eq=None) -> np.ndarray:
    """Stationary point of 1/2 d^T H d + g^T d subject to A_eq d = 0.

    When H is negative definite on the null space of A_eq this is the
    constrained maximiser.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    g = np.asarray(g, dtype=float).ravel()
    d = g.size
    A = np.zeros((0, d)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, d)
    k = A.shape[0]
    K = np.block([[H, A.T], [A, np.zeros((k, k))]])
    rk = rank(K)
    if rk < d + k:
        raise SingularKkt(rk, d + k)
    rhs = np.concatenate([-g, np.zeros(k)])
    sol = np.linalg.solve(K, rhs)
    if np.linalg.norm(K @ sol - rhs) > 1e-8 * max(1.0, np.linalg.norm(rhs)):
        raise NumericalBreakdown("KKT residual too large")
    return sol[:d]


# ---------------------------------------------------------------------------
# quadratic maximisation over polyhedra


@dataclass(frozen=True)
class ConeQuadResult:
    value: float
    unbounded: bool = False
    direction: np.ndarray | None = None
    active_face: tuple = ()
    feasible: bool = True
    notes: tuple = field(default=())


def min_eig(H) -> float:
    """Smallest eigenvalue of a symmetric matrix by cyclic Jacobi rotations."""
    A = np.array(H, dtype=float)
    A = 0.5 * (A + A.T)
    d = A.shape[0]
    if d == 0:
        return math.inf
    scale = np.linalg.norm(A)
    if scale == 0.0:
        return 0.0
    for _ in range(100):
        off = np.sqrt(max(0.0, np.sum(A**2) - np.sum(np.diag(A) ** 2)))
        if off <= 1e-15 * scale:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                if abs(A[p, q]) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * A[p, q])
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                J = np.eye(d)
                J[p, p] = J[q, q] = c
                J[p, q] = s
                J[q, p] = -s
                A = J.T @ A @ J
    return float(np.min(np.diag(A)))


def max_eig(H) -> float:
    return -min_eig(-np.asarray(H, dtype=float))


def _face_count(k: int, r: int) -> int:
    return sum(math.comb(k, s) for s in range(0, min(k, r) + 1))


def _enumerate_max(Q, p, A, b, scale: float):
    """Exact max of 1/2 w^T Q w + p^T w over {A w + b <= 0} assuming the
    maximum is attained: the maximiser is a stationary point of the relative
    interior of some face, so enumerating faces' stationary points suffices."""
    r = p.size
    k = A.shape[0]
    if _face_count(k, r) > MAX_FACES:
        raise FaceBudgetExceeded(f"{_face_count(k, r)} faces exceed budget {MAX_FACES}")
    tol_feas = FEAS_TOL * scale
    tol_curv = 1e-9 * max(1.0, np.abs(Q).max(initial=0.0))
    best = None
    for s in range(0, min(k, r) + 1):
        for S in itertools.combinations(range(k), s):
            AS = A[list(S)]
            if s and rank(AS) < s:
                continue
            if s:
                w0 = np.linalg.lstsq(AS, -b[list(S)], rcond=None)[0]
                Z = nullspace(AS, r)
            else:
                w0 = np.zeros(r)
                Z = np.eye(r)
            if Z.shape[1]:
                QS = Z.T @ Q @ Z
                if max_eig(QS) > tol_curv:
                    continue
                pS = Z.T @ (Q @ w0 + p)
                t = np.linalg.lstsq(QS, -pS, rcond=None)[0]
                if np.linalg.norm(QS @ t + pS) > 1e-9 * max(1.0, np.linalg.norm(pS)):
                    continue
                w = w0 + Z @ t
            else:
                w = w0
            if k and np.max(A @ w + b) > tol_feas * max(1.0, np.abs(w).max(initial=0.0)):
                continue
            val = 0.5 * w @ Q @ w + p @ w
            if best is None or val > best[0] + 1e-12 * (1.0 + abs(best[0])):
                best = (float(val), w, S)
    return best


def max_quad_over_cone(H, g, cone) -> ConeQuadResult:
    """Supremum of 1/2 d^T H d + g^T d over a polyhedral section.

    ``cone`` carries ``A_ineq, c_ineq, A_eq, c_eq`` describing
    {d : A_ineq d + c_ineq <= 0, A_eq d + c_eq = 0}. Returns the exact
    maximiser by face enumeration, or an ``unbounded`` flag.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    H = 0.5 * (H + H.T)
    g = np.asarray(g, dtype=float).ravel()
    dim = g.size
    Ai, ci = np.asarray(cone.A_ineq, dtype=float).reshape(-1, dim), np.asarray(cone.c_ineq, dtype=float).ravel()
    Ae, ce = np.asarray(cone.A_eq, dtype=float).reshape(-1, dim), np.asarray(cone.c_eq, dtype=float).ravel()
    scale = 1.0 + max(np.abs(ci).max(initial=0.0), np.abs(ce).max(initial=0.0))

    # restrict to the affine hull of the equalities: d = d0 + Z w
    if Ae.shape[0]:
        d0 = np.linalg.lstsq(Ae, -ce, rcond=None)[0]
        if np.linalg.norm(Ae @ d0 + ce) > FEAS_TOL * scale:
            return ConeQuadResult(-math.inf, feasible=False)
        Z = nullspace(Ae, dim)
    else:
        d0, Z = np.zeros(dim), np.eye(dim)
    r = Z.shape[1]
    Q = Z.T @ H @ Z
    p = Z.T @ (H @ d0 + g)
    q0 = 0.5 * d0 @ H @ d0 + g @ d0
    A = Ai @ Z
    b = Ai @ d0 + ci

    def lift(w):
        return d0 + Z @ w

    if r == 0:
        if Ai.shape[0] and np.max(Ai @ d0 + ci) > FEAS_TOL * scale:
            return ConeQuadResult(-math.inf, feasible=False)
        return ConeQuadResult(float(q0), direction=d0, active_face=_active(Ai, ci, d0, scale))
    if A.shape[0] and lp_feasible_point(A, -b) is None:
        return ConeQuadResult(-math.inf, feasible=False)

    tol_curv = 1e-9 * max(1.0, np.abs(Q).max(initial=0.0))
    box = np.vstack([np.eye(r), -np.eye(r)])
    if max_eig(Q) > tol_curv:
        # positive curvature along a recession ray?
        Ar = np.vstack([A, box])
        br = np.concatenate([np.zeros(A.shape[0]), -np.ones(2 * r)])
        ray = _enumerate_max(Q, np.zeros(r), Ar, br, 1.0)
        if ray is not None and ray[0] > tol_curv:
            return ConeQuadResult(math.inf, unbounded=True, direction=Z @ ray[1], notes=("positive-curvature ray",))
        indefinite = True
    else:
        indefinite = False
        # Q <= 0: unbounded iff p increases along a recession direction in ker Q
        N = nullspace(Q, r, tol=1e-9)
        if N.shape[1]:
            k = N.shape[1]
            lp = LinearProgram.build(
                -(N.T @ p),
                le=(np.vstack([A @ N, np.eye(k), -np.eye(k)]) if A.shape[0] else np.vstack([np.eye(k), -np.eye(k)]),
                    np.concatenate([np.zeros(A.shape[0]), np.ones(2 * k)])),
                free=True,
            )
            sol = solve_lp(lp)
            if sol.optimal and -sol.value > 1e-9 * max(1.0, np.linalg.norm(p)):
                return ConeQuadResult(math.inf, unbounded=True, direction=Z @ (N @ sol.z), notes=("linear growth along flat ray",))

    best = _enumerate_max(Q, p, A, b, scale)
    if best is None:
        raise NumericalBreakdown("no stationary face point found on a non-empty polyhedron")
    notes = ()
    if indefinite:
        # growth along zero-curvature rays: compare against a much larger box
        R = 10.0 * max(1.0, np.abs(best[1]).max(initial=0.0))
        grown = _enumerate_max(Q, p, np.vstack([A, box]), np.concatenate([b, -1e3 * R * np.ones(2 * r)]), scale)
        if grown is not None and grown[0] > best[0] + 1e-8 * (1.0 + abs(best[0])):
            return ConeQuadResult(math.inf, unbounded=True, direction=lift(grown[1]), notes=("growth under box enlargement",))
        notes = ("indefinite form: unboundedness tested by box enlargement",)
    d = lift(best[1])
    return ConeQuadResult(float(best[0] + q0), direction=d, active_face=_active(Ai, ci, d, scale), notes=notes)


def _active(Ai, ci, d, scale) -> tuple:
    if Ai.shape[0] == 0:
        return ()
    slack = Ai @ d + ci
    return tuple(int(i) for i in np.flatnonzero(np.abs(slack) <= 1e-8 * scale * max(1.0, np.abs(d).max(initial=0.0))))


def quad_form(M: np.ndarray, v: Sequence[float]) -> float:
    v = np.asarray(v, dtype=float)
    return float(v @ M @ v)
