"""Derivative-free checks on uniform grids: the localized value function, the
calm minimax inequalities, finite-difference directional derivatives of the
value function and the quadratic growth constants."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from minimax_cert import expr as ex
from minimax_cert.cones import active_sets, critical_set_C, linearization_cone_X, sample_directions
from minimax_cert.config import RunConfig
from minimax_cert.errors import DomainError, LambdaMaxEmpty, OracleBudgetExceeded, ValidationError
from minimax_cert.first_order import duality_gap
from minimax_cert.multipliers import lambda2_vertices
from minimax_cert.numlin import max_quad_over_cone
from minimax_cert.problem import CandidatePoint, ProblemSpec

MAX_GRID_DIM = 6
MAX_PAIRS_PER_CHUNK = 2_000_000
MAX_GRID_POINTS = 5_000_000


@dataclass(frozen=True)
class GridSpec:
    delta: float = 0.1
    kappa: float = 2.0
    resolution: int = 41
    feas_tol: float = 1e-9

    def __post_init__(self):
        if self.resolution < 3:
            raise ValidationError(f"resolution must be at least 3, got {self.resolution}")
        if not self.delta > 0 or not self.kappa > 0 or not self.feas_tol > 0:
            raise ValidationError("delta, kappa and feas_tol must be positive")

    @property
    def half(self) -> int:
        """Grid nodes on each side of the centre (the centre is always a node)."""
        return (self.resolution - 1) // 2


def ball_grid(center, radius: float, half: int) -> np.ndarray:
    """Nodes center + radius * k / half (k in -half..half per axis) inside the ball."""
    center = np.asarray(center, dtype=float).ravel()
    d = center.size
    if radius <= 0.0:
        return center[None, :].copy()
    if (2 * half + 1) ** d > MAX_GRID_POINTS:
        raise OracleBudgetExceeded(f"grid of {(2 * half + 1) ** d} points exceeds {MAX_GRID_POINTS}")
    axis = np.arange(-half, half + 1) / half
    mesh = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    mesh = mesh[np.linalg.norm(mesh, axis=1) <= 1.0 + 1e-12]
    return center + radius * mesh


def _values(e, X, Y) -> np.ndarray:
    return np.broadcast_to(np.asarray(ex.evaluate_batch(e, X, Y), dtype=float), (X.shape[0],))


def _feasible_mask(ineq, eq, X, Y, tol: float, eq_tol: float) -> np.ndarray:
    ok = np.ones(X.shape[0], dtype=bool)
    for e in ineq:
        ok &= _values(e, X, Y) <= tol
    for e in eq:
        ok &= np.abs(_values(e, X, Y)) <= eq_tol
    return ok


def _eq_tol(grid: GridSpec, radius: float) -> float:
    # equality manifolds rarely pass through grid nodes: accept one grid step
    return max(grid.feas_tol, radius / max(grid.half, 1))


def _localized_many(spec: ProblemSpec, Xs: np.ndarray, center_y, radii, grid: GridSpec):
    """V-hat at each row of Xs with its own radius; returns (values, argmax ys)."""
    center_y = np.asarray(center_y, dtype=float).ravel()
    vals = np.full(Xs.shape[0], -math.inf)
    args = np.full((Xs.shape[0], spec.m), np.nan)
    radii = np.broadcast_to(np.asarray(radii, dtype=float), (Xs.shape[0],))
    unit = ball_grid(np.zeros(spec.m), 1.0, grid.half)
    for i, (x, r) in enumerate(zip(Xs, radii)):
        Y = center_y + r * unit if r > 0 else center_y[None, :]
        X = np.broadcast_to(x, (Y.shape[0], spec.n))
        ok = _feasible_mask(spec.varphi_ineq, spec.varphi_eq, X, Y, grid.feas_tol, _eq_tol(grid, r))
        if not ok.any():
            continue
        fv = _values(spec.f, X[ok], Y[ok])
        j = int(np.argmax(fv))
        vals[i] = float(fv[j])
        args[i] = Y[ok][j]
    return vals, args


def localized_value(spec: ProblemSpec, x, center_y, radius: float, grid: GridSpec) -> float:
    """Grid maximum of f(x, .) over Y(x) within the ball; -inf when no node is feasible."""
    x = np.asarray(x, dtype=float).ravel()
    vals, _ = _localized_many(spec, x[None, :], center_y, radius, grid)
    return float(vals[0])


def _x_grid(spec: ProblemSpec, xbar, radius: float, grid: GridSpec) -> np.ndarray:
    X = ball_grid(xbar, radius, grid.half)
    Y = np.zeros((X.shape[0], spec.m))
    ok = _feasible_mask(spec.phi_ineq, spec.phi_eq, X, Y, grid.feas_tol, _eq_tol(grid, radius))
    return X[ok]


def _check_budget(spec: ProblemSpec) -> None:
    if spec.n + spec.m > MAX_GRID_DIM:
        raise OracleBudgetExceeded(f"n + m = {spec.n + spec.m} exceeds the grid limit {MAX_GRID_DIM}")


# ---------------------------------------------------------------------------
# definition check


@dataclass(frozen=True)
class CalmCheck:
    delta: float
    inner_worst: float  # max f(xbar, y) - f(xbar, ybar); <= slack required
    outer_worst: float  # min V-hat(x) - f(xbar, ybar); >= -slack required
    inner_witness: tuple | None
    outer_witness: tuple | None
    verdict: str
    empty_flags: int = 0

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "inner_worst": self.inner_worst,
            "outer_worst": self.outer_worst,
            "inner_witness": _wit(self.inner_witness),
            "outer_witness": _wit(self.outer_witness),
            "empty_flags": self.empty_flags,
            "verdict": self.verdict,
        }


def _wit(w):
    if w is None:
        return None
    x, y = w
    return {"x": [float(v) for v in x], "y": None if y is None else [float(v) for v in y]}


def verify_calm_definition(spec: ProblemSpec, p: CandidatePoint, grid: GridSpec, delta_list) -> dict:
    """Both definitional inequalities on grids, one record per delta."""
    _check_budget(spec)
    fbar = p.f.value
    slack = 1e-9 * (1.0 + abs(fbar))
    checks = []
    warnings = []
    if not list(delta_list):
        warnings.append("empty delta list: nothing tested")
    for delta in delta_list:
        Y = ball_grid(p.y, delta, grid.half)
        Xb = np.broadcast_to(p.x, (Y.shape[0], spec.n))
        ok = _feasible_mask(spec.varphi_ineq, spec.varphi_eq, Xb, Y, grid.feas_tol, _eq_tol(grid, delta))
        fy = _values(spec.f, Xb[ok], Y[ok]) - fbar
        j = int(np.argmax(fy))
        inner_worst, inner_wit = float(fy[j]), (p.x, Y[ok][j])

        Xs = _x_grid(spec, p.x, delta, grid)
        vals, args = _localized_many(spec, Xs, p.y, grid.kappa * delta, grid)
        diff = vals - fbar
        k = int(np.argmin(diff))
        outer_worst = float(diff[k])
        empty = int(np.sum(np.isneginf(vals)))
        outer_wit = (Xs[k], None if np.isneginf(vals[k]) else args[k])
        if inner_worst > slack or (outer_worst < -slack and not empty):
            verdict = "fail"
        elif empty:
            verdict = "degenerate"
        else:
            verdict = "pass"
        checks.append(CalmCheck(float(delta), inner_worst, outer_worst, inner_wit if inner_worst > slack else None,
                                outer_wit if outer_worst < -slack else None, verdict, empty))
    verdicts = [c.verdict for c in checks]
    overall = "fail" if "fail" in verdicts else "degenerate" if "degenerate" in verdicts else "pass"
    return {"verdict": overall, "checks": checks, "warnings": warnings, "kappa": grid.kappa,
            "resolution": grid.resolution}


# ---------------------------------------------------------------------------
# finite differences of the value function


def _extrapolate(ts, ds) -> float:
    """Neville extrapolation to t = 0 of values ds sampled at steps ts."""
    ts = [float(t) for t in ts]
    P = [float(d) for d in ds]
    k = len(ts)
    for j in range(1, k):
        P = [(ts[i] * P[i + 1] - ts[i + j] * P[i]) / (ts[i] - ts[i + j]) for i in range(k - j)]
    return P[0]


def _v_hat_along(spec, p, u, grid: GridSpec, t: float) -> float:
    nu = np.linalg.norm(u)
    x = p.x + t * u
    return localized_value(spec, x, p.y, grid.kappa * t * max(nu, 1e-300), grid)


def _fd_tol(spec: ProblemSpec, p: CandidatePoint, grid: GridSpec, steps, u) -> float:
    step = grid.kappa * min(steps) * np.linalg.norm(u) / max(grid.half, 1)
    curv = max(1.0, float(np.linalg.norm(p.f.hess, 2)))
    return float(10.0 * (step + step * step * curv))


def fd_directional_derivative(spec: ProblemSpec, p: CandidatePoint, u, grid: GridSpec, steps) -> dict:
    u = np.asarray(u, dtype=float).ravel()
    act = active_sets(spec, p)
    analytic = duality_gap(spec, p, act, u).dual
    if not np.any(u):
        return {"estimate": 0.0, "analytic": analytic, "diff": abs(analytic), "raw": [], "empty": False}
    fbar = p.f.value
    raw = []
    for t in steps:
        v = _v_hat_along(spec, p, u, grid, t)
        if np.isneginf(v):
            return {"estimate": -math.inf, "analytic": analytic, "diff": math.inf, "raw": raw, "empty": True}
        raw.append((v - fbar) / t)
    est = _extrapolate(steps, raw)
    return {"estimate": est, "analytic": analytic, "diff": abs(est - analytic), "raw": raw, "empty": False}


def second_order_lower_bound(spec: ProblemSpec, p: CandidatePoint, u) -> float:
    """max over candidate h of min over Lambda^2_max(u) vertices of the L_max form."""
    from minimax_cert.second_order import lagrangian_hessian

    u = np.asarray(u, dtype=float).ravel()
    act = active_sets(spec, p)
    try:
        verts, _ = lambda2_vertices(spec, p, act, u)
    except LambdaMaxEmpty:
        return -math.inf
    if not verts:
        return math.inf
    C = critical_set_C(spec, p, act, u)
    n = spec.n
    forms = [lagrangian_hessian(spec, p, np.zeros(spec.p1 + spec.p2), b) for b in verts]
    cands = []
    for M in forms:
        res = max_quad_over_cone(2.0 * M[n:, n:], 2.0 * (M[:n, n:].T @ u), C)
        if not res.feasible:
            return -math.inf
        if res.unbounded and len(forms) == 1:
            return math.inf
        if res.direction is not None:
            cands.append(res.direction)
    best = -math.inf
    for h in cands:
        z = np.concatenate([u, h])
        best = max(best, min(float(z @ M @ z) for M in forms))
    return best


def fd_second_directional(spec: ProblemSpec, p: CandidatePoint, u, grid: GridSpec, steps) -> dict:
    u = np.asarray(u, dtype=float).ravel()
    bound = second_order_lower_bound(spec, p, u) if np.any(u) else 0.0
    if not np.any(u):
        return {"estimate": 0.0, "lower_bound": 0.0, "residual": 0.0, "tol_fd": 0.0, "verdict": "pass"}
    first = fd_directional_derivative(spec, p, u, grid, steps)
    fbar = p.f.value
    raw = []
    for t in steps:
        v = _v_hat_along(spec, p, u, grid, t)
        if np.isneginf(v):
            return {"estimate": -math.inf, "lower_bound": bound, "residual": math.inf, "tol_fd": math.nan,
                    "verdict": "degenerate"}
        raw.append(2.0 * (v - fbar - t * first["analytic"]) / (t * t))
    est = _extrapolate(steps, raw) if len(steps) > 1 else raw[0]
    tol = _fd_tol(spec, p, grid, steps, u)
    residual = max(0.0, bound - est) if math.isfinite(bound) else (math.inf if bound > 0 else 0.0)
    verdict = "pass" if est >= bound - tol else "fail"
    return {"estimate": est, "lower_bound": bound, "residual": residual, "tol_fd": tol, "verdict": verdict,
            "raw": raw}


# ---------------------------------------------------------------------------
# growth constants


def verify_growth(spec: ProblemSpec, p: CandidatePoint, grid: GridSpec, delta: float) -> dict:
    _check_budget(spec)
    fbar = p.f.value
    step_y = delta / grid.half
    Y = ball_grid(p.y, delta, grid.half)
    Xb = np.broadcast_to(p.x, (Y.shape[0], spec.n))
    ok = _feasible_mask(spec.varphi_ineq, spec.varphi_eq, Xb, Y, grid.feas_tol, _eq_tol(grid, delta))
    Y = Y[ok]
    ry = np.linalg.norm(Y - p.y, axis=1)
    far = ry >= step_y * (1 - 1e-9)
    if far.any():
        q = (fbar - _values(spec.f, Xb[: Y.shape[0]][far], Y[far])) / ry[far] ** 2
        j = int(np.argmin(q))
        eps_hat, eps_wit = float(q[j]), Y[far][j]
    else:
        eps_hat, eps_wit = math.inf, None

    step_x = delta / grid.half
    Xs = _x_grid(spec, p.x, delta, grid)
    rx = np.linalg.norm(Xs - p.x, axis=1)
    far = rx >= step_x * (1 - 1e-9)
    empty = 0
    if far.any():
        Xf = Xs[far]
        radii = grid.kappa * np.maximum(rx[far], step_x)
        vals, _ = _localized_many(spec, Xf, p.y, radii, grid)
        empty = int(np.sum(np.isneginf(vals)))
        q = (vals - fbar) / rx[far] ** 2
        j = int(np.argmin(q))
        mu_hat, mu_wit = float(q[j]), Xf[j]
    else:
        mu_hat, mu_wit = math.inf, None
    if empty:
        verdict = "degenerate"
    elif eps_hat > 0 and mu_hat > 0:
        verdict = "pass"
    else:
        verdict = "fail"
    return {
        "delta": float(delta),
        "eps_hat": eps_hat,
        "mu_hat": mu_hat,
        "eps_witness": None if eps_wit is None else eps_wit.tolist(),
        "mu_witness": None if mu_wit is None else mu_wit.tolist(),
        "empty_flags": empty,
        "verdict": verdict,
    }


# ---------------------------------------------------------------------------
# full oracle run


@dataclass(frozen=True)
class OracleReport:
    verdict: str  # "pass" / "fail" / "degenerate" / "skipped"
    calm: dict | None
    growth: tuple
    derivatives: tuple
    kappa: float
    reasons: tuple = ()
    notes: tuple = field(default=())

    def to_dict(self) -> dict:
        calm = None
        if self.calm is not None:
            calm = {
                "verdict": self.calm["verdict"],
                "kappa": self.calm["kappa"],
                "resolution": self.calm["resolution"],
                "warnings": list(self.calm["warnings"]),
                "checks": [c.to_dict() for c in self.calm["checks"]],
            }
        return {
            "verdict": self.verdict,
            "reasons": list(self.reasons),
            "kappa": self.kappa,
            "calm_definition": calm,
            "growth": list(self.growth),
            "derivatives": list(self.derivatives),
            "notes": list(self.notes),
        }


def run_oracle(spec: ProblemSpec, p: CandidatePoint, cfg: RunConfig | None = None, kappa: float | None = None,
               directions: int = 4) -> OracleReport:
    cfg = cfg or RunConfig()
    kappa = cfg.kappa or kappa or 2.0
    notes = ["grid checks can refute or support the tested (kappa, delta) pairs only"]
    if spec.n + spec.m > MAX_GRID_DIM:
        return OracleReport("skipped", None, (), (), kappa, (f"n + m > {MAX_GRID_DIM}: grid budget",), tuple(notes))
    grid = GridSpec(max(cfg.deltas) if cfg.deltas else 0.1, kappa, cfg.resolution, cfg.feas_tol)
    reasons = []
    try:
        calm = verify_calm_definition(spec, p, grid, cfg.deltas)
        growth = tuple(verify_growth(spec, p, grid, d) for d in cfg.deltas)
    except DomainError as err:
        return OracleReport("degenerate", None, (), (), kappa, (f"evaluation failed on the grid: {err}",), tuple(notes))
    derivs = []
    act = active_sets(spec, p, cfg.eps_act)
    steps = [min(cfg.deltas) / 2 ** k for k in range(2)] if cfg.deltas else [0.05, 0.025]
    for u in list(sample_directions(linearization_cone_X(spec, p, act), directions, cfg.seed)):
        try:
            d1 = fd_directional_derivative(spec, p, u, grid, steps)
            tol = _fd_tol(spec, p, grid, steps, u)
            rec = {"u": u.tolist(), "estimate": d1["estimate"], "analytic": d1["analytic"], "diff": d1["diff"],
                   "tol_fd": tol, "verdict": "degenerate" if d1["empty"] else ("pass" if d1["diff"] <= tol else "fail")}
        except DomainError as err:
            rec = {"u": u.tolist(), "verdict": "degenerate", "error": str(err)}
        derivs.append(rec)

    if calm["verdict"] == "fail":
        verdict = "fail"
        reasons.append("a definitional inequality is violated on the grid")
    else:
        verdict = calm["verdict"]
        if verdict == "degenerate":
            reasons.append("empty localized feasible set at some grid point")
        if any(g["verdict"] != "pass" for g in growth):
            verdict = "degenerate"
            reasons.append("quadratic growth not observed on the grid")
        if any(d["verdict"] != "pass" for d in derivs):
            verdict = "degenerate"
            reasons.append("finite-difference derivative disagrees with the dual value")
    return OracleReport(verdict, calm, growth, tuple(derivs), kappa, tuple(reasons), tuple(notes))
