"""Problem files, problem specifications and cached candidate points."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from minimax_cert import expr as ex
from minimax_cert.errors import ModelError, ParseError, ValidationError

EXPR_KEYS = ("f", "phi_ineq", "phi_eq", "varphi_ineq", "varphi_eq")
LIST_KEYS = ("phi_ineq", "phi_eq", "varphi_ineq", "varphi_eq")


@dataclass(frozen=True)
class ProblemSpec:
    """min over x in X of max over y in Y(x) of f(x, y).

    X = {x : phi_ineq(x) <= 0, phi_eq(x) = 0} and
    Y(x) = {y : varphi_ineq(x, y) <= 0, varphi_eq(x, y) = 0}.
    """

    n: int
    m: int
    f: ex.Expression
    phi_ineq: tuple = ()
    phi_eq: tuple = ()
    varphi_ineq: tuple = ()
    varphi_eq: tuple = ()
    point_x: tuple | None = None
    point_y: tuple | None = None

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValidationError(f"dimensions must be positive, got n={self.n}, m={self.m}")
        for k, e in enumerate(self.phi_ineq + self.phi_eq):
            if any(kind == "y" for kind, _ in ex.variables(e)):
                raise ValidationError(f"outer constraint #{k + 1} references y: {ex.serialize(e)}")

    @property
    def p1(self) -> int:
        return len(self.phi_ineq)

    @property
    def p2(self) -> int:
        return len(self.phi_eq)

    @property
    def q1(self) -> int:
        return len(self.varphi_ineq)

    @property
    def q2(self) -> int:
        return len(self.varphi_eq)

    @property
    def phi(self) -> tuple:
        return self.phi_ineq + self.phi_eq

    @property
    def varphi(self) -> tuple:
        return self.varphi_ineq + self.varphi_eq

    @classmethod
    def from_strings(cls, n: int, m: int, f: str, phi_ineq=(), phi_eq=(), varphi_ineq=(), varphi_eq=()):
        parse = lambda s: ex.parse_expression(s, n, m)  # noqa: E731
        return cls(
            n, m, parse(f),
            tuple(map(parse, phi_ineq)), tuple(map(parse, phi_eq)),
            tuple(map(parse, varphi_ineq)), tuple(map(parse, varphi_eq)),
        )

    def canonical_text(self) -> str:
        lines = [f"n = {self.n}", f"m = {self.m}", f"f = {ex.serialize(self.f)}"]
        for key in LIST_KEYS:
            lines += [f"{key} = {ex.serialize(e)}" for e in getattr(self, key)]
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()

    def is_feasible(self, x, y, tol: float = 1e-9) -> bool:
        viol = constraint_violations(self, x, y)
        return all(v <= tol for _, v in viol)


def constraint_violations(spec: ProblemSpec, x, y) -> list[tuple[str, float]]:
    out = []
    for k, e in enumerate(spec.phi_ineq):
        out.append((f"phi_ineq[{k + 1}]", max(0.0, ex.evaluate(e, x, y))))
    for k, e in enumerate(spec.phi_eq):
        out.append((f"phi_eq[{k + 1}]", abs(ex.evaluate(e, x, y))))
    for k, e in enumerate(spec.varphi_ineq):
        out.append((f"varphi_ineq[{k + 1}]", max(0.0, ex.evaluate(e, x, y))))
    for k, e in enumerate(spec.varphi_eq):
        out.append((f"varphi_eq[{k + 1}]", abs(ex.evaluate(e, x, y))))
    return out


@dataclass(frozen=True)
class Derivs:
    value: float
    grad: np.ndarray
    hess: np.ndarray


def _derivs(e, x, y) -> Derivs:
    j = ex.jet(e, x, y)
    j.g.setflags(write=False)
    j.H.setflags(write=False)
    return Derivs(j.v, j.g, j.H)


@dataclass(frozen=True)
class CandidatePoint:
    """The pair (x, y) with derivatives of every problem function cached.

    Gradients and Hessians are taken in the joint variable (x, y) of length
    n + m, outer constraints included (their y-part is zero).
    """

    x: np.ndarray
    y: np.ndarray
    f: Derivs
    phi: tuple = field(default=())
    varphi: tuple = field(default=())

    @classmethod
    def at(cls, spec: ProblemSpec, x, y) -> "CandidatePoint":
        x = np.array(x, dtype=float).ravel()
        y = np.array(y, dtype=float).ravel()
        if x.size != spec.n or y.size != spec.m:
            raise ValidationError(f"point has dimensions ({x.size}, {y.size}), problem has ({spec.n}, {spec.m})")
        x.setflags(write=False)
        y.setflags(write=False)
        return cls(
            x, y, _derivs(spec.f, x, y),
            tuple(_derivs(e, x, y) for e in spec.phi),
            tuple(_derivs(e, x, y) for e in spec.varphi),
        )

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def m(self) -> int:
        return self.y.size

    def phi_values(self) -> np.ndarray:
        return np.array([d.value for d in self.phi])

    def varphi_values(self) -> np.ndarray:
        return np.array([d.value for d in self.varphi])

    def phi_jacobian(self) -> np.ndarray:
        """Rows are gradients of phi_i with respect to x (shape p x n)."""
        return np.array([d.grad[: self.n] for d in self.phi]).reshape(len(self.phi), self.n)

    def varphi_jacobian(self) -> np.ndarray:
        """Rows are full (x, y) gradients of varphi_i (shape q x (n+m))."""
        return np.array([d.grad for d in self.varphi]).reshape(len(self.varphi), self.n + self.m)


# ---------------------------------------------------------------------------
# problem files


def parse_problem_text(text: str) -> ProblemSpec:
    """Parse the line-oriented ``key = value`` problem format."""
    raw: dict[str, list[tuple[int, str]]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {line!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in ("n", "m", "point_x", "point_y") + EXPR_KEYS:
            raise ParseError(f"unknown key {key!r}", lineno)
        if not value:
            raise ParseError(f"empty value for {key!r}", lineno)
        if key in ("n", "m", "f", "point_x", "point_y") and key in raw:
            raise ParseError(f"duplicate key {key!r}", lineno)
        raw.setdefault(key, []).append((lineno, value))

    dims = {}
    for key in ("n", "m"):
        if key not in raw:
            raise ParseError(f"missing key {key!r}", 0)
        lineno, value = raw[key][0]
        try:
            dims[key] = int(value)
        except ValueError:
            raise ParseError(f"{key} must be an integer, got {value!r}", lineno) from None
    if "f" not in raw:
        raise ParseError("missing key 'f'", 0)
    n, m = dims["n"], dims["m"]

    def parse(lineno: int, value: str):
        try:
            return ex.parse_expression(value, n, m)
        except ModelError as err:
            raise ParseError(str(err), lineno) from err

    def vector(key: str):
        if key not in raw:
            return None
        lineno, value = raw[key][0]
        try:
            return tuple(float(v) for v in value.split(","))
        except ValueError:
            raise ParseError(f"{key} must be comma-separated numbers", lineno) from None

    lists = {key: tuple(parse(ln, v) for ln, v in raw.get(key, [])) for key in LIST_KEYS}
    for key in ("phi_ineq", "phi_eq"):
        for (lineno, _), e in zip(raw.get(key, []), lists[key]):
            if any(kind == "y" for kind, _ in ex.variables(e)):
                raise ParseError(f"{key} may depend on x only", lineno)
    return ProblemSpec(
        n, m, parse(*raw["f"][0]), **lists, point_x=vector("point_x"), point_y=vector("point_y")
    )


def load_problem(path) -> ProblemSpec:
    return parse_problem_text(Path(path).read_text(encoding="utf-8"))
