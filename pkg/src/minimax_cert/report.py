"""Certificate reports: assembly, deterministic JSON emission and prose rendering."""

from __future__ import annotations

import json
import math

import numpy as np

from minimax_cert import __version__

SCHEMA = 1
RANKS = {"refuted": 0, "inconclusive": 1, "necessary-consistent": 2, "sufficient-certified": 3}
EXIT_CODES = {"sufficient-certified": 0, "necessary-consistent": 1, "inconclusive": 2, "refuted": 3}
TOP_KEYS = ("schema", "problem_digest", "point", "first_order", "second_order", "jacobian", "oracle", "overall",
            "config", "version")


def stage_rank(stage: str, verdict: str) -> str:
    """Map a stage verdict onto the overall verdict ordering."""
    if stage == "first":
        return {"certified": "sufficient-certified", "refuted": "refuted"}.get(verdict, "inconclusive")
    if stage == "second":
        return verdict
    if stage == "oracle":
        return {"pass": "sufficient-certified", "fail": "refuted"}.get(verdict, "inconclusive")
    if stage == "jacobian":
        return "sufficient-certified" if verdict == "pass" else "inconclusive"
    raise ValueError(stage)


def overall_verdict(stage_verdicts: dict) -> str:
    """Minimum over the enabled stages; without the second stage the best
    attainable verdict is necessary-consistent."""
    ranked = [stage_rank(s, v) for s, v in stage_verdicts.items()]
    if "second" not in stage_verdicts:
        ranked.append("necessary-consistent")
    return min(ranked, key=RANKS.__getitem__)


def exit_code(overall: str) -> int:
    return EXIT_CODES[overall]


def build_report(digest: str, x, y, stages: dict, overall: str, config: dict) -> dict:
    return {
        "schema": SCHEMA,
        "problem_digest": digest,
        "point": {"x": [float(v) for v in x], "y": [float(v) for v in y]},
        "first_order": stages.get("first"),
        "second_order": stages.get("second"),
        "jacobian": stages.get("jacobian"),
        "oracle": stages.get("oracle"),
        "overall": overall,
        "config": config,
        "version": __version__,
    }


# ---------------------------------------------------------------------------
# JSON


def _float(v: float) -> str:
    if math.isnan(v):
        return "NaN"
    if math.isinf(v):
        return "Infinity" if v > 0 else "-Infinity"
    s = format(v, ".17g")
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def _emit(obj, indent: int, level: int, out: list) -> None:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        out.append("null")
    elif isinstance(obj, (bool, np.bool_)):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(_float(float(obj)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, np.ndarray):
        _emit(obj.tolist(), indent, level, out)
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, v) in enumerate(obj.items()):
            out.append(f"{pad}{json.dumps(str(k))}: ")
            _emit(v, indent, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "}")
    elif isinstance(obj, (list, tuple)):
        if not obj:
            out.append("[]")
            return
        if all(isinstance(v, (int, float, np.number)) and not isinstance(v, bool) for v in obj):
            out.append("[")
            for i, v in enumerate(obj):
                _emit(v, indent, level + 1, out)
                if i < len(obj) - 1:
                    out.append(", ")
            out.append("]")
            return
        out.append("[\n")
        for i, v in enumerate(obj):
            out.append(pad)
            _emit(v, indent, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "]")
    else:
        raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(report: dict, indent: int = 2) -> str:
    """Deterministic JSON: insertion-ordered keys, floats with 17 significant
    digits, non-finite values as Infinity / NaN."""
    out: list[str] = []
    _emit(report, indent, 0, out)
    return "".join(out) + "\n"


def loads(text: str) -> dict:
    return json.loads(text)


# ---------------------------------------------------------------------------
# prose


def _fmt(v) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, float):
        return format(v, ".6g")
    if isinstance(v, list):
        return "(" + ", ".join(_fmt(x) for x in v) + ")"
    return str(v)


def _first_lines(fo: dict) -> list[str]:
    lines = [f"First-order conditions: {fo['overall']}"]
    for r in fo.get("reasons", []):
        lines.append(f"  - {r}")
    inner = fo.get("inner") or {}
    if inner.get("verdict") not in (None, "skipped"):
        lines.append(f"  inner stationarity (linearized y-direction test): {inner['verdict']}, "
                     f"max slope {_fmt(inner.get('value'))}")
        if inner.get("witness") is not None:
            lines.append(f"    ascent direction h = {_fmt(inner['witness'])}")
    outer = fo.get("outer") or {}
    dirs = outer.get("directions", [])
    if dirs:
        lines.append(f"  strong duality: {len(dirs)} sampled directions, "
                     f"max gap {_fmt(max(d['gap'] for d in dirs))}; outer test {outer.get('verdict')}")
        bad = [d for d in dirs if d["dual"] < -1e-7]
        for d in bad[:3]:
            lines.append(f"    u = {_fmt(d['u'])}: dual value {_fmt(d['dual'])}, primal {_fmt(d['primal'])}, "
                         f"gap {_fmt(d['gap'])}")
    mult = fo.get("multipliers")
    if mult is not None:
        lines.append(f"  first-order KKT multipliers: alpha = {_fmt(mult['alpha_ineq'] + mult['alpha_eq'])}, "
                     f"beta = {_fmt(mult['beta_ineq'] + mult['beta_eq'])}")
        kkt = fo.get("kkt") or {}
        if kkt:
            lines.append(f"    KKT residual {_fmt(kkt['stationarity'])} ({kkt['verdict']})")
    cq = fo.get("cq")
    if cq:
        lines.append(f"  constraint qualifications: MFCQ {cq['mfcq']['verdict']}, LICQ {cq['licq']['verdict']}, "
                     f"RCRCQ {cq['rcrcq']['verdict']}; inner gate {cq['inner_gate']}, outer gate {cq['outer_gate']}")
    return lines


def _second_lines(so: dict) -> list[str]:
    lines = [f"Second-order conditions: {so['overall']}"]
    for r in so.get("reasons", []):
        lines.append(f"  - {r}")
    sonc = so.get("inner_sonc")
    if sonc:
        lines.append(f"  inner second-order necessary condition: {sonc['verdict']}")
        if sonc.get("witness") is not None:
            lines.append(f"    witness h = {_fmt(sonc['witness'])}")
    crit = so.get("critical_directions", [])
    if not crit and so.get("inner_sonc") is not None:
        lines.append("  no critical directions among the sampled u")
    for d in crit:
        lines.append(f"  critical u = {_fmt(d['u'])}: SSOSC_u {d['ssosc_u']}, h* = {_fmt(d['best_h'])}, "
                     f"necessary quadratic form, best value {_fmt(d['best_value'])}, sufficient quadratic form, worst value {_fmt(d['worst_value'])}")
    if so.get("growth_claim"):
        lines.append("  second-order growth condition claimed")
    flags = [k for k in ("sampled_only", "quantifier_weakened") if so.get(k)]
    if flags:
        lines.append(f"  flags: {', '.join(flags)}")
    return lines


def _oracle_lines(orc: dict) -> list[str]:
    lines = [f"Grid oracle: {orc['verdict']} (kappa = {_fmt(orc['kappa'])})"]
    for r in orc.get("reasons", []):
        lines.append(f"  - {r}")
    calm = orc.get("calm_definition")
    if calm:
        for c in calm["checks"]:
            lines.append(f"  delta {_fmt(c['delta'])}: inner excess {_fmt(c['inner_worst'])}, "
                         f"outer margin {_fmt(c['outer_worst'])} ({c['verdict']})")
            for key in ("inner_witness", "outer_witness"):
                if c.get(key):
                    lines.append(f"    {key.replace('_', ' ')}: x = {_fmt(c[key]['x'])}, y = {_fmt(c[key]['y'])}")
    for g in orc.get("growth", []):
        lines.append(f"  growth at delta {_fmt(g['delta'])}: eps_hat {_fmt(g['eps_hat'])}, "
                     f"mu_hat {_fmt(g['mu_hat'])} ({g['verdict']})")
    for d in orc.get("derivatives", []):
        lines.append(f"  V'(u) at u = {_fmt(d['u'])}: finite difference {_fmt(d.get('estimate'))}, "
                     f"dual {_fmt(d.get('analytic'))} ({d['verdict']})")
    return lines


def render_text(report: dict) -> str:
    """Prose summary naming each condition and its witnesses."""
    pt = report.get("point", {})
    lines = [
        f"Candidate point x = {_fmt(pt.get('x'))}, y = {_fmt(pt.get('y'))}",
        f"Problem digest {report.get('problem_digest', '')[:16]}",
        f"Overall verdict: {report['overall']}",
    ]
    if report.get("first_order"):
        lines += [""] + _first_lines(report["first_order"])
    if report.get("second_order"):
        lines += [""] + _second_lines(report["second_order"])
    jac = report.get("jacobian")
    if jac:
        lines += ["", f"Jacobian uniqueness: {jac['overall']} (LICQ {jac['licq']}, strict complementarity "
                  f"{jac['strict_complementarity']}, SOSC {jac['sosc']})"]
    if report.get("oracle"):
        lines += [""] + _oracle_lines(report["oracle"])
    return "\n".join(lines) + "\n"


def validate_report(report) -> None:
    if not isinstance(report, dict):
        raise ValueError("report is not a JSON object")
    missing = [k for k in TOP_KEYS if k not in report]
    if missing:
        raise ValueError(f"report lacks keys {missing}")
    if report["schema"] != SCHEMA:
        raise ValueError(f"unsupported schema {report['schema']!r}")
    if report["overall"] not in RANKS:
        raise ValueError(f"unknown overall verdict {report['overall']!r}")
