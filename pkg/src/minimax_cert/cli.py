"""Command-line front end: ``certify``, ``oracle`` and ``explain``."""

from __future__ import annotations

import argparse
import json
import sys

from minimax_cert import report as rp
from minimax_cert.config import DEFAULT_STAGES, RunConfig
from minimax_cert.errors import CertError, DomainError, ModelError, OracleBudgetExceeded
from minimax_cert.first_order import first_order_certificate
from minimax_cert.multipliers import jacobian_uniqueness_check
from minimax_cert.oracle import run_oracle
from minimax_cert.problem import CandidatePoint, load_problem
from minimax_cert.second_order import second_order_certificate
from minimax_cert.cones import active_sets

EXIT_INPUT = 4
ORACLE_EXIT = {"pass": 0, "fail": 3, "degenerate": 2, "skipped": 2}


class InputError(Exception):
    pass


def _vector(text: str, name: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise InputError(f"--{name} must be comma-separated numbers, got {text!r}") from None


def _config(args) -> RunConfig:
    kw = dict(output_format=args.format, fail_fast=getattr(args, "fail_fast", False))
    if args.resolution is not None:
        kw["resolution"] = args.resolution
    if args.delta is not None:
        kw["deltas"] = _vector(args.delta, "delta")
    if args.kappa is not None:
        kw["kappa"] = args.kappa
    if args.budget is not None:
        kw["budget"] = args.budget
    stages = getattr(args, "stages", None)
    if stages is not None:
        kw["stages"] = tuple(s.strip() for s in stages.split(",") if s.strip())
    try:
        return RunConfig(**kw)
    except ValueError as err:
        raise InputError(str(err)) from None


def _load(args):
    try:
        spec = load_problem(args.problem)
    except OSError as err:
        raise InputError(f"cannot read {args.problem}: {err.strerror or err}") from None
    except ModelError as err:
        raise InputError(f"{args.problem}: {err}") from None
    x = _vector(args.x, "x") if args.x is not None else spec.point_x
    y = _vector(args.y, "y") if args.y is not None else spec.point_y
    if x is None or y is None:
        raise InputError("no candidate point: pass --x and --y or set point_x / point_y in the file")
    if len(x) != spec.n or len(y) != spec.m:
        raise InputError(f"point has dimensions ({len(x)}, {len(y)}), problem has ({spec.n}, {spec.m})")
    return spec, x, y


def run_certify(spec, x, y, cfg: RunConfig) -> dict:
    """Run the enabled stages in order first, second, jacobian, oracle."""
    stages: dict = {}
    verdicts: dict = {}
    try:
        p = CandidatePoint.at(spec, x, y)
    except DomainError as err:
        fo = {"overall": "refuted", "reasons": [f"point infeasible for evaluation: {err}"]}
        stages["first"] = fo
        verdicts["first"] = "refuted"
        return rp.build_report(spec.digest(), x, y, stages, "refuted", cfg.to_dict())

    def stop() -> bool:
        return cfg.fail_fast and any(rp.stage_rank(s, v) == "refuted" for s, v in verdicts.items())

    first = None
    if "first" in cfg.stages or "second" in cfg.stages:
        first = first_order_certificate(spec, p, cfg)
    if "first" in cfg.stages:
        stages["first"] = first.to_dict()
        verdicts["first"] = first.overall
    kappa = None
    if "second" in cfg.stages and not stop():
        second = second_order_certificate(spec, p, cfg, first)
        stages["second"] = second.to_dict()
        verdicts["second"] = second.overall
        if second.critical:
            kappa = second.kappa_estimate
    if "jacobian" in cfg.stages and not stop():
        try:
            jac = jacobian_uniqueness_check(spec, p, active_sets(spec, p, cfg.eps_act)).to_dict()
        except CertError as err:
            jac = {"overall": "fail", "reason": str(err), "licq": False, "strict_complementarity": False,
                   "sosc": False}
        stages["jacobian"] = jac
        verdicts["jacobian"] = jac["overall"]
    if "oracle" in cfg.stages and not stop():
        try:
            orc = run_oracle(spec, p, cfg, kappa).to_dict()
        except CertError as err:
            orc = {"verdict": "degenerate", "reasons": [str(err)], "kappa": cfg.kappa or kappa or 2.0,
                   "calm_definition": None, "growth": [], "derivatives": [], "notes": []}
        stages["oracle"] = orc
        verdicts["oracle"] = orc["verdict"]
    overall = rp.overall_verdict(verdicts) if verdicts else "inconclusive"
    return rp.build_report(spec.digest(), x, y, stages, overall, cfg.to_dict())


def cmd_certify(args) -> int:
    cfg = _config(args)
    spec, x, y = _load(args)
    report = run_certify(spec, x, y, cfg)
    sys.stdout.write(rp.dumps(report) if cfg.output_format == "json" else rp.render_text(report))
    return rp.exit_code(report["overall"])


def cmd_oracle(args) -> int:
    cfg = _config(args)
    spec, x, y = _load(args)
    try:
        p = CandidatePoint.at(spec, x, y)
        orc = run_oracle(spec, p, cfg).to_dict()
    except OracleBudgetExceeded as err:
        raise InputError(str(err)) from None
    except DomainError as err:
        raise InputError(f"point infeasible for evaluation: {err}") from None
    except CertError as err:
        orc = {"verdict": "degenerate", "reasons": [str(err)], "kappa": cfg.kappa or 2.0,
               "calm_definition": None, "growth": [], "derivatives": [], "notes": []}
    if cfg.output_format == "json":
        sys.stdout.write(rp.dumps(orc))
    else:
        sys.stdout.write("\n".join(rp._oracle_lines(orc)) + "\n")
    return ORACLE_EXIT[orc["verdict"]]


def cmd_explain(args) -> int:
    try:
        with open(args.report, encoding="utf-8") as fh:
            report = rp.loads(fh.read())
        rp.validate_report(report)
        text = rp.render_text(report)
    except OSError as err:
        raise InputError(f"cannot read {args.report}: {err.strerror or err}") from None
    except (ValueError, KeyError, TypeError, json.JSONDecodeError) as err:
        raise InputError(f"corrupt report {args.report}: {err}") from None
    sys.stdout.write(text)
    return 0


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("problem", help="problem file")
    p.add_argument("--x", help="outer point, comma-separated")
    p.add_argument("--y", help="inner point, comma-separated")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--resolution", type=int, help="grid points per axis (default 41)")
    p.add_argument("--delta", help="comma-separated radii (default 0.2,0.1,0.05)")
    p.add_argument("--kappa", type=float, help="calmness modulus for the grid oracle")
    p.add_argument("--budget", type=int, help="sampled directions per cone (default 64)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="minimax-cert",
        description="Certify first- and second-order conditions for calm local minimax points.",
        epilog="Exit codes: 0 sufficient-certified, 1 necessary-consistent, 2 inconclusive, 3 refuted, "
               "4 input error. MINIMAX_CERT_SEED fixes the sampling seed.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    c = sub.add_parser("certify", help="run the certification pipeline")
    _common(c)
    c.add_argument("--stages", default=",".join(DEFAULT_STAGES),
                   help="comma-separated subset of first,second,oracle,jacobian")
    c.add_argument("--fail-fast", action="store_true", help="stop after the first refuting stage")
    c.set_defaults(func=cmd_certify)
    o = sub.add_parser("oracle", help="grid oracle only")
    _common(o)
    o.set_defaults(func=cmd_oracle)
    e = sub.add_parser("explain", help="render a JSON report as prose")
    e.add_argument("report")
    e.set_defaults(func=cmd_explain)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else 0
    try:
        return args.func(args)
    except InputError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
