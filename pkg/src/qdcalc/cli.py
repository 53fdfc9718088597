"""Command line front end.

Problems are JSON files validated against the shipped schema; reports
come back as text or JSON with a stable key order.  Floats pass through
Python's shortest round-trip serialization, so a report re-read from
disk carries exactly the binary values the run produced.

Exit codes: 0 success (and condition holds for check), 1 condition
fails, 2 schema violation, 3 dimension error, 4 infeasible base point,
5 unsupported problem shape for the command (minimize needs a scalar
unconstrained objective).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from importlib import resources
from typing import Optional

import jsonschema
import numpy as np

from .errors import (
    CompositionBoundError,
    DimensionMismatchError,
    InfeasiblePointError,
    SchemaError,
    UnsupportedDimensionError,
)
from .expr import (
    Expr,
    dini_convergence,
    dini_fd,
    eval_expr,
    expr_from_json,
    qd_at,
)
from .geometry import DEFAULT_TOL, OperatorPolytope, PolyCone, Tolerance, coordinate_rows
from .optimality import (
    ConstraintSystem,
    Verdict,
    check_combined,
    check_generalized,
    check_inequality_constrained,
    check_set_constrained,
    check_unconstrained,
    quasiregularity_diagnostic,
)
from .qdcore import DEFAULT_EPS_ACTIVE, QuasiDiff, qd_eval_dir
from .solver import SolverParams, minimize

__all__ = ["main", "load_problem", "cmd_qd", "cmd_check", "cmd_minimize"]

logger = logging.getLogger("qdcalc")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_SCHEMA = 2
EXIT_DIMENSION = 3
EXIT_INFEASIBLE = 4
EXIT_UNSUPPORTED = 5

_FD_DIRECTIONS = 20


def _problem_schema() -> dict:
    path = resources.files("qdcalc").joinpath("schemas/problem.schema.json")
    with path.open("r", encoding="utf-8") as f:
        return json.load(f)


@dataclass(frozen=True, eq=False)
class Problem:
    n: int
    m: int
    objective: Expr
    constraints: tuple[Expr, ...]
    set_cone: Optional[PolyCone]
    point: np.ndarray
    generalized_points: Optional[tuple[np.ndarray, ...]]
    options: dict


@dataclass(frozen=True)
class Options:
    """Resolved tolerances and solver knobs: defaults < file < flags."""

    tol: Tolerance
    eps_active: float
    max_iters: int
    step_init: float
    seed: int

    def to_dict(self) -> dict:
        return {
            "tol_geom": self.tol.eps_geom,
            "tol_active": self.eps_active,
            "max_iters": self.max_iters,
            "step_init": self.step_init,
            "seed": self.seed,
        }


def load_problem(path: str) -> Problem:
    """Read, schema-validate, and dimension-check a problem file."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(raw, _problem_schema(),
                            cls=jsonschema.Draft202012Validator)
    except jsonschema.ValidationError as exc:
        raise SchemaError(f"problem file rejected: {exc.message}") from exc
    n, m = raw["n"], raw["m"]
    objective = expr_from_json(raw["objective"])
    if objective.in_dim != n or objective.out_dim != m:
        raise DimensionMismatchError(
            f"objective maps R^{objective.in_dim} -> R^{objective.out_dim}, "
            f"problem declares n={n}, m={m}"
        )
    constraints = []
    for i, cj in enumerate(raw.get("constraints", [])):
        g = expr_from_json(cj)
        if g.in_dim != n:
            raise DimensionMismatchError(f"constraint {i} has input dim {g.in_dim}, expected {n}")
        constraints.append(g)
    set_cone = None
    if "set_cone" in raw:
        gens = np.asarray(raw["set_cone"]["generators"], dtype=float)
        if gens.size and gens.shape[1] != n:
            raise DimensionMismatchError(
                f"set cone generators live in R^{gens.shape[1]}, expected R^{n}"
            )
        set_cone = (
            PolyCone.from_generators(gens[:, None, :]) if gens.size else PolyCone.trivial(1, n)
        )
    point = np.asarray(raw["point"], dtype=float)
    if point.shape != (n,):
        raise DimensionMismatchError(f"point has length {point.shape[0]}, expected {n}")
    gpoints = None
    if "generalized_points" in raw:
        gp = [np.asarray(p, dtype=float) for p in raw["generalized_points"]]
        for i, p in enumerate(gp):
            if p.shape != (n,):
                raise DimensionMismatchError(
                    f"generalized point {i} has length {p.shape[0]}, expected {n}"
                )
        gpoints = tuple(gp)
    return Problem(
        n=n,
        m=m,
        objective=objective,
        constraints=tuple(constraints),
        set_cone=set_cone,
        point=point,
        generalized_points=gpoints,
        options=dict(raw.get("options", {})),
    )


def _resolve_options(problem: Problem, args: argparse.Namespace) -> Options:
    opts = problem.options
    tol_geom = args.tol_geom if args.tol_geom is not None else opts.get("tol_geom", 1e-9)
    eps_active = args.tol_active if args.tol_active is not None else opts.get("tol_active", DEFAULT_EPS_ACTIVE)
    max_iters = args.max_iters if getattr(args, "max_iters", None) is not None else opts.get("max_iters", 500)
    step_init = args.step_init if getattr(args, "step_init", None) is not None else opts.get("step_init", 1.0)
    seed = args.seed if args.seed is not None else opts.get("seed", 0)
    return Options(
        tol=Tolerance(eps_geom=tol_geom),
        eps_active=eps_active,
        max_iters=max_iters,
        step_init=step_init,
        seed=seed,
    )


def _pair_dict(q: QuasiDiff) -> dict:
    return {"subd": q.subd.gens.tolist(), "supd": q.supd.gens.tolist()}


def _constraint_rows(
    problem: Problem, x: np.ndarray, opt: Options
) -> tuple[list[QuasiDiff], list[float]]:
    """Per-coordinate scalar pairs and values of every constraint."""
    rows: list[QuasiDiff] = []
    vals: list[float] = []
    for g in problem.constraints:
        q = qd_at(g, x, tol=opt.tol, eps_active=opt.eps_active)
        v = eval_expr(g, x)
        for j in range(g.out_dim):
            rows.append(QuasiDiff(coordinate_rows(q.subd, j), coordinate_rows(q.supd, j)))
            vals.append(float(v[j]))
    return rows, vals


# ---------------------------------------------------------------------------
# commands

def cmd_qd(problem: Problem, opt: Options, point: Optional[np.ndarray] = None) -> dict:
    """Quasidifferentials of objective and constraints, plus FD residuals."""
    x = problem.point if point is None else point
    if x.shape != (problem.n,):
        raise DimensionMismatchError(f"point has length {x.shape[0]}, expected {problem.n}")
    q = qd_at(problem.objective, x, tol=opt.tol, eps_active=opt.eps_active)
    rng = np.random.default_rng(opt.seed)
    max_resid = 0.0
    max_gap = 0.0
    for _ in range(_FD_DIRECTIONS):
        h = rng.standard_normal(problem.n)
        d_qd = qd_eval_dir(q, h)
        d_fd = dini_fd(problem.objective, x, h)
        max_resid = max(max_resid, float(np.max(np.abs(d_qd - d_fd))))
        max_gap = max(max_gap, dini_convergence(problem.objective, x, h))
    report = {
        "command": "qd",
        "options": opt.to_dict(),
        "point": x.tolist(),
        "objective": _pair_dict(q),
        "constraints": [
            _pair_dict(qd_at(g, x, tol=opt.tol, eps_active=opt.eps_active))
            for g in problem.constraints
        ],
        "fd_diagnostic": {
            "directions": _FD_DIRECTIONS,
            "max_residual": max_resid,
            "max_convergence_gap": max_gap,
        },
    }
    return report


def cmd_check(problem: Problem, opt: Options) -> dict:
    """Dispatch to the matching optimality condition and report the verdict."""
    x = problem.point
    if problem.generalized_points is not None:
        points = problem.generalized_points
        qds = [
            qd_at(problem.objective, p, tol=opt.tol, eps_active=opt.eps_active) for p in points
        ]
        values = np.array([eval_expr(problem.objective, p) for p in points])
        cones = None
        if problem.set_cone is not None:
            cones = [problem.set_cone] * len(points)
        verdict = check_generalized(
            points, qds, values, cones, tol=opt.tol, eps_active=opt.eps_active
        )
        return {
            "command": "check",
            "options": opt.to_dict(),
            "mode": "generalized",
            "points": [p.tolist() for p in points],
            "values": values.tolist(),
            "verdict": verdict.to_dict(),
        }
    qf = qd_at(problem.objective, x, tol=opt.tol, eps_active=opt.eps_active)
    quasireg = None
    if problem.constraints:
        rows, vals = _constraint_rows(problem, x, opt)
        cs = ConstraintSystem(tuple(rows), np.array(vals), set_cone=problem.set_cone)
        if problem.set_cone is not None:
            mode = "combined"
            verdict = check_combined(qf, cs, tol=opt.tol, eps_active=opt.eps_active)
        else:
            mode = "inequality_constrained"
            verdict = check_inequality_constrained(qf, cs, tol=opt.tol, eps_active=opt.eps_active)
        quasireg = quasiregularity_diagnostic(rows, tol=opt.tol).to_dict()
    elif problem.set_cone is not None:
        mode = "set_constrained"
        verdict = check_set_constrained(qf, problem.set_cone, tol=opt.tol)
    else:
        mode = "unconstrained"
        verdict = check_unconstrained(qf, tol=opt.tol)
    logger.info("check mode %s: holds=%s", mode, verdict.holds)
    report = {
        "command": "check",
        "options": opt.to_dict(),
        "mode": mode,
        "point": x.tolist(),
        "verdict": verdict.to_dict(),
    }
    if quasireg is not None:
        report["quasiregularity"] = quasireg
    return report


def cmd_minimize(problem: Problem, opt: Options) -> dict:
    """Descent run plus a final stationarity check."""
    params = SolverParams(max_iters=opt.max_iters, step_init=opt.step_init)
    result = minimize(
        problem.objective, problem.point, params, tol=opt.tol, eps_active=opt.eps_active
    )
    final_q = qd_at(problem.objective, result.x, tol=opt.tol, eps_active=opt.eps_active)
    final_verdict = check_unconstrained(final_q, tol=opt.tol)
    f0 = float(eval_expr(problem.objective, problem.point)[0])
    solver = result.to_dict()
    solver["f_initial"] = f0
    return {
        "command": "minimize",
        "options": opt.to_dict(),
        "point": problem.point.tolist(),
        "solver": solver,
        "final_check": final_verdict.to_dict(),
    }


# ---------------------------------------------------------------------------
# rendering

def _fmt_op(gen) -> str:
    return json.dumps(gen)


def render_text(report: dict) -> str:
    lines = [f"qdcalc {report['command']}"]
    if "point" in report:
        lines.append(f"point: {json.dumps(report['point'])}")
    if report["command"] == "qd":
        for label in ("objective", "constraints"):
            pairs = [report[label]] if label == "objective" else report[label]
            for i, pair in enumerate(pairs):
                name = label if label == "objective" else f"constraint {i}"
                lines.append(f"{name} subdifferential ({len(pair['subd'])} generators):")
                lines.extend(f"  {_fmt_op(g)}" for g in pair["subd"])
                lines.append(f"{name} superdifferential ({len(pair['supd'])} generators):")
                lines.extend(f"  {_fmt_op(g)}" for g in pair["supd"])
        fd = report["fd_diagnostic"]
        lines.append(
            f"fd residual over {fd['directions']} directions: max {fd['max_residual']:.3e} "
            f"(convergence gap {fd['max_convergence_gap']:.3e})"
        )
    elif report["command"] == "check":
        lines.append(f"mode: {report['mode']}")
        v = report["verdict"]
        lines.append(f"verdict: {'holds' if v['holds'] else 'fails'}")
        if v["witness"] is not None:
            w = v["witness"]
            where = f" at point {w['point_index']}" if "point_index" in w else ""
            lines.append(
                f"witness{where}: coordinate {w['coordinate']}, generator {_fmt_op(w['generator'])}"
            )
            lines.append(
                f"descent direction {json.dumps(w['direction'])} with rate {w['rate']:.6g}"
            )
        if v["certificates"]:
            lines.append(f"certificates: {len(v['certificates'])}")
        if "quasiregularity" in report:
            qr = report["quasiregularity"]
            state = "vacuous" if qr["vacuous"] else ("regular" if qr["regular"] else "NOT regular")
            lines.append(f"quasiregularity diagnostic: {state}")
    else:
        s = report["solver"]
        lines.append(f"status: {s['status']} after {s['iterations']} iterations")
        lines.append(f"final x: {json.dumps(s['x'])}")
        lines.append(f"final value: {s['value']!r} (from {s['f_initial']!r})")
        fc = report["final_check"]
        lines.append(f"final stationarity check: {'holds' if fc['holds'] else 'fails'}")
    return "\n".join(lines)


def _emit(report: dict, fmt: str) -> None:
    if fmt == "json":
        print(json.dumps(report, indent=2, sort_keys=True))
    else:
        print(render_text(report))


# ---------------------------------------------------------------------------
# argument parsing

def _parse_point(text: str) -> np.ndarray:
    try:
        return np.array([float(t) for t in text.split(",")], dtype=float)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a comma-separated vector: {text!r}") from exc


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("file", help="problem JSON file")
    common.add_argument("--tol-geom", type=float, default=None, help="LP feasibility slack")
    common.add_argument("--tol-active", type=float, default=None, help="active-set threshold")
    common.add_argument("--seed", type=int, default=None, help="seed for diagnostic directions")
    common.add_argument("--format", choices=("text", "json"), default="text")
    parser = argparse.ArgumentParser(
        prog="qdcalc",
        description="Quasidifferential calculus: derive pairs, check optimality, minimize.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_qd = sub.add_parser("qd", parents=[common], help="print quasidifferentials at a point")
    p_qd.add_argument("--point", type=_parse_point, default=None, help="override point v1,v2,...")
    sub.add_parser("check", parents=[common], help="check the matching optimality condition")
    p_min = sub.add_parser("minimize", parents=[common], help="steepest-descent minimization")
    p_min.add_argument("--max-iters", type=int, default=None)
    p_min.add_argument("--step-init", type=float, default=None)
    return parser


def _configure_logging() -> None:
    level = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("QDCALC_LOG", "error"), logging.ERROR
    )
    logging.basicConfig(level=level, format="%(name)s %(levelname)s %(message)s")


def main(argv: Optional[list[str]] = None) -> int:
    _configure_logging()
    args = _build_parser().parse_args(argv)
    try:
        problem = load_problem(args.file)
        opt = _resolve_options(problem, args)
        if args.command == "qd":
            report = cmd_qd(problem, opt, point=args.point)
            code = EXIT_OK
        elif args.command == "check":
            report = cmd_check(problem, opt)
            code = EXIT_OK if report["verdict"]["holds"] else EXIT_CHECK_FAILED
        else:
            if problem.m != 1 or problem.constraints or problem.set_cone is not None \
                    or problem.generalized_points is not None:
                print(
                    "error: minimize needs a scalar unconstrained objective", file=sys.stderr
                )
                return EXIT_UNSUPPORTED
            report = cmd_minimize(problem, opt)
            code = EXIT_OK
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (DimensionMismatchError, UnsupportedDimensionError, CompositionBoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIMENSION
    except InfeasiblePointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    _emit(report, args.format)
    return code


if __name__ == "__main__":
    sys.exit(main())
