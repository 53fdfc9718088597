"""Descent for scalar quasidifferentiable objectives.

The steepest-descent direction at a point comes from the pair geometry:
for each superdifferential generator w, project w onto the
subdifferential; the generator with the largest projection distance d
gives the direction (w - p)/d, along which the directional derivative is
at most -d.  Distance zero for every generator is exactly the
unconstrained optimality inclusion, so the stopping test and the checker
agree by construction.

The line search is plain Armijo backtracking on the exact directional
derivative.  No smoothness is assumed; on piecewise-linear objectives
iterates typically land near kinks, where the active-set tolerance folds
both branches into the pair and the stationarity test fires.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DimensionMismatchError
from .expr import Expr, eval_expr, qd_at
from .geometry import DEFAULT_TOL, Tolerance, nearest_point
from .qdcore import DEFAULT_EPS_ACTIVE, QuasiDiff, qd_eval_dir

__all__ = [
    "SolverParams",
    "IterateRecord",
    "SolverResult",
    "steepest_descent_direction",
    "minimize",
]

# Below this step the backtracking loop is declared failed.
_STEP_UNDERFLOW = 1e-16


@dataclass(frozen=True)
class SolverParams:
    """Knobs for minimize.  Defaults suit desk-scale piecewise problems."""

    max_iters: int = 500
    step_init: float = 1.0
    armijo_c: float = 1e-4
    shrink: float = 0.5
    stop_dist: float = 1e-8

    def __post_init__(self) -> None:
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if not (0.0 < self.armijo_c < 1.0):
            raise ValueError("armijo_c must be in (0, 1)")
        if not (0.0 < self.shrink < 1.0):
            raise ValueError("shrink must be in (0, 1)")
        if self.step_init <= 0.0:
            raise ValueError("step_init must be positive")
        if self.stop_dist <= 0.0:
            raise ValueError("stop_dist must be positive")


@dataclass(frozen=True, eq=False)
class IterateRecord:
    x: np.ndarray
    value: float
    descent_dist: float
    step: Optional[float]


@dataclass(frozen=True, eq=False)
class SolverResult:
    x: np.ndarray
    value: float
    status: str
    iterations: int
    trace: tuple[IterateRecord, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "x": self.x.tolist(),
            "value": self.value,
            "status": self.status,
            "iterations": self.iterations,
            "trace": [
                {
                    "x": r.x.tolist(),
                    "value": r.value,
                    "descent_dist": r.descent_dist,
                    "step": r.step,
                }
                for r in self.trace
            ],
        }


def steepest_descent_direction(
    q: QuasiDiff, tol: Tolerance = DEFAULT_TOL, stop_dist: float = 1e-8
) -> tuple[Optional[np.ndarray], float]:
    """Direction of steepest descent for a scalar pair, or stationarity.

    Returns (h, rate) with |h| = 1 and rate = f'(x; h) <= -d + eps, where
    d is the largest distance from a superdifferential generator to the
    subdifferential.  Returns (None, 0.0) when d <= stop_dist, which is
    the unconstrained optimality condition up to tolerance.
    """
    m, n = q.dims
    if m != 1:
        raise DimensionMismatchError(f"descent needs a scalar objective, got m = {m}")
    best: Optional[tuple[float, np.ndarray, np.ndarray]] = None
    for w in q.supd.gens:
        p, dist = nearest_point(q.subd, w)
        if best is None or dist > best[0]:
            best = (dist, w, p)
    assert best is not None
    dist, w, p = best
    if dist <= stop_dist:
        return None, 0.0
    h = ((w - p) / dist).ravel()
    rate = qd_eval_dir(q, h)[0]
    if rate > -dist + tol.eps_geom:
        raise RuntimeError(
            f"descent direction lost its rate: rate = {rate:.3e}, dist = {dist:.3e}"
        )
    return h, float(rate)


def minimize(
    e: Expr,
    x0,
    params: SolverParams = SolverParams(),
    tol: Tolerance = DEFAULT_TOL,
    eps_active: float = DEFAULT_EPS_ACTIVE,
    callback: Optional[Callable[[IterateRecord], None]] = None,
) -> SolverResult:
    """Armijo descent on a scalar expression.

    Each iteration takes the pair at the current point, extracts the
    steepest-descent direction, and backtracks until the decrease beats
    armijo_c * step * rate.  Terminates with status "stationary" when the
    projection distance drops below stop_dist, "max_iters" on the
    iteration cap, or "line_search_failure" when the step underflows
    (in exact arithmetic that cannot happen for rate < 0; in floats it
    flags evaluation noise around a kink).
    """
    if e.out_dim != 1:
        raise DimensionMismatchError(f"minimize needs a scalar objective, got m = {e.out_dim}")
    x = np.asarray(x0, dtype=float).ravel()
    if x.shape != (e.in_dim,):
        raise DimensionMismatchError(f"x0 must have shape ({e.in_dim},), got {x.shape}")
    trace: list[IterateRecord] = []

    def record(x, value, dist, step):
        rec = IterateRecord(x=x.copy(), value=value, descent_dist=dist, step=step)
        trace.append(rec)
        if callback is not None:
            callback(rec)

    fx = float(eval_expr(e, x)[0])
    for it in range(params.max_iters):
        q = qd_at(e, x, tol=tol, eps_active=eps_active)
        # Reuse the projection distance for both the stop test and the record.
        best_dist = 0.0
        for w in q.supd.gens:
            _, dist = nearest_point(q.subd, w)
            best_dist = max(best_dist, dist)
        if best_dist <= params.stop_dist:
            record(x, fx, best_dist, None)
            return SolverResult(x, fx, "stationary", it, tuple(trace))
        h, rate = steepest_descent_direction(q, tol, params.stop_dist)
        assert h is not None
        t = params.step_init
        accepted = False
        while t >= _STEP_UNDERFLOW:
            x_new = x + t * h
            f_new = float(eval_expr(e, x_new)[0])
            if f_new <= fx + params.armijo_c * t * rate:
                accepted = True
                break
            t *= params.shrink
        record(x, fx, best_dist, t if accepted else None)
        if not accepted:
            return SolverResult(x, fx, "line_search_failure", it, tuple(trace))
        x, fx = x_new, f_new
    record(x, fx, float("nan"), None)
    return SolverResult(x, fx, "max_iters", params.max_iters, tuple(trace))
