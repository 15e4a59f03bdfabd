"""Polak-Ribiere nonlinear conjugate gradient with backtracking line search."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class CGResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    iterations: int
    evaluations: int
    converged: bool
    message: str
    trace: list = field(default_factory=list)


def _backtrack(fun, x, f, slope, d, t, c1, max_backtracks):
    """Armijo backtracking with safeguarded quadratic interpolation."""
    evals = 0
    for _ in range(max_backtracks):
        xn = x + t * d
        fn, gn = fun(xn)
        evals += 1
        if np.isfinite(fn) and fn <= f + c1 * t * slope:
            return t, xn, fn, gn, evals
        if np.isfinite(fn):
            denom = 2.0 * (fn - f - slope * t)
            t_q = -slope * t * t / denom if denom > 0 else 0.5 * t
            t = min(0.5 * t, max(0.1 * t, t_q))
        else:
            t *= 0.1
    return None, x, f, None, evals


def minimize_cg(fun, x0, max_iter=500, gtol=1e-5, c1=1e-4, max_step=3.0,
                max_backtracks=50, relative_gtol=True):
    """Minimize ``fun`` from ``x0``.

    ``fun(x)`` returns ``(value, gradient)`` and may return ``inf`` for
    infeasible points; the line search backs off from those. Iteration stops
    when ``max|grad| < gtol * (1 + |value|)`` (or ``< gtol`` if
    ``relative_gtol`` is false), after ``max_iter`` iterations, or when a
    steepest-descent line search fails to make progress.
    ``max_step`` caps the per-coordinate move of the first trial step.
    """
    x = np.array(x0, dtype=float)
    f, g = fun(x)
    evals = 1
    if not np.isfinite(f):
        raise FloatingPointError("objective is not finite at the starting point")
    d = -g
    t_prev, slope_prev = None, None
    trace = [float(f)]
    message = "maximum iterations reached"
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        gnorm = np.max(np.abs(g)) if g.size else 0.0
        tol = gtol * (1.0 + abs(f)) if relative_gtol else gtol
        if gnorm < tol:
            converged = True
            message = "gradient tolerance reached"
            it -= 1
            break
        slope = float(g @ d)
        steepest = False
        if slope >= 0:
            d = -g
            slope = float(g @ d)
            steepest = True
        dmax = np.max(np.abs(d))
        if t_prev is None:
            t = min(1.0, max_step / dmax)
        else:
            t = min(t_prev * slope_prev / slope * 2.0, max_step / dmax)
        t_acc, xn, fn, gn, ne = _backtrack(fun, x, f, slope, d, t, c1, max_backtracks)
        evals += ne
        if t_acc is None:
            if steepest or np.array_equal(d, -g):
                message = "line search failed"
                break
            d = -g
            t_prev = None
            continue
        beta = float(gn @ (gn - g)) / float(g @ g) if g @ g > 0 else 0.0
        t_prev, slope_prev = t_acc, slope
        x, f, g = xn, fn, gn
        d = -g + max(beta, 0.0) * d
        trace.append(float(f))
    return CGResult(x=x, fun=float(f), grad=g, iterations=it, evaluations=evals,
                    converged=converged, message=message, trace=trace)
