"""Small numerical helpers: bracketed Newton, Gauss-Legendre panels, power-law fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import ConvergenceError

NEWTON_TOL = 1e-14
NEWTON_MAXITER = 200


def bracketed_newton(f, df, lo, hi, x0=None, tol=NEWTON_TOL, maxiter=NEWTON_MAXITER):
    """Root of a monotone ``f`` on ``[lo, hi]``; Newton steps fall back to bisection.

    Returns ``(root, residual)``. Raises ConvergenceError if the bracket does
    not shrink below ``tol`` (absolute) within ``maxiter`` iterations.
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo, 0.0
    if fhi == 0.0:
        return hi, 0.0
    if flo * fhi > 0:
        raise ConvergenceError(f"root not bracketed on [{lo}, {hi}]", min(abs(flo), abs(fhi)))
    increasing = fhi > 0
    x = 0.5 * (lo + hi) if x0 is None else min(max(x0, lo), hi)
    fx = f(x)
    for _ in range(maxiter):
        if fx == 0.0:
            return x, 0.0
        if (fx > 0) == increasing:
            hi = x
        else:
            lo = x
        d = df(x)
        step_ok = d != 0.0 and math.isfinite(d)
        xn = x - fx / d if step_ok else 0.5 * (lo + hi)
        if not (lo < xn < hi):
            xn = 0.5 * (lo + hi)
        if abs(xn - x) <= tol or hi - lo <= tol:
            x = xn
            fx = f(x)
            return x, abs(fx)
        x = xn
        fx = f(x)
    raise ConvergenceError("bracketed Newton did not converge", abs(fx))


_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def gauss_legendre(order):
    if order not in _GL_CACHE:
        _GL_CACHE[order] = np.polynomial.legendre.leggauss(order)
    return _GL_CACHE[order]


def panel_quadrature(f, edges, order=8):
    """Composite Gauss-Legendre over consecutive ``edges``; ``f`` is vectorized."""
    nodes, weights = gauss_legendre(order)
    edges = np.asarray(edges, dtype=float)
    a, b = edges[:-1, None], edges[1:, None]
    half = 0.5 * (b - a)
    x = (a + b) * 0.5 + half * nodes[None, :]
    vals = np.asarray(f(x.ravel()), dtype=float).reshape(x.shape)
    return float(math.fsum((half * weights[None, :] * vals).ravel()))


def adaptive_gauss_legendre(f, a, b, order=64, tol=1e-10, max_panels=4096):
    """Gauss-Legendre with panel doubling until successive results agree to ``tol``.

    Returns ``(value, last_change)``; raises ConvergenceError past ``max_panels``.
    """
    panels = 1
    prev = panel_quadrature(f, np.linspace(a, b, panels + 1), order)
    while True:
        panels *= 2
        cur = panel_quadrature(f, np.linspace(a, b, panels + 1), order)
        change = abs(cur - prev)
        if change <= tol * max(1.0, abs(cur)):
            return cur, change
        if panels >= max_panels:
            raise ConvergenceError("panel refinement exhausted", change)
        prev = cur


@dataclass
class PowerFit:
    exponent: float
    intercept: float
    r2: float
    stderr: float
    fit_range: tuple[float, float]
    n_points: int
    extra: dict = field(default_factory=dict)


def loglog_fit(x, y):
    """Least-squares line through (log x, log y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    mask = (x > 0) & (y > 0) & np.isfinite(y)
    lx, ly = np.log(x[mask]), np.log(y[mask])
    if lx.size < 2:
        raise ValueError("need at least two positive points for a log-log fit")
    res = stats.linregress(lx, ly)
    return PowerFit(
        exponent=float(res.slope),
        intercept=float(res.intercept),
        r2=float(res.rvalue**2),
        stderr=float(res.stderr),
        fit_range=(float(x[mask].min()), float(x[mask].max())),
        n_points=int(lx.size),
    )


def log_grid(lo, hi, num):
    """Distinct integers spaced roughly geometrically in ``[lo, hi]``."""
    g = np.unique(np.round(np.geomspace(lo, hi, num)).astype(np.int64))
    return g[(g >= lo) & (g <= hi)]
