"""Pikovsky maps g_alpha and a concrete Grassman-Horner representative h.

Pikovsky maps are given implicitly on (0, 1] by

    x = (1 + g)**a / (2a)            for 0 <= x <= 1/(2a)      (inner branch)
    x = g + (1 - g)**a / (2a)        for 1/(2a) <= x <= 1      (outer branch)

and extended to [-1, 0) by g(-x) = -g(x). The inner branch has an explicit
inverse; the outer branch is solved by bracketed Newton in the coordinate
s = 1 - g, which keeps full relative accuracy next to the neutral point 1.

The GH representative is exact on (0, eps] (1 - b x**k) and on [1 - rho, 1]
(-x + a (1 - x)**gamma). In between, |h'|**(-1/2) follows a convex expm1 profile:
C^1 at both junctions, convex, |h'| > 1, and with negative Schwarzian on the
glue. The I^- branch is the mirror image, so h is even.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Literal

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.optimize import brentq

from . import _kernels as K
from .errors import BranchDomainError, ConvergenceError, GlueValidationError, SingularPointError, ValidationError

SINGULAR_TOL = K.SINGULAR_TOL
RESIDUAL_TOL = 1e-12
FD_THIRD_STEP = 1e-5

# --------------------------------------------------------------------- types


@dataclass(frozen=True)
class PikParams:
    """Pikovsky exponent. ``alpha == 1`` (doubling map) needs ``sanity=True``."""

    alpha: float
    sanity: bool = False

    def __post_init__(self):
        a = float(self.alpha)
        if not math.isfinite(a) or a < 1.0 or a >= 3.0:
            raise ValidationError(f"alpha must lie in [1, 3), got {self.alpha}")
        if a == 1.0 and not self.sanity:
            raise ValidationError("alpha = 1 is the doubling-map sanity case; pass sanity=True")


@dataclass(frozen=True)
class GlueSpec:
    """Widths of the exact local regions near 0 (eps) and near 1 (rho).

    ``None`` selects the pair from ``candidates`` that validates with the
    gentlest glue profile; explicit widths are validated as given.
    """

    eps: float | None = None
    rho: float | None = None
    candidates: tuple[float, ...] = tuple(2.0**-j for j in range(2, 9))


@dataclass(frozen=True)
class GHParams:
    gamma: float
    k: float
    a: float
    b: float
    glue: GlueSpec = field(default_factory=GlueSpec)

    def __post_init__(self):
        g, k, a, b = (float(v) for v in (self.gamma, self.k, self.a, self.b))
        if not (1.0 < g <= 2.0):
            raise ValidationError(f"gamma must lie in (1, 2], got {g}")
        if not (0.0 < k < 1.0):
            raise ValidationError(f"k must lie in (0, 1), got {k}")
        if not (a > 0 and b > 0):
            raise ValidationError("a and b must be positive")
        if not k * (g - 1.0) < 1.0:
            raise ValidationError("need k (gamma - 1) < 1")

    @property
    def zeta(self):
        return self.k * (self.gamma - 1.0)

    def key(self):
        return (float(self.gamma), float(self.k), float(self.a), float(self.b))


@dataclass(frozen=True)
class BranchId:
    side: Literal["minus", "plus"]
    sub: Literal["inner", "outer"] | None = None

    def __post_init__(self):
        if self.side not in ("minus", "plus"):
            raise ValidationError(f"unknown side {self.side!r}")
        if self.sub not in (None, "inner", "outer"):
            raise ValidationError(f"unknown sub-branch {self.sub!r}")


PLUS_INNER = BranchId("plus", "inner")
PLUS_OUTER = BranchId("plus", "outer")
MINUS_INNER = BranchId("minus", "inner")
MINUS_OUTER = BranchId("minus", "outer")


@dataclass(frozen=True, eq=False)
class GHMap:
    params: GHParams
    eps: float
    rho: float
    glue_lambda: float
    q0: float
    q1: float
    vec: np.ndarray = field(repr=False)
    cheb: np.ndarray = field(repr=False)
    report: dict = field(repr=False, default_factory=dict)

    @property
    def x1_plus(self):
        """The zero of h on (0, 1]: right end of Delta_0^+."""
        return float(K.gh_inv_plus(self.vec, self.cheb, 0.0))


# ------------------------------------------------------------------ helpers


def _as_array(x):
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


def _check_singular(arr):
    if np.any(np.abs(arr) < SINGULAR_TOL):
        raise SingularPointError("evaluation at the singular point 0")


def _alpha(p):
    return float(p.alpha if isinstance(p, PikParams) else p)


# ----------------------------------------------------------------- Pikovsky


def pik_x_of_g(alpha, g):
    """Right-hand side of the implicit equation on (0, 1]: x as a function of g."""
    a = float(alpha)
    g = np.asarray(g, dtype=float)
    return np.where(g <= 0.0, (1.0 + g) ** a / (2 * a), g + np.clip(1.0 - g, 0.0, None) ** a / (2 * a))


def pik_forward(p: PikParams, x):
    """g_alpha(x), scalar or array. Raises at the singular point 0."""
    a = _alpha(p)
    arr, scalar = _as_array(x)
    if np.any(np.abs(arr) > 1.0):
        raise BranchDomainError("x must lie in [-1, 1]")
    _check_singular(arr)
    flat = arr.ravel().astype(float)
    y = K.pik_fwd_array(a, flat)
    ay, ax = np.abs(y), np.abs(flat)
    resid = np.abs(pik_x_of_g(a, np.where(np.sign(y) == np.sign(flat), ay, -ay)) - ax)
    worst = float(resid.max()) if resid.size else 0.0
    if not np.all(np.isfinite(y)) or worst > RESIDUAL_TOL:
        raise ConvergenceError("Pikovsky forward solve failed", worst)
    y = y.reshape(arr.shape)
    return float(y) if scalar else y


def pik_forward_residual(p: PikParams, x, y):
    """|x - x(g)| for the implicit equation, odd-extended."""
    a = _alpha(p)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.abs(pik_x_of_g(a, np.sign(x) * y) - np.abs(x))


def pik_inverse(p: PikParams, y, branch: BranchId):
    """Closed-form preimage of y on the requested smoothness branch."""
    a = _alpha(p)
    arr, scalar = _as_array(y)
    if branch.sub is None:
        raise ValidationError("Pikovsky branches need sub='inner' or 'outer'")
    v = arr if branch.side == "plus" else -arr
    if branch.sub == "inner":
        if np.any((v < -1.0) | (v > 0.0)):
            raise BranchDomainError(f"y outside the image of {branch}")
        x = (1.0 + v) ** a / (2 * a)
    else:
        if np.any((v < 0.0) | (v > 1.0)):
            raise BranchDomainError(f"y outside the image of {branch}")
        x = v + (1.0 - v) ** a / (2 * a)
    if branch.side == "minus":
        x = -x
    return float(x) if scalar else x


def _pik_derivs(p, x):
    a = _alpha(p)
    arr, scalar = _as_array(x)
    _check_singular(arr)
    out = np.array([K.pik_derivs(a, float(v)) for v in arr.ravel()]).reshape(arr.shape + (3,))
    return out, scalar


def pik_derivative(p: PikParams, x):
    """g'(x) = 1 / (dx/dg) on the branch containing x."""
    out, scalar = _pik_derivs(p, x)
    d = out[..., 1]
    return float(d) if scalar else d


def pik_second_derivative(p: PikParams, x):
    out, scalar = _pik_derivs(p, x)
    d = out[..., 2]
    return float(d) if scalar else d


def pik_third_derivative(p: PikParams, x, step=FD_THIRD_STEP):
    """Central difference of the analytic second derivative, step scaled by 1 + |x|."""
    arr, scalar = _as_array(x)
    h = step * (1.0 + np.abs(arr))
    d = (pik_second_derivative(p, arr + h) - pik_second_derivative(p, arr - h)) / (2 * h)
    return float(d) if scalar else d


def pik_third_derivative_exact(p: PikParams, x):
    """Closed-form g''' from implicit differentiation (used as a cross-check)."""
    a = _alpha(p)
    arr, scalar = _as_array(x)
    ax = np.abs(arr)
    g = np.asarray(pik_forward(p, ax))
    inner = ax <= 0.5 / a
    u = np.where(inner, 1.0 + g, 1.0 - g)
    x1 = np.where(inner, 0.5 * u ** (a - 1), 1 - 0.5 * u ** (a - 1))
    x2 = 0.5 * (a - 1) * u ** (a - 2)
    x3 = np.where(inner, 1.0, -1.0) * 0.5 * (a - 1) * (a - 2) * u ** (a - 3)
    d3 = -x3 / x1**4 + 3 * x2**2 / x1**5
    return float(d3) if scalar else d3


def pik_schwarzian(p: PikParams, x):
    out, scalar = _pik_derivs(p, x)
    d1, d2 = out[..., 1], out[..., 2]
    d3 = pik_third_derivative(p, x)
    s = d3 / d1 - 1.5 * (d2 / d1) ** 2
    return float(s) if scalar else s


# ----------------------------------------------------------------------- GH


def _local_data(p: GHParams, eps, rho):
    g, k, a, b = p.key()
    v0 = 1 - b * eps**k
    d0 = -b * k * eps ** (k - 1)
    v1 = -(1 - rho) + a * rho**g
    d1 = -1 - a * g * rho ** (g - 1)
    return v0, d0, v1, d1


def _glue_profile(lam, s):
    return s if lam < 1e-10 else np.expm1(lam * s) / np.expm1(lam)


def _solve_glue(p: GHParams, eps, rho):
    """Glue exponent for the given widths, or a (condition, witness) failure."""
    if not (0 < eps < 1 - rho < 1):
        return None, ("region widths overlap", eps)
    v0, d0, v1, d1 = _local_data(p, eps, rho)
    q0, q1 = (-d0) ** -0.5, (-d1) ** -0.5
    if not q0 < q1:
        return None, ("convexity: |h'| must decrease across the glue", eps)
    if not q1 < 1:
        return None, ("condition (i), derivative interpretation: |h'| > 1", 1 - rho)
    L = 1 - rho - eps
    target = (v0 - v1) / L
    nodes, weights = np.polynomial.legendre.leggauss(200)
    s = 0.5 * (nodes + 1)
    w = 0.5 * weights

    def mean_slope(lam):
        return float(np.sum(w / (q0 + (q1 - q0) * _glue_profile(lam, s)) ** 2))

    lo_val, hi_val = 1 / (q0 * q1), 1 / q0**2
    if not (lo_val < target < hi_val):
        return None, ("mean slope of glue outside the convex range", 0.5 * (eps + 1 - rho))
    if abs(mean_slope(0.0) - target) < 1e-15:
        return (0.0, q0, q1, v0, L), None
    lam_hi = 1.0
    while mean_slope(lam_hi) < target:
        lam_hi *= 2
        if lam_hi > 200:
            return None, ("glue too steep", 1 - rho)
    lam = brentq(lambda l: mean_slope(l) - target, 0.0, lam_hi, xtol=1e-15, rtol=1e-15)
    return (lam, q0, q1, v0, L), None


def _glue_chebyshev(lam, q0, q1, deg=None):
    """Chebyshev coefficients (on s in [-1, 1] mapped to [0, 1]) of int_0^s q^-2."""
    def integrand(y):
        s = 0.5 * (y + 1)
        return 1.0 / (q0 + (q1 - q0) * _glue_profile(lam, s)) ** 2

    for d in (32, 48, 64, 96, 128, 192, 256) if deg is None else (deg,):
        c = C.chebinterpolate(integrand, d)
        if np.max(np.abs(c[-4:])) < 1e-15 * np.max(np.abs(c)):
            break
    prim = C.chebint(c, lbnd=-1) * 0.5  # d/ds = 2 d/dy
    keep = np.nonzero(np.abs(prim) > 1e-18 * np.max(np.abs(prim)))[0]
    return prim[: keep[-1] + 1]


def _assemble(p: GHParams, eps, rho, sol):
    lam, q0, q1, v0, L = sol
    cheb = _glue_chebyshev(lam, q0, q1)
    vec = np.zeros(K.GH_NFIELDS)
    vec[[K.GH_GAMMA, K.GH_K, K.GH_A, K.GH_B]] = p.key()
    vec[K.GH_EPS], vec[K.GH_RHO], vec[K.GH_V0], vec[K.GH_L] = eps, rho, v0, L
    vec[K.GH_Q0], vec[K.GH_DQ], vec[K.GH_LAM], vec[K.GH_NCHEB] = q0, q1 - q0, lam, len(cheb)
    return vec, np.ascontiguousarray(cheb)


def validate_gh(vec, cheb, n_grid=10_000, margin=1e-9):
    """Sampled checks of continuity, monotonicity, convexity and expansion.

    Returns a report dict; ``report['ok']`` is False with a witness on failure.
    """
    eps, rho = vec[K.GH_EPS], vec[K.GH_RHO]
    xs = np.linspace(0, 1, n_grid + 2)[1:-1]
    vals = np.array([K.gh_plus_derivs(vec, cheb, x) for x in xs])
    h, d1, d2 = vals[:, 0], vals[:, 1], vals[:, 2]
    report = {"ok": True, "checks": {}}

    def record(name, ok, witness=None):
        report["checks"][name] = {"ok": bool(ok), "witness": None if witness is None else float(witness)}
        if not ok:
            report["ok"] = False

    jumps = []
    for xb in (eps, 1 - rho):
        lo = K.gh_plus_derivs(vec, cheb, xb * (1 - 1e-12))
        hi = K.gh_plus_derivs(vec, cheb, xb * (1 + 1e-12))
        jumps.append((xb, abs(lo[0] - hi[0]), abs(lo[1] - hi[1]) / abs(hi[1])))
    bad = [j for j in jumps if j[1] > 1e-9 or j[2] > 1e-6]
    record("C1 matching at region boundaries", not bad, bad[0][0] if bad else None)
    dec = np.diff(h) < 0
    record("strictly decreasing on I+ (increasing on I-)", dec.all(), xs[np.argmin(dec)] if not dec.all() else None)
    cvx = d2 > 0
    record("convex on each half", cvx.all(), xs[np.argmin(cvx)] if not cvx.all() else None)
    interior = xs < 1 - 1e-6
    exp_ok = np.abs(d1[interior]) > 1 + margin
    record("condition (i), derivative interpretation: |h'| > 1", exp_ok.all(),
           xs[interior][np.argmin(exp_ok)] if not exp_ok.all() else None)
    ends = abs(K.gh_plus(vec, cheb, 1.0) + 1.0) < 1e-14 and abs(K.gh_plus(vec, cheb, 1e-300) - 1.0) < 1e-12
    record("h(1) = -1 and h(0+) = 1", ends, 1.0 if not ends else None)
    report["eps"] = float(eps)
    report["rho"] = float(rho)
    report["glue_lambda"] = float(vec[K.GH_LAM])
    report["reading"] = "h(0-) = h(0+) = 1; h even; I- branch increasing from -1 to 1"
    return report


@lru_cache(maxsize=512)
def _gh_build_cached(p: GHParams) -> GHMap:
    if p.glue.eps is not None or p.glue.rho is not None:
        if p.glue.eps is None or p.glue.rho is None:
            raise ValidationError("give both eps and rho, or neither")
        pairs = [(float(p.glue.eps), float(p.glue.rho))]
    else:
        pairs = [(e, r) for e in p.glue.candidates for r in p.glue.candidates]
    best, failure = None, None
    for eps, rho in pairs:
        sol, fail = _solve_glue(p, eps, rho)
        if sol is None:
            failure = failure or fail
            continue
        if best is None or sol[0] < best[2][0]:
            best = (eps, rho, sol)
    if best is None:
        cond, wit = failure
        raise GlueValidationError(cond, wit, f"for {p.key()}")
    eps, rho, sol = best
    vec, cheb = _assemble(p, eps, rho, sol)
    report = validate_gh(vec, cheb)
    if not report["ok"]:
        name, info = next((n, c) for n, c in report["checks"].items() if not c["ok"])
        raise GlueValidationError(name, info["witness"], f"for {p.key()}")
    lam, q0, q1, _, _ = sol
    return GHMap(p, eps, rho, lam, q0, q1, vec, cheb, report)


def gh_build(p: GHParams) -> GHMap:
    """Construct and validate the GH representative for ``p``."""
    return _gh_build_cached(p)


def gh_forward(m: GHMap, x):
    arr, scalar = _as_array(x)
    if np.any(np.abs(arr) > 1.0):
        raise BranchDomainError("x must lie in [-1, 1]")
    _check_singular(arr)
    y = np.array([K.gh_fwd(m.vec, m.cheb, float(v)) for v in arr.ravel()]).reshape(arr.shape)
    return float(y) if scalar else y


def gh_inverse(m: GHMap, y, branch: BranchId):
    """Preimage of y on the plus (decreasing) or minus (increasing) half."""
    arr, scalar = _as_array(y)
    if np.any((arr < -1.0) | (arr >= 1.0)):
        raise BranchDomainError("y must lie in [-1, 1) for either GH branch")
    x = np.array([K.gh_inv_plus(m.vec, m.cheb, float(v)) for v in arr.ravel()]).reshape(arr.shape)
    h = np.array([K.gh_plus(m.vec, m.cheb, float(v)) for v in x.ravel()]).reshape(arr.shape)
    worst = float(np.max(np.abs(h - arr))) if arr.size else 0.0
    if worst > RESIDUAL_TOL:
        raise ConvergenceError("GH inverse failed", worst)
    if branch.side == "minus":
        x = -x
    return float(x) if scalar else x


def _gh_derivs(m: GHMap, x):
    arr, scalar = _as_array(x)
    _check_singular(arr)
    out = np.array([K.gh_plus_derivs(m.vec, m.cheb, abs(float(v))) for v in arr.ravel()])
    out = out.reshape(arr.shape + (4,))
    sign = np.sign(arr)
    # even map: odd-order derivatives flip sign on I-
    out[..., 1] *= sign
    out[..., 3] *= sign
    return out, scalar


def gh_derivative(m: GHMap, x):
    out, scalar = _gh_derivs(m, x)
    return float(out[..., 1]) if scalar else out[..., 1]


def gh_second_derivative(m: GHMap, x):
    out, scalar = _gh_derivs(m, x)
    return float(out[..., 2]) if scalar else out[..., 2]


def gh_third_derivative(m: GHMap, x, step=FD_THIRD_STEP):
    """Finite difference of h'' that never straddles a junction of the pieces.

    The glue is only C^1, so h'' jumps at eps and 1 - rho; near a junction the
    stencil becomes one-sided (second order) inside the piece containing x.
    """
    arr, scalar = _as_array(x)
    ax = np.abs(arr)
    h = step * (1.0 + ax)
    f2 = lambda v: gh_second_derivative(m, v)
    d = (f2(ax + np.minimum(h, 1.0 - ax)) - f2(ax - h)) / (h + np.minimum(h, 1.0 - ax))
    left_piece = np.zeros(ax.shape, dtype=bool)   # junction just above x: look left
    right_piece = np.zeros(ax.shape, dtype=bool)  # junction just below x: look right
    for junction, x_in_left in ((m.eps, True), (1.0 - m.rho, False)):
        inside = (ax - h < junction) & (junction < ax + h)
        owns_left = ax <= junction if x_in_left else ax < junction
        left_piece |= inside & owns_left
        right_piece |= inside & ~owns_left
    right_piece |= ax + h > 1.0
    if np.any(left_piece):
        v, hh = ax[left_piece], h[left_piece]
        d[left_piece] = (3 * f2(v) - 4 * f2(v - hh) + f2(v - 2 * hh)) / (2 * hh)
    if np.any(right_piece & ~left_piece):
        sel = right_piece & ~left_piece
        v, hh = ax[sel], h[sel]
        hh = np.minimum(hh, (1.0 - v) / 2) if np.all(v < 1.0) else hh
        d[sel] = (-3 * f2(v) + 4 * f2(v + hh) - f2(v + 2 * hh)) / (2 * hh)
    d = d * np.sign(arr)
    return float(d) if scalar else d


def gh_schwarzian(m: GHMap, x):
    out, scalar = _gh_derivs(m, x)
    d1, d2 = out[..., 1], out[..., 2]
    d3 = gh_third_derivative(m, x)
    s = d3 / d1 - 1.5 * (d2 / d1) ** 2
    return float(s) if scalar else s


def gh_u(m: GHMap, x):
    """Error term u in h(x) = -x + (a + u(x)) (1 - x)**gamma on I+; zero near 1."""
    g, _, a, _ = m.params.key()
    x = np.asarray(x, dtype=float)
    h = gh_forward(m, x)
    return (h + x) / (1 - x) ** g - a


DEFAULT_GH = GHParams(1.5, 0.5, 1.0, 1.0)

# Parameter tuples that build and validate; used for grid scans.
GH_PARAMETER_GRID = (
    GHParams(1.5, 0.5, 1.0, 1.0),
    GHParams(1.2, 0.5, 1.0, 1.0),
    GHParams(1.5, 0.3, 1.0, 1.0),
    GHParams(1.5, 0.5, 2.0, 1.0),
    GHParams(1.5, 0.7, 1.0, 2.0),
    GHParams(1.8, 0.3, 1.0, 1.0),
    GHParams(1.8, 0.5, 2.0, 1.0),
    GHParams(1.8, 0.7, 0.5, 2.0),
    GHParams(1.2, 0.7, 1.0, 1.0),
    GHParams(1.5, 0.3, 0.5, 1.0),
)
