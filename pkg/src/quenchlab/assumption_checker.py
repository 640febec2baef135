"""Random variables A_k (Pikovsky) and B_k (GH), Cesaro limits, Hoeffding checks, n_1(omega).

Two evaluations of A_k are provided:

* single-coordinate form ``A_k(alpha)``: the correction term m_k uses the
  deterministic ladder of the fiber exponent itself, so A_k depends on one
  coordinate of omega only. This is the form whose nu-expectation enters
  Assumption (A) and whose i.i.d. sums obey Hoeffding's inequality.
* pathwise form ``A_k(omega; n)``: the fiber is sigma^{n-k} omega and the
  correction term is evaluated on the random ladder point x_k^+(sigma^{n-k} omega).
  With this form ``t_n(omega)^{-(alpha_1 - 1)} >= 1 + sum_k A_k(omega; n)`` holds
  exactly.

The corner ladders ``t_k(alpha_1)`` and ``t_k(alpha_2)`` (written
``c_k(alpha) k^{-1/(alpha-1)}`` in the literature) are the deterministic ladders at
the extremes of the parameter box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from numba import njit
from scipy.optimize import curve_fit

from . import _kernels as K
from .errors import ValidationError
from .map_families import GHParams, gh_build
from .numerics import gauss_legendre, log_grid
from .random_cocycle import OmegaWindow, ParamDistribution, derive_seeds, sample_omega
from .tower_builder import estimate_n1, ladder_points, n1_grid, quenched_envelope

M_GRID = 1000


# ---------------------------------------------------------------- closed forms


def pik_ladder_constant_limit(alpha):
    """lim_k t_k(alpha) k^{1/(alpha-1)} = (2 alpha / (alpha - 1))^{1/(alpha-1)}."""
    return (2.0 * alpha / (alpha - 1.0)) ** (1.0 / (alpha - 1.0))


def gh_ladder_constant_limit(gamma, a):
    """lim_k (1 + x_k^-) k^{1/(gamma-1)} = (a (gamma - 1))^{-1/(gamma-1)}."""
    return (a * (gamma - 1.0)) ** (-1.0 / (gamma - 1.0))


def c_nu_reference(d: ParamDistribution):
    """Closed-form c(nu) and its q for the shipped Pikovsky distributions; None otherwise."""
    if d.family != "pik":
        return None
    a1, a2 = d.bounds()
    if d.kind == "discrete" or a1 == a2:
        p1 = d.lowest_atom_probability() if d.kind == "discrete" else 1.0
        return 0, p1 * (a1 - 1.0) / (2.0 * a1)
    return 1, (a1 - 1.0) ** 2 / ((a2 - a1) * 2.0 * a1)


# ----------------------------------------------------------------------- M


def u_pik(alpha, x):
    """u_alpha(x) = ((1 - g(x)) / (1 - x))**alpha / (2 alpha) - 1/(2 alpha) on the outer branch."""
    x = np.asarray(x, dtype=float)
    t = 1.0 - x
    s = np.array([K.phi_solve(alpha, tt) for tt in np.ravel(t)]).reshape(t.shape)
    return ((s / t) ** alpha - 1.0) / (2.0 * alpha)


@njit(cache=True)
def _pik_u_max(alphas, ts):
    best = -np.inf
    for a in alphas:
        for t in ts:
            s = K.phi_solve(a, t)
            u = ((s / t) ** a - 1.0) / (2.0 * a)
            if u > best:
                best = u
    return best


def measure_M(d: ParamDistribution, n_alpha: int = M_GRID, n_x: int = M_GRID) -> float:
    """sup |u| over the parameter box and x in [1/2, 1) (Pikovsky), or over the GH atoms.

    For GH, u is the relative correction (1 + h(x) - v)/v**gamma - a with v = 1 + x on
    the minus branch, sampled for v in (0, 1/2].
    """
    if d.family == "pik":
        a1, a2 = d.bounds()
        alphas = np.linspace(a1, a2, n_alpha if a2 > a1 else 1)
        ts = np.linspace(0.5, 0.0, n_x, endpoint=False)
        return float(_pik_u_max(alphas, ts))
    vs = np.linspace(0.5, 0.0, n_x, endpoint=False)
    best = 0.0
    for p, _ in d.atoms:
        m = gh_build(p)
        onep = np.array([1.0 + K.gh_fwd(m.vec, m.cheb, 1.0 - v) for v in vs])
        u = (onep - vs) / vs**p.gamma - p.a
        best = max(best, float(np.max(np.abs(u))))
    return best


# -------------------------------------------------------------------- AkSpec


@dataclass(frozen=True, eq=False)
class AkSpec:
    """Reference data for A_k (kind 'A') or B_k (kind 'B') up to ``depth``.

    ``t_low``/``t_high`` are the corner ladders at the smallest/largest exponent;
    ``M`` the measured bound of the correction term, ``span`` the Hoeffding range.
    """

    kind: Literal["A", "B"]
    distribution: ParamDistribution
    depth: int
    e1: float
    e2: float
    t_low: np.ndarray = field(repr=False)
    t_high: np.ndarray = field(repr=False)
    M: float
    span: float
    corner_low: GHParams | None = None
    corner_high: GHParams | None = None
    corrected: bool = False

    def c_k(self, which: Literal["low", "high"] = "low") -> np.ndarray:
        """c_k = t_k k^{1/(e-1)} for k = 1..depth."""
        t, e = (self.t_low, self.e1) if which == "low" else (self.t_high, self.e2)
        k = np.arange(1, self.depth + 1)
        return t[1:] * k ** (1.0 / (e - 1.0))


def _gh_corners(d: ParamDistribution):
    ps = [p for p, w in d.atoms if w > 0]
    lo = GHParams(min(p.gamma for p in ps), min(p.k for p in ps), min(p.a for p in ps), min(p.b for p in ps))
    hi = GHParams(max(p.gamma for p in ps), max(p.k for p in ps), max(p.a for p in ps), max(p.b for p in ps))
    return lo, hi


def _gh_const_ladder(p: GHParams, depth):
    m = gh_build(p)
    return K.gh_ladder_constant(m.vec, m.cheb, depth)


def build_ak_spec(d: ParamDistribution, depth: int, corrected: bool = False, M: float | None = None) -> AkSpec:
    """Corner ladders, M and the Hoeffding span for ``d``.

    ``corrected`` (B only) multiplies the first bracket by (gamma_1 - 1) and the
    second by gamma_1, which is the exact analogue of A_k for the GH recursion.
    """
    if depth < 1:
        raise ValidationError("depth must be positive")
    e1, e2 = d.bounds()
    M = measure_M(d) if M is None else M
    if d.family == "pik":
        tl = K.pik_ladder_constant(e1, depth)
        th = K.pik_ladder_constant(e2, depth)
        span = (0.5 + M) + (0.5 + M) ** 2
        return AkSpec("A", d, depth, e1, e2, tl, th, M, span)
    lo, hi = _gh_corners(d)
    tl = _gh_const_ladder(lo, depth)
    th = _gh_const_ladder(hi, depth)
    span = (lo.a + M) + (e1 - 1.0) / 2.0 * (hi.a + M) ** 2
    return AkSpec("B", d, depth, e1, e2, tl, th, M, span, lo, hi, corrected)


def _coefficients(spec: AkSpec):
    e1 = spec.e1
    if spec.kind == "A":
        return e1 - 1.0, e1 * (e1 - 1.0) / 2.0
    if spec.corrected:
        return e1 - 1.0, e1 * (e1 - 1.0) / 2.0
    return 1.0, (e1 - 1.0) / 2.0


def _combine(spec: AkSpec, e, f, ks):
    """c1 f t_low^{e-e1} - c2 f^2 t_high^{2e-e1-1} at indices ks."""
    c1, c2 = _coefficients(spec)
    tl = spec.t_low[ks]
    th = spec.t_high[ks]
    return c1 * f * tl ** (e - spec.e1) - c2 * f * f * th ** (2.0 * e - spec.e1 - 1.0)


def _need_depth(spec, k):
    if np.max(k) > spec.depth:
        raise ValidationError(f"reference ladders have depth {spec.depth} < {int(np.max(k))}")


def ak_single(spec: AkSpec, param, ks) -> np.ndarray:
    """Single-coordinate A_k / B_k at a parameter value for the indices ``ks`` (>= 1)."""
    ks = np.atleast_1d(np.asarray(ks, dtype=np.int64))
    _need_depth(spec, ks)
    top = int(ks.max())
    if spec.kind == "A":
        a = float(param)
        t = K.pik_ladder_constant(a, top)
        f = (t[ks - 1] / t[ks]) ** a / (2.0 * a)
        return _combine(spec, a, f, ks)
    p = param
    t = _gh_const_ladder(p, top)
    f = (t[ks - 1] - t[ks]) / t[ks] ** p.gamma
    return _combine(spec, p.gamma, f, ks)


def compute_Ak(spec: AkSpec, w: OmegaWindow, k: int, n: int | None = None) -> float:
    """A_k(omega) (or B_k).

    Without ``n``: single-coordinate form at the fiber omega_0. With ``n``: pathwise
    form at fiber sigma^{n-k} omega using the random ladder.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    if n is None:
        return float(ak_single(spec, w.param(0), [k])[0])
    return float(ak_pathwise(spec, w, n)[k - 1])


compute_Bk = compute_Ak


def ak_pathwise(spec: AkSpec, w: OmegaWindow, n: int) -> np.ndarray:
    """A_k(omega; n) for k = 1..n (pathwise form)."""
    _need_depth(spec, n)
    if not w.covers(0, n - 1):
        raise ValidationError("window too short for the pathwise sums")
    ks = np.arange(1, n + 1)
    if spec.kind == "A":
        alphas = w.alphas(0, n)
        s = K.pik_chain(alphas, n)
        e = alphas[n - ks]
        f = (s[ks - 1] / s[ks]) ** e / (2.0 * e)
    else:
        ptab, ctab, ids = w.gh_tables(0, n)
        s = K.gh_chain(ptab, ctab, ids, n)
        e = ptab[ids[n - ks], K.GH_GAMMA]
        f = (s[ks - 1] - s[ks]) / s[ks] ** e
    return _combine(spec, e, f, ks)


def pathwise_chain_gap(spec: AkSpec, w: OmegaWindow, n: int) -> float:
    """t_n(omega)^{-(e1-1)} - sum_k A_k(omega; n); non-negative when the chain inequality holds."""
    vals = ak_pathwise(spec, w, n)
    t_n = ladder_points("pik" if spec.kind == "A" else "gh", w, [n])[0]
    return float(t_n ** (-(spec.e1 - 1.0)) - math.fsum(vals))


# ------------------------------------------------------------ expectations


def _atom_table(spec: AkSpec, n: int):
    d = spec.distribution
    ks = np.arange(1, n + 1)
    vals = np.stack([ak_single(spec, v, ks) for v, _ in d.atoms])
    probs = np.array([p for _, p in d.atoms])
    return vals, probs


def expected_ak(spec: AkSpec, n: int, tol: float = 1e-10, max_panels: int = 64) -> np.ndarray:
    """E_nu A_k for k = 1..n.

    Discrete: exact weighted sum. Uniform: 64-node Gauss-Legendre panels in the
    exponent, doubled until the whole vector moves by less than ``tol``.
    """
    d = spec.distribution
    _need_depth(spec, n)
    if d.kind == "discrete":
        vals, probs = _atom_table(spec, n)
        return probs @ vals
    if d.lo == d.hi:
        return ak_single(spec, d.lo, np.arange(1, n + 1))
    ks = np.arange(1, n + 1)
    nodes, weights = gauss_legendre(64)

    def integrate(panels):
        edges = np.linspace(d.lo, d.hi, panels + 1)
        acc = np.zeros(n)
        for a, b in zip(edges[:-1], edges[1:]):
            half = 0.5 * (b - a)
            for x, wgt in zip(0.5 * (a + b) + half * nodes, weights):
                acc += half * wgt * ak_single(spec, x, ks)
        return acc / (d.hi - d.lo)

    panels = 1
    prev = integrate(panels)
    while True:
        panels *= 2
        cur = integrate(panels)
        if np.max(np.abs(cur - prev)) <= tol or panels >= max_panels:
            return cur
        prev = cur


@dataclass
class CesaroResult:
    q: int
    ns: np.ndarray = field(repr=False)
    averages: np.ndarray = field(repr=False)
    limit: float
    last_average: float
    reference: float | None
    fit: dict
    cauchy: bool


def _power_model(n, c, beta, delta):
    return c + beta * n ** (-delta)


def cesaro_limit(spec: AkSpec, n_max: int, q: int | None = None, grid_points: int = 60) -> CesaroResult:
    """(log n)^q / n * sum_{k<=n} E_nu A_k on a log grid, plus an extrapolated limit.

    q = 0: the partial averages are fitted with c + beta n^-delta on the last decade.
    q >= 1: corrections are powers of 1/log n, which no n^-delta model captures, so
    the Stolz-Cesaro ratio E_nu A_n / (b_n - b_{n-1}), b_n = n / (log n)^q, is
    extrapolated quadratically in 1/log n over the last three decades.
    A curve whose last-decade relative variation exceeds 10 % is reported as
    non-Cauchy (not raised).
    """
    if n_max < 1000:
        raise ValidationError("n_max must be at least 1000")
    ref = c_nu_reference(spec.distribution) if spec.kind == "A" else None
    if q is None:
        q = ref[0] if ref else 0
    ea = expected_ak(spec, n_max)
    csum = np.cumsum(ea)
    ns = log_grid(2, n_max, grid_points)
    avg = np.log(ns) ** q / ns * csum[ns - 1]
    mask = ns >= n_max / 10
    y = avg[mask]
    fit = {}
    if q == 0:
        x = ns[mask].astype(float)
        try:
            p0 = (y[-1], (y[0] - y[-1]) * x[0] ** 0.5, 0.5)
            popt, _ = curve_fit(_power_model, x, y, p0=p0,
                                bounds=([-np.inf, -np.inf, 1e-3], [np.inf, np.inf, 5.0]), maxfev=20000)
            limit = float(popt[0])
            fit = {"model": "c + beta n^-delta", "c": float(popt[0]), "beta": float(popt[1]), "delta": float(popt[2])}
        except (RuntimeError, ValueError):
            limit = float(y[-1])
            fit = {"model": "last value"}
    else:
        n = np.arange(2, n_max + 1, dtype=float)
        b = n / np.log(n) ** q
        ratio = ea[2:] / np.diff(b)
        nn = n[1:]
        sel = nn >= max(n_max / 1000.0, 100.0)
        coef = np.polyfit(1.0 / np.log(nn[sel]), ratio[sel], 2)
        limit = float(coef[-1])
        fit = {"model": "Stolz ratio, quadratic in 1/log n", "coefficients": coef.tolist()}
    spread = (y.max() - y.min()) / max(abs(y[-1]), 1e-300)
    return CesaroResult(q, ns, avg, limit, float(avg[-1]), ref[1] if ref else None, fit, bool(spread < 0.1))


# --------------------------------------------------------------- Hoeffding


@dataclass
class HoeffdingRow:
    t: float
    frequency: float
    bound: float

    @property
    def satisfied(self):
        return self.frequency <= self.bound


def hoeffding_bound(n, t, q, span):
    return math.exp(-2.0 * n * t * t / (math.log(n) ** (2 * q) * span * span))


def _single_table(spec: AkSpec, n: int, n_interp: int = 513):
    """Values of A_k(param) tabulated per atom (discrete) or on an exponent grid (uniform)."""
    d = spec.distribution
    if d.kind == "discrete":
        vals, _ = _atom_table(spec, n)
        return vals, None
    grid = np.linspace(d.lo, d.hi, n_interp if d.hi > d.lo else 1)
    ks = np.arange(1, n + 1)
    return np.stack([ak_single(spec, a, ks) for a in grid]), grid


def _deviation_samples(spec: AkSpec, n: int, trials: int, seed: int, q: int, chunk: int = 64):
    d = spec.distribution
    table, grid = _single_table(spec, n)
    mean_sum = math.fsum(expected_ak(spec, n))
    ks = np.arange(1, n + 1)
    if d.kind == "discrete" and d.family == "pik":
        atom_vals = np.array([float(v) for v, _ in d.atoms])
        order = np.argsort(atom_vals)
    devs = np.empty(trials)
    seeds = derive_seeds(seed, trials)
    for s0 in range(0, trials, chunk):
        rows = []
        for sd in seeds[s0 : s0 + chunk]:
            w = sample_omega(d, 0, n - 1, int(sd))
            raw = w.raw(0, n)[n - ks]  # fiber sigma^{n-k} omega for term k
            if grid is None:
                if d.family == "pik":
                    ids = order[np.searchsorted(atom_vals[order], raw)]
                else:
                    ids = raw
                rows.append(table[ids, ks - 1].sum())
            else:
                pos = (raw - grid[0]) / (grid[1] - grid[0]) if grid.size > 1 else np.zeros(n)
                lo = np.clip(np.floor(pos).astype(int), 0, max(grid.size - 2, 0))
                fr = pos - lo
                hi = np.minimum(lo + 1, grid.size - 1)
                v = (1 - fr) * table[lo, ks - 1] + fr * table[hi, ks - 1]
                rows.append(v.sum())
        devs[s0 : s0 + len(rows)] = np.abs(np.array(rows) - mean_sum)
    return math.log(n) ** q / n * devs


def hoeffding_check(spec: AkSpec, n: int, t_grid, trials: int, seed: int, q: int | None = None):
    """Empirical P{(log n)^q/n |sum A_k - sum E A_k| > t} against the Hoeffding bound."""
    if trials < 1000:
        raise ValidationError("Hoeffding checks need at least 1000 trials")
    d = spec.distribution
    if q is None:
        ref = c_nu_reference(d) if spec.kind == "A" else None
        q = ref[0] if ref else 0
    _need_depth(spec, n)
    devs = _deviation_samples(spec, n, trials, seed, q)
    return [HoeffdingRow(float(t), float(np.mean(devs > t)), hoeffding_bound(n, t, q, spec.span)) for t in t_grid]


# ----------------------------------------------------------- quenched bound


@dataclass
class QuenchedReport:
    c_nu: float
    c: float
    q: int
    n_max: int
    n1: np.ndarray = field(repr=False)
    censored: np.ndarray = field(repr=False)
    limsup_stat: np.ndarray = field(repr=False)
    limsup_bound: float

    @property
    def censored_fraction(self):
        return float(np.mean(self.censored))

    def exceedance(self, ns):
        """Fraction of samples with n_1 > n, for each n."""
        return np.array([np.mean(self.n1 > n) for n in ns])


def quenched_bound_report(spec: AkSpec, n_max: int, trials: int, c_fraction: float, seed: int,
                          c_nu: float | None = None, q: int | None = None) -> QuenchedReport:
    """Distribution of n_1(omega) for c = c_fraction * c(nu) and the limsup statistic.

    The statistic n^{1/(e1-1)} t_n / (log n)^{q/(e1-1)} is taken as the maximum over
    the last half-decade of the grid.
    """
    if not 0.0 < c_fraction < 1.0:
        raise ValidationError("c_fraction must lie in (0, 1)")
    d = spec.distribution
    family = "pik" if spec.kind == "A" else "gh"
    if c_nu is None or q is None:
        ref = c_nu_reference(d)
        if ref is None:
            res = cesaro_limit(spec, min(n_max, spec.depth), q=q or 0)
            ref = (res.q, res.limit)
        q = ref[0] if q is None else q
        c_nu = ref[1] if c_nu is None else c_nu
    c = c_fraction * c_nu
    e1 = spec.e1
    ns = n1_grid(n_max)
    tail = ns >= n_max / math.sqrt(10.0)
    n1 = np.empty(trials, dtype=np.int64)
    cens = np.zeros(trials, dtype=bool)
    stat = np.empty(trials)
    for k, sd in enumerate(derive_seeds(seed, trials)):
        w = sample_omega(d, 0, n_max, int(sd))
        t = ladder_points(family, w, ns)
        n1[k], cens[k] = estimate_n1(ns, t, e1, c, q)
        st = ns[tail] ** (1.0 / (e1 - 1.0)) * t[tail] / np.log(ns[tail]) ** (q / (e1 - 1.0))
        stat[k] = st.max()
    return QuenchedReport(c_nu, c, q, n_max, n1, cens, stat, c_nu ** (-1.0 / (e1 - 1.0)))


def envelope(ns, spec: AkSpec, c, q):
    return quenched_envelope(ns, spec.e1, c, q)
