"""Fibre-wise future/past correlations, equivariant densities of GH cocycles, decay-exponent fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from . import _kernels as K
from .errors import ValidationError, WindowRangeError
from .numerics import gauss_legendre
from .random_cocycle import Family, OmegaWindow, ParamDistribution, derive_seeds, sample_omega, shift
from .tower_builder import _write_csv

MC_BATCHES = 20
CHUNK = 1 << 20


# ------------------------------------------------------------------ observables


@dataclass(frozen=True)
class Observable:
    """A test function on [-1, 1].

    ``kind='holder'`` promises |f(x) - f(y)| <= constant |x - y|**eta;
    ``kind='bounded'`` promises |f| <= constant.
    """

    name: str
    evaluator: Callable = field(repr=False, compare=False)
    kind: Literal["holder", "bounded"] = "holder"
    eta: float = 1.0
    constant: float = 1.0

    def __post_init__(self):
        if self.kind not in ("holder", "bounded"):
            raise ValidationError(f"unknown observable kind {self.kind!r}")
        if self.kind == "holder" and not 0 < self.eta <= 1:
            raise ValidationError("Hoelder exponent must lie in (0, 1]")

    def __call__(self, x):
        return np.asarray(self.evaluator(np.asarray(x, dtype=float)), dtype=float)

    def plus(self, c: float) -> "Observable":
        f = self.evaluator
        return Observable(f"{self.name}+{c:g}", lambda x: f(x) + c, self.kind, self.eta,
                          self.constant + (abs(c) if self.kind == "bounded" else 0.0))

    def combine(self, a: float, other: "Observable", b: float) -> "Observable":
        f, g = self.evaluator, other.evaluator
        kind = "holder" if self.kind == other.kind == "holder" else "bounded"
        return Observable(f"{a:g}*{self.name}+{b:g}*{other.name}", lambda x: a * f(x) + b * g(x), kind,
                          min(self.eta, other.eta), abs(a) * self.constant + abs(b) * other.constant)

    def verify(self, pairs: int = 10_000, seed: int = 0) -> bool:
        """Check the declared regularity on random pairs (and on a grid for the sup bound)."""
        rng = np.random.default_rng(seed)
        x = rng.uniform(-1, 1, pairs)
        if self.kind == "bounded":
            return bool(np.all(np.abs(self(x)) <= self.constant * (1 + 1e-12)))
        y = np.clip(x + rng.uniform(-1, 1, pairs) * 10.0 ** rng.uniform(-8, 0, pairs), -1, 1)
        lhs = np.abs(self(x) - self(y))
        return bool(np.all(lhs <= self.constant * np.abs(x - y) ** self.eta * (1 + 1e-9) + 1e-15))


def identity_observable() -> Observable:
    return Observable("x", lambda x: x, "holder", 1.0, 1.0)


def sign_observable() -> Observable:
    """Indicator of [0, 1] minus its Lebesgue mean 1/2."""
    return Observable("1[0,1]-1/2", lambda x: np.where(x >= 0, 0.5, -0.5), "bounded", constant=0.5)


def square_observable() -> Observable:
    return Observable("x^2", lambda x: x * x, "holder", 1.0, 2.0)


def constant_observable(c: float = 1.0) -> Observable:
    return Observable(f"{c:g}", lambda x: np.full_like(x, c), "holder", 1.0, 0.0)


# ------------------------------------------------------------------- densities


@dataclass(eq=False)
class DensityApprox:
    """Piecewise-constant probability density: bin ``edges`` and ``masses``."""

    edges: np.ndarray
    masses: np.ndarray
    depth: int
    window_seed: int
    window_offset: int
    samples: int
    cauchy_increment: float | None = None
    flagged: bool = False

    def __post_init__(self):
        m = np.asarray(self.masses, dtype=float)
        if m.size != len(self.edges) - 1 or np.any(m < 0) or abs(m.sum() - 1.0) > 1e-9:
            raise ValidationError("masses must be non-negative, one per bin, and sum to 1")

    @classmethod
    def lebesgue(cls, bins: int = 1):
        return cls(np.linspace(-1.0, 1.0, bins + 1), np.full(bins, 1.0 / bins), 0, 0, 0, 0)

    @property
    def bins(self):
        return self.masses.size

    @property
    def density(self):
        return self.masses / np.diff(self.edges)

    def l1(self, other: "DensityApprox") -> float:
        """L1 distance between the two densities (same grid)."""
        if not np.array_equal(self.edges, other.edges):
            raise ValidationError("densities live on different grids")
        return float(np.abs(self.masses - other.masses).sum())

    def edge_mass(self, width: float) -> float:
        """Mass within ``width`` of the neutral points -1 and 1."""
        centres = 0.5 * (self.edges[1:] + self.edges[:-1])
        return float(self.masses[np.abs(centres) >= 1.0 - width].sum())

    def inverse_cdf(self, u):
        cum = np.concatenate([[0.0], np.cumsum(self.masses)])
        cum[-1] = 1.0
        k = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, self.bins - 1)
        m = self.masses[k]
        frac = np.where(m > 0, (u - cum[k]) / np.where(m > 0, m, 1.0), 0.5)
        return self.edges[k] + np.clip(frac, 0.0, 1.0) * (self.edges[k + 1] - self.edges[k])

    def to_csv(self, path):
        rows = zip(self.edges[:-1], self.edges[1:], self.masses, [self.depth] * self.bins)
        _write_csv(path, ["bin_left", "bin_right", "mass", "depth"], rows)



def _stratified(n: int, seed: int) -> np.ndarray:
    """One uniform point in each of n equal strata of [0, 1)."""
    rng = np.random.default_rng(seed)
    return (np.arange(n) + rng.random(n)) / n


def _push(family: Family, w: OmegaWindow, start: int, n: int, x: np.ndarray) -> np.ndarray:
    """f^n along fibers start..start+n-1; NaN marks orbits through the singular point."""
    if n == 0:
        return x.copy()
    if family == "pik":
        return K.pik_orbit_endpoints(w.alphas(start, n), x, n)
    pt, ct, ids = w.gh_tables(start, n)
    return K.gh_density_push(pt, ct, ids, x, n)


def _histogram(x, bins: int) -> np.ndarray:
    x = x[np.isfinite(x)]
    h, _ = np.histogram(x, bins=bins, range=(-1.0, 1.0))
    return h / h.sum()


def equivariant_density(family: Family, w: OmegaWindow, depth: int, bins: int = 512, samples: int = 10**6,
                        seed: int = 0, cauchy_depth: int | None = None, tol: float = 0.01) -> DensityApprox:
    """Histogram of Lebesgue pushed from fiber -depth to fiber 0.

    With ``cauchy_depth`` the same construction is repeated from that depth;
    an L1 increment above ``tol`` flags the approximation.
    """
    if depth < 0:
        raise ValidationError("depth must be non-negative")
    if not w.covers(-depth, -1) and depth > 0:
        raise WindowRangeError("window does not cover the pullback depth")
    u = -1.0 + 2.0 * _stratified(samples, seed)
    masses = _histogram(_push(family, w, -depth, depth, u), bins)
    edges = np.linspace(-1.0, 1.0, bins + 1)
    inc = None
    flagged = False
    if cauchy_depth is not None:
        other = _histogram(_push(family, w, -cauchy_depth, cauchy_depth, u), bins)
        inc = float(np.abs(masses - other).sum())
        flagged = inc > tol
    return DensityApprox(edges, masses, depth, w.seed, w.offset, samples, inc, flagged)


def equivariance_residual(family: Family, w: OmegaWindow, density: DensityApprox, samples: int = 10**6,
                          seed: int = 1) -> float:
    """L1 distance between the push of the density at omega and the density built at sigma omega."""
    x = density.inverse_cdf(_stratified(samples, seed))
    pushed = _histogram(_push(family, w, 0, 1, x), density.bins)
    target = equivariant_density(family, shift(w, 1), density.depth, density.bins, samples, seed + 1)
    return float(np.abs(pushed - target.masses).sum())


# ------------------------------------------------------------------ correlations


@dataclass(frozen=True)
class CorrelationEstimate:
    value: float
    error: float
    method: str
    converged: bool
    n: int


def _resolve_measure(family, w, measure, depth=40, bins=512):
    if measure is None or measure == "lebesgue":
        return DensityApprox.lebesgue()
    if measure == "equivariant":
        return equivariant_density(family, w, depth, bins)
    if isinstance(measure, DensityApprox):
        return measure
    raise ValidationError(f"unknown measure {measure!r}")


def _quadrature_nodes(measure: DensityApprox, panels: int, order: int):
    per_bin = max(1, -(-panels // measure.bins))
    gx, gw = gauss_legendre(order)
    sub = np.linspace(0.0, 1.0, per_bin + 1)
    lefts = (measure.edges[:-1, None] + np.diff(measure.edges)[:, None] * sub[None, :-1]).ravel()
    width = np.repeat(np.diff(measure.edges) / per_bin, per_bin)
    dens = np.repeat(measure.density, per_bin)
    x = (lefts[:, None] + 0.5 * width[:, None] * (gx[None, :] + 1.0)).ravel()
    wt = (0.5 * width[:, None] * gw[None, :] * dens[:, None]).ravel()
    return x, wt


def _weighted_cov(fy, gx, wt):
    ok = np.isfinite(fy)
    fy, gx, wt = fy[ok], gx[ok], wt[ok]
    tot = math.fsum(wt)
    ef = math.fsum(wt * fy) / tot
    eg = math.fsum(wt * gx) / tot
    return math.fsum(wt * (fy - ef) * (gx - eg)) / tot


def _quadrature(family, w, start, n, phi, psi, measure, panels, order, tol, max_panels):
    prev = None
    p = panels
    while True:
        x, wt = _quadrature_nodes(measure, p, order)
        val = _weighted_cov(phi(_push(family, w, start, n, x)), psi(x), wt)
        if prev is not None and abs(val - prev) < tol:
            return CorrelationEstimate(val, abs(val - prev), "quadrature", True, n)
        if 2 * p > max_panels:
            err = abs(val - prev) if prev is not None else float("inf")
            return CorrelationEstimate(val, err, "quadrature", False, n)
        prev, p = val, 2 * p


def _mc_curve(family, w, start, nmax, phi, psi, measure, samples, seed, batches=MC_BATCHES):
    """Batch sums for n = 0..nmax from one stratified sample (orbits pushed once)."""
    u = _stratified(samples, seed)
    sfg = np.zeros((nmax + 1, batches))
    sf = np.zeros((nmax + 1, batches))
    sg = np.zeros((nmax + 1, batches))
    cnt = np.zeros((nmax + 1, batches))
    for lo in range(0, samples, CHUNK):
        idx = np.arange(lo, min(samples, lo + CHUNK))
        b = idx % batches
        x0 = measure.inverse_cdf(u[idx])
        g = psi(x0)
        x = x0.copy()
        for n in range(nmax + 1):
            f = phi(x)
            ok = np.isfinite(f)
            bb = b[ok]
            sfg[n] += np.bincount(bb, f[ok] * g[ok], batches)
            sf[n] += np.bincount(bb, f[ok], batches)
            sg[n] += np.bincount(bb, g[ok], batches)
            cnt[n] += np.bincount(bb, None, batches)
            if n < nmax:
                x = _push(family, w, start + n, 1, x)
    cov = sfg / cnt - (sf / cnt) * (sg / cnt)
    tot = cnt.sum(axis=1)
    value = sfg.sum(axis=1) / tot - (sf.sum(axis=1) / tot) * (sg.sum(axis=1) / tot)
    stderr = cov.std(axis=1, ddof=1) / math.sqrt(batches)
    return value, stderr


def correlation_future(family: Family, w: OmegaWindow, n: int, phi: Observable, psi: Observable, measure=None,
                       method: Literal["quadrature", "mc"] = "quadrature", panels: int = 2**14, order: int = 8,
                       tol: float = 1e-8, max_panels: int = 2**18, samples: int = 10**6,
                       seed: int = 0) -> CorrelationEstimate:
    """Cov_mu(phi o f_omega^n, psi) with mu = Lebesgue (default) or a density at omega.

    The mean of phi under the measure at sigma^n omega is taken as the mean of
    phi o f^n under mu, which is exact for Lebesgue-preserving Pikovsky fibers
    and holds up to the density error for GH.
    """
    if n < 0:
        raise ValidationError("n must be non-negative")
    if n > 0 and not w.covers(0, n - 1):
        raise WindowRangeError("window does not cover the requested lag")
    mu = _resolve_measure(family, w, measure)
    if method == "quadrature":
        return _quadrature(family, w, 0, n, phi, psi, mu, panels, order, tol, max_panels)
    if method == "mc":
        v, e = _mc_curve(family, w, 0, n, phi, psi, mu, samples, seed)
        return CorrelationEstimate(float(v[n]), float(e[n]), "mc", True, n)
    raise ValidationError(f"unknown method {method!r}")


def correlation_past(family: Family, w: OmegaWindow, n: int, phi: Observable, psi: Observable, measure=None,
                     **kwargs) -> CorrelationEstimate:
    """Cov(phi o f_{sigma^-n omega}^n, psi) under the measure at sigma^-n omega.

    ``measure='equivariant'`` builds the GH density at sigma^-n omega.
    """
    if n > 0 and not w.covers(-n, -1):
        raise WindowRangeError("window does not cover the past lag")
    return correlation_future(family, shift(w, -n), n, phi, psi, measure, **kwargs)


def correlation_curve(family: Family, w: OmegaWindow, nmax: int, phi: Observable, psi: Observable, measure=None,
                      samples: int = 10**6, seed: int = 0, past: bool = False):
    """Monte Carlo future correlations for every n = 0..nmax, with batch standard errors.

    ``past=True`` returns, for each n, the past correlation at omega: the
    fibers -n..-1 are used, so every lag needs its own orbits.
    """
    mu = _resolve_measure(family, w, measure)
    if not past:
        if not w.covers(0, nmax - 1):
            raise WindowRangeError("window does not cover the requested lags")
        return _mc_curve(family, w, 0, nmax, phi, psi, mu, samples, seed)
    vals, errs = np.empty(nmax + 1), np.empty(nmax + 1)
    for n in range(nmax + 1):
        e = correlation_future(family, shift(w, -n), n, phi, psi, mu, method="mc", samples=samples, seed=seed)
        vals[n], errs[n] = e.value, e.error
    return vals, errs


@dataclass(eq=False)
class CorrelationSeries:
    """|Cor_n| over independent omegas; rows follow ``ns``."""

    ns: np.ndarray
    per_omega: np.ndarray = field(repr=False)
    stderr_mc: np.ndarray = field(repr=False)

    @property
    def mean_abs(self):
        return np.abs(self.per_omega).mean(axis=0)

    @property
    def stderr(self):
        a = np.abs(self.per_omega)
        if a.shape[0] < 2:
            return self.stderr_mc.mean(axis=0)
        return a.std(axis=0, ddof=1) / math.sqrt(a.shape[0])

    def to_csv(self, path):
        a = np.abs(self.per_omega)
        rows = zip(self.ns, self.mean_abs, self.stderr, a.min(axis=0), a.max(axis=0))
        _write_csv(path, ["n", "mean_abs_cor", "stderr", "per_omega_min", "per_omega_max"], rows)


def correlations_over_omega(family: Family, d: ParamDistribution, nmax: int, n_omega: int, samples: int,
                            seed: int, phi: Observable | None = None, psi: Observable | None = None,
                            measure=None) -> CorrelationSeries:
    """Future correlations for n = 0..nmax on ``n_omega`` independent windows."""
    phi = phi or sign_observable()
    psi = psi or identity_observable()
    seeds = derive_seeds(seed, 2 * n_omega)
    rows, errs = [], []
    for r in range(n_omega):
        w = sample_omega(d, 0, nmax, int(seeds[2 * r]))
        v, e = correlation_curve(family, w, nmax, phi, psi, measure, samples, int(seeds[2 * r + 1] % 2**63))
        rows.append(v)
        errs.append(e)
    return CorrelationSeries(np.arange(nmax + 1), np.array(rows), np.array(errs))


# -------------------------------------------------------------------- decay fits


def deterministic_rate(alpha: float) -> float:
    """Correlation exponent of a single Pikovsky map: -1/(alpha - 1)."""
    return -1.0 / (alpha - 1.0)


def quenched_rate(alpha1: float, delta: float = 0.0) -> float:
    """Quenched correlation exponent -(1/(alpha1 - 1) - 1 - delta)."""
    return -(1.0 / (alpha1 - 1.0) - 1.0 - delta)


@dataclass
class DecayFit:
    ns: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    exponent: float
    intercept: float
    r2: float
    fit_range: tuple
    sign_changes: int
    super_polynomial: bool
    envelope_exponent: float
    envelope_intercept: float


def _linfit(x, y):
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss if ss > 0 else 1.0
    return float(coef[0]), float(coef[1]), r2


def decay_fit(ns, values, burn_in: int = 0, n_max: int | None = None, min_decades: float = 1.5) -> DecayFit:
    """Log-log least squares of |values| against n, plus an upper-envelope fit.

    The envelope is the running maximum taken from the right, so it is the
    smallest non-increasing majorant of the data. ``super_polynomial`` flags
    curves whose local log-log slope keeps steepening (late slope more than
    twice the early slope).
    """
    ns = np.asarray(ns, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = (ns >= max(burn_in, 1)) & (ns <= (n_max if n_max is not None else np.inf)) & np.isfinite(v)
    ns, v = ns[keep], v[keep]
    if ns.size < 8 or np.log10(ns.max() / ns.min()) < min_decades - 1e-12:
        raise ValidationError(f"decay fit needs at least 8 points spanning {min_decades} decades")
    sign_changes = int(np.count_nonzero(np.diff(np.sign(v[v != 0])) != 0))
    a = np.abs(v)
    pos = a > 0
    lx, ly = np.log(ns[pos]), np.log(a[pos])
    slope, icpt, r2 = _linfit(lx, ly)
    env = np.maximum.accumulate(a[::-1])[::-1]
    es, ei, _ = _linfit(np.log(ns), np.log(np.maximum(env, np.finfo(float).tiny)))
    third = max(3, lx.size // 3)
    s_early = _linfit(lx[:third], ly[:third])[0]
    s_late = _linfit(lx[-third:], ly[-third:])[0]
    superpoly = bool(s_early < 0 and s_late < 2.0 * s_early)
    return DecayFit(ns, v, slope, icpt, r2, (float(ns.min()), float(ns.max())), sign_changes, superpoly, es, ei)
