"""Driving system: i.i.d. parameter windows, the shift, fiber compositions, E_nu."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Literal, Sequence

import numpy as np

from . import _kernels as K
from .errors import OrbitError, ValidationError, WindowRangeError
from .map_families import GHParams, PikParams, gh_build
from .numerics import adaptive_gauss_legendre

Family = Literal["pik", "gh"]
_COUNTER_ORIGIN = 1 << 63
_MASK64 = (1 << 64) - 1


def _family_of(param) -> Family:
    return "gh" if isinstance(param, GHParams) else "pik"


@dataclass(frozen=True)
class ParamDistribution:
    """Law nu of a single fiber parameter.

    Discrete: ``atoms`` is a tuple of (parameter, probability); parameters are
    floats (Pikovsky alpha) or GHParams. Uniform: alpha ~ U[lo, hi] (Pikovsky
    only; ``lo == hi`` is the degenerate point mass).
    """

    kind: Literal["discrete", "uniform"]
    atoms: tuple = ()
    lo: float = float("nan")
    hi: float = float("nan")
    sanity: bool = False

    def __post_init__(self):
        if self.kind == "discrete":
            if not self.atoms:
                raise ValidationError("discrete distribution needs at least one atom")
            probs = [float(p) for _, p in self.atoms]
            if any(p < 0 for p in probs) or abs(math.fsum(probs) - 1.0) > 1e-12:
                raise ValidationError("atom probabilities must be non-negative and sum to 1")
            fams = {_family_of(v) for v, _ in self.atoms}
            if len(fams) != 1:
                raise ValidationError("atoms mix Pikovsky and GH parameters")
            for v, _ in self.atoms:
                if isinstance(v, GHParams):
                    gh_build(v)
                else:
                    PikParams(float(v), sanity=self.sanity)
        elif self.kind == "uniform":
            if not (self.lo <= self.hi):
                raise ValidationError("uniform distribution needs lo <= hi")
            PikParams(float(self.lo), sanity=self.sanity)
            PikParams(float(self.hi), sanity=self.sanity)
        else:
            raise ValidationError(f"unknown distribution kind {self.kind!r}")

    # constructors
    @classmethod
    def discrete(cls, atoms: Sequence, sanity=False):
        return cls("discrete", tuple((v, float(p)) for v, p in atoms), sanity=sanity)

    @classmethod
    def uniform(cls, lo, hi):
        return cls("uniform", lo=float(lo), hi=float(hi))

    @classmethod
    def point(cls, value, sanity=False):
        return cls.discrete([(value, 1.0)], sanity=sanity)

    # properties
    @property
    def family(self) -> Family:
        return _family_of(self.atoms[0][0]) if self.kind == "discrete" else "pik"

    @property
    def is_degenerate(self):
        if self.kind == "uniform":
            return self.lo == self.hi
        return sum(1 for _, p in self.atoms if p > 0) == 1

    def _scalar(self, v):
        return v.gamma if isinstance(v, GHParams) else float(v)

    def bounds(self):
        """Smallest and largest exponent in the support (alpha or gamma)."""
        if self.kind == "uniform":
            return self.lo, self.hi
        vals = [self._scalar(v) for v, p in self.atoms if p > 0]
        return min(vals), max(vals)

    def lowest_atom_probability(self):
        """p_1: mass of the smallest exponent (discrete only)."""
        lo = self.bounds()[0]
        return math.fsum(p for v, p in self.atoms if self._scalar(v) == lo)

    def draw(self, u):
        """Map uniforms in [0, 1) to parameter values (floats or atom ids)."""
        u = np.asarray(u, dtype=float)
        if self.kind == "uniform":
            return self.lo + (self.hi - self.lo) * u
        cum = np.cumsum([p for _, p in self.atoms])
        cum[-1] = 1.0
        ids = np.searchsorted(cum, u, side="right")
        ids = np.minimum(ids, len(self.atoms) - 1)
        if self.family == "gh":
            return ids.astype(np.int64)
        return np.array([float(v) for v, _ in self.atoms])[ids]

    def to_dict(self):
        if self.kind == "uniform":
            return {"kind": "uniform", "lo": self.lo, "hi": self.hi}
        atoms = []
        for v, p in self.atoms:
            atoms.append({"value": list(v.key()) if isinstance(v, GHParams) else float(v), "p": p})
        return {"kind": "discrete", "atoms": atoms}


def counter_uniforms(seed: int, lo: int, hi: int) -> np.ndarray:
    """Uniforms for integer indices lo..hi, one Philox block per index.

    The value at index i depends only on (seed, i), so windows can be extended
    or cut without changing any existing entry.
    """
    n = hi - lo + 1
    if n <= 0:
        return np.empty(0)
    bg = np.random.Philox(key=int(seed) & _MASK64, counter=_COUNTER_ORIGIN + int(lo))
    raw = bg.random_raw(4 * n)[1::4]
    return (raw >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


@dataclass(frozen=True, eq=False)
class OmegaWindow:
    """Realized parameters omega_j for j in [-L_past, L_future], viewed from ``offset``."""

    values: np.ndarray = field(repr=False)
    seed: int
    distribution: ParamDistribution
    L_past: int
    L_future: int
    offset: int = 0

    @property
    def family(self) -> Family:
        return self.distribution.family

    def _pos(self, j):
        idx = self.offset + j
        if idx < -self.L_past or idx > self.L_future:
            raise WindowRangeError(f"index {idx} outside realized range [{-self.L_past}, {self.L_future}]")
        return idx + self.L_past

    def covers(self, start, stop):
        """True if relative indices start..stop (inclusive) are realized."""
        return self.offset + start >= -self.L_past and self.offset + stop <= self.L_future

    def raw(self, start: int, n: int) -> np.ndarray:
        """Raw values (alphas, or GH atom ids) at relative indices start..start+n-1."""
        if n <= 0:
            return self.values[:0]
        a = self._pos(start)
        b = self._pos(start + n - 1)
        return self.values[a : b + 1]

    def param(self, j: int = 0):
        """The fiber parameter alpha(sigma^j omega) (float) or its GHParams."""
        v = self.values[self._pos(j)]
        if self.family == "gh":
            return self.distribution.atoms[int(v)][0]
        return float(v)

    def alphas(self, start: int, n: int) -> np.ndarray:
        """Exponents (alpha, or gamma for GH) at relative indices start..start+n-1."""
        v = self.raw(start, n)
        if self.family == "gh":
            table = np.array([a.gamma for a, _ in self.distribution.atoms])
            return table[v]
        return np.ascontiguousarray(v, dtype=float)

    def gh_tables(self, start: int, n: int):
        """(parameter table, Chebyshev table, ids) for the compiled GH kernels."""
        if self.family != "gh":
            raise ValidationError("GH tables requested for a Pikovsky window")
        return gh_tables(self.distribution, self.raw(start, n))

    def shift(self, j: int) -> "OmegaWindow":
        return shift(self, j)

    def __eq__(self, other):
        return (
            isinstance(other, OmegaWindow)
            and self.offset == other.offset
            and self.seed == other.seed
            and self.L_past == other.L_past
            and self.L_future == other.L_future
            and self.distribution == other.distribution
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


def gh_tables(d: ParamDistribution, ids):
    maps = [gh_build(v) for v, _ in d.atoms]
    width = max(len(m.cheb) for m in maps)
    ptab = np.stack([m.vec for m in maps])
    ctab = np.zeros((len(maps), width))
    for r, m in enumerate(maps):
        ctab[r, : len(m.cheb)] = m.cheb
    return ptab, ctab, np.ascontiguousarray(ids, dtype=np.int64)


def sample_omega(d: ParamDistribution, L_past: int, L_future: int, seed: int) -> OmegaWindow:
    """i.i.d. draws from ``d`` at indices -L_past..L_future, keyed by (seed, index)."""
    if L_past < 0 or L_future < 0:
        raise ValidationError("window extents must be non-negative")
    u = counter_uniforms(seed, -L_past, L_future)
    return OmegaWindow(d.draw(u), int(seed), d, int(L_past), int(L_future), 0)


def constant_window(value, L_past: int, L_future: int, sanity=False) -> OmegaWindow:
    """Window with every fiber equal to ``value`` (deterministic system)."""
    return sample_omega(ParamDistribution.point(value, sanity=sanity), L_past, L_future, 0)


def shift(w: OmegaWindow, j: int) -> OmegaWindow:
    new = w.offset + j
    if new < -w.L_past or new > w.L_future:
        raise WindowRangeError(f"shift to {new} leaves the realized range")
    return replace(w, offset=new)


def cocycle_apply(family: Family, w: OmegaWindow, n: int, x, on_singular: Literal["raise", "nan"] = "raise"):
    """f_omega^n(x) = f_{sigma^{n-1} omega} o ... o f_omega (x)."""
    if family != w.family:
        raise ValidationError(f"window family {w.family} does not match {family}")
    arr = np.atleast_1d(np.asarray(x, dtype=float)).ravel().copy()
    if n < 0:
        raise ValidationError("n must be non-negative")
    if n > 0 and not w.covers(0, n - 1):
        raise WindowRangeError("window exhausted for the requested number of steps")
    if n == 0:
        out = arr
    elif family == "pik":
        out = K.pik_orbit_endpoints(w.alphas(0, n), arr, n)
    else:
        ptab, ctab, ids = w.gh_tables(0, n)
        out = K.gh_density_push(ptab, ctab, ids, arr, n)
    if on_singular == "raise" and np.any(np.isnan(out)):
        raise OrbitError(f"{int(np.isnan(out).sum())} orbit(s) reached the singular point")
    if np.ndim(x) == 0:
        return float(out[0])
    return out.reshape(np.shape(x))


def expect_nu(fn: Callable, d: ParamDistribution, tol=1e-10):
    """E_nu[fn(parameter)]: exact weighted sum, or Gauss-Legendre for Uniform."""
    if d.kind == "discrete":
        vals = [(p, fn(v)) for v, p in d.atoms if p > 0]
        if not all(np.isfinite(np.asarray(f)).all() for _, f in vals):
            raise ValidationError("fn is not finite on the support")
        if np.ndim(vals[0][1]) == 0:
            return math.fsum(p * float(f) for p, f in vals)
        return sum(p * np.asarray(f, dtype=float) for p, f in vals)
    if d.lo == d.hi:
        return fn(d.lo)

    def g(a):
        v = np.asarray(fn(a), dtype=float)
        if v.shape != np.shape(a):
            v = np.array([float(fn(t)) for t in np.ravel(a)]).reshape(np.shape(a))
        if not np.all(np.isfinite(v)):
            raise ValidationError("fn is not finite on the support")
        return v

    val, _ = adaptive_gauss_legendre(g, d.lo, d.hi, order=64, tol=tol)
    return val / (d.hi - d.lo)


def derive_seeds(seed: int, count: int) -> np.ndarray:
    """Independent 64-bit child seeds for Monte Carlo over omega."""
    return np.random.SeedSequence(int(seed)).generate_state(int(count), np.uint64)
