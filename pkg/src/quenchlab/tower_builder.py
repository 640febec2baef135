"""Inducing structures: boundary ladders, first-return partitions, tails, tower mass.

Conventions (both families)
---------------------------
* ``x_n^+(omega)`` increases to the neutral point 1 and ``x_n^-(omega)`` decreases
  to -1. For Pikovsky ``x_1^+ = 1/(2 alpha)``; for GH ``x_1^+`` is the zero of the
  plus branch. Ladders are stored in complementary form ``t_n = 1 - x_n^+`` as
  well, since ``x_n^+`` itself loses digits next to 1.
* ``Lambda_omega = Delta_0^-(omega) = (x_1^-(omega), 0)`` is the inducing base.
* Cell (i, j): the orbit of a point of Lambda_omega spends its first i steps
  reaching ``Delta_j^+``-type territory of fiber ``sigma^i omega`` and needs j
  further steps to re-enter Lambda, so the return time is ``R = i + j``.
* Every recursion uses the shifted fiber on the right-hand side:
  ``f_omega(x_n(omega)) = x_{n-1}(sigma omega)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from . import _kernels as K
from .errors import ConvergenceError, StructureError, ValidationError, WindowRangeError
from .map_families import gh_build
from .random_cocycle import Family, OmegaWindow, ParamDistribution, derive_seeds, sample_omega, shift

LADDER_TOL = 1e-11
DISJOINT_TOL = 1e-14


def _require(w: OmegaWindow, start, stop, what):
    if not w.covers(start, stop):
        raise WindowRangeError(f"window does not cover offsets [{start}, {stop}] needed for {what}")


def _check_family(family, w):
    if family != w.family:
        raise ValidationError(f"window family {w.family} does not match {family}")


# -------------------------------------------------------------------- ladders


@dataclass(frozen=True, eq=False)
class PreimageLadder:
    """Boundary points x_n^{+-}(omega), y_n^{+-}(omega) for n <= depth.

    Index 0 of ``y_*`` is unused (NaN). ``residual`` holds the per-n forward
    consistency error; ``max_residual`` is its maximum.
    """

    family: Family
    window: OmegaWindow = field(repr=False)
    depth: int
    x_minus: np.ndarray = field(repr=False)
    x_plus: np.ndarray = field(repr=False)
    y_minus: np.ndarray = field(repr=False)
    y_plus: np.ndarray = field(repr=False)
    t_plus: np.ndarray = field(repr=False)
    t_shift: np.ndarray = field(repr=False)
    residual: np.ndarray = field(repr=False)

    @property
    def max_residual(self) -> float:
        return float(np.nanmax(self.residual)) if self.depth else 0.0

    def delta_plus_lengths(self) -> np.ndarray:
        """m(Delta_n^+(omega)) = t_n - t_{n+1} for n = 0..depth-1."""
        return self.t_plus[:-1] - self.t_plus[1:]

    def to_csv(self, path):
        rows = zip(range(self.depth + 1), self.x_minus, self.x_plus, self.y_minus, self.y_plus, self.residual)
        _write_csv(path, ["n", "x_minus", "x_plus", "y_minus", "y_plus", "residual"], rows)


def build_ladder(family: Family, w: OmegaWindow, N: int, check: bool = True) -> PreimageLadder:
    """Pull the boundary points back through inverse branches up to depth N."""
    _check_family(family, w)
    if N < 0:
        raise ValidationError("depth must be non-negative")
    _require(w, 0, N, "ladder")
    if family == "pik":
        a0 = w.param(0)
        if w.distribution.is_degenerate:
            t = K.pik_ladder_constant(a0, N)
            tsh = np.concatenate(([np.nan], t[:-1]))
        else:
            t, tsh = K.pik_ladder_diag(w.alphas(0, N + 1), N)
        y_plus = tsh ** a0 / (2.0 * a0)
        x_plus = 1.0 - t
        resid = np.full(N + 1, 0.0)
        if N:
            fx = K.pik_fwd_array(a0, x_plus[1:])
            fy = K.pik_fwd_array(a0, y_plus[1:])
            resid[1:] = np.maximum(np.abs(fx - (1.0 - tsh[1:])), np.abs(fy + (1.0 - tsh[1:])))
    else:
        ptab, ctab, ids = w.gh_tables(0, N + 1)
        if N:
            _, t, tsh = K.gh_ladder(ptab, ctab, ids, N)
        else:
            t, tsh = np.ones(1), np.full(1, np.nan)
        p, c = ptab[ids[0]], ctab[ids[0]]
        m = gh_build(w.param(0))
        y_plus = np.full(N + 1, np.nan)
        top = m.params.b * m.eps ** m.params.k
        for n in range(1, N + 1):
            s = tsh[n]
            y_plus[n] = (s / m.params.b) ** (1.0 / m.params.k) if s <= top else K.gh_inv_plus(p, c, 1.0 - s)
        x_plus = 1.0 - t
        resid = np.zeros(N + 1)
        for n in range(1, N + 1):
            rx = abs(K.gh_fwd(p, c, x_plus[n]) - (tsh[n] - 1.0))
            ry = abs(K.gh_fwd(p, c, y_plus[n]) - (1.0 - tsh[n]))
            resid[n] = max(rx, ry)
    lad = PreimageLadder(family, w, N, -x_plus, x_plus, -y_plus, y_plus, t, tsh, resid)
    if check:
        _validate_ladder(lad)
    return lad


def _validate_ladder(lad: PreimageLadder):
    if lad.depth and lad.max_residual > LADDER_TOL:
        n = int(np.nanargmax(lad.residual))
        raise ConvergenceError(f"ladder residual {lad.max_residual:.3e} at n={n}", lad.max_residual)
    t = lad.t_plus
    if np.any(np.diff(t) >= 0) and np.any(t[1:] > 0):
        # strictly decreasing complements as long as they are representable
        pos = t > 0
        if np.any(np.diff(t[pos]) >= 0):
            raise StructureError("ladder is not strictly monotone")


def ladder_points(family: Family, w: OmegaWindow, ns) -> np.ndarray:
    """t_n(omega) = 1 - x_n^+(omega) for selected n, without the full table."""
    _check_family(family, w)
    ns = np.ascontiguousarray(ns, dtype=np.int64)
    top = int(ns.max()) if ns.size else 0
    _require(w, 0, max(top - 1, 0), "ladder points")
    if family == "pik":
        return K.pik_ladder_at(w.alphas(0, max(top, 1)), ns)
    ptab, ctab, ids = w.gh_tables(0, max(top, 1))
    return K.gh_ladder_at(ptab, ctab, ids, ns)


def deterministic_ladder(alpha: float, N: int) -> np.ndarray:
    """t_n for a constant Pikovsky exponent, n = 0..N (O(N))."""
    return K.pik_ladder_constant(float(alpha), int(N))


# ------------------------------------------------------------------ partition


@dataclass(frozen=True)
class InducedCell:
    i: int
    j: int
    left: float
    right: float
    return_time: int

    @property
    def length(self):
        return self.right - self.left


@dataclass(frozen=True, eq=False)
class InducedPartition:
    """All first-return cells with return time <= n_r, array-backed."""

    family: Family
    window: OmegaWindow = field(repr=False)
    n_r: int
    i: np.ndarray = field(repr=False)
    j: np.ndarray = field(repr=False)
    left: np.ndarray = field(repr=False)
    length: np.ndarray = field(repr=False)
    lambda_length: float

    @property
    def right(self):
        return self.left + self.length

    @property
    def return_time(self):
        return self.i + self.j

    @property
    def covered_mass(self) -> float:
        return math.fsum(np.sort(self.length))

    @property
    def uncovered_mass(self) -> float:
        return self.lambda_length - self.covered_mass

    def __len__(self):
        return int(self.i.size)

    def cell(self, k) -> InducedCell:
        return InducedCell(int(self.i[k]), int(self.j[k]), float(self.left[k]),
                           float(self.left[k] + self.length[k]), int(self.i[k] + self.j[k]))

    def cells(self):
        for k in range(len(self)):
            yield self.cell(k)

    def return_mass(self, n) -> float:
        """m{R = n} from the materialized cells."""
        return math.fsum(np.sort(self.length[self.return_time == n]))

    def to_csv(self, path):
        rows = zip(self.i, self.j, self.left, self.right, self.return_time)
        _write_csv(path, ["i", "j", "left", "right", "return_time"], rows)


def lambda_length(family: Family, w: OmegaWindow, j: int = 0) -> float:
    """|Lambda_{sigma^j omega}|."""
    p = w.param(j)
    if family == "pik":
        return 0.5 / p
    return gh_build(p).x1_plus


def build_partition(family: Family, w: OmegaWindow, N_R: int, check: bool = True) -> InducedPartition:
    """Cells (i, j) with i, j >= 1 and i + j <= N_R; O(N_R**3) pullbacks."""
    _check_family(family, w)
    if N_R < 2:
        raise ValidationError("return cutoff must be at least 2")
    _require(w, 0, N_R, "partition")
    if family == "pik":
        alphas = w.alphas(0, N_R + 1)
        tab = K.pik_ladder_table(alphas, N_R + 1)
        ii, jj, left, length = K.pik_partition(alphas, tab, N_R)
    else:
        ptab, ctab, ids = w.gh_tables(0, N_R + 1)
        tab = K.gh_ladder_table(ptab, ctab, ids, N_R + 1)
        ii, jj, left, length = K.gh_partition(ptab, ctab, ids, tab, N_R)
    part = InducedPartition(family, w, N_R, ii, jj, left, length, lambda_length(family, w))
    if check:
        _validate_partition(part)
    return part


def _validate_partition(p: InducedPartition):
    if not np.all(np.isfinite(p.left)) or not np.all(np.isfinite(p.length)):
        raise StructureError("non-finite cell endpoint")
    if np.any(p.length < 0):
        raise StructureError("negative cell length")
    tol = DISJOINT_TOL + 4e-16 * p.lambda_length
    if p.left.min() < -p.lambda_length - tol or p.right.max() > tol:
        raise StructureError("cell leaves Lambda")
    order = np.argsort(p.left, kind="stable")
    gaps = p.left[order][1:] - p.right[order][:-1]
    if gaps.size and gaps.min() < -tol:
        k = int(np.argmin(gaps))
        raise StructureError(f"cells overlap near {p.left[order][k]:.6g} (gap {gaps[k]:.3e})")
    if p.uncovered_mass < -tol * len(p):
        raise StructureError("cells cover more than Lambda")


def tail_measure(p: InducedPartition, n: int, include_uncovered: bool = False) -> float:
    """Sum of cell lengths with n < R <= n_r; optionally plus the uncovered mass (= m{R > n})."""
    if not 0 <= n < p.n_r:
        raise ValidationError(f"n must lie in [0, {p.n_r})")
    if n <= 1:
        val = p.covered_mass
    else:
        val = math.fsum(np.sort(p.length[p.return_time > n]))
    return val + (p.uncovered_mass if include_uncovered else 0.0)


def exact_tail(family: Family, w: OmegaWindow, ns) -> np.ndarray:
    """m{x in Lambda_omega : R_omega(x) > n} for each n, no partition materialized (O(n**2) each)."""
    _check_family(family, w)
    ns = np.atleast_1d(np.asarray(ns, dtype=np.int64))
    if ns.size == 0:
        return np.empty(0)
    top = int(ns.max())
    _require(w, 0, top, "tail")
    out = np.empty(ns.size)
    if family == "pik":
        alphas = w.alphas(0, top + 1)
        for k, n in enumerate(ns):
            out[k] = K.pik_tail(alphas, int(n))
    else:
        ptab, ctab, ids = w.gh_tables(0, top + 1)
        lam = lambda_length(family, w)
        for k, n in enumerate(ns):
            out[k] = lam if n == 0 else K.gh_tail(ptab, ctab, ids, int(n))
    return out


def return_mass(family: Family, w: OmegaWindow, n: int) -> float:
    """m{R_omega = n}."""
    if n < 2:
        return 0.0
    if family == "pik":
        _require(w, 0, n, "return mass")
        return float(K.pik_return_mass(w.alphas(0, n + 1), int(n)))
    a, b = exact_tail(family, w, [n - 1, n])
    return float(a - b)


# ----------------------------------------------------------------- tower mass


@dataclass
class TowerMass:
    value: float
    levels: int
    cutoff: int
    block_remainder: float
    last_level_tail: float
    level_mass: np.ndarray = field(repr=False)


def tower_mass(family: Family, w: OmegaWindow, L: int, K_cut: int, cache: dict | None = None) -> TowerMass:
    """Levels 0..L of the tower over Lambda, each truncated to return blocks ell < R <= ell + K.

    Level ell sits over ``Lambda_{sigma^-ell omega}`` and contributes
    ``m{ell < R} - m{ell + K < R}`` for that fiber. ``cache`` maps
    ``(ell, n)`` to tails and may be shared across calls.
    """
    _check_family(family, w)
    if L < 0 or K_cut < 1:
        raise ValidationError("need L >= 0 and K >= 1")
    _require(w, -L, L + K_cut, "tower mass")
    cache = {} if cache is None else cache
    masses = np.empty(L + 1)
    remainder = 0.0
    for ell in range(L + 1):
        need = [n for n in (ell, ell + K_cut) if (ell, n) not in cache]
        if need:
            vals = exact_tail(family, shift(w, -ell), need)
            cache.update({(ell, n): float(v) for n, v in zip(need, vals)})
        hi, lo = cache[(ell, ell)], cache[(ell, ell + K_cut)]
        masses[ell] = hi - lo
        remainder += lo
    return TowerMass(math.fsum(masses), L, K_cut, remainder, cache[(L, L)], masses)


# --------------------------------------------------------------- annealed


@dataclass
class AnnealedEstimate:
    n: int
    mean: float
    stderr: float
    ci_low: float
    ci_high: float
    n_samples: int


def annealed_tail(family: Family, d: ParamDistribution, n, n_samples: int, seed: int):
    """E_P m{R_omega = n} by Monte Carlo over omega; one estimate per requested n."""
    if n_samples < 30:
        raise ValidationError("annealed estimates need at least 30 samples")
    ns = np.atleast_1d(np.asarray(n, dtype=np.int64))
    vals = np.empty((n_samples, ns.size))
    for s, sd in enumerate(derive_seeds(seed, n_samples)):
        w = sample_omega(d, 0, int(ns.max()) + 1, int(sd))
        for k, nn in enumerate(ns):
            vals[s, k] = return_mass(family, w, int(nn))
    mean = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / math.sqrt(n_samples)
    out = [AnnealedEstimate(int(nn), float(m), float(e), float(m - 1.96 * e), float(m + 1.96 * e), n_samples)
           for nn, m, e in zip(ns, mean, se)]
    return out[0] if np.ndim(n) == 0 else out


# -------------------------------------------------------------------- n_1


def n1_grid(N: int, dense: int = 100, per_decade: int = 40) -> np.ndarray:
    """Every n <= dense, then roughly geometric spacing up to N."""
    dense = min(dense, N)
    head = np.arange(2, dense + 1)
    if N <= dense:
        return head
    num = max(2, int(per_decade * math.log10(N / dense)) + 1)
    tail = np.unique(np.round(np.geomspace(dense, N, num)).astype(np.int64))
    return np.unique(np.concatenate((head, tail[tail > dense], [N])))


def quenched_envelope(ns, alpha1: float, c: float, q: float) -> np.ndarray:
    """(c^-1 (log n)^q / n)^(1/(alpha1 - 1))."""
    ns = np.asarray(ns, dtype=float)
    return (np.log(ns) ** q / (c * ns)) ** (1.0 / (alpha1 - 1.0))


def estimate_n1(ns, t, alpha1: float, c: float, q: float):
    """Smallest grid point m with t_n <= envelope(n) for all grid n > m.

    Returns ``(n1, censored)``; censored when the inequality fails at the last n.
    """
    ns = np.asarray(ns)
    ok = np.asarray(t) <= quenched_envelope(ns, alpha1, c, q)
    if not ok[-1]:
        return int(ns[-1]), True
    bad = np.flatnonzero(~ok)
    return (int(ns[bad[-1]]) if bad.size else 1), False


# -------------------------------------------------------------------- CSV


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, str):
        return v
    return int(v)


def _write_csv(path, header, rows: Iterable):
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for r in rows:
            wr.writerow([_cell(v) for v in r])
    tmp.replace(path)
