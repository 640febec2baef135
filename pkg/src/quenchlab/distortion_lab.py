"""Separation times, induced Jacobians, distortion scans, Schwarzian and Koebe-ratio scans."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import OrbitError, ValidationError
from .map_families import GHParams, PikParams, gh_build, gh_schwarzian, pik_schwarzian
from .random_cocycle import Family, OmegaWindow
from .tower_builder import InducedCell, InducedPartition, _write_csv, build_ladder, lambda_length

GAMMA = 0.5
SCHWARZIAN_MARGIN = 1e-8
DEFAULT_MAX_STEPS = 4000


# ------------------------------------------------------------------ separation


@dataclass(frozen=True)
class Separation:
    """``status``: 'separated', 'exceeds' (still together after max_induced) or 'censored'."""

    s: int
    status: str

    @property
    def exceeds(self):
        return self.status == "exceeds"


_STATUS = {0: "separated", 1: "exceeds", 2: "censored"}


def _future(w: OmegaWindow):
    """Realized fibers from the current offset onward."""
    return w.L_future - w.offset + 1


def separation_time(family: Family, w: OmegaWindow, x: float, y: float, max_induced: int = 64,
                    max_steps: int = DEFAULT_MAX_STEPS) -> Separation:
    """Number of induced iterations before x and y fall into distinct first-return cells."""
    lam = lambda_length(family, w)
    for v in (x, y):
        if not -lam < v < 0.0:
            raise ValidationError("points must lie in Lambda_omega")
    n = _future(w)
    max_steps = min(max_steps, n - 1)
    if family == "pik":
        s, st = K.pik_separation(w.alphas(0, n), 0, float(x), float(y), max_induced, max_steps)
    else:
        pt, ct, ids = w.gh_tables(0, n)
        s, st = K.gh_separation(pt, ct, ids, 0, float(x), float(y), max_induced, max_steps)
    return Separation(int(s), _STATUS[int(st)])


# -------------------------------------------------------------------- Jacobian


def first_return(family: Family, w: OmegaWindow, x: float, max_steps: int = DEFAULT_MAX_STEPS):
    """(i, R, F(x), log J) of the first return of x in Lambda_omega; R = -1 when censored."""
    n = min(_future(w), max_steps + 1)
    if family == "pik":
        return K.pik_first_return(w.alphas(0, n), 0, float(x), n - 1)
    pt, ct, ids = w.gh_tables(0, n)
    return K.gh_first_return(pt, ct, ids, 0, float(x), n - 1)


def induced_jacobian(family: Family, w: OmegaWindow, cell: InducedCell, x: float, log: bool = False) -> float:
    """|(f_omega^R)'(x)| accumulated in log space along the cell itinerary."""
    if not cell.left < x < cell.right:
        raise ValidationError("x must lie strictly inside the cell")
    i, R, _, logj = first_return(family, w, x, cell.return_time + 1)
    if (i, R) != (cell.i, cell.return_time):
        raise OrbitError(f"orbit itinerary ({i}, {R}) does not match cell ({cell.i}, {cell.return_time})")
    return float(logj) if log else float(math.exp(logj))


# --------------------------------------------------------------------- scans


@dataclass
class DistortionSample:
    i: int
    j: int
    x: float
    y: float
    s: int
    log_jx: float
    log_jy: float
    image_distance: float

    @property
    def ratio(self):
        return math.exp(abs(self.log_jx - self.log_jy))


@dataclass
class DistortionReport:
    samples: list = field(repr=False)
    D_hat: float
    D_image: float
    max_ratio: float
    censored: int

    def violations(self, D: float, gamma: float = GAMMA) -> int:
        """Samples with ratio - 1 > D * gamma**s."""
        return sum(1 for q in self.samples if q.ratio - 1.0 > D * gamma**q.s)

    def to_csv(self, path, D: float | None = None, gamma: float = GAMMA):
        D = self.D_hat if D is None else D
        rows = [(q.i, q.j, q.s, q.ratio, D * gamma**q.s, int(q.ratio - 1.0 <= D * gamma**q.s)) for q in self.samples]
        _write_csv(path, ["i", "j", "s", "ratio", "bound", "satisfied"], rows)


RESOLUTION = 1e-11


def _pair_offsets(length, scale, rng, count):
    """Dyadic fractions of the cell length so that all separation depths get populated.

    Offsets stop at ``RESOLUTION * scale``: closer pairs merge under roundoff
    and would never separate.
    """
    deepest = max(1, int(math.floor(math.log2(length / (RESOLUTION * scale)))))
    depth = rng.integers(1, deepest + 1, size=count)
    return length * np.exp2(-depth.astype(float))


def distortion_scan(family: Family, w: OmegaWindow, partition: InducedPartition, pairs_per_cell: int, seed: int,
                    max_return: int | None = None, max_steps: int = DEFAULT_MAX_STEPS,
                    max_induced: int = 64) -> DistortionReport:
    """Sample pairs inside cells and record |J(x)/J(y)|, separation time and image distance.

    ``D_hat`` is the smallest D with ratio - 1 <= D (1/2)^s on the sample;
    ``D_image`` the smallest D with |log J(x)/J(y)| <= D |F x - F y|.
    """
    rng = np.random.default_rng(seed)
    rt = partition.return_time
    sel = np.flatnonzero(rt <= (max_return or partition.n_r))
    samples = []
    censored = 0
    n = _future(w)
    max_steps = min(max_steps, n - 1)
    if family == "pik":
        tabs = (w.alphas(0, n),)
        fr, sep = K.pik_first_return, K.pik_separation
    else:
        tabs = w.gh_tables(0, n)
        fr, sep = K.gh_first_return, K.gh_separation
    for c in sel:
        cell = partition.cell(c)
        ln = cell.length
        if ln <= 0:
            continue
        xs = cell.left + ln * rng.uniform(0.05, 0.95, size=pairs_per_cell)
        offs = _pair_offsets(ln, abs(cell.left), rng, pairs_per_cell)
        for x, dx in zip(xs, offs):
            y = x + dx if x + dx < cell.right else x - dx
            if not cell.left < y < cell.right or y == x:
                continue
            ix, rx, fx, ljx = fr(*tabs, 0, x, max_steps)
            iy, ry, fy, ljy = fr(*tabs, 0, y, max_steps)
            if rx < 0 or ry < 0 or (ix, rx) != (cell.i, cell.return_time) or (iy, ry) != (ix, rx):
                censored += 1
                continue
            s, st = sep(*tabs, 0, x, y, max_induced, max_steps)
            if st != 0:
                censored += 1
                continue
            samples.append(DistortionSample(cell.i, cell.j, x, y, int(s), ljx, ljy, abs(fx - fy)))
    if not samples:
        return DistortionReport([], 0.0, 0.0, 1.0, censored)
    D_hat = max((q.ratio - 1.0) / GAMMA**q.s for q in samples)
    D_img = max((abs(q.log_jx - q.log_jy) / q.image_distance) if q.image_distance > 0 else 0.0 for q in samples)
    return DistortionReport(samples, D_hat, D_img, max(q.ratio for q in samples), censored)


@dataclass
class SchwarzianReport:
    max_value: float
    argmax: float
    n_points: int
    domain: tuple

    @property
    def negative(self) -> bool:
        """Sign claim with a roundoff margin."""
        return self.max_value < SCHWARZIAN_MARGIN


def schwarzian_domain(params) -> tuple:
    """I+ minus Delta_0^+: [x_1^+, 1); the map is odd/even so I- mirrors it."""
    if isinstance(params, GHParams):
        return gh_build(params).x1_plus, 1.0
    a = params.alpha if isinstance(params, PikParams) else float(params)
    return 0.5 / a, 1.0


def schwarzian_scan(family: Family, params, grid: int | np.ndarray = 10_000) -> SchwarzianReport:
    """max Sg over a grid of I+ minus Delta_0^+ (open at both ends)."""
    lo, hi = schwarzian_domain(params)
    if np.ndim(grid) == 0:
        xs = np.linspace(lo, hi, int(grid) + 2)[1:-1]
    else:
        xs = np.asarray(grid, dtype=float)
    if family == "pik":
        p = params if isinstance(params, PikParams) else PikParams(float(params), sanity=float(params) == 1.0)
        vals = pik_schwarzian(p, xs)
    else:
        vals = gh_schwarzian(gh_build(params), xs)
    k = int(np.nanargmax(vals))
    return SchwarzianReport(float(vals[k]), float(xs[k]), int(xs.size), (lo, hi))


@dataclass
class KoebeReport:
    ratios: np.ndarray = field(repr=False)
    max_ratio: float
    spacing_ok: bool
    spacing_margins: np.ndarray = field(repr=False)


def spacing_margins(family: Family, e1, e2) -> np.ndarray:
    """inf_omega x_{i-1}^- - sup_omega x_i^- for i = 1..4 (positive when the hypothesis holds).

    The extremes are the deterministic ladders at the box corners.
    """
    if family == "pik":
        t1 = K.pik_ladder_constant(float(e1), 4)
        t2 = K.pik_ladder_constant(float(e2), 4)
    else:
        m1, m2 = gh_build(e1), gh_build(e2)
        t1 = K.gh_ladder_constant(m1.vec, m1.cheb, 4)
        t2 = K.gh_ladder_constant(m2.vec, m2.cheb, 4)
    # x_i^- = t_i - 1; the largest t_i comes from the slow corner
    hi = np.maximum(t1, t2)
    lo = np.minimum(t1, t2)
    return lo[:-1] - hi[1:]


def koebe_ratio_scan(family: Family, w: OmegaWindow, N: int) -> KoebeReport:
    """(x_{n+1}^- - x_{n+2}^-) / (x_{n+2}^- - x_{n+3}^-) for n = 0..N."""
    lad = build_ladder(family, w, N + 3)
    gaps = lad.delta_plus_lengths()  # t_n - t_{n+1}
    ratios = gaps[1 : N + 2] / gaps[2 : N + 3]
    d = w.distribution
    if family == "pik":
        e1, e2 = d.bounds()
    else:
        from .assumption_checker import _gh_corners

        e1, e2 = _gh_corners(d)
    margins = spacing_margins(family, e1, e2)
    return KoebeReport(ratios, float(ratios.max()), bool(np.all(margins > 0)), margins)
