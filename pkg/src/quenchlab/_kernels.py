"""Compiled inner loops (numba). Pure functions on floats and arrays.

Conventions
-----------
Pikovsky maps are evaluated on (0, 1] and extended oddly. Near the neutral
point x = 1 we work in complementary coordinates ``t = 1 - x`` and
``s = 1 - g(x)``, where the outer branch reads ``t = phi(s) = s - s**a / (2a)``.

GH maps are described by a flat parameter vector (see ``GH_FIELDS``) plus
Chebyshev coefficients of the glue primitive; they are even functions.
"""

import math

import numpy as np
from numba import njit

SINGULAR_TOL = 1e-13
_EPS = 2.220446049250313e-16

# ---------------------------------------------------------------- Pikovsky


@njit(cache=True)
def phi(a, s):
    """Outer-branch preimage in complementary coordinates."""
    return s - s**a / (2.0 * a)


@njit(cache=True)
def phi_solve(a, t):
    """Solve ``s - s**a/(2a) = t`` for s in [t, 1].

    Two fixed-point sweeps of s = t + s**a/(2a) (a contraction with factor
    <= 1/2) seed Newton; one extra step after the step size drops below 1e-9
    lands at full precision.
    """
    if t <= 0.0:
        return 0.0
    c = 0.5 / a
    s = t + c * t**a
    s = t + c * s**a
    if s > 1.0:
        s = 1.0
    for _ in range(60):
        sa = s**a
        step = (s - c * sa - t) / (1.0 - 0.5 * sa / s)
        s -= step
        if abs(step) <= 1e-9 * s:
            sa = s**a
            return s - (s - c * sa - t) / (1.0 - 0.5 * sa / s)
    return s


@njit(cache=True)
def pik_fwd(a, x):
    """g_a(x); NaN at the singular point."""
    ax = abs(x)
    if ax < SINGULAR_TOL:
        return np.nan
    if ax <= 0.5 / a:
        g = (2.0 * a * ax) ** (1.0 / a) - 1.0
    else:
        g = 1.0 - phi_solve(a, 1.0 - ax)
    return g if x > 0 else -g


@njit(cache=True)
def pik_dxdg(a, x, g):
    """dx/dg on the branch containing x (x > 0 side), given g = g(x)."""
    if abs(x) <= 0.5 / a:
        return 0.5 * (1.0 + abs(g)) ** (a - 1.0) if x > 0 else 0.5 * (1.0 - g) ** (a - 1.0)
    return 1.0 - 0.5 * (1.0 - abs(g)) ** (a - 1.0)


@njit(cache=True)
def pik_derivs(a, x):
    """(g, g', g'') at x, using the odd symmetry for x < 0."""
    ax = abs(x)
    g = pik_fwd(a, ax)
    if ax <= 0.5 / a:
        u = 1.0 + g
        x1 = 0.5 * u ** (a - 1.0)
        x2 = 0.5 * (a - 1.0) * u ** (a - 2.0) if a != 1.0 else 0.0
    else:
        u = 1.0 - g
        x1 = 1.0 - 0.5 * u ** (a - 1.0)
        x2 = 0.5 * (a - 1.0) * u ** (a - 2.0) if a != 1.0 else 0.0
    d1 = 1.0 / x1
    d2 = -x2 / x1**3
    if x < 0:
        return -g, d1, -d2
    return g, d1, d2


@njit(cache=True)
def pik_fwd_array(a, xs):
    out = np.empty_like(xs)
    for i in range(xs.size):
        out[i] = pik_fwd(a, xs[i])
    return out


@njit(cache=True)
def pik_orbit_endpoints(alphas, xs, nsteps):
    """Apply the cocycle ``nsteps`` times to each x; NaN marks a singular hit."""
    out = xs.copy()
    for i in range(xs.size):
        x = xs[i]
        for k in range(nsteps):
            x = pik_fwd(alphas[k], x)
            if x != x:
                break
        out[i] = x
    return out


@njit(cache=True)
def pik_ladder_table(alphas, depth):
    """``tab[k, n] = t_n(sigma^k omega)`` for k + n <= depth.

    ``t_n = 1 - x_n^+`` with ``t_0 = 1`` and ``t_n(w) = phi_{a(w)}(t_{n-1}(sigma w))``.
    Memory is O(depth**2); intended for depth up to a few thousand.
    """
    tab = np.full((depth + 1, depth + 1), np.nan)
    for k in range(depth + 1):
        tab[k, 0] = 1.0
    for n in range(1, depth + 1):
        for k in range(0, depth + 1 - n):
            tab[k, n] = phi(alphas[k], tab[k + 1, n - 1])
    return tab


@njit(cache=True)
def pik_ladder_diag(alphas, depth):
    """``t_n(omega)`` and ``t_{n-1}(sigma omega)`` for n = 0..depth, O(depth**2) time."""
    t = np.empty(depth + 1)
    tprev = np.empty(depth + 1)
    t[0] = 1.0
    tprev[0] = np.nan
    for n in range(1, depth + 1):
        s = 1.0
        for k in range(n - 1, 0, -1):
            s = phi(alphas[k], s)
        tprev[n] = s
        t[n] = phi(alphas[0], s)
    return t, tprev


@njit(cache=True)
def pik_ladder_constant(a, depth):
    t = np.empty(depth + 1)
    t[0] = 1.0
    for n in range(1, depth + 1):
        t[n] = phi(a, t[n - 1])
    return t


@njit(cache=True)
def _pull_pair(alphas, i, s, d):
    """Pull the interval (1-s, 1-s+d) of the fiber sigma^i omega back to Lambda_omega.

    Returns (left, length) of the preimage inside delta_i^-(omega): first the
    outer chain through fibers i-1..1, then the inner minus branch at fiber 0.
    """
    for k in range(i - 1, 0, -1):
        a = alphas[k]
        if d >= s:
            dd = s**a
        else:
            dd = -(s**a) * math.expm1(a * math.log1p(-d / s))
        d = d - dd / (2.0 * a)
        s = s - s**a / (2.0 * a)
    a0 = alphas[0]
    if d >= s:
        length = s**a0 / (2.0 * a0)
    else:
        length = -(s**a0) * math.expm1(a0 * math.log1p(-d / s)) / (2.0 * a0)
    left = -(s**a0) / (2.0 * a0)
    return left, length


@njit(cache=True)
def pik_tail(alphas, n):
    """Exact Lebesgue measure of {R_omega > n} inside Lambda_omega.

    Uses a backward sweep ``T_k`` for the cut points and pair propagation for
    every inducing depth i <= n: O(n**2).
    """
    T = np.empty(n + 2)
    T[n + 1] = 1.0
    for k in range(n, 0, -1):
        T[k] = phi(alphas[k], T[k + 1])
    a0 = alphas[0]
    total = 0.5 / a0 * T[1] ** a0
    comp = 0.0
    for i in range(1, n + 1):
        ai = alphas[i]
        z = 0.5 / ai * T[i + 1] ** ai
        _, length = _pull_pair(alphas, i, 1.0, z)
        # Kahan-compensated accumulation
        y = length - comp
        tmp = total + y
        comp = (tmp - total) - y
        total = tmp
    return total


@njit(cache=True)
def pik_tail_many(alphas, ns):
    out = np.empty(ns.size)
    for k in range(ns.size):
        out[k] = pik_tail(alphas, ns[k])
    return out


@njit(cache=True)
def pik_return_mass(alphas, n):
    """Measure of {R_omega = n}: sum over i + j = n of the cell lengths."""
    total = 0.0
    for i in range(1, n):
        j = n - i
        # y_j^+(sigma^i w) and y_{j+1}^+(sigma^i w) from chains over fibers i+1..i+j
        s_hi = 1.0
        for k in range(i + j - 1, i, -1):
            s_hi = phi(alphas[k], s_hi)
        s_lo = phi(alphas[i + j], 1.0)
        for k in range(i + j - 1, i, -1):
            s_lo = phi(alphas[k], s_lo)
        ai = alphas[i]
        z_hi = 0.5 / ai * s_hi**ai
        z_lo = 0.5 / ai * s_lo**ai
        _, ln = _pull_pair(alphas, i, 1.0 - z_lo, z_hi - z_lo)
        total += ln
    return total


@njit(cache=True)
def pik_partition(alphas, tab, n_r):
    """All cells (i, j) with 2 <= i + j <= n_r.

    ``tab`` is ``pik_ladder_table(alphas, n_r + 1)``. Cell (i, j) is the pullback
    of (y_{j+1}^+, y_j^+) of fiber sigma^i omega; lengths come from pair
    propagation so deep cells keep full relative precision.
    """
    ncell = (n_r - 1) * n_r // 2
    ii = np.empty(ncell, np.int64)
    jj = np.empty(ncell, np.int64)
    left = np.empty(ncell)
    length = np.empty(ncell)
    c = 0
    for i in range(1, n_r):
        ai = alphas[i]
        for j in range(1, n_r - i + 1):
            # y_j^+(sigma^i w) = t_{j-1}(sigma^{i+1} w)^a_i / (2 a_i)
            z_hi = 0.5 / ai * tab[i + 1, j - 1] ** ai
            z_lo = 0.5 / ai * tab[i + 1, j] ** ai
            # interval (z_lo, z_hi) in t coordinates: s = 1 - z_lo, width z_hi - z_lo
            d = z_hi - z_lo
            l0, ln = _pull_pair(alphas, i, 1.0 - z_lo, d)
            ii[c] = i
            jj[c] = j
            left[c] = l0
            length[c] = ln
            c += 1
    return ii, jj, left, length


@njit(cache=True)
def pik_first_return(alphas, start, x, max_steps):
    """Iterate from Lambda at fiber ``start`` until the orbit re-enters Lambda.

    Returns (i, R, x_R, logJ): i is the first time the orbit sits in Delta_0^+,
    R the return time. R = -1 when ``max_steps`` is exceeded or the orbit hits
    the singularity; ``alphas`` must cover [start, start + max_steps].
    """
    logj = 0.0
    i = -1
    for n in range(1, max_steps + 1):
        a = alphas[start + n - 1]
        g, d1, _ = pik_derivs(a, x)
        if g != g:
            return -1, -1, np.nan, np.nan
        logj += math.log(abs(d1))
        x = g
        an = alphas[start + n]
        if i < 0 and x > 0.0 and x < 0.5 / an:
            i = n
        if i > 0 and x < 0.0 and x > -0.5 / an:
            return i, n, x, logj
    return -1, -1, np.nan, np.nan


@njit(cache=True)
def pik_separation(alphas, start, x, y, max_induced, max_steps):
    """Separation time of x, y in Lambda_{sigma^start omega}.

    Returns (s, status): status 0 separated, 1 still together after
    ``max_induced`` returns, 2 censored (orbit left the resolvable range).
    """
    off = start
    for s in range(max_induced):
        budget = min(max_steps, alphas.size - 1 - off)
        if budget < 1:
            return s, 2
        ix, rx, xn, _ = pik_first_return(alphas, off, x, budget)
        iy, ry, yn, _ = pik_first_return(alphas, off, y, budget)
        if rx < 0 or ry < 0:
            return s, 2
        if ix != iy or rx != ry:
            return s, 0
        x, y = xn, yn
        off += rx
    return max_induced, 1


@njit(cache=True)
def pik_cor_mc(alphas, xs, nmax, phi_kind, psi_kind):
    """Accumulate sums of phi(x_n) psi(x_0) over sample points for n = 0..nmax.

    Observable kinds: 0 identity, 1 sign indicator (1_{x>0} - 1/2), 2 x**2.
    Returns (sum_prod, sum_prod_sq, sum_phi, n_valid) per n.
    """
    sp = np.zeros(nmax + 1)
    sp2 = np.zeros(nmax + 1)
    sphi = np.zeros(nmax + 1)
    nval = np.zeros(nmax + 1)
    for m in range(xs.size):
        x0 = xs[m]
        if psi_kind == 0:
            ps = x0
        elif psi_kind == 1:
            ps = (1.0 if x0 > 0 else 0.0) - 0.5
        else:
            ps = x0 * x0
        x = x0
        for n in range(nmax + 1):
            if phi_kind == 0:
                ph = x
            elif phi_kind == 1:
                ph = (1.0 if x > 0 else 0.0) - 0.5
            else:
                ph = x * x
            v = ph * ps
            sp[n] += v
            sp2[n] += v * v
            sphi[n] += ph
            nval[n] += 1.0
            if n < nmax:
                x = pik_fwd(alphas[n], x)
                if x != x:
                    break
    return sp, sp2, sphi, nval


# ---------------------------------------------------------------------- GH
# parameter vector layout
GH_GAMMA, GH_K, GH_A, GH_B, GH_EPS, GH_RHO, GH_V0, GH_L, GH_Q0, GH_DQ, GH_LAM, GH_NCHEB = range(12)
GH_NFIELDS = 12


@njit(cache=True)
def _clenshaw(c, n, y):
    b1 = 0.0
    b2 = 0.0
    for k in range(n - 1, 0, -1):
        b0 = 2.0 * y * b1 - b2 + c[k]
        b2 = b1
        b1 = b0
    return y * b1 - b2 + c[0]


@njit(cache=True)
def _glue_q(p, s):
    lam = p[GH_LAM]
    if lam < 1e-10:
        f, f1, f2 = s, 1.0, 0.0
    else:
        em = math.expm1(lam)
        f = math.expm1(lam * s) / em
        e = math.exp(lam * s) / em
        f1 = lam * e
        f2 = lam * lam * e
    return p[GH_Q0] + p[GH_DQ] * f, p[GH_DQ] * f1, p[GH_DQ] * f2


@njit(cache=True)
def gh_plus(p, cheb, x):
    """h on (0, 1]."""
    eps = p[GH_EPS]
    rho = p[GH_RHO]
    if x <= eps:
        return 1.0 - p[GH_B] * x ** p[GH_K]
    if x >= 1.0 - rho:
        return -x + p[GH_A] * (1.0 - x) ** p[GH_GAMMA]
    s = (x - eps) / p[GH_L]
    return p[GH_V0] - p[GH_L] * _clenshaw(cheb, int(p[GH_NCHEB]), 2.0 * s - 1.0)


@njit(cache=True)
def gh_plus_derivs(p, cheb, x):
    """(h, h', h'', h''') on (0, 1]."""
    eps = p[GH_EPS]
    rho = p[GH_RHO]
    if x <= eps:
        b, k = p[GH_B], p[GH_K]
        xk = x**k
        return (1.0 - b * xk, -b * k * xk / x, -b * k * (k - 1.0) * xk / (x * x),
                -b * k * (k - 1.0) * (k - 2.0) * xk / (x * x * x))
    if x >= 1.0 - rho:
        a, g = p[GH_A], p[GH_GAMMA]
        t = 1.0 - x
        tg = t**g
        return (-x + a * tg, -1.0 - a * g * tg / t, a * g * (g - 1.0) * tg / (t * t),
                -a * g * (g - 1.0) * (g - 2.0) * tg / (t * t * t))
    L = p[GH_L]
    s = (x - eps) / L
    q, q1, q2 = _glue_q(p, s)
    q1 /= L
    q2 /= L * L
    h = p[GH_V0] - L * _clenshaw(cheb, int(p[GH_NCHEB]), 2.0 * s - 1.0)
    d1 = -1.0 / (q * q)
    d2 = 2.0 * q1 / q**3
    d3 = -6.0 * q1 * q1 / q**4 + 2.0 * q2 / q**3
    return h, d1, d2, d3


@njit(cache=True)
def gh_fwd(p, cheb, x):
    ax = abs(x)
    if ax < SINGULAR_TOL:
        return np.nan
    return gh_plus(p, cheb, ax)


@njit(cache=True)
def gh_inv_plus(p, cheb, y):
    """Inverse of the decreasing plus branch: x in (0, 1] with h(x) = y."""
    b, k, a, g = p[GH_B], p[GH_K], p[GH_A], p[GH_GAMMA]
    eps, rho = p[GH_EPS], p[GH_RHO]
    v0 = 1.0 - b * eps**k
    v1 = -(1.0 - rho) + a * rho**g
    if y >= v0:
        return ((1.0 - y) / b) ** (1.0 / k)
    if y <= v1:
        u = 1.0 + y
        return 1.0 - gh_solve_local_t(a, g, u, rho)
    lo = eps
    hi = 1.0 - rho
    x = lo + (hi - lo) * (v0 - y) / (v0 - v1)
    for _ in range(200):
        h, d1, _, _ = gh_plus_derivs(p, cheb, x)
        f = h - y
        if f > 0.0:
            lo = x
        else:
            hi = x
        xn = x - f / d1
        if not (xn > lo and xn < hi):
            xn = 0.5 * (lo + hi)
        if abs(xn - x) <= 1e-15:
            return xn
        x = xn
    return x


@njit(cache=True)
def gh_solve_local_t(a, g, u, tmax):
    """Solve ``t + a t**g = u`` for t in [0, tmax] (relative accuracy)."""
    if u <= 0.0:
        return 0.0
    lo = 0.0
    hi = min(u, tmax)
    t = u / (1.0 + a * u ** (g - 1.0))
    if not (t > lo and t <= hi):
        t = 0.5 * (lo + hi)
    for _ in range(200):
        f = t + a * t**g - u
        if f > 0.0:
            hi = t
        else:
            lo = t
        d = 1.0 + a * g * t ** (g - 1.0)
        tn = t - f / d
        if not (tn > lo and tn < hi):
            tn = 0.5 * (lo + hi)
        if abs(tn - t) <= 4.0 * _EPS * tn:
            return tn
        t = tn
    return t


@njit(cache=True)
def gh_density_push(ptab, ctab, ids, xs, nsteps):
    """Push sample points through ``nsteps`` GH fiber maps (ids index the map table)."""
    out = xs.copy()
    for m in range(xs.size):
        x = xs[m]
        for k in range(nsteps):
            mid = ids[k]
            x = gh_fwd(ptab[mid], ctab[mid], x)
            if x != x:
                break
        out[m] = x
    return out


@njit(cache=True)
def gh_ladder(ptab, ctab, ids, depth):
    """Boundary sequences of a GH window in complementary coordinates.

    For n <= depth returns u_n = 1 + x_n^-(omega), tp_n = 1 - x_n^+(omega) and
    the forward residuals. Each x_n(omega) is an independent chain over
    fibers n-1..0, so the cost is O(depth**2).
    """
    u = np.empty(depth + 1)
    tp = np.empty(depth + 1)
    u_sh = np.empty(depth + 1)
    u[0] = 1.0
    tp[0] = 1.0
    u_sh[0] = np.nan
    for n in range(1, depth + 1):
        # chain for u_n(omega): u_0(sigma^n w) = 1, then pull back n times
        v = 1.0
        for k in range(n - 1, -1, -1):
            if k == 0:
                u_sh[n] = v
            v = gh_pull_minus_u(ptab[ids[k]], ctab[ids[k]], v)
        u[n] = v
    for n in range(1, depth + 1):
        # x_n^+(w) solves h_w(x) = x_{n-1}^-(sigma w), i.e. 1 + h = u_{n-1}(sigma w)
        tp[n] = gh_pull_plus_t(ptab[ids[0]], ctab[ids[0]], u_sh[n] if n >= 1 else 1.0)
    return u, tp, u_sh


@njit(cache=True)
def gh_pull_minus_u(p, cheb, v):
    """Minus-branch preimage in complementary coordinates.

    Given v = 1 + y with y in (-1, 1), return u = 1 + x with x in (-1, 0), h(x) = y.
    Uses evenness: x = -x_plus(y), so u = 1 - x_plus = complementary t.
    """
    return gh_pull_plus_t(p, cheb, v)


@njit(cache=True)
def gh_pull_plus_t(p, cheb, v):
    """t = 1 - x for x in (0, 1] with 1 + h(x) = v."""
    a, g, rho = p[GH_A], p[GH_GAMMA], p[GH_RHO]
    v1 = rho + a * rho**g
    if v <= v1:
        return gh_solve_local_t(a, g, v, rho)
    return 1.0 - gh_inv_plus(p, cheb, v - 1.0)


# GH interval pullbacks -------------------------------------------------

_GL16_X = np.array([-0.9894009349916499, -0.9445750230732326, -0.8656312023878318,
                    -0.7554044083550030, -0.6178762444026438, -0.4580167776572274,
                    -0.2816035507792589, -0.0950125098376374, 0.0950125098376374,
                    0.2816035507792589, 0.4580167776572274, 0.6178762444026438,
                    0.7554044083550030, 0.8656312023878318, 0.9445750230732326,
                    0.9894009349916499])
_GL16_W = np.array([0.0271524594117541, 0.0622535239386479, 0.0951585116824928,
                    0.1246289712555339, 0.1495959888165767, 0.1691565193950025,
                    0.1826034150449236, 0.1894506104550685, 0.1894506104550685,
                    0.1826034150449236, 0.1691565193950025, 0.1495959888165767,
                    0.1246289712555339, 0.0951585116824928, 0.0622535239386479,
                    0.0271524594117541])


@njit(cache=True)
def gh_drop(p, cheb, x, ell):
    """h(x) - h(x + ell) >= 0 for 0 < x < x + ell <= 1, free of cancellation."""
    eps, rho = p[GH_EPS], p[GH_RHO]
    a = x
    b = x + ell
    total = 0.0
    if a < eps:
        hi = min(b, eps)
        k = p[GH_K]
        if a <= 0.0:
            total += p[GH_B] * hi**k
        else:
            total += p[GH_B] * a**k * math.expm1(k * math.log1p((hi - a) / a))
        a = hi
    if a < b and a < 1.0 - rho:
        hi = min(b, 1.0 - rho)
        L = p[GH_L]
        if hi - a > 1e-3 * L:
            n = int(p[GH_NCHEB])
            total += L * (_clenshaw(cheb, n, 2.0 * (hi - eps) / L - 1.0)
                          - _clenshaw(cheb, n, 2.0 * (a - eps) / L - 1.0))
        else:
            half = 0.5 * (hi - a)
            mid = 0.5 * (hi + a)
            acc = 0.0
            for m in range(16):
                s = (mid + half * _GL16_X[m] - eps) / L
                q, _, _ = _glue_q(p, s)
                acc += _GL16_W[m] / (q * q)
            total += half * acc
        a = hi
    if a < b:
        t = 1.0 - a
        d = b - a
        g = p[GH_GAMMA]
        if d >= t:
            total += d + p[GH_A] * t**g
        else:
            total += d - p[GH_A] * t**g * math.expm1(g * math.log1p(-d / t))
    return total


@njit(cache=True)
def gh_pull_pair(p, cheb, y, e):
    """Plus-branch preimage of the value interval (y, y + e): returns (left, length)."""
    left = gh_inv_plus(p, cheb, y + e)
    if e <= 0.0:
        return left, 0.0
    lo = 0.0
    hi = 1.0 - left
    if left > 0.0:
        _, d1, _, _ = gh_plus_derivs(p, cheb, left)
        ell = min(e / abs(d1), 0.5 * hi)
    else:
        ell = 0.5 * hi
    for _ in range(200):
        f = gh_drop(p, cheb, left, ell) - e
        if f > 0.0:
            hi = ell
        else:
            lo = ell
        _, d1, _, _ = gh_plus_derivs(p, cheb, left + ell)
        en = ell - f / abs(d1)
        if not (en > lo and en < hi):
            en = 0.5 * (lo + hi)
        if abs(en - ell) <= 4.0 * _EPS * en:
            return left, en
        ell = en
    return left, ell


@njit(cache=True)
def gh_pull_pair_top(p, cheb, t_lo, t_hi):
    """Plus-branch preimage of values (1 - t_hi, 1 - t_lo) near 1: (left, length)."""
    b, k, eps = p[GH_B], p[GH_K], p[GH_EPS]
    right = (t_hi / b) ** (1.0 / k)
    if right <= eps:
        left = (t_lo / b) ** (1.0 / k)
        if t_lo <= 0.0:
            return 0.0, right
        return left, left * math.expm1(math.log(t_hi / t_lo) / k)
    return gh_pull_pair(p, cheb, 1.0 - t_hi, t_hi - t_lo)


@njit(cache=True)
def gh_ladder_table(ptab, ctab, ids, depth):
    """``tab[k, n] = 1 - x_n^+(sigma^k omega)`` (= 1 + x_n^- by evenness)."""
    tab = np.full((depth + 1, depth + 1), np.nan)
    for k in range(depth + 1):
        tab[k, 0] = 1.0
    for n in range(1, depth + 1):
        for k in range(0, depth + 1 - n):
            mid = ids[k]
            tab[k, n] = gh_pull_plus_t(ptab[mid], ctab[mid], tab[k + 1, n - 1])
    return tab


@njit(cache=True)
def _gh_pull_cell(ptab, ctab, ids, i, left, ell):
    """Continue a pullback from fiber i-1 down to fiber 1 through Delta_0^+ inverses,
    then through the Lambda inverse at fiber 0; returns the absolute (left, length)."""
    for k in range(i - 1, 0, -1):
        mid = ids[k]
        left, ell = gh_pull_pair(ptab[mid], ctab[mid], left, ell)
    mid = ids[0]
    pl, pe = gh_pull_pair(ptab[mid], ctab[mid], left, ell)
    return -(pl + pe), pe


@njit(cache=True)
def gh_partition(ptab, ctab, ids, tab, n_r):
    """Cells (i, j), i, j >= 1, i + j <= n_r of the first return to Lambda = Delta_0^-.

    i - 1 counts consecutive visits to Delta_0^+ after leaving Lambda, j is the
    index of the Delta_j^+ piece finally entered; R = i + j.
    """
    ncell = (n_r - 1) * n_r // 2
    ii = np.empty(ncell, np.int64)
    jj = np.empty(ncell, np.int64)
    left = np.empty(ncell)
    length = np.empty(ncell)
    c = 0
    for i in range(1, n_r):
        for j in range(1, n_r - i + 1):
            # Delta_j^+(sigma^{i-1} w ...) entered at time i: values of fiber i-1 map
            mid = ids[i - 1]
            t_hi = tab[i, j]
            t_lo = tab[i, j + 1]
            l0, e0 = gh_pull_pair_top(ptab[mid], ctab[mid], t_lo, t_hi)
            if i == 1:
                lf, ef = -(l0 + e0), e0
            else:
                lf, ef = _gh_pull_cell(ptab, ctab, ids, i - 1, l0, e0)
            ii[c] = i
            jj[c] = j
            left[c] = lf
            length[c] = ef
            c += 1
    return ii, jj, left, length


@njit(cache=True)
def gh_tail(ptab, ctab, ids, n):
    """Exact Lebesgue measure of {R_omega > n} inside Lambda_omega (GH), O(n**2).

    ``ids`` must cover fibers 0..n.
    """
    T = np.empty(n + 2)
    T[n + 1] = 1.0
    for k in range(n, 0, -1):
        mid = ids[k]
        T[k] = gh_pull_plus_t(ptab[mid], ctab[mid], T[k + 1])
    # orbits staying in Delta_0^+ at times 1..n
    _, total = _gh_pull_cell(ptab, ctab, ids, n, 0.0, 1.0 - T[n])
    comp = 0.0
    for i in range(1, n + 1):
        mid = ids[i - 1]
        l0, e0 = gh_pull_pair_top(ptab[mid], ctab[mid], 0.0, T[i])
        if i == 1:
            ln = e0
        else:
            _, ln = _gh_pull_cell(ptab, ctab, ids, i - 1, l0, e0)
        y = ln - comp
        tmp = total + y
        comp = (tmp - total) - y
        total = tmp
    return total


@njit(cache=True)
def gh_first_return(ptab, ctab, ids, start, x, max_steps):
    """GH analogue of ``pik_first_return``; Lambda is (x_1^-, 0) of each fiber.

    ``lam`` membership uses the zero of each fiber map, which is ``-x_1^+``.
    Returns (i, R, x_R, logJ) with R = -1 when censored.
    """
    logj = 0.0
    i = -1
    for n in range(1, max_steps + 1):
        mid = ids[start + n - 1]
        p = ptab[mid]
        h, d1, _, _ = gh_plus_derivs(p, ctab[mid], abs(x))
        if abs(x) < SINGULAR_TOL:
            return -1, -1, np.nan, np.nan
        logj += math.log(abs(d1))
        x = h
        nid = ids[start + n]
        x1 = 1.0 - gh_pull_plus_t(ptab[nid], ctab[nid], 1.0)
        if i < 0 and x > 0.0 and x >= x1:
            i = n
        if i > 0 and x < 0.0 and x > -x1:
            return i, n, x, logj
    return -1, -1, np.nan, np.nan


@njit(cache=True)
def pik_ladder_at(alphas, ns):
    """``t_n(omega)`` for each n in ``ns`` by direct pullback chains (O(sum ns))."""
    out = np.empty(ns.size)
    for m in range(ns.size):
        s = 1.0
        for k in range(ns[m] - 1, -1, -1):
            s = phi(alphas[k], s)
        out[m] = s
    return out


@njit(cache=True)
def gh_ladder_at(ptab, ctab, ids, ns):
    out = np.empty(ns.size)
    for m in range(ns.size):
        s = 1.0
        for k in range(ns[m] - 1, -1, -1):
            mid = ids[k]
            s = gh_pull_plus_t(ptab[mid], ctab[mid], s)
        out[m] = s
    return out


@njit(cache=True)
def pik_chain(alphas, n):
    """s_k = t_k(sigma^{n-k} omega) for k = 0..n: a single pullback chain from fiber n."""
    s = np.empty(n + 1)
    s[0] = 1.0
    for k in range(1, n + 1):
        s[k] = phi(alphas[n - k], s[k - 1])
    return s


@njit(cache=True)
def gh_chain(ptab, ctab, ids, n):
    s = np.empty(n + 1)
    s[0] = 1.0
    for k in range(1, n + 1):
        mid = ids[n - k]
        s[k] = gh_pull_plus_t(ptab[mid], ctab[mid], s[k - 1])
    return s


@njit(cache=True)
def gh_ladder_constant(p, cheb, depth):
    t = np.empty(depth + 1)
    t[0] = 1.0
    for n in range(1, depth + 1):
        t[n] = gh_pull_plus_t(p, cheb, t[n - 1])
    return t


@njit(cache=True)
def gh_separation(ptab, ctab, ids, start, x, y, max_induced, max_steps):
    """GH analogue of ``pik_separation``."""
    off = start
    for s in range(max_induced):
        budget = min(max_steps, ids.size - 1 - off)
        if budget < 1:
            return s, 2
        ix, rx, xn, _ = gh_first_return(ptab, ctab, ids, off, x, budget)
        iy, ry, yn, _ = gh_first_return(ptab, ctab, ids, off, y, budget)
        if rx < 0 or ry < 0:
            return s, 2
        if ix != iy or rx != ry:
            return s, 0
        x, y = xn, yn
        off += rx
    return max_induced, 1
