"""Compiled inner loop of the explicit scheme on the active band.

Only cells in ``[lo - 1, hi + 1]`` can change in one step, where ``lo`` is the
first cell below 1 and ``hi`` the last cell above 0, so the cost per step is
proportional to the interface length rather than to the window.

Noise closure near 0 and 1
--------------------------
With deterministic part ``mu`` and Gaussian noise ``sd * z`` the naive update
``clip(mu + sd * z)`` has mean ``mu + O(sd)`` once ``mu`` is comparable to
``sd``; because ``sd ~ sqrt(mu)`` this acts as a spurious ``sqrt(u)`` source and
the support of the solution invades the whole window.  The ``matched`` closure
instead returns ``max(0, s' (a + z))`` with ``(a, s')`` chosen so that the mean
is exactly ``mu`` and the variance exactly ``sd**2`` (mirrored near 1).  It is
monotone in ``z``, equals the plain Gaussian update once ``mu > 8 sd``, and for
``mu << sd**2``-scale masses survives with probability ``~ 2 mu / tau``, the
extinction law of the Wright-Fisher / Feller diffusion.
"""

import math

import numpy as np
from numba import njit
from scipy.special import erfcx

# slots of the accumulator vector
M, A, MF, AF, QF, DRIFT, CLAMP, MFB, AFB = range(9)
N_ACC = 9

# integrands f/sqrt(q) and f^2/q are set to 0 below this value of q = u(1-u)
Q_MIN = 1e-14
# values below this are flushed to exact 0 (avoids denormal arithmetic in
# the deterministic tails; physically irrelevant)
TINY = 1e-250

OK, NEED_NOISE, BLOWUP, NEED_RECENTER = 0, 1, 2, 3

SCHEMES = {"matched": 0, "clamp": 1}

# inverse of y(a) = log(Var/mean^2) for the clipped Gaussian max(0, a + z),
# tabulated on a uniform y grid; a = 8 at the lower end (no clipping)
Y_LO = math.log(1.0 / 64.0)
Y_HI = 400.0
DY = 0.002


def _build_table():
    a = np.linspace(-30.0, 8.5, 385001)
    half_erfcx = 0.5 * erfcx(-a / math.sqrt(2.0))
    g = a * half_erfcx + 1.0 / math.sqrt(2.0 * math.pi)
    h = (a * a + 1.0) * half_erfcx + a / math.sqrt(2.0 * math.pi)
    log_r = np.log(h) - 2.0 * np.log(g) + 0.5 * a * a
    y = log_r + np.log1p(-np.exp(-log_r))
    grid = Y_LO + DY * np.arange(int((Y_HI - Y_LO) / DY) + 2)
    return np.interp(grid, y[::-1], a[::-1])


A_TABLE = _build_table()
_SQRT2 = math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


@njit(cache=True)
def clipped_normal(mu, sd, z, table):
    """Sample of a [0, inf)-clipped normal with mean ``mu`` and s.d. ``sd``, driven by ``z``."""
    if mu <= 0.0:
        return 0.0
    ratio = sd / mu
    if ratio < 0.125:
        return mu + sd * z
    y = 2.0 * math.log(ratio)
    if y >= Y_HI:
        return 0.0
    pos = (y - Y_LO) / DY
    j = int(pos)
    w = pos - j
    a = table[j] * (1.0 - w) + table[j + 1] * w
    g = a * 0.5 * math.erfc(-a / _SQRT2) + _INV_SQRT2PI * math.exp(-0.5 * a * a)
    scale = mu / g
    x = scale * (a + z)
    return x if x > 0.0 else 0.0


@njit(cache=True)
def f_value(kind, m, ku, kf, u):
    if kind == 0:
        return 0.0
    if kind == 1:
        return u * (1.0 - u)
    if kind == 2:
        return u ** m * (1.0 - u)
    return np.interp(u, ku, kf)


@njit(cache=True)
def f_array(kind, m, ku, kf, u):
    out = np.empty_like(u)
    for i in range(u.shape[0]):
        out[i] = f_value(kind, m, ku, kf, u[i])
    return out


@njit(cache=True)
def band(v):
    """(lo, hi): first index with v < 1 and last index with v > 0."""
    n = v.shape[0]
    lo = 0
    while lo < n and v[lo] == 1.0:
        lo += 1
    hi = n - 1
    while hi >= 0 and v[hi] == 0.0:
        hi -= 1
    return lo, hi


@njit(cache=True)
def _edges_hit_guard(v, lo, hi, gl, gr, eps_front):
    n = v.shape[0]
    j = lo
    while j < n and v[j] > 1.0 - eps_front:
        j += 1
    if j <= gl:
        return True
    k = hi
    while k >= 0 and v[k] <= eps_front:
        k -= 1
    return k >= gr


@njit(cache=True)
def advance(v, n_steps, gl, gr, dt, dx, kappa, s, drift_on,
            kind, m, ku, kf, has_mask, mask_lo, mask_hi, x0,
            has_cut, cut_lo, cut_hi, buf, pos, acc, eps_front, scheme, table):
    """Advance ``v`` in place by up to ``n_steps`` steps.

    Cells outside ``[gl, gr]`` are pinned.  Returns ``(steps_done, pos, status)``;
    a nonzero status means the loop stopped early (noise buffer exhausted,
    non-finite value, or an edge reached a guard band).
    """
    n = v.shape[0]
    c_diff = 0.5 * dt / (dx * dx)
    sq_dt_dx = np.sqrt(dt * dx)
    noise_scale = s * np.sqrt(dt / dx)
    use_noise = s != 0.0
    nbuf = buf.shape[0]
    lo, hi = band(v)
    for step in range(n_steps):
        a = max(lo - 1, gl)
        b = min(hi + 1, gr)
        if use_noise and pos + (b - a + 1) > nbuf:
            return step, pos, NEED_NOISE
        s_m = 0.0
        s_a = 0.0
        s_mf = 0.0
        s_af = 0.0
        s_qf = 0.0
        s_dr = 0.0
        s_cl = 0.0
        s_mfb = 0.0
        s_afb = 0.0
        bad = False
        left_old = v[a - 1] if a > 0 else 1.0
        for i in range(a, b + 1):
            u = v[i]
            right = v[i + 1] if i + 1 < n else 0.0
            new = u + c_diff * (left_old - 2.0 * u + right)
            x = x0 + i * dx
            fu = 0.0
            if kind != 0:
                fu = f_value(kind, m, ku, kf, u)
                s_qf += fu
                if drift_on and not (has_mask and mask_lo <= x <= mask_hi):
                    dr = dt * kappa * fu
                    new += dr
                    s_dr += dr
            q = u * (1.0 - u)
            raw = new
            if q > 0.0 and use_noise:
                z = buf[pos]
                pos += 1
                sq = np.sqrt(q)
                sd = noise_scale * sq
                raw = new + sd * z
                if scheme == 0 and sd > 0.0:
                    if new <= 0.5:
                        new = clipped_normal(new, sd, z, table)
                    else:
                        new = 1.0 - clipped_normal(1.0 - new, sd, -z, table)
                else:
                    new = raw
                s_m += sq * z
                s_a += q
                if q >= Q_MIN and fu != 0.0:
                    g = fu / sq
                    s_mf += g * z
                    s_af += g * g
                    if has_cut and x - 0.5 * dx >= cut_lo and x + 0.5 * dx <= cut_hi:
                        s_mfb += g * z
                        s_afb += g * g
            elif q > 0.0:
                s_a += q
                if q >= Q_MIN and fu != 0.0:
                    s_af += fu * fu / q
                    if has_cut and x - 0.5 * dx >= cut_lo and x + 0.5 * dx <= cut_hi:
                        s_afb += fu * fu / q
            if new < TINY:
                new = 0.0
            elif new > 1.0:
                new = 1.0
            elif not (new == new):
                bad = True
            s_cl += new - raw
            left_old = u
            v[i] = new
        acc[M] += s_m * sq_dt_dx
        acc[A] += s_a * dt * dx
        acc[MF] += s_mf * sq_dt_dx
        acc[AF] += s_af * dt * dx
        acc[QF] += s_qf * dt * dx
        acc[DRIFT] += s_dr * dx
        acc[CLAMP] += s_cl * dx
        acc[MFB] += s_mfb * sq_dt_dx
        acc[AFB] += s_afb * dt * dx
        if bad or not np.isfinite(acc[M] + acc[MF] + acc[AF]):
            return step + 1, pos, BLOWUP
        # the band can only have moved by one cell on each side
        j = min(lo, a)
        while j < n and v[j] == 1.0:
            j += 1
        lo = j
        k = max(hi, b)
        while k >= 0 and v[k] == 0.0:
            k -= 1
        hi = k
        if (lo <= gl or hi >= gr) and _edges_hit_guard(v, lo, hi, gl, gr, eps_front):
            return step + 1, pos, NEED_RECENTER
    return n_steps, pos, OK
