"""Estimators turning trajectories into speeds, stationary constants and scaling slopes.

All standard errors are batch means over 20 consecutive batches unless stated
otherwise; they are conservative under the slow decorrelation of the
interface.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError, EstimationError
from .field import EPS_FRONT, edge_indices
from .integrator import ObservationLog, SimParams, initial_state, run
from .noise import make_stream
from .nonlinearity import NonlinearitySpec, evaluate_array
from ._kernel import Q_MIN

N_BATCHES = 20
SPEED_METHODS = ("ls_fit", "subadditive_increments", "compensator")


def batch_means(x, n_batches: int = N_BATCHES) -> Tuple[float, float]:
    """Mean of ``x`` and its batch-means standard error.

    The series is cut into ``n_batches`` contiguous batches of equal length
    (a remainder at the start is dropped).
    """
    x = np.asarray(x, dtype=np.float64)
    if n_batches < 2:
        raise EstimationError("batch means need at least 2 batches")
    size = len(x) // n_batches
    if size < 1:
        raise EstimationError(f"{len(x)} samples cannot fill {n_batches} batches")
    x = x[len(x) - size * n_batches:]
    means = x.reshape(n_batches, size).mean(axis=1)
    return float(means.mean()), float(means.std(ddof=1) / math.sqrt(n_batches))


# --- speed -----------------------------------------------------------------

@dataclass(frozen=True)
class SpeedEstimate:
    v_hat: float
    stderr: float
    method: str
    t_window: Tuple[float, float]
    alternatives: Dict[str, Tuple[float, float]] = field(default_factory=dict, compare=False)

    def other(self, method: str) -> Tuple[float, float]:
        return self.alternatives[method]


def _ls_slope(t, y):
    tc = t - t.mean()
    denom = float(np.dot(tc, tc))
    if denom == 0:
        raise EstimationError("degenerate time window")
    return float(np.dot(tc, y - y.mean()) / denom)


def _ls_fit(t, y, n_batches):
    slope = _ls_slope(t, y)
    size = len(t) // n_batches
    if size >= 3:
        off = len(t) - size * n_batches
        slopes = [_ls_slope(t[off + k * size: off + (k + 1) * size], y[off + k * size: off + (k + 1) * size])
                  for k in range(n_batches)]
        se = float(np.std(slopes, ddof=1) / math.sqrt(n_batches))
    else:
        resid = y - (y.mean() + slope * (t - t.mean()))
        se = float(math.sqrt(np.dot(resid, resid) / max(len(t) - 2, 1) / np.dot(t - t.mean(), t - t.mean())))
    return slope, se


def _unit_increments(t, y, t_lo, t_hi):
    grid = np.arange(math.ceil(t_lo - 1e-9), math.floor(t_hi + 1e-9) + 1, dtype=np.float64)
    if len(grid) < 2:
        return np.empty(0)
    return np.diff(np.interp(grid, t, y))


def estimate_speed(log: ObservationLog, burn_frac: float = 0.2, method: str = "ls_fit",
                   column: str = "R", n_batches: int = N_BATCHES, min_samples: int = 50) -> SpeedEstimate:
    """Front speed from a trajectory log.

    ``ls_fit`` is the least-squares slope of ``column`` (default R) against t
    over ``[burn_frac * t_max, t_max]``; ``subadditive_increments`` averages
    the increments of ``column`` sampled at integer times.  When the log has a
    ``drift_t`` column the ``compensator`` estimate (drift mass injected per
    unit time) is reported as well; it has the same limit as the others
    because the rest of the motion of the centroid is a martingale, and far
    smaller variance.  All available methods are returned in ``alternatives``.
    """
    if method not in SPEED_METHODS:
        raise EstimationError(f"unknown speed method {method!r}")
    if not 0 <= burn_frac < 1:
        raise EstimationError("burn_frac must lie in [0, 1)")
    t = log["t"]
    y = log[column]
    if len(t) == 0:
        raise EstimationError("empty log")
    t_hi = float(t[-1])
    t_lo = float(t[0] + burn_frac * (t_hi - t[0]))
    sel = t >= t_lo - 1e-12
    if np.count_nonzero(sel) < min_samples:
        raise EstimationError(f"only {np.count_nonzero(sel)} samples after burn-in (need {min_samples})")
    ts, ys = t[sel], y[sel]
    out = {"ls_fit": _ls_fit(ts, ys, n_batches)}
    inc = _unit_increments(ts, ys, t_lo, t_hi)
    if len(inc) >= n_batches:
        out["subadditive_increments"] = batch_means(inc, n_batches)
    if "drift_t" in log.columns:
        dr = log["drift_t"][sel]
        # drift mass per unit time on each batch
        size = len(ts) // n_batches
        if size >= 2:
            off = len(ts) - size * n_batches
            edges = off + size * np.arange(n_batches + 1)
            edges[-1] = len(ts) - 1
            rates = np.diff(dr[edges]) / np.diff(ts[edges])
            se = float(np.std(rates, ddof=1) / math.sqrt(n_batches))
            out["compensator"] = (float((dr[-1] - dr[0]) / (ts[-1] - ts[0])), se)
    if method not in out:
        raise EstimationError(f"method {method!r} is not available for this log")
    v, se = out[method]
    return SpeedEstimate(v, se, method, (t_lo, t_hi), out)


# --- stationary voter interface --------------------------------------------

@dataclass
class StationarySamples:
    """Interface snapshots of one voter trajectory.

    Only cells strictly inside (0, 1) are stored: ``values[offsets[k]:offsets[k+1]]``
    with positions ``x[...]`` belong to snapshot ``k`` taken at ``t[k]``.
    """

    t: np.ndarray
    values: np.ndarray
    x: np.ndarray
    offsets: np.ndarray
    widths: np.ndarray
    dx: float

    def __len__(self):
        return len(self.t)

    def per_sample(self, integrand: np.ndarray) -> np.ndarray:
        """dx * sum of ``integrand`` (aligned with ``values``) for each snapshot."""
        csum = np.concatenate([[0.0], np.cumsum(integrand)])
        return (csum[self.offsets[1:]] - csum[self.offsets[:-1]]) * self.dx

    def after(self, t0: float) -> "StationarySamples":
        k = int(np.searchsorted(self.t, t0 - 1e-9))
        lo, hi = self.offsets[k], self.offsets[-1]
        return StationarySamples(self.t[k:], self.values[lo:hi], self.x[lo:hi], self.offsets[k:] - lo,
                                 self.widths[k:], self.dx)


class SnapshotRecorder:
    """Observer storing the fractional cells every ``every`` time units."""

    def __init__(self, every: float, eps_front: float = EPS_FRONT):
        self.every = every
        self.eps_front = eps_front
        self.next_t = 0.0
        self._t, self._vals, self._xs, self._n, self._w = [], [], [], [], []

    def __call__(self, state, acc, log):
        if state.t + 1e-9 < self.next_t:
            return False
        v = state.values
        idx = np.flatnonzero((v > 0.0) & (v < 1.0))
        self._t.append(state.t)
        self._vals.append(v[idx].copy())
        self._xs.append(state.coord(idx))
        self._n.append(len(idx))
        left, right = edge_indices(v, self.eps_front)
        self._w.append((right - left) * state.dx)
        self.next_t = state.t + self.every - 1e-9
        return False

    def samples(self, dx: float) -> StationarySamples:
        offsets = np.concatenate([[0], np.cumsum(self._n)]).astype(np.int64)
        vals = np.concatenate(self._vals) if self._vals else np.empty(0)
        xs = np.concatenate(self._xs) if self._xs else np.empty(0)
        return StationarySamples(np.array(self._t), vals, xs, offsets, np.array(self._w, dtype=np.float64), dx)


@dataclass(frozen=True)
class StationarySummary:
    c_f_hat: float
    c_f_stderr: float
    d_hat: float
    d_stderr: float
    mass_hat: float
    mass_stderr: float
    width_quantiles: Tuple[Tuple[float, float], ...]
    burn_in: float
    n_samples: int
    samples: Optional[StationarySamples] = field(default=None, repr=False, compare=False)


WIDTH_QS = (0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99)


def choose_burn_in(t, mass, min_burn: float = 20.0, rtol: float = 0.02, window: Optional[float] = None) -> float:
    """Burn-in time: the first checkpoint ``t_k = t_0 + k * window`` (``t_k >= min_burn``)
    at which the running mean of the mass has moved by at most ``rtol`` (relative)
    since the previous checkpoint.  ``window`` defaults to ``min_burn``.

    Raises :class:`EstimationError` if that point lies beyond half of the run.
    """
    t = np.asarray(t, dtype=np.float64)
    mass = np.asarray(mass, dtype=np.float64)
    if window is None:
        window = min_burn
    running = np.cumsum(mass) / np.arange(1, len(mass) + 1)
    t_end = float(t[-1])
    prev = None
    k = 1
    while True:
        tk = float(t[0]) + k * window
        if tk > t[0] + 0.5 * (t_end - t[0]) + 1e-9:
            raise EstimationError("mass never stabilised: burn-in would exceed half of the run")
        cur = float(np.interp(tk, t, running))
        if prev is not None and tk >= min_burn - 1e-9 and abs(cur - prev) <= rtol * abs(cur):
            return tk
        prev = cur
        k += 1


def endpoint_ratio(fu: np.ndarray, q: np.ndarray) -> np.ndarray:
    """f^2 / (u(1-u)) with the value 0 where u(1-u) < Q_MIN."""
    out = np.zeros_like(fu)
    ok = q >= Q_MIN
    out[ok] = fu[ok] ** 2 / q[ok]
    return out


def eta_moment(samples: StationarySamples, eta: float, n_batches: int = N_BATCHES) -> Tuple[float, float]:
    """Time average of dx * sum (w(1-w))**eta, with its batch-means stderr."""
    if not 0 < eta <= 1:
        raise DomainError("eta must lie in (0, 1]")
    q = samples.values * (1.0 - samples.values)
    integrand = q if eta == 1 else q ** eta
    return batch_means(samples.per_sample(integrand), n_batches)


def summarize_stationary(f: NonlinearitySpec, samples: StationarySamples, burn_in: float,
                         n_batches: int = N_BATCHES) -> StationarySummary:
    s = samples.after(burn_in)
    if len(s) < n_batches:
        raise EstimationError("burn-in leaves too few samples")
    fu = evaluate_array(f, s.values, s.x)
    q = s.values * (1.0 - s.values)
    c, c_se = batch_means(s.per_sample(fu), n_batches)
    d, d_se = batch_means(s.per_sample(endpoint_ratio(fu, q)), n_batches)
    m, m_se = eta_moment(s, 1.0, n_batches)
    wq = tuple((qq, float(np.quantile(s.widths, qq))) for qq in WIDTH_QS)
    return StationarySummary(c, c_se, d, d_se, m, m_se, wq, float(burn_in), len(s), s)


def estimate_stationary(f: NonlinearitySpec, p: SimParams, seed: int, replica: int = 0,
                        burn_in: Optional[float] = None, sample_every: float = 1.0,
                        min_burn: float = 20.0, n_batches: int = N_BATCHES) -> StationarySummary:
    """Stationary averages of f-functionals along one long voter trajectory.

    The dynamics always run without drift; ``f`` enters only the averaged
    integrands.  ``burn_in=None`` selects it with :func:`choose_burn_in`.
    """
    p = p.replace(drift=False)
    if burn_in is not None and burn_in >= p.t_max:
        raise EstimationError("burn-in longer than the run")
    rec = SnapshotRecorder(sample_every, p.eps_front)
    state = initial_state(p)
    _, _, log = run(state, f, p, make_stream(seed, replica), observers=[rec])
    samples = rec.samples(p.dx)
    if burn_in is None:
        burn_in = choose_burn_in(samples.t, samples.per_sample(samples.values * (1 - samples.values)), min_burn)
    return summarize_stationary(f, samples, burn_in, n_batches)


# --- scaling limit ---------------------------------------------------------

SCALING_KEYS = ("var_slope_xi", "cov_slope", "a_slope", "af_slope")


@dataclass(frozen=True)
class ScalingReport:
    var_slope_xi: float
    cov_slope: float
    a_slope: float
    af_slope: float
    a_values: Tuple[float, ...]
    stderr: Dict[str, float] = field(default_factory=dict, compare=False)
    per_a: Dict[str, Tuple[float, ...]] = field(default_factory=dict, compare=False)
    n_replicas: int = 0
    t0: float = 0.0


def _values_at(log: ObservationLog, t: float, cols):
    ts = log["t"]
    if t > ts[-1] + 1e-9:
        raise EstimationError(f"log ends at {ts[-1]} before {t}")
    return [float(np.interp(t, ts, log[c])) for c in cols]


def _scaling_stats(inc: np.ndarray, a_values) -> Dict[str, np.ndarray]:
    """inc[r, k, :] = increments (xi, m, mf, a, af) of replica r up to time a_k**2."""
    xi, m, mf, A, Af = (inc[:, :, j] for j in range(5))
    return {
        "var_slope_xi": xi.var(axis=0, ddof=1),
        "cov_slope": ((m - m.mean(0)) * (mf - mf.mean(0))).sum(0) / (len(m) - 1),
        "a_slope": A.mean(axis=0),
        "af_slope": Af.mean(axis=0),
    }


def _through_origin(y, a2):
    return float(np.dot(a2, y) / np.dot(a2, a2))


def scaling_limit_check(logs: Sequence[ObservationLog], a_values: Sequence[float], t0: float = 0.0,
                        min_replicas: int = 100) -> ScalingReport:
    """Diffusive scaling of the voter functionals over an ensemble of replica logs.

    For each ``a`` the increments over ``[t0, t0 + a**2]`` give Var(xi),
    Cov(M, M^f), E[A] and E[A^f]; each is regressed on ``a**2`` through the
    origin.  Standard errors are jackknife over replicas.
    """
    a_values = tuple(float(a) for a in a_values)
    if len(a_values) < 3:
        raise EstimationError("need at least 3 values of a")
    if len(logs) < min_replicas:
        raise EstimationError(f"{len(logs)} replicas < {min_replicas}")
    cols = ("xi", "m_t", "mf_t", "a_t", "af_t")
    inc = np.empty((len(logs), len(a_values), 5))
    for r, log in enumerate(logs):
        base = np.array(_values_at(log, t0, cols))
        for k, a in enumerate(a_values):
            inc[r, k] = np.array(_values_at(log, t0 + a * a, cols)) - base
    a2 = np.array(a_values) ** 2
    stats = _scaling_stats(inc, a_values)
    slopes = {k: _through_origin(v, a2) for k, v in stats.items()}
    n = len(logs)
    jack = {k: np.empty(n) for k in stats}
    for r in range(n):
        sub = _scaling_stats(np.delete(inc, r, axis=0), a_values)
        for k, v in sub.items():
            jack[k][r] = _through_origin(v, a2)
    se = {k: float(math.sqrt((n - 1) / n * np.sum((jack[k] - jack[k].mean()) ** 2))) for k in stats}
    per_a = {k: tuple((v / a2).tolist()) for k, v in stats.items()}
    return ScalingReport(slopes["var_slope_xi"], slopes["cov_slope"], slopes["a_slope"], slopes["af_slope"],
                         a_values, se, per_a, n, t0)
