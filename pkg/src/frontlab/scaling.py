"""The space-time map between the original and the rescaled equation.

With ``v_t(x) = u_{s^-4 t}(s^-2 x)`` (``s`` = sigma) the rescaled field has
unit noise and drift prefactor ``eps = s^-4``.  Going from rescaled to
original coordinates multiplies times by ``s^-4``, lengths by ``s^-2`` and
speeds by ``s^2``.  The explicit schemes of the two frames coincide exactly
when the resolutions are mapped the same way.

>>> fm = FrameMap(2.0)
>>> map_observable(fm, "space", 1.0)
0.25
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

from .ensemble import run_ensemble
from .errors import ConfigurationError, DomainError
from .field import front_edges
from .integrator import SimParams, original, rescaled
from .nonlinearity import NonlinearitySpec

QUANTITIES = ("time", "space", "speed")
DIRECTIONS = ("to_original", "to_rescaled")


@dataclass(frozen=True)
class FrameMap:
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise DomainError("sigma must be positive")

    @property
    def a(self) -> float:
        return self.sigma ** -2

    @property
    def b(self) -> float:
        return self.sigma ** -2

    @property
    def epsilon(self) -> float:
        return self.sigma ** -4

    def identity_residual(self) -> float:
        """a b^(-1/2) sigma - 1 (zero up to rounding)."""
        return self.a / math.sqrt(self.b) * self.sigma - 1.0


def _factor(fm: FrameMap, quantity: str) -> float:
    s = fm.sigma
    if quantity == "time":
        return s ** -4
    if quantity == "space":
        return s ** -2
    if quantity == "speed":
        return s ** 2
    raise DomainError(f"unknown quantity {quantity!r}; expected one of {QUANTITIES}")


def map_observable(fm: FrameMap, quantity: str, value: float, direction: str = "to_original") -> float:
    """Convert a time, length or speed between frames.

    ``to_original`` maps rescaled-frame values to the original frame
    (time * sigma^-4, space * sigma^-2, speed * sigma^2); ``to_rescaled`` is
    the inverse.
    """
    if direction not in DIRECTIONS:
        raise DomainError(f"direction must be one of {DIRECTIONS}")
    k = _factor(fm, quantity)
    return value * k if direction == "to_original" else value / k


def matched_original(fm: FrameMap, pr: SimParams) -> SimParams:
    """Original-frame parameters whose scheme equals the rescaled scheme ``pr``."""
    t = lambda v: map_observable(fm, "time", v)
    x = lambda v: map_observable(fm, "space", v)
    return original(fm.sigma, dt=t(pr.dt), dx=x(pr.dx), t_max=t(pr.t_max), eps_front=pr.eps_front,
                    window=x(pr.window), guard=pr.guard, log_every=pr.log_every, drift=pr.drift,
                    center_on=pr.center_on, noise_scheme=pr.noise_scheme)


def check_matched(fm: FrameMap, po: SimParams, pr: SimParams, rtol: float = 1e-9):
    pairs = (("dx", "space"), ("dt", "time"), ("window", "space"))
    for name, qty in pairs:
        want = map_observable(fm, qty, getattr(pr, name))
        if abs(getattr(po, name) - want) > rtol * abs(want):
            raise ConfigurationError(f"{name} not matched under the frame map: {getattr(po, name)} vs {want}")
    if abs(pr.epsilon - fm.epsilon) > rtol * fm.epsilon or abs(po.sigma - fm.sigma) > rtol * fm.sigma:
        raise ConfigurationError("frames do not correspond to the same sigma")


@dataclass(frozen=True)
class FrameReport:
    ks_statistic: float
    p_value: float
    level: float
    n: int

    @property
    def passed(self) -> bool:
        return self.p_value >= self.level


def frame_equivalence_test(sigma: float, t_obs: float, n: int, f: NonlinearitySpec, seed: int,
                           dx: float = 0.1, dt: float = 0.004, window: float = 100.0,
                           original_params: Optional[SimParams] = None, level: float = 0.01,
                           workers: Optional[int] = None) -> FrameReport:
    """Two-sample KS test of R(v_t_obs): direct rescaled runs vs original runs read through the map.

    The two ensembles use disjoint replica ids (0..n-1 and n..2n-1).
    """
    fm = FrameMap(sigma)
    pr = rescaled(fm.epsilon, dx=dx, dt=dt, t_max=t_obs, window=window)
    po = matched_original(fm, pr) if original_params is None else original_params
    check_matched(fm, po, pr)
    rr = run_ensemble(f, pr, seed, range(n), workers=workers)
    ro = run_ensemble(f, po, seed, range(n, 2 * n), workers=workers)
    r_dir = np.array([front_edges(r.state, pr.eps_front).right for r in rr])
    r_map = np.array([map_observable(fm, "space", front_edges(r.state, po.eps_front).right, "to_rescaled")
                      for r in ro])
    res = stats.ks_2samp(r_dir, r_map)
    return FrameReport(float(res.statistic), float(res.pvalue), level, n)
