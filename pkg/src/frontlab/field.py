"""The discretised field on a moving window and its interface observables.

Cells sit on a global lattice: cell ``j`` of the window has global index
``index0 + j`` and centre ``origin + (index0 + j) * dx``.  Recentering only
changes ``index0``, so absolute coordinates of retained cells never drift.
Everything left of the window is taken to be 1 and everything right of it 0.
"""

import json
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, WindowOverflowError

EPS_FRONT = 1e-12
GUARD_FRAC = 0.1


@dataclass
class FrontState:
    values: np.ndarray
    dx: float
    t: float = 0.0
    origin: float = 0.0
    index0: int = 0
    guard: int = 0
    step: int = 0
    t_start: float = None
    _g0: int = dc_field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.t_start is None:
            self.t_start = self.t
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.dx <= 0:
            raise ConfigurationError("dx must be positive")
        if 2 * self.guard >= len(self.values):
            raise ConfigurationError("guard bands cover the whole window")

    @property
    def n_cells(self) -> int:
        return len(self.values)

    @property
    def offset(self) -> float:
        """Absolute coordinate of cell 0."""
        return self.origin + self.index0 * self.dx

    @property
    def x(self) -> np.ndarray:
        return self.origin + (self.index0 + np.arange(self.n_cells)) * self.dx

    def coord(self, j) -> float:
        return self.origin + (self.index0 + j) * self.dx

    @property
    def zero_index(self) -> int:
        """Smallest global index whose cell centre is >= 0."""
        if self._g0 is None:
            g = int(math.ceil(-self.origin / self.dx))
            while self.origin + (g - 1) * self.dx >= 0:
                g -= 1
            while self.origin + g * self.dx < 0:
                g += 1
            self._g0 = g
        return self._g0

    def copy(self) -> "FrontState":
        return FrontState(self.values.copy(), self.dx, self.t, self.origin, self.index0, self.guard,
                          self.step, self.t_start)


@dataclass(frozen=True)
class EdgePair:
    left: float
    right: float

    @property
    def width(self) -> float:
        return self.right - self.left


def from_values(values, x0: float, dx: float, t: float = 0.0, guard: int = 0) -> FrontState:
    """State whose cell 0 is centred at ``x0``."""
    return FrontState(np.asarray(values, dtype=np.float64), dx, t, origin=x0, index0=0, guard=guard)


def make_step_state(r0: float, dx: float, window: float = 400.0, t0: float = 0.0,
                    guard_frac: float = GUARD_FRAC) -> FrontState:
    """Indicator of {x < r0} with r0 at the window centre."""
    if dx <= 0:
        raise ConfigurationError("dx must be positive")
    if window < 100 * dx * (1 - 1e-12):
        raise ConfigurationError(f"window {window} is smaller than 100 cells of width {dx}")
    n = int(round(window / dx))
    mid = n // 2
    values = np.zeros(n)
    values[:mid] = 1.0
    guard = int(guard_frac * n)
    return FrontState(values, dx, t0, origin=float(r0), index0=-mid, guard=guard)


def check_discipline(state: FrontState, eps_front: float = EPS_FRONT):
    """Raise :class:`WindowOverflowError` if a guard band is not flat."""
    g = state.guard
    if g == 0:
        return
    v = state.values
    left_bad = bool(np.any(v[:g] < 1.0 - eps_front))
    right_bad = bool(np.any(v[-g:] > eps_front))
    if left_bad or right_bad:
        side = "both" if left_bad and right_bad else ("left" if left_bad else "right")
        raise WindowOverflowError(f"interface entered the {side} guard band", side=side)


def edge_indices(values: np.ndarray, eps_front: float = EPS_FRONT):
    """Window indices (left, right) of the edges; ``right = -1`` if no cell exceeds eps."""
    above = np.flatnonzero(values > eps_front)
    right = int(above[-1]) if len(above) else -1
    dips = np.flatnonzero(values <= 1.0 - eps_front)
    left = int(dips[0]) - 1 if len(dips) else len(values) - 1
    return left, right


def front_edges(state: FrontState, eps_front: float = EPS_FRONT) -> EdgePair:
    """Left edge L (last cell of the leading run of ones) and right edge R
    (last cell above ``eps_front``) in absolute coordinates."""
    if not 0 <= eps_front < 0.5:
        raise ValueError("eps_front must lie in [0, 1/2)")
    check_discipline(state, eps_front)
    left, right = edge_indices(state.values, eps_front)
    if right < 0:
        raise WindowOverflowError("no cell above eps_front inside the window", side="left")
    return EdgePair(state.coord(left), state.coord(right))


def xi(state: FrontState) -> float:
    """Interface centroid: sum of (v - 1) dx left of 0 plus sum of v dx right of 0.

    Cells equal to exactly 0 or 1 contribute integers, which are counted
    exactly (including the implicit ones and zeros beyond the window); the
    fractional cells are summed with correctly rounded summation, so the value
    does not depend on where the window sits.
    """
    v = state.values
    n = len(v)
    g = state.index0 + np.arange(n)
    g0 = state.zero_index
    right_of_zero = g >= g0
    frac = (v > 0.0) & (v < 1.0)
    s = math.fsum((v[frac] - (~right_of_zero[frac])).tolist())
    k = int(np.count_nonzero((v == 1.0) & right_of_zero)) - int(np.count_nonzero((v == 0.0) & ~right_of_zero))
    k += max(0, state.index0 - g0) - max(0, g0 - (state.index0 + n))
    return (s + k) * state.dx


def mass_w(state: FrontState) -> float:
    """Integral of u (1 - u)."""
    v = state.values
    frac = v[(v > 0.0) & (v < 1.0)]
    return math.fsum((frac * (1.0 - frac)).tolist()) * state.dx


def recenter(state: FrontState, target: float, eps_front: float = EPS_FRONT) -> FrontState:
    """Shift the window by whole cells so that coordinate ``target`` sits at its centre.

    Cells entering from the left are 1, from the right 0.  Dropped cells must
    already be flat (within ``eps_front``) and are snapped to exact 0/1 first.
    """
    n, dx = state.n_cells, state.dx
    centre_j = n // 2
    k = int(round((target - state.coord(centre_j)) / dx))
    v = state.values
    left, right = edge_indices(v, eps_front)
    new_left, new_right = left - k, right - k
    g = state.guard
    if new_left + 1 < g or new_right > n - 1 - g or right - left > n - 2 * g:
        raise WindowOverflowError(
            f"interface [{state.coord(left + 1):.3f}, {state.coord(right):.3f}] does not fit in the window",
            side="both" if right - left > n - 2 * g else ("left" if new_left + 1 < g else "right"),
        )
    out = np.empty_like(v)
    if k >= 0:
        out[: n - k] = v[k:]
        out[n - k:] = 0.0
    else:
        out[-k:] = v[: n + k]
        out[:-k] = 1.0
    return FrontState(out, dx, state.t, state.origin, state.index0 + k, g, state.step, state.t_start)


def interface_centre(state: FrontState, how: str = "xi", eps_front: float = EPS_FRONT) -> float:
    if how == "xi":
        return xi(state)
    if how == "R":
        return front_edges(state, eps_front).right
    raise ValueError(f"unknown centring rule {how!r}")


def needs_recenter(state: FrontState, eps_front: float = EPS_FRONT) -> bool:
    """True when an edge has entered (or is about to enter) a guard band."""
    g = state.guard
    if g == 0:
        return False
    left, right = edge_indices(state.values, eps_front)
    return left + 1 <= g or right >= state.n_cells - 1 - g


def dump_snapshot(state: FrontState, path, seed=None, replica=None):
    """Write ``x,u`` CSV plus a JSON sidecar next to it (``<path>.json``)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    xs = state.x
    with open(path, "w") as fh:
        fh.write("x,u\n")
        for xv, uv in zip(xs.tolist(), state.values.tolist()):
            fh.write(f"{xv!r},{uv!r}\n")
    meta = {
        "t": state.t, "offset": state.offset, "dx": state.dx, "n_cells": state.n_cells,
        "seed": seed, "replica": replica,
        "origin": state.origin, "index0": state.index0, "guard": state.guard,
    }
    Path(str(path) + ".json").write_text(json.dumps(meta, indent=1))
    return path


def load_snapshot(path) -> FrontState:
    path = Path(path)
    meta = json.loads(Path(str(path) + ".json").read_text())
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    values = data[:, 1].copy()
    if len(values) != meta["n_cells"]:
        raise ValueError("snapshot length does not match its sidecar")
    return FrontState(values, meta["dx"], meta["t"], meta.get("origin", meta["offset"]),
                      meta.get("index0", 0), meta.get("guard", 0))
