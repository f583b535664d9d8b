"""Reaction terms f(u) with f(0) = f(1) = 0 and their Hoelder growth data.

A :class:`NonlinearitySpec` is an immutable description of the drift.  The
growth condition ``|f(u)| <= k_tilde * (u (1 - u))**gamma`` is what makes the
Girsanov integrands square integrable; :func:`verify_bound` checks it on a grid.

>>> spec = fisher_kpp()
>>> evaluate(spec, 0.5)
0.25
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError

KINDS = ("zero", "fisher_kpp", "power", "tabulated")
KIND_CODES = {name: code for code, name in enumerate(KINDS)}

# values within this distance of [0, 1] are clamped instead of rejected
CLAMP_TOL = 1e-9


@dataclass(frozen=True)
class NonlinearitySpec:
    kind: str
    gamma: float = 1.0
    k_tilde: float = 1.0
    m: Optional[float] = None
    knots: Optional[Tuple[Tuple[float, float], ...]] = None
    drift_mask: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        if self.kind not in KIND_CODES:
            raise DomainError(f"unknown nonlinearity kind {self.kind!r}")
        if not self.k_tilde > 0:
            raise DomainError("k_tilde must be positive")
        if not 0 < self.gamma <= 1:
            raise DomainError("gamma must lie in (0, 1]")
        if self.kind == "power":
            if self.m is None or not 0 < self.m <= 1:
                raise DomainError("power nonlinearity needs exponent m in (0, 1]")
        if self.kind == "tabulated":
            if not self.knots or len(self.knots) < 2:
                raise DomainError("tabulated nonlinearity needs at least two knots")
            knots = tuple((float(u), float(v)) for u, v in self.knots)
            us = [u for u, _ in knots]
            if any(b <= a for a, b in zip(us, us[1:])):
                raise DomainError("knots must be strictly increasing in u")
            if knots[0] != (0.0, 0.0) or knots[-1] != (1.0, 0.0):
                raise DomainError("knots must start at (0, 0) and end at (1, 0)")
            object.__setattr__(self, "knots", knots)
        if self.drift_mask is not None:
            lo, hi = (float(v) for v in self.drift_mask)
            if hi < lo:
                raise DomainError("drift_mask must satisfy lo <= hi")
            object.__setattr__(self, "drift_mask", (lo, hi))

    @property
    def code(self) -> int:
        return KIND_CODES[self.kind]

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero"

    def knot_arrays(self):
        """Knot abscissae and ordinates as float arrays (dummy pair if untabulated)."""
        if self.knots is None:
            return np.array([0.0, 1.0]), np.array([0.0, 0.0])
        arr = np.asarray(self.knots, dtype=np.float64)
        return arr[:, 0].copy(), arr[:, 1].copy()

    def with_mask(self, lo: float, hi: float) -> "NonlinearitySpec":
        return NonlinearitySpec(self.kind, self.gamma, self.k_tilde, self.m, self.knots, (lo, hi))

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "gamma": self.gamma, "k_tilde": self.k_tilde}
        if self.m is not None:
            out["m"] = self.m
        if self.knots is not None:
            out["knots"] = [list(k) for k in self.knots]
        if self.drift_mask is not None:
            out["drift_mask"] = list(self.drift_mask)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "NonlinearitySpec":
        knots = d.get("knots")
        mask = d.get("drift_mask")
        return cls(
            kind=d["kind"],
            gamma=float(d.get("gamma", 1.0)),
            k_tilde=float(d.get("k_tilde", 1.0)),
            m=None if d.get("m") is None else float(d["m"]),
            knots=None if knots is None else tuple(tuple(k) for k in knots),
            drift_mask=None if mask is None else tuple(mask),
        )

    def label(self) -> str:
        if self.kind == "power":
            return f"power(m={self.m:g})"
        return self.kind


def zero() -> NonlinearitySpec:
    return NonlinearitySpec("zero")


def fisher_kpp() -> NonlinearitySpec:
    """f(u) = u (1 - u); saturates the bound with gamma = 1, k_tilde = 1."""
    return NonlinearitySpec("fisher_kpp", gamma=1.0, k_tilde=1.0)


def power(m: float, gamma: Optional[float] = None, k_tilde: float = 1.0) -> NonlinearitySpec:
    """f(u) = u**m (1 - u).  Default gamma = m, for which k_tilde = 1 suffices."""
    return NonlinearitySpec("power", gamma=m if gamma is None else gamma, k_tilde=k_tilde, m=m)


def tabulated(knots: Sequence[Tuple[float, float]], gamma: float = 1.0, k_tilde: float = 1.0) -> NonlinearitySpec:
    return NonlinearitySpec("tabulated", gamma=gamma, k_tilde=k_tilde, knots=tuple(tuple(k) for k in knots))


def negative_tent() -> NonlinearitySpec:
    """Piecewise-linear f <= 0 on [0, 1] (peak -1/4 at u = 1/2): c_f < 0."""
    return tabulated([(0.0, 0.0), (0.5, -0.25), (1.0, 0.0)], gamma=1.0, k_tilde=1.0)


BUILTINS = {
    "zero": zero,
    "fisher_kpp": fisher_kpp,
    "power_0.6": lambda: power(0.6),
    "power_0.8": lambda: power(0.8),
    "negative_tent": negative_tent,
}


def _check_range(u):
    u = np.asarray(u, dtype=np.float64)
    if np.any(u < -CLAMP_TOL) or np.any(u > 1 + CLAMP_TOL) or np.any(np.isnan(u)):
        raise DomainError("u must lie in [0, 1]")
    return np.clip(u, 0.0, 1.0)


def evaluate_array(spec: NonlinearitySpec, u, x=None) -> np.ndarray:
    """Vectorised f(u); cells whose position lies in the drift mask get 0."""
    u = _check_range(u)
    kind = spec.kind
    if kind == "zero":
        out = np.zeros_like(u)
    elif kind == "fisher_kpp":
        out = u * (1.0 - u)
    elif kind == "power":
        out = u ** spec.m * (1.0 - u)
    else:
        ku, kf = spec.knot_arrays()
        out = np.interp(u, ku, kf)
    if spec.drift_mask is not None and x is not None:
        lo, hi = spec.drift_mask
        x = np.asarray(x, dtype=np.float64)
        out = np.where((x >= lo) & (x <= hi), 0.0, out)
    return out


def evaluate(spec: NonlinearitySpec, u: float, x: float = 0.0) -> float:
    """f(u) at position x (0 inside the drift mask)."""
    return float(evaluate_array(spec, np.float64(u), np.float64(x)))


@dataclass(frozen=True)
class BoundReport:
    holds: bool
    worst_ratio: float
    worst_u: float


def verify_bound(spec: NonlinearitySpec, n_grid: int = 10001, rtol: float = 1e-12) -> BoundReport:
    """Check |f(u)| <= k_tilde (u(1-u))**gamma on the grid u_i = i/(n_grid-1).

    ``worst_ratio`` is the largest |f| / (u(1-u))**gamma over interior points,
    so the bound holds iff ``worst_ratio <= k_tilde`` (up to ``rtol``).
    """
    if n_grid < 2:
        raise DomainError("n_grid must be at least 2")
    u = np.linspace(0.0, 1.0, n_grid)
    fu = np.abs(evaluate_array(spec, u))
    q = (u * (1.0 - u)) ** spec.gamma
    holds = bool(np.all(fu <= spec.k_tilde * q * (1 + rtol)))
    interior = slice(1, n_grid - 1)
    if n_grid > 2:
        ratio = fu[interior] / q[interior]
        worst = ratio.max()
        # ties (e.g. f = u(1-u), gamma = 1) resolve to the point of largest |f|
        ties = np.flatnonzero(ratio >= worst * (1 - rtol))
        i = ties[np.argmax(fu[interior][ties])]
        return BoundReport(holds, float(worst), float(u[interior][i]))
    return BoundReport(holds, 0.0, 0.0)
