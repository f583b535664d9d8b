"""Time stepping of the front equation and the trajectory functionals.

The scheme, per interior cell and step (xi_i standard normal)::

    mu_i = u_i + dt * (lap(u)_i / 2 + kappa * f(u_i, x_i))
    sd_i = s * sqrt(u_i (1 - u_i)) * sqrt(dt / dx)
    u_i <- closure(mu_i, sd_i, xi_i)

with ``(kappa, s) = (1, sigma)`` in the original frame and ``(eps, 1)`` in the
rescaled frame.  ``noise_scheme="clamp"`` is the plain Euler-Maruyama update
``clamp(mu + sd * xi)``; the default ``"matched"`` replaces it, near 0 and 1
only, by a clipped Gaussian with the same mean and variance (see
:mod:`frontlab._kernel`).  Away from the endpoints both are ``mu + sd * xi``.
The same ``xi_i`` feed the martingales ``M`` and ``M^f``.
"""

import json
import math
from dataclasses import dataclass, asdict, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import __version__
from . import _kernel as K
from .errors import ConfigurationError, DomainError, NumericalBlowupError, WindowOverflowError
from .field import (EPS_FRONT, FrontState, check_discipline, dump_snapshot, edge_indices,
                    interface_centre, load_snapshot, mass_w, recenter, xi)
from .noise import NoiseStream
from .nonlinearity import NonlinearitySpec

FRAMES = ("original", "rescaled")


@dataclass(frozen=True)
class SimParams:
    """Numerical and model parameters of one trajectory.

    ``frame="original"`` uses ``sigma`` (noise strength); ``frame="rescaled"``
    uses ``epsilon`` (= sigma**-4, the drift prefactor) with unit noise.
    ``drift=False`` runs the voter dynamics while still accumulating the
    f-dependent functionals.
    """

    frame: str = "original"
    sigma: Optional[float] = 1.0
    epsilon: Optional[float] = None
    dt: float = 0.004
    dx: float = 0.1
    t_max: float = 1.0
    eps_front: float = EPS_FRONT
    window: float = 400.0
    guard: float = 0.1
    log_every: int = 25
    drift: bool = True
    cutoff_b: Optional[float] = None
    center_on: str = "xi"
    noise_scheme: str = "matched"

    def __post_init__(self):
        if self.frame not in FRAMES:
            raise ConfigurationError(f"unknown frame {self.frame!r}")
        if self.frame == "original":
            if self.sigma is None or self.epsilon is not None:
                raise ConfigurationError("original frame needs sigma and no epsilon")
            if self.sigma < 0:
                raise ConfigurationError("sigma must be >= 0")
        else:
            if self.epsilon is None or self.sigma is not None:
                raise ConfigurationError("rescaled frame needs epsilon and no sigma")
            if self.epsilon < 0:
                raise ConfigurationError("epsilon must be >= 0")
        if self.dt <= 0 or self.dx <= 0:
            raise ConfigurationError("dt and dx must be positive")
        if self.dt > 0.5 * self.dx ** 2 * (1 + 1e-12):
            raise ConfigurationError(f"unstable: dt={self.dt} exceeds dx^2/2={0.5 * self.dx ** 2}")
        if self.log_every < 1:
            raise ConfigurationError("log_every must be >= 1")
        if not 0 <= self.guard < 0.5:
            raise ConfigurationError("guard fraction must lie in [0, 1/2)")
        if self.window < 100 * self.dx * (1 - 1e-12):
            raise ConfigurationError("window must hold at least 100 cells")
        if self.center_on not in ("xi", "R"):
            raise ConfigurationError("center_on must be 'xi' or 'R'")
        if self.noise_scheme not in K.SCHEMES:
            raise ConfigurationError(f"noise_scheme must be one of {sorted(K.SCHEMES)}")

    @property
    def kappa(self) -> float:
        """Drift prefactor."""
        return 1.0 if self.frame == "original" else self.epsilon

    @property
    def noise(self) -> float:
        """Noise prefactor."""
        return self.sigma if self.frame == "original" else 1.0

    @property
    def theta(self) -> float:
        """Girsanov drift-to-noise ratio: z = theta * M^f - theta^2 A^f / 2."""
        if self.noise == 0:
            return 0.0
        return self.kappa / self.noise

    @property
    def n_steps(self) -> int:
        return steps_for(self.t_max, self.dt)

    def replace(self, **kw) -> "SimParams":
        d = asdict(self)
        d.update(kw)
        return SimParams(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SimParams":
        return cls(**d)


def original(sigma: float, **kw) -> SimParams:
    return SimParams(frame="original", sigma=float(sigma), epsilon=None, **kw)


def rescaled(epsilon: float, **kw) -> SimParams:
    return SimParams(frame="rescaled", sigma=None, epsilon=float(epsilon), **kw)


def steps_for(t: float, dt: float) -> int:
    return max(0, int(math.ceil(t / dt - 1e-9)))


_ACC_FIELDS = ("m_t", "a_t", "mf_t", "af_t", "qf_t", "drift_t", "clamp_t", "mfb_t", "afb_t")


@dataclass
class FunctionalAccumulators:
    """Running trajectory functionals.

    ``m_t``, ``a_t``: the martingale of sqrt(u(1-u)) against the noise and its
    bracket; ``mf_t``, ``af_t``: the same for f/sqrt(u(1-u)); ``qf_t`` is the
    cross bracket (time integral of the integral of f); ``drift_t`` and
    ``clamp_t`` are the total mass injected by the drift and by clamping, so
    that ``xi_t - xi_0 = s * m_t + drift_t + clamp_t``.  ``mfb_t``, ``afb_t``
    restrict the f-integrands to cells inside ``(-10 b, 10 b)``.
    """

    m_t: float = 0.0
    a_t: float = 0.0
    mf_t: float = 0.0
    af_t: float = 0.0
    z_t: float = 0.0
    t: float = 0.0
    qf_t: float = 0.0
    drift_t: float = 0.0
    clamp_t: float = 0.0
    mfb_t: float = 0.0
    afb_t: float = 0.0
    theta: float = 1.0
    cutoff_b: Optional[float] = None

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in _ACC_FIELDS])

    def load_array(self, arr: np.ndarray, t: float):
        for name, value in zip(_ACC_FIELDS, arr.tolist()):
            setattr(self, name, value)
        self.t = t
        self.z_t = girsanov_exponent(self.mf_t, self.af_t, self.theta)

    @property
    def zb_t(self) -> float:
        return girsanov_exponent(self.mfb_t, self.afb_t, self.theta)

    def copy(self) -> "FunctionalAccumulators":
        return FunctionalAccumulators(**asdict(self))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FunctionalAccumulators":
        return cls(**d)


def girsanov_exponent(mf: float, af: float, theta: float) -> float:
    return theta * mf - 0.5 * theta * theta * af


def new_accumulators(p: SimParams, t: float = 0.0) -> FunctionalAccumulators:
    return FunctionalAccumulators(t=t, theta=p.theta, cutoff_b=p.cutoff_b)


LOG_COLUMNS = ("t", "R", "L", "xi", "mass", "m_t", "a_t", "mf_t", "af_t", "z_t")
EXTRA_COLUMNS = ("qf_t", "drift_t", "clamp_t", "mfb_t", "afb_t")


class ObservationLog:
    """Time series sampled every ``log_every`` steps."""

    def __init__(self, columns=LOG_COLUMNS + EXTRA_COLUMNS):
        self.columns = tuple(columns)
        self._rows = []

    def __len__(self):
        return len(self._rows)

    def append(self, row: Sequence[float]):
        self._rows.append(tuple(float(v) for v in row))

    def record(self, state: FrontState, acc: FunctionalAccumulators, eps_front: float):
        left, right = edge_indices(state.values, eps_front)
        row = {"t": state.t, "R": state.coord(right), "L": state.coord(left),
               "xi": xi(state), "mass": mass_w(state)}
        d = acc.to_dict()
        self.append([row[c] if c in row else d[c] for c in self.columns])

    def __getitem__(self, name: str) -> np.ndarray:
        j = self.columns.index(name)
        return np.array([r[j] for r in self._rows])

    def rows(self):
        return list(self._rows)

    def copy(self) -> "ObservationLog":
        out = ObservationLog(self.columns)
        out._rows = list(self._rows)
        return out

    def to_csv(self, path, columns=LOG_COLUMNS):
        idx = [self.columns.index(c) for c in columns]
        with open(path, "w") as fh:
            fh.write(",".join(columns) + "\n")
            for r in self._rows:
                fh.write(",".join(repr(r[j]) for j in idx) + "\n")

    @classmethod
    def from_csv(cls, path) -> "ObservationLog":
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            log = cls(header)
            for line in fh:
                if line.strip():
                    log.append([float(v) for v in line.split(",")])
        return log

    @classmethod
    def from_arrays(cls, **cols) -> "ObservationLog":
        names = tuple(cols)
        log = cls(names)
        for row in zip(*(np.asarray(cols[c], dtype=float) for c in names)):
            log.append(row)
        return log


def heat_kernel(t: float, x):
    """Gaussian kernel (2 pi t)^(-1/2) exp(-x^2 / 2t) of the heat equation with diffusivity 1/2."""
    if not t > 0:
        raise DomainError("heat_kernel needs t > 0")
    x = np.asarray(x, dtype=np.float64)
    out = np.exp(-x * x / (2.0 * t)) / math.sqrt(2.0 * math.pi * t)
    return float(out) if out.ndim == 0 else out


def initial_state(p: SimParams, r0: float = 0.0, t0: float = 0.0) -> FrontState:
    """Step initial datum 1(x < r0) on the window described by ``p``."""
    from .field import make_step_state
    return make_step_state(r0, p.dx, p.window, t0, p.guard)


class _Runner:
    """Binds a state, params, drift, stream and accumulators to the kernel."""

    def __init__(self, state, f, p, stream, acc):
        if abs(state.dx - p.dx) > 1e-12 * p.dx:
            raise ConfigurationError("state and params disagree on dx")
        self.state, self.f, self.p, self.stream, self.acc = state, f, p, stream, acc
        self.ku, self.kf = f.knot_arrays()
        self.has_mask = f.drift_mask is not None
        self.mask = f.drift_mask if self.has_mask else (0.0, 0.0)
        b = p.cutoff_b
        self.cut = (-10.0 * b, 10.0 * b) if b is not None else (0.0, 0.0)
        self.gl = max(state.guard, 0)
        self.gr = state.n_cells - 1 - state.guard
        self.accv = acc.as_array()

    def _time(self):
        st = self.state
        return st.t_start + st.step * self.p.dt

    def advance(self, n: int):
        st, p = self.state, self.p
        done_total = 0
        while done_total < n:
            buf, pos = self.stream.buffer(1)
            done, new_pos, status = K.advance(
                st.values, n - done_total, self.gl, self.gr, p.dt, p.dx, p.kappa, p.noise,
                p.drift, self.f.code, self.f.m or 0.0, self.ku, self.kf,
                self.has_mask, self.mask[0], self.mask[1], st.offset,
                p.cutoff_b is not None, self.cut[0], self.cut[1],
                buf, pos, self.accv, p.eps_front, K.SCHEMES[p.noise_scheme], K.A_TABLE)
            self.stream.advance(new_pos - pos)
            done_total += done
            st.step += done
            st.t = self._time()
            if status == K.NEED_NOISE:
                self.stream.buffer(st.n_cells + 2)
            elif status == K.BLOWUP:
                self.acc.load_array(self.accv, st.t)
                raise NumericalBlowupError(f"non-finite value at t={st.t}", snapshot=st.copy(),
                                           checkpoint=make_checkpoint(st, self.acc, self.stream, p, self.f))
            elif status == K.NEED_RECENTER:
                self._recenter()
        self.acc.load_array(self.accv, st.t)

    def _recenter(self):
        st = self.state
        try:
            new = recenter(st, interface_centre(st, self.p.center_on, self.p.eps_front), self.p.eps_front)
        except WindowOverflowError as err:
            self.acc.load_array(self.accv, st.t)
            err.checkpoint = make_checkpoint(st, self.acc, self.stream, self.p, self.f)
            raise
        st.values = new.values
        st.index0 = new.index0


def _prepare(state: FrontState, p: SimParams, acc: Optional[FunctionalAccumulators]):
    if not hasattr(state, "step") or state.step is None:
        state.step = 0
    if acc is None:
        acc = new_accumulators(p, state.t)
    return acc


def step(state: FrontState, f: NonlinearitySpec, p: SimParams, stream: NoiseStream,
         acc: Optional[FunctionalAccumulators] = None):
    """One time step in place; returns ``(state, acc)``."""
    acc = _prepare(state, p, acc)
    _Runner(state, f, p, stream, acc).advance(1)
    return state, acc


Observer = Callable[[FrontState, FunctionalAccumulators, ObservationLog], Optional[bool]]


def run(state: FrontState, f: NonlinearitySpec, p: SimParams, stream: NoiseStream,
        observers: Sequence[Observer] = (), acc: Optional[FunctionalAccumulators] = None,
        log: Optional[ObservationLog] = None, stop_at: Optional[float] = None):
    """Step until ``t >= p.t_max``; log every ``p.log_every`` steps.

    Observers are called after each log row; a truthy return stops the run.
    ``stop_at`` interrupts the run early (at a log boundary), which together
    with :func:`make_checkpoint` allows resuming.
    Returns ``(state, acc, log)``; ``state`` is advanced in place.
    """
    acc = _prepare(state, p, acc)
    if log is None:
        log = ObservationLog()
    n_total = steps_for(p.t_max - state.t_start, p.dt)
    if state.step >= n_total:
        return state, acc, log
    check_discipline(state, p.eps_front)
    runner = _Runner(state, f, p, stream, acc)
    if len(log) == 0:
        log.record(state, acc, p.eps_front)
    stop_step = n_total if stop_at is None else min(n_total, steps_for(stop_at - state.t_start, p.dt))
    while state.step < stop_step:
        chunk = min(p.log_every - state.step % p.log_every, stop_step - state.step)
        runner.advance(chunk)
        if state.step % p.log_every == 0 or state.step == n_total:
            log.record(state, acc, p.eps_front)
            if any(obs(state, acc, log) for obs in observers):
                break
    return state, acc, log


def simulate(f: NonlinearitySpec, p: SimParams, seed: int, replica: int = 0, r0: float = 0.0,
             observers: Sequence[Observer] = ()):
    """Run one replica from the step datum 1(x < r0)."""
    from .noise import make_stream
    state = initial_state(p, r0)
    return run(state, f, p, make_stream(seed, replica), observers)


# --- checkpoints -----------------------------------------------------------

def make_checkpoint(state: FrontState, acc: FunctionalAccumulators, stream: NoiseStream,
                    p: SimParams, f: NonlinearitySpec, log: Optional[ObservationLog] = None) -> dict:
    return {
        "code_version": __version__,
        "params": p.to_dict(),
        "nonlinearity": f.to_dict(),
        "state": {"values": state.values.tolist(), "dx": state.dx, "t": state.t, "origin": state.origin,
                  "index0": state.index0, "guard": state.guard, "step": state.step,
                  "t_start": state.t_start},
        "accumulators": acc.to_dict(),
        "noise": stream.to_dict(),
        "log": None if log is None else {"columns": list(log.columns), "rows": log.rows()},
    }


def save_checkpoint(path, ckpt: dict) -> Path:
    """Write the checkpoint JSON and a ``x,u`` snapshot CSV referenced from it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    st = ckpt["state"]
    snap = path.with_suffix(".snapshot.csv")
    state = _state_from_dict(st)
    dump_snapshot(state, snap, seed=ckpt["noise"]["seed"], replica=ckpt["noise"]["replica_id"])
    out = dict(ckpt)
    out["state"] = {k: v for k, v in st.items() if k != "values"}
    out["state"]["snapshot"] = snap.name
    path.write_text(json.dumps(out))
    return path


def _state_from_dict(st: dict) -> FrontState:
    state = FrontState(np.array(st["values"], dtype=np.float64), st["dx"], st["t"], st["origin"],
                       st["index0"], st["guard"])
    state.step = st["step"]
    state.t_start = st["t_start"]
    return state


def load_checkpoint(path) -> dict:
    """Inverse of :func:`save_checkpoint`; raises ``ValueError`` on corrupt input."""
    path = Path(path)
    try:
        ckpt = json.loads(path.read_text())
        st = dict(ckpt["state"])
        snap = load_snapshot(path.parent / st.pop("snapshot"))
        st["values"] = snap.values.tolist()
        ckpt["state"] = st
        for key in ("params", "nonlinearity", "accumulators", "noise", "code_version"):
            ckpt[key]
    except (OSError, KeyError, TypeError, json.JSONDecodeError) as err:
        raise ValueError(f"corrupt checkpoint {path}: {err}") from err
    return ckpt


def restore(ckpt: dict):
    """(state, f, params, stream, acc, log) from a checkpoint dict."""
    p = SimParams.from_dict(ckpt["params"])
    f = NonlinearitySpec.from_dict(ckpt["nonlinearity"])
    state = _state_from_dict(ckpt["state"])
    stream = NoiseStream.from_dict(ckpt["noise"])
    acc = FunctionalAccumulators.from_dict(ckpt["accumulators"])
    log = None
    if ckpt.get("log") is not None:
        log = ObservationLog(ckpt["log"]["columns"])
        for row in ckpt["log"]["rows"]:
            log.append(row)
    return state, f, p, stream, acc, log
