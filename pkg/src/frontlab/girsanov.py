"""Change of measure between the drifted equation and the voter dynamics.

A voter run (``drift=False``) still accumulates M^f and A^f; the weight
``exp(theta M^f - theta^2 A^f / 2)`` then turns voter expectations into
expectations for the drifted equation.  Because the field update and M^f use
the same Gaussian variates and the integrands are known before the variates
are drawn, the discrete weight has expectation exactly 1.
"""

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .ensemble import run_ensemble
from .errors import ConfigurationError, DegenerateWeightsError, EstimationError, NumericalBlowupError
from .integrator import FunctionalAccumulators, SimParams, girsanov_exponent
from .nonlinearity import NonlinearitySpec

ESS_GATE = 0.1


@dataclass(frozen=True)
class WeightedEstimate:
    value: float
    stderr: float
    ess: float
    n: int
    mode: str
    self_normalized: float = float("nan")
    sn_stderr: float = float("nan")
    mean_weight: float = float("nan")
    mean_weight_stderr: float = float("nan")


def _theta(frame: Optional[str], sigma: Optional[float], epsilon: Optional[float], acc) -> float:
    if frame is None:
        return acc.theta
    if frame == "original":
        if sigma is None:
            raise ConfigurationError("original frame needs sigma")
        return 0.0 if sigma == 0 else 1.0 / sigma
    if frame == "rescaled":
        if epsilon is None:
            raise ConfigurationError("rescaled frame needs epsilon")
        return epsilon
    raise ConfigurationError(f"unknown frame {frame!r}")


def log_weight(acc: FunctionalAccumulators, frame: Optional[str] = None, sigma: Optional[float] = None,
               epsilon: Optional[float] = None) -> float:
    z = girsanov_exponent(acc.mf_t, acc.af_t, _theta(frame, sigma, epsilon, acc))
    if not math.isfinite(z):
        raise NumericalBlowupError(f"non-finite Girsanov exponent {z}")
    return z


def girsanov_weight(acc: FunctionalAccumulators, frame: Optional[str] = None, sigma: Optional[float] = None,
                    epsilon: Optional[float] = None) -> float:
    """exp(z_t).  Without ``frame`` the convention stored in ``acc`` is used;
    ``frame="original"`` uses theta = 1/sigma, ``"rescaled"`` theta = epsilon."""
    return math.exp(log_weight(acc, frame, sigma, epsilon))


def cutoff_cap(b: float, k_f: float, t: float) -> float:
    """Deterministic bound 20 b K_f^2 t on the restricted A^f."""
    return 20.0 * b * k_f * k_f * t


def sqrt_growth_constant(f: NonlinearitySpec) -> float:
    """K_f with |f| <= K_f sqrt(u(1-u)), implied by the stored (gamma, k_tilde)."""
    return f.k_tilde * 0.25 ** (f.gamma - 0.5)


def cutoff_weight(acc: FunctionalAccumulators, b: float) -> float:
    """exp(z^b_t) from the accumulators restricted to cells inside (-10 b, 10 b)."""
    if acc.cutoff_b is None:
        raise ConfigurationError("accumulators were not restricted; run with cutoff_b set")
    if abs(acc.cutoff_b - b) > 1e-12 * max(1.0, abs(b)):
        raise ConfigurationError(f"accumulators were restricted with b={acc.cutoff_b}, not {b}")
    z = acc.zb_t
    if not math.isfinite(z):
        raise NumericalBlowupError(f"non-finite cutoff exponent {z}")
    return math.exp(z)


def weighted_estimate(g_values, log_weights, mode: str = "full", ess_gate: float = ESS_GATE) -> WeightedEstimate:
    """Unnormalised importance estimate sum(w g) / n plus the self-normalised check."""
    g = np.asarray(g_values, dtype=np.float64)
    lw = np.asarray(log_weights, dtype=np.float64)
    n = len(g)
    if n < 2 or len(lw) != n:
        raise EstimationError("need at least two paired values and weights")
    if not np.all(np.isfinite(lw)):
        raise NumericalBlowupError("non-finite log weight")
    w = np.exp(lw)
    s1, s2 = math.fsum(w.tolist()), math.fsum((w * w).tolist())
    ess = s1 * s1 / s2
    if ess < ess_gate * n:
        raise DegenerateWeightsError(
            f"effective sample size {ess:.1f} < {ess_gate:.0%} of {n}: use a shorter time or cutoff mode")
    wg = w * g
    value = math.fsum(wg.tolist()) / n
    se = float(np.std(wg, ddof=1) / math.sqrt(n))
    sn = math.fsum(wg.tolist()) / s1
    # delta method for a ratio of means
    wn = w / (s1 / n)
    sn_se = float(np.sqrt(np.sum((wn * (g - sn)) ** 2) / (n * (n - 1))))
    mw_se = float(np.std(w, ddof=1) / math.sqrt(n))
    return WeightedEstimate(value, se, ess, n, mode, sn, sn_se, s1 / n, mw_se)


Functional = Callable[[object, FunctionalAccumulators, object], float]


def _check_voter(p: SimParams):
    if p.noise == 0:
        raise ConfigurationError("importance sampling needs noise")


def importance_estimate(g: Functional, f: NonlinearitySpec, p: SimParams, n: int, seed: int,
                        t: Optional[float] = None, b: Optional[float] = None, first_replica: int = 0,
                        workers: Optional[int] = None, ess_gate: float = ESS_GATE) -> WeightedEstimate:
    """E[g] under the drifted equation from ``n`` voter replicas and Girsanov weights.

    ``p`` describes the drifted equation (frame and sigma / epsilon); the
    replicas are run with the drift switched off.  ``g(state, acc, log)`` must
    be bounded.  With ``b`` set the cutoff weight is used (mode ``cutoff(b)``).
    """
    _check_voter(p)
    q = p.replace(drift=False, t_max=p.t_max if t is None else t, cutoff_b=b)
    res = run_ensemble(f, q, seed, range(first_replica, first_replica + n), workers=workers)
    gv = [g(r.state, r.acc, r.log) for r in res]
    if b is None:
        lw = [log_weight(r.acc) for r in res]
        mode = "full"
    else:
        lw = [r.acc.zb_t for r in res]
        mode = f"cutoff({b:g})"
    return weighted_estimate(gv, lw, mode, ess_gate)


def direct_estimate(g: Functional, f: NonlinearitySpec, p: SimParams, n: int, seed: int,
                    t: Optional[float] = None, first_replica: int = 0,
                    workers: Optional[int] = None):
    """Plain Monte Carlo mean and stderr of ``g`` under the drifted equation."""
    q = p.replace(drift=True, t_max=p.t_max if t is None else t)
    res = run_ensemble(f, q, seed, range(first_replica, first_replica + n), workers=workers)
    gv = np.array([g(r.state, r.acc, r.log) for r in res], dtype=np.float64)
    return float(gv.mean()), float(gv.std(ddof=1) / math.sqrt(n))


def right_edge_exceeds(r: float, eps_front: float = 1e-12) -> Functional:
    """Indicator functional 1{R(v_t) > r} of the final state."""
    from .field import front_edges

    def g(state, acc, log):
        return 1.0 if front_edges(state, eps_front).right > r else 0.0
    return g
