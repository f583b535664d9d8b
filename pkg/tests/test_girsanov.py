import math

import numpy as np
import pytest

from frontlab import integrator as I
from frontlab import nonlinearity as nl
from frontlab.ensemble import run_ensemble
from frontlab.errors import ConfigurationError, DegenerateWeightsError, NumericalBlowupError
from frontlab.field import xi
from frontlab.girsanov import (cutoff_cap, cutoff_weight, direct_estimate, girsanov_weight,
                               importance_estimate, right_edge_exceeds, sqrt_growth_constant,
                               weighted_estimate)
from frontlab.integrator import FunctionalAccumulators

SEED = 23


def _voter(f, t=2.0, **kw):
    p = I.original(1.0, t_max=t, window=60, drift=False, **kw)
    return I.simulate(f, p, SEED)


def test_zero_nonlinearity_weight_is_one():
    _, acc, _ = _voter(nl.zero())
    assert girsanov_weight(acc) == 1.0


def test_zero_accumulators_weight_is_one():
    acc = FunctionalAccumulators(theta=0.7)
    assert girsanov_weight(acc) == 1.0
    assert girsanov_weight(acc, frame="original", sigma=2.0) == 1.0


def test_frame_conventions():
    acc = FunctionalAccumulators(mf_t=0.3, af_t=0.8, theta=1.0)
    assert math.log(girsanov_weight(acc, frame="original", sigma=1.0)) == pytest.approx(0.3 - 0.4)
    eps = 0.2
    assert math.log(girsanov_weight(acc, frame="rescaled", epsilon=eps)) == pytest.approx(
        eps * 0.3 - 0.5 * eps ** 2 * 0.8)
    with pytest.raises(ConfigurationError):
        girsanov_weight(acc, frame="rescaled")


def test_non_finite_exponent():
    with pytest.raises(NumericalBlowupError):
        girsanov_weight(FunctionalAccumulators(mf_t=float("nan"), theta=1.0))


def test_weights_have_mean_one():
    p = I.original(1.0, t_max=2.0, window=60, drift=False, log_every=500)
    res = run_ensemble(nl.fisher_kpp(), p, SEED, range(500), workers=1)
    w = np.array([girsanov_weight(r.acc) for r in res])
    assert abs(w.mean() - 1.0) <= 3 * w.std(ddof=1) / math.sqrt(len(w))


def test_cutoff_requires_restricted_accumulators():
    _, acc, _ = _voter(nl.fisher_kpp())
    with pytest.raises(ConfigurationError):
        cutoff_weight(acc, 5.0)
    _, acc, _ = _voter(nl.fisher_kpp(), cutoff_b=5.0)
    with pytest.raises(ConfigurationError):
        cutoff_weight(acc, 6.0)


def test_cutoff_cap_holds():
    f = nl.fisher_kpp()
    _, acc, _ = _voter(f, cutoff_b=5.0)
    assert cutoff_cap(5.0, 1.0, 2.0) == 200.0
    assert acc.afb_t <= cutoff_cap(5.0, sqrt_growth_constant(f), 2.0) <= 200.0
    assert acc.afb_t <= acc.af_t


def test_cutoff_saturates_to_full_weight():
    _, acc, _ = _voter(nl.fisher_kpp(), cutoff_b=1000.0)
    assert cutoff_weight(acc, 1000.0) == girsanov_weight(acc)


def test_cutoff_zero_nonlinearity():
    _, acc, _ = _voter(nl.zero(), cutoff_b=5.0)
    assert cutoff_weight(acc, 5.0) == 1.0


def test_constant_functional_is_normalised():
    p = I.original(1.0, t_max=1.0, window=60)
    est = importance_estimate(lambda s, a, l: 1.0, nl.fisher_kpp(), p, 300, SEED, workers=1)
    assert abs(est.value - 1.0) <= 3 * est.stderr
    assert est.self_normalized == pytest.approx(1.0)


def test_zero_nonlinearity_equals_plain_mean():
    p = I.original(1.0, t_max=1.0, window=60)
    g = lambda s, a, l: xi(s)
    est = importance_estimate(g, nl.zero(), p, 100, SEED, workers=1)
    plain = [xi(r.state) for r in run_ensemble(nl.zero(), p.replace(drift=False), SEED, range(100), workers=1)]
    assert est.value == pytest.approx(np.mean(plain), abs=1e-12)
    assert est.ess == pytest.approx(100.0)


def test_degenerate_weights_raise():
    lw = np.zeros(100)
    lw[0] = 50.0
    with pytest.raises(DegenerateWeightsError):
        weighted_estimate(np.ones(100), lw)


def test_importance_matches_direct_in_rescaled_frame():
    p = I.rescaled(0.1, t_max=2.0, window=60)
    g = right_edge_exceeds(1.0)
    est = importance_estimate(g, nl.fisher_kpp(), p, 500, SEED, workers=1)
    d, d_se = direct_estimate(g, nl.fisher_kpp(), p, 500, SEED, first_replica=500, workers=1)
    assert abs(est.value - d) <= 3 * math.hypot(est.stderr, d_se)
