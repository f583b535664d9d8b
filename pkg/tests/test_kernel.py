import math

import numpy as np
import pytest
from scipy import integrate, stats

from frontlab import _kernel as K


def _moments(mu, sd):
    """Mean and variance of clipped_normal(mu, sd, Z) by quadrature against the normal density."""
    g = lambda z: K.clipped_normal(mu, sd, z, K.A_TABLE)
    # the map is piecewise linear in z with one kink where it hits 0
    kink = -mu / sd if mu > 8 * sd else None
    pts = [] if kink is None else [kink]
    m1 = integrate.quad(lambda z: g(z) * stats.norm.pdf(z), -40, 40, points=pts or None, limit=400)[0]
    m2 = integrate.quad(lambda z: g(z) ** 2 * stats.norm.pdf(z), -40, 40, points=pts or None, limit=400)[0]
    return m1, m2 - m1 ** 2


@pytest.mark.parametrize("mu,sd", [(0.5, 0.01), (0.1, 0.02), (0.05, 0.05), (0.01, 0.05),
                                   (1e-3, 0.03), (1e-5, 0.01), (0.2, 0.3)])
def test_clipped_normal_matches_mean_and_variance(mu, sd):
    m, v = _moments(mu, sd)
    assert m == pytest.approx(mu, rel=1e-4)
    assert v == pytest.approx(sd * sd, rel=1e-3)


def test_clipped_normal_is_plain_gaussian_far_from_zero():
    for z in (-3.0, -0.1, 0.0, 2.5):
        assert K.clipped_normal(0.5, 0.01, z, K.A_TABLE) == 0.5 + 0.01 * z


def test_clipped_normal_monotone_and_nonnegative():
    z = np.linspace(-8, 8, 2001)
    for mu, sd in [(0.02, 0.05), (1e-4, 0.05), (0.3, 0.1)]:
        x = np.array([K.clipped_normal(mu, sd, zz, K.A_TABLE) for zz in z])
        assert np.all(x >= 0.0)
        assert np.all(np.diff(x) >= 0.0)


def test_clipped_normal_zero_mean_gives_zero():
    assert K.clipped_normal(0.0, 0.1, 3.0, K.A_TABLE) == 0.0


def test_table_inverts_log_dispersion():
    # table[k] is the shift a whose clipped N(a, 1) has log(Var/mean^2) = Y_LO + k DY
    for k in (0, 1000, 5000, 50000):
        a = K.A_TABLE[k]
        g = a * stats.norm.cdf(a) + stats.norm.pdf(a)
        h = (a * a + 1) * stats.norm.cdf(a) + a * stats.norm.pdf(a)
        assert math.log(h / g ** 2 - 1) == pytest.approx(K.Y_LO + k * K.DY, abs=1e-6)


def test_band():
    assert K.band(np.array([1.0, 1.0, 0.3, 0.0, 0.0])) == (2, 2)
    assert K.band(np.array([1.0, 0.0])) == (1, 0)
