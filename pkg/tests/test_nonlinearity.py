import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from frontlab import nonlinearity as nl
from frontlab.errors import DomainError


def test_fisher_at_zero_is_zero():
    assert nl.evaluate(nl.fisher_kpp(), 0.0, x=123.0) == 0.0


def test_fisher_at_half():
    assert nl.evaluate(nl.fisher_kpp(), 0.5) == 0.25


def test_power_matches_direct_arithmetic():
    assert nl.evaluate(nl.power(0.6), 0.5) == pytest.approx(0.5 ** 0.6 * 0.5, rel=1e-15)
    assert nl.evaluate(nl.power(0.6), 0.5) == pytest.approx(0.32988, abs=5e-6)


def test_mask_forces_zero_on_closed_interval():
    f = nl.fisher_kpp().with_mask(-10, 10)
    assert nl.evaluate(f, 0.5, x=0.0) == 0.0
    assert nl.evaluate(f, 0.5, x=10.0) == 0.0
    assert nl.evaluate(f, 0.5, x=10.5) == 0.25


def test_out_of_range_is_domain_error():
    with pytest.raises(DomainError):
        nl.evaluate(nl.fisher_kpp(), 1.1)
    with pytest.raises(DomainError):
        nl.evaluate(nl.fisher_kpp(), -1e-6)
    with pytest.raises(DomainError):
        nl.evaluate(nl.fisher_kpp(), float("nan"))


def test_tiny_excursions_are_clamped():
    assert nl.evaluate(nl.fisher_kpp(), 1 + 5e-10) == 0.0
    assert nl.evaluate(nl.fisher_kpp(), -5e-10) == 0.0


def test_verify_bound_fisher_saturates():
    rep = nl.verify_bound(nl.fisher_kpp(), 10001)
    assert rep.holds
    assert rep.worst_ratio == pytest.approx(1.0, abs=1e-12)


def test_verify_bound_power():
    assert nl.verify_bound(nl.power(0.6, gamma=0.6, k_tilde=1.0), 10001).holds


def test_verify_bound_violation_located_at_half():
    rep = nl.verify_bound(nl.NonlinearitySpec("fisher_kpp", gamma=1.0, k_tilde=0.5), 10001)
    assert not rep.holds
    assert rep.worst_u == pytest.approx(0.5, abs=1e-3)


def test_verify_bound_needs_two_points():
    with pytest.raises(DomainError):
        nl.verify_bound(nl.fisher_kpp(), 1)


@pytest.mark.parametrize("name", sorted(nl.BUILTINS))
def test_builtins_vanish_at_endpoints_and_satisfy_their_bound(name):
    f = nl.BUILTINS[name]()
    for x in (-50.0, 0.0, 3.0):
        assert nl.evaluate(f, 0.0, x) == 0.0
        assert nl.evaluate(f, 1.0, x) == 0.0
    assert nl.verify_bound(f, 10001).holds


def test_negative_tent_is_nonpositive():
    u = np.linspace(0, 1, 101)
    assert np.all(nl.evaluate_array(nl.negative_tent(), u) <= 0)
    assert nl.evaluate(nl.negative_tent(), 0.5) == -0.25


@pytest.mark.parametrize("knots", [
    [(0, 0), (1, 0.1)],
    [(0, 0), (0.6, 0.1), (0.4, 0.1), (1, 0)],
    [(0.1, 0), (1, 0)],
    [(0, 0)],
])
def test_bad_knots_rejected(knots):
    with pytest.raises(DomainError):
        nl.tabulated(knots)


def test_tabulated_interpolates_linearly():
    f = nl.tabulated([(0, 0), (0.5, 0.2), (1, 0)], gamma=0.6, k_tilde=2.0)
    assert nl.evaluate(f, 0.25) == pytest.approx(0.1)


def test_invalid_parameters():
    with pytest.raises(DomainError):
        nl.NonlinearitySpec("cubic")
    with pytest.raises(DomainError):
        nl.power(1.5)
    with pytest.raises(DomainError):
        nl.NonlinearitySpec("fisher_kpp", gamma=1.2)
    with pytest.raises(DomainError):
        nl.NonlinearitySpec("fisher_kpp", k_tilde=0)
    with pytest.raises(DomainError):
        nl.fisher_kpp().with_mask(1, -1)


@pytest.mark.parametrize("spec", [nl.fisher_kpp(), nl.power(0.8), nl.negative_tent(),
                                  nl.fisher_kpp().with_mask(-3, 4)])
def test_serialisation_round_trip(spec):
    d = spec.to_dict()
    assert set(d) <= {"kind", "m", "knots", "gamma", "k_tilde", "drift_mask"}
    assert nl.NonlinearitySpec.from_dict(d) == spec


@given(st.floats(0, 1), st.floats(-100, 100), st.sampled_from(sorted(nl.BUILTINS)))
def test_eval_is_pure_and_bounded(u, x, name):
    f = nl.BUILTINS[name]()
    a, b = nl.evaluate(f, u, x), nl.evaluate(f, u, x)
    assert a == b
    assert abs(a) <= f.k_tilde * (u * (1 - u)) ** f.gamma * (1 + 1e-12) + 1e-300
    assert math.isfinite(a)
