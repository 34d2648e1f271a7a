import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from satattack.keyrate import (
    DEFAULT_TARGET_SNR,
    NoPositiveRateError,
    _g_of_eig,
    entropy_g,
    holevo_bound,
    key_rate,
    mutual_information,
    null_key_threshold,
    optimize_va,
    snr,
    system_at_distance,
)
from satattack.symplectic import holevo_bound_oracle, mutual_information_oracle, symplectic_eigenvalues
from satattack.units import REFERENCE_PROFILE, SystemParams, transmission_from_distance

IDEAL = SystemParams(v_a=1.0, eta=1.0, v_ele=0.0, xi_sys=0.0, beta_rec=1.0)

# xi_null from brentq on the covariance-matrix oracle rate, scheduled V_A.
FROZEN_XI_NULL = {25.0: 0.14564462397335481, 31.0: 0.1153821946243716}


def at(d):
    s, ch = system_at_distance(REFERENCE_PROFILE, d)
    return s, ch.transmission


@pytest.mark.parametrize("v_a, bits", [(1.0, 0.5), (3.0, 1.0)])
def test_mutual_information_snr(v_a, bits):
    s = IDEAL.with_(v_a=v_a)
    assert snr(s, 1.0, 0.0) == pytest.approx(v_a)
    assert mutual_information(s, 1.0, 0.0) == pytest.approx(bits, rel=1e-14)


def test_mutual_information_numeric_oracle():
    s, T = at(25.0)
    assert mutual_information(s, T, 0.1) == pytest.approx(mutual_information_oracle(s, T, 0.1), abs=1e-9)


@pytest.mark.parametrize("v_a", [0.5, 11.58, 100.0])
def test_pure_channel_leaks_nothing(v_a):
    s = IDEAL.with_(v_a=v_a)
    assert holevo_bound(s, 1.0, 0.0) == 0.0
    assert key_rate(s, 1.0, 0.0).rate == pytest.approx(mutual_information(s, 1.0, 0.0), rel=1e-15)


def test_oracle_value_at_25km():
    s, T = at(25.0)
    assert holevo_bound(s, T, 0.1) == pytest.approx(holevo_bound_oracle(s, T, 0.1), abs=1e-8)


@pytest.mark.parametrize("d", [1.0, 10.0, 25.0, 50.0, 100.0])
@pytest.mark.parametrize("xi", [0.0, 0.05, 0.1, 0.5, 1.5])
def test_holevo_matches_symplectic_oracle(d, xi):
    s, T = at(d)
    assert abs(holevo_bound(s, T, xi) - holevo_bound_oracle(s, T, xi)) < 1e-8


@pytest.mark.parametrize("d", [1.0, 10.0, 25.0, 50.0, 100.0])
def test_intercept_resend_noise_kills_key(d):
    s, T = at(d)
    assert key_rate(s, T, 2.1).rate < 0


def test_more_noise_less_key():
    s, T = at(25.0)
    assert key_rate(s, T, 0.0).rate > key_rate(s, T, 0.2).rate


@pytest.mark.parametrize("d", [1.0, 10.0, 25.0, 50.0, 100.0])
def test_rate_strictly_decreasing(d):
    s, T = at(d)
    r = np.array([key_rate(s, T, x).rate for x in np.linspace(0.0, 2.5, 101)])
    assert np.all(np.diff(r) < 0)


@pytest.mark.parametrize("d", [25.0, 31.0])
def test_null_threshold_frozen(d):
    s, _ = at(d)
    assert null_key_threshold(s, d) == pytest.approx(FROZEN_XI_NULL[d], abs=1e-6)


def test_frozen_values_from_oracle():
    s, T = at(31.0)
    x = brentq(lambda v: s.beta_rec * mutual_information(s, T, v) - holevo_bound_oracle(s, T, v), 0.0, 2.0, xtol=1e-14)
    assert x == pytest.approx(FROZEN_XI_NULL[31.0], abs=1e-12)


@pytest.mark.parametrize("d", [1.0, 5.0, 20.0, 31.0, 45.0])
def test_null_threshold_is_a_root(d):
    s, T = at(d)
    x = null_key_threshold(s, d)
    assert 0 < x < 2
    assert abs(key_rate(s, T, x).rate) < 1e-6


def test_null_threshold_31km_precision():
    s, T = at(31.0)
    x = null_key_threshold(s, 31.0, tol=1e-12)
    assert abs(key_rate(s, T, x).rate) < 1e-9


def test_no_positive_rate():
    s, _ = at(400.0)
    with pytest.raises(NoPositiveRateError):
        null_key_threshold(s, 400.0)


def test_optimize_va_algebra():
    s = SystemParams(eta=0.5, v_ele=0.0, xi_sys=0.0, atten_db_per_km=0.0)
    assert optimize_va(s, 10.0, 2.0) == pytest.approx(4.0)


def test_schedule_anchor():
    assert optimize_va(REFERENCE_PROFILE, 25.0) == pytest.approx(11.58, rel=1e-14)
    assert DEFAULT_TARGET_SNR == pytest.approx(1.9508613137276447, rel=1e-14)
    with pytest.raises(ValueError):
        optimize_va(REFERENCE_PROFILE, 25.0, 0.0)


def test_schedule_keeps_snr_and_grows_with_distance():
    vas = [optimize_va(REFERENCE_PROFILE, d) for d in (1, 10, 25, 50, 100)]
    assert all(b > a for a, b in zip(vas, vas[1:]))
    for d in (1, 50):
        s, ch = system_at_distance(REFERENCE_PROFILE, d)
        assert snr(s, ch.transmission, s.xi_sys) == pytest.approx(DEFAULT_TARGET_SNR, rel=1e-12)


@given(st.floats(0.0, 1e6))
def test_entropy_g_non_negative(x):
    assert entropy_g(x) >= 0


def test_entropy_g_values():
    assert entropy_g(0.0) == 0.0
    assert entropy_g(1.0) == pytest.approx(2.0)


def test_eigenvalue_below_one_rejected():
    with pytest.raises(ArithmeticError):
        _g_of_eig(0.5)


@given(st.floats(0.0, 100.0), st.floats(0.0, 2.5), st.floats(0.5, 50.0))
@settings(max_examples=150, deadline=None)
def test_holevo_non_negative(d, xi, v_a):
    s = REFERENCE_PROFILE.with_(v_a=v_a)
    T = transmission_from_distance(d)
    assert holevo_bound(s, T, xi) >= 0


@pytest.mark.parametrize("T, xi", [(0.0, 0.1), (1.2, 0.1), (0.5, -0.1)])
def test_domain_errors(T, xi):
    with pytest.raises(ValueError):
        key_rate(REFERENCE_PROFILE, T, xi)


def test_symplectic_eigenvalues_of_vacuum_and_thermal():
    np.testing.assert_allclose(symplectic_eigenvalues(np.eye(4)), [1.0, 1.0])
    np.testing.assert_allclose(sorted(symplectic_eigenvalues(np.diag([3.0, 3.0, 5.0, 5.0]))), [3.0, 5.0])


def test_key_rate_report_fields():
    s, T = at(25.0)
    r = key_rate(s, T, 0.1)
    assert r.rate == pytest.approx(s.beta_rec * r.i_ab - r.chi_be)
    assert set(r.to_dict()) == {"i_ab", "chi_be", "rate", "snr"}
    assert math.isfinite(r.rate)
