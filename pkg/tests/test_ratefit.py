import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ifsync.ratefit import fit_exponential, transient_end


@given(st.floats(0.01, 100.0), st.floats(0.3, 0.99), st.integers(10, 200))
@settings(max_examples=100, deadline=None)
def test_recovers_exact_geometric(C, q, length):
    n = np.arange(length)
    v = C * q ** n
    fit = fit_exponential(v, window="all")
    assert fit.available
    assert fit.q == pytest.approx(q, rel=1e-9)
    assert fit.C == pytest.approx(C, rel=1e-8)
    assert fit.r2 == pytest.approx(1.0, abs=1e-9)


def test_censoring_stops_window():
    n = np.arange(100)
    v = 0.9 ** n
    v[60:] = 0.0
    fit = fit_exponential(v, floor=1e-12)
    assert fit.n_hi == 59
    assert fit.censored == 40
    assert fit.q == pytest.approx(0.9)


def test_too_few_points_unavailable():
    fit = fit_exponential([1.0, 0.5, 0.0, 0.0, 0.0, 0.0])
    assert not fit.available
    assert math.isnan(fit.q)


def test_flat_series_reports_q_one():
    fit = fit_exponential(np.full(20, 0.3))
    assert fit.q == 1.0
    assert fit.r2 == 1.0


def test_transient_is_dropped():
    n = np.arange(80)
    v = 0.8 ** n + 0.5 * np.exp(-3.0 * n) * (n < 5)
    v[:3] *= 5.0
    fit = fit_exponential(v)
    assert fit.n_lo >= 3
    assert fit.q == pytest.approx(0.8, rel=1e-6)


def test_transient_end_on_clean_series():
    n = np.arange(50.0)
    assert transient_end(n, -0.1 * n) == 0


def test_snr_censoring():
    n = np.arange(50)
    v = 0.7 ** n
    se = np.full(50, 1e-4)
    fit = fit_exponential(v, se, snr=3.0)
    # 0.7**n < 3e-4 from n = 23 on
    assert fit.n_hi == 22


def test_weighted_fit_downweights_noisy_points(rng):
    n = np.arange(40)
    v = 0.9 ** n
    se = 0.001 * v
    se[-10:] = 0.5 * v[-10:]
    noisy = v.copy()
    noisy[-10:] *= np.exp(rng.normal(0, 0.5, 10))
    plain = fit_exponential(noisy, se, window="all")
    weighted = fit_exponential(noisy, se, window="all", weighted=True)
    assert abs(weighted.q - 0.9) < abs(plain.q - 0.9)


def test_bad_window_policy():
    with pytest.raises(ValueError):
        fit_exponential(0.5 ** np.arange(20), window="median")


def test_bound_and_dict():
    fit = fit_exponential(2 * 0.5 ** np.arange(20), window="all")
    assert fit.bound(3) == pytest.approx(0.25)
    d = fit.to_dict()
    assert set(d) >= {"C", "q", "r2", "n_lo", "n_hi", "n_points", "censored", "available"}
