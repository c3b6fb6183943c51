import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ifsync import sync
from ifsync.sync import (CalibrationError, almost_sure_sync_check, beta_moment_decay,
                         calibrate_c1, calibrate_kappa, coupling_time, escape_probability,
                         excursions, expansion_at_return, first_return_exponent,
                         occupation_deviation, sync_decay)
from ifsync.system import iterate, sample_word


def _orbits(system, x, replicas, n, seed):
    return [iterate(system, x, sample_word(system, n, seed, r)).values for r in range(replicas)]


def test_sync_decay_matches_python_reference(D4):
    s = sync_decay(D4, 0.2, 0.8, 30, 20, seed=4)
    xs = np.array(_orbits(D4, 0.2, 20, 30, 4))
    ys = np.array(_orbits(D4, 0.8, 20, 30, 4))
    np.testing.assert_allclose(s.estimate, np.abs(ys - xs).mean(axis=0), atol=1e-14)
    assert s.estimate[0] == pytest.approx(0.6)
    assert s.rows()[0][0] == 0 and len(s.rows()) == 31


def test_sync_decay_contracts(D4):
    s = sync_decay(D4, 0.2, 0.8, 150, 2000, seed=42)
    assert s.fit.available
    assert 0 < s.fit.q < 1
    assert s.estimate[-1] < s.estimate[0]


def test_beta_one_is_sync_decay(D4):
    a = sync_decay(D4, 0.3, 0.6, 40, 100, seed=2)
    b = beta_moment_decay(D4, 0.3, 0.6, 1.0, 40, 100, seed=2)
    np.testing.assert_array_equal(a.estimate, b.estimate)


def test_jensen_between_beta_moments(D4):
    d1 = sync_decay(D4, 0.2, 0.8, 60, 500, seed=3).estimate
    db = beta_moment_decay(D4, 0.2, 0.8, 0.5, 60, 500, seed=3).estimate
    # concavity of sqrt, and d**0.5 >= d on [0, 1]
    assert np.all(db <= np.sqrt(d1) + 1e-12)
    assert np.all(db >= d1 - 1e-12)


def test_equal_points_stay_equal(D4):
    s = sync_decay(D4, 0.4, 0.4, 20, 50)
    assert np.all(s.estimate == 0)
    assert not s.fit.available


def test_independent_words_do_not_synchronize(D4):
    s = sync_decay(D4, 0.2, 0.8, 150, 2000, seed=42, common_word=False)
    assert s.estimate[-1] > 0.1


@pytest.mark.parametrize("x,y,beta", [(0.0, 0.5, 1.0), (0.2, 1.0, 1.0), (0.2, 0.5, 0.0),
                                      (0.2, 0.5, 1.5)])
def test_sync_rejects_bad_arguments(D4, x, y, beta):
    with pytest.raises(ValueError):
        beta_moment_decay(D4, x, y, beta, 10, 10)


def test_almost_sure_sync(D4, sym_pair):
    assert almost_sure_sync_check(D4, [(0.1, 0.9)], n=500, replicas=500)[0] == 1.0
    assert almost_sure_sync_check(sym_pair, [(0.1, 0.9)], n=500, replicas=500)[0] < 0.9


def test_escape_matches_python_reference(D4):
    s = escape_probability(D4, 0.01, 0.05, 40, 50, seed=6)
    orbits = np.array(_orbits(D4, 0.01, 50, 40, 6))
    below = np.cumprod(orbits[:, 1:] < 0.05, axis=1)
    ref = np.concatenate([[1.0], below.mean(axis=0)])
    np.testing.assert_allclose(s.estimate, ref, atol=1e-15)


def test_escape_mirrored(D4):
    # D4 is mirror-symmetric, so the two sides agree in distribution
    a = escape_probability(D4, 0.02, 0.05, 50, 5000, seed=1)
    b = escape_probability(D4, 0.02, 0.05, 50, 5000, seed=2, mirrored=True)
    assert np.max(np.abs(a.estimate - b.estimate)) < 0.03
    with pytest.raises(ValueError):
        escape_probability(D4, 0.1, 0.05, 10, 10)


def test_occupation_matches_excursions(D4):
    s = occupation_deviation(D4, 0.5, 0.02, 60, 40, seed=9, min_alive=1)
    orbits = _orbits(D4, 0.5, 40, 60, 9)
    ref = np.zeros(61)
    for o in orbits:
        for n in range(1, 61):
            rec = excursions(o[:n + 1], 0.02)
            ref[n] += rec.occupation <= 0.75 * n
    np.testing.assert_allclose(s.n_alive, ref)


def test_excursions_record():
    rec = excursions(np.array([0.5, 0.01, 0.02, 0.5, 0.99, 0.5]), 0.05)
    assert rec.exits == [1, 4]
    assert rec.entries == [3, 5]
    assert rec.occupation == 2 and rec.n == 5
    assert rec.fraction == pytest.approx(0.4)


def test_occupation_rejects_outside_start(D4):
    with pytest.raises(ValueError):
        occupation_deviation(D4, 0.01, 0.02, 10, 10)


def test_coupling_times_match_python(D4):
    cs = coupling_time(D4, 0.001, 0.999, 0.05, 500, 30, seed=5, min_alive=1)
    for r in range(30):
        w = sample_word(D4, 500, 5, r)
        xs, ys = iterate(D4, 0.001, w).values, iterate(D4, 0.999, w).values
        inside = np.flatnonzero((xs >= 0.05) & (ys <= 0.95))
        assert cs.times[r] == (inside[0] if inside.size else 501)


def test_coupling_interior_pair_is_zero(D4):
    cs = coupling_time(D4, 0.4, 0.6, 0.05, 100, 50)
    assert np.all(cs.times == 0)
    assert cs.censored_fraction == 0.0


def test_calibrate_kappa_geometric(rng):
    # P(T >= n) = 0.5**n: E exp(kappa T) is finite iff kappa < log 2
    times = rng.geometric(0.5, 200_000) - 1
    kappa, moment, curve, h = calibrate_kappa(times, 10_000)
    assert 0 < kappa < math.log(2)
    assert all(row[3] for row in curve[:-1])


def test_calibrate_c1_at_least_one(D4):
    runs = [coupling_time(D4, 0.01, 0.99, 0.05, 2000, 500, seed=1),
            coupling_time(D4, 0.4, 0.6, 0.05, 2000, 50, seed=1)]
    kappa, c1 = calibrate_c1(runs, 1.8)
    assert kappa > 0 and c1 >= 1.0


def test_first_return_exponent():
    assert first_return_exponent(0.05, 0.01, 0.25) == pytest.approx(
        -math.log(0.05 / 0.01) / math.log(0.25))
    assert first_return_exponent(0.05, 0.2, 0.25) == 0.0


def test_expansion_requires_calibration(D4):
    with pytest.raises(CalibrationError):
        expansion_at_return(D4, 0.01, 0.0105)
    with pytest.raises(ValueError):
        expansion_at_return(D4, 0.01, 0.1, C1=1.0, kappa=0.1)


def test_expansion_beta_zero_ratio_one(D4):
    e = expansion_at_return(D4, 0.01, 0.0105, beta=0.0, n=200, replicas=200, C1=1.0, kappa=0.1)
    assert e.ratio == 1.0
    assert e.bound == pytest.approx(2.0)
    assert not e.violated


@given(st.floats(0.001, 0.049), st.floats(0.05, 0.45))
@settings(max_examples=50, deadline=None)
def test_first_return_exponent_positive_below_a(z, h):
    assert first_return_exponent(0.05, z, h) > 0


def test_survival_fit_lattice():
    n = np.arange(100)
    p = 0.9 ** n
    counts = np.full(100, 1000)
    fit = sync.survival_fit(n, p, counts, start=8, step=4)
    assert fit.n_lo >= 8 and (fit.n_lo - 8) % 4 == 0
    assert fit.q == pytest.approx(0.9)
