import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ifsync.diffeo import Composed, Cubic, Moebius, eval, deriv, log_deriv_slope_bound, parse_diffeo

lams = st.floats(0.05, 20.0)
unit = st.floats(0.0, 1.0)
# (alpha, beta) with f' > 0 on [0, 1]: f'(0) = 1 + alpha, f'(1) = 1 - alpha - beta
cubic_params = st.tuples(st.floats(-0.9, 0.9), st.floats(-0.9, 0.9)).filter(
    lambda ab: 1 - ab[0] - ab[1] > 0.05 and 1 + ab[0] > 0.05)


def maps():
    return st.one_of(lams.map(Moebius), cubic_params.map(lambda ab: Cubic(*ab)))


def test_moebius_closed_form():
    f = Moebius(2.0)
    assert f(0.5) == pytest.approx(2 / 3, abs=1e-15)
    assert f.deriv(0.0) == 2.0
    assert f.deriv(1.0) == 0.5


def test_moebius_group_law_and_derivative(rng):
    lam = np.exp(rng.uniform(-3, 3, 1000))
    mu = np.exp(rng.uniform(-3, 3, 1000))
    x = rng.uniform(0, 1, 1000)
    for a, b, xi in zip(lam, mu, x):
        f, g, fg = Moebius(a), Moebius(b), Moebius(a * b)
        assert abs(f(g(xi)) - fg(xi)) <= 1e-12
        assert abs(f.deriv(xi) - a / (1 + (a - 1) * xi) ** 2) <= 1e-12 * max(1.0, f.deriv(xi))


def test_cubic_values():
    f = Cubic(1.0, -1.5)
    assert f(0.5) == pytest.approx(0.5 + 0.25 * (1.0 - 0.75))
    assert f.deriv0 == pytest.approx(2.0)
    assert f.deriv1 == pytest.approx(1.5)


@pytest.mark.parametrize("alpha,beta", [(2.0, 0.0), (0.0, 2.5), (-1.5, 0.0)])
def test_cubic_rejects_non_diffeomorphisms(alpha, beta):
    with pytest.raises(ValueError):
        Cubic(alpha, beta)


@pytest.mark.parametrize("lam", [0.0, -1.0, math.inf, math.nan])
def test_moebius_rejects_bad_lambda(lam):
    with pytest.raises(ValueError):
        Moebius(lam)


def test_composed_applies_last_part_first():
    f, g = Moebius(2.0), Cubic(0.5, -0.5)
    h = Composed((f, g))
    x = np.linspace(0, 1, 101)
    np.testing.assert_allclose(h(x), f(g(x)), atol=1e-15)
    np.testing.assert_allclose(h.deriv(x), f.deriv(g(x)) * g.deriv(x), rtol=1e-13)


def test_parse_round_trip():
    for text in ["moebius:2.0", "cubic:1.0,-1.5", "composed:[moebius:2.0,cubic:0.5,-0.5]",
                 "composed:[composed:[moebius:3,moebius:0.5],cubic:0.1,0.1]"]:
        f = parse_diffeo(text)
        assert parse_diffeo(str(f)) == f


@pytest.mark.parametrize("text", ["sine:1", "moebius:1,2", "cubic:1", "composed:moebius:2",
                                  "composed:[]", "moebius:x"])
def test_parse_errors(text):
    with pytest.raises(ValueError):
        parse_diffeo(text)


def test_module_level_helpers():
    f = Moebius(3.0)
    assert eval(f, 0.25) == f(0.25)
    assert deriv(f, 0.25) == f.deriv(0.25)
    # |(log f')'| = 2|lam - 1| / (1 + (lam - 1) x), largest at x = 0
    assert log_deriv_slope_bound(f) == pytest.approx(4.0)


@given(maps(), unit, unit)
@settings(max_examples=200, deadline=None)
def test_orientation_preserving_bijection(f, x, y):
    assert f(0.0) == 0.0 and f(1.0) == 1.0
    if x < y:
        assert f(x) <= f(y)
    assert 0.0 <= f(x) <= 1.0


@given(maps(), st.floats(0.01, 0.99))
@settings(max_examples=200, deadline=None)
def test_derivative_matches_finite_difference(f, x):
    h = 1e-6
    fd = (f(x + h) - f(x - h)) / (2 * h)
    assert fd == pytest.approx(f.deriv(x), rel=1e-5, abs=1e-7)
    assert f.log_deriv(x) == pytest.approx(math.log(f.deriv(x)), abs=1e-12)
    lfd = (f.log_deriv(x + h) - f.log_deriv(x - h)) / (2 * h)
    assert lfd == pytest.approx(f.log_deriv_slope(x), rel=1e-4, abs=1e-6)


@given(maps(), unit)
@settings(max_examples=200, deadline=None)
def test_mirror_is_conjugation_and_involution(f, x):
    g = f.mirror()
    assert g(x) == pytest.approx(1.0 - f(1.0 - x), abs=1e-12)
    assert g.mirror() == f or np.allclose(g.mirror()(x), f(x), atol=1e-12)
    assert g.deriv0 == pytest.approx(f.deriv1, rel=1e-12)
