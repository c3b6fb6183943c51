"""Acceptance gate: one recorded pass/fail line per criterion (see the
terminal summary section "acceptance criteria")."""

import json
import math
import time
import warnings

import numpy as np
import pytest

from conftest import record
from ifsync import cli, markov, sync
from ifsync.config import parse_config
from ifsync.correlations import Observable, correlation_series
from ifsync.diffeo import Moebius
from ifsync.lyapunov import lyapunov_report
from ifsync.markov import AtomicMeasure, apply_P, apply_U, kolmogorov_distance, stationary_measure
from ifsync.ratefit import fit_exponential
from ifsync.system import boundary_exponents, check_assumptions

SEED = 42


@pytest.fixture(scope="module")
def mu_mc(D4):
    t0 = time.perf_counter()
    mu = stationary_measure(D4, "monte_carlo", n_steps=100_000, replicas=1000, burn_in=1000,
                            seed=SEED)
    mu.elapsed = time.perf_counter() - t0
    return mu


def test_criterion_01_duality(D4, rng):
    worst = 0.0
    for _ in range(100):
        k = rng.integers(1, 30)
        w = rng.uniform(0.1, 1.0, k)
        mu = AtomicMeasure(rng.uniform(0, 1, k), w / w.sum())
        pushed = apply_P(D4, mu)
        for _ in range(10):
            coeffs = rng.normal(size=rng.integers(1, 8))
            phi = lambda x, c=coeffs: np.polyval(c, x)
            lhs = pushed.integrate(phi)
            rhs = mu.integrate(lambda x: apply_U(D4, phi, x))
            worst = max(worst, abs(lhs - rhs))
    record(1, worst <= 1e-12, f"max |int phi dP mu - int U phi dmu| = {worst:.2e} (<= 1e-12)")
    assert worst <= 1e-12


def test_criterion_02_moebius_oracle(rng):
    lam = np.exp(rng.uniform(-3, 3, 1000))
    lam2 = np.exp(rng.uniform(-3, 3, 1000))
    x = rng.uniform(0, 1, 1000)
    err_group = err_deriv = 0.0
    for a, b, xi in zip(lam, lam2, x):
        f, g = Moebius(a), Moebius(b)
        err_group = max(err_group, abs(f(g(xi)) - Moebius(a * b)(xi)))
        exact = a / (1 + (a - 1) * xi) ** 2
        err_deriv = max(err_deriv, abs(f.deriv(xi) - exact) / max(1.0, exact))
        # chain rule for the composition against the closed-form product map
        chain = f.deriv(g(xi)) * g.deriv(xi)
        err_deriv = max(err_deriv, abs(chain - Moebius(a * b).deriv(xi)) / max(1.0, chain))
    ok = err_group <= 1e-12 and err_deriv <= 1e-12
    record(2, ok, f"group law err {err_group:.1e}, derivative rel err {err_deriv:.1e} (<= 1e-12)")
    assert ok


D4_LAMBDA = math.fsum([0.3 * math.log(2.0), 0.3 * math.log(1.5), 0.2 * math.log(2.0),
                       0.2 * math.log(0.5)])


def test_criterion_03_assumption_checker(D4, single, sym_pair):
    r_single = check_assumptions(single)
    r_pair = check_assumptions(sym_pair)
    r_d4 = check_assumptions(D4)
    controls = (not r_single.a2 and not r_single.a3 and r_pair.a2 and not r_pair.a3
                and r_pair.lambda0 == 0.0)
    lam0, lam1 = boundary_exponents(D4)
    formula = abs(lam0 - D4_LAMBDA) <= 1e-12 and abs(lam1 - D4_LAMBDA) <= 1e-12
    literal = abs(lam0 - 0.4683) <= 1e-4 and abs(lam1 - 0.3297) <= 1e-4
    record(3, controls and r_d4.ok and formula and literal,
           f"controls ok={controls}, D4 A1-A3 ok={r_d4.ok}, Lambda0={lam0:.10f} "
           f"Lambda1={lam1:.10f} match formula={formula}; stated 0.4683 unattainable "
           f"(formula gives {D4_LAMBDA:.4f} at both ends)")
    assert controls and r_d4.ok and formula


@pytest.mark.xfail(strict=True, reason="the stated Lambda0 = 0.4683 for D4 disagrees with "
                   "sum p_i log f_i'(0) = 0.3296; D4 is mirror-symmetric so Lambda0 = Lambda1")
def test_criterion_03_stated_lambda0_value(D4):
    lam0, _ = boundary_exponents(D4)
    assert abs(lam0 - 0.4683) <= 1e-4


def test_criterion_04_stationary_cross_validation(D4, mu_mc):
    t0 = time.perf_counter()
    ulam = stationary_measure(D4, "ulam", cells=2048)
    elapsed = mu_mc.elapsed + time.perf_counter() - t0
    ks = kolmogorov_distance(ulam, mu_mc)
    sym = D4.is_mirror_symmetric()
    med = mu_mc.median()
    ok = ks < 0.01 and sym and abs(med - 0.5) <= 0.005 and elapsed <= 300
    record(4, ok, f"KS(Ulam 2048, MC 1e5x1e3) = {ks:.2e} (< 0.01); mirror-symmetric D4 "
                  f"median {med:.5f} (0.5 +- 0.005); {elapsed:.1f}s")
    assert ok


def test_criterion_05_volume_exponent(D4, mu_mc):
    rep = lyapunov_report(D4, mu_mc, n=10_000, replicas=1000, burn_in=1000, seed=SEED)
    q, b = rep.quadrature, rep.birkhoff
    ok = rep.agreement <= 3 and q.value < 0 and b.value < 0 and q.z > 5 and b.z > 5
    record(5, ok, f"quadrature {q.value:.6f}+-{q.stderr:.1e}, Birkhoff {b.value:.6f}"
                  f"+-{b.stderr:.1e}, gap {rep.agreement:.2f} se (<= 3)")
    assert ok


def test_criterion_06_mean_synchronization(D4):
    s = sync.sync_decay(D4, 0.2, 0.8, 200, 10_000, seed=SEED)
    f = s.fit
    ok = f.available and 0 < f.q < 1 and f.r2 > 0.98
    record(6, ok, f"q = {f.q:.4f}, R2 = {f.r2:.4f} on n in [{f.n_lo}, {f.n_hi}]")
    assert ok


def test_criterion_07_tail_slope(D4, mu_mc):
    prof = markov.tail_profile(mu_mc, D4, window=(4, 16))
    # independent oracle: plain bisection on [0.01, 10]
    slopes0 = np.array([f.deriv0 for f in D4.maps])
    g = lambda a: float(np.dot(D4.probs, slopes0 ** -a)) - 1.0
    lo, hi = 0.01, 10.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if g(mid) < 0 else (lo, mid)
    alpha = 0.5 * (lo + hi)
    ok = abs(alpha - prof.alpha_star_left) < 1e-10 and prof.slope_left >= 0.9 * alpha
    record(7, ok, f"slope {prof.slope_left:.3f} >= 0.9 alpha* = {0.9 * alpha:.3f} "
                  f"(alpha* = {alpha:.4f}, right-tail slope {prof.slope_right:.3f})")
    assert ok


def test_criterion_08_occupation_large_deviation(D4):
    s = sync.occupation_deviation(D4, 0.5, 0.02, 500, 1_000_000, seed=SEED)
    f = s.fit
    p500 = s.estimate[500]
    ok = p500 < 0.05 and f.available and f.slope < 0 and f.r2 > 0.9
    record(8, ok, f"P(n=500) = {p500:.2e} (< 0.05), slope {f.slope:.4f}, R2 {f.r2:.4f} "
                  f"(> 0.9) on n in [{f.n_lo}, {f.n_hi}] step 4")
    assert ok


@pytest.fixture(scope="module")
def coupling_runs(D4):
    main = sync.coupling_time(D4, 0.001, 0.999, 0.05, 10_000, 10_000, seed=SEED)
    near = [sync.coupling_time(D4, x, y, 0.05, 10_000, 10_000, seed=SEED)
            for x, y in ((0.01, 0.0105), (0.9895, 0.99), (0.005, 0.0055))]
    inside = sync.coupling_time(D4, 0.4995, 0.5005, 0.05, 10_000, 100, seed=SEED)
    return main, near, inside


def test_criterion_09_coupling_tail(coupling_runs):
    main = coupling_runs[0]
    f = main.survival.fit
    m1 = sync._truncated_moment(main.times, main.kappa, main.calibration_horizon)
    m2 = sync._truncated_moment(main.times, main.kappa, 2 * main.calibration_horizon)
    drift = abs(m2 - m1) / m1
    ok = f.available and f.slope < 0 and f.r2 > 0.95 and main.kappa > 0 and drift <= 0.1
    record(9, ok, f"slope {f.slope:.4f}, R2 {f.r2:.4f} (> 0.95); kappa {main.kappa:.3g} moment "
                  f"drift {drift:.1%} on doubling H={main.calibration_horizon}")
    assert ok


def test_criterion_10_expansion_at_return(D4, coupling_runs):
    main, near, inside = coupling_runs
    alpha = min(markov.moment_root([f.deriv0 for f in D4.maps], D4.probs),
                markov.moment_root([f.deriv1 for f in D4.maps], D4.probs))
    kappa, c1 = sync.calibrate_c1([main, *near, inside], alpha)
    results = []
    for run in near:
        e = sync.expansion_at_return(D4, run.x, run.y, 0.05, 0.1, 1000, 10_000, C1=c1,
                                     kappa=kappa, eta=1.0, seed=SEED)
        results.append(e)
    ok = not any(e.violated for e in results)
    detail = ", ".join(f"{e.ratio:.3f}<= {e.bound:.3f}" for e in results)
    record(10, ok, f"kappa {kappa:.3g}, C1 {c1:.3g}, h {D4.h}; ratio vs bound: {detail}")
    assert ok


def test_criterion_11_correlation_decay(D4, mu_mc):
    phi, psi = Observable.named("identity"), Observable.named("cos_pi")
    s = correlation_series(D4, phi, psi, mu_mc, 100, 100_000, seed=SEED)
    ctl = correlation_series(D4, phi, Observable.named("one"), mu_mc, 100, 100_000, seed=SEED)
    f = s.fit
    scale = np.maximum(ctl.stderr, 1e-12)
    zmax = float(np.max(ctl.estimate / scale))
    ok = f.available and 0 < f.q < 1 and f.r2 > 0.95 and zmax <= 4
    record(11, ok, f"q = {f.q:.4f}, R2 = {f.r2:.4f} (> 0.95); constant control max "
                   f"{zmax:.2f} se (<= 4)")
    assert ok


def test_criterion_12_negative_control(sym_pair, tmp_path, capsys):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        mu = stationary_measure(sym_pair, "ulam", cells=2048)
    warned = any(issubclass(w.category, markov.StationaryMeasureWarning) for w in caught)
    cfg = tmp_path / "pair.yaml"
    cfg.write_text("system:\n  preset: symmetric_pair\nseed: 42\nexperiments:\n"
                   "  - kind: assumptions\n    expect_hold: false\n  - kind: stationary\n"
                   "  - kind: lyapunov\n  - kind: correlations\n")
    code = cli.main(["run", str(cfg), "--out", str(tmp_path / "out")])
    exps = json.loads((tmp_path / "out" / "summary.json").read_text())["experiments"]
    skipped = all(exps[k]["status"] == "skipped" for k in ("stationary", "lyapunov",
                                                          "correlations"))
    ok = mu.diagnostic.flagged and warned and skipped and code == 0
    record(12, ok, f"diagnostic flagged (interior mass {mu.diagnostic.interior_mass:.3f}), "
                   f"warning={warned}, dependent experiments skipped={skipped}, exit {code}")
    assert ok


D4_SUITE = """\
system:
  preset: d4
seed: 42
experiments:
  - kind: assumptions
  - kind: stationary
  - kind: lyapunov
  - kind: sync
  - kind: coupling
  - kind: occupation
  - kind: correlations
"""


def test_criterion_13_determinism(tmp_path, capsys):
    cfg = tmp_path / "d4.yaml"
    cfg.write_text(D4_SUITE)
    codes, blobs = [], []
    for k in range(2):
        out = tmp_path / f"run{k}"
        codes.append(cli.main(["run", str(cfg), "--out", str(out)]))
        blobs.append((out / "summary.json").read_bytes())
    identical = blobs[0] == blobs[1]
    ok = identical and codes == [0, 0]
    record(13, ok, f"two seed-42 D4 suite runs: summary.json identical={identical}, "
                   f"exit codes {codes}")
    assert ok
