"""Synchronization statistics: pair distances, escapes, occupation
fractions, coupling times and the expansion at the first common return."""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._rng import TAG_SECOND_WORD, TAG_WORDS, check_seed, stream_seeds
from .ratefit import RateFit, fit_exponential, unavailable
from .system import boundary_exponents

DEFAULT_A = 0.05
DEFAULT_FLOOR = 1e-12
SYNC_TOLERANCE = 1e-6


class CalibrationError(RuntimeError):
    """Coupling constants are missing or could not be calibrated."""


@dataclass
class Series:
    """A per-step Monte Carlo estimate; CSV columns are ``n, estimate, stderr, n_alive``."""

    n: np.ndarray
    estimate: np.ndarray
    stderr: np.ndarray
    n_alive: np.ndarray
    fit: RateFit | None = None
    meta: dict = field(default_factory=dict)

    def rows(self):
        return [(int(n), float(e), float(s), int(a))
                for n, e, s, a in zip(self.n, self.estimate, self.stderr, self.n_alive)]

    columns = ("n", "estimate", "stderr", "n_alive")


def _streams(seed, replicas, tag=TAG_WORDS):
    if replicas < 1:
        raise ValueError("need at least one replica")
    return stream_seeds(check_seed(seed), int(replicas), tag)


def _check_unit(name, v, closed=False):
    ok = 0.0 <= v <= 1.0 if closed else 0.0 < v < 1.0
    if not ok:
        raise ValueError(f"{name} must lie in {'[0,1]' if closed else '(0,1)'}, got {v}")


# -- pair distances ----------------------------------------------------------

def beta_moment_decay(system, x, y, beta, n_max, replicas, *, floor=DEFAULT_FLOOR, seed=0,
                      common_word=True):
    """``E|x_n - y_n|**beta`` for ``n = 0..n_max`` under a common word.

    ``n_alive`` counts replicas whose distance is still ``>= floor``. Series
    entries below ``floor`` are censored in the attached fit. With
    ``common_word=False`` the two points get independent words (a control
    in which no synchronization should be seen).
    """
    _check_unit("x", x)
    _check_unit("y", y)
    if not 0.0 < beta <= 1.0:
        raise ValueError("beta must lie in (0,1]")
    kinds, params, offsets, cum = system.kernel_args
    streams = _streams(seed, replicas)
    streams_y = streams if common_word else _streams(seed, replicas, TAG_SECOND_WORD)
    s1, s2, alive = _kernels.pair_moments(kinds, params, offsets, cum, streams, streams_y,
                                          float(x), float(y), int(n_max), float(beta),
                                          float(floor))
    mean = s1 / replicas
    var = np.maximum(s2 / replicas - mean * mean, 0.0)
    stderr = np.sqrt(var / max(replicas - 1, 1))
    n = np.arange(n_max + 1)
    fit = fit_exponential(mean, stderr, n=n, floor=floor) if x != y else unavailable()
    return Series(n, mean, stderr, alive, fit,
                  {"x": x, "y": y, "beta": beta, "replicas": replicas, "floor": floor})


def sync_decay(system, x, y, n_max, replicas, *, floor=DEFAULT_FLOOR, seed=0,
               common_word=True):
    """``E|x_n - y_n|`` with a fitted ``C q**n`` on the uncensored window."""
    return beta_moment_decay(system, x, y, 1.0, n_max, replicas, floor=floor, seed=seed,
                             common_word=common_word)


def almost_sure_sync_check(system, pairs, n=1000, replicas=10_000, *, tol=SYNC_TOLERANCE,
                           seed=0):
    """Fraction of replicas with ``|x_n - y_n| < tol`` for each pair."""
    kinds, params, offsets, cum = system.kernel_args
    streams = _streams(seed, replicas)
    out = []
    for x, y in pairs:
        _check_unit("x", x)
        _check_unit("y", y)
        d = _kernels.pair_final_distance(kinds, params, offsets, cum, streams, float(x),
                                         float(y), int(n))
        out.append(float(np.mean(np.abs(d) < tol)))
    return out


# -- survival-type series ----------------------------------------------------

def survival_fit(n, probability, counts, min_alive=100, start=0, step=1):
    """Log-linear fit of a tail probability where at least ``min_alive``
    replicas contribute, starting at ``start`` and using every ``step``-th
    point."""
    n = np.asarray(n)
    sel = (n >= start) & ((n - start) % step == 0) & (np.asarray(counts) >= min_alive)
    # contiguous run from the start only
    idx = np.flatnonzero(sel)
    if idx.size == 0:
        return unavailable()
    run = [idx[0]]
    for i in idx[1:]:
        if i - run[-1] != step:
            break
        run.append(i)
    run = np.asarray(run)
    return fit_exponential(np.asarray(probability)[run], n=n[run])


def escape_probability(system, x, a=DEFAULT_A, n_max=100, replicas=10_000, *, seed=0,
                       mirrored=False, min_alive=100):
    """``P(x_j < a for all 1 <= j <= n)``; ``mirrored=True`` gives the
    statistic near 1 (``P(x_j > 1 - a)`` from ``1 - x``)."""
    if not 0.0 < x < a < 0.5:
        raise ValueError(f"need 0 < x < a < 1/2, got x={x}, a={a}")
    target = system.mirror() if mirrored else system
    kinds, params, offsets, cum = target.kernel_args
    streams = _streams(seed, replicas)
    times = _kernels.escape_times(kinds, params, offsets, cum, streams, float(x), float(a),
                                  int(n_max))
    n = np.arange(n_max + 1)
    alive = (times[None, :] > n[:, None]).sum(axis=1)
    p = alive / replicas
    stderr = np.sqrt(p * (1 - p) / replicas)
    fit = survival_fit(n, p, alive, min_alive, start=1)
    return Series(n, p, stderr, alive, fit,
                  {"x": x, "a": a, "replicas": replicas, "mirrored": mirrored})


def occupation_deviation(system, x, a=0.02, n_max=500, replicas=100_000, *, seed=0,
                         min_alive=100, lattice=4):
    """``P(#{1 <= i <= n : x_i in [a, 1-a]} / n <= 3/4)`` for ``n = 0..n_max``.

    The count threshold ``floor(3n/4)`` has period 4 in ``n``, which makes
    the series saw-toothed; the fit uses ``n`` divisible by ``lattice``,
    from the peak onwards, while at least ``min_alive`` replicas contribute.
    ``n = 0`` is reported as 0 (empty fraction).
    """
    if not a <= x <= 1.0 - a:
        raise ValueError(f"start point {x} is outside [{a}, {1 - a}]")
    lam0, lam1 = boundary_exponents(system)
    if not (lam0 > 0 and lam1 > 0) or a > DEFAULT_A:
        warnings.warn(f"a={a} may be too large for the large-deviation regime", RuntimeWarning,
                      stacklevel=2)
    kinds, params, offsets, cum = system.kernel_args
    streams = _streams(seed, replicas)
    hits, fmin, fmax = _kernels.low_occupation_counts(kinds, params, offsets, cum, streams,
                                                      float(x), float(a), int(n_max))
    hits[0] = 0
    n = np.arange(n_max + 1)
    p = hits / replicas
    stderr = np.sqrt(p * (1 - p) / replicas)
    start = int(np.argmax(np.where(n % lattice == 0, hits, -1)))
    fit = survival_fit(n, p, hits, min_alive, start=start, step=lattice)
    return Series(n, p, stderr, hits, fit,
                  {"x": x, "a": a, "replicas": replicas, "fraction_min": float(fmin),
                   "fraction_max": float(fmax) if replicas else 0.0})


@dataclass
class ExcursionRecord:
    """Entries into and exits from ``[a, 1-a]`` along one orbit."""

    entries: list
    exits: list
    occupation: int
    n: int

    @property
    def fraction(self):
        return self.occupation / self.n if self.n else 1.0


def excursions(orbit_values, a):
    """Excursion record of ``x_1..x_n`` relative to ``[a, 1-a]``."""
    xs = np.asarray(orbit_values)[1:]
    inside = (xs >= a) & (xs <= 1.0 - a)
    entries, exits = [], []
    prev = True if len(orbit_values) == 0 else bool(a <= orbit_values[0] <= 1.0 - a)
    for i, now in enumerate(inside, start=1):
        if now and not prev:
            entries.append(i)
        elif prev and not now:
            exits.append(i)
        prev = bool(now)
    return ExcursionRecord(entries, exits, int(inside.sum()), len(xs))


# -- coupling ----------------------------------------------------------------

@dataclass
class CouplingStats:
    """Coupling times ``T^a_{x,y}`` and the calibrated exponential moment."""

    x: float
    y: float
    a: float
    horizon: int
    times: np.ndarray  # horizon + 1 marks censoring
    censored_fraction: float
    kappa: float
    moment: float  # E exp(kappa T) at the calibrated kappa
    kappa_curve: list  # (kappa, moment at H, moment at 2H, stable)
    calibration_horizon: int
    survival: Series
    reliable: bool

    @property
    def z(self):
        return min(self.x, 1.0 - self.y)

    def quantile(self, u):
        return float(np.quantile(self.times, u, method="inverted_cdf"))

    def to_dict(self):
        return {
            "x": self.x, "y": self.y, "a": self.a, "z": self.z,
            "horizon": self.horizon,
            "censored_fraction": self.censored_fraction,
            "kappa": self.kappa,
            "moment": self.moment,
            "calibration_horizon": self.calibration_horizon,
            "reliable": self.reliable,
            "kappa_curve": [list(row) for row in self.kappa_curve],
            "tail_fit": self.survival.fit.to_dict() if self.survival.fit else None,
            "mean_T": float(np.mean(self.times)),
        }


def _truncated_moment(times, kappa, horizon):
    with np.errstate(over="ignore"):
        return float(np.mean(np.exp(kappa * np.minimum(times, horizon))))


def calibrate_kappa(times, horizon, base=0.01, max_doublings=12, tol=0.1):
    """Largest ``kappa = base * 2**k`` whose truncated exponential moment is
    finite and changes by at most ``tol`` when the truncation horizon is
    doubled from ``H`` to ``2H``.

    ``H`` is the empirical 99th percentile of ``T`` (at most half the
    simulation horizon), so the doubling probes exactly the 1% tail that
    decides whether ``E exp(kappa T)`` is finite.
    """
    times = np.asarray(times)
    h = int(np.quantile(times, 0.99, method="inverted_cdf"))
    h = max(1, min(h, horizon // 2))
    curve = []
    best = (0.0, 1.0)
    for k in range(max_doublings + 1):
        kappa = base * 2.0 ** k
        m1 = _truncated_moment(times, kappa, h)
        m2 = _truncated_moment(times, kappa, 2 * h)
        stable = math.isfinite(m1) and math.isfinite(m2) and abs(m2 - m1) <= tol * m1
        curve.append((kappa, m1, m2, bool(stable)))
        if not stable:
            break
        best = (kappa, m2)
    return best[0], best[1], curve, h


def coupling_time(system, x, y, a=DEFAULT_A, horizon=10_000, replicas=10_000, *, seed=0,
                  min_alive=100):
    """Coupling time ``T`` = first ``k >= 0`` with ``a <= x_k`` and ``y_k <= 1-a``."""
    if not 0.0 < x < y < 1.0:
        raise ValueError(f"need 0 < x < y < 1, got {x}, {y}")
    if not 0.0 < a < 0.5:
        raise ValueError("a must lie in (0, 1/2)")
    kinds, params, offsets, cum = system.kernel_args
    streams = _streams(seed, replicas)
    times, _ = _kernels.coupling_times(kinds, params, offsets, cum, streams, float(x),
                                       float(y), float(a), int(horizon), 0)
    censored = float(np.mean(times > horizon))
    kappa, moment, curve, h = calibrate_kappa(np.minimum(times, horizon + 1), horizon)
    reliable = censored <= 0.01 and kappa > 0
    if censored > 0.01:
        warnings.warn(f"{censored:.1%} of coupling times censored at horizon {horizon}",
                      RuntimeWarning, stacklevel=2)
    n_max = int(min(horizon, times.max()))
    n = np.arange(n_max + 1)
    counts = np.searchsorted(np.sort(times), n, side="left")
    alive = replicas - counts  # replicas with T >= n
    p = alive / replicas
    stderr = np.sqrt(p * (1 - p) / replicas)
    start = int(np.argmax(p < 1.0)) if np.any(p < 1.0) else 0
    fit = survival_fit(n, p, alive, min_alive, start=start)
    survival = Series(n, p, stderr, alive, fit, {"statistic": "P(T >= n)"})
    return CouplingStats(x, y, a, int(horizon), times, censored, kappa, moment, curve, h,
                         survival, reliable)


def calibrate_c1(coupling_runs, alpha):
    """Smallest ``C_1`` consistent with every run:
    ``E exp(kappa T) <= C_1 max((a/z)**alpha, 1)``.

    All runs must share ``kappa`` (use the smallest calibrated one). Pairs
    already inside ``[a, 1-a]`` have ``T = 0``, so ``C_1 >= 1`` always.
    """
    kappa = min(run.kappa for run in coupling_runs)
    if not kappa > 0:
        raise CalibrationError("no stable kappa")
    c1 = 1.0
    for run in coupling_runs:
        moment = _truncated_moment(run.times, kappa, 2 * run.calibration_horizon)
        scale = max((run.a / run.z) ** alpha, 1.0)
        c1 = max(c1, moment / scale)
    return kappa, c1


# -- expansion at the first common return ------------------------------------

@dataclass
class ExpansionReturn:
    ratio: float
    ratio_stderr: float
    bound: float
    N: float
    C1: float
    h: float
    beta: float
    eta: float
    violated: bool
    stopped_inside: float  # fraction of replicas stopped by T (not by n)

    def to_dict(self):
        return dict(self.__dict__)


def first_return_exponent(a, z, h):
    """``N = -log(a/z) / log h``, clamped at 0 for starts inside ``[a, 1-a]``."""
    if z >= a:
        return 0.0
    return -math.log(a / z) / math.log(h)


def expansion_at_return(system, x, y, a=DEFAULT_A, beta=0.1, n=1000, replicas=10_000, *,
                        C1=None, kappa=None, eta=1.0, delta=1e-3, seed=0):
    """Stopped moment ratio ``E|x_{T^n} - y_{T^n}|**beta / |x-y|**beta`` with
    ``T^n = min(T, n)``, compared with ``(1 + eta) (C1/h)**(3 beta N)``."""
    if C1 is None or kappa is None or not (C1 > 0 and kappa > 0):
        raise CalibrationError("expansion_at_return needs calibrated C1 and kappa")
    if not 0.0 < x < y < 1.0:
        raise ValueError(f"need 0 < x < y < 1, got {x}, {y}")
    if y - x > delta:
        raise ValueError(f"|x - y| = {y - x:.3g} exceeds delta = {delta}")
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0,1]")
    h = system.h
    z = min(x, 1.0 - y)
    N = first_return_exponent(a, z, h)
    bound = (1.0 + eta) * (C1 / h) ** (3.0 * beta * N)
    kinds, params, offsets, cum = system.kernel_args
    streams = _streams(seed, replicas)
    times, dstop = _kernels.coupling_times(kinds, params, offsets, cum, streams, float(x),
                                           float(y), float(a), int(n), int(n))
    d0 = y - x
    if beta == 0.0:
        vals = np.ones(replicas)
    else:
        vals = (np.abs(dstop) / d0) ** beta
    ratio = float(np.mean(vals))
    stderr = float(np.std(vals, ddof=1) / math.sqrt(replicas)) if replicas > 1 else 0.0
    return ExpansionReturn(ratio, stderr, bound, N, C1, h, beta, eta, ratio > bound,
                           float(np.mean(times <= n)))
