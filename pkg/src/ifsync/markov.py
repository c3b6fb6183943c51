"""Markov operator, its dual, Ulam discretization and stationary measures."""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import _kernels
from ._rng import TAG_WORDS, check_seed, stream_seeds
from .system import check_assumptions


class StationaryMeasureWarning(RuntimeWarning):
    """Mass escapes to the boundary: no stationary law on (0, 1) was found."""


class EmpiricalMeasure:
    """A probability measure on [0, 1]."""

    def cdf(self, x):
        raise NotImplementedError

    def integrate(self, phi):
        raise NotImplementedError

    def mass_below(self, x):
        """``mu((0, x])`` (the atom at 0, if any, is excluded)."""
        return self.cdf(x) - self.cdf(0.0)

    def mass_above(self, x):
        """``mu([x, 1))`` (the atom at 1, if any, is excluded)."""
        raise NotImplementedError

    def median(self):
        raise NotImplementedError


@dataclass
class AtomicMeasure(EmpiricalMeasure):
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).ravel()
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        if self.points.shape != self.weights.shape:
            raise ValueError("points and weights differ in length")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        if np.any((self.points < 0) | (self.points > 1)):
            raise ValueError("support must lie in [0,1]")

    @classmethod
    def dirac(cls, x):
        return cls(np.array([x]), np.array([1.0]))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        order = np.argsort(self.points, kind="stable")
        pts = self.points[order]
        cum = np.concatenate([[0.0], np.cumsum(self.weights[order])])
        return cum[np.searchsorted(pts, x, side="right")]

    def mass_above(self, x):
        inside = (self.points >= np.asarray(x)[..., None]) & (self.points < 1.0)
        return np.sum(inside * self.weights, axis=-1)

    def integrate(self, phi):
        return float(np.dot(self.weights, phi(self.points)))

    def median(self):
        order = np.argsort(self.points, kind="stable")
        cum = np.cumsum(self.weights[order])
        return float(self.points[order][np.searchsorted(cum, 0.5)])


@dataclass
class StationaryDiagnostic:
    method: str
    interior_mass: float  # mass of [a, 1-a] before boundary renormalization
    boundary_mass: float  # mass of the two boundary cells/bins
    flagged: bool
    iterations: int = 0
    residual: float = 0.0
    notes: list = field(default_factory=list)

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class HistogramMeasure(EmpiricalMeasure):
    """Masses on the cells of a sorted partition ``edges`` of [0, 1].

    Mass is uniformly spread within each cell. ``batch_masses`` (optional,
    shape ``(B, cells)``) holds independent replica-batch estimates for
    standard errors; ``n_samples`` is the number of pooled occupations.
    """

    edges: np.ndarray
    masses: np.ndarray
    batch_masses: np.ndarray | None = None
    n_samples: int | None = None
    diagnostic: StationaryDiagnostic | None = None

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=float)
        self.masses = np.asarray(self.masses, dtype=float)
        if self.edges[0] != 0.0 or self.edges[-1] != 1.0 or np.any(np.diff(self.edges) <= 0):
            raise ValueError("edges must increase strictly from 0 to 1")
        if self.masses.shape != (len(self.edges) - 1,):
            raise ValueError("need one mass per cell")
        if np.any(self.masses < 0) or abs(self.masses.sum() - 1.0) > 1e-10:
            raise ValueError("masses must be nonnegative and sum to 1")

    @classmethod
    def uniform_grid(cls, masses, **kw):
        masses = np.asarray(masses, dtype=float)
        return cls(np.linspace(0.0, 1.0, len(masses) + 1), masses, **kw)

    @property
    def centers(self):
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    def cdf(self, x):
        cum = np.concatenate([[0.0], np.cumsum(self.masses)])
        return np.interp(x, self.edges, cum)

    def mass_above(self, x):
        return 1.0 - self.cdf(x)

    def integrate(self, phi):
        return float(np.dot(self.masses, phi(self.centers)))

    def median(self):
        return float(self.quantile(0.5))

    def quantile(self, u):
        cum = np.concatenate([[0.0], np.cumsum(self.masses)])
        cum[-1] = 1.0
        # inverse of the piecewise-linear cdf; empty cells are skipped by
        # searching on the strictly increasing part
        u = np.asarray(u, dtype=float)
        j = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, len(self.masses) - 1)
        m = self.masses[j]
        frac = np.where(m > 0, (u - cum[j]) / np.where(m > 0, m, 1.0), 0.0)
        return self.edges[j] + np.clip(frac, 0.0, 1.0) * (self.edges[j + 1] - self.edges[j])

    def to_rows(self):
        return [(float(a), float(b), float(m))
                for a, b, m in zip(self.edges[:-1], self.edges[1:], self.masses)]


def kolmogorov_distance(mu, nu, points=None):
    """Sup distance of two CDFs over the union of their edges/atoms."""
    if points is None:
        parts = [np.linspace(0.0, 1.0, 4097)]
        for m in (mu, nu):
            parts.append(m.edges if isinstance(m, HistogramMeasure) else m.points)
        points = np.unique(np.concatenate(parts))
    return float(np.max(np.abs(mu.cdf(points) - nu.cdf(points))))


# -- operators ---------------------------------------------------------------

def apply_U(system, phi, x):
    """``U phi(x) = sum_i p_i phi(f_i(x))``."""
    return sum(p * np.asarray(phi(f(x)), dtype=float) for f, p in zip(system.maps, system.probs))


def apply_P(system, mu):
    """Push a measure forward one random step."""
    if isinstance(mu, AtomicMeasure):
        points = np.concatenate([f(mu.points) for f in system.maps])
        weights = np.concatenate([p * mu.weights for p in system.probs])
        weights /= weights.sum()
        return AtomicMeasure(np.atleast_1d(points), weights)
    if isinstance(mu, HistogramMeasure):
        matrix = transfer_matrix(system, mu.edges)
        masses = matrix.T @ mu.masses
        return HistogramMeasure(mu.edges, masses / masses.sum())
    raise TypeError(f"cannot push forward {type(mu).__name__}")


@dataclass
class UlamOperator:
    cells: int
    matrix: sparse.csr_matrix

    def dense(self):
        return self.matrix.toarray()

    def to_rows(self):
        return [[float(v) for v in row] for row in self.dense()]


def _interval_overlaps(edges, lo, hi):
    """Fractions of each image interval ``[lo_i, hi_i]`` falling in each cell.

    Returns COO triplets ``(row, col, fraction)``; each row's fractions sum
    to 1.
    """
    length = hi - lo
    j_lo = np.clip(np.searchsorted(edges, lo, side="right") - 1, 0, len(edges) - 2)
    j_hi = np.clip(np.searchsorted(edges, hi, side="left") - 1, 0, len(edges) - 2)
    # degenerate (rounded-to-a-point) images land in the cell of lo
    j_hi = np.maximum(j_hi, j_lo)
    rows, cols, vals = [], [], []
    span = int(np.max(j_hi - j_lo)) if len(lo) else 0
    base = np.arange(len(lo))
    for s in range(span + 1):
        j = j_lo + s
        sel = j <= j_hi
        jj = j[sel]
        a = np.maximum(lo[sel], edges[jj])
        b = np.minimum(hi[sel], edges[jj + 1])
        frac = np.where(length[sel] > 0, (b - a) / np.where(length[sel] > 0, length[sel], 1.0),
                        1.0)
        keep = frac > 0
        rows.append(base[sel][keep])
        cols.append(jj[keep])
        vals.append(frac[keep])
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def transfer_matrix(system, edges):
    """Row-stochastic matrix moving uniform cell mass through one step.

    Row ``i`` distributes ``p_k`` of cell ``i`` over the cells hit by the
    image interval ``f_k(C_i)`` in proportion to overlap length.
    """
    edges = np.asarray(edges, dtype=float)
    size = len(edges) - 1
    total = sparse.csr_matrix((size, size))
    for f, p in zip(system.maps, system.probs):
        lo, hi = f(edges[:-1]), f(edges[1:])
        r, c, v = _interval_overlaps(edges, np.atleast_1d(lo), np.atleast_1d(hi))
        part = sparse.csr_matrix((p * v, (r, c)), shape=(size, size))
        total = total + part
    total.sum_duplicates()
    rowsum = np.asarray(total.sum(axis=1)).ravel()
    return sparse.diags(1.0 / rowsum) @ total


def build_ulam(system, cells):
    """Ulam discretization of the Markov operator on ``cells`` uniform cells."""
    if cells < 1:
        raise ValueError("need at least one cell")
    matrix = transfer_matrix(system, np.linspace(0.0, 1.0, int(cells) + 1)).tocsr()
    return UlamOperator(int(cells), matrix)


# -- stationary measure ------------------------------------------------------

def tail_edges(n_uniform=4096, per_decade=40, smallest=1e-15):
    """Cell edges: log cells per decade below ``1/n_uniform`` (and mirrored
    near 1), uniform cells in between."""
    u = 1.0 / n_uniform
    top = math.floor(math.log10(u) * per_decade)
    exps = np.arange(round(math.log10(smallest) * per_decade), top + 1) / per_decade
    lo = np.concatenate([[0.0], 10.0 ** exps[10.0 ** exps < u], [u]])
    hi = np.unique(1.0 - lo[::-1])
    edges = np.concatenate([lo, np.arange(2, n_uniform - 1) / n_uniform, hi])
    return edges, lo, hi


def stationary_measure(system, method="ulam", *, cells=2048, n_steps=100_000,
                       replicas=1000, burn_in=1000, seed=0, bins=4096,
                       per_decade=40, batches=16, x0=0.5, a=0.05, tol=1e-10,
                       max_iter=100_000):
    """Estimate the stationary measure.

    ``method="ulam"``: left Perron vector of the Ulam matrix by power
    iteration, then the two boundary cells are removed and the rest
    renormalized. ``method="monte_carlo"``: pooled post-burn-in occupations of
    ``replicas`` orbits from ``x0`` on a histogram with uniform interior bins
    and log-spaced tail bins.

    The result carries a diagnostic. It is flagged (and a
    ``StationaryMeasureWarning`` issued) when less than half the mass sits in
    ``[a, 1-a]``, which is how boundary absorption shows up for systems
    violating (A3).
    """
    report = check_assumptions(system)
    if not report.a3:
        warnings.warn(
            "boundary exponents are not both positive; a stationary measure on (0,1) "
            "may not exist",
            StationaryMeasureWarning,
            stacklevel=2,
        )
    if method == "ulam":
        mu = _ulam_stationary(system, cells, tol, max_iter, a)
    elif method in ("monte_carlo", "mc"):
        mu = _mc_stationary(system, n_steps, replicas, burn_in, check_seed(seed), bins,
                            per_decade, batches, x0, a)
    else:
        raise ValueError(f"unknown method {method!r}")
    if mu.diagnostic.flagged:
        warnings.warn(
            f"{method} stationary estimate keeps only {mu.diagnostic.interior_mass:.3f} "
            f"of its mass in [{a}, {1 - a}]",
            StationaryMeasureWarning,
            stacklevel=2,
        )
    return mu


def _interior_mass(edges, masses, a):
    cum = np.concatenate([[0.0], np.cumsum(masses)])
    return float(np.interp(1.0 - a, edges, cum) - np.interp(a, edges, cum))


def _ulam_stationary(system, cells, tol, max_iter, a):
    op = build_ulam(system, cells)
    at = op.matrix.T.tocsr()
    pi = np.full(cells, 1.0 / cells)
    residual = np.inf
    it = 0
    while it < max_iter:
        nxt = at @ pi
        nxt /= nxt.sum()
        residual = float(np.abs(nxt - pi).sum())
        pi = nxt
        it += 1
        if residual < tol:
            break
    edges = np.linspace(0.0, 1.0, cells + 1)
    interior = _interior_mass(edges, pi, a)
    boundary = float(pi[0] + pi[-1]) if cells > 1 else 0.0
    notes = []
    if residual >= tol:
        notes.append(f"power iteration stopped at residual {residual:.3g}")
    if cells > 2:
        pi = pi.copy()
        pi[0] = pi[-1] = 0.0
        pi /= pi.sum()
    diag = StationaryDiagnostic("ulam", interior, boundary, interior < 0.5, it, residual, notes)
    return HistogramMeasure(edges, pi, diagnostic=diag)


def _mc_stationary(system, n_steps, replicas, burn_in, seed, bins, per_decade, batches,
                   x0, a):
    edges, lo, hi = tail_edges(bins, per_decade)
    kinds, params, offsets, cum = system.kernel_args
    streams = stream_seeds(seed, replicas, TAG_WORDS)
    batches = max(1, min(batches, replicas))
    counts = _kernels.occupation_histogram(kinds, params, offsets, cum, streams, float(x0),
                                           int(burn_in), int(n_steps), int(bins), lo, hi,
                                           batches)
    total = counts.sum(axis=0)
    n = int(total.sum())
    masses = total / n
    batch_masses = counts / counts.sum(axis=1, keepdims=True)
    interior = _interior_mass(edges, masses, a)
    boundary = float(masses[0] + masses[-1])
    diag = StationaryDiagnostic("monte_carlo", interior, boundary, interior < 0.5)
    return HistogramMeasure(edges, masses, batch_masses, n, diag)


# -- tails -------------------------------------------------------------------

@dataclass
class TailProfile:
    alpha: float  # exponent used for M and membership
    alpha_star_left: float
    alpha_star_right: float
    M: float
    ratio_max: float
    thresholds: np.ndarray
    left_mass: np.ndarray
    right_mass: np.ndarray
    member: bool
    slope_left: float
    slope_right: float
    slope_window: tuple
    insufficient: bool

    @property
    def alpha_star(self):
        return min(self.alpha_star_left, self.alpha_star_right)

    def to_dict(self):
        return {
            "alpha": self.alpha,
            "alpha_star": self.alpha_star,
            "alpha_star_left": self.alpha_star_left,
            "alpha_star_right": self.alpha_star_right,
            "M": self.M,
            "ratio_max": self.ratio_max,
            "member": self.member,
            "slope_left": self.slope_left,
            "slope_right": self.slope_right,
            "slope_window": list(self.slope_window),
            "insufficient_tail_samples": self.insufficient,
        }


def moment_root(slopes, probs, lo=1e-6, iterations=200):
    """Positive root of ``sum_i p_i * slopes_i**(-alpha) = 1`` by bisection.

    The function equals 1 at ``alpha = 0`` with derivative
    ``-sum p_i log slopes_i``; a root exists iff that derivative is negative
    and some slope is below 1. Returns ``inf`` when every slope is >= 1 (no
    polynomial tail) and raises when the derivative at 0 is not negative.
    """
    logs = np.log(np.asarray(slopes, dtype=float))
    probs = np.asarray(probs, dtype=float)
    if not np.dot(probs, logs) > 0:
        raise ValueError("the boundary exponent must be positive for a tail root to exist")
    if np.all(logs >= 0):
        return math.inf

    def g(alpha):
        return float(np.dot(probs, np.exp(-alpha * logs))) - 1.0

    hi = 1.0
    while g(hi) < 0:
        hi *= 2.0
        if hi > 1e6:
            return math.inf
    lo_ = lo
    for _ in range(iterations):
        mid = 0.5 * (lo_ + hi)
        if g(mid) < 0:
            lo_ = mid
        else:
            hi = mid
    return 0.5 * (lo_ + hi)


def tail_profile(mu, system, alpha=None, M=None, window=(4, 16), min_count=10):
    """Tail exponents, the constant ``M`` and the tail regression slope.

    ``alpha`` defaults to the smaller of the two tail roots. ``M`` defaults
    to ``max(1, max_x mu((0,x]) / x**alpha)`` over ``x = 2**-1 .. 2**-20``
    (both tails). Slopes are regressions of ``log mu((0,x])`` on ``log x``
    over ``x = 2**-window[1] .. 2**-window[0]``, weighted by the expected
    sample count when known; thresholds with no mass are dropped.
    """
    a0 = moment_root([f.deriv0 for f in system.maps], system.probs)
    a1 = moment_root([f.deriv1 for f in system.maps], system.probs)
    alpha = min(a0, a1) if alpha is None else float(alpha)
    thresholds = 2.0 ** -np.arange(1, 21)
    left = np.asarray(mu.mass_below(thresholds), dtype=float)
    right = np.asarray(mu.mass_above(1.0 - thresholds), dtype=float)
    finite_alpha = alpha if math.isfinite(alpha) else 50.0
    ratios = np.maximum(left, right) / thresholds ** finite_alpha
    ratio_max = float(ratios.max())
    if M is None:
        M = max(1.0, ratio_max)
    member = bool(np.all(np.maximum(left, right) <= M * thresholds ** finite_alpha * (1 + 1e-12)))

    ks = np.arange(window[0], window[1] + 1)
    xs = 2.0 ** -ks
    n = getattr(mu, "n_samples", None)
    insufficient = False

    def slope(masses):
        nonlocal insufficient
        keep = masses > 0
        if n is not None and np.any(masses * n < min_count):
            insufficient = True
        if keep.sum() < 3:
            insufficient = True
            return float("nan")
        w = masses[keep] * n if n is not None else np.ones(keep.sum())
        xl, yl = np.log(xs[keep]), np.log(masses[keep])
        sw = w.sum()
        mx, my = np.dot(w, xl) / sw, np.dot(w, yl) / sw
        return float(np.dot(w, (xl - mx) * (yl - my)) / np.dot(w, (xl - mx) ** 2))

    s_left = slope(np.asarray(mu.mass_below(xs), dtype=float))
    s_right = slope(np.asarray(mu.mass_above(1.0 - xs), dtype=float))
    return TailProfile(alpha, a0, a1, float(M), ratio_max, thresholds, left, right, member,
                       s_left, s_right, (float(xs[-1]), float(xs[0])), insufficient)
