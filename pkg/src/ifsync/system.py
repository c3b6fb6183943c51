"""Random iterated function systems: words, orbits and structural checks."""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._rng import TAG_WORDS, check_seed, stream_seeds
from .diffeo import Diffeo, parse_diffeo


class AssumptionError(RuntimeError):
    """An operation needs (A1)-(A3) and the system does not satisfy them."""


@dataclass(frozen=True)
class Word:
    """Map indices (0-based) and the stream they were drawn from."""

    indices: np.ndarray
    seed: int | None = None
    replica: int | None = None

    def __len__(self):
        return len(self.indices)

    def __add__(self, other):
        return Word(np.concatenate([self.indices, other.indices]))


@dataclass(frozen=True)
class Orbit:
    values: np.ndarray
    log_derivs: np.ndarray  # S_n = log (f^n)'(x0), S_0 = 0

    @property
    def start(self):
        return float(self.values[0])

    @property
    def last(self):
        return float(self.values[-1])


@dataclass
class AssumptionReport:
    a1: bool
    a2: bool
    a3: bool
    lambda0: float
    lambda1: float
    a2_witness: float | None = None
    a3_offending: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def ok(self):
        return self.a1 and self.a2 and self.a3

    def to_dict(self):
        return {
            "A1": self.a1,
            "A2": self.a2,
            "A3": self.a3,
            "lambda0": self.lambda0,
            "lambda1": self.lambda1,
            "a2_witness": self.a2_witness,
            "a3_offending": list(self.a3_offending),
            "warnings": list(self.warnings),
        }


class IfsSystem:
    """Maps ``f_1..f_m`` applied i.i.d. with probabilities ``p_1..p_m``.

    ``h``, ``l_prime`` and ``l_second`` are the structural constants used by
    the first-return expansion bound: ``h`` is the largest value allowed by
    the endpoint-derivative inequalities, while ``l_prime`` and ``l_second``
    are grid maxima of ``f'`` and ``|(log f')'|`` inflated by the grid
    discretization slack so that they bound the true maxima.
    """

    def __init__(self, maps, probs, grid_size=10_000):
        self.maps = tuple(parse_diffeo(f) for f in maps)
        probs = np.asarray(probs, dtype=float)
        if len(self.maps) == 0:
            raise ValueError("a system needs at least one map")
        if probs.shape != (len(self.maps),):
            raise ValueError(f"got {len(self.maps)} maps but {probs.size} probabilities")
        if np.any(~np.isfinite(probs)) or np.any(probs <= 0):
            raise ValueError(f"probabilities must be positive, got {probs.tolist()}")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities must sum to 1, got sum {probs.sum()!r}")
        self.probs = probs
        self.grid_size = int(grid_size)
        cum = np.cumsum(probs)
        cum[-1] = 1.0
        self._cum = cum
        self._flat = _flatten(self.maps)
        self.h = _largest_h(self.maps)
        self.l_prime, self.l_second = _certified_bounds(self.maps, self.grid_size)

    @classmethod
    def from_strings(cls, maps, probs, grid_size=10_000):
        return cls([parse_diffeo(s) for s in maps], probs, grid_size)

    @property
    def m(self):
        return len(self.maps)

    def __repr__(self):
        maps = ", ".join(str(f) for f in self.maps)
        return f"IfsSystem([{maps}], probs={self.probs.tolist()})"

    def mirror(self):
        return IfsSystem([f.mirror() for f in self.maps], self.probs, self.grid_size)

    def is_mirror_symmetric(self, grid_size=257, tol=1e-12):
        """True if ``x -> 1 - x`` permutes the maps while preserving probabilities."""
        grid = np.linspace(0.0, 1.0, grid_size)
        mirrored = [f.mirror() for f in self.maps]
        used = set()
        for g, p in zip(mirrored, self.probs):
            for j, (f, q) in enumerate(zip(self.maps, self.probs)):
                if j not in used and abs(p - q) <= tol and np.allclose(f(grid), g(grid), atol=tol):
                    used.add(j)
                    break
            else:
                return False
        return True

    def apply_all(self, x):
        """Array of shape ``(m, ...)`` with ``f_i(x)`` in row ``i``."""
        return np.stack([np.asarray(f(x)) for f in self.maps])

    # kernels take these three arrays plus the cumulative probabilities
    @property
    def kernel_args(self):
        return self._flat + (self._cum,)


def _flatten(maps):
    kinds, params, offsets = [], [], [0]
    for f in maps:
        for kind, p, q in f.ops():
            kinds.append(kind)
            params.append((p, q))
        offsets.append(len(kinds))
    return (
        np.asarray(kinds, dtype=np.int64),
        np.asarray(params, dtype=np.float64).reshape(-1, 2),
        np.asarray(offsets, dtype=np.int64),
    )


def _largest_h(maps):
    ends = [f.deriv0 for f in maps] + [f.deriv1 for f in maps]
    h = min(min(ends) / 2.0, 1.0 / (2.0 * max(ends)))
    return h


def _certified_bounds(maps, grid_size):
    grid = np.linspace(0.0, 1.0, grid_size)
    dx = grid[1] - grid[0]
    l_second = 0.0
    l_prime = 0.0
    for f in maps:
        slope = np.abs(f.log_deriv_slope(grid))
        # slope may peak between grid points by at most one grid jump
        bound = float(slope.max() + np.max(np.abs(np.diff(slope)), initial=0.0))
        l_second = max(l_second, bound)
    for f in maps:
        # |log f'(x) - log f'(grid)| <= L'' dx / 2
        l_prime = max(l_prime, float(np.max(f.deriv(grid))) * math.exp(l_second * dx / 2.0))
    return l_prime, l_second


def sample_word(system, length, seed, replica=0):
    """``length`` i.i.d. map indices, a pure function of ``(seed, replica)``."""
    if length < 0:
        raise ValueError("word length must be >= 0")
    seed = check_seed(seed)
    streams = stream_seeds(seed, replica + 1, TAG_WORDS)[replica:]
    idx = _kernels.draw_words(system._cum, streams, 0, int(length))[0]
    return Word(idx, seed, replica)


def iterate(system, x, word):
    """Orbit ``x_0..x_n`` of ``x`` under ``word`` (first index applied first)."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"start point must lie in [0,1], got {x}")
    indices = np.asarray(word.indices if isinstance(word, Word) else word, dtype=np.int64)
    if indices.size and (indices.min() < 0 or indices.max() >= system.m):
        raise ValueError("word contains an index outside the map list")
    kinds, params, offsets, _ = system.kernel_args
    values, logs = _kernels.iterate_word(kinds, params, offsets, float(x), indices)
    return Orbit(values, logs)


def boundary_exponents(system):
    """Expected log-derivatives at 0 and at 1."""
    lam0 = math.fsum(p * math.log(f.deriv0) for f, p in zip(system.maps, system.probs))
    lam1 = math.fsum(p * math.log(f.deriv1) for f, p in zip(system.maps, system.probs))
    return lam0, lam1


def check_assumptions(system, grid_size=1000, margin=1e-12):
    """Check (A1)-(A3).

    A1 holds by construction. A2 is tested on the interior grid points plus
    the midpoints of cells where some ``f_i(x) - x`` changes sign; a failure
    confined to isolated grid points is only a warning. A3 requires both
    boundary exponents to be positive.
    """
    if grid_size < 100:
        raise ValueError("grid_size must be >= 100")
    grid = np.arange(1, grid_size) / grid_size
    disp = system.apply_all(grid) - grid
    change = np.any(np.sign(disp[:, 1:]) != np.sign(disp[:, :-1]), axis=0)
    mids = (grid[1:][change] + grid[:-1][change]) / 2.0
    points = np.sort(np.concatenate([grid, mids]))
    disp = system.apply_all(points) - points
    good = (disp.min(axis=0) < -margin) & (disp.max(axis=0) > margin)
    bad = np.flatnonzero(~good)
    notes = []
    witness = None
    if bad.size == 0:
        a2 = True
    elif bad.size == 1 or np.all(np.diff(bad) > 1):
        a2 = True
        notes.append(
            "A2 margin missed at isolated points: "
            + ", ".join(f"{points[i]:.6g}" for i in bad[:5])
        )
        for note in notes:
            warnings.warn(note, RuntimeWarning, stacklevel=2)
    else:
        a2 = False
        witness = float(points[bad[0]])

    lam0, lam1 = boundary_exponents(system)
    offending = [name for name, v in (("lambda0", lam0), ("lambda1", lam1)) if not v > 0]
    return AssumptionReport(
        a1=all(isinstance(f, Diffeo) for f in system.maps),
        a2=a2,
        a3=not offending,
        lambda0=lam0,
        lambda1=lam1,
        a2_witness=witness,
        a3_offending=offending,
        warnings=notes,
    )


def require_assumptions(system, what):
    report = check_assumptions(system)
    if not report.ok:
        failed = [k for k in ("a1", "a2", "a3") if not getattr(report, k)]
        raise AssumptionError(
            f"{what} needs (A1)-(A3); failed: {', '.join(f.upper() for f in failed)} "
            f"(lambda0={report.lambda0:.6g}, lambda1={report.lambda1:.6g})"
        )
    return report
