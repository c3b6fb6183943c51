"""Decay of correlations for Lipschitz observables."""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._rng import TAG_START, TAG_WARM, TAG_WORDS, check_seed, stream_seeds
from .ratefit import RateFit, fit_exponential
from .system import require_assumptions

_OBSERVABLES = {
    "identity": lambda x: x,
    "cos_pi": lambda x: np.cos(np.pi * x),
    "one": lambda x: np.ones_like(x),
    "square": lambda x: x * x,
}


@dataclass
class Observable:
    """A vectorized function on [0, 1] with certified Lipschitz data."""

    func: object
    name: str = ""
    lip: float | None = None
    sup: float | None = None

    def __call__(self, x):
        return np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float) * np.ones_like(
            np.asarray(x, dtype=float))

    @classmethod
    def named(cls, name, grid_size=100_001):
        if name.startswith("const:"):
            c = float(name.split(":", 1)[1])
            obs = cls(lambda x, c=c: np.full_like(x, c), name)
        elif name in _OBSERVABLES:
            obs = cls(_OBSERVABLES[name], name)
        else:
            raise ValueError(f"unknown observable {name!r}; choose from "
                             f"{sorted(_OBSERVABLES)} or const:<value>")
        return lipschitz_certify(obs, grid_size)

    @property
    def lip_norm(self):
        return self.sup + self.lip


def lipschitz_certify(phi, grid_size=100_001, random_pairs=10_000, seed=0):
    """Fill in ``phi.lip`` and ``phi.sup``.

    ``lip`` is the largest difference quotient over consecutive points of a
    uniform grid and over ``random_pairs`` random pairs; ``sup`` is the grid
    maximum of ``|phi|``.
    """
    grid = np.linspace(0.0, 1.0, int(grid_size))
    values = phi(grid)
    lip = float(np.max(np.abs(np.diff(values)) / np.diff(grid)))
    rng = np.random.default_rng(seed)
    u, v = rng.random(random_pairs), rng.random(random_pairs)
    keep = u != v
    quot = np.abs(phi(u[keep]) - phi(v[keep])) / np.abs(u[keep] - v[keep])
    if quot.size:
        lip = max(lip, float(quot.max()))
    phi.lip = lip
    phi.sup = float(np.max(np.abs(values)))
    return phi


@dataclass
class CorrelationSeries:
    n: np.ndarray
    signed: np.ndarray  # E[psi(X_0) phi(X_n)] - E phi(X_0) E psi(X_0)
    stderr: np.ndarray
    fit: RateFit | None = None
    meta: dict = field(default_factory=dict)

    @property
    def estimate(self):
        return np.abs(self.signed)

    columns = ("n", "correlation", "stderr")

    def rows(self):
        return [(int(n), float(c), float(s)) for n, c, s in zip(self.n, self.estimate, self.stderr)]


def sample_stationary(mu, size, seed=0):
    """Inverse-CDF draws from a histogram measure, from their own stream."""
    stream = stream_seeds(check_seed(seed), 1, TAG_START)[0]
    return np.clip(mu.quantile(_kernels.uniform_block(stream, int(size))), 0.0, 1.0)


def correlation_series(system, phi, psi, mu, n_max=100, replicas=100_000, *, seed=0,
                       burn_in=0, chunk=20_000, snr=3.0):
    """``|E psi(X_0) phi(X_n) - E phi(X_0) E psi(X_0)|`` with ``X_0 ~ mu``.

    Each replica starts at an inverse-CDF draw from ``mu`` (optionally
    advanced ``burn_in`` steps) and runs its own word. Standard errors use
    the linearized estimator ``psi0 phi_n - mean(phi0) psi0 - mean(psi0) phi0``.
    The fit is censored once the estimate drops below ``snr`` standard
    errors.
    """
    require_assumptions(system, "correlation decay")
    kinds, params, offsets, cum = system.kernel_args
    starts = sample_stationary(mu, replicas, seed)
    if burn_in:
        warm = stream_seeds(check_seed(seed), replicas, TAG_WARM)
        starts = _kernels.orbit_block(kinds, params, offsets, cum, warm, starts,
                                      int(burn_in))[:, -1]
    streams = stream_seeds(check_seed(seed), replicas, TAG_WORDS)
    phi0 = phi(starts)
    psi0 = psi(starts)
    m_phi0 = phi0.mean()
    m_psi0 = psi0.mean()
    cross = np.zeros(n_max + 1)
    cross_sq = np.zeros(n_max + 1)
    for lo in range(0, replicas, chunk):
        hi = min(lo + chunk, replicas)
        orbits = _kernels.orbit_block(kinds, params, offsets, cum, streams[lo:hi],
                                      starts[lo:hi], int(n_max))
        phin = phi(orbits)
        # influence terms of the product-of-means estimator
        z = psi0[lo:hi, None] * phin - m_phi0 * psi0[lo:hi, None] - m_psi0 * phi0[lo:hi, None]
        cross += z.sum(axis=0)
        cross_sq += (z * z).sum(axis=0)
    mean_z = cross / replicas
    signed = mean_z + m_phi0 * m_psi0
    var = np.maximum(cross_sq / replicas - mean_z ** 2, 0.0)
    stderr = np.sqrt(var / max(replicas - 1, 1))
    n = np.arange(n_max + 1)
    est = np.abs(signed)
    fit = fit_exponential(est, stderr, n=n, snr=snr)
    meta = {
        "phi": getattr(phi, "name", ""),
        "psi": getattr(psi, "name", ""),
        "replicas": replicas,
        "phi_lip_norm": getattr(phi, "lip_norm", math.nan),
        "psi_lip_norm": getattr(psi, "lip_norm", math.nan),
    }
    return CorrelationSeries(n, signed, stderr, fit, meta)
