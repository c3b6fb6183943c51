"""Boundary and volume Lyapunov exponents."""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._rng import TAG_BIRKHOFF, check_seed, stream_seeds
from .markov import HistogramMeasure
from .system import boundary_exponents, require_assumptions

__all__ = ["boundary_exponents", "volume_exponent", "birkhoff_averages", "lyapunov_report",
           "Estimate", "LyapunovReport"]


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    method: str
    n_steps: int = 0
    replicas: int = 0

    @property
    def z(self):
        """``|value| / stderr``."""
        return abs(self.value) / self.stderr if self.stderr > 0 else math.inf

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class LyapunovReport:
    lambda0: float
    lambda1: float
    quadrature: Estimate
    birkhoff: Estimate

    @property
    def agreement(self):
        """Estimator gap in units of the combined standard error."""
        se = math.hypot(self.quadrature.stderr, self.birkhoff.stderr)
        gap = abs(self.quadrature.value - self.birkhoff.value)
        return gap / se if se > 0 else (0.0 if gap == 0 else math.inf)

    def to_dict(self):
        return {
            "lambda0": self.lambda0,
            "lambda1": self.lambda1,
            "quadrature": self.quadrature.to_dict(),
            "birkhoff": self.birkhoff.to_dict(),
            "agreement_sigma": self.agreement,
        }


def mean_log_deriv(system, x):
    """``sum_i p_i log f_i'(x)``."""
    return sum(p * f.log_deriv(x) for f, p in zip(system.maps, system.probs))


def volume_exponent(system, mu=None, method="quadrature", *, n=10_000, replicas=1000,
                    burn_in=1000, seed=0, x0=0.5):
    """Volume exponent ``sum_i p_i * integral log f_i' dmu*``.

    ``quadrature`` integrates against the histogram ``mu`` at cell centers;
    its standard error comes from the replica-batch histograms when ``mu``
    carries them (zero otherwise). ``birkhoff`` averages ``S_n / n`` over
    ``replicas`` orbits from ``x0`` after ``burn_in`` discarded steps.
    """
    require_assumptions(system, "the volume exponent")
    if method == "quadrature":
        if not isinstance(mu, HistogramMeasure):
            raise ValueError("quadrature needs a histogram stationary measure")
        g = mean_log_deriv(system, mu.centers)
        value = float(np.dot(mu.masses, g))
        stderr = 0.0
        if mu.batch_masses is not None and len(mu.batch_masses) > 1:
            per_batch = mu.batch_masses @ g
            stderr = float(np.std(per_batch, ddof=1) / math.sqrt(len(per_batch)))
        return Estimate(value, stderr, "quadrature", mu.n_samples or 0,
                        0 if mu.batch_masses is None else len(mu.batch_masses))
    if method == "birkhoff":
        per_replica = birkhoff_averages(system, x0, n=n, replicas=replicas, burn_in=burn_in,
                                        seed=seed)
        return Estimate(float(per_replica.mean()),
                        float(per_replica.std(ddof=1) / math.sqrt(replicas)),
                        "birkhoff", n, replicas)
    raise ValueError(f"unknown method {method!r}")


def birkhoff_averages(system, x0, *, n=10_000, replicas=1000, burn_in=1000, seed=0):
    """Per-replica Birkhoff averages of ``log f'_omega`` along orbits of ``x0``."""
    if replicas < 2:
        raise ValueError("need at least two replicas for a standard error")
    kinds, params, offsets, cum = system.kernel_args
    # own stream family: independent of the Monte Carlo stationary histogram
    streams = stream_seeds(check_seed(seed), replicas, TAG_BIRKHOFF)
    return _kernels.birkhoff_log_deriv(kinds, params, offsets, cum, streams, float(x0),
                                       int(burn_in), int(n))


def lyapunov_report(system, mu, *, n=10_000, replicas=1000, burn_in=1000, seed=0):
    lam0, lam1 = boundary_exponents(system)
    quad = volume_exponent(system, mu, "quadrature")
    birk = volume_exponent(system, method="birkhoff", n=n, replicas=replicas,
                           burn_in=burn_in, seed=seed)
    return LyapunovReport(lam0, lam1, quad, birk)
