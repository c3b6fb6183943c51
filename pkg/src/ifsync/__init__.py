"""Simulation of random iterated function systems of interval diffeomorphisms:
stationary measures, Lyapunov exponents, synchronization and correlation
decay."""

from .diffeo import Composed, Cubic, Diffeo, Moebius, parse_diffeo
from .system import (AssumptionError, IfsSystem, Word, boundary_exponents, check_assumptions,
                     iterate, sample_word)

__all__ = [
    "AssumptionError", "Composed", "Cubic", "Diffeo", "IfsSystem", "Moebius", "Word",
    "boundary_exponents", "check_assumptions", "iterate", "parse_diffeo", "sample_word",
]
