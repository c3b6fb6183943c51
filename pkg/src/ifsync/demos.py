"""Reference systems used by the tests, the acceptance suite and the CLI."""

from .system import IfsSystem

D4_MAPS = ("cubic:1.0,-1.5", "cubic:0.5,-1.5", "moebius:2.0", "moebius:0.5")
D4_PROBS = (0.3, 0.3, 0.2, 0.2)


def d4():
    """Four-map demo satisfying (A1)-(A3); the second map is the mirror
    ``x -> 1 - f(1 - x)`` of the first, so the system is mirror-symmetric."""
    return IfsSystem.from_strings(D4_MAPS, D4_PROBS)


def single_map():
    """One expanding-at-0 map: (A2) and (A3) fail."""
    return IfsSystem.from_strings(["moebius:2.0"], [1.0])


def symmetric_pair():
    """An inverse Moebius pair with equal weights: boundary exponents vanish."""
    return IfsSystem.from_strings(["moebius:2.0", "moebius:0.5"], [0.5, 0.5])


NAMED = {"d4": d4, "single_map": single_map, "symmetric_pair": symmetric_pair}
