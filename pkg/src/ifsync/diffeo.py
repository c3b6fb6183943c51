"""Parametric orientation-preserving C^2 diffeomorphisms of [0, 1].

Three families are supported:

* ``moebius(lam)``: ``f(x) = lam*x / (1 + (lam - 1)*x)`` with ``lam > 0``;
* ``cubic(alpha, beta)``: ``f(x) = x + x*(1 - x)*(alpha + beta*x)``, admitted
  only when its derivative is positive on [0, 1];
* ``composed(f1, ..., fk)``: the composition ``f1 o f2 o ... o fk`` (``fk`` is
  applied first).

All evaluators accept scalars or numpy arrays.
"""

import re
from dataclasses import dataclass

import numpy as np

MOEBIUS = 0
CUBIC = 1

_FAMILY = re.compile(r"^\s*(moebius|cubic|composed)\s*:\s*(.*?)\s*$", re.DOTALL)


class Diffeo:
    """Base class. Subclasses are immutable and hashable."""

    family = ""

    def __call__(self, x):
        return self.eval(x)

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        return _unwrap(np.clip(self._eval(x), 0.0, 1.0))

    def deriv(self, x):
        return _unwrap(self._deriv(np.asarray(x, dtype=float)))

    def log_deriv(self, x):
        return _unwrap(self._log_deriv(np.asarray(x, dtype=float)))

    def log_deriv_slope(self, x):
        """``d/dx log f'(x)``."""
        return _unwrap(self._log_deriv_slope(np.asarray(x, dtype=float)))

    @property
    def deriv0(self):
        return float(self._deriv(np.float64(0.0)))

    @property
    def deriv1(self):
        return float(self._deriv(np.float64(1.0)))

    def ops(self):
        """Elementary steps ``(kind, p, q)`` in application order."""
        raise NotImplementedError

    def mirror(self):
        """The conjugate ``x -> 1 - f(1 - x)``."""
        raise NotImplementedError


@dataclass(frozen=True)
class Moebius(Diffeo):
    lam: float
    family = "moebius"

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam <= 0:
            raise ValueError(f"moebius parameter must be > 0, got {self.lam}")

    # den = 1 + (lam - 1) x written as lam x + (1 - x) so that f(1) == 1 exactly
    def _den(self, x):
        return self.lam * x + (1.0 - x)

    def _eval(self, x):
        return self.lam * x / self._den(x)

    def _deriv(self, x):
        den = self._den(x)
        return self.lam / (den * den)

    def _log_deriv(self, x):
        return np.log(self.lam) - 2.0 * np.log(self._den(x))

    def _log_deriv_slope(self, x):
        return -2.0 * (self.lam - 1.0) / self._den(x)

    def ops(self):
        return ((MOEBIUS, float(self.lam), 0.0),)

    def mirror(self):
        return Moebius(1.0 / self.lam)

    def __str__(self):
        return f"moebius:{self.lam!r}"


@dataclass(frozen=True)
class Cubic(Diffeo):
    alpha: float
    beta: float
    family = "cubic"

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and np.isfinite(self.beta)):
            raise ValueError("cubic parameters must be finite")
        grid = np.linspace(0.0, 1.0, 1001)
        points = [grid]
        if self.beta != 0.0:
            vertex = (self.beta - self.alpha) / (3.0 * self.beta)
            if 0.0 <= vertex <= 1.0:
                points.append(np.array([vertex]))
        worst = float(np.min(self._deriv(np.concatenate(points))))
        if not worst > 0.0:
            raise ValueError(
                f"cubic:{self.alpha},{self.beta} is not increasing on [0,1] "
                f"(min derivative {worst:.6g})"
            )

    def _eval(self, x):
        return x + x * (1.0 - x) * (self.alpha + self.beta * x)

    def _deriv(self, x):
        a, b = self.alpha, self.beta
        return 1.0 + a + 2.0 * (b - a) * x - 3.0 * b * x * x

    def _log_deriv(self, x):
        return np.log(self._deriv(x))

    def _log_deriv_slope(self, x):
        a, b = self.alpha, self.beta
        return (2.0 * (b - a) - 6.0 * b * x) / self._deriv(x)

    def ops(self):
        return ((CUBIC, float(self.alpha), float(self.beta)),)

    def mirror(self):
        # 1 - f(1 - x) = x + x(1 - x)(-(alpha + beta) + beta x)
        return Cubic(-(self.alpha + self.beta), self.beta)

    def __str__(self):
        return f"cubic:{self.alpha!r},{self.beta!r}"


@dataclass(frozen=True)
class Composed(Diffeo):
    parts: tuple
    family = "composed"

    def __post_init__(self):
        if not self.parts:
            raise ValueError("composed needs at least one component")
        object.__setattr__(self, "parts", tuple(self.parts))

    def _chain(self, x):
        # innermost (last listed) first
        xs = [x]
        for f in reversed(self.parts):
            xs.append(np.clip(f._eval(xs[-1]), 0.0, 1.0))
        return xs

    def _eval(self, x):
        return self._chain(x)[-1]

    def _deriv(self, x):
        return np.exp(self._log_deriv(x))

    def _log_deriv(self, x):
        xs = self._chain(x)
        return sum(f._log_deriv(xi) for f, xi in zip(reversed(self.parts), xs))

    def _log_deriv_slope(self, x):
        # (log (g o h)')' = (log g')'(h) * h' + (log h')'
        xs = self._chain(x)
        slope = 0.0
        for f, xi in zip(reversed(self.parts), xs):
            slope = slope * f._deriv(xi) + f._log_deriv_slope(xi)
        return slope

    def ops(self):
        return tuple(op for f in reversed(self.parts) for op in f.ops())

    def mirror(self):
        return Composed(tuple(f.mirror() for f in self.parts))

    def __str__(self):
        return "composed:[" + ",".join(str(f) for f in self.parts) + "]"


def _unwrap(v):
    return float(v) if np.ndim(v) == 0 else v


def eval(f, x):  # noqa: A001 - mirrors the operation name
    return f.eval(x)


def deriv(f, x):
    return f.deriv(x)


def log_deriv_slope_bound(f, grid_size=10_000):
    """Max of ``|(log f')'|`` over a uniform grid of ``grid_size`` points."""
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    grid = np.linspace(0.0, 1.0, int(grid_size))
    return float(np.max(np.abs(f.log_deriv_slope(grid))))


def parse_diffeo(text):
    """Build a Diffeo from ``"moebius:2"``, ``"cubic:1,-1.5"`` or
    ``"composed:[moebius:2,cubic:1,-1.5]"``."""
    if isinstance(text, Diffeo):
        return text
    m = _FAMILY.match(str(text))
    if m is None:
        raise ValueError(f"cannot parse map {text!r}: expected moebius:, cubic: or composed:")
    family, body = m.groups()
    if family == "composed":
        if not (body.startswith("[") and body.endswith("]")):
            raise ValueError(f"composed map needs a bracketed list, got {text!r}")
        return Composed(tuple(parse_diffeo(item) for item in _split_items(body[1:-1])))
    try:
        values = [float(v) for v in body.split(",")]
    except ValueError:
        raise ValueError(f"bad parameters in map {text!r}") from None
    if family == "moebius":
        if len(values) != 1:
            raise ValueError(f"moebius takes one parameter, got {text!r}")
        return Moebius(values[0])
    if len(values) != 2:
        raise ValueError(f"cubic takes two parameters, got {text!r}")
    return Cubic(*values)


def _split_items(body):
    # a comma starts a new item only at bracket depth 0 and before a family name
    items, depth, start = [], 0, 0
    for i, ch in enumerate(body):
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        elif ch == "," and depth == 0 and _FAMILY.match(body[i + 1:]):
            items.append(body[start:i])
            start = i + 1
    items.append(body[start:])
    if any(not item.strip() for item in items):
        raise ValueError(f"empty component in composed list {body!r}")
    return items
