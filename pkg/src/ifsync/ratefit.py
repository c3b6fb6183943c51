"""Log-linear fits of ``C * q**n`` to positive, decaying series."""

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class RateFit:
    C: float
    q: float
    r2: float
    n_lo: int
    n_hi: int
    n_points: int
    censored: int
    available: bool = True
    slope: float = float("nan")

    def bound(self, n):
        return self.C * self.q ** np.asarray(n, dtype=float)

    def to_dict(self):
        return asdict(self)


def unavailable(censored=0, n_points=0):
    nan = float("nan")
    return RateFit(nan, nan, nan, -1, -1, n_points, censored, available=False)


def transient_end(n, logv, span=5, tol=0.1):
    """Index where the local log-slope settles.

    Local slopes are least-squares slopes over ``span`` consecutive points;
    the transient ends at the first position whose next ``span`` local
    slopes all lie within ``tol`` (relative) of its own.
    """
    k = len(n)
    if k < 2 * span:
        return 0
    local = np.array([np.polyfit(n[i:i + span], logv[i:i + span], 1)[0]
                      for i in range(k - span + 1)])
    for i in range(len(local) - span + 1):
        ref = local[i]
        if np.all(np.abs(local[i:i + span] - ref) <= tol * abs(ref)):
            return i
    return 0


def fit_exponential(values, stderr=None, censored=None, n=None, *, floor=0.0,
                    window="transient", snr=None, weighted=False, min_points=5):
    """Fit ``values[i] ~ C * q**n[i]`` by least squares on ``log(values)``.

    Parameters
    ----------
    values : array_like
        The series. Entries ``<= floor`` or non-finite are censored.
    stderr : array_like, optional
        Standard errors. Used for weights (``weighted=True``: inverse squared
        relative error) and, when ``snr`` is given, to censor entries with
        ``value < snr * stderr``.
    censored : array_like of bool, optional
        Extra censoring flags.
    n : array_like, optional
        Abscissae; defaults to ``0..len(values)-1``.
    window : {"transient", "all"}
        ``"transient"`` drops the leading transient (see ``transient_end``).

    The usable window is the leading run of uncensored entries; the fit
    stops at the first censored entry. Returns a ``RateFit`` with
    ``available=False`` when fewer than ``min_points`` entries are usable.
    A nonnegative slope is reported as ``q = 1``.
    """
    v = np.asarray(values, dtype=float)
    n = np.arange(len(v)) if n is None else np.asarray(n, dtype=float)
    bad = ~np.isfinite(v) | (v <= floor)
    if censored is not None:
        bad |= np.asarray(censored, dtype=bool)
    se = None
    if stderr is not None:
        se = np.asarray(stderr, dtype=float)
        if snr is not None:
            bad |= v < snr * se
    n_censored = int(bad.sum())
    stop = int(np.argmax(bad)) if bad.any() else len(v)
    if stop < min_points:
        return unavailable(n_censored, stop)
    nn, logv = n[:stop], np.log(v[:stop])
    w = np.ones(stop)
    if weighted and se is not None:
        rel = se[:stop] / v[:stop]
        w = np.where(rel > 0, 1.0 / np.maximum(rel, 1e-300) ** 2, 0.0)
        if not np.any(w > 0):
            w = np.ones(stop)
        elif np.any(w == 0):
            w[w == 0] = w[w > 0].max()
    start = 0
    if window == "transient":
        start = transient_end(nn, logv)
        if stop - start < min_points:
            start = max(0, stop - min_points)
    elif window != "all":
        raise ValueError(f"unknown window policy {window!r}")
    nn, logv, w = nn[start:], logv[start:], w[start:]
    slope, intercept = _wls(nn, logv, w)
    resid = logv - (intercept + slope * nn)
    mean = np.average(logv, weights=w)
    ss_tot = float(np.sum(w * (logv - mean) ** 2))
    ss_res = float(np.sum(w * resid ** 2))
    if ss_tot <= 1e-300:
        r2 = 1.0 if ss_res <= 1e-24 * max(1.0, float(np.sum(w))) else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    q = 1.0 if slope >= 0 else float(np.exp(slope))
    return RateFit(
        C=float(np.exp(intercept)),
        q=q,
        r2=float(r2),
        n_lo=int(nn[0]),
        n_hi=int(nn[-1]),
        n_points=len(nn),
        censored=n_censored,
        slope=float(slope),
    )


def _wls(x, y, w):
    sw = w.sum()
    mx = np.dot(w, x) / sw
    my = np.dot(w, y) / sw
    dx = x - mx
    sxx = np.dot(w, dx * dx)
    slope = np.dot(w, dx * (y - my)) / sxx
    return float(slope), float(my - slope * mx)
