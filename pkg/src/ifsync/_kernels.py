"""Compiled orbit kernels.

A system is flattened into ``kinds`` (int64), ``params`` (float64, shape
``(n_ops, 2)``) and ``offsets`` (map ``k`` owns ops ``offsets[k]:offsets[k+1]``)
so that numba never sees Python objects. Every kernel loops over replicas
and draws replica ``r``'s word from its own stream, so outputs do not depend
on chunking.
"""

import math

import numpy as np
from numba import njit

from ._rng import _draw_index, _uniform

_MOEBIUS = 0
_CUBIC = 1


@njit(cache=True)
def apply_map(kinds, params, offsets, k, x):
    """Return ``(f_k(x), log f_k'(x))``."""
    logd = 0.0
    for j in range(offsets[k], offsets[k + 1]):
        p = params[j, 0]
        q = params[j, 1]
        if kinds[j] == _MOEBIUS:
            den = p * x + (1.0 - x)
            logd += math.log(p) - 2.0 * math.log(den)
            x = p * x / den
        else:
            d = 1.0 + p + 2.0 * (q - p) * x - 3.0 * q * x * x
            logd += math.log(d)
            x = x + x * (1.0 - x) * (p + q * x)
        if x < 0.0:
            x = 0.0
        elif x > 1.0:
            x = 1.0
    return x, logd


@njit(cache=True)
def apply_map_value(kinds, params, offsets, k, x):
    for j in range(offsets[k], offsets[k + 1]):
        p = params[j, 0]
        q = params[j, 1]
        if kinds[j] == _MOEBIUS:
            x = p * x / (p * x + (1.0 - x))
        else:
            x = x + x * (1.0 - x) * (p + q * x)
        if x < 0.0:
            x = 0.0
        elif x > 1.0:
            x = 1.0
    return x


@njit(cache=True)
def iterate_word(kinds, params, offsets, x0, word):
    n = word.shape[0]
    xs = np.empty(n + 1)
    s = np.empty(n + 1)
    xs[0] = x0
    s[0] = 0.0
    x = x0
    acc = 0.0
    for i in range(n):
        x, ld = apply_map(kinds, params, offsets, word[i], x)
        acc += ld
        xs[i + 1] = x
        s[i + 1] = acc
    return xs, s


@njit(cache=True)
def draw_words(cum, streams, start, n):
    out = np.empty((streams.shape[0], n), dtype=np.int64)
    for r in range(streams.shape[0]):
        for i in range(n):
            out[r, i] = _draw_index(cum, _uniform(streams[r], start + i))
    return out


@njit(cache=True)
def uniform_block(stream, size):
    out = np.empty(size)
    for i in range(size):
        out[i] = _uniform(stream, i)
    return out


@njit(cache=True)
def _bin_of(x, n_uniform, lo_edges, hi_edges):
    # layout: [left log bins][n_uniform uniform bins on [u, 1-u)][right log bins]
    u = 1.0 / n_uniform
    nl = lo_edges.shape[0] - 1
    if x < u:
        return np.searchsorted(lo_edges, x, side="right") - 1
    if x >= 1.0 - u:
        j = np.searchsorted(hi_edges, x, side="right") - 1
        nh = hi_edges.shape[0] - 1
        if j >= nh:
            j = nh - 1
        return nl + n_uniform - 2 + j
    j = int(x * n_uniform)
    if j < 1:
        j = 1
    elif j > n_uniform - 2:
        j = n_uniform - 2
    return nl + j - 1


@njit(cache=True)
def occupation_histogram(kinds, params, offsets, cum, streams, x0, burn_in,
                         n_steps, n_uniform, lo_edges, hi_edges, n_batches):
    """Per-batch counts of orbit occupations after burn-in."""
    n_rep = streams.shape[0]
    n_bins = (lo_edges.shape[0] - 1) + (n_uniform - 2) + (hi_edges.shape[0] - 1)
    counts = np.zeros((n_batches, n_bins), dtype=np.int64)
    for r in range(n_rep):
        b = (r * n_batches) // n_rep
        x = x0
        st = streams[r]
        for i in range(burn_in + n_steps):
            k = _draw_index(cum, _uniform(st, i))
            x = apply_map_value(kinds, params, offsets, k, x)
            if i >= burn_in:
                counts[b, _bin_of(x, n_uniform, lo_edges, hi_edges)] += 1
    return counts


@njit(cache=True)
def birkhoff_log_deriv(kinds, params, offsets, cum, streams, x0, burn_in, n_steps):
    """Per-replica ``S_n / n`` of the log-derivative after burn-in."""
    n_rep = streams.shape[0]
    out = np.empty(n_rep)
    for r in range(n_rep):
        x = x0
        st = streams[r]
        acc = 0.0
        for i in range(burn_in + n_steps):
            k = _draw_index(cum, _uniform(st, i))
            x, ld = apply_map(kinds, params, offsets, k, x)
            if i >= burn_in:
                acc += ld
        out[r] = acc / n_steps
    return out


@njit(cache=True)
def pair_moments(kinds, params, offsets, cum, streams, streams_y, x, y, n_max,
                 beta, floor):
    """Sums of ``d_n**beta`` and its square, plus the count with ``d_n >= floor``.

    ``streams_y`` drives the second point; pass ``streams`` itself for the
    common-word coupling.
    """
    s1 = np.zeros(n_max + 1)
    s2 = np.zeros(n_max + 1)
    alive = np.zeros(n_max + 1, dtype=np.int64)
    for r in range(streams.shape[0]):
        xn = x
        yn = y
        for i in range(n_max + 1):
            if i > 0:
                k = _draw_index(cum, _uniform(streams[r], i - 1))
                xn = apply_map_value(kinds, params, offsets, k, xn)
                ky = _draw_index(cum, _uniform(streams_y[r], i - 1))
                yn = apply_map_value(kinds, params, offsets, ky, yn)
            d = abs(yn - xn)
            v = d if beta == 1.0 else d ** beta
            s1[i] += v
            s2[i] += v * v
            if d >= floor:
                alive[i] += 1
    return s1, s2, alive


@njit(cache=True)
def pair_final_distance(kinds, params, offsets, cum, streams, x, y, n):
    out = np.empty(streams.shape[0])
    for r in range(streams.shape[0]):
        xn = x
        yn = y
        for i in range(n):
            k = _draw_index(cum, _uniform(streams[r], i))
            xn = apply_map_value(kinds, params, offsets, k, xn)
            yn = apply_map_value(kinds, params, offsets, k, yn)
        out[r] = yn - xn
    return out


@njit(cache=True)
def escape_times(kinds, params, offsets, cum, streams, x, a, n_max):
    """First ``j >= 1`` with ``x_j >= a``; ``n_max + 1`` when censored."""
    out = np.empty(streams.shape[0], dtype=np.int64)
    for r in range(streams.shape[0]):
        xn = x
        t = n_max + 1
        for i in range(n_max):
            k = _draw_index(cum, _uniform(streams[r], i))
            xn = apply_map_value(kinds, params, offsets, k, xn)
            if xn >= a:
                t = i + 1
                break
        out[r] = t
    return out


@njit(cache=True)
def low_occupation_counts(kinds, params, offsets, cum, streams, x, a, n_max):
    """For each n, the number of replicas whose fraction of steps
    ``1..n`` spent in ``[a, 1-a]`` is at most 3/4; also the min and max
    fraction seen (for sanity checks)."""
    hits = np.zeros(n_max + 1, dtype=np.int64)
    fmin = 1.0
    fmax = 0.0
    for r in range(streams.shape[0]):
        xn = x
        occ = 0
        for i in range(1, n_max + 1):
            k = _draw_index(cum, _uniform(streams[r], i - 1))
            xn = apply_map_value(kinds, params, offsets, k, xn)
            if a <= xn <= 1.0 - a:
                occ += 1
            if 4 * occ <= 3 * i:
                hits[i] += 1
            frac = occ / i
            if frac < fmin:
                fmin = frac
            if frac > fmax:
                fmax = frac
    return hits, fmin, fmax


@njit(cache=True)
def coupling_times(kinds, params, offsets, cum, streams, x, y, a, horizon, n_stop):
    """Coupling time ``T`` (``horizon + 1`` when censored) and the distance
    at step ``min(T, n_stop)``."""
    n_rep = streams.shape[0]
    times = np.empty(n_rep, dtype=np.int64)
    stopped = np.empty(n_rep)
    for r in range(n_rep):
        xn = x
        yn = y
        t = horizon + 1
        d_stop = -1.0
        for i in range(horizon + 1):
            if i > 0:
                k = _draw_index(cum, _uniform(streams[r], i - 1))
                xn = apply_map_value(kinds, params, offsets, k, xn)
                yn = apply_map_value(kinds, params, offsets, k, yn)
            if i == n_stop:
                d_stop = yn - xn
            if a <= xn and yn <= 1.0 - a:
                t = i
                if d_stop < 0.0:
                    d_stop = yn - xn
                break
        if d_stop < 0.0:
            # censored before n_stop was reached
            d_stop = np.nan
        times[r] = t
        stopped[r] = d_stop
    return times, stopped


@njit(cache=True)
def orbit_block(kinds, params, offsets, cum, streams, x0, n_max):
    """Orbits ``x_0..x_n_max`` for each replica, started at ``x0[r]``."""
    n_rep = streams.shape[0]
    out = np.empty((n_rep, n_max + 1))
    for r in range(n_rep):
        xn = x0[r]
        out[r, 0] = xn
        for i in range(n_max):
            k = _draw_index(cum, _uniform(streams[r], i))
            xn = apply_map_value(kinds, params, offsets, k, xn)
            out[r, i + 1] = xn
    return out
