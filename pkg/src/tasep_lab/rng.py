"""Counter-based random streams keyed by integers.

Every random number in the package is a pure function of a key tuple
``(seed, stream, a, b, c)`` hashed through the SplitMix64 finalizer.  Nothing
is consumed sequentially, so enlarging a simulation window or reordering
replicas never perturbs values that were already defined.  The Poisson clock
of site ``i`` is built bin by bin: the unit time interval ``[b, b+1)`` holds a
Poisson(1) number of epochs placed uniformly, each drawn from its own key.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

STREAM_CLOCK = 1
STREAM_INIT = 2
STREAM_LPP = 3
STREAM_SEED = 4

_C1 = np.uint64(0xBF58476D1CE4E5B9)
_C2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_MAX_BIN_COUNT = 24


def _poisson_cdf_table(n):
    p, acc, out = math.exp(-1.0), 0.0, []
    for k in range(n):
        acc += p
        out.append(acc)
        p /= k + 1
    return np.array(out)


_POISSON1_CDF = _poisson_cdf_table(_MAX_BIN_COUNT)


@njit(inline="always", cache=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _C1
    z = (z ^ (z >> _S27)) * _C2
    return z ^ (z >> _S31)


@njit(inline="always", cache=True)
def stream_key(seed, stream):
    h = mix64(np.uint64(np.int64(seed)) + _GOLDEN)
    return mix64(h ^ (np.uint64(stream) * _GOLDEN))


@njit(inline="always", cache=True)
def hash3(key, a, b, c):
    h = mix64(key + np.uint64(np.int64(a)))
    h = mix64(h + np.uint64(np.int64(b)))
    return mix64(h + np.uint64(np.int64(c)))


@njit(inline="always", cache=True)
def unit(h):
    """Map a 64-bit hash to a double in the open interval (0, 1)."""
    return (np.int64(h >> _S11) + 0.5) * 1.1102230246251565e-16


@njit(inline="always", cache=True)
def uniform3(key, a, b, c):
    return unit(hash3(key, a, b, c))


@njit(inline="always", cache=True)
def _poisson1(u):
    k = 0
    while k < _MAX_BIN_COUNT and u > _POISSON1_CDF[k]:
        k += 1
    return k


@njit(inline="always", cache=True)
def _bin_hash(key, site, b):
    return mix64(mix64(key + np.uint64(np.int64(site))) ^ (np.uint64(b) * _GOLDEN))


@njit(inline="always", cache=True)
def _bin_point(h, j):
    # j-th epoch offset inside the bin, j >= 1
    return unit(mix64(h + np.uint64(j) * _GOLDEN))


@njit(cache=True)
def bin_epochs(key, site, b):
    """Sorted epochs of the clock at ``site`` inside ``[b, b+1)``."""
    h = _bin_hash(key, site, b)
    count = _poisson1(unit(h))
    out = np.empty(count)
    for j in range(count):
        out[j] = b + _bin_point(h, j + 1)
    out.sort()
    return out


@njit(cache=True)
def next_epoch(key, site, after):
    """First epoch of the clock at ``site`` strictly later than ``after``."""
    b = 0 if after < 0.0 else int(after)
    while True:
        h = _bin_hash(key, site, b)
        count = _poisson1(unit(h))
        best = math.inf
        for j in range(count):
            e = b + _bin_point(h, j + 1)
            if e > after and e < best:
                best = e
        if best < math.inf:
            return best
        b += 1


@njit(cache=True)
def site_epochs(key, site, horizon):
    """All epochs of the clock at ``site`` in ``(0, horizon]``, sorted."""
    nbins = int(math.ceil(horizon))
    total = 0
    for b in range(nbins):
        total += _poisson1(unit(_bin_hash(key, site, b)))
    out = np.empty(total)
    m = 0
    for b in range(nbins):
        pts = bin_epochs(key, site, b)
        for e in pts:
            if e <= horizon:
                out[m] = e
                m += 1
    return out[:m]


@njit(cache=True)
def bernoulli_sites(key, sites, probs):
    out = np.zeros(sites.shape[0], dtype=np.int8)
    for n in range(sites.shape[0]):
        if uniform3(key, sites[n], 0, 0) < probs[n]:
            out[n] = 1
    return out


def derive_seed(base: int, *parts: int) -> int:
    """Deterministic 63-bit child seed from a base seed and integer labels."""
    key = np.uint64(stream_key(int(base), STREAM_SEED))
    padded = (list(parts) + [0, 0, 0])[:3]
    if len(parts) > 3:
        raise ValueError("at most three labels are supported")
    return int(hash3(key, *padded)) >> 1
