"""Last-passage percolation with i.i.d. mean-one exponential weights.

Weight ``u[i, j]`` of replica ``rep`` is ``-log U`` with ``U`` a keyed uniform
of ``(seed, rep, i, j)``, so any table can be rebuilt from its seed alone.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.stats import binomtest

from . import rng

TOL_DOMAIN = 1e-12


def _lpp_key(seed: int):
    return np.uint64(rng.stream_key(int(seed), rng.STREAM_LPP))


@njit(inline="always", cache=True)
def _weight(key, rep, i, j):
    return -math.log(rng.uniform3(key, rep, i, j))


@njit(cache=True)
def _full_table(key, rep, M, N):
    G = np.zeros((M + 1, N + 1))
    for i in range(1, M + 1):
        for j in range(1, N + 1):
            G[i, j] = _weight(key, rep, i, j) + max(G[i - 1, j], G[i, j - 1])
    return G[1:, 1:]


@njit(cache=True)
def _rolled(key, rep, M, N):
    # keep a row along the shorter side
    if N <= M:
        row = np.zeros(N + 1)
        for i in range(1, M + 1):
            for j in range(1, N + 1):
                row[j] = _weight(key, rep, i, j) + max(row[j], row[j - 1])
        return row[N]
    col = np.zeros(M + 1)
    for j in range(1, N + 1):
        for i in range(1, M + 1):
            col[i] = _weight(key, rep, i, j) + max(col[i], col[i - 1])
    return col[M]


@njit(cache=True)
def _batch(key, first, reps, M, N):
    out = np.empty(reps)
    for r in range(reps):
        out[r] = _rolled(key, first + r, M, N)
    return out


@dataclass
class PassageTable:
    M: int
    N: int
    seed: int
    rep: int
    G: np.ndarray

    def __call__(self, i: int, j: int) -> float:
        """``G(i, j)`` with 1-based indices; zero on the axes."""
        if i == 0 or j == 0:
            return 0.0
        return float(self.G[i - 1, j - 1])


def _dims(M, N):
    if int(M) < 1 or int(N) < 1:
        raise ValueError(f"dimensions must be at least 1, got ({M}, {N})")
    return int(M), int(N)


def passage_table(M: int, N: int, seed: int, rep: int = 0) -> PassageTable:
    M, N = _dims(M, N)
    return PassageTable(M, N, int(seed), int(rep), _full_table(_lpp_key(seed), rep, M, N))


def passage_time(M: int, N: int, seed: int, rep: int = 0) -> float:
    M, N = _dims(M, N)
    return float(_rolled(_lpp_key(seed), rep, M, N))


def passage_times(M: int, N: int, seed: int, reps: int, first: int = 0) -> np.ndarray:
    """``H(M, N)`` for replicas ``first, ..., first + reps - 1``."""
    M, N = _dims(M, N)
    if reps <= 0:
        return np.zeros(0)
    return _batch(_lpp_key(seed), int(first), int(reps), M, N)


def shape_limit(alpha: float, beta: float) -> float:
    if alpha < 0 or beta < 0:
        raise ValueError("shape arguments must be nonnegative")
    return (math.sqrt(alpha) + math.sqrt(beta)) ** 2


# ------------------------------------------------------------- rate function

def _acosh1p(a: float) -> float:
    """acosh(1 + a) without cancellation for small ``a``."""
    a = max(a, 0.0)
    return math.log1p(a + math.sqrt(a * (2.0 + a)))


def rate_psi(w: float, t: float, r: float) -> float:
    """Upper-tail rate of ``H([nr], [nw]) > nt``, zero on ``sqrt w + sqrt r = sqrt t``.

    The closed form is rearranged around ``s = sqrt t - sqrt r - sqrt w`` so
    that every factor vanishing at the boundary is computed directly.
    """
    if min(w, t, r) < 0:
        raise ValueError("w, t, r must be nonnegative")
    st, sr, sw = math.sqrt(t), math.sqrt(r), math.sqrt(w)
    s = st - sr - sw
    if s < -TOL_DOMAIN * max(1.0, st):
        raise ValueError(f"outside the domain: sqrt(w)+sqrt(r)={sr + sw} > sqrt(t)={st}")
    if s <= TOL_DOMAIN * max(1.0, st):
        return 0.0
    disc = s * (st + sr + sw) * (t - (sr - sw) ** 2)
    out = math.sqrt(max(disc, 0.0))
    if r > 0:
        out -= 2.0 * r * _acosh1p(s * (st - sr + sw) / (2.0 * st * sr))
    if w > 0:
        out -= 2.0 * w * _acosh1p(s * (st - sw + sr) / (2.0 * st * sw))
    return max(out, 0.0)


def rate_psi_direct(w: float, t: float, r: float) -> float:
    """Literal closed form with acosh arguments clamped to ``[1, inf)``."""
    def ach(z):
        z = max(z, 1.0)
        return math.log(z + math.sqrt(z * z - 1.0))
    out = math.sqrt(max((t - r - w) ** 2 - 4 * r * w, 0.0))
    if r > 0:
        out -= 2 * r * ach((t + r - w) / (2 * math.sqrt(t * r)))
    if w > 0:
        out -= 2 * w * ach((t + w - r) / (2 * math.sqrt(t * w)))
    return out


def psi_expansion(w: float, t: float, h: float) -> float:
    """Leading small-``h`` term of ``rate_psi(w, t, u - h)``, ``u = (sqrt t - sqrt w)^2``."""
    u = (math.sqrt(t) - math.sqrt(w)) ** 2
    if w <= 0 or u <= 0:
        raise ValueError("need w > 0 and u > 0")
    return 4.0 / 3.0 * w ** 0.25 * t ** -0.25 * u ** -0.5 * h ** 1.5


def prop1_coefficient(x: float, t: float) -> float:
    return 4.0 * math.sqrt(2.0) / 3.0 * math.sqrt(t - x) / (t + x)


def prop1_parameters(x: float, t: float) -> tuple[float, float]:
    """``(w, u)`` with ``w = t g(x/t)`` and ``u = x + t g(x/t)``."""
    w = (t - x) ** 2 / (4.0 * t)
    return w, x + w


@dataclass
class ExponentFit:
    exponent: float
    prefactor: float
    correction: float
    hs: np.ndarray = field(repr=False, default=None)
    psi: np.ndarray = field(repr=False, default=None)


def fit_local_exponent(w: float, t: float, h_lo: float = 1e-4, h_hi: float = 1e-2,
                       npts: int = 41) -> ExponentFit:
    """Log-log slope of ``h -> rate_psi(w, t, u - h)``, the ratio to the leading term
    at ``h_lo``, and the least-squares ``h^{5/2}`` coefficient of the remainder."""
    u = (math.sqrt(t) - math.sqrt(w)) ** 2
    hs = np.geomspace(h_lo, h_hi, npts)
    psi = np.array([rate_psi(w, t, u - h) for h in hs])
    slope = float(np.polyfit(np.log(hs), np.log(psi), 1)[0])
    lead = np.array([psi_expansion(w, t, h) for h in hs])
    ratio = float(psi[0] / lead[0])
    h52 = hs ** 2.5
    corr = float(np.dot(psi - lead, h52) / np.dot(h52, h52))
    return ExponentFit(slope, ratio * psi_expansion(w, t, 1.0), corr, hs, psi)


def correction_constant(x: float, t: float, h_max: float, npts: int = 200) -> float:
    """Smallest ``C >= 0`` with ``A h^{3/2} - C h^{5/2} <= Psi(u - h)`` on ``(0, h_max]``.

    ``A`` is the closed-form coefficient in ``x``; ``Psi`` the exact rate at
    ``w = t g(x/t)``.
    """
    w, u = prop1_parameters(x, t)
    A = prop1_coefficient(x, t)
    hs = np.geomspace(h_max * 1e-4, h_max, npts)
    gap = [(A * h ** 1.5 - rate_psi(w, t, u - h)) / h ** 2.5 for h in hs if h < u]
    return float(max(0.0, max(gap)))


def prop1_bound(x: float, t: float, h: float, n: float, C: float | None = None) -> float:
    """``exp{-n (A h^{3/2} - C h^{5/2})}`` capped at 1."""
    if not -t < x < t or h < 0 or n < 0:
        raise ValueError("need -t < x < t, h >= 0 and n >= 0")
    if h == 0:
        return 1.0
    if C is None:
        C = correction_constant(x, t, h)
    expo = n * (prop1_coefficient(x, t) * h ** 1.5 - C * h ** 2.5)
    return float(min(1.0, math.exp(-expo)))


# ------------------------------------------------------------ statistics

def wilson_interval(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    if n == 0:
        return (0.0, 1.0)
    ci = binomtest(int(k), int(n)).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass
class TailRow:
    n: int
    reps: int
    threshold: float
    empirical_p: float
    ci_low: float
    ci_high: float
    bound: float = float("nan")
    passed: bool = True


TAIL_COLUMNS = ["n", "reps", "threshold", "empirical_p", "ci_low", "ci_high", "bound"]


def write_tail_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TAIL_COLUMNS)
        for r in rows:
            w.writerow([r.n, r.reps, repr(float(r.threshold)), repr(float(r.empirical_p)),
                        repr(float(r.ci_low)), repr(float(r.ci_high)), repr(float(r.bound))])


@dataclass
class HypothesisReport:
    rows: list
    C_required: float
    eps: float
    C: float

    @property
    def supported(self) -> bool:
        return all(r.empirical_p <= self.eps for r in self.rows)


def hypothesis_h_probe(alpha_seq, beta_seq, C: float, ns, reps: int, seed: int,
                       eps: float = 0.05, B: float = 10.0) -> HypothesisReport:
    """Empirical lower tails ``P{H < n (sqrt a_n + sqrt b_n)^2 - C n^{1/3}}``.

    ``alpha_seq``/``beta_seq`` map ``n`` to the sequence values; their limits
    are taken at the largest grid point and the closeness condition is checked
    with constant ``B``.  ``C_required`` is the smallest ``C`` that keeps every
    empirical tail at or below ``eps``.
    """
    ns = [int(n) for n in ns]
    if reps <= 0 or not ns:
        return HypothesisReport([], float("nan"), eps, C)
    a_lim, b_lim = alpha_seq(max(ns) * 10 ** 6), beta_seq(max(ns) * 10 ** 6)
    rows, need = [], 0.0
    for n in ns:
        a, b = alpha_seq(n), beta_seq(n)
        if abs(a - a_lim) + abs(b - b_lim) > B * n ** (-1 / 3) * math.log(n) ** (1 / 3):
            raise ValueError(f"sequence condition violated at n={n}")
        M, N = int(n * a), int(n * b)
        H = passage_times(M, N, rng.derive_seed(seed, n), reps)
        centre = n * shape_limit(a, b)
        depth = (centre - H) / n ** (1 / 3)
        thr = centre - C * n ** (1 / 3)
        k = int(np.count_nonzero(H < thr))
        lo, hi = wilson_interval(k, reps)
        rows.append(TailRow(n, reps, thr, k / reps, lo, hi))
        # smallest C whose empirical tail is at most eps at this n
        need = max(need, float(np.sort(depth)[::-1][int(math.floor(eps * reps))]))
    return HypothesisReport(rows, need, eps, C)


# --------------------------------------------------------------- xi via LPP

@njit(cache=True)
def _xi_from_table(G, i, t):
    # G[a-1, b-1] = G(a, b); probe (i + j, j) for j above the initial value
    j = max(-i, 0)
    while True:
        jn = j + 1
        a = i + jn
        if a > G.shape[0] or jn > G.shape[1]:
            return -1
        if G[a - 1, jn - 1] > t:
            return j
        j = jn


@njit(cache=True)
def _xi_batch(key, first, reps, i, t, J0):
    out = np.empty(reps, dtype=np.int64)
    for r in range(reps):
        J = J0
        while True:
            M = max(i + J, 1)
            G = _full_table(key, first + r, M, J)
            v = _xi_from_table(G, i, t)
            if v >= 0:
                out[r] = v
                break
            J *= 2
    return out


def xi_law_from_lpp(i: int, t: float, reps: int, seed: int, first: int = 0) -> np.ndarray:
    """Samples of ``xi_i(t) = max{j >= max(-i, 0) : G(i+j, j) <= t}``.

    The table grows by doubling until the probe line leaves ``[0, t]``.
    """
    if reps <= 0:
        return np.zeros(0, dtype=np.int64)
    if t <= 0:
        return np.full(reps, max(-i, 0), dtype=np.int64)
    J0 = int(max(-i, 0) + t / 4 + 4 * t ** (1 / 3) + 8)
    return _xi_batch(_lpp_key(seed), int(first), int(reps), int(i), float(t), J0)


def xi_lower_tail(x: float, t: float, h: float, n: int, reps: int, seed: int) -> TailRow:
    """Frequency of ``xi_[nx](nt) <= n t g(x/t) - 2nh`` via the passage-time dual.

    ``xi_i(s) <= m`` iff ``G(i+m+1, m+1) > s`` for ``m`` at or above the initial value.
    """
    i = int(math.floor(n * x))
    thr = n * t * (t - x) ** 2 / (4 * t * t) - 2 * n * h
    m = int(math.floor(thr))
    bound = prop1_bound(x, t, h, n)
    if m < max(-i, 0):
        k = 0
    else:
        H = passage_times(i + m + 1, m + 1, seed, reps)
        k = int(np.count_nonzero(H > n * t))
    lo, hi = wilson_interval(k, reps)
    p = k / reps
    se = math.sqrt(bound * (1 - bound) / reps)
    return TailRow(n, reps, thr, p, lo, hi, bound, p <= bound + 3 * se)


@dataclass
class BoundReport:
    rows: list
    psi: float

    @property
    def violations(self) -> int:
        return sum(not r.passed for r in self.rows)


def ld_bound_check(w: float, r: float, t: float, ns, reps: int, seed: int) -> BoundReport:
    """Empirical ``P{H([nr], [nw]) > nt}`` against ``exp(-n Psi)`` plus three standard errors.

    The standard error is taken at the bound, the value being tested.
    """
    if t < shape_limit(w, r) * (1 - TOL_DOMAIN):
        raise ValueError(f"t={t} lies below the shape value {shape_limit(w, r)}")
    psi = rate_psi(w, t, r)
    rows = []
    for n in ns:
        n = int(n)
        M, N = int(math.floor(n * r)), int(math.floor(n * w))
        H = passage_times(M, N, rng.derive_seed(seed, n), reps)
        k = int(np.count_nonzero(H > n * t))
        p = k / reps
        bound = math.exp(-n * psi)
        se = math.sqrt(bound * (1 - bound) / reps)
        lo, hi = wilson_interval(k, reps)
        rows.append(TailRow(n, reps, n * t, p, lo, hi, bound, p <= bound + 3 * se))
    return BoundReport(rows, psi)
