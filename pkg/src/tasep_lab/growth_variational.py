"""Corner-growth interfaces xi^k and the variational representation of TASEP.

Everything is kept in absolute site coordinates: ``W[k, i] = xi^k_{i-k}``.
At an epoch of ``D_i`` every interface updates its column ``i`` by

    W[k, i] <- min(W[k, i] + 1, W[k, i-1], W[k, i+1] + 1)

and the height ``z`` by the dual max-plus rule.  The last term is dropped at
the right edge (vacant ghost site) and column ``left - 1`` never moves.  With
``k`` running over ``[left-1, right]`` the identity

    z_i(t) = max_k { z_k(0) - W[k, i](t) }

is exact on the window, not just approximately.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from numba import njit

from . import rng
from .lattice_process import (ClockLog, Configuration, HeightField, _check_span,
                              _snapshot_times, height_process)


@njit(cache=True)
def _initial_family(left, right):
    n = right - left + 2
    W = np.empty((n, n), dtype=np.int64)
    for a in range(n):
        for b in range(n):
            W[a, b] = max(a - b, 0)
    return W


@njit(cache=True)
def _update_column(W, a, last):
    # a = column index in [1, n-1]; rows are interfaces
    for r in range(W.shape[0]):
        v = W[r, a] + 1
        if W[r, a - 1] < v:
            v = W[r, a - 1]
        if not last and W[r, a + 1] + 1 < v:
            v = W[r, a + 1] + 1
        W[r, a] = v


@njit(cache=True)
def _coupled_sweep(z, eta, left, right, x0, ev_t, ev_s, snaps, with_family):
    """Joint sweep of z, eta, the discrepancy and (optionally) the W family.

    Array column ``a`` is site ``left - 1 + a``.
    """
    n = right - left + 2
    S = snaps.shape[0]
    W = _initial_family(left, right) if with_family else np.zeros((1, 1), dtype=np.int64)
    z_out = np.empty((S, n), dtype=np.int64)
    eta_out = np.empty((S, n - 1), dtype=np.int8)
    x_out = np.empty(S, dtype=np.int64)
    W_out = np.empty((S, W.shape[0], W.shape[1]), dtype=np.int64)
    x = x0
    exited = x0 > right
    k = 0
    for q in range(S):
        while k < ev_t.shape[0] and ev_t[k] <= snaps[q]:
            site = ev_s[k]
            a = site - left + 1
            last = site == right
            # height
            v = z[a] - 1
            if z[a - 1] > v:
                v = z[a - 1]
            if not last and z[a + 1] - 1 > v:
                v = z[a + 1] - 1
            z[a] = v
            if with_family:
                _update_column(W, a, last)
            # occupations with the marked discrepancy
            i = site - left
            if not exited and site == x:
                if last:
                    exited = True
                    x = right + 1
                elif eta[i + 1] == 0:
                    x += 1
            elif not exited and site == x - 1:
                if eta[i] == 1:
                    eta[i] = 0
                    eta[i + 1] = 1
                    x -= 1
            elif eta[i] == 1:
                if last:
                    eta[i] = 0
                elif eta[i + 1] == 0:
                    eta[i] = 0
                    eta[i + 1] = 1
            k += 1
        z_out[q] = z
        eta_out[q] = eta
        x_out[q] = x
        if with_family:
            W_out[q] = W
    return z_out, eta_out, x_out, W_out


@njit(cache=True)
def _argmax_bounds(z0, W):
    """Per column: maximum, smallest and largest maximizing row."""
    K, n = W.shape
    val = np.empty(n, dtype=np.int64)
    kmin = np.empty(n, dtype=np.int64)
    kmax = np.empty(n, dtype=np.int64)
    for b in range(n):
        best = z0[0] - W[0, b]
        lo = 0
        hi = 0
        for r in range(1, K):
            c = z0[r] - W[r, b]
            if c > best:
                best = c
                lo = r
                hi = r
            elif c == best:
                hi = r
        val[b] = best
        kmin[b] = lo
        kmax[b] = hi
    return val, kmin, kmax


@njit(cache=True)
def _variational_x(z0, W, z, first_row):
    """Smallest column where some row >= first_row attains the maximum."""
    K, n = W.shape
    for b in range(n):
        for r in range(first_row, K):
            if z0[r] - W[r, b] == z[b]:
                return b
    return n


# ------------------------------------------------------------------- types

@dataclass
class XiProcess:
    """``heights[q, j]`` is ``xi^k_{rel_left + j}`` at ``times[q]``."""

    k: int
    rel_left: int
    times: np.ndarray
    heights: np.ndarray

    def at(self, i: int, q: int = -1) -> int:
        return int(self.heights[q, i - self.rel_left])


@dataclass
class CoupledRun:
    """One realization of z, eta, the discrepancy and the whole W family."""

    left: int
    right: int
    x0: int
    z0: np.ndarray
    times: np.ndarray
    z: np.ndarray
    eta: np.ndarray
    x_tracked: np.ndarray
    W: np.ndarray

    @property
    def sites(self) -> np.ndarray:
        return np.arange(self.left - 1, self.right + 1)

    def family(self, q: int) -> list[XiProcess]:
        return [XiProcess(int(k), int(self.left - 1 - k), self.times[q:q + 1],
                          self.W[q, r][None, :]) for r, k in enumerate(self.sites)]


@dataclass
class VariationalValue:
    site: int
    value: int
    argmax: np.ndarray


@dataclass
class VerificationReport:
    runs: int = 0
    snapshots: int = 0
    identity_checks: int = 0
    identity_violations: int = 0
    position_checks: int = 0
    position_violations: int = 0
    height_checks: int = 0
    height_violations: int = 0
    ordering_checks: int = 0
    ordering_violations: int = 0
    argmax_monotone_checks: int = 0
    argmax_monotone_violations: int = 0
    interior_edge_touches: int = 0
    argmax_min: int | None = None
    argmax_max: int | None = None
    details: list = field(default_factory=list)

    @property
    def violations(self) -> int:
        return (self.identity_violations + self.position_violations + self.height_violations
                + self.ordering_violations + self.argmax_monotone_violations)

    def merge(self, other: "VerificationReport") -> "VerificationReport":
        out = VerificationReport()
        for f in self.__dataclass_fields__:
            a, b = getattr(self, f), getattr(other, f)
            if f == "details":
                setattr(out, f, a + b)
            elif f == "argmax_min":
                setattr(out, f, b if a is None else a if b is None else min(a, b))
            elif f == "argmax_max":
                setattr(out, f, b if a is None else a if b is None else max(a, b))
            else:
                setattr(out, f, a + b)
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["violations"] = self.violations
        return d

    def to_text(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


# -------------------------------------------------------------- operations

def coupled_run(config: Configuration, clocks: ClockLog, until: float, x0: int | None = None,
                snapshots=None, with_family: bool = True) -> CoupledRun:
    """Sweep z, eta, the discrepancy at ``x0`` and every ``xi^k`` over one clock log."""
    _check_span(config, clocks, until)
    if x0 is None:
        x0 = config.right + 1
    elif config[x0] != 0:
        raise ValueError(f"second-class particle must start on a vacant site, site {x0} is occupied")
    snaps = _snapshot_times(config, until, snapshots)
    z0 = height_process(config).z.astype(np.int64)
    ev_t, ev_s = clocks.events(config.time, until)
    z_out, eta_out, x_out, W_out = _coupled_sweep(z0.copy(), config.eta.copy(), config.left,
                                                  config.right, int(x0), ev_t, ev_s, snaps,
                                                  with_family)
    return CoupledRun(config.left, config.right, int(x0), z0, snaps, z_out, eta_out, x_out,
                      W_out if with_family else None)


def xi_evolve(k: int, clocks: ClockLog, until: float, snapshots=None) -> XiProcess:
    """Evolve the single interface ``xi^k`` on the columns covered by the clock window."""
    w = clocks.window
    if not w.left - 1 <= k <= w.right:
        raise ValueError(f"base index {k} not covered by window [{w.left}, {w.right}]")
    if until > w.horizon:
        raise ValueError(f"time {until} beyond clock horizon {w.horizon}")
    snaps = _snapshot_times(Configuration(np.zeros(1), 0), until, snapshots)
    ev_t, ev_s = clocks.events(0.0, until)
    n = w.right - w.left + 2
    cols = np.arange(w.left - 1, w.right + 1)
    W = np.maximum(k - cols, 0).astype(np.int64)[None, :]
    out = _xi_sweep(W, w.left, w.right, ev_t, ev_s, snaps)
    return XiProcess(int(k), int(w.left - 1 - k), snaps, out.reshape(snaps.size, n))


@njit(cache=True)
def _xi_sweep(W, left, right, ev_t, ev_s, snaps):
    out = np.empty((snaps.shape[0], W.shape[1]), dtype=np.int64)
    k = 0
    for q in range(snaps.shape[0]):
        while k < ev_t.shape[0] and ev_t[k] <= snaps[q]:
            _update_column(W, ev_s[k] - left + 1, ev_s[k] == right)
            k += 1
        out[q] = W[0]
    return out


def variational_z(run: CoupledRun, i: int, q: int = -1, strict: bool = True) -> VariationalValue:
    """``max_k {z_k(0) - xi^k_{i-k}}`` at snapshot ``q`` with its argmax set.

    With ``strict`` an argmax on the outermost base index raises, since the
    supremum over all integers could then lie outside the window.
    """
    b = i - (run.left - 1)
    if not 0 <= b < run.z0.size:
        raise IndexError(f"site {i} outside window")
    cand = run.z0 - run.W[q][:, b]
    val = int(cand.max())
    arg = run.sites[cand == val]
    if strict and (arg[0] == run.left - 1 or arg[-1] == run.right) and \
            run.left < i < run.right:
        raise ValueError(f"argmax at site {i} touches the window edge; enlarge the window")
    return VariationalValue(int(i), val, arg)


def variational_X(run: CoupledRun, q: int = -1) -> int:
    """``inf{i : the max at i is attained by some k >= X(0)}``; ``right + 1`` if none."""
    first_row = run.x0 - (run.left - 1)
    b = _variational_x(run.z0, run.W[q], run.z[q], first_row)
    return int(run.left - 1 + b) if b < run.z0.size else run.right + 1


def check_monotonicity(run: CoupledRun, report: VerificationReport | None = None) -> VerificationReport:
    """Ordering ``xi^k_{i-k} <= xi^l_{i-l}`` for ``k <= l`` and monotone maximal argmax."""
    rep = report or VerificationReport()
    for q in range(run.times.size):
        W = run.W[q]
        diff = W[1:, :] - W[:-1, :]
        rep.ordering_checks += diff.size
        rep.ordering_violations += int(np.count_nonzero(diff < 0))
        _, _, kmax = _argmax_bounds(run.z0, W)
        rep.argmax_monotone_checks += kmax.size - 1
        rep.argmax_monotone_violations += int(np.count_nonzero(np.diff(kmax) < 0))
    return rep


def verify_run(run: CoupledRun, interior: int = 0) -> VerificationReport:
    """Check every identity of one coupled run at every snapshot.

    ``interior`` columns at each end are excluded from the edge-touch count.
    """
    rep = VerificationReport(runs=1, snapshots=int(run.times.size))
    lo_row, hi_row = 0, run.z0.size - 1
    for q in range(run.times.size):
        val, kmin, kmax = _argmax_bounds(run.z0, run.W[q])
        bad = np.flatnonzero(val != run.z[q])
        rep.identity_checks += val.size
        rep.identity_violations += bad.size
        if bad.size:
            rep.details.append({"kind": "identity", "time": float(run.times[q]),
                                "sites": (run.left - 1 + bad[:10]).tolist()})
        eta = np.diff(run.z[q])
        rep.height_checks += eta.size
        rep.height_violations += int(np.count_nonzero(eta != run.eta[q]))
        if run.x0 <= run.right:
            xv = variational_X(run, q)
            rep.position_checks += 1
            if xv != run.x_tracked[q]:
                rep.position_violations += 1
                rep.details.append({"kind": "position", "time": float(run.times[q]),
                                    "variational": xv, "tracked": int(run.x_tracked[q])})
        inner = slice(interior + 1, run.z0.size - interior) if interior else slice(None)
        touches = (kmin[inner] == lo_row) | (kmax[inner] == hi_row)
        if interior:
            rep.interior_edge_touches += int(np.count_nonzero(touches))
        ks = run.left - 1 + np.concatenate([kmin[inner], kmax[inner]])
        if ks.size:
            lo, hi = int(ks.min()), int(ks.max())
            rep.argmax_min = lo if rep.argmax_min is None else min(rep.argmax_min, lo)
            rep.argmax_max = hi if rep.argmax_max is None else max(rep.argmax_max, hi)
    return check_monotonicity(run, rep)


def initial_height(config: Configuration) -> HeightField:
    return height_process(config)


def verify_suite(spec, half_width: int, T: float, n_snapshots: int, replicas, base_seed: int,
                 x0: int = 0, interior: int | None = None) -> VerificationReport:
    """Coupled runs on ``[-half_width, half_width]`` checked at evenly spaced times.

    ``spec`` is an ``InitialSpec`` sampled at scale 1.  The discrepancy is
    skipped when ``x0`` starts occupied.
    """
    from .lattice_process import Window, sample_clocks

    window = Window(-half_width, half_width, float(T))
    snaps = np.linspace(0.0, T, n_snapshots)
    if interior is None:
        interior = half_width // 5
    total = VerificationReport()
    for r in replicas:
        seed = rng.derive_seed(base_seed, r)
        cfg = spec.sample(1, window, seed)
        start = x0 if window.left <= x0 <= window.right and cfg[x0] == 0 else None
        run = coupled_run(cfg, sample_clocks(window, seed), float(T), start, snaps)
        total = total.merge(verify_run(run, interior))
    return total
