"""TASEP on a finite window, driven by explicit Poisson clock logs.

Two engines read the same clocks and must agree exactly:

* the *event sweep* merges every epoch in the window into one global time
  order and applies the exclusion rule at each one.  It carries the
  second-class particle as a marked discrepancy and records its jump path.
* the *jump-time recursion* labels particles right to left and computes each
  particle's jump epochs from its right neighbour's, querying clocks lazily.
  It costs O(number of jumps) and is what large experiments use.

Window boundary rules: sites left of the window carry no clock and no
particle ever enters from the left; a particle at the right edge jumps into a
permanently vacant ghost site and is counted as an exit.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from . import rng


@dataclass(frozen=True)
class Window:
    left: int
    right: int
    horizon: float

    def __post_init__(self):
        if not self.left < 0 < self.right:
            raise ValueError(f"window must satisfy left < 0 < right, got [{self.left}, {self.right}]")
        if self.horizon < 0:
            raise ValueError("horizon must be nonnegative")

    @property
    def size(self) -> int:
        return self.right - self.left + 1

    @property
    def sites(self) -> np.ndarray:
        return np.arange(self.left, self.right + 1, dtype=np.int64)

    def doubled(self) -> "Window":
        return Window(2 * self.left, 2 * self.right, self.horizon)


@dataclass(frozen=True)
class ClockLog:
    """Unit-rate Poisson clocks ``D_i`` for every site of a window.

    Epochs are never stored; they are regenerated from ``(seed, site)``.
    ``offset`` re-bases the log so that site ``i`` reads the clock of site
    ``i + offset``.
    """

    seed: int
    window: Window
    offset: int = 0

    @property
    def key(self):
        return np.uint64(rng.stream_key(self.seed, rng.STREAM_CLOCK))

    def epochs(self, site: int) -> np.ndarray:
        if not self.window.left <= site <= self.window.right:
            raise IndexError(f"site {site} outside window")
        return rng.site_epochs(self.key, site + self.offset, float(self.window.horizon))

    def next_epoch(self, site: int, after: float) -> float:
        return rng.next_epoch(self.key, site + self.offset, float(after))

    def events(self, start: float = 0.0, stop: float | None = None):
        """All epochs in ``(start, stop]`` as time-sorted ``(times, sites)``."""
        stop = self.window.horizon if stop is None else stop
        return _window_events(self.key, self.offset, self.window.left, self.window.right,
                              float(start), float(stop))

    def shifted(self, shift: int) -> "ClockLog":
        w = self.window
        return ClockLog(self.seed, Window(w.left - shift, w.right - shift, w.horizon),
                        self.offset + shift)


def sample_clocks(window: Window, seed: int) -> ClockLog:
    return ClockLog(int(seed), window)


@dataclass
class Configuration:
    """Occupation numbers ``eta`` on sites ``left, left+1, ...``."""

    eta: np.ndarray
    left: int
    time: float = 0.0

    def __post_init__(self):
        self.eta = np.asarray(self.eta, dtype=np.int8)
        if self.eta.size and not np.all((self.eta == 0) | (self.eta == 1)):
            raise ValueError("occupation numbers must be 0 or 1")

    @property
    def right(self) -> int:
        return self.left + self.eta.size - 1

    @property
    def sites(self) -> np.ndarray:
        return np.arange(self.left, self.right + 1, dtype=np.int64)

    def __getitem__(self, site: int) -> int:
        return int(self.eta[site - self.left])

    def copy(self) -> "Configuration":
        return Configuration(self.eta.copy(), self.left, self.time)

    def particle_sites(self) -> np.ndarray:
        """Occupied sites, rightmost first."""
        return self.sites[self.eta == 1][::-1].copy()


@dataclass
class Trajectory:
    times: np.ndarray
    configurations: list[Configuration]
    exits: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time", "site", "occupancy"])
            for t, cfg in zip(self.times, self.configurations):
                for site, occ in zip(cfg.sites, cfg.eta):
                    w.writerow([repr(float(t)), int(site), int(occ)])


@dataclass
class SecondClassState:
    x: int
    time: float
    path: list[tuple[float, int]] = field(default_factory=list)
    snapshot_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    snapshot_x: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    exited: bool = False
    configuration: Configuration | None = None

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time", "X"])
            for t, x in self.path:
                w.writerow([repr(float(t)), int(x)])


@dataclass
class HeightField:
    """Heights ``z`` on sites ``left, left+1, ...`` with ``eta_i = z_i - z_{i-1}``."""

    z: np.ndarray
    left: int

    def value(self, site: int) -> int:
        return int(self.z[site - self.left])

    def occupations(self) -> np.ndarray:
        return np.diff(self.z).astype(np.int8)


def height_process(config: Configuration, z_origin: int = 0) -> HeightField:
    """Height field on ``[left-1, right]`` with ``z_0 = z_origin``.

    The extra site ``left-1`` is the frozen boundary column of the window.
    """
    if not config.left <= 0 <= config.right:
        raise ValueError("configuration must contain the origin to anchor heights")
    cum = np.concatenate([[0], np.cumsum(config.eta.astype(np.int64))])
    z = cum - cum[1 - config.left] + z_origin
    return HeightField(z, config.left - 1)


# ---------------------------------------------------------------- event sweep

@njit(cache=True)
def _window_events(key, offset, left, right, start, stop):
    cap = max(16, int((right - left + 1) * (stop - start + 2.0)))
    times = np.empty(cap)
    sites = np.empty(cap, dtype=np.int64)
    m = 0
    for s in range(left, right + 1):
        ep = rng.site_epochs(key, s + offset, stop)
        for e in ep:
            if e <= start:
                continue
            if m == cap:
                cap *= 2
                t2 = np.empty(cap)
                s2 = np.empty(cap, dtype=np.int64)
                t2[:m] = times[:m]
                s2[:m] = sites[:m]
                times, sites = t2, s2
            times[m] = e
            sites[m] = s
            m += 1
    order = np.argsort(times[:m], kind="mergesort")
    return times[:m][order], sites[:m][order]


@njit(cache=True)
def _sweep_eta(eta, left, right, ev_t, ev_s, snaps):
    S = snaps.shape[0]
    out = np.empty((S, eta.shape[0]), dtype=np.int8)
    out_exits = np.zeros(S, dtype=np.int64)
    exits = 0
    k = 0
    for q in range(S):
        while k < ev_t.shape[0] and ev_t[k] <= snaps[q]:
            i = ev_s[k] - left
            if eta[i] == 1:
                if ev_s[k] == right:
                    eta[i] = 0
                    exits += 1
                elif eta[i + 1] == 0:
                    eta[i] = 0
                    eta[i + 1] = 1
            k += 1
        out[q] = eta
        out_exits[q] = exits
    return out, out_exits


@njit(cache=True)
def _sweep_second(eta, left, right, x, ev_t, ev_s, snaps):
    S = snaps.shape[0]
    snap_x = np.empty(S, dtype=np.int64)
    path_t = np.empty(ev_t.shape[0])
    path_x = np.empty(ev_t.shape[0], dtype=np.int64)
    npath = 0
    exited = False
    k = 0
    for q in range(S):
        while k < ev_t.shape[0] and ev_t[k] <= snaps[q]:
            site = ev_s[k]
            i = site - left
            if not exited and site == x:
                if x == right:
                    exited = True
                    x = right + 1
                    path_t[npath] = ev_t[k]
                    path_x[npath] = x
                    npath += 1
                elif eta[i + 1] == 0:
                    x += 1
                    path_t[npath] = ev_t[k]
                    path_x[npath] = x
                    npath += 1
            elif not exited and site == x - 1:
                if eta[i] == 1:
                    eta[i] = 0
                    eta[i + 1] = 1
                    x -= 1
                    path_t[npath] = ev_t[k]
                    path_x[npath] = x
                    npath += 1
            elif eta[i] == 1:
                if site == right:
                    eta[i] = 0
                elif eta[i + 1] == 0:
                    eta[i] = 0
                    eta[i + 1] = 1
            k += 1
        snap_x[q] = x
    return snap_x, path_t[:npath], path_x[:npath], exited


def _snapshot_times(config, until, snapshots):
    if snapshots is None:
        snaps = np.array([until], dtype=float)
    else:
        snaps = np.sort(np.asarray(snapshots, dtype=float))
    if snaps.size and (snaps[0] < config.time or snaps[-1] > until):
        raise ValueError("snapshot times must lie in [config.time, until]")
    return snaps


def _check_span(config: Configuration, clocks: ClockLog, until: float):
    w = clocks.window
    if until > w.horizon:
        raise ValueError(f"time {until} beyond clock horizon {w.horizon}")
    if until < config.time:
        raise ValueError("cannot evolve backwards in time")
    if config.left != w.left or config.right != w.right:
        raise ValueError("configuration and clock log must cover the same window")


def evolve(config: Configuration, clocks: ClockLog, until: float,
           snapshots=None) -> Trajectory:
    """Run the exclusion dynamics by a global time-ordered sweep of epochs.

    Returns the configuration at each snapshot time (default: ``until`` only)
    together with the cumulative number of exits through the right edge.
    """
    _check_span(config, clocks, until)
    snaps = _snapshot_times(config, until, snapshots)
    ev_t, ev_s = clocks.events(config.time, until)
    out, exits = _sweep_eta(config.eta.copy(), config.left, config.right, ev_t, ev_s, snaps)
    cfgs = [Configuration(out[q].copy(), config.left, float(snaps[q])) for q in range(snaps.size)]
    return Trajectory(snaps, cfgs, exits)


def track_second_class(config: Configuration, clocks: ClockLog, x0: int, until: float,
                       snapshots=None) -> SecondClassState:
    """Follow the discrepancy between ``eta`` and ``eta + delta_x0`` under shared clocks.

    At an epoch of ``D_X`` the discrepancy steps right if ``X+1`` is vacant;
    at an epoch of ``D_{X-1}`` an ordinary particle at ``X-1`` swaps with it.
    """
    _check_span(config, clocks, until)
    if config[x0] != 0:
        raise ValueError(f"second-class particle must start on a vacant site, site {x0} is occupied")
    snaps = _snapshot_times(config, until, snapshots)
    ev_t, ev_s = clocks.events(config.time, until)
    eta = config.eta.copy()
    snap_x, pt, px, exited = _sweep_second(eta, config.left, config.right, int(x0), ev_t, ev_s, snaps)
    path = [(float(config.time), int(x0))] + list(zip(pt.tolist(), px.tolist()))
    return SecondClassState(int(snap_x[-1]) if snaps.size else int(x0), float(until), path,
                            snaps, snap_x, bool(exited), Configuration(eta, config.left, float(until)))


# ------------------------------------------------------ jump-time recursion

@njit(cache=True)
def _particle_jumps(key, offset, right, t0, until, start, prev_t, prev_n, prev_x, has_prev, out_t):
    n = 0
    last = t0
    target = start + 1
    while target <= right + 1:
        tau = last
        if has_prev and target <= right:
            m = target + 1 - prev_x
            if m >= 1:
                if m > prev_n:
                    break
                c = prev_t[m - 1]
                if c > tau:
                    tau = c
        e = rng.next_epoch(key, target - 1 + offset, tau)
        if e > until:
            break
        out_t[n] = e
        n += 1
        last = e
        target += 1
    return n


@njit(cache=True)
def _fill_positions(start, times, n, snaps, right, out):
    k = 0
    for q in range(snaps.shape[0]):
        while k < n and times[k] <= snaps[q]:
            k += 1
        p = start + k
        out[q] = p if p <= right else right + 1


@njit(cache=True)
def _jump_kernel(key, offset, right, t0, until, starts, x0, has_second, snaps):
    P = starts.shape[0]
    S = snaps.shape[0]
    cap = right - (starts[-1] if P > 0 else right) + 4
    if has_second:
        cap = max(cap, right - x0 + 4)
    pos = np.empty((P, S), dtype=np.int64)
    e_prev = np.empty(cap)
    e_cur = np.empty(cap)
    t_prev = np.empty(cap)
    t_cur = np.empty(cap)
    e_prev_n = 0
    e_prev_x = 0
    has_prev = False
    p = 0
    # particles right of the second-class particle move identically in both systems
    while p < P and (not has_second or starts[p] > x0):
        n = _particle_jumps(key, offset, right, t0, until, starts[p], e_prev, e_prev_n,
                            e_prev_x, has_prev, e_cur)
        _fill_positions(starts[p], e_cur, n, snaps, right, pos[p])
        e_prev, e_cur = e_cur, e_prev
        e_prev_n = n
        e_prev_x = starts[p]
        has_prev = True
        p += 1
    snap_x = np.full(S, right + 1, dtype=np.int64)
    if not has_second:
        return pos, snap_x
    # the extra particle of the perturbed system
    t_prev[:e_prev_n] = e_prev[:e_prev_n]
    nq = _particle_jumps(key, offset, right, t0, until, x0, t_prev, e_prev_n, e_prev_x,
                         has_prev, t_cur)
    first_left = p
    n_left = P - first_left
    til_pos = np.empty((n_left + 1, S), dtype=np.int64)
    _fill_positions(x0, t_cur, nq, snaps, right, til_pos[0])
    t_prev, t_cur = t_cur, t_prev
    t_prev_n = nq
    t_prev_x = x0
    merged_at = -1
    while p < P:
        j = p - first_left
        n = _particle_jumps(key, offset, right, t0, until, starts[p], e_prev, e_prev_n,
                            e_prev_x, has_prev, e_cur)
        _fill_positions(starts[p], e_cur, n, snaps, right, pos[p])
        if merged_at < 0:
            nt = _particle_jumps(key, offset, right, t0, until, starts[p], t_prev, t_prev_n,
                                 t_prev_x, True, t_cur)
            _fill_positions(starts[p], t_cur, nt, snaps, right, til_pos[j + 1])
            same = nt == n
            if same:
                for r in range(n):
                    if t_cur[r] != e_cur[r]:
                        same = False
                        break
            if same:
                merged_at = j + 1
            t_prev, t_cur = t_cur, t_prev
            t_prev_n = nt
            t_prev_x = starts[p]
        e_prev, e_cur = e_cur, e_prev
        e_prev_n = n
        e_prev_x = starts[p]
        has_prev = True
        p += 1
    limit = n_left if merged_at < 0 else merged_at
    for q in range(S):
        found = False
        for j in range(min(limit, n_left)):
            if til_pos[j, q] != pos[first_left + j, q]:
                snap_x[q] = til_pos[j, q]
                found = True
                break
        if not found:
            snap_x[q] = til_pos[min(limit, n_left), q]
    return pos, snap_x


def _jump_setup(config: Configuration, clocks: ClockLog, until: float, snapshots):
    _check_span(config, clocks, until)
    snaps = _snapshot_times(config, until, snapshots)
    starts = config.particle_sites().astype(np.int64)
    return snaps, starts


def _occupancy(pos, left, right, S):
    out = np.zeros((S, right - left + 1), dtype=np.int8)
    for q in range(S):
        col = pos[:, q]
        inside = col[col <= right]
        out[q, inside - left] = 1
    return out


def evolve_fast(config: Configuration, clocks: ClockLog, until: float,
                snapshots=None) -> Trajectory:
    """Same contract as :func:`evolve`, computed by the jump-time recursion."""
    snaps, starts = _jump_setup(config, clocks, until, snapshots)
    pos, _ = _jump_kernel(clocks.key, clocks.offset, config.right, float(config.time),
                          float(until), starts, 0, False, snaps)
    occ = _occupancy(pos, config.left, config.right, snaps.size)
    exits = (pos > config.right).sum(axis=0).astype(np.int64)
    cfgs = [Configuration(occ[q], config.left, float(snaps[q])) for q in range(snaps.size)]
    return Trajectory(snaps, cfgs, exits)


def second_class_fast(config: Configuration, clocks: ClockLog, x0: int, until: float,
                      snapshots=None, with_configurations: bool = False):
    """Second-class positions at snapshot times via the jump-time recursion.

    Both systems are computed particle by particle; the perturbed system is
    only recomputed until its trajectories rejoin the unperturbed ones.
    Returns ``(snapshot_x, trajectory_or_None)``; ``right + 1`` marks an exit.
    """
    if config[x0] != 0:
        raise ValueError(f"second-class particle must start on a vacant site, site {x0} is occupied")
    snaps, starts = _jump_setup(config, clocks, until, snapshots)
    pos, snap_x = _jump_kernel(clocks.key, clocks.offset, config.right, float(config.time),
                               float(until), starts, int(x0), True, snaps)
    traj = None
    if with_configurations:
        occ = _occupancy(pos, config.left, config.right, snaps.size)
        exits = (pos > config.right).sum(axis=0).astype(np.int64)
        traj = Trajectory(snaps, [Configuration(occ[q], config.left, float(snaps[q]))
                                  for q in range(snaps.size)], exits)
    return snap_x, traj


def read_trajectory_csv(path) -> dict[float, dict[int, int]]:
    out: dict[float, dict[int, int]] = {}
    with open(Path(path), newline="") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(float(row["time"]), {})[int(row["site"])] = int(row["occupancy"])
    return out


def margin_for(horizon: float, factor: float = 5.0) -> int:
    """Sites kept beyond the observation region on each side."""
    return int(math.ceil(factor * horizon + 8.0 * math.sqrt(horizon) + 16))
