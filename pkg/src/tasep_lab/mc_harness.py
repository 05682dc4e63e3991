"""Replica orchestration, hydrodynamic comparisons and exponent fits."""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import rng
from .init_profiles import InitialSpec
from .lattice_process import (Window, evolve_fast, margin_for, sample_clocks,
                              second_class_fast)
from .scalar_law import antiderivative, characteristic, check_assumptions, hopf_lax

DEFAULT_NS = (250, 500, 1000, 2000, 4000, 8000)
DEFAULT_REPLICAS = (400, 400, 200, 200, 100, 50)
RECORD_COLUMNS = ["n", "replica", "seed", "X", "center", "flag", "t", "window_left",
                  "window_right"]
FIT_COLUMNS = ["statistic", "chi", "ci_low", "ci_high"]
DENSITY_COLUMNS = ["block", "t", "empirical", "oracle", "abs_err"]


class RecordFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentPlan:
    initial: InitialSpec
    t: float = 1.0
    ns: tuple = DEFAULT_NS
    replicas: tuple = DEFAULT_REPLICAS
    seed: int = 0
    x0: int = 0
    margin_factor: float = 1.0
    obs_factor: float = 0.25
    n_checkpoints: int = 32
    window_scale: int = 1

    def __post_init__(self):
        if len(self.ns) != len(self.replicas):
            raise ValueError("ns and replicas must have the same length")
        if any(int(n) < 1 for n in self.ns) or any(int(r) < 0 for r in self.replicas):
            raise ValueError("scales must be positive and replica counts nonnegative")
        if not self.t > 0:
            raise ValueError("macroscopic time must be positive")


@dataclass
class ExperimentRecord:
    n: int
    replica: int
    seed: int
    X: int
    center: float
    flag: int
    t: float
    window_left: int
    window_right: int
    runtime: float = 0.0


@dataclass
class FitResult:
    chi: float
    intercept: float
    ci_low: float
    ci_high: float
    statistic: str
    scales: list = field(default_factory=list)
    spreads: list = field(default_factory=list)


# ------------------------------------------------------------- experiments

def characteristic_span(plan: ExperimentPlan) -> tuple[float, float]:
    """``(w-(0,t), w+(0,t))`` for the plan's macroscopic profile."""
    ch = characteristic(antiderivative(plan.initial.macroscopic_profile()), 0.0, plan.t)
    return ch.w_minus, ch.w_plus


def _layout(plan: ExperimentPlan, n: int, span):
    """Observation region and simulation window at scale ``n``."""
    T = n * plan.t
    obs = plan.obs_factor * T + 8 * math.sqrt(T) + 16
    # the path runs from x0 to near n w(0, t), so cover the hull of both
    lo = math.floor(min(plan.x0, n * span[0]) - obs)
    hi = math.ceil(max(plan.x0, n * span[1]) + obs)
    m = margin_for(T, plan.margin_factor)
    left = min(lo - m, -1) * plan.window_scale
    right = max(hi + m, 1) * plan.window_scale
    return (lo, hi), Window(int(left), int(right), float(T))


def run_replica(plan: ExperimentPlan, n: int, rep: int, span) -> ExperimentRecord:
    start = time.perf_counter()
    seed = rng.derive_seed(plan.seed, n, rep)
    (lo, hi), window = _layout(plan, n, span)
    T = window.horizon
    cfg = plan.initial.sample(n, window, seed)
    clocks = sample_clocks(window, seed)
    checks = np.linspace(0.0, T, plan.n_checkpoints + 1)[1:]
    xs, _ = second_class_fast(cfg, clocks, plan.x0, T, checks)
    flag = int(np.any((xs < lo) | (xs > hi)))
    center = n * 0.5 * (span[0] + span[1])
    return ExperimentRecord(int(n), int(rep), int(seed), int(xs[-1]), float(center), flag,
                            float(plan.t), window.left, window.right,
                            time.perf_counter() - start)


def _run_chunk(args):
    plan, n, reps, span = args
    return [run_replica(plan, n, r, span) for r in reps]


def run_fluctuation_experiment(plan: ExperimentPlan, parallelism: int = 1,
                               progress=None) -> list[ExperimentRecord]:
    """Second-class position at time ``n t`` for every ``(n, replica)`` in the plan.

    Records whose checkpoints leave the observation region are flagged.
    Output order is ``(n, replica)`` regardless of execution order.
    """
    if sum(plan.replicas) == 0:
        return []
    span = characteristic_span(plan)
    jobs = []
    for n, R in zip(plan.ns, plan.replicas):
        reps = list(range(int(R)))
        size = max(1, len(reps) // max(1, 4 * parallelism))
        jobs += [(plan, int(n), reps[i:i + size], span) for i in range(0, len(reps), size)]
    out: list[ExperimentRecord] = []
    if parallelism > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as ex:
            for chunk in ex.map(_run_chunk, jobs):
                out += chunk
                if progress:
                    progress(len(out))
    else:
        for job in jobs:
            out += _run_chunk(job)
            if progress:
                progress(len(out))
    out.sort(key=lambda r: (r.n, r.replica))
    return out


def assumption_report(plan: ExperimentPlan) -> dict:
    return check_assumptions(plan.initial.macroscopic_profile(), plan.t).as_dict()


# -------------------------------------------------------------------- fits

def _spread(x, statistic):
    if statistic == "iqr":
        q75, q25 = np.percentile(x, [75, 25], axis=-1)
        return q75 - q25
    if statistic == "std":
        return np.std(x, axis=-1, ddof=1)
    raise ValueError(f"unknown spread statistic {statistic!r}")


def fit_exponent(records, statistic: str = "iqr", min_scales: int = 4,
                 min_replicas: int = 30, n_resamples: int = 2000, level: float = 0.95,
                 seed: int = 0) -> FitResult:
    """Slope of log spread of ``X - center`` against log ``n``, with a bootstrap CI.

    Flagged records are dropped; each scale is resampled independently.
    """
    groups: dict[int, list[float]] = {}
    # sorted so the bootstrap does not depend on input order
    for r in sorted(records, key=lambda r: (r.n, r.replica)):
        if not r.flag:
            groups.setdefault(int(r.n), []).append(r.X - r.center)
    ns = sorted(n for n, v in groups.items() if len(v) >= min_replicas)
    if len(ns) < min_scales:
        raise ValueError(f"need at least {min_scales} scales with {min_replicas} unflagged "
                         f"records, have {len(ns)}")
    samples = [np.asarray(groups[n], dtype=float) for n in ns]
    logn = np.log(np.asarray(ns, dtype=float))

    def slope(*xs, axis=-1):
        s = np.stack([np.log(_spread(x, statistic)) for x in xs], axis=-1)
        xc = logn - logn.mean()
        return ((s - s.mean(axis=-1, keepdims=True)) * xc).sum(axis=-1) / (xc @ xc)

    spreads = np.array([_spread(x, statistic) for x in samples])
    chi, intercept = np.polyfit(logn, np.log(spreads), 1)
    boot = stats.bootstrap(samples, slope, n_resamples=n_resamples, confidence_level=level,
                           method="percentile", vectorized=True,
                           random_state=np.random.default_rng(seed))
    ci = boot.confidence_interval
    return FitResult(float(chi), float(intercept), float(ci.low), float(ci.high), statistic,
                     ns, spreads.tolist())


@dataclass
class UniformLawReport:
    ks: float
    pvalue: float
    support: tuple
    count: int


def uniform_law_test(records, lam: float, rho: float) -> UniformLawReport:
    """KS distance of ``X / (n t)`` to Uniform[1 - 2 lam, 1 - 2 rho]."""
    if not lam > rho:
        raise ValueError("the uniform law needs a rarefaction plan (lambda > rho)")
    vals = np.array([r.X / (r.n * r.t) for r in records if not r.flag])
    if vals.size == 0:
        raise ValueError("no unflagged records")
    lo, hi = 1 - 2 * lam, 1 - 2 * rho
    res = stats.kstest(vals, stats.uniform(loc=lo, scale=hi - lo).cdf)
    return UniformLawReport(float(res.statistic), float(res.pvalue), (lo, hi), int(vals.size))


# ------------------------------------------------------------ density field

@dataclass
class DensityRow:
    block: float
    t: float
    empirical: float
    oracle: float

    @property
    def abs_err(self) -> float:
        return abs(self.empirical - self.oracle)


def density_field_compare(spec: InitialSpec, n: int, t: float, replicas: int, seed: int,
                          x_lo: float = -1.5, x_hi: float = 1.5, width: float = 0.1,
                          margin_factor: float = 1.0) -> list[DensityRow]:
    """Replica-averaged block densities at time ``n t`` against the entropy solution.

    Block ``[a, a + width)`` averages ``eta_i`` over ``[na] < i <= [n(a + width)]``;
    the oracle is ``(u(a + width, t) - u(a, t)) / width`` (``u0`` differences at ``t = 0``).
    """
    T = n * t
    m = margin_for(T, margin_factor) if T > 0 else 16
    window = Window(min(math.floor(n * x_lo) - m, -1), max(math.ceil(n * x_hi) + m, 1),
                    float(T))
    edges = np.round(np.arange(x_lo, x_hi + 0.5 * width, width), 12)
    lo_idx = np.floor(n * edges[:-1]).astype(int) + 1 - window.left
    hi_idx = np.floor(n * edges[1:]).astype(int) + 1 - window.left
    acc = np.zeros(edges.size - 1)
    for rep in range(replicas):
        s = rng.derive_seed(seed, n, rep)
        cfg = spec.sample(n, window, s)
        eta = cfg.eta if T == 0 else evolve_fast(cfg, sample_clocks(window, s), T) \
            .configurations[-1].eta
        csum = np.concatenate([[0], np.cumsum(eta, dtype=np.int64)])
        acc += (csum[hi_idx] - csum[lo_idx]) / (hi_idx - lo_idx)
    acc /= max(replicas, 1)
    u0 = antiderivative(spec.macroscopic_profile())
    if t > 0:
        u = np.array([hopf_lax(u0, float(x), t).u for x in edges])
    else:
        u = u0(edges)
    oracle = np.diff(u) / width
    return [DensityRow(float(a), float(t), float(e), float(o))
            for a, e, o in zip(edges[:-1], acc, oracle)]


# ------------------------------------------------------------ persistence

def write_records(path, records, sidecar: bool = True) -> None:
    """CSV of records; runtimes go to ``<path>.meta.json`` so the CSV is reproducible."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        for r in records:
            w.writerow([r.n, r.replica, r.seed, r.X, repr(float(r.center)), r.flag,
                        repr(float(r.t)), r.window_left, r.window_right])
    if sidecar:
        meta = {"runtimes": [r.runtime for r in records], "written_at": time.time()}
        Path(str(path) + ".meta.json").write_text(json.dumps(meta))


_PARSERS = {"n": int, "replica": int, "seed": int, "X": int, "center": float, "flag": int,
            "t": float, "window_left": int, "window_right": int}


def load_records(path) -> list[ExperimentRecord]:
    path = Path(path)
    text = path.read_text()
    if not text.strip():
        return []
    reader = csv.reader(text.splitlines())
    header = next(reader)
    missing = [c for c in RECORD_COLUMNS if c not in header]
    if missing:
        raise RecordFormatError(f"{path}: line 1: missing column {missing[0]!r}")
    idx = {c: header.index(c) for c in RECORD_COLUMNS}
    out = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise RecordFormatError(f"{path}: line {lineno}: expected {len(header)} fields, "
                                    f"got {len(row)}")
        vals = {}
        for c in RECORD_COLUMNS:
            try:
                vals[c] = _PARSERS[c](row[idx[c]])
            except ValueError:
                raise RecordFormatError(f"{path}: line {lineno}: bad value {row[idx[c]]!r} "
                                        f"for column {c!r}") from None
        out.append(ExperimentRecord(**vals))
    meta = Path(str(path) + ".meta.json")
    if meta.exists():
        runtimes = json.loads(meta.read_text()).get("runtimes", [])
        if len(runtimes) == len(out):
            for r, rt in zip(out, runtimes):
                r.runtime = float(rt)
    return out


def write_fits(path, fits) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIT_COLUMNS)
        for f in fits:
            w.writerow([f.statistic, repr(f.chi), repr(f.ci_low), repr(f.ci_high)])


def write_density(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DENSITY_COLUMNS)
        for r in rows:
            w.writerow([repr(r.block), repr(r.t), repr(r.empirical), repr(r.oracle),
                        repr(r.abs_err)])


def record_dicts(records) -> list[dict]:
    return [asdict(r) for r in records]
