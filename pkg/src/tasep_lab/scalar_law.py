"""Entropy solutions of rho_t + (rho(1-rho))_x = 0 through the Hopf-Lax formula.

Profiles are piecewise linear with optional jumps at breakpoints, so the
antiderivative ``u0`` is piecewise quadratic.  Inside the light cone
``[x-t, x+t]`` the Hopf-Lax objective is ``u0(y) - (t-x+y)^2 / (4t)``, again
piecewise quadratic, and its maximizers are found in closed form piece by
piece.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TAU_TIE = 1e-9
TAU_BISECT = 1e-9
_DERIV_TOL = 1e-12


def flux(rho):
    r = np.asarray(rho, dtype=float)
    if np.any((r < 0) | (r > 1)) or np.any(np.isnan(r)):
        raise ValueError(f"density must lie in [0, 1], got {rho}")
    out = r * (1.0 - r)
    return float(out) if out.ndim == 0 else out


def legendre_g(x):
    """Concave conjugate g(x) = sup_{0<=rho<=1} {f(rho) - x rho}."""
    x = np.asarray(x, dtype=float)
    out = np.where(x < -1, -x, np.where(x < 1, 0.25 * (1 - x) ** 2, 0.0))
    return float(out) if out.ndim == 0 else out


def legendre_g_prime(x):
    x = np.asarray(x, dtype=float)
    out = np.where(x < -1, -1.0, np.where(x < 1, 0.5 * (x - 1), 0.0))
    return float(out) if out.ndim == 0 else out


# ------------------------------------------------------------------ profiles

@dataclass(frozen=True)
class Profile:
    """Initial density, linear between breakpoints and constant beyond them.

    ``values_left[k]`` / ``values_right[k]`` are the one-sided limits at
    ``breakpoints[k]``; they differ where the profile jumps.
    """

    breakpoints: np.ndarray
    values_left: np.ndarray
    values_right: np.ndarray
    tag: str = "piecewise"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        vl = np.asarray(self.values_left, dtype=float)
        vr = np.asarray(self.values_right, dtype=float)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values_left", vl)
        object.__setattr__(self, "values_right", vr)
        if bp.ndim != 1 or bp.size == 0 or vl.shape != bp.shape or vr.shape != bp.shape:
            raise ValueError("breakpoints and values must be nonempty 1-d arrays of equal length")
        if np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        for v in (vl, vr):
            if np.any((v < 0) | (v > 1)) or np.any(~np.isfinite(v)):
                raise ValueError("densities must lie in [0, 1]")

    # constructors
    @classmethod
    def constant(cls, value: float) -> "Profile":
        return cls([0.0], [value], [value], "constant", {"value": float(value)})

    @classmethod
    def riemann(cls, lam: float, rho: float) -> "Profile":
        return cls([0.0], [lam], [rho], "riemann", {"lambda": float(lam), "rho": float(rho)})

    @classmethod
    def bump(cls, base: float = 0.5, amplitude: float = 0.3, half_width: float = 8.0,
             spacing: float = 0.005) -> "Profile":
        """``base + amplitude * exp(-x^2)`` sampled on a fine grid."""
        m = int(round(half_width / spacing))
        xs = np.linspace(-half_width, half_width, 2 * m + 1)
        vals = base + amplitude * np.exp(-xs ** 2)
        return cls(xs, vals, vals, "bump",
                   {"base": float(base), "amplitude": float(amplitude),
                    "half_width": float(half_width), "spacing": float(spacing)})

    @classmethod
    def from_points(cls, points) -> "Profile":
        """Rows ``(x, v)`` for continuous points or ``(x, v_left, v_right)`` for jumps."""
        xs, vl, vr = [], [], []
        for row in points:
            if len(row) == 2:
                x, a = row
                b = a
            elif len(row) == 3:
                x, a, b = row
            else:
                raise ValueError(f"profile point must have 2 or 3 entries, got {row!r}")
            xs.append(float(x))
            vl.append(float(a))
            vr.append(float(b))
        return cls(xs, vl, vr)

    @classmethod
    def from_document(cls, doc) -> "Profile":
        if isinstance(doc, (str, Path)) and Path(doc).exists():
            doc = json.loads(Path(doc).read_text())
        elif isinstance(doc, str):
            doc = json.loads(doc)
        tag = doc.get("tag", "piecewise")
        if tag == "constant":
            return cls.constant(doc["value"])
        if tag == "riemann":
            return cls.riemann(doc["lambda"], doc["rho"])
        if tag == "bump":
            keys = ("base", "amplitude", "half_width", "spacing")
            return cls.bump(**{k: doc[k] for k in keys if k in doc})
        if tag == "piecewise":
            return cls.from_points(doc["points"])
        raise ValueError(f"unknown profile tag {tag!r}")

    def to_document(self) -> dict:
        if self.tag != "piecewise":
            return {"tag": self.tag, **self.params}
        pts = [[float(x), float(a), float(b)]
               for x, a, b in zip(self.breakpoints, self.values_left, self.values_right)]
        return {"tag": "piecewise", "points": pts}

    # evaluation
    def _pieces(self):
        """Anchors, anchor densities and slopes of the m+1 pieces."""
        bp, vl, vr = self.breakpoints, self.values_left, self.values_right
        anchors = np.concatenate([[bp[0]], bp])
        rho_a = np.concatenate([[vl[0]], vr])
        slopes = np.zeros(bp.size + 1)
        if bp.size > 1:
            slopes[1:-1] = (vl[1:] - vr[:-1]) / np.diff(bp)
        return anchors, rho_a, slopes

    def density(self, x, side: str = "right"):
        """rho0 at ``x``; at a jump ``side`` picks the one-sided limit."""
        x = np.asarray(x, dtype=float)
        anchors, rho_a, slopes = self._pieces()
        how = "right" if side == "right" else "left"
        k = np.searchsorted(self.breakpoints, x, side=how)
        out = rho_a[k] + slopes[k] * (x - anchors[k])
        return float(out) if out.ndim == 0 else out

    def exact_density(self, x):
        """Closed-form density where a tag provides one, else the stored representation."""
        if self.tag == "bump":
            p = self.params
            return p["base"] + p["amplitude"] * np.exp(-np.asarray(x, dtype=float) ** 2)
        return self.density(x)

    def derivative_at(self, x: float) -> float | None:
        """rho0'(x) if the profile is C^1 near ``x``, else ``None``."""
        if self.tag == "constant":
            return 0.0
        if self.tag == "bump":
            return float(-2.0 * self.params["amplitude"] * x * math.exp(-x * x))
        if np.any(np.abs(self.breakpoints - x) < 1e-12):
            return None
        _, _, slopes = self._pieces()
        return float(slopes[np.searchsorted(self.breakpoints, x)])


# ---------------------------------------------------------- antiderivative

@dataclass(frozen=True)
class Antiderivative:
    """u0 with u0(0) = 0, quadratic on each piece of the profile."""

    profile: Profile
    anchors: np.ndarray
    u_anchor: np.ndarray
    rho_anchor: np.ndarray
    slopes: np.ndarray

    @property
    def breakpoints(self) -> np.ndarray:
        return self.profile.breakpoints

    def _piece(self, y, side="right"):
        return np.searchsorted(self.breakpoints, y, side=side)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        k = self._piece(y)
        d = y - self.anchors[k]
        out = self.u_anchor[k] + self.rho_anchor[k] * d + 0.5 * self.slopes[k] * d * d
        return float(out) if out.ndim == 0 else out


def antiderivative(profile: Profile) -> Antiderivative:
    anchors, rho_a, slopes = profile._pieces()
    bp = profile.breakpoints
    u = np.zeros(anchors.size)
    # integral of each bounded piece, accumulated from breakpoints[0]
    widths = np.diff(bp)
    integrals = rho_a[1:-1] * widths + 0.5 * slopes[1:-1] * widths ** 2
    u[2:] = np.cumsum(integrals)
    u[0] = 0.0
    k0 = int(np.searchsorted(bp, 0.0, side="right"))
    d0 = 0.0 - anchors[k0]
    shift = u[k0] + rho_a[k0] * d0 + 0.5 * slopes[k0] * d0 * d0
    return Antiderivative(profile, anchors, u - shift, rho_a, slopes)


# ------------------------------------------------------------------ Hopf-Lax

@dataclass(frozen=True)
class HopfLaxResult:
    u: float
    y_minus: float
    y_plus: float
    rho: float
    is_shock: bool
    rho_minus: float = float("nan")

    @property
    def rho_plus(self) -> float:
        return self.rho


def _objective(u0: Antiderivative, x, t, y):
    return u0(y) - (t - x + y) ** 2 / (4.0 * t)


def hopf_lax(u0: Antiderivative, x: float, t: float) -> HopfLaxResult:
    """Maximize ``u0(y) - t g((x-y)/t)`` exactly over ``y`` in ``[x-t, x+t]``.

    ``rho`` is the density from ``y_plus`` (right limit); ``rho_minus`` the one
    from ``y_minus``.  They coincide away from shocks.
    """
    if not t > 0:
        raise ValueError("time must be positive")
    x = float(x)
    lo, hi = x - t, x + t
    bp = u0.breakpoints
    inner = bp[(bp > lo) & (bp < hi)]
    ends = np.concatenate([[lo, hi], inner])

    # closed-form stationary points of concave pieces
    k_lo = int(np.searchsorted(bp, lo, side="right"))
    k_hi = int(np.searchsorted(bp, hi, side="left"))
    ks = np.arange(k_lo, k_hi + 1)
    a = u0.anchors[ks]
    curv = u0.slopes[ks] - 0.5 / t
    concave = curv < 0
    ks, a, curv = ks[concave], a[concave], curv[concave]
    d_star = ((t - x + a) / (2.0 * t) - u0.rho_anchor[ks]) / curv
    y_star = a + d_star
    start = np.where(ks == 0, -np.inf, bp[np.maximum(ks - 1, 0)])
    stop = np.where(ks == bp.size, np.inf, bp[np.minimum(ks, bp.size - 1)])
    ok = (y_star >= np.maximum(start, lo)) & (y_star <= np.minimum(stop, hi))
    stationary = y_star[ok]

    # endpoints survive only if they are one-sided local maxima
    q = (t - x + ends) / (2.0 * t)
    left_ok = (u0.profile.density(ends, side="left") >= q - _DERIV_TOL) | (ends == lo)
    right_ok = (u0.profile.density(ends, side="right") <= q + _DERIV_TOL) | (ends == hi)
    cands = np.concatenate([ends[left_ok & right_ok], stationary])
    vals = _objective(u0, x, t, cands)
    fmax = float(vals.max())
    arg = cands[vals >= fmax - 1e-12 * max(1.0, abs(fmax))]
    ym, yp = float(arg.min()), float(arg.max())
    return HopfLaxResult(fmax, ym, yp, (t - x + yp) / (2.0 * t),
                         bool(yp - ym > TAU_TIE), (t - x + ym) / (2.0 * t))


def solve_grid(u0: Antiderivative, xs, t: float) -> list[HopfLaxResult]:
    return [hopf_lax(u0, float(x), t) for x in xs]


def write_solution_csv(path, xs, t: float, results) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "t", "u", "y_minus", "y_plus", "rho", "is_shock"])
        for x, r in zip(xs, results):
            w.writerow([repr(float(x)), repr(float(t)), repr(r.u), repr(r.y_minus),
                        repr(r.y_plus), repr(r.rho), int(r.is_shock)])


# ----------------------------------------------------------- characteristics

@dataclass(frozen=True)
class Characteristic:
    b: float
    t: float
    w_minus: float
    w_plus: float


def _bisect(pred, lo, hi):
    """Smallest x in [lo, hi] with pred(x) true, for a monotone predicate."""
    if pred(lo):
        return lo
    while hi - lo > TAU_BISECT:
        mid = 0.5 * (lo + hi)
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return hi


def characteristic(u0: Antiderivative, b: float, t: float) -> Characteristic:
    """Extremal forward characteristics from ``b`` found by bisection in ``[b-t, b+t]``."""
    if not t > 0:
        raise ValueError("time must be positive")
    lo, hi = b - t, b + t
    w_minus = _bisect(lambda x: hopf_lax(u0, x, t).y_plus >= b, lo, hi)
    # sup{x : y_minus(x) <= b} = inf{x : y_minus(x) > b}
    w_plus = _bisect(lambda x: hopf_lax(u0, x, t).y_minus > b, lo, hi)
    if not hopf_lax(u0, hi, t).y_minus > b:
        w_plus = hi
    return Characteristic(float(b), float(t), float(w_minus), float(max(w_plus, w_minus)))


# --------------------------------------------------------------- assumptions

@dataclass(frozen=True)
class AssumptionReport:
    t: float
    smooth_near_origin: bool
    interior_density: bool
    slope_condition: bool
    no_shock: bool
    rho0_at_origin: float
    slope_at_origin: float | None
    characteristic: Characteristic

    @property
    def passed(self) -> bool:
        return self.smooth_near_origin and self.interior_density and self.slope_condition \
            and self.no_shock

    def as_dict(self) -> dict:
        return {"t": self.t, "smooth_near_origin": self.smooth_near_origin,
                "interior_density": self.interior_density,
                "slope_condition": self.slope_condition, "no_shock": self.no_shock,
                "rho0_at_origin": self.rho0_at_origin, "slope_at_origin": self.slope_at_origin,
                "w_minus": self.characteristic.w_minus, "w_plus": self.characteristic.w_plus,
                "passed": self.passed}


def check_assumptions(profile: Profile, t: float) -> AssumptionReport:
    if not t > 0:
        raise ValueError("time must be positive")
    u0 = antiderivative(profile)
    slope = profile.derivative_at(0.0)
    r0 = float(profile.exact_density(0.0))
    ch = characteristic(u0, 0.0, t)
    at = hopf_lax(u0, ch.w_minus, t)
    no_shock = (ch.w_plus - ch.w_minus <= 10 * TAU_BISECT) and not at.is_shock
    return AssumptionReport(float(t), slope is not None, 0.0 < r0 < 1.0,
                            slope is not None and slope < 1.0 / (2.0 * t), bool(no_shock),
                            r0, slope, ch)


# ------------------------------------------------------------- local constants

@dataclass
class LocalConstants:
    delta1: float
    c0: float
    c0_quadratic: float
    c0_slope: float
    r: float
    deltas: list = field(default_factory=list)
    c0_history: list = field(default_factory=list)
    min_quadratic_residual: float = 0.0
    min_slope_residual: float = 0.0


def _local_constants_at(u0, t, r, delta, a0, npts):
    xs = np.linspace(r - delta, r + delta, npts)
    etas = np.linspace(-a0, a0, npts)
    ys, ratios_q = [], []
    for x in xs:
        res = hopf_lax(u0, x, t)
        ys.append((res.y_minus, res.y_plus))
        for y in {res.y_minus, res.y_plus}:
            gap = etas - y
            keep = np.abs(gap) > 1e-6
            drop = res.u - _objective(u0, x, t, etas[keep])
            ratios_q.append(np.min(drop / gap[keep] ** 2))
    c_quad = float(np.min(ratios_q))
    ym = np.array([p[0] for p in ys])
    yp = np.array([p[1] for p in ys])
    # all ordered pairs x0 < x: y - y0 over x - x0, extremes over both maximizers
    dx = xs[None, :] - xs[:, None]
    iu = np.triu_indices(npts, 1)
    lo_ratio = ((ym[None, :] - yp[:, None])[iu] / dx[iu]).min()
    hi_ratio = ((yp[None, :] - ym[:, None])[iu] / dx[iu]).max()
    c_slope = float(min(lo_ratio, 1.0 / hi_ratio)) if lo_ratio > 0 else float(lo_ratio)
    return c_quad, c_slope, xs, etas, ym, yp


def lemma1_constants(u0: Antiderivative, t: float, a0: float, npts: int = 201,
                     delta0: float = 0.5, shrink: float = 0.5, max_iter: int = 30,
                     rtol: float = 1e-3) -> LocalConstants:
    """Empirical ``delta1, c0`` for the quadratic-separation and maximizer-slope bounds.

    Near ``r = w(0, t)``: the maximum beats any ``eta`` in ``[-a0, a0]`` by at
    least ``c0 (eta - y)^2``, and ``c0 <= (y - y0)/(x - x0) <= 1/c0``.
    ``delta`` shrinks geometrically until ``c0`` stops changing.
    """
    prof = u0.profile
    slope = prof.derivative_at(0.0)
    if slope is None or not slope < 1.0 / (2.0 * t):
        raise ValueError("u0 must be C^2 near 0 with u0''(0) < 1/(2t)")
    ch = characteristic(u0, 0.0, t)
    r = 0.5 * (ch.w_minus + ch.w_plus)
    at = hopf_lax(u0, r, t)
    if at.is_shock or max(abs(at.y_minus), abs(at.y_plus)) > 1e-6:
        raise ValueError("maximizer at w(0,t) is not the single point 0")
    delta, prev = delta0, None
    deltas, hist = [], []
    for _ in range(max_iter):
        cq, cs, *_ = _local_constants_at(u0, t, r, delta, a0, npts)
        c0 = min(cq, cs)
        deltas.append(delta)
        hist.append(c0)
        if c0 > 0 and prev is not None and abs(c0 - prev) <= rtol * abs(prev):
            break
        prev = c0
        delta *= shrink
    if not c0 > 0:
        raise ValueError(f"no positive constant found (last estimate {c0})")
    cq, cs, xs, etas, ym, yp = _local_constants_at(u0, t, r, delta, a0, npts)
    # residuals at the reported constant
    quad_res = np.inf
    for x, y in zip(xs, yp):
        gap = etas - y
        quad_res = min(quad_res, float(np.min(hopf_lax(u0, x, t).u - _objective(u0, x, t, etas)
                                              - c0 * gap ** 2)))
    iu = np.triu_indices(npts, 1)
    dx = (xs[None, :] - xs[:, None])[iu]
    dy_lo = (ym[None, :] - yp[:, None])[iu]
    dy_hi = (yp[None, :] - ym[:, None])[iu]
    slope_res = float(min((dy_lo - c0 * dx).min(), (dx / c0 - dy_hi).min()))
    return LocalConstants(delta, c0, cq, cs, r, deltas, hist, quad_res, slope_res)
