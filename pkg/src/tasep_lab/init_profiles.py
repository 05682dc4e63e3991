"""Initial configurations: local equilibrium, Riemann product measures, steps.

Site occupancies are drawn from per-site keyed uniforms, so enlarging the
window leaves already-covered sites untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .lattice_process import Configuration, Window
from .scalar_law import Profile, antiderivative

KINDS = ("local-equilibrium", "riemann", "step")


def _init_key(seed: int):
    return np.uint64(rng.stream_key(int(seed), rng.STREAM_INIT))


def cell_means(profile: Profile, n: int, sites: np.ndarray) -> np.ndarray:
    """``n * (u0(i/n) - u0((i-1)/n))`` for each site ``i``."""
    if n < 1:
        raise ValueError("scale n must be at least 1")
    u0 = antiderivative(profile)
    i = np.asarray(sites, dtype=float)
    means = n * (u0(i / n) - u0((i - 1) / n))
    # rounding can push a full cell a hair past 1
    if np.any(means < -1e-12) or np.any(means > 1 + 1e-12):
        raise AssertionError("cell mean outside [0, 1]")
    return np.clip(means, 0.0, 1.0)


def _sample(probs: np.ndarray, window: Window, seed: int) -> Configuration:
    eta = rng.bernoulli_sites(_init_key(seed), window.sites, probs)
    eta[-window.left] = 0
    return Configuration(eta, window.left)


def sample_local_equilibrium(profile: Profile, n: int, window: Window, seed: int) -> Configuration:
    return _sample(cell_means(profile, n, window.sites), window, seed)


def sample_riemann(lam: float, rho: float, window: Window, seed: int) -> Configuration:
    for name, v in (("lambda", lam), ("rho", rho)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {v}")
    sites = window.sites
    probs = np.where(sites < 0, float(lam), float(rho))
    return _sample(probs, window, seed)


def step_ic(k: int, window: Window) -> Configuration:
    """Sites ``<= k`` occupied, the rest vacant; ``k`` must be strictly inside the window."""
    if not window.left < k < window.right:
        raise ValueError(f"step position {k} must lie strictly inside [{window.left}, {window.right}]")
    return Configuration((window.sites <= k).astype(np.int8), window.left)


@dataclass(frozen=True)
class InitialSpec:
    kind: str
    profile: Profile | None = None
    lam: float | None = None
    rho: float | None = None
    k: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown initial condition kind {self.kind!r}")
        if self.kind == "local-equilibrium" and self.profile is None:
            raise ValueError("local-equilibrium needs a profile")
        if self.kind == "riemann":
            for name, v in (("lambda", self.lam), ("rho", self.rho)):
                if v is None or not 0.0 <= v <= 1.0:
                    raise ValueError(f"{name} must lie in [0, 1], got {v}")

    def macroscopic_profile(self) -> Profile:
        if self.kind == "local-equilibrium":
            return self.profile
        if self.kind == "riemann":
            return Profile.riemann(self.lam, self.rho)
        return Profile.riemann(1.0, 0.0)

    def sample(self, n: int, window: Window, seed: int) -> Configuration:
        if self.kind == "local-equilibrium":
            return sample_local_equilibrium(self.profile, n, window, seed)
        if self.kind == "riemann":
            return sample_riemann(self.lam, self.rho, window, seed)
        return step_ic(self.k, window)
