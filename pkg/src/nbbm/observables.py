"""Measured quantities: diameters, angular statistics, speeds, tails, H_t.

All functions are pure over immutable snapshots and safe to evaluate
concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import QueryError
from .model import Configuration

__all__ = [
    "ShapeStats",
    "TailProfile",
    "ScoreSeries",
    "diameters",
    "shape_stats",
    "spherical_distance",
    "angular_spread",
    "speed_estimate",
    "centered_tail",
    "average_tail",
    "w_star",
    "tail_sup_distance",
    "time_change",
]

_SQRT2 = math.sqrt(2.0)
TAIL_GRID_STEP = 0.05 / _SQRT2    # fine relative to the 1/sqrt(2) decay scale


@dataclass(frozen=True)
class ShapeStats:
    """Extents of the cloud along/orthogonal to the motion direction."""

    t: float
    diam: float
    diam_perp: float
    direction: np.ndarray        # unit vector of the top-ranked particle


@dataclass(frozen=True)
class TailProfile:
    """Empirical tail of scores seen from the minimum: F(x) = mean(s >= min + x)."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        v = self.values
        if v.shape != self.grid.shape:
            raise ValueError("grid/value shape mismatch")
        if v.size == 0:
            raise ValueError("empty profile")
        if not (v[0] == 1.0 and (v >= 0).all() and (v <= 1).all()):
            raise ValueError("tail values must start at 1 and stay in [0, 1]")
        if np.any(np.diff(v) > 0):
            raise ValueError("tail values must be nonincreasing")


@dataclass
class ScoreSeries:
    """Score summary statistics sampled on a time grid."""

    times: np.ndarray
    smax: np.ndarray
    smin: np.ndarray
    smedian: np.ndarray

    @classmethod
    def from_configs(cls, configs: Iterable[Configuration]) -> "ScoreSeries":
        times, smax, smin, smed = [], [], [], []
        for c in configs:
            times.append(c.time)
            smax.append(c.max_score())
            smin.append(c.min_score())
            smed.append(float(np.median(c.scores)))
        return cls(np.array(times), np.array(smax), np.array(smin), np.array(smed))


def diameters(config: Configuration, lam, lam_perp) -> tuple[float, float]:
    """Extent of the cloud along lam and along one orthogonal direction.

    Computed as max-minus-min of projections (O(N)).
    """
    lam = np.asarray(lam, dtype=float)
    lam_perp = np.asarray(lam_perp, dtype=float)
    for v in (lam, lam_perp):
        if abs(np.linalg.norm(v) - 1.0) > 1e-10:
            raise ValueError("directions must be unit vectors")
    if abs(float(lam @ lam_perp)) > 1e-10:
        raise ValueError("directions must be orthogonal")
    p = config.positions @ lam
    q = config.positions @ lam_perp
    return float(p.max() - p.min()), float(q.max() - q.min())


def shape_stats(config: Configuration, lam, lam_perp) -> ShapeStats:
    d, dp = diameters(config, lam, lam_perp)
    top = config.top_position()
    r = float(np.linalg.norm(top))
    if r <= 0:
        raise QueryError("direction undefined: top particle at the origin")
    return ShapeStats(t=config.time, diam=d, diam_perp=dp, direction=top / r)


def spherical_distance(u, v) -> float:
    """Great-circle angle arccos<u, v> between unit vectors, in [0, pi]."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    for w in (u, v):
        if abs(np.linalg.norm(w) - 1.0) > 1e-10:
            raise ValueError("inputs must be unit vectors")
    return float(np.arccos(np.clip(u @ v, -1.0, 1.0)))


def _spread_circle(angles: np.ndarray) -> float:
    """Exact max pairwise circular distance for points on S^1, O(N log N)."""
    a = np.sort(np.mod(angles, 2 * np.pi))
    n = a.size
    # Max over i of distance to the point nearest the antipode of a[i].
    anti = np.mod(a + np.pi, 2 * np.pi)
    idx = np.searchsorted(a, anti)
    best = 0.0
    for i in range(n):
        j = idx[i]
        cand = (a[j % n], a[(j - 1) % n])
        near = min(_circ_dist(anti[i], c) for c in cand)
        best = max(best, np.pi - near)
    return float(best)


def _circ_dist(a: float, b: float) -> float:
    d = abs(a - b) % (2 * np.pi)
    return min(d, 2 * np.pi - d)


def angular_spread(config: Configuration) -> float:
    """Max pairwise spherical distance of particle directions."""
    pos = config.positions
    r = np.linalg.norm(pos, axis=1)
    if np.any(r <= 0):
        raise QueryError("angular spread undefined: particle at the origin")
    u = pos / r[:, None]
    if config.d == 2:
        return _spread_circle(np.arctan2(u[:, 1], u[:, 0]))
    # Generic exact fallback: arccos of the minimal pairwise inner product.
    best = 1.0
    block = 1024
    n = u.shape[0]
    for i in range(0, n, block):
        g = u[i:i + block] @ u.T
        best = min(best, float(g.min()))
    return float(np.arccos(np.clip(best, -1.0, 1.0)))


def speed_estimate(series: ScoreSeries, t0: float, t1: float,
                   statistic: str = "min") -> float:
    """Front speed over [t0, t1] from the chosen score statistic.

    Uses the first and last snapshots inside the window.
    """
    if t1 <= t0:
        raise ValueError("window must satisfy t1 > t0")
    vals = {"max": series.smax, "min": series.smin, "median": series.smedian}
    try:
        v = vals[statistic]
    except KeyError:
        raise ValueError(f"unknown statistic {statistic!r}") from None
    inside = np.flatnonzero((series.times >= t0 - 1e-12) & (series.times <= t1 + 1e-12))
    if inside.size < 2:
        raise ValueError("window contains fewer than two snapshots")
    i, j = inside[0], inside[-1]
    return float((v[j] - v[i]) / (series.times[j] - series.times[i]))


def centered_tail(config: Configuration, x_max: float | None = None,
                  step: float = TAIL_GRID_STEP) -> TailProfile:
    """Empirical score tail seen from the minimum on a fixed grid."""
    s = np.sort(config.scores)
    lo = s[0]
    if x_max is None:
        x_max = float(s[-1] - lo)
    grid = np.arange(0.0, x_max + step, step)
    # F(x) = fraction of scores >= lo + x  (count via right-side search)
    counts = s.size - np.searchsorted(s, lo + grid, side="left")
    values = counts / s.size
    values[0] = 1.0
    return TailProfile(grid=grid, values=values.astype(float))


def average_tail(profiles: Sequence[TailProfile]) -> TailProfile:
    """Pointwise time average of tail profiles sharing a common grid length.

    Profiles are truncated to the shortest grid (they all start at 0 with the
    same step).
    """
    if not profiles:
        raise ValueError("no profiles")
    m = min(p.grid.size for p in profiles)
    grid = profiles[0].grid[:m]
    vals = np.mean([p.values[:m] for p in profiles], axis=0)
    vals[0] = 1.0
    return TailProfile(grid=grid, values=vals)


def w_star(x) -> np.ndarray:
    """Traveling-wave tail profile (sqrt(2) x + 1) exp(-sqrt(2) x)."""
    x = np.asarray(x, dtype=float)
    return (_SQRT2 * x + 1.0) * np.exp(-_SQRT2 * x)


def tail_sup_distance(profile: TailProfile) -> float:
    """Sup distance between an empirical tail and the traveling wave."""
    return float(np.max(np.abs(profile.values - w_star(profile.grid))))


def time_change(times, radii) -> np.ndarray:
    """Cumulative trapezoid integral H of R^-2 along a radial skeleton path."""
    t = np.asarray(times, dtype=float)
    r = np.asarray(radii, dtype=float)
    if t.shape != r.shape or t.ndim != 1:
        raise ValueError("times and radii must be equal-length vectors")
    if np.any(r <= 0):
        raise QueryError("time change undefined: zero or negative radius")
    f = 1.0 / (r * r)
    h = np.empty_like(t)
    h[0] = 0.0
    if t.size > 1:
        h[1:] = np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(t))
    return h
