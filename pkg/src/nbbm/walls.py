"""Free branching Brownian motion with linear killing/stopping boundaries.

Everything runs in wall-relative coordinates: a boundary moving at slope mu
becomes a static level once mu*t is subtracted, at the price of giving every
particle drift -mu.  Between a particle's branch times only its segment
endpoints are sampled; whether the continuous path touched a level in between
is decided by the exact Brownian-bridge crossing probability (drift drops out
conditionally on the endpoints), never by time discretisation.

Wall kinds:
  * right kill wall at ``right_offset`` (the moving boundary L + mu t),
  * left marker wall at ``left_offset`` (first touch flags the lineage and
    feeds the Delta counters; particles continue),
  * freeze level ``stop_level`` (particle stops there for good),
  * kill floor ``absorb_level``.

When one segment crosses several walls the passage order is resolved by
subdividing it into 64 equal sub-bridges and replaying the walls on the
refined skeleton; a bisection/rejection resolver of the same question is kept
as the test oracle for the (empirically bounded) bias of that shortcut.

Segment draw order, fixed for reproducibility: branch exponential, endpoint
normal, then one uniform per active wall in the order right / marker / stop /
absorb (degenerate probabilities consume no draw); subdivision draws 63
interior normals then per-sub-segment wall uniforms under the same rules.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import CapacityError, DataError, QueryError
from .rng import RngStream, normal_upper_tail

__all__ = [
    "WallExperiment",
    "WallCounters",
    "WallParticle",
    "WallResult",
    "run_free_bbm",
    "count_W",
    "supermartingale_value",
    "survival_probability_estimate",
    "SurvivalEstimate",
    "many_to_one_check",
    "max_tail_check",
]

_SQRT2 = math.sqrt(2.0)
SUBDIVISIONS = 64

_NONE = 0
_KILLED_RIGHT = 1
_ABSORBED = 2
_STOPPED = 3


@dataclass
class WallExperiment:
    """One free-BBM run with moving linear boundaries of common slope mu."""

    init: Sequence[float]
    horizon: float
    mu: float = 0.0
    right_offset: Optional[float] = None
    left_offset: Optional[float] = None
    stop_level: Optional[float] = None
    absorb_level: Optional[float] = None
    drift: float = 0.0
    branch_rate: float = 1.0
    population_cap: int = 10_000_000

    def __post_init__(self):
        self.init = np.asarray(self.init, dtype=float)
        if self.init.ndim != 1 or self.init.size == 0:
            raise ValueError("init must be a nonempty 1-d position array")
        if self.horizon <= 0:
            raise ValueError("horizon must be > 0")
        if self.population_cap <= 0:
            raise ValueError("population cap must be > 0")
        if self.branch_rate <= 0:
            raise ValueError("branch rate must be > 0")
        # Starting exactly on the right wall is allowed (instant kill); starting
        # strictly above it is not.
        if self.right_offset is not None and self.right_offset < self.init.max():
            raise ValueError("right wall must start at or above every initial particle")


@dataclass
class WallCounters:
    """Exact counters of one wall run (wall-relative threshold conventions)."""

    delta_plus: int = 0          # first left-wall touches of lineages rooted > 0
    delta_minus: int = 0         # ... rooted <= 0
    killed_right: int = 0
    absorbed: int = 0
    stopped: int = 0
    W: int = 0
    W1: int = 0
    W2: int = 0
    V_violated: bool = False

    @property
    def delta(self) -> int:
        return self.delta_plus + self.delta_minus


@dataclass(frozen=True)
class WallParticle:
    y: float                     # wall-relative position
    flagged: bool                # left marker touched along its ancestry
    stopped: bool


@dataclass
class WallResult:
    exp: WallExperiment
    counters: WallCounters
    population: list[WallParticle]
    snapshots: dict[float, list[WallParticle]]
    births: int
    certified_alive: bool = False


def _level_cross_prob(y0: float, y1: float, delta: float, c: float) -> float:
    """Bridge/constant-level crossing probability, side-agnostic."""
    d0 = c - y0
    d1 = c - y1
    if d0 * d1 <= 0.0:
        return 1.0
    return math.exp(-2.0 * d0 * d1 / delta)


def _hit(gen, p: float) -> bool:
    if p >= 1.0:
        return True
    if p <= 0.0:
        return False
    return gen.random() < p


def _walls_of(exp: WallExperiment):
    walls = []
    if exp.right_offset is not None:
        walls.append((exp.right_offset, _KILLED_RIGHT))
    if exp.left_offset is not None:
        walls.append((exp.left_offset, 0))          # marker
    if exp.stop_level is not None:
        walls.append((exp.stop_level, _STOPPED))
    if exp.absorb_level is not None:
        walls.append((exp.absorb_level, _ABSORBED))
    return walls


def _resolve_subdivision(gen, y0, y1, delta, walls, flagged, parts=SUBDIVISIONS):
    """Replay a multi-crossing segment on a refined skeleton (shipped method).

    Returns (terminal_action, flagged).  Marks are applied in passage order;
    the first kill/stop terminates the scan.
    """
    dt = delta / parts
    y_prev = y0
    t_prev = 0.0
    for j in range(parts):
        t_next = delta if j == parts - 1 else (j + 1) * dt
        if j == parts - 1:
            y_next = y1
        else:
            remain = delta - t_prev
            step = t_next - t_prev
            mean = y_prev + (y1 - y_prev) * step / remain
            var = step * (remain - step) / remain
            y_next = mean + math.sqrt(var) * gen.standard_normal()
        for c, kind in walls:
            if kind == 0 and flagged:
                continue
            p = _level_cross_prob(y_prev, y_next, t_next - t_prev, c)
            if _hit(gen, p):
                if kind == 0:
                    flagged = True
                else:
                    return kind, flagged
        t_prev, y_prev = t_next, y_next
    return _NONE, flagged


def _resolve_bisection(gen, y0, y1, delta, walls, flagged, depth=0):
    """Adaptive bisection resolver of the first-passage order (test oracle).

    Draws crossing indicators for the segment; on ambiguity (more than one
    wall firing) samples the midpoint and recurses into the two sub-bridges
    in time order, discarding the parent's indicators in favour of the
    refined ones.  Exact in the refinement limit; depth-capped at floating
    resolution.
    """
    live = [(c, k) for c, k in walls if not (k == 0 and flagged)]
    if not live:
        return _NONE, flagged
    hits = [(c, k) for c, k in live
            if _hit(gen, _level_cross_prob(y0, y1, delta, c))]
    if not hits:
        return _NONE, flagged
    if len(hits) == 1:
        c, k = hits[0]
        if k == 0:
            return _NONE, True
        return k, flagged
    if depth >= 44:
        # Interval below float resolution; order no longer distinguishable.
        for c, k in hits:
            if k == 0:
                flagged = True
        nonmark = [k for _, k in hits if k != 0]
        return (nonmark[0] if nonmark else _NONE), flagged
    mid = (y0 + y1) / 2.0 + math.sqrt(delta / 4.0) * gen.standard_normal()
    action, flagged = _resolve_bisection(gen, y0, mid, delta / 2.0, walls,
                                         flagged, depth + 1)
    if action != _NONE:
        return action, flagged
    return _resolve_bisection(gen, mid, y1, delta / 2.0, walls, flagged, depth + 1)


def _segment_outcome(gen, y0, y1, delta, walls, flagged):
    """Resolve one segment against all active walls.

    Returns (action, flagged, first_touch) where ``first_touch`` reports a
    marker flag transition (for the Delta counters).
    """
    was_flagged = flagged
    crossed = []
    for c, kind in walls:
        p = _level_cross_prob(y0, y1, delta, c)
        if _hit(gen, p):
            crossed.append((c, kind))
    effective = [(c, k) for c, k in crossed if not (k == 0 and flagged)]
    if not effective:
        return _NONE, flagged, False
    if len(effective) == 1:
        c, kind = effective[0]
        if kind == 0:
            return _NONE, True, not was_flagged
        return kind, flagged, False
    action, flagged = _resolve_subdivision(gen, y0, y1, delta, walls, flagged)
    return action, flagged, flagged and not was_flagged


def run_free_bbm(exp: WallExperiment, stream: RngStream,
                 snapshot_times: Sequence[float] = (),
                 early_stop_alive: Optional[int] = None) -> WallResult:
    """Simulate one wall experiment; exact event-driven, no time grid.

    ``early_stop_alive``: certify survival and return once births minus
    deaths reaches this count (used by the survival estimator, where the
    missed extinction probability is astronomically below the Monte Carlo
    noise).
    """
    gen = stream.generator
    drift = exp.drift - exp.mu
    walls = _walls_of(exp)
    snaps = sorted(float(s) for s in snapshot_times)
    if any(s <= 0 or s > exp.horizon for s in snaps):
        raise ValueError("snapshot times must lie in (0, horizon]")
    snapshots: dict[float, list[WallParticle]] = {s: [] for s in snaps}
    counters = WallCounters()
    population: list[WallParticle] = []
    births = exp.init.size
    alive_margin = exp.init.size
    certified = False
    stack = [(0.0, float(x), False, float(x) > 0.0) for x in exp.init[::-1]]
    while stack:
        if certified:
            break
        t, y, flagged, origin_pos = stack.pop()
        alive = True
        while alive:
            tb = t + gen.standard_exponential() / exp.branch_rate
            # walk the segment [t, min(tb, horizon)], breaking at snapshots
            while True:
                i = bisect_right(snaps, t)
                t_end = min(tb, exp.horizon)
                at_snap = False
                if i < len(snaps) and snaps[i] < t_end:
                    t_end = snaps[i]
                    at_snap = True
                delta = t_end - t
                y_end = y + drift * delta + math.sqrt(delta) * gen.standard_normal()
                action, flagged, first_touch = _segment_outcome(
                    gen, y, y_end, delta, walls, flagged)
                if first_touch:
                    if origin_pos:
                        counters.delta_plus += 1
                    else:
                        counters.delta_minus += 1
                if action == _KILLED_RIGHT:
                    counters.killed_right += 1
                    alive = False
                    alive_margin -= 1
                    break
                if action == _ABSORBED:
                    counters.absorbed += 1
                    alive = False
                    alive_margin -= 1
                    break
                if action == _STOPPED:
                    counters.stopped += 1
                    frozen = WallParticle(exp.stop_level, flagged, True)
                    for s in snaps:
                        if s >= t_end:
                            snapshots[s].append(frozen)
                    population.append(frozen)
                    alive = False
                    break
                t, y = t_end, y_end
                if at_snap:
                    snapshots[t_end].append(WallParticle(y, flagged, False))
                    continue
                break
            if not alive:
                break
            if tb >= exp.horizon:
                final = WallParticle(y, flagged, False)
                population.append(final)
                if snaps and snaps[-1] == exp.horizon:
                    snapshots[exp.horizon].append(final)
                break
            births += 1
            alive_margin += 1
            if births > exp.population_cap:
                raise CapacityError(
                    f"population cap {exp.population_cap} exceeded at t={t:.4f}")
            if early_stop_alive is not None and alive_margin >= early_stop_alive:
                certified = True
                break
            stack.append((t, y, flagged, origin_pos))
    counters.V_violated = counters.killed_right > 0
    result = WallResult(exp=exp, counters=counters, population=population,
                        snapshots=snapshots, births=births,
                        certified_alive=certified)
    if exp.left_offset is not None:
        w, w1, w2 = count_W(result)
        counters.W, counters.W1, counters.W2 = w, w1, w2
    return result


def count_W(result: WallResult, threshold: Optional[float] = None):
    """Counts (W, W1, W2) of final survivors at or above the left wall.

    W1 are survivors whose ancestry never touched the left wall, W2 the
    flagged rest; W = W1 + W2.  Requires the run to have used the left
    marker wall (otherwise the flags are meaningless).
    """
    if result.exp.left_offset is None:
        raise QueryError("run had no left wall: flag data missing")
    if threshold is None:
        threshold = result.exp.left_offset
    w1 = w2 = 0
    for p in result.population:
        if p.stopped or p.y < threshold:
            continue
        if p.flagged:
            w2 += 1
        else:
            w1 += 1
    return w1 + w2, w1, w2


def supermartingale_value(positions, s: float, mu: float, A: float) -> float:
    """sum (y + A) exp(mu (y + A) - (2 - mu^2) s / 2) over the population.

    Stopped particles enter at their stopping position.  Positions below -A
    are invalid (they would have been absorbed).
    """
    total = 0.0
    decay = math.exp(-0.5 * (2.0 - mu * mu) * s)
    for y in positions:
        z = y + A
        if z < -1e-12:
            raise DataError(f"position {y} below the absorbing level {-A}")
        total += z * math.exp(mu * z) * decay
    return total


@dataclass(frozen=True)
class SurvivalEstimate:
    probability: float
    low: float                  # 95% Wilson interval
    high: float
    reps: int


def survival_probability_estimate(y: float, mu_prime: float, horizon: float,
                                  reps: int, stream: RngStream,
                                  certify_alive: int = 512,
                                  population_cap: int = 10_000_000) -> SurvivalEstimate:
    """Fraction of replicas where BBM started at y survives killing at mu' t.

    Meaningful only for subcritical slopes mu' < sqrt(2); the wall otherwise
    swallows the population in the large-time limit.
    """
    if y <= 0:
        raise ValueError("start height must be > 0")
    if mu_prime >= _SQRT2:
        raise ValueError("survival estimation requires mu' < sqrt(2)")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    survived = 0
    exp = WallExperiment(init=[y], horizon=horizon, mu=mu_prime,
                         absorb_level=0.0, population_cap=population_cap)
    for _ in range(reps):
        res = run_free_bbm(exp, stream, early_stop_alive=certify_alive)
        if res.certified_alive or any(not p.stopped for p in res.population):
            survived += 1
    p = survived / reps
    z = 1.959963984540054
    denom = 1.0 + z * z / reps
    center = (p + z * z / (2 * reps)) / denom
    half = z * math.sqrt(p * (1 - p) / reps + z * z / (4 * reps * reps)) / denom
    return SurvivalEstimate(p, max(0.0, center - half), min(1.0, center + half), reps)


@dataclass(frozen=True)
class ManyToOneCheck:
    mc_mean: float
    analytic: float
    stderr: float
    reps: int


def many_to_one_check(t: float, a: float, reps: int, stream: RngStream) -> ManyToOneCheck:
    """Monte Carlo versus analytic expected count of particles >= a at time t.

    The branching-path identity reduces E[#{i : X_i(t) >= a}] to
    e^t P(B_t >= a) for a single Brownian path.
    """
    if t <= 0:
        raise ValueError("t must be > 0")
    total = 0.0
    total_sq = 0.0
    for _ in range(reps):
        exp = WallExperiment(init=[0.0], horizon=t)
        res = run_free_bbm(exp, stream)
        c = sum(1 for p in res.population if p.y >= a)
        total += c
        total_sq += c * c
    mean = total / reps
    var = max(0.0, total_sq / reps - mean * mean)
    analytic = math.exp(t) * normal_upper_tail(a / math.sqrt(t))
    return ManyToOneCheck(mean, analytic, math.sqrt(var / reps), reps)


@dataclass(frozen=True)
class MaxTailCheck:
    fraction: float
    bound: float
    stderr: float
    reps: int


def max_tail_check(t: float, K: float, reps: int, stream: RngStream) -> MaxTailCheck:
    """Empirical P(max position at t >= sqrt(2) t + K) against exp(-sqrt(2) K)."""
    thr = _SQRT2 * t + K
    hits = 0
    for _ in range(reps):
        exp = WallExperiment(init=[0.0], horizon=t)
        res = run_free_bbm(exp, stream)
        if any(p.y >= thr for p in res.population):
            hits += 1
    frac = hits / reps
    return MaxTailCheck(frac, math.exp(-_SQRT2 * K),
                        math.sqrt(max(frac * (1 - frac), 1e-12) / reps), reps)
