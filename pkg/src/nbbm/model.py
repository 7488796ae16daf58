"""Score functions, parameters, particle configurations and initial conditions.

A configuration is a value object: N positions in R^d plus stable particle
ids and the descending-fitness permutation.  Fitness is measured by a
:class:`ScoreFunction`, either the Euclidean norm or a linear form <lam, x>
(a custom callable hook exists for experimentation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .rng import RngStream

__all__ = [
    "ScoreFunction",
    "Params",
    "AsymptoticConstants",
    "Configuration",
    "AllAtOrigin",
    "ExplicitList",
    "IidTail",
    "InitSpec",
    "score",
    "fitness_order",
    "sort_by_fitness",
    "make_initial",
    "init_condition_stat",
    "orthonormal_complement",
]

_UNIT_TOL = 1e-12


class ScoreFunction:
    """Fitness evaluator: linear <lam, .>, Euclidean norm, or custom callable."""

    __slots__ = ("kind", "lam", "fn")

    def __init__(self, kind: str, lam: Optional[np.ndarray] = None,
                 fn: Optional[Callable[[np.ndarray], float]] = None):
        if kind not in ("linear", "euclidean", "custom"):
            raise ValueError(f"unknown score kind {kind!r}")
        if kind == "linear":
            lam = np.asarray(lam, dtype=float)
            if lam.ndim != 1:
                raise ValueError("direction must be a 1-d vector")
            norm = float(np.linalg.norm(lam))
            if abs(norm - 1.0) > _UNIT_TOL:
                raise ValueError(f"linear score direction must be unit length, |lam| = {norm}")
        if kind == "custom" and fn is None:
            raise ValueError("custom score needs a callable")
        self.kind = kind
        self.lam = lam
        self.fn = fn

    @classmethod
    def linear(cls, lam: Sequence[float]) -> "ScoreFunction":
        return cls("linear", lam=np.asarray(lam, dtype=float))

    @classmethod
    def linear_normalized(cls, lam: Sequence[float]) -> "ScoreFunction":
        """Linear score with the direction rescaled to unit length."""
        v = np.asarray(lam, dtype=float)
        return cls("linear", lam=v / np.linalg.norm(v))

    @classmethod
    def euclidean(cls) -> "ScoreFunction":
        return cls("euclidean")

    @classmethod
    def custom(cls, fn: Callable[[np.ndarray], float]) -> "ScoreFunction":
        return cls("custom", fn=fn)

    @property
    def dim(self) -> Optional[int]:
        return None if self.lam is None else self.lam.shape[0]

    def __call__(self, x: Sequence[float]) -> float:
        return score(self, x)

    def values(self, positions: np.ndarray) -> np.ndarray:
        """Scores of an (N, d) position array."""
        X = np.asarray(positions, dtype=float)
        if self.kind == "linear":
            if X.shape[1] != self.lam.shape[0]:
                raise ValueError(
                    f"dimension mismatch: positions are {X.shape[1]}-d, "
                    f"direction is {self.lam.shape[0]}-d")
            return X @ self.lam
        if self.kind == "euclidean":
            return np.linalg.norm(X, axis=1)
        return np.array([float(self.fn(x)) for x in X])

    def __repr__(self) -> str:
        if self.kind == "linear":
            return f"ScoreFunction.linear({self.lam.tolist()})"
        return f"ScoreFunction({self.kind!r})"


def score(sf: ScoreFunction, x: Sequence[float]) -> float:
    """Fitness of a single point."""
    xv = np.asarray(x, dtype=float).reshape(-1)
    if sf.kind == "linear":
        if xv.shape[0] != sf.lam.shape[0]:
            raise ValueError(
                f"dimension mismatch: point is {xv.shape[0]}-d, direction is "
                f"{sf.lam.shape[0]}-d")
        return float(xv @ sf.lam)
    if sf.kind == "euclidean":
        return float(np.linalg.norm(xv))
    return float(sf.fn(xv))


@dataclass
class Params:
    """Static parameters of one particle system."""

    n: int
    d: int
    score: ScoreFunction
    branch_rate: float = 1.0
    horizon: float = 0.0
    seed: int = 0

    def __post_init__(self):
        # The theory assumes N > 1; N = 1 is allowed as the degenerate
        # single-Brownian-particle system used for calibration tests.
        if self.n < 1:
            raise ValueError(f"population size must be >= 1, got {self.n}")
        if self.d < 1:
            raise ValueError(f"dimension must be >= 1, got {self.d}")
        if self.branch_rate <= 0:
            raise ValueError(f"branch rate must be > 0, got {self.branch_rate}")


@dataclass(frozen=True)
class AsymptoticConstants:
    """Large-N constants of the one-dimensional system.

    L = log(N)/sqrt(2), eps = 2 pi^2 / log(N)^2, mu = sqrt(2 - eps) and the
    predicted front speed v_pred = sqrt(2) - pi^2/(sqrt(2) log(N)^2).  mu is
    real only for log(N) > pi, i.e. N >= 24; smaller populations are outside
    the regime where the wall construction makes sense.
    """

    n: int
    L: float
    eps: float
    mu: float
    v_pred: float

    @classmethod
    def from_n(cls, n: int) -> "AsymptoticConstants":
        if n < 2:
            raise ValueError(f"need N >= 2, got {n}")
        log_n = math.log(n)
        L = log_n / math.sqrt(2.0)
        eps = 2.0 * math.pi**2 / log_n**2
        if eps >= 2.0:
            raise ValueError(
                f"wall slope undefined for N = {n}: requires log(N) > pi (N >= 24)")
        mu = math.sqrt(2.0 - eps)
        v_pred = math.sqrt(2.0) - math.pi**2 / (math.sqrt(2.0) * log_n**2)
        return cls(n=n, L=L, eps=eps, mu=mu, v_pred=v_pred)


def fitness_order(scores: np.ndarray, ids: np.ndarray) -> np.ndarray:
    """Descending-score permutation; ties broken by ascending particle id.

    The tie rule is deliberate: the model allows an arbitrary choice, and a
    deterministic one keeps runs reproducible.
    """
    s = np.asarray(scores, dtype=float)
    if np.isnan(s).any():
        raise ValueError("NaN score encountered")
    return np.lexsort((np.asarray(ids), -s))


@dataclass
class Configuration:
    """Snapshot of the particle system at a fixed time.

    ``order`` sorts particles by descending score (stable by id), so
    ``positions[order[0]]`` is the fittest particle.
    """

    time: float
    positions: np.ndarray          # (N, d)
    ids: np.ndarray                # (N,) unique int64
    scores: np.ndarray             # (N,)
    order: np.ndarray              # (N,) permutation of 0..N-1

    @classmethod
    def build(cls, time: float, positions: np.ndarray, ids: np.ndarray,
              sf: ScoreFunction) -> "Configuration":
        positions = np.asarray(positions, dtype=float)
        if positions.ndim != 2:
            raise ValueError("positions must be an (N, d) array")
        ids = np.asarray(ids, dtype=np.int64)
        if len(np.unique(ids)) != ids.shape[0]:
            raise ValueError("particle ids must be unique")
        scores = sf.values(positions)
        return cls(time=time, positions=positions, ids=ids, scores=scores,
                   order=fitness_order(scores, ids))

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    def sorted_positions(self) -> np.ndarray:
        return self.positions[self.order]

    def sorted_scores(self) -> np.ndarray:
        return self.scores[self.order]

    def max_score(self) -> float:
        return float(self.scores[self.order[0]])

    def min_score(self) -> float:
        return float(self.scores[self.order[-1]])

    def top_position(self) -> np.ndarray:
        return self.positions[self.order[0]]

    def radii(self) -> np.ndarray:
        """R_n = |X_n|, in sorted order."""
        return np.linalg.norm(self.sorted_positions(), axis=1)

    def directions(self) -> np.ndarray:
        """Unit vectors X_n/|X_n| in sorted order; requires positive radii."""
        pos = self.sorted_positions()
        r = np.linalg.norm(pos, axis=1)
        if np.any(r <= 0):
            raise ValueError("angular decomposition undefined: particle at the origin")
        return pos / r[:, None]

    def projections(self, lam: np.ndarray) -> np.ndarray:
        """<X_n, lam> in sorted order."""
        return self.sorted_positions() @ np.asarray(lam, dtype=float)


def sort_by_fitness(config: Configuration, sf: ScoreFunction) -> np.ndarray:
    """Recompute the descending-score permutation of a configuration."""
    return fitness_order(sf.values(config.positions), config.ids)


@dataclass(frozen=True)
class AllAtOrigin:
    """All N particles start at the origin."""


@dataclass(frozen=True)
class ExplicitList:
    """Explicit list of N starting positions, shape (N, d)."""

    positions: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "positions",
                           np.atleast_2d(np.asarray(self.positions, dtype=float)))


@dataclass(frozen=True)
class IidTail:
    """I.i.d. starts with two-sided exponential tail of rate alpha along the
    score direction; orthogonal coordinates are standard normal."""

    alpha: float
    direction: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError(f"tail rate must be > 0, got {self.alpha}")
        if self.direction is not None:
            object.__setattr__(self, "direction",
                               np.asarray(self.direction, dtype=float))


InitSpec = Union[AllAtOrigin, ExplicitList, IidTail]


def orthonormal_complement(lam: np.ndarray) -> np.ndarray:
    """(d, d-1) orthonormal basis of the hyperplane orthogonal to lam.

    Deterministic (Householder completion) so seeded runs are reproducible.
    """
    lam = np.asarray(lam, dtype=float)
    d = lam.shape[0]
    if d == 1:
        return np.zeros((1, 0))
    e = np.zeros(d)
    e[0] = 1.0
    v = lam - e if lam[0] >= 0 else lam + e
    if np.linalg.norm(v) < 1e-14:
        H = np.eye(d)
    else:
        v = v / np.linalg.norm(v)
        H = np.eye(d) - 2.0 * np.outer(v, v)
    # Column 0 of H is ±lam; the remaining columns span its complement.
    return H[:, 1:]


def make_initial(spec: InitSpec, params: Params, stream: RngStream) -> Configuration:
    """Configuration at time 0 for the given initial-condition spec.

    IidTail draw order (fixed for reproducibility): N exponential magnitudes,
    N uniform signs, then N x (d-1) orthogonal normals.
    """
    n, d = params.n, params.d
    if isinstance(spec, AllAtOrigin):
        positions = np.zeros((n, d))
    elif isinstance(spec, ExplicitList):
        positions = np.asarray(spec.positions, dtype=float)
        if positions.ndim == 1:
            positions = positions[:, None]
        if positions.shape != (n, d):
            raise ValueError(
                f"explicit initial positions have shape {positions.shape}, "
                f"expected ({n}, {d})")
        positions = positions.copy()
    elif isinstance(spec, IidTail):
        lam = spec.direction
        if lam is None:
            if params.score.kind != "linear":
                raise ValueError("IidTail needs a direction unless the score is linear")
            lam = params.score.lam
        lam = np.asarray(lam, dtype=float)
        if lam.shape[0] != d:
            raise ValueError(f"direction is {lam.shape[0]}-d, expected {d}-d")
        gen = stream.generator
        mags = gen.standard_exponential(n) / spec.alpha
        signs = np.where(gen.random(n) < 0.5, 1.0, -1.0)
        s = mags * signs
        positions = s[:, None] * lam[None, :]
        if d > 1:
            basis = orthonormal_complement(lam)
            z = gen.standard_normal((n, d - 1))
            positions = positions + z @ basis.T
    else:
        raise TypeError(f"unknown init spec {type(spec).__name__}")
    ids = np.arange(n, dtype=np.int64)
    return Configuration.build(0.0, positions, ids, params.score)


def init_condition_stat(config: Configuration, lam: np.ndarray) -> float:
    """Concentration statistic Y of the initial condition.

    Y = sum_n exp(sqrt(2) (<X_n, lam> - max_m <X_m, lam>)) >= 1.  The front
    is sparse enough for the shape/genealogy predictions at exponent delta
    when Y <= N^delta.
    """
    if config.n == 0:
        raise ValueError("empty configuration")
    lam = np.asarray(lam, dtype=float)
    if abs(np.linalg.norm(lam) - 1.0) > 1e-10:
        raise ValueError("lam must be a unit vector")
    proj = config.positions @ lam
    return float(np.exp(math.sqrt(2.0) * (proj - proj.max())).sum())
