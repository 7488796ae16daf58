"""Scenario registry: configuration ingestion, replica fan-out, result tables.

Each scenario maps a :class:`ScenarioConfig` to an :class:`OutputTable` of
(scenario, N, seed, t, metric, value) rows.  Replicas draw from independent
streams keyed by (config seed, job index), so results are byte-identical for
a fixed config regardless of worker count; rows are merged in sorted order.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .engine import Engine
from .errors import ConfigError, ReplicaFailure
from .io import OutputTable, SvgSeries
from .model import (AllAtOrigin, AsymptoticConstants, Configuration,
                    ExplicitList, IidTail, InitSpec, Params, ScoreFunction)
from .observables import (ScoreSeries, angular_spread, average_tail,
                          centered_tail, diameters, spherical_distance,
                          speed_estimate, tail_sup_distance)
from .rng import RngStream
from .walls import WallExperiment, many_to_one_check, run_free_bbm

__all__ = [
    "ScenarioConfig",
    "SCENARIOS",
    "run_scenario",
    "recombine",
    "front_lattice",
    "default_snapshot_grid",
    "render_svg",
]


@dataclass
class ScenarioConfig:
    """Declarative description of one experiment."""

    scenario: str
    n: int = 1000
    d: int = 1
    branch_rate: float = 1.0
    score: dict = field(default_factory=lambda: {"kind": "linear"})
    init: dict = field(default_factory=lambda: {"kind": "origin"})
    n_grid: Optional[list[int]] = None
    replicas: int = 8
    horizon: Optional[float] = None
    snapshot_times: Optional[list[float]] = None
    seed: int = 0
    threads: int = 1
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(
                f"unknown scenario {self.scenario!r}; registered: "
                f"{', '.join(sorted(SCENARIOS))}")
        if self.replicas < 1:
            raise ConfigError("replicas must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.n_grid is not None:
            grid = list(self.n_grid)
            if any(b <= a for a, b in zip(grid, grid[1:])) or not grid:
                raise ConfigError("n_grid must be nonempty and strictly increasing")

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        allowed = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "scenario" not in data:
            raise ConfigError("config needs a 'scenario' field")
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError(str(e)) from None

    @classmethod
    def from_json(cls, path) -> "ScenarioConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON in {path}: {e}") from None
        if not isinstance(data, dict):
            raise ConfigError("config root must be a JSON object")
        return cls.from_dict(data)

    def grid(self) -> list[int]:
        return list(self.n_grid) if self.n_grid else [self.n]


def default_snapshot_grid(n: int, horizon: float) -> list[float]:
    """Snapshot times {k log N}, the natural fluctuation scale of the front."""
    step = math.log(max(n, 2))
    k = 1
    out = []
    while k * step <= horizon + 1e-9:
        out.append(k * step)
        k += 1
    if not out or out[-1] < horizon:
        out.append(horizon)
    return out


def front_lattice(n: int, spacing: float, lam: Sequence[float]) -> ExplicitList:
    """Initial condition 0, -spacing, -2 spacing, ... along lam.

    Its concentration statistic is 1/(1 - e^(-sqrt(2) spacing)) independent of
    N, so the sparse-front condition holds at exponent 1/2 for every N above
    that constant squared (spacing 0.1 => N >= 58).
    """
    lam = np.asarray(lam, dtype=float)
    heights = -spacing * np.arange(n)
    return ExplicitList(heights[:, None] * lam[None, :])


def _make_score(cfg: ScenarioConfig, d: int) -> ScoreFunction:
    kind = cfg.score.get("kind", "linear")
    if kind == "euclidean":
        return ScoreFunction.euclidean()
    if kind == "linear":
        lam = cfg.score.get("lam")
        if lam is None:
            lam = [0.0] * d
            lam[0] = 1.0
        return ScoreFunction.linear_normalized(lam)
    raise ConfigError(f"unsupported score kind {kind!r}")


def _make_init(cfg: ScenarioConfig, n: int, d: int, sf: ScoreFunction) -> InitSpec:
    kind = cfg.init.get("kind", "origin")
    if kind == "origin":
        return AllAtOrigin()
    if kind == "explicit":
        return ExplicitList(np.asarray(cfg.init["positions"], dtype=float))
    if kind == "iid_tail":
        return IidTail(alpha=float(cfg.init["alpha"]),
                       direction=sf.lam if sf.kind == "linear" else None)
    if kind == "lattice":
        spacing = float(cfg.init.get("spacing", 0.1))
        lam = sf.lam if sf.kind == "linear" else np.eye(d)[0]
        return front_lattice(n, spacing, lam)
    raise ConfigError(f"unsupported init kind {kind!r}")


def _run_jobs(cfg: ScenarioConfig, jobs, worker) -> OutputTable:
    """Fan replicas out to a worker pool; merge deterministically.

    ``jobs`` is a list of (n, replica_index); each job gets the stream
    (cfg.seed, job_index).  Failures are collected and re-raised together
    after every job has run.
    """
    results: list[Optional[list]] = [None] * len(jobs)
    failures = []

    def call(j):
        n, rep = jobs[j]
        stream = RngStream(cfg.seed, j)
        return worker(n, rep, stream)

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            futs = {pool.submit(call, j): j for j in range(len(jobs))}
            for fut, j in futs.items():
                try:
                    results[j] = fut.result()
                except Exception as e:          # noqa: BLE001 - aggregated below
                    failures.append((jobs[j][0], jobs[j][1], j, str(e)))
    else:
        for j in range(len(jobs)):
            try:
                results[j] = call(j)
            except Exception as e:              # noqa: BLE001 - aggregated below
                failures.append((jobs[j][0], jobs[j][1], j, str(e)))
    if failures:
        raise ReplicaFailure(sorted(failures))
    table = OutputTable()
    for rows in results:
        table.extend(rows)
    return table.sort()


def _jobs_over_grid(cfg: ScenarioConfig):
    return [(n, r) for n in cfg.grid() for r in range(cfg.replicas)]


# -- scenarios ----------------------------------------------------------------


def _sc_speed_scaling(cfg: ScenarioConfig) -> OutputTable:
    """Front speed of the 1-d system across the population grid."""
    t1 = cfg.horizon if cfg.horizon else 600.0
    t0 = float(cfg.extra.get("window_start", t1 / 6.0))

    def worker(n, rep, stream):
        sf = ScoreFunction.linear([1.0])
        params = Params(n=n, d=1, score=sf, branch_rate=cfg.branch_rate)
        eng = Engine(params, _make_init(cfg, n, 1, sf), stream)
        snaps = [eng.run_until(t0), eng.run_until(t1)]
        series = ScoreSeries.from_configs(snaps)
        rows = []
        for stat in ("min", "max", "median"):
            rows.append((cfg.scenario, n, stream.stream_id, t1, f"speed_{stat}",
                         speed_estimate(series, t0, t1, stat)))
        rows.append((cfg.scenario, n, stream.stream_id, t1, "top_rate",
                     snaps[-1].max_score() / t1))
        return rows

    return _run_jobs(cfg, _jobs_over_grid(cfg), worker)


def _sc_shape_scaling(cfg: ScenarioConfig) -> OutputTable:
    """Cloud extents along/orthogonal to the fitness direction at the
    genealogical timescale, across the population grid."""
    coeff = float(cfg.extra.get("horizon_coeff", 0.01))
    d = max(cfg.d, 2)

    def worker(n, rep, stream):
        sf = _make_score(cfg, d)
        if sf.kind != "linear":
            raise ConfigError("shape_scaling needs a linear score")
        params = Params(n=n, d=d, score=sf, branch_rate=cfg.branch_rate)
        eng = Engine(params, _make_init(cfg, n, d, sf), stream)
        horizon = coeff * math.log(n) ** 3
        lam = sf.lam
        lam_perp = _first_perp(lam)
        rows = []
        for frac in (0.25, 0.5, 0.75, 1.0):
            t = frac * horizon
            conf = eng.run_until(t)
            dm, dp = diameters(conf, lam, lam_perp)
            rows.append((cfg.scenario, n, stream.stream_id, t, "diam", dm))
            rows.append((cfg.scenario, n, stream.stream_id, t, "diam_perp", dp))
        rows.append((cfg.scenario, n, stream.stream_id, horizon,
                     "diam_perp_over_logn", dp / math.log(n)))
        rows.append((cfg.scenario, n, stream.stream_id, horizon,
                     "diam_over_logn", dm / math.log(n)))
        return rows

    return _run_jobs(cfg, _jobs_over_grid(cfg), worker)


def _first_perp(lam: np.ndarray) -> np.ndarray:
    from .model import orthonormal_complement

    basis = orthonormal_complement(lam)
    if basis.shape[1] == 0:
        raise ConfigError("orthogonal diameter needs d >= 2")
    return basis[:, 0]


def _sc_mrca_scaling(cfg: ScenarioConfig) -> OutputTable:
    """Stationary MRCA age across the population grid."""
    coeff = float(cfg.extra.get("stationarity_coeff", 0.3))
    floor = float(cfg.extra.get("horizon_floor", 30.0))

    def worker(n, rep, stream):
        sf = ScoreFunction.linear([1.0])
        params = Params(n=n, d=1, score=sf, branch_rate=cfg.branch_rate)
        eng = Engine(params, _make_init(cfg, n, 1, sf), stream, genealogy=True)
        horizon = max(floor, coeff * math.log(n) ** 3)
        eng.run_until(horizon)
        age = eng.forest.mrca_age(horizon)
        rows = []
        if age is not None:
            rows.append((cfg.scenario, n, stream.stream_id, horizon, "mrca_age", age))
            rows.append((cfg.scenario, n, stream.stream_id, horizon,
                         "mrca_age_over_log3", age / math.log(n) ** 3))
        return rows

    return _run_jobs(cfg, _jobs_over_grid(cfg), worker)


def _sc_equilibrium_shape(cfg: ScenarioConfig) -> OutputTable:
    """Time-averaged centered score tail against the traveling wave (report)."""
    t_lo = float(cfg.extra.get("window_start", 200.0))
    t_hi = cfg.horizon if cfg.horizon else 400.0
    n_snap = int(cfg.extra.get("snapshots", 40))
    x_max = float(cfg.extra.get("x_max", 4.0))

    def worker(n, rep, stream):
        sf = ScoreFunction.linear([1.0])
        params = Params(n=n, d=1, score=sf, branch_rate=cfg.branch_rate)
        eng = Engine(params, _make_init(cfg, n, 1, sf), stream)
        profiles = []
        for t in np.linspace(t_lo, t_hi, n_snap):
            conf = eng.run_until(float(t))
            profiles.append(centered_tail(conf, x_max=x_max))
        avg = average_tail(profiles)
        rows = [(cfg.scenario, n, stream.stream_id, t_hi, f"tail@{x:.4f}", v)
                for x, v in zip(avg.grid, avg.values)]
        rows.append((cfg.scenario, n, stream.stream_id, t_hi,
                     "tail_wstar_supdist", tail_sup_distance(avg)))
        return rows

    return _run_jobs(cfg, _jobs_over_grid(cfg), worker)


def _sc_direction_convergence(cfg: ScenarioConfig) -> OutputTable:
    """Angular clumping (Euclidean score) or direction lock-in (linear)."""
    d = max(cfg.d, 2)
    horizon = cfg.horizon if cfg.horizon else 400.0
    snaps = cfg.snapshot_times or [horizon / 4, horizon / 2, 3 * horizon / 4, horizon]

    def worker(n, rep, stream):
        sf = _make_score(cfg, d)
        params = Params(n=n, d=d, score=sf, branch_rate=cfg.branch_rate)
        eng = Engine(params, _make_init(cfg, n, d, sf), stream)
        rows = []
        for t in snaps:
            conf = eng.run_until(float(t))
            if sf.kind == "euclidean":
                rows.append((cfg.scenario, n, stream.stream_id, t,
                             "angular_spread", angular_spread(conf)))
            else:
                top = conf.top_position()
                r = float(np.linalg.norm(top))
                rows.append((cfg.scenario, n, stream.stream_id, t,
                             "dist_to_lambda",
                             spherical_distance(top / r, sf.lam)))
        return rows

    return _run_jobs(cfg, _jobs_over_grid(cfg), worker)


def _sc_walls_validation(cfg: ScenarioConfig) -> OutputTable:
    """Free BBM between the moving walls: counters and analytic bounds."""
    n = cfg.n
    consts = AsymptoticConstants.from_n(n)
    coeff = float(cfg.extra.get("horizon_coeff", 0.01))
    horizon = coeff * math.log(n) ** 3
    spacing = float(cfg.extra.get("spacing", 0.1))
    init = -spacing * np.arange(n)

    sum_pos = float(np.exp(consts.mu * init[init > 0]).sum())
    sum_neg = float(np.exp(consts.mu * init[init < 0]).sum())
    sum_all = float(np.exp(consts.mu * init).sum())
    growth = math.exp(0.5 * consts.eps * horizon)
    kill_right_bound = math.exp(-consts.mu * consts.L) * growth * sum_all
    delta_minus_bound = growth * sum_neg

    def worker(n_, rep, stream):
        exp = WallExperiment(init=init, horizon=horizon, mu=consts.mu,
                             right_offset=consts.L, left_offset=0.0,
                             branch_rate=cfg.branch_rate)
        res = run_free_bbm(exp, stream)
        c = res.counters
        sid = stream.stream_id
        return [
            (cfg.scenario, n_, sid, horizon, "killed_right", c.killed_right),
            (cfg.scenario, n_, sid, horizon, "v_violated", float(c.V_violated)),
            (cfg.scenario, n_, sid, horizon, "W", c.W),
            (cfg.scenario, n_, sid, horizon, "W1", c.W1),
            (cfg.scenario, n_, sid, horizon, "W2", c.W2),
            (cfg.scenario, n_, sid, horizon, "delta_plus", c.delta_plus),
            (cfg.scenario, n_, sid, horizon, "delta_minus", c.delta_minus),
            (cfg.scenario, n_, sid, horizon, "births", res.births),
            (cfg.scenario, n_, sid, horizon, "kill_right_bound", kill_right_bound),
            (cfg.scenario, n_, sid, horizon, "delta_minus_bound", delta_minus_bound),
            (cfg.scenario, n_, sid, horizon, "w2_growth_factor", growth),
        ]

    return _run_jobs(cfg, [(n, r) for r in range(cfg.replicas)], worker)


def _sc_many_to_one(cfg: ScenarioConfig) -> OutputTable:
    """Expected high-particle counts versus the single-path identity."""
    t = cfg.horizon if cfg.horizon else 1.0
    a = float(cfg.extra.get("level", math.sqrt(2.0)))
    reps_total = int(cfg.extra.get("mc_reps", 100_000))
    per = max(1, reps_total // cfg.replicas)

    def worker(n, rep, stream):
        chk = many_to_one_check(t, a, per, stream)
        sid = stream.stream_id
        return [
            (cfg.scenario, n, sid, t, "mc_mean", chk.mc_mean),
            (cfg.scenario, n, sid, t, "mc_stderr", chk.stderr),
            (cfg.scenario, n, sid, t, "analytic", chk.analytic),
            (cfg.scenario, n, sid, t, "reps", chk.reps),
        ]

    return _run_jobs(cfg, [(cfg.n, r) for r in range(cfg.replicas)], worker)


def recombine(config: Configuration, parent_a: int, parent_b: int, k: int,
              stream: RngStream) -> np.ndarray:
    """Child position from coordinate blocks of two parents.

    The child takes the first k coordinates of one parent and the remaining
    d-k of the other, the side chosen by a fair coin.  For a linear score the
    two possible children have the same total fitness as the parents.
    """
    X = config.positions
    d = config.d
    if d < 2:
        raise ValueError("recombination needs d >= 2")
    if not (1 <= k < d):
        raise ValueError(f"block split must satisfy 1 <= k < d, got {k}")
    if parent_a == parent_b:
        raise ValueError("parents must be distinct")
    ia = int(np.flatnonzero(config.ids == parent_a)[0])
    ib = int(np.flatnonzero(config.ids == parent_b)[0])
    if stream.uniform() < 0.5:
        ia, ib = ib, ia
    child = np.empty(d)
    child[:k] = X[ia, :k]
    child[k:] = X[ib, k:]
    return child


def _sc_recombination(cfg: ScenarioConfig) -> OutputTable:
    """Front speed with recombination of the worst particle (report)."""
    d = max(cfg.d, 2)
    rates = [float(r) for r in cfg.extra.get("rates", [0.0, 0.5, 1.0])]
    t1 = cfg.horizon if cfg.horizon else 120.0
    t0 = float(cfg.extra.get("window_start", t1 / 4.0))
    split = int(cfg.extra.get("block_split", 1))

    def worker(n, rep, stream):
        sf = _make_score(cfg, d)
        if sf.kind != "linear":
            raise ConfigError("recombination needs a linear score")
        rows = []
        for ri, rate in enumerate(rates):
            eng_stream = stream.substream(stream.stream_id * 1000 + 2 * ri)
            rec_stream = stream.substream(stream.stream_id * 1000 + 2 * ri + 1)
            params = Params(n=n, d=d, score=sf, branch_rate=cfg.branch_rate)
            eng = Engine(params, _make_init(cfg, n, d, sf), eng_stream)
            vals = {}
            for tt in (t0, t1):
                t = eng.time
                while rate > 0:
                    gap = rec_stream.exp_gap(rate * n)
                    if t + gap > tt:
                        break
                    t += gap
                    conf = eng.run_until(t)
                    ids = conf.ids[conf.order]
                    pa, pb = _draw_parent_pair(rec_stream, ids)
                    child = recombine(conf, pa, pb, split, rec_stream)
                    eng.replace_min(child)
                conf = eng.run_until(tt)
                vals[tt] = conf.min_score()
            speed = (vals[t1] - vals[t0]) / (t1 - t0)
            rows.append((cfg.scenario, n, stream.stream_id, t1,
                         f"speed_min@r={rate:g}", speed))
        return rows

    return _run_jobs(cfg, [(cfg.n, r) for r in range(cfg.replicas)], worker)


def _draw_parent_pair(stream: RngStream, ids: np.ndarray):
    n = ids.shape[0]
    ia = stream.uniform_index(n)
    ib = stream.uniform_index(n - 1)
    if ib >= ia:
        ib += 1
    return int(ids[ia]), int(ids[ib])


SCENARIOS: dict[str, Callable[[ScenarioConfig], OutputTable]] = {
    "speed_scaling": _sc_speed_scaling,
    "shape_scaling": _sc_shape_scaling,
    "mrca_scaling": _sc_mrca_scaling,
    "equilibrium_shape": _sc_equilibrium_shape,
    "direction_convergence": _sc_direction_convergence,
    "walls_validation": _sc_walls_validation,
    "many_to_one_validation": _sc_many_to_one,
    "recombination": _sc_recombination,
}


def run_scenario(cfg: ScenarioConfig) -> OutputTable:
    """Run a registered scenario; the table comes back merged and sorted."""
    try:
        fn = SCENARIOS[cfg.scenario]
    except KeyError:
        raise ConfigError(f"unknown scenario {cfg.scenario!r}") from None
    return fn(cfg)


def render_svg(cfg: ScenarioConfig, table: OutputTable) -> Optional[list[SvgSeries]]:
    """Scenario-specific plot series for the emitted SVG, if any."""
    if cfg.scenario == "shape_scaling":
        out = []
        ns = sorted({r[1] for r in table.rows})
        for i, n in enumerate(ns):
            pts = sorted({(r[3], r[5]) for r in table.rows
                          if r[1] == n and r[4] == "diam_perp"})
            ts = [p[0] for p in pts]
            med = [float(np.median([r[5] for r in table.rows
                                    if r[1] == n and r[4] == "diam_perp"
                                    and r[3] == t])) for t in ts]
            out.append(SvgSeries(label=f"N={n}", x=ts, y=med,
                                 shade=0.7 * i / max(1, len(ns) - 1)))
        return out
    if cfg.scenario == "speed_scaling":
        ns = sorted({r[1] for r in table.rows})
        med = [float(np.median(table.values("speed_min", n))) for n in ns]
        return [SvgSeries(label="speed_min", x=[math.log(n) for n in ns], y=med)]
    if cfg.scenario == "equilibrium_shape":
        xs, vs = [], []
        for r in table.rows:
            if r[4].startswith("tail@"):
                xs.append(float(r[4][5:]))
                vs.append(r[5])
        if not xs:
            return None
        from .observables import w_star

        xs = np.array(xs)
        order = np.argsort(xs)
        xs = xs[order]
        vs = np.array(vs)[order]
        return [SvgSeries(label="empirical", x=xs, y=vs),
                SvgSeries(label="wave", x=xs, y=w_star(xs), shade=0.6)]
    return None
