"""Branching Brownian motion with selection: exact event-driven simulation,
genealogy tracking, killing-wall experiments and scenario runners."""

from .engine import CoupledPair, Engine, EventRecord, EventTrace
from .errors import (CapacityError, ConfigError, CouplingViolation, DataError,
                     QueryError, ReplicaFailure)
from .genealogy import GenealogyForest
from .io import OutputTable, SvgSeries, emit_csv, emit_json, emit_svg
from .model import (AllAtOrigin, AsymptoticConstants, Configuration,
                    ExplicitList, IidTail, InitSpec, Params, ScoreFunction,
                    init_condition_stat, make_initial, score, sort_by_fitness)
from .observables import (ScoreSeries, ShapeStats, TailProfile, angular_spread,
                          average_tail, centered_tail, diameters, shape_stats,
                          speed_estimate, spherical_distance, tail_sup_distance,
                          time_change, w_star)
from .rng import RngStream, bridge_cross_prob, bridge_crosses, normal_upper_tail
from .scenarios import (SCENARIOS, ScenarioConfig, default_snapshot_grid,
                        front_lattice, recombine, run_scenario)
from .walls import (SurvivalEstimate, WallCounters, WallExperiment,
                    WallParticle, WallResult, count_W, many_to_one_check,
                    max_tail_check, run_free_bbm, supermartingale_value,
                    survival_probability_estimate)

__version__ = "0.1.0"
