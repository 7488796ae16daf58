"""Command line entry point.

    simulate --scenario <name> --config <path> --out <dir>
             [--seed S] [--replicas R] [--threads K]

Exit codes: 0 success, 2 configuration error, 3 partial replica failure.
Environment overrides: NBBM_OUT_DIR (output directory), NBBM_THREADS.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .errors import ConfigError, ReplicaFailure
from .io import emit_csv, emit_json, emit_svg
from .scenarios import ScenarioConfig, render_svg, run_scenario

__all__ = ["main"]


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="simulate",
        description="Run a registered particle-system scenario and emit "
                    "CSV/JSON (and SVG where the scenario defines a plot).")
    p.add_argument("--scenario", help="scenario name (overrides the config)")
    p.add_argument("--config", required=True, help="JSON scenario config")
    p.add_argument("--out", help="output directory (or NBBM_OUT_DIR)")
    p.add_argument("--seed", type=int, help="override config seed")
    p.add_argument("--replicas", type=int, help="override replica count")
    p.add_argument("--threads", type=int, help="override worker threads "
                                               "(or NBBM_THREADS)")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = ScenarioConfig.from_json(args.config)
        overrides = {}
        if args.scenario:
            overrides["scenario"] = args.scenario
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.replicas is not None:
            overrides["replicas"] = args.replicas
        threads = args.threads
        if threads is None and os.environ.get("NBBM_THREADS"):
            threads = int(os.environ["NBBM_THREADS"])
        if threads is not None:
            overrides["threads"] = threads
        if overrides:
            data = {**cfg.__dict__, **overrides}
            cfg = ScenarioConfig.from_dict(data)
        out_dir = args.out or os.environ.get("NBBM_OUT_DIR")
        if not out_dir:
            raise ConfigError("no output directory: pass --out or set NBBM_OUT_DIR")
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        table = run_scenario(cfg)
    except ReplicaFailure as e:
        print(f"replica failure: {e}", file=sys.stderr)
        return 3
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    emit_csv(table, out / f"{cfg.scenario}.csv")
    emit_json(table, out / f"{cfg.scenario}.json")
    series = render_svg(cfg, table)
    if series:
        emit_svg(series, out / f"{cfg.scenario}.svg", title=cfg.scenario)
    print(f"{cfg.scenario}: {len(table.rows)} rows -> {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
