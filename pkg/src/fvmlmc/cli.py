"""Command line harness.

Usage::

    fvmlmc <convergence|cgv-compare|solver-bench|mlmc> [--config FILE]
           [--seed N] [--threads N] [--out DIR]

Every run writes ``config.yaml`` (the resolved configuration), ``levels.csv``
and ``summary.json`` to the output directory; ``solver-bench`` adds
``residuals.csv`` and ``dump_field: true`` adds ``field.bin``. The output
directory is taken from ``--out``, then ``$FVMLMC_OUT``, then the config.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, fields, rng
from .config import ConfigError, ExperimentConfig
from .estimators import MLMCConfig
from .experiments import run_cgv_comparison, run_convergence_study, run_mlmc, run_solver_bench
from .solver import write_residuals

logger = logging.getLogger("fvmlmc")

COMMANDS = ("convergence", "cgv-compare", "solver-bench", "mlmc")


def jsonable(obj):
    """Plain JSON types; non-finite floats become ``null``."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return jsonable(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def build_parser():
    p = argparse.ArgumentParser(prog="fvmlmc", description="MLMC for finite volume Darcy flow with random permeability")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, help="YAML experiment configuration")
        s.add_argument("--seed", type=int, help="base seed, overrides the config")
        s.add_argument("--threads", type=int, default=1, help="worker processes (results do not depend on it)")
        s.add_argument("--out", type=Path, help="output directory")
        s.add_argument("-v", "--verbose", action="count", default=0)
    return p


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig.from_dict({}, "<defaults>")
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError(f"--seed must be an unsigned 64-bit integer, got {args.seed}")
        cfg = cfg.with_overrides(seed=args.seed)
    out = args.out or os.environ.get("FVMLMC_OUT")
    if out is not None:
        cfg = cfg.with_overrides(output=str(out))
    return cfg


def run(command, cfg: ExperimentConfig, threads=1):
    problem = cfg.problem()
    seed = cfg["seed"]
    L = cfg["grid"]["L"]
    if command == "convergence":
        return run_convergence_study(problem, L, cfg["reference_level"], cfg["samples"], seed, threads)
    if command == "cgv-compare":
        return run_cgv_comparison(problem, range(1, L + 1), cfg["samples"], seed, threads)
    if command == "solver-bench":
        return run_solver_bench(problem, cfg["bench"]["sizes"], cfg["bench"]["systems"], seed, threads)
    m = cfg["mlmc"]
    mcfg = MLMCConfig(m["warmup"], m["L_min"], m["L_max"], m["alpha"], m["beta"], seed, rng.MLMC, threads)
    return run_mlmc(problem, cfg["eps"], cfg["coupling"], mcfg, cfg["compare_mc"])


def write_outputs(command, cfg: ExperimentConfig, table, seconds) -> Path:
    out = Path(cfg["output"])
    out.mkdir(parents=True, exist_ok=True)
    provenance = {"config_hash": cfg.hash, "seed": cfg["seed"], "command": command}
    (out / "config.yaml").write_text(f"# config_hash: {cfg.hash}\n# seed: {cfg['seed']}\n" + cfg.dump())
    table.write_csv(out / "levels.csv", provenance)
    summary = {
        **provenance,
        "version": __version__,
        "config": cfg.data,
        "columns": list(table.columns),
        "rows": table.rows,
        "results": table.summary,
        "wall_seconds": seconds,
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(jsonable(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if table.residuals:
        labels, reports = zip(*table.residuals)
        write_residuals(out / "residuals.csv", reports, labels)
    if cfg["dump_field"]:
        problem = cfg.problem()
        level = cfg["grid"]["L"]
        k = problem.sample_permeability(level, rng.SampleStreams(cfg["seed"], rng.REFERENCE, level, 0))
        fields.dump_field(out / "field.bin", k.values)
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
    except (ConfigError, OSError) as exc:
        print(f"fvmlmc: {exc}", file=sys.stderr)
        return 2
    if args.threads < 1:
        print("fvmlmc: --threads must be at least 1", file=sys.stderr)
        return 2
    t0 = time.perf_counter()
    try:
        table = run(args.command, cfg, args.threads)
    except (ValueError, fields.EmbeddingError) as exc:
        print(f"fvmlmc: {exc}", file=sys.stderr)
        return 1
    out = write_outputs(args.command, cfg, table, time.perf_counter() - t0)
    print(f"wrote {out}/levels.csv and {out}/summary.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())
