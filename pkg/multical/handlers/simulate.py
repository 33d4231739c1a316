"""`simulate` command: run one of the simulation studies."""
import argparse
import logging
import time
from typing import Any, Callable, Dict, Tuple

import pandas as pd

from multical.config import config
from multical.handlers.common import manifest_for, require, write_frame, write_json
from multical.services import experiments
from multical.storage import ResultStore
from multical.utils.validators import (
    validate_chain_settings,
    validate_positive_int,
    validate_seed,
)

logger = logging.getLogger(__name__)

EXPERIMENTS = ("example1", "example2", "example3", "example3-limiting", "mogi", "scaling")


def register(subparsers) -> None:
    parser = subparsers.add_parser("simulate", help="Run a simulation study")
    parser.add_argument("--experiment", choices=EXPERIMENTS, required=True)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--reps", type=int, default=None, help="Replicates (or Monte Carlo draws)")
    parser.add_argument("--k", type=int, default=5, help="Number of sources")
    parser.add_argument("--n", type=int, nargs="+", default=None, help="Sample sizes")
    parser.add_argument("--gamma", type=float, nargs="+", default=None, help="Range parameter(s)")
    parser.add_argument("--tau2", type=float, default=None)
    parser.add_argument("--samples", type=int, default=None, help="MCMC iterations")
    parser.add_argument("--burnin", type=int, default=None)
    parser.add_argument("--thin", type=int, default=None)
    parser.add_argument("--grid", type=int, default=20, help="Mogi image side (pixels)")
    parser.add_argument("--design-seed", type=int, default=None, help="Design seed (example2)")
    parser.add_argument("--out", default="simulate", help="Output prefix in the results store")
    parser.set_defaults(handler=handle)


def _chain_args(args: argparse.Namespace, samples: int, burn_in: int, thin: int) -> Dict[str, int]:
    out = {
        "n_samples": samples if args.samples is None else args.samples,
        "burn_in": burn_in if args.burnin is None else args.burnin,
        "thin": thin if args.thin is None else args.thin,
    }
    require(validate_chain_settings(out["n_samples"], out["burn_in"], out["thin"]))
    return out


def _plan(args: argparse.Namespace, seed: int) -> Tuple[Callable[[], pd.DataFrame], Dict[str, Any]]:
    """Runner and the settings that fully determine its output."""
    exp = args.experiment
    if exp == "example1":
        settings = {
            "n_grid": args.n or [25, 50, 100],
            "reps": args.reps or 10_000,
            "gamma": (args.gamma or [0.1])[0],
            "tau2": 1.0 if args.tau2 is None else args.tau2,
            "seed": seed,
        }
        return lambda: experiments.run_example1(**settings), settings
    if exp == "example2":
        settings = {
            "design_seed": seed if args.design_seed is None else args.design_seed,
            "noise_seed": seed,
            "n": (args.n or [30])[0],
            "fixed_tau2": args.tau2,
        }
        return lambda: experiments.run_example2(**settings), settings
    if exp == "example3":
        settings = {
            "k": args.k,
            "seed": seed,
            "n_reps": args.reps or 20,
            **_chain_args(args, 5000, 1000, 10),
        }
        return lambda: experiments.run_example3(**settings), settings
    if exp == "example3-limiting":
        settings = {
            "n_values": args.n or [25, 50, 100, 200],
            "gammas": args.gamma or [0.02, 0.005],
            "n_reps": args.reps or 500,
            "seed": seed,
            "tau2": 0.04 if args.tau2 is None else args.tau2,
        }
        return lambda: experiments.run_example3_limiting(**settings), settings
    if exp == "mogi":
        settings = {
            "n_reps": args.reps or 10,
            "seed": seed,
            "grid": args.grid,
            **_chain_args(args, 2000, 500, 5),
        }
        return lambda: experiments.run_mogi_scenario(**settings), settings
    settings = {"n": (args.n or [200])[0], "ks": [2, 4, 8], "seed": seed}
    return lambda: experiments.scaling_witness(**settings), settings


def handle(args: argparse.Namespace, storage: ResultStore) -> int:
    seed = config.DEFAULT_SEED if args.seed is None else args.seed
    require(validate_seed(seed))
    if args.reps is not None:
        require(validate_positive_int(args.reps, "--reps"))
    runner, settings = _plan(args, seed)
    settings = {"experiment": args.experiment, **settings}
    manifest = manifest_for("simulate", seed, settings)

    logger.info(f"🎲 Running {args.experiment} with seed {seed}")
    t0 = time.perf_counter()
    table = runner()
    elapsed = time.perf_counter() - t0

    write_frame(storage, args.out, f"{args.experiment}.csv", table, manifest)
    write_json(storage, args.out, f"{args.experiment}.manifest.json", manifest.model_dump())
    write_json(
        storage, args.out, f"{args.experiment}.timings.json",
        {"manifest": manifest.model_dump(), "seconds": elapsed, "threads": config.THREADS},
    )
    logger.info(f"✅ {args.experiment} finished in {elapsed:.1f}s")
    return 0
