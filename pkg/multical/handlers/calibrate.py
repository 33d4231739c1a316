"""`calibrate` command: maximum likelihood or posterior sampling."""
import argparse
import logging
import time
from typing import Any, Dict, Optional

from pydantic import ValidationError

from multical.config import config
from multical.exceptions import DomainError
from multical.handlers.common import (
    manifest_for,
    output_name,
    read_input,
    require,
    write_frame,
    write_json,
)
from multical.schemas.models import (
    CalibrationConfig,
    DiscrepancyMode,
    KernelFamily,
    McmcSettings,
    ModelType,
)
from multical.services.forward import available_models, get_forward_model
from multical.services.inference import mcmc_run, mle_fit, posterior_summaries
from multical.services.problem import problem_from_config
from multical.storage import ResultStore
from multical.utils.io import (
    chain_to_csv,
    dataset_from_texts,
    load_config,
    state_to_dict,
    summary_document,
)
from multical.utils.validators import (
    validate_chain_settings,
    validate_seed,
    validate_theta_bounds,
)

logger = logging.getLogger(__name__)

# flag dest -> CalibrationConfig field
OVERRIDES = {
    "model": "model",
    "model_type": "model_type",
    "forward": "forward",
    "mode": "mode",
    "kernel": "kernel",
    "bias_kernel": "bias_kernel",
    "sgasp_c": "sgasp_c",
    "estimate_mean": "estimate_mean",
    "fixed_tau2": "fixed_tau2",
    "starts": "n_starts",
    "samples": "samples",
    "burnin": "burn_in",
    "thin": "thin",
    "chains": "n_chains",
    "seed": "seed",
}


def register(subparsers) -> None:
    parser = subparsers.add_parser("calibrate", help="Calibrate a forward model to field data")
    parser.add_argument("--data", nargs="+", required=True, help="Observation CSVs, one per source")
    parser.add_argument("--config", help="JSON run configuration; flags override it")
    parser.add_argument("--model", choices=[m.value for m in DiscrepancyMode])
    parser.add_argument("--model-type", choices=[m.value for m in ModelType])
    parser.add_argument("--forward", choices=available_models())
    parser.add_argument("--mode", choices=["mle", "mcmc"])
    parser.add_argument("--kernel", choices=[f.value for f in KernelFamily])
    parser.add_argument("--bias-kernel", choices=[f.value for f in KernelFamily])
    parser.add_argument("--sgasp-c", type=float, help="lambda_z = C * sqrt(n)")
    parser.add_argument(
        "--estimate-mean", action=argparse.BooleanOptionalAction, default=None,
        help="Estimate per-source means (default) or fix them at zero",
    )
    parser.add_argument("--fixed-tau2", type=float, help="Hold the discrepancy variance fixed")
    parser.add_argument("--starts", type=int, help="Optimizer starts")
    parser.add_argument("--samples", type=int, help="MCMC iterations including burn-in")
    parser.add_argument("--burnin", type=int)
    parser.add_argument("--thin", type=int)
    parser.add_argument("--chains", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", default="calibrate", help="Output prefix in the results store")
    parser.set_defaults(handler=handle)


def _defaults() -> Dict[str, Any]:
    return {
        "schema_version": config.CONFIG_SCHEMA_VERSION,
        "sgasp_c": config.SGASP_C,
        "n_starts": config.MLE_STARTS,
        "samples": config.MCMC_SAMPLES,
        "burn_in": config.MCMC_BURN_IN,
        "thin": config.MCMC_THIN,
        "seed": config.DEFAULT_SEED,
    }


def effective_config(args: argparse.Namespace) -> CalibrationConfig:
    """Config file (or environment defaults) with command-line flags applied on top."""
    if args.config:
        merged = load_config(read_input(args.config)).model_dump()
    else:
        merged = _defaults()
    for dest, field in OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is not None:
            merged[field] = value
    try:
        cfg = CalibrationConfig.model_validate(merged)
    except ValidationError as e:
        raise DomainError(f"invalid calibration settings: {e}") from e
    require(validate_seed(cfg.seed))
    require(validate_chain_settings(cfg.samples, cfg.burn_in, cfg.thin))
    if cfg.theta_bounds is not None:
        n_params = get_forward_model(cfg.forward).n_params
        ok, bounds, err = validate_theta_bounds(cfg.theta_bounds, n_params)
        require((ok, err))
        cfg = cfg.model_copy(update={"theta_bounds": bounds})
    return cfg


def fit_document(
    cfg: CalibrationConfig, data: list, states: list, deltas: Optional[list], manifest
) -> Dict[str, Any]:
    return {
        "manifest": manifest.model_dump(),
        "config": cfg.model_dump(mode="json"),
        "data": data,
        "states": [state_to_dict(s) for s in states],
        "deltas": deltas,
    }


def handle(args: argparse.Namespace, storage: ResultStore) -> int:
    cfg = effective_config(args)
    ds = dataset_from_texts([read_input(p) for p in args.data])
    problem = problem_from_config(cfg, ds)
    settings = {"config": cfg.model_dump(mode="json"), "data": list(args.data)}
    manifest = manifest_for("calibrate", cfg.seed, settings)
    t0 = time.perf_counter()

    if cfg.mode == "mle":
        result = mle_fit(problem, n_starts=cfg.n_starts, seed=cfg.seed)
        write_json(
            storage,
            args.out,
            "mle.json",
            {
                "manifest": manifest.model_dump(),
                "log_likelihood": result.log_likelihood,
                "state": state_to_dict(result.state),
                "columns": problem.column_names,
                "estimate": problem.natural_values(result.state),
                "starts": [s.model_dump() for s in result.starts],
            },
        )
        doc = fit_document(cfg, list(args.data), [result.state], None, manifest)
    else:
        mcmc = McmcSettings(
            n_samples=cfg.samples,
            burn_in=cfg.burn_in,
            thin=cfg.thin,
            seed=cfg.seed,
            n_chains=cfg.n_chains,
            adapt_target=config.ADAPT_TARGET,
        )
        samples = mcmc_run(problem, mcmc)
        summaries = posterior_summaries(samples)
        storage.write_text(output_name(args.out, "chain.csv"), chain_to_csv(samples, manifest))
        storage.write_text(
            output_name(args.out, "summary.json"), summary_document(summaries, samples, manifest)
        )
        write_frame(storage, args.out, "summary.csv", summaries.reset_index(names="parameter"), manifest)
        doc = fit_document(
            cfg, list(args.data), samples.states, samples.delta_draws.tolist(), manifest
        )

    write_json(storage, args.out, "fit.json", doc)
    write_json(
        storage,
        args.out,
        "timings.json",
        {"manifest": manifest.model_dump(), "seconds": time.perf_counter() - t0},
    )
    logger.info(f"✅ Calibration ({cfg.mode}) finished")
    return 0
