"""`predict` command: predictive means and variances at new inputs."""
import argparse
import json
import logging

import numpy as np
from pydantic import ValidationError

from multical.exceptions import DomainError
from multical.handlers.common import manifest_for, read_input, write_frame
from multical.schemas.models import CalibrationConfig
from multical.services.predict import COMPONENTS, Predictor
from multical.services.problem import problem_from_config
from multical.storage import ResultStore
from multical.utils.io import csv_to_frame, dataset_from_texts, predictions_to_frame, state_from_dict

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("predict", help="Predict from a stored calibration")
    parser.add_argument("--fit", required=True, help="Name of a fit.json in the results store")
    parser.add_argument("--at", required=True, help="CSV of new inputs (x1..xp)")
    parser.add_argument("--component", choices=COMPONENTS, default="reality")
    parser.add_argument("--source", type=int, help="1-based source for bias and field predictions")
    parser.add_argument("--out", default="predict", help="Output prefix in the results store")
    parser.set_defaults(handler=handle)


def load_fit(text: str):
    try:
        doc = json.loads(text)
        cfg = CalibrationConfig.model_validate(doc["config"])
    except (json.JSONDecodeError, KeyError, ValidationError) as e:
        raise DomainError(f"unreadable fit document: {e}") from e
    states = [state_from_dict(s) for s in doc.get("states", [])]
    deltas = doc.get("deltas")
    if deltas is not None:
        deltas = [np.asarray(d, dtype=float) for d in deltas]
    return doc, cfg, states, deltas


def handle(args: argparse.Namespace, storage: ResultStore) -> int:
    doc, cfg, states, deltas = load_fit(storage.read_text(args.fit))
    ds = dataset_from_texts([read_input(p) for p in doc["data"]])
    problem = problem_from_config(cfg, ds)

    frame, _ = csv_to_frame(read_input(args.at))
    x_cols = [c for c in frame.columns if c.startswith("x")]
    if not x_cols:
        raise DomainError("prediction inputs need columns x1..xp")
    x_star = frame[x_cols].to_numpy(dtype=float)

    source = None if args.source is None else args.source - 1
    if source is not None and not 0 <= source < ds.k:
        raise DomainError(f"--source must lie in 1..{ds.k}")
    mean, var = Predictor(problem, states, deltas).predict(x_star, args.component, source)

    manifest = manifest_for(
        "predict",
        cfg.seed,
        {"fit": args.fit, "at": args.at, "component": args.component, "source": args.source},
    )
    out = predictions_to_frame(x_star, source, mean, var, args.component)
    write_frame(storage, args.out, "predictions.csv", out, manifest)
    logger.info(f"✅ Predicted {args.component} at {len(x_star)} inputs from {len(states)} state(s)")
    return 0
