"""`verify` command: run the dense-oracle identity suites."""
import argparse
import logging

import pandas as pd

from multical.exceptions import EXIT_NUMERICAL, EXIT_OK
from multical.handlers.common import manifest_for, write_frame
from multical.services.verify import run_suites
from multical.storage import ResultStore

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("verify", help="Check the engine against dense oracles")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--cases", type=int, default=100, help="Random instances per suite")
    parser.add_argument("--out", default="verify", help="Output prefix in the results store")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace, storage: ResultStore) -> int:
    results = run_suites(seed=args.seed, n_cases=args.cases)
    frame = pd.DataFrame([r.model_dump() for r in results])
    manifest = manifest_for("verify", args.seed, {"cases": args.cases})
    write_frame(storage, args.out, "verify.csv", frame, manifest)
    failed = [r.name for r in results if not r.passed]
    if failed:
        logger.error(f"❌ Suites failed: {', '.join(failed)}")
        return EXIT_NUMERICAL
    logger.info(f"✅ All {len(results)} suites passed")
    return EXIT_OK
