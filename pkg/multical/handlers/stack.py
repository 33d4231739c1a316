"""`stack` command: pointwise mean of aligned sources."""
import argparse
import logging

from multical.handlers.common import manifest_for, output_name, read_input
from multical.services.data import stack_sources, validate_alignment
from multical.storage import ResultStore
from multical.utils.io import dataset_from_texts, observations_to_csv

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("stack", help="Average aligned sources pointwise")
    parser.add_argument("--data", nargs="+", required=True, help="Observation CSVs (x1..xp,y)")
    parser.add_argument("--out", default="stack", help="Output prefix in the results store")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace, storage: ResultStore) -> int:
    ds = dataset_from_texts([read_input(p) for p in args.data])
    validate_alignment(ds)
    stacked = stack_sources(ds)
    manifest = manifest_for("stack", None, {"data": list(args.data)})
    storage.write_text(output_name(args.out, "stack.csv"), observations_to_csv(stacked, manifest))
    logger.info(f"✅ Stacked {ds.k} sources")
    return 0
