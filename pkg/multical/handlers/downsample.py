"""`downsample` command: uniform or quadtree reduction of gridded images."""
import argparse
import logging
from pathlib import Path
from typing import List

import numpy as np

from multical.config import config
from multical.exceptions import DomainError
from multical.handlers.common import manifest_for, output_name, read_input, require
from multical.schemas.models import GridImage
from multical.services.data import (
    aligned_uniform_subsample,
    quadtree_downsample,
    quadtree_to_observations,
    uniform_subsample,
)
from multical.storage import ResultStore
from multical.utils.io import grid_from_csv, observations_to_csv, quadtree_to_csv
from multical.utils.validators import validate_downsample_args, validate_seed

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("downsample", help="Reduce gridded images to observations")
    parser.add_argument(
        "--image", nargs="+", required=True,
        help="Pixel CSVs, each with a sidecar of the same name ending in .json",
    )
    parser.add_argument("--method", choices=["uniform", "quadtree"], required=True)
    parser.add_argument("--m", type=int, help="Pixels per image for uniform sampling")
    parser.add_argument("--threshold", type=float, help="Value range that triggers a split")
    parser.add_argument("--min-box", type=int, default=1, help="Smallest box side (pixels)")
    parser.add_argument("--max-box", type=int, default=64, help="Largest box side (pixels)")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument(
        "--independent",
        action="store_true",
        help="Sample each image on its own pixels instead of one shared set",
    )
    parser.add_argument("--out", default="downsample", help="Output prefix in the results store")
    parser.set_defaults(handler=handle)


def _load_images(paths: List[str]) -> List[GridImage]:
    images = []
    for path in paths:
        sidecar = Path(path).with_suffix(".json")
        if not sidecar.exists():
            raise DomainError(f"missing sidecar JSON for {path} (expected {sidecar})")
        images.append(grid_from_csv(read_input(path), read_input(str(sidecar))))
    return images


def handle(args: argparse.Namespace, storage: ResultStore) -> int:
    require(
        validate_downsample_args(args.method, args.m, args.threshold, args.min_box, args.max_box)
    )
    seed = config.DEFAULT_SEED if args.seed is None else args.seed
    require(validate_seed(seed))
    images = _load_images(args.image)
    settings = {
        "images": list(args.image),
        "method": args.method,
        "m": args.m,
        "threshold": args.threshold,
        "min_box": args.min_box,
        "max_box": args.max_box,
        "independent": args.independent,
    }
    manifest = manifest_for("downsample", seed, settings)

    if args.method == "uniform":
        if len(images) > 1 and not args.independent:
            sources = aligned_uniform_subsample(images, args.m, seed).sources
        elif len(images) == 1:
            sources = [uniform_subsample(images[0], args.m, seed)]
        else:
            children = np.random.SeedSequence(seed).spawn(len(images))
            sources = [
                uniform_subsample(img, args.m, int(child.generate_state(1)[0]))
                for img, child in zip(images, children)
            ]
        for img, src in zip(images, sources):
            storage.write_text(
                output_name(args.out, f"{img.label}.csv"), observations_to_csv(src, manifest)
            )
    else:
        for img in images:
            q = quadtree_downsample(img, args.threshold, args.min_box, args.max_box)
            storage.write_text(
                output_name(args.out, f"{img.label}.quadtree.csv"), quadtree_to_csv(q, manifest)
            )
            storage.write_text(
                output_name(args.out, f"{img.label}.csv"),
                observations_to_csv(quadtree_to_observations(q, img.label), manifest),
            )
    logger.info(f"✅ Downsampled {len(images)} image(s) with {args.method}")
    return 0
