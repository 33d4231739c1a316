"""Source alignment, stacking, and uniform or quadtree downsampling."""
import logging
from typing import List, Optional, Tuple

import numpy as np

from multical.exceptions import AlignmentError, DomainError, EmptyResultError
from multical.schemas.models import (
    GridImage,
    MultiSourceDataset,
    QuadtreeBox,
    QuadtreeImage,
    SourceObservations,
)

logger = logging.getLogger(__name__)


def validate_alignment(ds: MultiSourceDataset) -> bool:
    """True iff every source has exactly the same input matrix; sets ``ds.aligned``."""
    if ds.k == 0:
        raise DomainError("dataset has no sources")
    first = ds.sources[0].inputs
    aligned = all(
        s.inputs.shape == first.shape and np.array_equal(s.inputs, first) for s in ds.sources[1:]
    )
    ds.aligned = aligned
    if not aligned:
        logger.debug(f"Dataset with {ds.k} sources is not aligned")
    return aligned


def _shared_look_vector(sources: List[SourceObservations]) -> Optional[np.ndarray]:
    looks = [s.look_vector for s in sources]
    if any(v is None for v in looks):
        return None
    if all(np.array_equal(v, looks[0]) for v in looks[1:]):
        return looks[0]
    return None


def stack_sources(ds: MultiSourceDataset) -> SourceObservations:
    """Pointwise mean of aligned sources."""
    if not validate_alignment(ds):
        raise AlignmentError("stacking requires aligned sources")
    outputs = np.mean(ds.outputs, axis=0)
    weights = ds.sources[0].weights
    logger.info(f"📊 Stacked {ds.k} sources of {ds.n} observations")
    return SourceObservations(
        inputs=ds.inputs.copy(),
        outputs=outputs,
        look_vector=_shared_look_vector(ds.sources),
        weights=None if weights is None else weights.copy(),
        label="stack",
    )


def grid_to_observations(img: GridImage) -> SourceObservations:
    """Every observed pixel as one observation, in raster order."""
    rows, cols = np.nonzero(img.mask)
    if rows.size == 0:
        raise EmptyResultError(f"image {img.label!r} has no observed pixels")
    return SourceObservations(
        inputs=img.coordinates(rows, cols),
        outputs=img.values[rows, cols],
        look_vector=img.look_vector,
        label=img.label,
    )


def _sample_pixels(mask: np.ndarray, m: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    flat = np.flatnonzero(mask)
    if m < 1:
        raise DomainError(f"m must be positive, got {m}")
    if m > flat.size:
        raise DomainError(f"cannot sample {m} pixels from {flat.size} observed pixels")
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(flat, size=m, replace=False))
    return np.unravel_index(chosen, mask.shape)


def uniform_subsample(img: GridImage, m: int, seed: int) -> SourceObservations:
    """``m`` distinct observed pixels drawn without replacement."""
    rows, cols = _sample_pixels(img.mask, m, seed)
    logger.info(f"Uniformly sampled {m} pixels from {img.label!r}")
    return SourceObservations(
        inputs=img.coordinates(rows, cols),
        outputs=img.values[rows, cols],
        look_vector=img.look_vector,
        label=img.label,
    )


def aligned_uniform_subsample(images: List[GridImage], m: int, seed: int) -> MultiSourceDataset:
    """One set of pixel positions, observed in every image, shared by all sources."""
    if not images:
        raise DomainError("no images supplied")
    ref = images[0]
    for img in images[1:]:
        if (
            img.values.shape != ref.values.shape
            or tuple(img.origin) != tuple(ref.origin)
            or tuple(img.spacing) != tuple(ref.spacing)
        ):
            raise AlignmentError(f"image {img.label!r} is not on the grid of {ref.label!r}")

    common = np.logical_and.reduce([img.mask for img in images])
    rows, cols = _sample_pixels(common, m, seed)
    coords = ref.coordinates(rows, cols)
    sources = [
        SourceObservations(
            inputs=coords.copy(),
            outputs=img.values[rows, cols],
            look_vector=img.look_vector,
            label=img.label,
        )
        for img in images
    ]
    ds = MultiSourceDataset(sources=sources)
    validate_alignment(ds)
    return ds


def quadtree_downsample(
    img: GridImage,
    split_threshold: float,
    min_box: int,
    max_box: int,
) -> QuadtreeImage:
    """Recursive 4-way split on within-box value range.

    A box splits when its observed range exceeds ``split_threshold`` and a side
    is longer than ``min_box``, and always when a side is longer than
    ``max_box``. Box values are means of observed pixels; fully missing boxes
    are dropped.
    """
    if split_threshold <= 0:
        raise DomainError("split_threshold must be positive")
    if min_box < 1 or max_box < 1 or min_box > max_box:
        raise DomainError(f"need 1 <= min_box <= max_box, got {min_box}, {max_box}")

    values = img.values
    mask = img.mask
    if not mask.any():
        raise EmptyResultError(f"image {img.label!r} is fully missing")

    boxes: List[QuadtreeBox] = []

    def visit(r0: int, r1: int, c0: int, c1: int) -> None:
        block_mask = mask[r0:r1, c0:c1]
        if not block_mask.any():
            return
        block = values[r0:r1, c0:c1][block_mask]
        nr, nc = r1 - r0, c1 - c0
        splittable = nr > min_box or nc > min_box
        must_split = nr > max_box or nc > max_box
        value_range = float(block.max() - block.min())

        if must_split or (splittable and value_range > split_threshold):
            rm = r0 + nr // 2 if nr > 1 else r1
            cm = c0 + nc // 2 if nc > 1 else c1
            for ra, rb in ((r0, rm), (rm, r1)):
                for ca, cb in ((c0, cm), (cm, c1)):
                    if rb > ra and cb > ca:
                        visit(ra, rb, ca, cb)
            return

        center = (
            img.origin[0] + 0.5 * (c0 + c1 - 1) * img.spacing[0],
            img.origin[1] + 0.5 * (r0 + r1 - 1) * img.spacing[1],
        )
        boxes.append(
            QuadtreeBox(
                center=center,
                extent=(nc * img.spacing[0], nr * img.spacing[1]),
                value=float(np.mean(block)),
                n_pixels=int(block.size),
                row0=r0,
                row1=r1,
                col0=c0,
                col1=c1,
            )
        )

    visit(0, values.shape[0], 0, values.shape[1])
    total = int(mask.sum())
    logger.info(f"📊 Quadtree reduced {total} pixels of {img.label!r} to {len(boxes)} boxes")
    return QuadtreeImage(
        boxes=boxes, total_pixels=total, look_vector=img.look_vector, label=img.label
    )


def quadtree_weights(q: QuadtreeImage) -> np.ndarray:
    """Likelihood weights ``w_j = n_j``."""
    if not q.boxes:
        raise EmptyResultError("quadtree has no boxes")
    return np.array([b.n_pixels for b in q.boxes], dtype=float)


def quadtree_to_observations(q: QuadtreeImage, label: Optional[str] = None) -> SourceObservations:
    """Box centres as inputs, box values as outputs, pixel counts as weights."""
    weights = quadtree_weights(q)
    return SourceObservations(
        inputs=np.array([b.center for b in q.boxes], dtype=float),
        outputs=np.array([b.value for b in q.boxes], dtype=float),
        look_vector=q.look_vector,
        weights=weights,
        label=label or q.label,
    )
