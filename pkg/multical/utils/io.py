"""Text formats for observations, images, chains and predictions.

Every CSV starts with ``# key: <json>`` header lines (the run manifest and any
per-file metadata such as a look vector) followed by a plain pandas CSV body.
Writers return text; the result store decides where it goes.
"""
import hashlib
import io
import json
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError

from multical import __version__
from multical.config import config
from multical.exceptions import DomainError
from multical.schemas.models import (
    CalibrationConfig,
    GridImage,
    MultiSourceDataset,
    ParameterState,
    PosteriorSamples,
    QuadtreeBox,
    QuadtreeImage,
    RunManifest,
    SourceObservations,
)

HEADER_PREFIX = "# "
GRID_COLUMNS = ["row", "col", "easting_m", "northing_m", "value"]
QUADTREE_COLUMNS = [
    "center_x", "center_y", "extent_x", "extent_y", "value", "n_pixels",
    "row0", "row1", "col0", "col1",
]


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, "value") and isinstance(getattr(value, "value"), str):
        return value.value
    return value


def canonical_json(data: Any) -> str:
    """Sorted, whitespace-free JSON used for hashing."""
    return json.dumps(_jsonable(data), sort_keys=True, separators=(",", ":"))


def pretty_json(data: Any) -> str:
    return json.dumps(_jsonable(data), sort_keys=True, indent=2) + "\n"


def config_hash(settings: Dict[str, Any]) -> str:
    """SHA-256 of the canonical JSON of the effective settings."""
    return hashlib.sha256(canonical_json(settings).encode("utf-8")).hexdigest()


def build_manifest(command: str, seed: Optional[int], settings: Dict[str, Any]) -> RunManifest:
    settings = _jsonable(settings)
    return RunManifest(
        version=__version__,
        command=command,
        seed=seed,
        config_hash=config_hash(settings),
        schema_version=config.CONFIG_SCHEMA_VERSION,
        settings=settings,
    )


def load_config(text: str) -> CalibrationConfig:
    """Parse and validate a JSON run configuration."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise DomainError(f"config is not valid JSON: {e}") from e
    try:
        cfg = CalibrationConfig.model_validate(raw)
    except ValidationError as e:
        raise DomainError(f"invalid config: {e}") from e
    if cfg.schema_version != config.CONFIG_SCHEMA_VERSION:
        raise DomainError(
            f"config schema_version {cfg.schema_version} is not supported "
            f"(expected {config.CONFIG_SCHEMA_VERSION})"
        )
    return cfg


# ------------------------------------------------------------------ CSV core


def render_header(meta: Optional[Dict[str, Any]]) -> str:
    if not meta:
        return ""
    return "".join(
        f"{HEADER_PREFIX}{key}: {canonical_json(value)}\n" for key, value in meta.items()
    )


def split_header(text: str) -> Tuple[Dict[str, Any], str]:
    """Header metadata and the CSV body of a text file."""
    meta: Dict[str, Any] = {}
    lines = text.splitlines(keepends=True)
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        key, _, value = lines[i][len(HEADER_PREFIX):].partition(":")
        try:
            meta[key.strip()] = json.loads(value.strip())
        except json.JSONDecodeError as e:
            raise DomainError(f"malformed header line {i + 1}: {e}") from e
        i += 1
    return meta, "".join(lines[i:])


def frame_to_csv(frame: pd.DataFrame, meta: Optional[Dict[str, Any]] = None) -> str:
    """Header lines followed by the frame as CSV with ``.`` decimals."""
    return render_header(meta) + frame.to_csv(index=False, lineterminator="\n")


def csv_to_frame(text: str) -> Tuple[pd.DataFrame, Dict[str, Any]]:
    meta, body = split_header(text)
    if not body.strip():
        raise DomainError("CSV has no data")
    return pd.read_csv(io.StringIO(body)), meta


def manifest_meta(manifest: Optional[RunManifest]) -> Dict[str, Any]:
    return {"manifest": manifest.model_dump()} if manifest is not None else {}


# -------------------------------------------------------------- observations


def observations_to_csv(src: SourceObservations, manifest: Optional[RunManifest] = None) -> str:
    """``x1..xp,y`` (plus ``w`` for weighted sources)."""
    frame = pd.DataFrame(src.inputs, columns=[f"x{t + 1}" for t in range(src.p)])
    frame["y"] = src.outputs
    if src.weights is not None:
        frame["w"] = src.weights
    meta = manifest_meta(manifest)
    meta["label"] = src.label
    if src.look_vector is not None:
        meta["look_vector"] = src.look_vector
    return frame_to_csv(frame, meta)


def observations_from_csv(text: str, label: Optional[str] = None) -> SourceObservations:
    frame, meta = csv_to_frame(text)
    x_cols = [c for c in frame.columns if c.startswith("x")]
    if not x_cols or "y" not in frame.columns:
        raise DomainError("observation CSV needs columns x1..xp and y")
    if frame[x_cols + ["y"]].isna().any().any():
        raise DomainError("observation CSV has missing values")
    try:
        return SourceObservations(
            inputs=frame[x_cols].to_numpy(dtype=float),
            outputs=frame["y"].to_numpy(dtype=float),
            weights=frame["w"].to_numpy(dtype=float) if "w" in frame.columns else None,
            look_vector=meta.get("look_vector"),
            label=label or meta.get("label", "source"),
        )
    except ValidationError as e:
        raise DomainError(f"invalid observations: {e}") from e


def dataset_from_texts(texts: List[str], labels: Optional[List[str]] = None) -> MultiSourceDataset:
    labels = labels or [None] * len(texts)
    return MultiSourceDataset(
        sources=[observations_from_csv(t, lab) for t, lab in zip(texts, labels)]
    )


# -------------------------------------------------------------------- images


def grid_to_csv(img: GridImage) -> Tuple[str, str]:
    """Pixel CSV (missing values empty) and its sidecar JSON."""
    rows, cols = np.indices(img.values.shape)
    rows, cols = rows.ravel(), cols.ravel()
    xy = img.coordinates(rows, cols)
    frame = pd.DataFrame(
        {
            "row": rows,
            "col": cols,
            "easting_m": xy[:, 0],
            "northing_m": xy[:, 1],
            "value": img.values.ravel(),
        }
    )
    sidecar = {
        "origin": list(img.origin),
        "spacing": list(img.spacing),
        "shape": list(img.values.shape),
        "look_vector": img.look_vector,
        "label": img.label,
    }
    return frame_to_csv(frame), pretty_json(sidecar)


def grid_from_csv(csv_text: str, sidecar_text: str) -> GridImage:
    frame, _ = csv_to_frame(csv_text)
    missing = [c for c in GRID_COLUMNS if c not in frame.columns]
    if missing:
        raise DomainError(f"grid CSV is missing columns {missing}")
    try:
        side = json.loads(sidecar_text)
    except json.JSONDecodeError as e:
        raise DomainError(f"grid sidecar is not valid JSON: {e}") from e
    shape = side.get("shape") or [int(frame["row"].max()) + 1, int(frame["col"].max()) + 1]
    values = np.full(tuple(shape), np.nan)
    values[frame["row"].to_numpy(int), frame["col"].to_numpy(int)] = frame["value"].to_numpy(float)
    try:
        return GridImage(
            origin=tuple(side.get("origin", (0.0, 0.0))),
            spacing=tuple(side.get("spacing", (1.0, 1.0))),
            values=values,
            look_vector=side.get("look_vector"),
            label=side.get("label", "image"),
        )
    except ValidationError as e:
        raise DomainError(f"invalid grid image: {e}") from e


def quadtree_to_csv(q: QuadtreeImage, manifest: Optional[RunManifest] = None) -> str:
    frame = pd.DataFrame(
        [
            {
                "center_x": b.center[0],
                "center_y": b.center[1],
                "extent_x": b.extent[0],
                "extent_y": b.extent[1],
                "value": b.value,
                "n_pixels": b.n_pixels,
                "row0": b.row0,
                "row1": b.row1,
                "col0": b.col0,
                "col1": b.col1,
            }
            for b in q.boxes
        ],
        columns=QUADTREE_COLUMNS,
    )
    meta = manifest_meta(manifest)
    meta.update({"label": q.label, "total_pixels": q.total_pixels})
    if q.look_vector is not None:
        meta["look_vector"] = q.look_vector
    return frame_to_csv(frame, meta)


def quadtree_from_csv(text: str) -> QuadtreeImage:
    frame, meta = csv_to_frame(text)
    boxes = [
        QuadtreeBox(
            center=(r.center_x, r.center_y),
            extent=(r.extent_x, r.extent_y),
            value=r.value,
            n_pixels=int(r.n_pixels),
            row0=int(getattr(r, "row0", 0)),
            row1=int(getattr(r, "row1", 0)),
            col0=int(getattr(r, "col0", 0)),
            col1=int(getattr(r, "col1", 0)),
        )
        for r in frame.itertuples(index=False)
    ]
    return QuadtreeImage(
        boxes=boxes,
        total_pixels=int(meta.get("total_pixels", sum(b.n_pixels for b in boxes))),
        look_vector=meta.get("look_vector"),
        label=meta.get("label", "quadtree"),
    )


# ------------------------------------------------------------- fit artifacts


def state_to_dict(state: ParameterState) -> Dict[str, Any]:
    return _jsonable(state.model_dump())


def state_from_dict(data: Dict[str, Any]) -> ParameterState:
    try:
        return ParameterState(**data)
    except (ValidationError, TypeError) as e:
        raise DomainError(f"invalid parameter state: {e}") from e


def chain_to_csv(samples: PosteriorSamples, manifest: Optional[RunManifest] = None) -> str:
    """One row per retained draw: parameter columns, log-posterior and chain index."""
    frame = pd.DataFrame(samples.draws, columns=samples.columns)
    frame["log_posterior"] = samples.log_posterior
    frame["chain"] = samples.chain
    return frame_to_csv(frame, manifest_meta(manifest))


def summary_document(
    summaries: pd.DataFrame, samples: PosteriorSamples, manifest: Optional[RunManifest] = None
) -> str:
    """JSON with per-parameter summaries, acceptance rates, seed and settings."""
    return pretty_json(
        {
            "manifest": manifest.model_dump() if manifest is not None else None,
            "parameters": {
                name: {k: float(v) for k, v in row.items()}
                for name, row in summaries.iterrows()
            },
            "acceptance": samples.acceptance,
            "seed": samples.seed,
            "settings": samples.settings.model_dump(),
            "n_draws": samples.n_draws,
        }
    )


def predictions_to_frame(
    x_star: np.ndarray, source: Optional[int], mean: np.ndarray, variance: np.ndarray, component: str
) -> pd.DataFrame:
    """``x1..xp,source,mean,variance,component`` with 1-based source labels."""
    x_star = np.atleast_2d(np.asarray(x_star, dtype=float))
    frame = pd.DataFrame(x_star, columns=[f"x{t + 1}" for t in range(x_star.shape[1])])
    frame["source"] = "" if source is None else str(source + 1)
    frame["mean"] = mean
    frame["variance"] = variance
    frame["component"] = component
    return frame
