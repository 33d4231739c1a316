"""Helpers shared by command handlers."""
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import pandas as pd

from multical.exceptions import DomainError
from multical.schemas.models import RunManifest
from multical.storage import ResultStore
from multical.utils.io import build_manifest, frame_to_csv, manifest_meta, pretty_json
from multical.utils.validators import validate_label

logger = logging.getLogger(__name__)


def read_input(path: str) -> str:
    """UTF-8 contents of an input file."""
    try:
        return Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DomainError(f"input file not found: {path}")
    except UnicodeDecodeError as e:
        raise DomainError(f"input file {path} is not UTF-8: {e}") from e


def require(check: Tuple) -> None:
    """Raise DomainError when a validator tuple reports failure."""
    if not check[0]:
        raise DomainError(check[-1])


def output_name(prefix: str, name: str) -> str:
    """``prefix/name`` after checking both parts are plain labels."""
    require(validate_label(prefix))
    require(validate_label(name))
    return f"{prefix}/{name}"


def write_frame(
    storage: ResultStore,
    prefix: str,
    name: str,
    frame: pd.DataFrame,
    manifest: Optional[RunManifest] = None,
) -> str:
    written = storage.write_text(output_name(prefix, name), frame_to_csv(frame, manifest_meta(manifest)))
    logger.info(f"💾 {written}: {len(frame)} rows")
    return written


def write_json(storage: ResultStore, prefix: str, name: str, data: Any) -> str:
    written = storage.write_text(output_name(prefix, name), pretty_json(data))
    logger.info(f"💾 {written}")
    return written


def manifest_for(command: str, seed: Optional[int], settings: Dict[str, Any]) -> RunManifest:
    manifest = build_manifest(command, seed, settings)
    logger.debug(f"Manifest for {command}: hash {manifest.config_hash}")
    return manifest
