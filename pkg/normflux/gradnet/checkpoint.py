"""
Parameter checkpoints.

JSON documents with a versioned header and named ``{shape, values}``
entries. Python's float repr round-trips exactly, so save → load restores
bit-identical parameters.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from ..errors import DataError

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "normflux.gradnet"
CHECKPOINT_VERSION = 1


def encode_array(array: np.ndarray) -> dict:
    array = np.asarray(array, dtype=np.float64)
    return {"shape": list(array.shape), "values": array.reshape(-1).tolist()}


def decode_array(entry: Mapping[str, Any]) -> np.ndarray:
    values = np.asarray(entry["values"], dtype=np.float64)
    shape = tuple(int(n) for n in entry["shape"])
    if values.size != int(np.prod(shape, dtype=np.int64)):
        raise DataError(f"Checkpoint entry has {values.size} values for shape {shape}")
    return values.reshape(shape)


def save_checkpoint(
    path: str | Path,
    arrays: Mapping[str, np.ndarray],
    metadata: Mapping[str, Any] | None = None,
) -> Path:
    """
    Write named arrays and free-form metadata to ``path``.

    Args:
        path: Destination file
        arrays: Name → array
        metadata: JSON-serialisable extras (config, preprocessing, history...)

    Returns:
        The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "arrays": {name: encode_array(a) for name, a in arrays.items()},
        "metadata": dict(metadata or {}),
    }
    path.write_text(json.dumps(document, indent=1, allow_nan=False), encoding="utf-8")
    logger.info(f"Checkpoint written: {path} ({len(arrays)} arrays)")
    return path


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    """
    Read a checkpoint written by :func:`save_checkpoint`.

    Returns:
        (arrays, metadata)

    Raises:
        FileNotFoundError: If the file is missing
        DataError: On a foreign format or unsupported version
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DataError(f"Checkpoint is not valid JSON: {path}", str(e)) from e
    if document.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"Not a normflux checkpoint: {path}")
    if document.get("version") != CHECKPOINT_VERSION:
        raise DataError(
            f"Unsupported checkpoint version {document.get('version')}",
            f"expected {CHECKPOINT_VERSION}",
        )
    arrays = {name: decode_array(entry) for name, entry in document["arrays"].items()}
    return arrays, document.get("metadata", {})
