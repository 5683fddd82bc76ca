"""
Model checkpoints.

A model checkpoint is a gradnet checkpoint whose arrays are the named model
parameters (plus ``best/``-prefixed copies of the best-validation snapshot)
and whose metadata carries the config, modality layout, optimizer state,
training history and the preprocessing statistics needed to score new data.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from pydantic import ValidationError

from ..data.preprocess import PreprocessStats
from ..errors import DataError
from ..gradnet import AdamState, load_checkpoint, save_checkpoint
from ..schemas import ModelConfig
from .model import MvaeModel
from .trainer import TrainingHistory

logger = logging.getLogger(__name__)

MODEL_KIND = "mvae"
BEST_PREFIX = "best/"


@dataclass
class LoadedModel:
    """Everything restored from a model checkpoint."""

    model: MvaeModel
    preprocess: Optional[PreprocessStats] = None
    history: Optional[TrainingHistory] = None
    feature_names: Dict[str, List[str]] = field(default_factory=dict)


def save_model(
    path: str | Path,
    model: MvaeModel,
    preprocess: Optional[PreprocessStats] = None,
    history: Optional[TrainingHistory] = None,
    feature_names: Optional[Dict[str, List[str]]] = None,
) -> Path:
    """
    Write ``model`` and its scoring context to ``path``.

    Args:
        path: Destination JSON file
        model: Model to save
        preprocess: Statistics that map raw features to model inputs
        history: Training history (enables resume)
        feature_names: Per-modality feature names, checked at scoring time
    """
    arrays = model.state_arrays()
    if history is not None and history.best_state is not None:
        arrays.update({BEST_PREFIX + name: a for name, a in history.best_state.items()})
    metadata = {
        "kind": MODEL_KIND,
        "config": model.config.model_dump(mode="json"),
        "modality_names": model.modality_names,
        "modality_dims": model.modality_dims,
        "epochs_trained": model.epochs_trained,
        "optimizer": model.optimizer_state.to_dict() if model.optimizer_state else None,
        "preprocess": preprocess.to_dict() if preprocess else None,
        "history": history.to_dict() if history else None,
        "feature_names": feature_names or {},
    }
    return save_checkpoint(path, arrays, metadata)


def load_model(path: str | Path) -> LoadedModel:
    """
    Restore a model saved by :func:`save_model`.

    Raises:
        FileNotFoundError: Missing checkpoint
        DataError: Foreign checkpoint or inconsistent contents
    """
    arrays, metadata = load_checkpoint(path)
    if metadata.get("kind") != MODEL_KIND:
        raise DataError(f"Checkpoint does not hold an mvae model: {path}")
    try:
        config = ModelConfig.model_validate(metadata["config"])
    except (KeyError, ValidationError) as e:
        raise DataError(f"Checkpoint config is invalid: {path}", str(e)) from e

    params = {k: v for k, v in arrays.items() if not k.startswith(BEST_PREFIX)}
    best = {k[len(BEST_PREFIX):]: v for k, v in arrays.items() if k.startswith(BEST_PREFIX)}
    model = MvaeModel.create(config, metadata["modality_names"], metadata["modality_dims"])
    try:
        model.load_state_arrays(params)
    except ValueError as e:
        raise DataError(f"Checkpoint parameters do not fit the model: {path}", str(e)) from e
    model.epochs_trained = int(metadata.get("epochs_trained", 0))
    if metadata.get("optimizer"):
        model.optimizer_state = AdamState.from_dict(metadata["optimizer"])

    history = None
    if metadata.get("history"):
        history = TrainingHistory.from_dict(metadata["history"], best_state=best or None)
    preprocess = PreprocessStats.from_dict(metadata["preprocess"]) if metadata.get("preprocess") else None
    logger.info(f"Loaded {model.name} model from {path} (epochs_trained={model.epochs_trained})")
    return LoadedModel(
        model=model,
        preprocess=preprocess,
        history=history,
        feature_names=dict(metadata.get("feature_names") or {}),
    )
