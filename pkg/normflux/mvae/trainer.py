"""
Mini-batch training with early stopping.

Per-epoch randomness (shuffling and reparameterisation noise) is derived
from ``(seed, stream, epoch)``, so a run resumed from a checkpoint replays
exactly the epochs an uninterrupted run would have seen. Validation noise is
drawn once per run and reused every epoch.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from ..errors import DataError, NumericError
from ..gradnet import Adam, AdamState, no_grad
from ..schemas import FusionKind, ModelConfig
from .model import MvaeModel, draw_noise, get_alpha, model_loss

logger = logging.getLogger(__name__)

TRAIN_STREAM = 0
FINE_TUNE_STREAM = 1
_SPLIT_KEY = 7919
_VALIDATION_KEY = 0  # epochs are numbered from 1


@dataclass
class TrainingHistory:
    """Per-epoch losses, gPoE alpha trajectory and early-stopping state."""

    epochs: List[int] = field(default_factory=list)
    train_loss: List[float] = field(default_factory=list)
    val_loss: List[float] = field(default_factory=list)
    alpha: List[np.ndarray] = field(default_factory=list)
    best_epoch: Optional[int] = None
    best_val_loss: float = math.inf
    wait: int = 0
    stopped_early: bool = False
    best_state: Optional[Dict[str, np.ndarray]] = field(default=None, repr=False)

    @property
    def last_epoch(self) -> int:
        return self.epochs[-1] if self.epochs else 0

    def record(self, epoch: int, train_loss: float, val_loss: float, alpha: Optional[np.ndarray]) -> None:
        self.epochs.append(epoch)
        self.train_loss.append(train_loss)
        self.val_loss.append(val_loss)
        if alpha is not None:
            self.alpha.append(alpha)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"epoch": self.epochs, "train_loss": self.train_loss, "val_loss": self.val_loss}
        )

    def alpha_frame(self, modality_names: Sequence[str]) -> pd.DataFrame:
        """Long-form alpha trajectory: one row per (epoch, modality, latent)."""
        rows = []
        for epoch, alpha in zip(self.epochs, self.alpha):
            for m, name in enumerate(modality_names):
                for l, value in enumerate(alpha[m]):
                    rows.append({"epoch": epoch, "modality": name, "latent": l, "alpha": float(value)})
        return pd.DataFrame(rows, columns=["epoch", "modality", "latent", "alpha"])

    def to_dict(self) -> dict:
        return {
            "epochs": list(self.epochs),
            "train_loss": list(self.train_loss),
            "val_loss": list(self.val_loss),
            "alpha": [a.tolist() for a in self.alpha],
            "best_epoch": self.best_epoch,
            "best_val_loss": None if math.isinf(self.best_val_loss) else self.best_val_loss,
            "wait": self.wait,
            "stopped_early": self.stopped_early,
        }

    @classmethod
    def from_dict(cls, data: dict, best_state: Optional[Dict[str, np.ndarray]] = None) -> "TrainingHistory":
        best = data.get("best_val_loss")
        return cls(
            epochs=[int(e) for e in data.get("epochs", [])],
            train_loss=[float(v) for v in data.get("train_loss", [])],
            val_loss=[float(v) for v in data.get("val_loss", [])],
            alpha=[np.asarray(a, dtype=np.float64) for a in data.get("alpha", [])],
            best_epoch=data.get("best_epoch"),
            best_val_loss=math.inf if best is None else float(best),
            wait=int(data.get("wait", 0)),
            stopped_early=bool(data.get("stopped_early", False)),
            best_state=best_state,
        )


def validation_split(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seed-deterministic (train, validation) row indices, both sorted."""
    order = np.random.default_rng([seed, _SPLIT_KEY]).permutation(n)
    n_val = min(n - 1, max(1, int(round(fraction * n))))
    return np.sort(order[n_val:]), np.sort(order[:n_val])


def _as_matrices(model: MvaeModel, data: Sequence[np.ndarray]) -> List[np.ndarray]:
    matrices = [np.atleast_2d(np.asarray(x, dtype=np.float64)) for x in data]
    if matrices and matrices[0].shape[0] == 0:
        raise DataError("Training cohort is empty")
    try:
        model.views(matrices)
    except ValueError as e:
        raise DataError("Training data does not match the model", str(e)) from e
    if matrices[0].shape[0] < 2:
        raise DataError("At least two subjects are needed to hold out a validation split")
    return matrices


def _fit(
    model: MvaeModel,
    data: Sequence[np.ndarray],
    config: ModelConfig,
    n_epochs: int,
    stream: int,
    history: TrainingHistory,
    optimizer_state: Optional[AdamState],
) -> TrainingHistory:
    matrices = _as_matrices(model, data)
    n = matrices[0].shape[0]
    train_rows, val_rows = validation_split(n, config.validation_fraction, config.seed)
    train_X = [x[train_rows] for x in matrices]
    val_X = [x[val_rows] for x in matrices]
    n_train = len(train_rows)

    batch_size = config.batch_size
    if batch_size > n_train:
        logger.warning(f"batch_size {batch_size} exceeds {n_train} training subjects; clamping")
        batch_size = n_train

    optimizer = Adam(model.parameters(), config.learning_rate)
    if optimizer_state is not None:
        optimizer.state = optimizer_state
        optimizer.state.learning_rate = config.learning_rate
    val_noise = draw_noise(model, len(val_rows), np.random.default_rng([config.seed, stream, _VALIDATION_KEY]))

    start = history.last_epoch
    logger.info(
        f"Training {model.name}: {n_train} train / {len(val_rows)} validation subjects, "
        f"epochs {start + 1}..{start + n_epochs}, batch={batch_size}, lr={config.learning_rate}"
    )
    for epoch in range(start + 1, start + n_epochs + 1):
        rng = np.random.default_rng([config.seed, stream, epoch])
        order = rng.permutation(n_train)
        total = 0.0
        for lo in range(0, n_train, batch_size):
            rows = order[lo:lo + batch_size]
            loss = model_loss(model, [x[rows] for x in train_X], draw_noise(model, len(rows), rng))
            value = loss.item()
            if not math.isfinite(value):
                raise NumericError(f"Non-finite training loss at epoch {epoch}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += value * len(rows)
        train_loss = total / n_train

        with no_grad():
            val_loss = model_loss(model, val_X, val_noise).item()
        if not math.isfinite(val_loss):
            raise NumericError(f"Non-finite validation loss at epoch {epoch}")

        alpha = get_alpha(model).alpha.copy() if model.fusion == FusionKind.GPOE else None
        history.record(epoch, train_loss, val_loss, alpha)
        if stream == TRAIN_STREAM:
            model.epochs_trained = epoch

        if val_loss < history.best_val_loss:
            history.best_val_loss = val_loss
            history.best_epoch = epoch
            history.wait = 0
            history.best_state = model.state_arrays()
        else:
            history.wait += 1

        logger.debug(f"epoch {epoch}: train={train_loss:.6f} val={val_loss:.6f} wait={history.wait}")
        if epoch % config.log_every == 0:
            logger.info(f"Epoch {epoch}: train_loss={train_loss:.4f} val_loss={val_loss:.4f}")

        if history.wait >= config.early_stopping_patience:
            history.stopped_early = True
            logger.info(
                f"Early stopping at epoch {epoch}; best epoch {history.best_epoch} "
                f"(val_loss={history.best_val_loss:.4f})"
            )
            break

    model.optimizer_state = optimizer.state
    if config.restore_best and history.best_state is not None and history.best_epoch != history.last_epoch:
        model.load_state_arrays(history.best_state)
        logger.info(f"Restored parameters from epoch {history.best_epoch}")
    return history


def train(
    model: MvaeModel,
    healthy_data: Sequence[np.ndarray],
    config: Optional[ModelConfig] = None,
    history: Optional[TrainingHistory] = None,
) -> TrainingHistory:
    """
    Train on healthy subjects until ``max_epochs`` or early stopping.

    A model loaded from a checkpoint continues from ``epochs_trained`` with
    its stored optimizer state; pass the stored history to carry the
    early-stopping state over.

    Args:
        model: Model to optimise in place
        healthy_data: Per-modality matrices (already preprocessed)
        config: Training hyperparameters (defaults to ``model.config``)
        history: History of an interrupted run

    Returns:
        TrainingHistory covering every epoch trained so far

    Raises:
        DataError: Empty or mismatched data
        NumericError: Non-finite loss
    """
    config = config or model.config
    if history is None:
        history = TrainingHistory()
        if model.epochs_trained:
            raise DataError(
                f"Model has trained {model.epochs_trained} epochs; pass its history to resume"
            )
    if history.last_epoch != model.epochs_trained:
        raise DataError(
            f"History ends at epoch {history.last_epoch} but the model has trained {model.epochs_trained}"
        )
    if history.stopped_early:
        logger.info(f"{model.name} already stopped early at epoch {history.last_epoch}; nothing to do")
        return history
    remaining = max(0, config.max_epochs - model.epochs_trained)
    if remaining == 0:
        return history
    return _fit(model, healthy_data, config, remaining, TRAIN_STREAM, history, model.optimizer_state)


def fine_tune(
    model: MvaeModel,
    new_healthy_data: Sequence[np.ndarray],
    max_epochs: Optional[int] = None,
    config: Optional[ModelConfig] = None,
) -> TrainingHistory:
    """
    Continue optimisation on a new healthy cohort.

    Fresh optimizer state at the same learning rate and the same
    early-stopping rule; ``max_epochs`` defaults to
    ``config.fine_tune_max_epochs``. ``max_epochs=0`` leaves the model
    untouched.
    """
    config = config or model.config
    max_epochs = config.fine_tune_max_epochs if max_epochs is None else max_epochs
    if max_epochs < 0:
        raise ValueError(f"max_epochs must be >= 0, got {max_epochs}")
    if max_epochs == 0:
        return TrainingHistory()
    return _fit(model, new_healthy_data, config, max_epochs, FINE_TUNE_STREAM, TrainingHistory(), None)
