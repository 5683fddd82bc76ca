"""
Multi-modal VAE normative models: PoE, MoE and gPoE fusion plus the
uni-modal and concatenated baselines, their training loop and checkpoints.
"""

from .model import (
    ModalityEncoder,
    ModalityDecoder,
    MvaeModel,
    Reconstruction,
    encode,
    joint_posterior,
    elbo_joint,
    elbo_moe,
    model_loss,
    draw_noise,
    get_alpha,
    reconstruct,
    view_dims_for,
)
from .trainer import TrainingHistory, train, fine_tune, validation_split
from .checkpoint import LoadedModel, save_model, load_model

__all__ = [
    "ModalityEncoder",
    "ModalityDecoder",
    "MvaeModel",
    "Reconstruction",
    "encode",
    "joint_posterior",
    "elbo_joint",
    "elbo_moe",
    "model_loss",
    "draw_noise",
    "get_alpha",
    "reconstruct",
    "view_dims_for",
    "TrainingHistory",
    "train",
    "fine_tune",
    "validation_split",
    "LoadedModel",
    "save_model",
    "load_model",
]
