"""
Pytest configuration and fixtures.
"""

import os
import sys

import numpy as np
import pytest

# Add project root to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from normflux.data import generate_synthetic
from normflux.schemas import FusionKind, ModelConfig, SyntheticSpec


@pytest.fixture
def rng():
    """Seeded generator for test inputs."""
    return np.random.default_rng(12345)


@pytest.fixture
def small_spec():
    """Two small modalities, a shift on the first latent."""
    return SyntheticSpec(
        n_train=150,
        n_holdout=60,
        n_disease=40,
        latent_true=3,
        features=[6, 5],
        modality_names=["t1", "dti"],
        noise_std=[0.3, 0.3],
        disease_shift=3.0,
        shifted_latents=[0],
        seed=3,
    )


@pytest.fixture
def small_cohort(small_spec):
    return generate_synthetic(small_spec)


def tiny_config(**overrides) -> ModelConfig:
    """Small, fast-training model configuration."""
    fields = dict(
        latent_dim=2,
        fusion=FusionKind.GPOE,
        max_epochs=4,
        batch_size=32,
        learning_rate=5e-3,
        early_stopping_patience=50,
        encoder_layers=[8, 6],
        decoder_layers=[6, 8],
        log_every=1000,
        seed=0,
    )
    fields.update(overrides)
    return ModelConfig(**fields)


@pytest.fixture
def make_config():
    """Factory for small model configs: ``make_config(fusion=FusionKind.POE)``."""
    return tiny_config
