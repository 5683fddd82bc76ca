"""
normflux: multi-modal VAE normative modelling.

Learns a joint healthy-population distribution over several data modalities
with product-, mixture- or generalised-product-of-experts fusion, then scores
subjects with latent and feature-space deviation metrics.
"""

from .errors import NormfluxError, ConfigError, DataError, NumericError
from .schemas import FusionKind, CohortLabel, ModelConfig, SyntheticSpec, SignificanceResult
from .pipeline import TrainedModel, train_model, resume_model, fine_tune_model, score_cohort

__version__ = "0.1.0"

__all__ = [
    "NormfluxError",
    "ConfigError",
    "DataError",
    "NumericError",
    "FusionKind",
    "CohortLabel",
    "ModelConfig",
    "SyntheticSpec",
    "SignificanceResult",
    "TrainedModel",
    "train_model",
    "resume_model",
    "fine_tune_model",
    "score_cohort",
]
