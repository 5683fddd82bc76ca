"""
Pydantic schemas.

Validated records shared across modules: model and synthetic-cohort
configuration, evaluation results, and the metadata sidecars written next to
cohorts and reports.
"""

from __future__ import annotations

import math
from enum import Enum
from typing import Optional, List, Dict

from pydantic import BaseModel, ConfigDict, Field, model_validator


class FusionKind(str, Enum):
    """How per-modality experts are combined into the joint posterior."""
    POE = "poe"
    MOE = "moe"
    GPOE = "gpoe"
    UNIMODAL = "unimodal"
    CONCAT = "concat"


class CohortLabel(str, Enum):
    """Role of a subject in the normative analysis."""
    HEALTHY_TRAIN = "healthy_train"
    HEALTHY_HOLDOUT = "healthy_holdout"
    DISEASE = "disease"


class ModelConfig(BaseModel):
    """Model architecture and training hyperparameters."""

    model_config = ConfigDict(extra="forbid", use_enum_values=False)

    latent_dim: int = Field(10, ge=1, description="Latent space size L")
    fusion: FusionKind = Field(FusionKind.GPOE, description="Joint posterior factorisation")
    modality: Optional[int] = Field(
        None,
        ge=0,
        description="Modality index for the unimodal baseline",
    )
    max_epochs: int = Field(2000, ge=0)
    batch_size: int = Field(256, ge=1)
    learning_rate: float = Field(1e-4, gt=0.0)
    early_stopping_patience: int = Field(50, ge=1)
    fine_tune_max_epochs: int = Field(100, ge=0)
    validation_fraction: float = Field(0.1, gt=0.0, lt=1.0)
    encoder_layers: List[int] = Field(default_factory=lambda: [20, 40])
    decoder_layers: List[int] = Field(default_factory=lambda: [20, 40])
    restore_best: bool = Field(True, description="Restore best-validation parameters after training")
    log_every: int = Field(50, ge=1, description="Epoch interval for INFO progress lines")
    seed: int = 0

    @model_validator(mode="after")
    def _unimodal_needs_modality(self) -> "ModelConfig":
        if self.fusion == FusionKind.UNIMODAL and self.modality is None:
            raise ValueError("fusion=unimodal requires a modality index")
        if not self.encoder_layers or not self.decoder_layers:
            raise ValueError("encoder_layers and decoder_layers must be non-empty")
        return self

    @property
    def model_name(self) -> str:
        if self.fusion == FusionKind.UNIMODAL:
            return f"unimodal-{self.modality}"
        return self.fusion.value


class SyntheticSpec(BaseModel):
    """Latent factor generator for synthetic multi-modal cohorts."""

    model_config = ConfigDict(extra="forbid")

    n_train: int = Field(2000, ge=2)
    n_holdout: int = Field(500, ge=1)
    n_disease: int = Field(200, ge=1)
    latent_true: int = Field(8, ge=1, description="Shared latent factors L_true")
    features: List[int] = Field(default_factory=lambda: [82, 70])
    modality_names: List[str] = Field(default_factory=lambda: ["t1", "dti"])
    noise_std: List[float] = Field(default_factory=lambda: [0.5, 0.5])
    disease_shift: float = Field(2.0, description="Shift applied to each shifted latent")
    shifted_latents: List[int] = Field(default_factory=lambda: [0, 1, 2])
    severity_spread: float = Field(0.0, ge=0.0, lt=1.0)
    confound_strength: float = Field(0.0, ge=0.0)
    seed: int = 0

    @model_validator(mode="after")
    def _consistent(self) -> "SyntheticSpec":
        n = len(self.features)
        if n == 0:
            raise ValueError("At least one modality is required")
        if len(self.modality_names) != n or len(self.noise_std) != n:
            raise ValueError("features, modality_names and noise_std must have equal length")
        if len(set(self.modality_names)) != n:
            raise ValueError("modality_names must be unique")
        if any(p < 1 for p in self.features):
            raise ValueError("Every modality needs at least one feature")
        if any(not (s > 0.0) for s in self.noise_std):
            raise ValueError("noise_std entries must be > 0")
        if any(not (0 <= l < self.latent_true) for l in self.shifted_latents):
            raise ValueError(f"shifted_latents must index into 0..{self.latent_true - 1}")
        return self

    def shift_vector(self) -> List[float]:
        delta = [0.0] * self.latent_true
        for l in self.shifted_latents:
            delta[l] = self.disease_shift
        return delta


class SignificanceResult(BaseModel):
    """Positive likelihood ratio of outlier calls (TPR / FPR)."""

    tpr: float = Field(..., ge=0.0, le=1.0)
    fpr: float = Field(..., ge=0.0, le=1.0)
    ratio: Optional[float] = Field(None, description="TPR/FPR; null when FPR = 0")
    ratio_infinite: bool = Field(False, description="Marker for FPR = 0 (ratio is +inf)")
    n_disease: int = Field(..., ge=1)
    n_holdout: int = Field(..., ge=1)
    n_disease_outliers: int = Field(..., ge=0)
    n_holdout_outliers: int = Field(..., ge=0)

    @property
    def ratio_value(self) -> float:
        return math.inf if self.ratio_infinite else float(self.ratio)


class CohortProvenance(BaseModel):
    """JSON sidecar written next to generated cohorts."""

    generator: str = "normflux.data.synthetic"
    version: str = "1"
    spec: SyntheticSpec
    modality_order: List[str]
    counts: Dict[str, int]


class ReportMeta(BaseModel):
    """Sidecar describing a deviation report directory."""

    model_name: str
    fusion: FusionKind
    latent_dim: int
    modalities: List[str] = Field(..., description="Modality order of the feature error vector")
    n_features: int
    reference_cohort: CohortLabel
    robust: bool
    use_posterior_mean: bool
    p_threshold: float
    seed: int
