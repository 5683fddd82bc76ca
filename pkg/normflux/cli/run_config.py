"""
Run configuration.

Flat ``key = value`` files, ``#`` comments, comma-separated lists. Command
line ``--set key=value`` overrides are applied after the file and
``--seed`` last. Every key is validated before any work starts; unknown
keys are rejected.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from ..deviation import Metric
from ..errors import ConfigError
from ..schemas import CohortLabel, FusionKind, ModelConfig, SyntheticSpec

logger = logging.getLogger(__name__)

BENCHMARK_MENU = ["gpoe", "moe", "poe", "concat", "unimodal"]


class RunConfig(BaseModel):
    """Every parameter any command accepts."""

    model_config = ConfigDict(extra="forbid")

    # Model and training (mirrors ModelConfig)
    latent_dim: int = 10
    fusion: FusionKind = FusionKind.GPOE
    modality: Optional[int] = None
    max_epochs: int = 2000
    batch_size: int = 256
    learning_rate: float = 1e-4
    early_stopping_patience: int = 50
    fine_tune_max_epochs: int = 100
    validation_fraction: float = 0.1
    encoder_layers: List[int] = Field(default_factory=lambda: [20, 40])
    decoder_layers: List[int] = Field(default_factory=lambda: [20, 40])
    restore_best: bool = True
    log_every: int = 50
    seed: int = 0

    # Synthetic cohort (mirrors SyntheticSpec)
    n_train: int = 2000
    n_holdout: int = 500
    n_disease: int = 200
    latent_true: int = 8
    features: List[int] = Field(default_factory=lambda: [82, 70])
    modality_names: List[str] = Field(default_factory=lambda: ["t1", "dti"])
    noise_std: List[float] = Field(default_factory=lambda: [0.5, 0.5])
    disease_shift: float = 2.0
    shifted_latents: List[int] = Field(default_factory=lambda: [0, 1, 2])
    severity_spread: float = 0.0
    confound_strength: float = 0.0

    # Inputs
    cohort_dir: Optional[Path] = Field(None, description="Cohort directory (train, finetune, score, evaluate)")
    checkpoint: Optional[Path] = Field(None, description="Model checkpoint (finetune, score, resume)")
    resume: bool = False
    reports: List[Path] = Field(default_factory=list, description="Report directories to evaluate")

    # Preprocessing and scoring
    use_confounds: bool = False
    reference_cohort: CohortLabel = CohortLabel.HEALTHY_TRAIN
    robust: bool = False
    use_posterior_mean: bool = True
    p_threshold: float = Field(0.001, gt=0.0, lt=1.0)

    # Evaluation and benchmark
    metrics: List[Metric] = Field(default_factory=lambda: list(Metric))
    correlate_covariate: Optional[str] = "severity"
    latent_dims: List[int] = Field(default_factory=lambda: [5, 10, 15, 20])
    benchmark_models: List[FusionKind] = Field(
        default_factory=lambda: [FusionKind(m) for m in BENCHMARK_MENU]
    )

    @field_validator(
        "encoder_layers", "decoder_layers", "features", "modality_names", "noise_std",
        "shifted_latents", "reports", "metrics", "latent_dims", "benchmark_models",
        mode="before",
    )
    @classmethod
    def _split_list(cls, value):
        if isinstance(value, str):
            return [item.strip() for item in value.split(",") if item.strip()]
        return value

    @field_validator("modality", "cohort_dir", "checkpoint", "correlate_covariate", mode="before")
    @classmethod
    def _none_literal(cls, value):
        if isinstance(value, str) and value.strip().lower() in ("", "none", "null"):
            return None
        return value

    def to_model_config(self, **overrides) -> ModelConfig:
        fields = {name: getattr(self, name) for name in ModelConfig.model_fields}
        fields.update(overrides)
        return ModelConfig(**fields)

    def to_synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec(**{name: getattr(self, name) for name in SyntheticSpec.model_fields})


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, str]:
    """
    Parse ``key = value`` lines.

    Raises:
        ConfigError: Malformed line or duplicate key
    """
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'", raw.strip())
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key '{key}'")
        values[key] = value
    return values


def parse_overrides(items: Iterable[str]) -> Dict[str, str]:
    overrides: Dict[str, str] = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got '{item}'")
        key, value = (part.strip() for part in item.split("=", 1))
        overrides[key] = value
    return overrides


def load_run_config(
    path: Optional[str | Path] = None,
    overrides: Iterable[str] = (),
    seed: Optional[int] = None,
) -> RunConfig:
    """
    Build and fully validate a RunConfig.

    Args:
        path: Config file (optional; defaults apply without one)
        overrides: ``key=value`` strings applied after the file
        seed: Final override for ``seed``

    Raises:
        ConfigError: Unknown key, invalid value or inconsistent model/cohort settings
        FileNotFoundError: Config file missing
    """
    values: Dict[str, str] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Config file not found: {path}")
        values.update(parse_config_text(path.read_text(encoding="utf-8"), source=str(path)))
    values.update(parse_overrides(overrides))
    if seed is not None:
        values["seed"] = str(seed)

    try:
        config = RunConfig.model_validate(values)
        config.to_model_config()
        config.to_synthetic_spec()
    except ValidationError as e:
        raise ConfigError("Invalid configuration", _summarise(e)) from e
    logger.debug(f"Run config: {config.model_dump(mode='json', exclude_defaults=True)}")
    return config


def _summarise(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        location = ".".join(str(p) for p in item["loc"]) or "config"
        parts.append(f"{location}: {item['msg']}")
    return "; ".join(parts)
