"""
Pipeline glue between cohorts, models and deviation reports.

Preprocess → train / resume / fine-tune → score. Scoring fans out over a
thread pool in fixed-size subject chunks; results are reassembled in subject
order, so reports do not depend on the worker count.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .config import settings
from .data import Cohort, PreprocessStats, apply_preprocessing, fit_preprocessing
from .deviation import (
    DeviationReport,
    StatsSource,
    d_mf,
    d_ml,
    d_uf,
    fit_cohort_stats,
    fit_feature_norm_stats,
    outlier_test_feature,
    outlier_test_latent,
)
from .deviation.outliers import LATENT_P_THRESHOLD
from .errors import DataError
from .mvae import LoadedModel, MvaeModel, TrainingHistory, fine_tune, reconstruct, train
from .schemas import CohortLabel, ModelConfig, ReportMeta

logger = logging.getLogger(__name__)

SCORE_CHUNK = 256


@dataclass
class TrainedModel:
    """A model with the preprocessing it was trained under."""

    model: MvaeModel
    preprocess: PreprocessStats
    history: TrainingHistory


def check_compatible(model: MvaeModel, cohort: Cohort) -> None:
    """
    Raises:
        DataError: Cohort modalities or feature counts differ from the model's
    """
    if cohort.modality_names != model.modality_names:
        raise DataError(
            f"Cohort modalities {cohort.modality_names} do not match model modalities {model.modality_names}"
        )
    dims = [cohort.n_features[name] for name in cohort.modality_names]
    if dims != model.modality_dims:
        raise DataError(f"Cohort feature counts {dims} do not match model {model.modality_dims}")


def healthy_matrices(cohort: Cohort) -> List[np.ndarray]:
    healthy = cohort.select(CohortLabel.HEALTHY_TRAIN)
    if healthy.n_subjects == 0:
        raise DataError("Cohort has no healthy_train subjects")
    return healthy.matrices()


def train_model(cohort: Cohort, config: ModelConfig, use_confounds: bool = False) -> TrainedModel:
    """Fit preprocessing on healthy_train, build a fresh model and train it."""
    processed, stats = fit_preprocessing(cohort, use_confounds=use_confounds)
    model = MvaeModel.create(
        config, processed.modality_names, [processed.n_features[n] for n in processed.modality_names]
    )
    history = train(model, healthy_matrices(processed))
    return TrainedModel(model=model, preprocess=stats, history=history)


def resume_model(loaded: LoadedModel, cohort: Cohort, config: Optional[ModelConfig] = None) -> TrainedModel:
    """Continue an interrupted run with the checkpoint's preprocessing and optimizer state."""
    if loaded.preprocess is None:
        raise DataError("Checkpoint has no preprocessing statistics; cannot resume")
    check_compatible(loaded.model, cohort)
    processed = apply_preprocessing(cohort, loaded.preprocess)
    history = train(
        loaded.model,
        healthy_matrices(processed),
        config=config,
        history=loaded.history or TrainingHistory(),
    )
    return TrainedModel(model=loaded.model, preprocess=loaded.preprocess, history=history)


def fine_tune_model(
    loaded: LoadedModel,
    cohort: Cohort,
    max_epochs: Optional[int] = None,
    use_confounds: bool = False,
) -> TrainedModel:
    """Refit preprocessing on the new cohort's controls, then fine-tune on them."""
    check_compatible(loaded.model, cohort)
    processed, stats = fit_preprocessing(cohort, use_confounds=use_confounds)
    history = fine_tune(loaded.model, healthy_matrices(processed), max_epochs=max_epochs)
    return TrainedModel(model=loaded.model, preprocess=stats, history=history)


def _score_chunk(
    model: MvaeModel,
    matrices: List[np.ndarray],
    rows: np.ndarray,
    use_posterior_mean: bool,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    batch = [x[rows] for x in matrices]
    result = reconstruct(model, batch, use_posterior_mean=use_posterior_mean, rng=rng)
    observed = dict(zip(model.modality_names, batch))
    errors = np.hstack([(observed[name] - result.recon[name]) ** 2 for name in model.covered_modalities])
    return result.latent, errors


def score_cohort(
    model: MvaeModel,
    cohort: Cohort,
    reference: CohortLabel = CohortLabel.HEALTHY_TRAIN,
    robust: bool = False,
    use_posterior_mean: bool = True,
    seed: int = 0,
    p_threshold: float = LATENT_P_THRESHOLD,
    threads: Optional[int] = None,
) -> DeviationReport:
    """
    Score every subject of a preprocessed cohort.

    Reference statistics (latent mean/covariance, feature-error
    mean/covariance and per-feature error mean/std) are fitted on the
    ``reference`` cohort; D_ml, D_mf and D_uf are then computed for all
    subjects, with outlier calls and p-values.

    Args:
        model: Trained model
        cohort: Cohort preprocessed with the model's statistics
        reference: Cohort label the reference statistics come from
        robust: Trimmed estimator for the Mahalanobis references
        use_posterior_mean: Latent = posterior mean; otherwise a seeded sample
        seed: Sampling seed (ignored with the posterior mean)
        p_threshold: Chi-square upper-tail threshold for D_ml and D_mf
        threads: Worker cap (defaults to NORMFLUX_THREADS)

    Raises:
        DataError: Incompatible cohort or too few reference subjects
        NumericError: Reference covariance cannot be factorised
    """
    check_compatible(model, cohort)
    matrices = cohort.matrices()
    chunks = np.array_split(np.arange(cohort.n_subjects), max(1, -(-cohort.n_subjects // SCORE_CHUNK)))
    workers = max(1, min(threads or settings.threads, len(chunks)))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(
            pool.map(
                lambda item: _score_chunk(
                    model, matrices, item[1], use_posterior_mean, np.random.default_rng([seed, item[0]])
                ),
                enumerate(chunks),
            )
        )
    latent = np.vstack([p[0] for p in parts])
    errors = np.vstack([p[1] for p in parts])

    ref = cohort.mask(reference)
    if not ref.any():
        raise DataError(f"No '{CohortLabel(reference).value}' subjects to fit reference statistics on")
    latent_stats = fit_cohort_stats(latent[ref], robust=robust, source=StatsSource.LATENT)
    error_stats = fit_cohort_stats(errors[ref], robust=robust, source=StatsSource.FEATURE_ERROR)
    norm_stats = fit_feature_norm_stats(errors[ref])

    ml = np.atleast_1d(d_ml(latent, latent_stats))
    mf = np.atleast_1d(d_mf(errors, error_stats))
    uf = d_uf(errors, norm_stats)
    ml_calls = outlier_test_latent(ml, latent_stats.dim, p_threshold)
    mf_calls = outlier_test_latent(mf, error_stats.dim, p_threshold)
    uf_calls = outlier_test_feature(uf, norm_stats.n_features)

    meta = ReportMeta(
        model_name=model.name,
        fusion=model.fusion,
        latent_dim=model.config.latent_dim,
        modalities=model.covered_modalities,
        n_features=norm_stats.n_features,
        reference_cohort=reference,
        robust=robust,
        use_posterior_mean=use_posterior_mean,
        p_threshold=p_threshold,
        seed=seed,
    )
    logger.info(
        f"Scored {cohort.n_subjects} subjects with {model.name} using {workers} workers; "
        f"flagged D_ml={ml_calls.n_flagged} D_mf={mf_calls.n_flagged} D_uf={uf_calls.n_flagged}"
    )
    return DeviationReport(
        subject_ids=cohort.subject_ids,
        cohorts=cohort.labels,
        d_ml=ml,
        d_mf=mf,
        d_uf=uf,
        feature_columns=[
            f"{name}:{feature}" for name in model.covered_modalities for feature in cohort.feature_names[name]
        ],
        flag_ml=ml_calls.flags,
        flag_mf=mf_calls.flags,
        flag_uf=uf_calls.flags,
        p_ml=ml_calls.p_values,
        p_mf=mf_calls.p_values,
        p_uf_min=uf_calls.p_values,
        meta=meta,
    )
