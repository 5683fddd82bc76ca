"""
Synthetic multi-modal cohorts.

Shared latent factors z ~ N(0, I) drive every modality through a loading
matrix; each modality adds its own Gaussian noise. Disease subjects have
their latent position shifted by ``severity * delta`` on a chosen subset of
latents. Age and ICV covariates are always drawn; they only leak into the
features when ``confound_strength > 0``.
"""

from __future__ import annotations

import logging
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from ..schemas import CohortLabel, SyntheticSpec
from .cohort import Cohort

logger = logging.getLogger(__name__)

AGE_RANGE = (45.0, 80.0)
ICV_MEAN, ICV_STD = 1500.0, 150.0


def generate_loadings(spec: SyntheticSpec, rng: np.random.Generator) -> List[np.ndarray]:
    """One (L_true, P_m) loading matrix per modality, scaled to unit signal variance."""
    return [
        rng.standard_normal((spec.latent_true, p)) / np.sqrt(spec.latent_true)
        for p in spec.features
    ]


def _confound_basis(age: np.ndarray, icv: np.ndarray) -> np.ndarray:
    a = (age - np.mean(AGE_RANGE)) / (AGE_RANGE[1] - AGE_RANGE[0])
    v = (icv - ICV_MEAN) / ICV_STD
    return np.column_stack([a, a ** 2, a ** 3, v])


def generate_synthetic(
    spec: SyntheticSpec,
    loadings: Optional[List[np.ndarray]] = None,
) -> Cohort:
    """
    Draw healthy_train, healthy_holdout and disease cohorts from ``spec``.

    Args:
        spec: Generator parameters (seeded)
        loadings: Optional explicit loading matrices, one (L_true, P_m) per modality

    Returns:
        Cohort with covariates ``age``, ``icv`` and ``severity``
    """
    rng = np.random.default_rng(spec.seed)
    drawn = generate_loadings(spec, rng)
    if loadings is None:
        loadings = drawn
    for w, p in zip(loadings, spec.features):
        if w.shape != (spec.latent_true, p):
            raise ValueError(f"Loading matrix shape {w.shape}, expected ({spec.latent_true}, {p})")
    confound_coefs = [rng.standard_normal((4, p)) for p in spec.features]
    delta = np.asarray(spec.shift_vector())

    blocks = [
        (CohortLabel.HEALTHY_TRAIN, spec.n_train),
        (CohortLabel.HEALTHY_HOLDOUT, spec.n_holdout),
        (CohortLabel.DISEASE, spec.n_disease),
    ]
    per_modality: List[List[np.ndarray]] = [[] for _ in spec.features]
    labels: List[str] = []
    covariates: List[pd.DataFrame] = []

    for label, n in blocks:
        z = rng.standard_normal((n, spec.latent_true))
        severity = np.zeros(n)
        if label == CohortLabel.DISEASE:
            if spec.severity_spread > 0.0:
                severity = rng.uniform(1.0 - spec.severity_spread, 1.0 + spec.severity_spread, n)
            else:
                severity = np.ones(n)
            z = z + severity[:, None] * delta
        age = rng.uniform(*AGE_RANGE, n)
        icv = rng.normal(ICV_MEAN, ICV_STD, n)
        basis = _confound_basis(age, icv)
        for m, (w, sigma) in enumerate(zip(loadings, spec.noise_std)):
            x = z @ w + sigma * rng.standard_normal((n, w.shape[1]))
            if spec.confound_strength > 0.0:
                x = x + spec.confound_strength * (basis @ confound_coefs[m])
            per_modality[m].append(x)
        labels.extend([label.value] * n)
        covariates.append(pd.DataFrame({"age": age, "icv": icv, "severity": severity}))

    n_total = len(labels)
    cohort = Cohort(
        modalities={
            name: np.vstack(blocks_m)
            for name, blocks_m in zip(spec.modality_names, per_modality)
        },
        subject_ids=[f"sub-{i:05d}" for i in range(n_total)],
        labels=np.asarray(labels, dtype=object),
        covariates=pd.concat(covariates, ignore_index=True),
    )
    logger.info(
        f"Synthetic cohort generated: {cohort.counts()} "
        f"modalities={dict(zip(spec.modality_names, spec.features))} seed={spec.seed}"
    )
    return cohort


def analytic_shift(spec: SyntheticSpec, loadings: List[np.ndarray]) -> Dict[str, np.ndarray]:
    """Expected per-feature disease mean shift ``delta @ W_m`` in raw feature units."""
    delta = np.asarray(spec.shift_vector())
    return {name: delta @ w for name, w in zip(spec.modality_names, loadings)}
