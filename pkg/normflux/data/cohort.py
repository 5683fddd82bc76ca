"""
Multi-modal cohort container.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from ..errors import DataError
from ..schemas import CohortLabel

LABEL_VALUES = tuple(label.value for label in CohortLabel)


@dataclass(frozen=True)
class Cohort:
    """
    Subjects × features for every modality, plus labels and covariates.

    Args:
        modalities: Modality name → (N, P_m) matrix, in declared order
        subject_ids: One id per row
        labels: One CohortLabel value per row
        feature_names: Modality name → column names (generated when omitted)
        covariates: Optional frame with one row per subject (age, icv, severity...)

    Raises:
        DataError: On inconsistent row counts, unknown labels or non-finite values
    """

    modalities: Dict[str, np.ndarray]
    subject_ids: List[str]
    labels: np.ndarray
    feature_names: Dict[str, List[str]] = field(default_factory=dict)
    covariates: Optional[pd.DataFrame] = None

    def __post_init__(self):
        if not self.modalities:
            raise DataError("A cohort needs at least one modality")
        n = len(self.subject_ids)
        mats = {}
        for name, x in self.modalities.items():
            x = np.asarray(x, dtype=np.float64)
            if x.ndim != 2 or x.shape[0] != n:
                raise DataError(f"Modality '{name}' has shape {x.shape}, expected ({n}, P)")
            if not np.all(np.isfinite(x)):
                raise DataError(f"Modality '{name}' contains non-finite values")
            mats[name] = x
        object.__setattr__(self, "modalities", mats)

        labels = np.asarray(self.labels, dtype=object)
        if labels.shape != (n,):
            raise DataError(f"Expected {n} labels, got {labels.shape}")
        unknown = sorted(set(labels) - set(LABEL_VALUES))
        if unknown:
            raise DataError(f"Unknown labels: {unknown}", f"allowed: {'|'.join(LABEL_VALUES)}")
        object.__setattr__(self, "labels", labels)

        if len(set(self.subject_ids)) != n:
            raise DataError("Duplicate subject ids")
        object.__setattr__(self, "subject_ids", [str(s) for s in self.subject_ids])

        names = {}
        for name, x in mats.items():
            cols = list(self.feature_names.get(name, [f"{name}_{j:03d}" for j in range(x.shape[1])]))
            if len(cols) != x.shape[1]:
                raise DataError(f"Modality '{name}' has {x.shape[1]} columns but {len(cols)} names")
            names[name] = cols
        object.__setattr__(self, "feature_names", names)

        if self.covariates is not None:
            cov = self.covariates.reset_index(drop=True)
            if len(cov) != n:
                raise DataError(f"Covariates have {len(cov)} rows, expected {n}")
            object.__setattr__(self, "covariates", cov)

    # ── Shape ────────────────────────────────────────────────────────

    @property
    def modality_names(self) -> List[str]:
        return list(self.modalities)

    @property
    def n_subjects(self) -> int:
        return len(self.subject_ids)

    @property
    def n_features(self) -> Dict[str, int]:
        return {name: x.shape[1] for name, x in self.modalities.items()}

    def matrices(self) -> List[np.ndarray]:
        return [self.modalities[name] for name in self.modality_names]

    def counts(self) -> Dict[str, int]:
        return {label: int(np.sum(self.labels == label)) for label in LABEL_VALUES}

    # ── Selection ────────────────────────────────────────────────────

    def mask(self, label: CohortLabel | str) -> np.ndarray:
        value = label.value if isinstance(label, CohortLabel) else str(label)
        return self.labels == value

    def subset(self, rows: np.ndarray | Sequence[int]) -> "Cohort":
        """Rows selected by a boolean mask or index array, order preserved."""
        rows = np.asarray(rows)
        index = np.flatnonzero(rows) if rows.dtype == bool else rows.astype(int)
        return Cohort(
            modalities={name: x[index] for name, x in self.modalities.items()},
            subject_ids=[self.subject_ids[i] for i in index],
            labels=self.labels[index],
            feature_names=self.feature_names,
            covariates=None if self.covariates is None else self.covariates.iloc[index],
        )

    def select(self, label: CohortLabel | str) -> "Cohort":
        return self.subset(self.mask(label))

    def replace_modalities(self, modalities: Dict[str, np.ndarray]) -> "Cohort":
        """Same subjects, new feature values."""
        return Cohort(
            modalities=modalities,
            subject_ids=self.subject_ids,
            labels=self.labels,
            feature_names=self.feature_names,
            covariates=self.covariates,
        )
