"""
Deviation reports.

Files written for one scored model::

    deviations.csv      id, cohort, D_ml, D_mf, flag_ml, flag_mf, flag_uf, p_ml, p_mf, p_uf_min
    deviations_uf.csv   id, cohort + one D_uf column per "modality:feature"
    regional_uf.csv     mean D_uf per feature and cohort
    group_summary.csv   mean / median / std of D_ml and D_mf per cohort
    report_meta.json    model, modality order, reference cohort, thresholds
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import List

import numpy as np
import pandas as pd

from ..errors import DataError
from ..schemas import CohortLabel, ReportMeta

logger = logging.getLogger(__name__)

DEVIATIONS_FILE = "deviations.csv"
D_UF_FILE = "deviations_uf.csv"
REGIONAL_FILE = "regional_uf.csv"
GROUP_SUMMARY_FILE = "group_summary.csv"
META_FILE = "report_meta.json"

REPORT_COLUMNS = ["id", "cohort", "D_ml", "D_mf", "flag_ml", "flag_mf", "flag_uf", "p_ml", "p_mf", "p_uf_min"]


class Metric(str, Enum):
    """Deviation metric; the value is its column label."""
    D_ML = "D_ml"
    D_MF = "D_mf"
    D_UF = "D_uf"

    @property
    def flag_column(self) -> str:
        return {"D_ml": "flag_ml", "D_mf": "flag_mf", "D_uf": "flag_uf"}[self.value]


@dataclass(frozen=True)
class DeviationReport:
    """Per-subject deviations of one model, with outlier calls and p-values."""

    subject_ids: List[str]
    cohorts: np.ndarray
    d_ml: np.ndarray
    d_mf: np.ndarray
    d_uf: np.ndarray
    feature_columns: List[str]
    flag_ml: np.ndarray
    flag_mf: np.ndarray
    flag_uf: np.ndarray
    p_ml: np.ndarray
    p_mf: np.ndarray
    p_uf_min: np.ndarray
    meta: ReportMeta

    def __post_init__(self):
        n = len(self.subject_ids)
        for name in ("cohorts", "d_ml", "d_mf", "flag_ml", "flag_mf", "flag_uf", "p_ml", "p_mf", "p_uf_min"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"Report column '{name}' has {len(getattr(self, name))} rows, expected {n}")
        if self.d_uf.shape != (n, len(self.feature_columns)):
            raise ValueError(f"D_uf matrix shape {self.d_uf.shape} does not match ({n}, {len(self.feature_columns)})")
        if np.any(self.d_ml < 0) or np.any(self.d_mf < 0):
            raise ValueError("Mahalanobis deviations must be non-negative")

    @property
    def n_subjects(self) -> int:
        return len(self.subject_ids)

    def mask(self, label: CohortLabel | str) -> np.ndarray:
        return self.cohorts == CohortLabel(label).value

    def flags(self, metric: Metric | str) -> np.ndarray:
        return np.asarray(getattr(self, Metric(metric).flag_column), dtype=bool)

    def values(self, metric: Metric | str) -> np.ndarray:
        metric = Metric(metric)
        if metric == Metric.D_UF:
            raise ValueError("D_uf is per feature; use d_uf directly")
        return self.d_ml if metric == Metric.D_ML else self.d_mf

    # ── Tables ───────────────────────────────────────────────────────

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "id": self.subject_ids,
                "cohort": list(self.cohorts),
                "D_ml": self.d_ml,
                "D_mf": self.d_mf,
                "flag_ml": self.flag_ml.astype(int),
                "flag_mf": self.flag_mf.astype(int),
                "flag_uf": self.flag_uf.astype(int),
                "p_ml": self.p_ml,
                "p_mf": self.p_mf,
                "p_uf_min": self.p_uf_min,
            },
            columns=REPORT_COLUMNS,
        )

    def d_uf_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.d_uf, columns=self.feature_columns)
        frame.insert(0, "cohort", list(self.cohorts))
        frame.insert(0, "id", self.subject_ids)
        return frame

    def regional_summary(self) -> pd.DataFrame:
        """Mean D_uf per feature, one column per cohort label present."""
        frame = pd.DataFrame(
            [c.split(":", 1) for c in self.feature_columns], columns=["modality", "feature"]
        )
        for label in CohortLabel:
            rows = self.mask(label)
            if rows.any():
                frame[f"mean_D_uf_{label.value}"] = np.nanmean(self.d_uf[rows], axis=0)
        return frame

    def group_summary(self) -> pd.DataFrame:
        """Mean / median / std of D_ml and D_mf per cohort label."""
        frame = self.to_frame()
        summary = frame.groupby("cohort", sort=False)[["D_ml", "D_mf"]].agg(["count", "mean", "median", "std"])
        summary.columns = [f"{metric}_{stat}" for metric, stat in summary.columns]
        summary = summary.drop(columns="D_mf_count").rename(columns={"D_ml_count": "n"})
        order = [label.value for label in CohortLabel if label.value in summary.index]
        return summary.loc[order].reset_index()

    # ── Files ────────────────────────────────────────────────────────

    def write(self, directory: str | Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(directory / DEVIATIONS_FILE, index=False)
        self.d_uf_frame().to_csv(directory / D_UF_FILE, index=False)
        self.regional_summary().to_csv(directory / REGIONAL_FILE, index=False)
        self.group_summary().to_csv(directory / GROUP_SUMMARY_FILE, index=False)
        (directory / META_FILE).write_text(self.meta.model_dump_json(indent=2), encoding="utf-8")
        logger.info(f"Deviation report for {self.meta.model_name} written to {directory} ({self.n_subjects} subjects)")
        return directory


def load_report(directory: str | Path) -> DeviationReport:
    """
    Read a report directory written by :meth:`DeviationReport.write`.

    Raises:
        FileNotFoundError: Missing report files
        DataError: Column layout differs from the report schema
    """
    directory = Path(directory)
    for name in (DEVIATIONS_FILE, D_UF_FILE, META_FILE):
        if not (directory / name).exists():
            raise FileNotFoundError(f"Report file not found: {directory / name}")
    meta = ReportMeta.model_validate_json((directory / META_FILE).read_text(encoding="utf-8"))
    frame = pd.read_csv(directory / DEVIATIONS_FILE, dtype={"id": str}, float_precision="round_trip")
    if list(frame.columns) != REPORT_COLUMNS:
        raise DataError(f"Unexpected columns in {DEVIATIONS_FILE}: {list(frame.columns)}")
    uf = pd.read_csv(directory / D_UF_FILE, dtype={"id": str}, float_precision="round_trip")
    if list(uf["id"]) != list(frame["id"]):
        raise DataError(f"{D_UF_FILE} subjects do not match {DEVIATIONS_FILE}")
    return DeviationReport(
        subject_ids=list(frame["id"]),
        cohorts=frame["cohort"].astype(str).to_numpy(dtype=object),
        d_ml=frame["D_ml"].to_numpy(dtype=np.float64),
        d_mf=frame["D_mf"].to_numpy(dtype=np.float64),
        d_uf=uf.drop(columns=["id", "cohort"]).to_numpy(dtype=np.float64),
        feature_columns=[str(c) for c in uf.columns[2:]],
        flag_ml=frame["flag_ml"].to_numpy().astype(bool),
        flag_mf=frame["flag_mf"].to_numpy().astype(bool),
        flag_uf=frame["flag_uf"].to_numpy().astype(bool),
        p_ml=frame["p_ml"].to_numpy(dtype=np.float64),
        p_mf=frame["p_mf"].to_numpy(dtype=np.float64),
        p_uf_min=frame["p_uf_min"].to_numpy(dtype=np.float64),
        meta=meta,
    )
