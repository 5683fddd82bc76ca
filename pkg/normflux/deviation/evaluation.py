"""
Cross-model evaluation: significance-ratio tables, covariate correlations and
plot-ready deviation data.
"""

from __future__ import annotations

import logging
import math
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from ..errors import DataError
from ..schemas import CohortLabel, FusionKind, SignificanceResult
from .outliers import pearson_corr, significance_ratio
from .report import DeviationReport, Metric

logger = logging.getLogger(__name__)

AVERAGE_UNIMODAL = "average-unimodal"
AVERAGED_METRICS = (Metric.D_MF, Metric.D_UF)


def evaluate_report(report: DeviationReport, metric: Metric | str) -> SignificanceResult:
    """Significance ratio of one metric: disease calls against healthy_holdout calls."""
    flags = report.flags(metric)
    disease = report.mask(CohortLabel.DISEASE)
    holdout = report.mask(CohortLabel.HEALTHY_HOLDOUT)
    if not disease.any() or not holdout.any():
        raise DataError(
            f"Report for {report.meta.model_name} lacks disease or healthy_holdout subjects"
        )
    return significance_ratio(flags[disease], flags[holdout])


def significance_table(
    reports: Sequence[DeviationReport],
    metrics: Sequence[Metric | str] = tuple(Metric),
) -> pd.DataFrame:
    """
    Long-form significance results: one row per (model, metric, latent_dim).

    When two or more uni-modal models share a latent size, an
    ``average-unimodal`` row holds the mean of their D_mf and D_uf ratios.
    """
    if not reports:
        raise DataError("No deviation reports to evaluate")
    rows = []
    for report in reports:
        for metric in map(Metric, metrics):
            result = evaluate_report(report, metric)
            rows.append(
                {
                    "model": report.meta.model_name,
                    "fusion": report.meta.fusion.value,
                    "metric": metric.value,
                    "latent_dim": report.meta.latent_dim,
                    "ratio": result.ratio_value,
                    "ratio_infinite": result.ratio_infinite,
                    "tpr": result.tpr,
                    "fpr": result.fpr,
                    "n_disease": result.n_disease,
                    "n_holdout": result.n_holdout,
                    "n_disease_outliers": result.n_disease_outliers,
                    "n_holdout_outliers": result.n_holdout_outliers,
                }
            )
    table = pd.DataFrame(rows)
    averages = _average_unimodal(table)
    if not averages.empty:
        table = pd.concat([table, averages], ignore_index=True)
    return table


def _average_unimodal(table: pd.DataFrame) -> pd.DataFrame:
    unimodal = table[(table["fusion"] == FusionKind.UNIMODAL.value)
                     & table["metric"].isin([m.value for m in AVERAGED_METRICS])]
    rows = []
    for (metric, latent_dim), group in unimodal.groupby(["metric", "latent_dim"], sort=True):
        if group["model"].nunique() < 2:
            continue
        ratio = float(group["ratio"].mean())
        rows.append(
            {
                "model": AVERAGE_UNIMODAL,
                "fusion": FusionKind.UNIMODAL.value,
                "metric": metric,
                "latent_dim": latent_dim,
                "ratio": ratio,
                "ratio_infinite": math.isinf(ratio),
                "tpr": float(group["tpr"].mean()),
                "fpr": float(group["fpr"].mean()),
            }
        )
    return pd.DataFrame(rows, columns=table.columns)


def pivot_significance(table: pd.DataFrame) -> pd.DataFrame:
    """Wide table: rows are models, columns are ``<metric> L=<latent_dim>``."""
    wide = table.assign(column=table["metric"] + " L=" + table["latent_dim"].astype(str))
    order = list(dict.fromkeys(wide["model"]))
    columns = sorted(
        wide["column"].unique(),
        key=lambda c: ([m.value for m in Metric].index(c.split(" ")[0]), int(c.split("=")[1])),
    )
    pivot = wide.pivot_table(index="model", columns="column", values="ratio", aggfunc="first")
    return pivot.reindex(index=order, columns=columns)


def covariate_correlations(
    reports: Sequence[DeviationReport],
    covariates: pd.DataFrame,
    covariate: str = "severity",
    metrics: Sequence[Metric | str] = (Metric.D_ML,),
) -> List[Dict]:
    """
    Pearson correlation of deviations with a covariate over disease subjects.

    Args:
        reports: Scored models
        covariates: Frame indexed by subject id
        covariate: Column to correlate against
        metrics: Subject-level metrics (D_ml and/or D_mf)
    """
    if covariate not in covariates.columns:
        raise DataError(f"Covariate '{covariate}' not available; have {list(covariates.columns)}")
    results = []
    for report in reports:
        disease = report.mask(CohortLabel.DISEASE)
        ids = [sid for sid, keep in zip(report.subject_ids, disease) if keep]
        missing = [sid for sid in ids if sid not in covariates.index]
        if missing:
            raise DataError(f"Covariates missing for {len(missing)} disease subjects, e.g. {missing[:3]}")
        y = covariates.loc[ids, covariate].to_numpy(dtype=np.float64)
        for metric in map(Metric, metrics):
            x = report.values(metric)[disease]
            entry = {
                "model": report.meta.model_name,
                "latent_dim": report.meta.latent_dim,
                "metric": metric.value,
                "covariate": covariate,
                "n": int(x.size),
                "r": None,
                "p": None,
            }
            try:
                entry["r"], entry["p"] = pearson_corr(x, y)
            except ValueError as e:
                logger.warning(f"No correlation for {report.meta.model_name} {metric.value}: {e}")
            results.append(entry)
    return results


def plot_data(reports: Sequence[DeviationReport], covariates: Optional[pd.DataFrame] = None) -> pd.DataFrame:
    """Subject-level deviations of every model, stacked, with covariates joined when given."""
    frames = []
    for report in reports:
        frame = report.to_frame()[["id", "cohort", "D_ml", "D_mf"]]
        frame.insert(0, "latent_dim", report.meta.latent_dim)
        frame.insert(0, "model", report.meta.model_name)
        frames.append(frame)
    stacked = pd.concat(frames, ignore_index=True)
    if covariates is not None:
        stacked = stacked.join(covariates, on="id")
    return stacked
