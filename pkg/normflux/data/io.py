"""
Cohort CSV ingestion and export.

Layout of a cohort directory::

    cohort.json        manifest: modality order and file names
    <modality>.csv     subject_id + one column per feature
    labels.csv         subject_id,label
    covariates.csv     subject_id + covariate columns (optional)
    provenance.json    generator spec and seed (synthetic cohorts only)

Subjects are matched by id across files; subjects missing from any
modality file are dropped and reported.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from ..errors import DataError
from ..schemas import CohortProvenance, SyntheticSpec
from .cohort import Cohort

logger = logging.getLogger(__name__)

ID_COLUMN = "subject_id"
LABEL_COLUMN = "label"
MANIFEST_NAME = "cohort.json"
PROVENANCE_NAME = "provenance.json"


@dataclass
class IngestReport:
    """What happened to each subject during ingestion."""

    n_loaded: int = 0
    dropped: Dict[str, List[str]] = field(default_factory=dict)  # subject id -> missing sources

    @property
    def n_dropped(self) -> int:
        return len(self.dropped)


def _read_table(path: Path) -> pd.DataFrame:
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")
    try:
        frame = pd.read_csv(path, dtype={ID_COLUMN: str}, float_precision="round_trip", encoding="utf-8")
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise DataError(f"Could not parse CSV: {path}", str(e)) from e
    if frame.columns.empty or frame.columns[0] != ID_COLUMN:
        raise DataError(f"First column of {path.name} must be '{ID_COLUMN}'")
    duplicated = frame[ID_COLUMN][frame[ID_COLUMN].duplicated()].unique().tolist()
    if duplicated:
        raise DataError(f"Duplicate subject ids in {path.name}: {duplicated[:5]}")
    return frame.set_index(ID_COLUMN)


def _numeric(frame: pd.DataFrame, source: str) -> pd.DataFrame:
    converted = frame.apply(pd.to_numeric, errors="coerce")
    bad = converted.isna() & frame.notna()
    if bad.to_numpy().any():
        row, col = np.argwhere(bad.to_numpy())[0]
        raise DataError(
            f"Non-numeric cell in {source}",
            f"subject {frame.index[row]}, column {frame.columns[col]}: {frame.iat[row, col]!r}",
        )
    if converted.isna().to_numpy().any():
        raise DataError(f"Missing values in {source} (imputation is not supported)")
    return converted.astype(np.float64)


def load_csv(
    modality_paths: Dict[str, str | Path],
    label_path: str | Path,
    covariate_path: Optional[str | Path] = None,
) -> tuple[Cohort, IngestReport]:
    """
    Load an aligned cohort from per-modality CSV files.

    Args:
        modality_paths: Modality name → CSV path, in declared modality order
        label_path: Two-column file ``subject_id,label``
        covariate_path: Optional covariate file keyed by ``subject_id``

    Returns:
        (Cohort, IngestReport); subject order follows the label file

    Raises:
        FileNotFoundError: Missing file
        DataError: Duplicate ids, non-numeric cells, unknown labels
    """
    labels = _read_table(Path(label_path))
    if list(labels.columns) != [LABEL_COLUMN]:
        raise DataError(f"Label file must have columns '{ID_COLUMN},{LABEL_COLUMN}'")
    tables = {name: _numeric(_read_table(Path(p)), Path(p).name) for name, p in modality_paths.items()}
    covariates = None
    if covariate_path is not None:
        covariates = _numeric(_read_table(Path(covariate_path)), Path(covariate_path).name)

    sources = {"labels": labels.index, **{name: t.index for name, t in tables.items()}}
    if covariates is not None:
        sources["covariates"] = covariates.index
    all_ids = list(labels.index)
    for name, t in tables.items():
        all_ids.extend(i for i in t.index if i not in labels.index)

    report = IngestReport()
    keep: List[str] = []
    seen = set()
    for subject in all_ids:
        if subject in seen:
            continue
        seen.add(subject)
        missing = [src for src, index in sources.items() if subject not in index]
        if missing:
            report.dropped[subject] = missing
        else:
            keep.append(subject)
    report.n_loaded = len(keep)
    if report.n_dropped:
        logger.warning(
            f"Dropped {report.n_dropped} subjects missing from at least one file: "
            f"{list(report.dropped)[:5]}"
        )
    if not keep:
        raise DataError("No subject is present in every file")

    cohort = Cohort(
        modalities={name: t.loc[keep].to_numpy() for name, t in tables.items()},
        subject_ids=keep,
        labels=labels.loc[keep, LABEL_COLUMN].astype(str).to_numpy(dtype=object),
        feature_names={name: [str(c) for c in t.columns] for name, t in tables.items()},
        covariates=None if covariates is None else covariates.loc[keep].reset_index(drop=True),
    )
    logger.info(f"Loaded cohort: {cohort.counts()} from {len(tables)} modality files")
    return cohort, report


def save_csv(cohort: Cohort, directory: str | Path) -> Path:
    """Write ``cohort`` in the directory layout read by :func:`load_cohort_dir`."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = {}
    for name, x in cohort.modalities.items():
        frame = pd.DataFrame(x, columns=cohort.feature_names[name])
        frame.insert(0, ID_COLUMN, cohort.subject_ids)
        files[name] = f"{name}.csv"
        frame.to_csv(directory / files[name], index=False)
    pd.DataFrame({ID_COLUMN: cohort.subject_ids, LABEL_COLUMN: list(cohort.labels)}).to_csv(
        directory / "labels.csv", index=False
    )
    covariate_file = None
    if cohort.covariates is not None:
        covariate_file = "covariates.csv"
        frame = cohort.covariates.copy()
        frame.insert(0, ID_COLUMN, cohort.subject_ids)
        frame.to_csv(directory / covariate_file, index=False)
    manifest = {
        "modalities": cohort.modality_names,
        "files": files,
        "labels": "labels.csv",
        "covariates": covariate_file,
    }
    (directory / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    logger.info(f"Cohort written to {directory} ({cohort.n_subjects} subjects)")
    return directory


def load_cohort_dir(directory: str | Path) -> tuple[Cohort, IngestReport]:
    """Load a directory written by :func:`save_csv` (or laid out the same way)."""
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    if not manifest_path.exists():
        raise FileNotFoundError(f"Cohort manifest not found: {manifest_path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    modality_paths = {name: directory / manifest["files"][name] for name in manifest["modalities"]}
    covariates = manifest.get("covariates")
    return load_csv(
        modality_paths,
        directory / manifest.get("labels", "labels.csv"),
        directory / covariates if covariates else None,
    )


def write_provenance(directory: str | Path, spec: SyntheticSpec, cohort: Cohort) -> Path:
    """Echo the generator spec and seed into a JSON sidecar."""
    provenance = CohortProvenance(
        spec=spec,
        modality_order=cohort.modality_names,
        counts=cohort.counts(),
    )
    path = Path(directory) / PROVENANCE_NAME
    path.write_text(provenance.model_dump_json(indent=2), encoding="utf-8")
    return path
