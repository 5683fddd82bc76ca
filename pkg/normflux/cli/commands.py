"""
Command implementations.

Each command takes a validated RunConfig and an output directory, writes its
files there, prints a summary banner and returns a small summary dict.
"""

from __future__ import annotations

import json
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional

import pandas as pd

from ..data import Cohort, apply_preprocessing, generate_synthetic, load_cohort_dir, save_csv, write_provenance
from ..deviation import (
    DeviationReport,
    covariate_correlations,
    load_report,
    pivot_significance,
    plot_data,
    significance_table,
)
from ..errors import ConfigError
from ..mvae import LoadedModel, MvaeModel, get_alpha, load_model, save_model, view_dims_for
from ..pipeline import TrainedModel, fine_tune_model, resume_model, score_cohort, train_model
from ..schemas import FusionKind
from .run_config import RunConfig

logger = logging.getLogger(__name__)

CHECKPOINT_FILE = "model.json"
HISTORY_FILE = "history.csv"
ALPHA_TRAJECTORY_FILE = "alpha_trajectory.csv"
ALPHA_TABLE_FILE = "alpha.csv"
COHORT_SUBDIR = "cohort"


def _banner(title: str, lines: List[str]) -> None:
    print("\n" + "=" * 70)
    print(f"  {title}")
    print("=" * 70)
    for line in lines:
        print(f"  {line}")
    print("=" * 70 + "\n")


def _require(value, key: str, command: str):
    if value is None:
        raise ConfigError(f"'{key}' is required for {command}")
    return value


def _load_cohort(config: RunConfig, command: str) -> Cohort:
    cohort, report = load_cohort_dir(_require(config.cohort_dir, "cohort_dir", command))
    if report.n_dropped:
        logger.warning(f"{report.n_dropped} subjects dropped while loading {config.cohort_dir}")
    return cohort


def alpha_table(model: MvaeModel) -> pd.DataFrame:
    """Final gPoE weights: one row per modality, one column per latent dimension."""
    alpha = get_alpha(model).alpha
    frame = pd.DataFrame(alpha, columns=[f"latent {l}" for l in range(alpha.shape[1])])
    frame.insert(0, "modality", model.view_names)
    return frame


def write_training_outputs(trained: TrainedModel, out: Path, feature_names: Dict[str, List[str]]) -> Path:
    """Checkpoint, per-epoch losses and (gpoe) alpha trajectory plus final alpha table."""
    out.mkdir(parents=True, exist_ok=True)
    checkpoint = save_model(
        out / CHECKPOINT_FILE,
        trained.model,
        preprocess=trained.preprocess,
        history=trained.history,
        feature_names=feature_names,
    )
    trained.history.to_frame().to_csv(out / HISTORY_FILE, index=False)
    if trained.model.fusion == FusionKind.GPOE:
        trained.history.alpha_frame(trained.model.view_names).to_csv(out / ALPHA_TRAJECTORY_FILE, index=False)
        alpha_table(trained.model).to_csv(out / ALPHA_TABLE_FILE, index=False)
    return checkpoint


# ── Commands ─────────────────────────────────────────────────────────

def cmd_generate(config: RunConfig, out: Path) -> Dict:
    """Write a synthetic cohort (CSV files and provenance sidecar)."""
    spec = config.to_synthetic_spec()
    cohort = generate_synthetic(spec)
    directory = save_csv(cohort, Path(out) / COHORT_SUBDIR)
    write_provenance(directory, spec, cohort)
    counts = cohort.counts()
    _banner(
        "GENERATE — SYNTHETIC COHORT",
        [
            f"Directory: {directory}",
            f"Subjects: {counts}",
            f"Modalities: {dict(zip(spec.modality_names, spec.features))}",
            f"Seed: {spec.seed}",
        ],
    )
    return {"cohort_dir": str(directory), "counts": counts}


def cmd_train(config: RunConfig, out: Path) -> Dict:
    """Train (or resume) one model; write checkpoint, history and alpha tables."""
    out = Path(out)
    cohort = _load_cohort(config, "train")
    model_config = config.to_model_config()
    view_dims_for(model_config, [cohort.n_features[name] for name in cohort.modality_names])
    if config.resume:
        loaded = load_model(_require(config.checkpoint, "checkpoint", "train with resume=true"))
        trained = resume_model(loaded, cohort, config=model_config)
    else:
        trained = train_model(cohort, model_config, use_confounds=config.use_confounds)
    checkpoint = write_training_outputs(trained, out, cohort.feature_names)
    history = trained.history
    _banner(
        f"TRAIN — {trained.model.name.upper()}",
        [
            f"Latent dim: {model_config.latent_dim}",
            f"Epochs trained: {trained.model.epochs_trained} (stopped early: {history.stopped_early})",
            f"Best epoch: {history.best_epoch}  val_loss: {history.best_val_loss:.4f}",
            f"Checkpoint: {checkpoint}",
        ],
    )
    return {
        "checkpoint": str(checkpoint),
        "epochs_trained": trained.model.epochs_trained,
        "best_epoch": history.best_epoch,
        "best_val_loss": history.best_val_loss,
    }


def cmd_finetune(config: RunConfig, out: Path) -> Dict:
    """Fine-tune a checkpoint on a new cohort's healthy_train subjects."""
    out = Path(out)
    loaded = load_model(_require(config.checkpoint, "checkpoint", "finetune"))
    cohort = _load_cohort(config, "finetune")
    trained = fine_tune_model(
        loaded, cohort, max_epochs=config.fine_tune_max_epochs, use_confounds=config.use_confounds
    )
    checkpoint = write_training_outputs(trained, out, cohort.feature_names)
    _banner(
        f"FINETUNE — {trained.model.name.upper()}",
        [
            f"Epochs: {trained.history.last_epoch} (max {config.fine_tune_max_epochs})",
            f"Checkpoint: {checkpoint}",
        ],
    )
    return {"checkpoint": str(checkpoint), "epochs": trained.history.last_epoch}


def score_loaded(loaded: LoadedModel, cohort: Cohort, config: RunConfig) -> DeviationReport:
    if loaded.preprocess is None:
        raise ConfigError("Checkpoint carries no preprocessing statistics; retrain with this version")
    processed = apply_preprocessing(cohort, loaded.preprocess)
    return score_cohort(
        loaded.model,
        processed,
        reference=config.reference_cohort,
        robust=config.robust,
        use_posterior_mean=config.use_posterior_mean,
        seed=config.seed,
        p_threshold=config.p_threshold,
    )


def cmd_score(config: RunConfig, out: Path) -> Dict:
    """Score every subject of a cohort against the reference cohort."""
    loaded = load_model(_require(config.checkpoint, "checkpoint", "score"))
    cohort = _load_cohort(config, "score")
    report = score_loaded(loaded, cohort, config)
    directory = report.write(Path(out))
    summary = report.group_summary()
    _banner(
        f"SCORE — {report.meta.model_name.upper()}",
        [f"Report: {directory}"]
        + [
            f"{row.cohort}: n={row.n} mean D_ml={row.D_ml_mean:.3f} mean D_mf={row.D_mf_mean:.3f}"
            for row in summary.itertuples()
        ],
    )
    return {"report_dir": str(directory), "n_subjects": report.n_subjects}


def _json_number(value: float) -> Optional[float]:
    return None if value is None or not math.isfinite(value) else float(value)


def evaluate_reports(
    reports: List[DeviationReport],
    out: Path,
    config: RunConfig,
    cohort: Optional[Cohort] = None,
) -> Dict:
    """Significance table, covariate correlations and plot data for scored models."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    table = significance_table(reports, config.metrics)
    wide = pivot_significance(table)
    wide.to_csv(out / "significance_table.csv")

    records = []
    for row in table.to_dict(orient="records"):
        row["ratio"] = _json_number(row["ratio"])
        records.append({k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in row.items()})
    document = {
        "rows": list(wide.index),
        "columns": list(wide.columns),
        "results": records,
    }
    (out / "significance.json").write_text(json.dumps(document, indent=2, allow_nan=False), encoding="utf-8")

    covariates = None
    correlations = []
    if cohort is not None and cohort.covariates is not None:
        covariates = cohort.covariates.set_axis(cohort.subject_ids)
        if config.correlate_covariate and config.correlate_covariate in covariates.columns:
            correlations = covariate_correlations(reports, covariates, config.correlate_covariate)
    (out / "correlations.json").write_text(json.dumps(correlations, indent=2, allow_nan=False), encoding="utf-8")
    plot_data(reports, covariates).to_csv(out / "plot_data.csv", index=False)

    lines = [f"Models: {len(wide.index)}  Columns: {len(wide.columns)}", f"Output: {out}"]
    for model_name, values in wide.iterrows():
        cells = "  ".join(f"{col}={'inf' if math.isinf(v) else f'{v:.2f}'}" for col, v in values.items() if pd.notna(v))
        lines.append(f"{model_name}: {cells}")
    _banner("EVALUATE — SIGNIFICANCE RATIOS", lines)
    return {"table": wide, "correlations": correlations}


def cmd_evaluate(config: RunConfig, out: Path) -> Dict:
    """Significance-ratio table, correlations and plot data from report directories."""
    if not config.reports:
        raise ConfigError("'reports' must list at least one report directory for evaluate")
    reports = [load_report(path) for path in config.reports]
    cohort = _load_cohort(config, "evaluate") if config.cohort_dir is not None else None
    return evaluate_reports(reports, Path(out), config, cohort)


def benchmark_configs(config: RunConfig, n_modalities: int) -> List[RunConfig]:
    """One run config per (model of the menu, latent size); unimodal expands per modality."""
    runs = []
    for latent_dim in config.latent_dims:
        for fusion in config.benchmark_models:
            if fusion == FusionKind.UNIMODAL:
                for m in range(n_modalities):
                    runs.append(config.model_copy(update={"latent_dim": latent_dim, "fusion": fusion, "modality": m}))
            else:
                runs.append(config.model_copy(update={"latent_dim": latent_dim, "fusion": fusion, "modality": None}))
    return runs


def cmd_benchmark(config: RunConfig, out: Path) -> Dict:
    """Generate → train every model of the menu per latent size → score → evaluate."""
    out = Path(out)
    if config.cohort_dir is not None:
        cohort = _load_cohort(config, "benchmark")
    else:
        spec = config.to_synthetic_spec()
        cohort = generate_synthetic(spec)
        write_provenance(save_csv(cohort, out / COHORT_SUBDIR), spec, cohort)
    runs = benchmark_configs(config, len(cohort.modality_names))
    reports = []
    for i, run in enumerate(runs, start=1):
        model_config = run.to_model_config()
        trained = train_model(cohort, model_config, use_confounds=run.use_confounds)
        tag = f"{trained.model.name}-L{model_config.latent_dim}"
        print(f"  [step {i}/{len(runs)}] {tag}: epochs={trained.model.epochs_trained} "
              f"best_val_loss={trained.history.best_val_loss:.4f}")
        write_training_outputs(trained, out / "models" / tag, cohort.feature_names)
        processed = apply_preprocessing(cohort, trained.preprocess)
        report = score_cohort(
            trained.model,
            processed,
            reference=run.reference_cohort,
            robust=run.robust,
            use_posterior_mean=run.use_posterior_mean,
            seed=run.seed,
            p_threshold=run.p_threshold,
        )
        report.write(out / "reports" / tag)
        reports.append(report)
    return evaluate_reports(reports, out / "evaluation", config, cohort)


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "finetune": cmd_finetune,
    "score": cmd_score,
    "evaluate": cmd_evaluate,
    "benchmark": cmd_benchmark,
}
