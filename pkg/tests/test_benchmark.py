"""
End-to-end behaviour on synthetic cohorts.

Trains the joint models and both single-modality baselines on seeded
synthetic cohorts, then checks that healthy holdout subjects are rarely
flagged, that latent deviations separate disease better than feature-space
ones, that joint models beat single-modality ones and that gPoE weights
favour the cleaner modality. Every test here is marked slow.

Usage:
    pytest tests/test_benchmark.py -v -m slow
"""

import numpy as np
import pytest

from normflux.data import fit_preprocessing, generate_synthetic
from normflux.deviation import Metric, evaluate_report
from normflux.gradnet import no_grad
from normflux.mvae import MvaeModel, draw_noise, fine_tune, get_alpha, model_loss, train
from normflux.pipeline import healthy_matrices, score_cohort
from normflux.schemas import CohortLabel, FusionKind, ModelConfig, SyntheticSpec

pytestmark = pytest.mark.slow

SEEDS = range(5)
JOINT_FUSIONS = [FusionKind.GPOE, FusionKind.MOE, FusionKind.POE]
SINGLE_MODALITY = ["unimodal-0", "unimodal-1"]


def benchmark_spec(seed, **overrides):
    """Default generator (shift of 2 on 3 of 8 latents) with a large holdout."""
    fields = dict(n_train=1000, n_holdout=4000, n_disease=500, seed=seed)
    fields.update(overrides)
    return SyntheticSpec(**fields)


def benchmark_config(seed, **overrides):
    fields = dict(latent_dim=10, max_epochs=150, learning_rate=1e-3, batch_size=256, log_every=1000, seed=seed)
    fields.update(overrides)
    return ModelConfig(**fields)


def holdout_loss(model, processed):
    holdout = processed.select(CohortLabel.HEALTHY_HOLDOUT).matrices()
    noise = draw_noise(model, holdout[0].shape[0], np.random.default_rng(0))
    with no_grad():
        return model_loss(model, holdout, noise).item()


def fit_and_score(processed, config):
    model = MvaeModel.create(
        config, processed.modality_names, [processed.n_features[n] for n in processed.modality_names]
    )
    before = holdout_loss(model, processed)
    history = train(model, healthy_matrices(processed))
    return {
        "model": model,
        "history": history,
        "loss_before": before,
        "loss_after": holdout_loss(model, processed),
        "report": score_cohort(model, processed),
    }


def ratio(run, metric):
    return evaluate_report(run["report"], metric).ratio_value


@pytest.fixture(scope="module")
def benchmark():
    """{seed: (processed cohort, {tag: run})} for every joint model and both baselines."""
    results = {}
    for seed in SEEDS:
        processed, _ = fit_preprocessing(generate_synthetic(benchmark_spec(seed)))
        runs = {f.value: fit_and_score(processed, benchmark_config(seed, fusion=f)) for f in JOINT_FUSIONS}
        for m in range(2):
            config = benchmark_config(seed, fusion=FusionKind.UNIMODAL, modality=m)
            runs[f"unimodal-{m}"] = fit_and_score(processed, config)
        results[seed] = (processed, runs)
    return results


# ── Calibration on healthy holdout subjects ──────────────────────────

class TestHoldoutCalibration:
    def test_latent_flag_rate_stays_low(self, benchmark):
        report = benchmark[0][1]["gpoe"]["report"]
        holdout = report.mask(CohortLabel.HEALTHY_HOLDOUT)
        assert holdout.sum() >= 2000
        assert report.flags(Metric.D_ML)[holdout].mean() <= 0.02

    def test_feature_deviations_centred_on_zero(self, benchmark):
        report = benchmark[0][1]["gpoe"]["report"]
        means = np.nanmean(report.d_uf[report.mask(CohortLabel.HEALTHY_HOLDOUT)], axis=0)
        assert np.all(np.abs(means) < 0.1), np.abs(means).max()


# ── Training ─────────────────────────────────────────────────────────

class TestTrainingLoss:
    def test_gpoe_validation_loss_drops_by_a_third(self, benchmark):
        for seed in SEEDS:
            run = benchmark[seed][1]["gpoe"]
            assert run["loss_after"] <= 0.7 * run["loss_before"], seed

    def test_fine_tune_on_training_data_keeps_loss(self, benchmark):
        processed, runs = benchmark[0]
        model = runs["gpoe"]["model"]
        state, optimizer_state = model.state_arrays(), model.optimizer_state
        before = holdout_loss(model, processed)
        try:
            fine_tune(model, healthy_matrices(processed), max_epochs=20)
            after = holdout_loss(model, processed)
        finally:
            model.load_state_arrays(state)
            model.optimizer_state = optimizer_state
        assert after <= 1.05 * before


# ── Metric and model ordering ────────────────────────────────────────

class TestOrdering:
    def test_disease_mean_latent_deviation_exceeds_holdout(self, benchmark):
        for seed in SEEDS:
            for fusion in JOINT_FUSIONS:
                report = benchmark[seed][1][fusion.value]["report"]
                disease = report.d_ml[report.mask(CohortLabel.DISEASE)].mean()
                holdout = report.d_ml[report.mask(CohortLabel.HEALTHY_HOLDOUT)].mean()
                assert disease > holdout, (seed, fusion.value)

    @pytest.mark.parametrize("fusion", JOINT_FUSIONS, ids=lambda f: f.value)
    def test_latent_ratio_beats_feature_ratio(self, benchmark, fusion):
        wins = sum(
            ratio(runs[fusion.value], Metric.D_ML) >= 1.5 * ratio(runs[fusion.value], Metric.D_MF)
            for _, runs in benchmark.values()
        )
        assert wins >= 4

    @pytest.mark.parametrize("fusion", JOINT_FUSIONS, ids=lambda f: f.value)
    def test_joint_model_beats_best_single_modality(self, benchmark, fusion):
        wins = sum(
            ratio(runs[fusion.value], Metric.D_ML) >= max(ratio(runs[tag], Metric.D_ML) for tag in SINGLE_MODALITY)
            for _, runs in benchmark.values()
        )
        assert wins >= 4


# ── gPoE weights ─────────────────────────────────────────────────────

class TestGpoeWeights:
    def test_cleaner_modality_gets_more_weight(self):
        favoured = 0
        for seed in SEEDS:
            spec = benchmark_spec(seed, n_holdout=10, n_disease=10, noise_std=[0.3, 3.0])
            processed, _ = fit_preprocessing(generate_synthetic(spec))
            model = MvaeModel.create(
                benchmark_config(seed), processed.modality_names,
                [processed.n_features[n] for n in processed.modality_names],
            )
            train(model, healthy_matrices(processed))
            favoured += get_alpha(model).alpha[0].mean() > 0.5
        assert favoured >= 4
