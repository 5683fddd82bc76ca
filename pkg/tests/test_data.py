"""
Cohort data tests.

Synthetic generation, confound regression, standardisation and CSV
ingestion.

Usage:
    pytest tests/test_data.py -v
"""

import json

import numpy as np
import pandas as pd
import pytest

from normflux.data import (
    Cohort,
    PreprocessStats,
    analytic_shift,
    apply_preprocessing,
    deconfound,
    fit_confounds,
    fit_preprocessing,
    generate_loadings,
    generate_synthetic,
    load_cohort_dir,
    load_csv,
    save_csv,
    standardize,
    unstandardize,
    write_provenance,
)
from normflux.errors import DataError
from normflux.schemas import CohortLabel, CohortProvenance, SyntheticSpec


def make_cohort(features, labels=None, covariates=None, name="a"):
    n = features.shape[0]
    labels = labels if labels is not None else [CohortLabel.HEALTHY_TRAIN.value] * n
    return Cohort(
        modalities={name: features},
        subject_ids=[f"s{i}" for i in range(n)],
        labels=np.asarray(labels, dtype=object),
        covariates=covariates,
    )


@pytest.fixture
def confound_covariates(rng):
    n = 120
    return pd.DataFrame({"age": rng.uniform(45.0, 80.0, n), "icv": rng.normal(1500.0, 150.0, n)})


# ── Cohort ───────────────────────────────────────────────────────────

class TestCohort:
    def test_rejects_unknown_label(self):
        with pytest.raises(DataError):
            make_cohort(np.zeros((2, 1)), labels=["healthy_train", "patient"])

    def test_rejects_duplicate_ids(self):
        with pytest.raises(DataError):
            Cohort(modalities={"a": np.zeros((2, 1))}, subject_ids=["x", "x"],
                   labels=np.array(["disease", "disease"], dtype=object))

    def test_rejects_non_finite(self):
        with pytest.raises(DataError):
            make_cohort(np.array([[1.0], [np.inf]]))

    def test_rejects_row_mismatch(self):
        with pytest.raises(DataError):
            Cohort(modalities={"a": np.zeros((2, 1)), "b": np.zeros((3, 1))}, subject_ids=["x", "y"],
                   labels=np.array(["disease", "disease"], dtype=object))

    def test_select_and_counts(self, small_cohort):
        assert small_cohort.counts() == {"healthy_train": 150, "healthy_holdout": 60, "disease": 40}
        disease = small_cohort.select(CohortLabel.DISEASE)
        assert disease.n_subjects == 40
        assert disease.covariates["severity"].eq(1.0).all()
        assert small_cohort.n_features == {"t1": 6, "dti": 5}


# ── Synthetic generation ─────────────────────────────────────────────

class TestSynthetic:
    """Latent factor generator."""

    def test_same_seed_same_cohort(self, small_spec):
        a, b = generate_synthetic(small_spec), generate_synthetic(small_spec)
        for name in a.modality_names:
            assert np.array_equal(a.modalities[name], b.modalities[name])
        assert a.subject_ids == b.subject_ids
        pd.testing.assert_frame_equal(a.covariates, b.covariates)

    def test_different_seed_differs(self, small_spec):
        other = small_spec.model_copy(update={"seed": small_spec.seed + 1})
        a, b = generate_synthetic(small_spec), generate_synthetic(other)
        assert not np.array_equal(a.modalities["t1"], b.modalities["t1"])

    def test_zero_shift_gives_matching_cohorts(self):
        spec = SyntheticSpec(n_train=10, n_holdout=2000, n_disease=2000, latent_true=2, features=[5, 4],
                             disease_shift=0.0, shifted_latents=[0], seed=1)
        cohort = generate_synthetic(spec)
        holdout = cohort.select(CohortLabel.HEALTHY_HOLDOUT)
        disease = cohort.select(CohortLabel.DISEASE)
        for name in cohort.modality_names:
            diff = disease.modalities[name].mean(axis=0) - holdout.modalities[name].mean(axis=0)
            se = np.sqrt(
                disease.modalities[name].var(axis=0) / 2000 + holdout.modalities[name].var(axis=0) / 2000
            )
            assert np.all(np.abs(diff) < 5 * se)

    def test_disease_shift_matches_loadings(self):
        spec = SyntheticSpec(n_train=10, n_holdout=3000, n_disease=3000, latent_true=3, features=[4, 3],
                             disease_shift=2.0, shifted_latents=[0, 2], seed=5)
        loadings = generate_loadings(spec, np.random.default_rng(spec.seed))
        cohort = generate_synthetic(spec)
        expected = analytic_shift(spec, loadings)
        holdout = cohort.select(CohortLabel.HEALTHY_HOLDOUT)
        disease = cohort.select(CohortLabel.DISEASE)
        for name in cohort.modality_names:
            diff = disease.modalities[name].mean(axis=0) - holdout.modalities[name].mean(axis=0)
            se = np.sqrt(
                disease.modalities[name].var(axis=0) / 3000 + holdout.modalities[name].var(axis=0) / 3000
            )
            assert np.all(np.abs(diff - expected[name]) < 5 * se)

    def test_tiny_noise_lies_in_loading_row_space(self):
        spec = SyntheticSpec(n_train=200, n_holdout=5, n_disease=5, latent_true=2, features=[6],
                             modality_names=["t1"], noise_std=[1e-9], shifted_latents=[0], seed=2)
        x = generate_synthetic(spec).select(CohortLabel.HEALTHY_TRAIN).modalities["t1"]
        s = np.linalg.svd(x, compute_uv=False)
        assert s[2] / s[0] < 1e-6

    def test_explicit_loadings(self, small_spec):
        loadings = [np.ones((3, 6)), np.zeros((3, 5))]
        cohort = generate_synthetic(small_spec, loadings=loadings)
        assert cohort.n_features == {"t1": 6, "dti": 5}
        with pytest.raises(ValueError):
            generate_synthetic(small_spec, loadings=[np.ones((2, 6)), np.zeros((3, 5))])

    def test_severity_spread(self, small_spec):
        spec = small_spec.model_copy(update={"severity_spread": 0.5})
        severity = generate_synthetic(spec).select(CohortLabel.DISEASE).covariates["severity"]
        assert severity.between(0.5, 1.5).all()
        assert severity.std() > 0.0

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            SyntheticSpec(features=[3, 3], modality_names=["t1"], noise_std=[0.5, 0.5])
        with pytest.raises(ValueError):
            SyntheticSpec(latent_true=2, shifted_latents=[2])

    def test_provenance(self, small_spec, small_cohort, tmp_path):
        path = write_provenance(tmp_path, small_spec, small_cohort)
        provenance = CohortProvenance.model_validate_json(path.read_text())
        assert provenance.spec == small_spec
        assert provenance.modality_order == ["t1", "dti"]
        assert provenance.counts["disease"] == 40


# ── Preprocessing ────────────────────────────────────────────────────

class TestDeconfound:
    """Cubic age and linear ICV regression on healthy controls."""

    def test_pure_age_effect_is_removed(self, confound_covariates):
        age = confound_covariates["age"].to_numpy()
        cohort = make_cohort(np.column_stack([3.0 * age, -0.5 * age]), covariates=confound_covariates)
        residual, stats = deconfound(cohort)
        np.testing.assert_allclose(residual.modalities["a"], 0.0, atol=1e-8)
        assert stats.confound.coefficients["a"].shape == (5, 2)

    def test_residuals_orthogonal_to_design(self, confound_covariates, rng):
        cohort = make_cohort(rng.standard_normal((120, 3)), covariates=confound_covariates)
        residual, stats = deconfound(cohort)
        design = stats.confound.design(confound_covariates)
        np.testing.assert_allclose(design.T @ residual.modalities["a"], 0.0, atol=1e-8)

    def test_idempotent(self, confound_covariates, rng):
        cohort = make_cohort(rng.standard_normal((120, 3)), covariates=confound_covariates)
        once, _ = deconfound(cohort)
        twice, _ = deconfound(once)
        np.testing.assert_allclose(twice.modalities["a"], once.modalities["a"], atol=1e-10)

    def test_fitted_on_healthy_train_only(self, confound_covariates):
        age = confound_covariates["age"].to_numpy()
        labels = ["healthy_train"] * 100 + ["disease"] * 20
        x = 3.0 * age
        x[100:] += 10.0
        cohort = make_cohort(x[:, None], labels=labels, covariates=confound_covariates)
        residual, _ = deconfound(cohort)
        np.testing.assert_allclose(residual.modalities["a"][:100], 0.0, atol=1e-8)
        np.testing.assert_allclose(residual.modalities["a"][100:], 10.0, atol=1e-8)

    def test_missing_covariates(self, rng):
        with pytest.raises(DataError):
            deconfound(make_cohort(rng.standard_normal((10, 2))))
        partial = pd.DataFrame({"age": np.arange(10.0)})
        with pytest.raises(DataError):
            deconfound(make_cohort(rng.standard_normal((10, 2)), covariates=partial))

    def test_rank_deficient_design(self, rng):
        covariates = pd.DataFrame({"age": np.full(20, 60.0), "icv": rng.normal(1500.0, 150.0, 20)})
        with pytest.raises(DataError):
            fit_confounds(make_cohort(rng.standard_normal((20, 2)), covariates=covariates))


class TestStandardize:
    def test_healthy_train_moments(self, small_cohort):
        processed, _ = fit_preprocessing(small_cohort)
        for x in processed.select(CohortLabel.HEALTHY_TRAIN).matrices():
            np.testing.assert_allclose(x.mean(axis=0), 0.0, atol=1e-12)
            np.testing.assert_allclose(x.std(axis=0), 1.0, rtol=1e-12)

    def test_round_trip(self, small_cohort):
        scaled, stats = standardize(small_cohort)
        restored = unstandardize(scaled, stats)
        for name in small_cohort.modality_names:
            np.testing.assert_allclose(restored.modalities[name], small_cohort.modalities[name], rtol=1e-12,
                                       atol=1e-12)

    def test_statistics_ignore_non_training_rows(self, small_cohort):
        _, before = standardize(small_cohort)
        shifted = small_cohort.replace_modalities(
            {name: np.where(small_cohort.mask(CohortLabel.DISEASE)[:, None], x + 100.0, x)
             for name, x in small_cohort.modalities.items()}
        )
        _, after = standardize(shifted)
        for name in small_cohort.modality_names:
            assert np.array_equal(before.mean[name], after.mean[name])
            assert np.array_equal(before.std[name], after.std[name])

    def test_zero_variance_feature_raises(self):
        x = np.column_stack([np.arange(5.0), np.ones(5)])
        with pytest.raises(DataError):
            standardize(make_cohort(x))

    def test_apply_matches_fit(self, small_cohort):
        processed, stats = fit_preprocessing(small_cohort, use_confounds=True)
        reapplied = apply_preprocessing(small_cohort, PreprocessStats.from_dict(stats.to_dict()))
        for name in small_cohort.modality_names:
            np.testing.assert_allclose(reapplied.modalities[name], processed.modalities[name], atol=1e-12)

    def test_apply_rejects_wrong_width(self, small_cohort):
        _, stats = fit_preprocessing(small_cohort)
        narrow = make_cohort(np.zeros((3, 2)), name="t1")
        with pytest.raises(DataError):
            apply_preprocessing(narrow, stats)


# ── CSV ingestion ────────────────────────────────────────────────────

class TestCsv:
    def test_round_trip(self, small_cohort, tmp_path):
        save_csv(small_cohort, tmp_path)
        loaded, report = load_cohort_dir(tmp_path)
        assert report.n_dropped == 0
        assert loaded.subject_ids == small_cohort.subject_ids
        assert loaded.modality_names == small_cohort.modality_names
        assert list(loaded.labels) == list(small_cohort.labels)
        for name in small_cohort.modality_names:
            assert np.array_equal(loaded.modalities[name], small_cohort.modalities[name])
        assert loaded.feature_names == small_cohort.feature_names
        np.testing.assert_array_equal(loaded.covariates["age"], small_cohort.covariates["age"])

    def test_subject_missing_from_a_modality_is_dropped(self, small_cohort, tmp_path):
        save_csv(small_cohort, tmp_path)
        dti = pd.read_csv(tmp_path / "dti.csv", dtype={"subject_id": str})
        dropped_id = dti["subject_id"].iloc[3]
        dti.drop(index=3).to_csv(tmp_path / "dti.csv", index=False)
        loaded, report = load_cohort_dir(tmp_path)
        assert loaded.n_subjects == small_cohort.n_subjects - 1
        assert report.dropped == {dropped_id: ["dti"]}
        assert dropped_id not in loaded.subject_ids

    def test_duplicate_ids_raise(self, small_cohort, tmp_path):
        save_csv(small_cohort, tmp_path)
        t1 = pd.read_csv(tmp_path / "t1.csv", dtype={"subject_id": str})
        pd.concat([t1, t1.iloc[[0]]]).to_csv(tmp_path / "t1.csv", index=False)
        with pytest.raises(DataError):
            load_cohort_dir(tmp_path)

    def test_non_numeric_cell_raises(self, small_cohort, tmp_path):
        save_csv(small_cohort, tmp_path)
        t1 = pd.read_csv(tmp_path / "t1.csv", dtype={"subject_id": str}).astype({"t1_002": object})
        t1.loc[5, "t1_002"] = "abc"
        t1.to_csv(tmp_path / "t1.csv", index=False)
        with pytest.raises(DataError, match="Non-numeric"):
            load_cohort_dir(tmp_path)

    def test_unknown_label_raises(self, small_cohort, tmp_path):
        save_csv(small_cohort, tmp_path)
        labels = pd.read_csv(tmp_path / "labels.csv", dtype={"subject_id": str})
        labels.loc[0, "label"] = "patient"
        labels.to_csv(tmp_path / "labels.csv", index=False)
        with pytest.raises(DataError):
            load_cohort_dir(tmp_path)

    def test_load_csv_explicit_paths(self, small_cohort, tmp_path):
        save_csv(small_cohort, tmp_path)
        loaded, report = load_csv({"t1": tmp_path / "t1.csv"}, tmp_path / "labels.csv")
        assert report.n_dropped == 0
        assert loaded.modality_names == ["t1"]
        assert loaded.covariates is None
        assert np.array_equal(loaded.modalities["t1"], small_cohort.modalities["t1"])

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_cohort_dir(tmp_path)

    def test_manifest_contents(self, small_cohort, tmp_path):
        save_csv(small_cohort, tmp_path)
        manifest = json.loads((tmp_path / "cohort.json").read_text())
        assert manifest["modalities"] == ["t1", "dti"]
        assert manifest["files"] == {"t1": "t1.csv", "dti": "dti.csv"}
