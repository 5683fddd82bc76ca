"""
Expert fusion tests.

Closed-form PoE / gPoE / MoE algebra checked against grid products,
Monte-Carlo KL estimates and algebraic properties.

Usage:
    pytest tests/test_fusion.py -v
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats
from scipy.integrate import trapezoid

from normflux.fusion import (
    DiagGaussian,
    GpoeWeights,
    MixturePosterior,
    gpoe_fuse,
    kl_to_std_normal,
    log_pdf,
    moe_sample,
    poe_fuse,
    reparam_sample,
    weighted_fuse,
)
from normflux.gradnet import Tensor
from normflux.gradnet import tensor as gt

GRID = np.linspace(-15.0, 15.0, 30001)


def grid_moments(log_density: np.ndarray) -> tuple[float, float]:
    p = np.exp(log_density - log_density.max())
    p /= trapezoid(p, GRID)
    mean = trapezoid(GRID * p, GRID)
    var = trapezoid((GRID - mean) ** 2 * p, GRID)
    return float(mean), float(var)


expert_params = st.tuples(
    st.floats(-3.0, 3.0, allow_nan=False),
    st.floats(0.05, 5.0, allow_nan=False),
)


def expert_list(params):
    return [DiagGaussian(np.array([m]), np.array([v])) for m, v in params]


# ── Types ────────────────────────────────────────────────────────────

class TestDiagGaussian:
    """Construction and validation."""

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            DiagGaussian(np.zeros(2), np.ones(3))

    @pytest.mark.parametrize("var", [0.0, -1.0])
    def test_rejects_non_positive_variance(self, var):
        with pytest.raises(ValueError):
            DiagGaussian(np.zeros(2), np.array([1.0, var]))

    def test_rejects_scalars(self):
        with pytest.raises(ValueError):
            DiagGaussian(0.0, 1.0)

    def test_from_logvar_floors_variance(self):
        g = DiagGaussian.from_logvar(np.zeros(2), np.array([0.0, -1000.0]))
        assert np.array_equal(g.var, [1.0, 1e-8])

    def test_from_logvar_tensor_keeps_tape(self):
        logvar = Tensor(np.zeros(2), requires_grad=True)
        g = DiagGaussian.from_logvar(Tensor(np.zeros(2)), logvar)
        gt.tsum(g.var).backward()
        assert np.array_equal(logvar.grad, [1.0, 1.0])

    def test_standard_and_detach(self):
        g = DiagGaussian.standard(3)
        assert g.dim == 3
        t = DiagGaussian(Tensor(np.ones(3), requires_grad=True), Tensor(np.ones(3)))
        assert isinstance(t.detach().mean, np.ndarray)


class TestGpoeWeights:
    """Simplex constraints on alpha."""

    def test_uniform(self):
        w = GpoeWeights.uniform(2, 4)
        assert w.n_modalities == 2 and w.dim == 4
        assert np.all(w.alpha == 0.5)

    @pytest.mark.parametrize("alpha", [[[1.0], [0.0]], [[0.6], [0.6]], [[-0.5], [1.5]]])
    def test_rejects_off_simplex(self, alpha):
        with pytest.raises(ValueError):
            GpoeWeights(np.array(alpha))

    def test_single_modality_alpha_one(self):
        assert GpoeWeights(np.ones((1, 3))).n_modalities == 1

    def test_needs_matrix(self):
        with pytest.raises(ValueError):
            GpoeWeights(np.array([0.5, 0.5]))


class TestMixturePosterior:
    def test_mean_is_average_of_component_means(self):
        mix = MixturePosterior((DiagGaussian(np.array([1.0]), np.ones(1)), DiagGaussian(np.array([3.0]), np.ones(1))))
        assert mix.mean()[0] == pytest.approx(2.0)
        assert np.array_equal(mix.weights, [0.5, 0.5])

    def test_rejects_empty_and_mismatched(self):
        with pytest.raises(ValueError):
            MixturePosterior(())
        with pytest.raises(ValueError):
            MixturePosterior((DiagGaussian.standard(2), DiagGaussian.standard(3)))


# ── Fusion ───────────────────────────────────────────────────────────

class TestPoe:
    """Product of experts."""

    def test_singleton_is_identity(self):
        e = DiagGaussian(np.array([0.3, -1.0]), np.array([2.0, 0.5]))
        fused = poe_fuse([e])
        np.testing.assert_allclose(fused.mean, e.mean, rtol=1e-15)
        np.testing.assert_allclose(fused.var, e.var, rtol=1e-15)

    def test_two_equal_experts_halve_variance(self):
        e = DiagGaussian(np.array([1.0]), np.array([2.0]))
        fused = poe_fuse([e, e])
        assert fused.mean[0] == pytest.approx(1.0)
        assert fused.var[0] == pytest.approx(1.0)

    def test_empty_and_mismatch_raise(self):
        with pytest.raises(ValueError):
            poe_fuse([])
        with pytest.raises(ValueError):
            poe_fuse([DiagGaussian.standard(2), DiagGaussian.standard(3)])

    def test_matches_grid_product_on_random_pairs(self, rng):
        for _ in range(100):
            means = rng.uniform(-2, 2, 2)
            variances = rng.uniform(0.3, 3.0, 2)
            fused = poe_fuse(expert_list(zip(means, variances)))
            log_density = sum(stats.norm.logpdf(GRID, m, np.sqrt(v)) for m, v in zip(means, variances))
            mean, var = grid_moments(log_density)
            assert fused.mean[0] == pytest.approx(mean, abs=1e-6)
            assert fused.var[0] == pytest.approx(var, abs=1e-6)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(expert_params, min_size=2, max_size=5), st.randoms(use_true_random=False))
    def test_permutation_invariant(self, params, random):
        shuffled = list(params)
        random.shuffle(shuffled)
        a, b = poe_fuse(expert_list(params)), poe_fuse(expert_list(shuffled))
        np.testing.assert_allclose(a.mean, b.mean, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(a.var, b.var, rtol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(expert_params, min_size=1, max_size=4), expert_params)
    def test_adding_an_expert_increases_precision(self, params, extra):
        before = poe_fuse(expert_list(params))
        after = poe_fuse(expert_list(params + [extra]))
        assert after.precision[0] > before.precision[0]


class TestGpoe:
    """Generalised product of experts."""

    def test_matches_grid_product_with_random_alpha(self, rng):
        for _ in range(100):
            means = rng.uniform(-2, 2, 2)
            variances = rng.uniform(0.3, 3.0, 2)
            a = rng.uniform(0.05, 0.95)
            weights = GpoeWeights(np.array([[a], [1.0 - a]]))
            fused = gpoe_fuse(expert_list(zip(means, variances)), weights)
            log_density = sum(
                w * stats.norm.logpdf(GRID, m, np.sqrt(v))
                for w, m, v in zip((a, 1.0 - a), means, variances)
            )
            mean, var = grid_moments(log_density)
            assert fused.mean[0] == pytest.approx(mean, abs=1e-6)
            assert fused.var[0] == pytest.approx(var, abs=1e-6)

    def test_uniform_alpha_equals_poe_of_widened_experts(self, rng):
        experts = [DiagGaussian(rng.standard_normal(3), rng.uniform(0.5, 2, 3)) for _ in range(2)]
        fused = gpoe_fuse(experts, GpoeWeights.uniform(2, 3))
        widened = poe_fuse([DiagGaussian(e.mean, e.var * 2.0) for e in experts])
        np.testing.assert_allclose(fused.mean, widened.mean, rtol=1e-12)
        np.testing.assert_allclose(fused.var, widened.var, rtol=1e-12)

    def test_single_modality_reduces_to_expert(self):
        e = DiagGaussian(np.array([0.5, 1.5]), np.array([0.2, 3.0]))
        fused = gpoe_fuse([e], GpoeWeights(np.ones((1, 2))))
        np.testing.assert_allclose(fused.var, e.var, rtol=1e-15)

    def test_weight_rows_must_match_experts(self):
        with pytest.raises(ValueError):
            gpoe_fuse([DiagGaussian.standard(2)], GpoeWeights.uniform(2, 2))

    def test_weighted_fuse_batched_and_differentiable(self, rng):
        logits = Tensor(rng.standard_normal((2, 3)), requires_grad=True)
        experts = [DiagGaussian(rng.standard_normal((4, 3)), rng.uniform(0.5, 2.0, (4, 3))) for _ in range(2)]
        fused = weighted_fuse(experts, gt.softmax(logits, axis=0))
        assert fused.mean.shape == (4, 3)
        gt.tsum(fused.mean).backward()
        assert logits.grad is not None and np.any(logits.grad != 0)


# ── Densities and sampling ───────────────────────────────────────────

class TestKlAndDensity:
    """KL to the prior, log density and sampling."""

    def test_kl_zero_for_prior(self):
        assert kl_to_std_normal(DiagGaussian.standard(4)) == pytest.approx(0.0)

    def test_kl_batched_one_value_per_row(self, rng):
        q = DiagGaussian(rng.standard_normal((5, 3)), rng.uniform(0.5, 2.0, (5, 3)))
        assert kl_to_std_normal(q).shape == (5,)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(expert_params, min_size=1, max_size=6))
    def test_kl_non_negative(self, params):
        mean = np.array([m for m, _ in params])
        var = np.array([v for _, v in params])
        assert kl_to_std_normal(DiagGaussian(mean, var)) >= -1e-12

    def test_kl_matches_monte_carlo(self, rng):
        n = 1_000_000
        for _ in range(10):
            q = DiagGaussian(rng.uniform(-1.5, 1.5, 3), rng.uniform(0.3, 2.5, 3))
            z = np.asarray(reparam_sample(q, rng.standard_normal((n, 3))))
            q_batch = DiagGaussian(np.broadcast_to(q.mean, (n, 3)), np.broadcast_to(q.var, (n, 3)))
            p_batch = DiagGaussian(np.zeros((n, 3)), np.ones((n, 3)))
            ratio = log_pdf(q_batch, z) - log_pdf(p_batch, z)
            se = ratio.std(ddof=1) / np.sqrt(n)
            assert abs(ratio.mean() - kl_to_std_normal(q)) < 4 * se + 1e-12

    def test_log_pdf_matches_scipy(self, rng):
        g = DiagGaussian(rng.standard_normal(4), rng.uniform(0.2, 3.0, 4))
        x = rng.standard_normal(4)
        expected = stats.norm.logpdf(x, g.mean, np.sqrt(g.var)).sum()
        assert log_pdf(g, x) == pytest.approx(expected, rel=1e-12)

    def test_log_pdf_integrates_to_one(self, rng):
        for _ in range(5):
            g = DiagGaussian(rng.uniform(-1.0, 1.0, 1), rng.uniform(0.3, 3.0, 1))
            density = np.exp(log_pdf(g, GRID[:, None]))
            assert abs(trapezoid(density, GRID) - 1.0) < 1e-6

    def test_log_pdf_dimension_mismatch(self):
        with pytest.raises(ValueError):
            log_pdf(DiagGaussian.standard(2), np.zeros(3))

    def test_reparam_sample_zero_noise_is_mean(self):
        g = DiagGaussian(np.array([1.0, 2.0]), np.array([4.0, 9.0]))
        assert np.array_equal(reparam_sample(g, np.zeros(2)), g.mean)
        np.testing.assert_allclose(reparam_sample(g, np.ones(2)), [3.0, 5.0])
        with pytest.raises(ValueError):
            reparam_sample(g, np.zeros(3))

    def test_reparam_sample_moments(self, rng):
        n = 100_000
        g = DiagGaussian(np.full((n, 1), 2.0), np.full((n, 1), 9.0))
        z = np.asarray(reparam_sample(g, rng.standard_normal((n, 1))))
        assert abs(z.mean() - 2.0) < 0.05
        assert abs(z.var() - 9.0) < 0.2

    @pytest.mark.slow
    def test_moe_sample_mixture_moments(self):
        mix = MixturePosterior(
            (DiagGaussian(np.array([-3.0]), np.ones(1)), DiagGaussian(np.array([3.0]), np.ones(1)))
        )
        rng = np.random.default_rng(1)
        draws = [moe_sample(mix, rng) for _ in range(100_000)]
        samples = np.array([s[0] for s, _ in draws])
        indices = np.array([i for _, i in draws])
        assert abs(indices.mean() - 0.5) < 0.01
        assert abs(samples.mean()) < 0.05

    def test_moe_sample_picks_components_uniformly(self):
        mix = MixturePosterior(
            (DiagGaussian(np.array([-5.0]), np.ones(1)), DiagGaussian(np.array([5.0]), np.ones(1)))
        )
        rng = np.random.default_rng(0)
        indices = [moe_sample(mix, rng)[1] for _ in range(2000)]
        assert 0.45 < np.mean(indices) < 0.55
        sample, index = moe_sample(mix, rng, noise=np.zeros(1))
        assert sample[0] == mix.components[index].mean[0]
