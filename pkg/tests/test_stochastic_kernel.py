import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scet.embedding_core import rows_from_logits
from scet.errors import DegenerateDistributionError, InfiniteDivergenceError, ValidationError
from scet.stochastic_kernel import (
    RegularizerConfig,
    SamplerConfig,
    entropy,
    exact_expected_score_grad,
    kl_divergence,
    relaxed_categorical_sample,
    score_function_grad,
    select_state,
    selection_distribution,
    transition_regularizer,
    transition_regularizer_grad,
)


def central_fd(fn, x, h=1e-5):
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        up, down = x.copy(), x.copy()
        up[idx] += h
        down[idx] -= h
        grad[idx] = (fn(up) - fn(down)) / (2 * h)
    return grad


def expected_score(logits, prev, scores, tau):
    """Brute-force J(theta) = sum_s q_s f_s through selection_distribution."""
    P = rows_from_logits(logits)
    q = selection_distribution(prev, P, scores, tau)
    return float(q @ scores)


class TestSelection:
    def test_infinite_temperature_returns_row(self, rng):
        P = rows_from_logits(rng.normal(size=(3, 3)))
        q = selection_distribution(1, P, rng.normal(size=3) * 5, 1e9)
        np.testing.assert_allclose(q, P[1], atol=1e-6)

    def test_absorbing_row(self):
        P = np.array([[0.0, 0.0, 1.0], [1 / 3, 1 / 3, 1 / 3], [0.5, 0.5, 0.0]])
        q = selection_distribution(0, P, [10.0, 5.0, -3.0], 0.1)
        np.testing.assert_array_equal(q, [0.0, 0.0, 1.0])

    def test_uniform_row_two_states(self):
        q = selection_distribution(0, np.full((2, 2), 0.5), [1.0, 0.0], 1.0)
        np.testing.assert_allclose(q, [math.e / (math.e + 1), 1 / (math.e + 1)], atol=1e-15)

    def test_degenerate(self):
        P = np.array([[1.0, 0.0], [0.5, 0.5]])
        with pytest.raises(DegenerateDistributionError):
            selection_distribution(0, P, [-np.inf, 0.0], 1.0)

    @given(st.integers(0, 2**32 - 1), st.integers(1, 8), st.floats(0.05, 20))
    def test_valid_and_monotone(self, seed, S, tau):
        rng = np.random.default_rng(seed)
        P = rows_from_logits(rng.normal(size=(S, S)) * 3)
        scores = rng.normal(size=S) * 3
        prev = int(rng.integers(S))
        q = selection_distribution(prev, P, scores, tau)
        assert np.all(q >= 0) and abs(q.sum() - 1) < 1e-9
        k = int(rng.integers(S))
        raised = scores.copy()
        raised[k] += rng.random() * 2
        assert selection_distribution(prev, P, raised, tau)[k] >= q[k] - 1e-15


class TestSelectState:
    def test_argmax(self):
        assert select_state([0.1, 0.8, 0.1], SamplerConfig(mode="argmax")) == 1
        assert select_state([0.4, 0.2, 0.4], SamplerConfig(mode="argmax")) == 0

    def test_one_hot_categorical(self):
        q = np.zeros(5)
        q[3] = 1
        for seed in range(50):
            assert select_state(q, SamplerConfig(), np.random.default_rng(seed)) == 3

    def test_categorical_frequency(self):
        rng = np.random.default_rng(7)
        cfg = SamplerConfig()
        draws = [select_state([0.3, 0.7], cfg, rng) for _ in range(100_000)]
        # binomial sd at n=1e5 is 0.00145, so 0.01 is ~7 sd
        assert abs(np.mean(draws) - 0.7) < 0.01

    def test_deterministic(self):
        q = [0.2, 0.3, 0.5]
        for mode in ("categorical", "relaxed"):
            cfg = SamplerConfig(mode=mode)
            a = [select_state(q, cfg, np.random.default_rng(99)) for _ in range(3)]
            assert len(set(a)) == 1

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            SamplerConfig(temperature=0)
        with pytest.raises(ValidationError):
            SamplerConfig(mode="nucleus")


class TestInformation:
    def test_entropy(self):
        assert entropy(np.full(4, 0.25)) == pytest.approx(math.log(4))
        assert entropy([0, 1, 0]) == 0
        assert entropy([0.5, 0.5, 0, 0]) == pytest.approx(math.log(2))

    def test_kl(self):
        assert kl_divergence([0.2, 0.8], [0.2, 0.8]) == 0
        assert kl_divergence([1, 0], [0.5, 0.5]) == pytest.approx(math.log(2))
        with pytest.raises(InfiniteDivergenceError):
            kl_divergence([0.5, 0.5], [1, 0])

    @given(st.integers(0, 2**32 - 1), st.integers(2, 6))
    def test_kl_nonnegative(self, seed, S):
        rng = np.random.default_rng(seed)
        p, q = rng.dirichlet(np.ones(S)), rng.dirichlet(np.ones(S))
        assert kl_divergence(p, q) >= 0


class TestRegularizer:
    def test_zero_at_prior(self, rng):
        logits = rng.normal(size=(3, 4, 4))
        prior = rows_from_logits(logits[0])
        assert transition_regularizer(logits[:1], RegularizerConfig(1.0, 0.0, prior)) == pytest.approx(0, abs=1e-15)

    def test_zero_weights(self, rng):
        assert transition_regularizer(rng.normal(size=(2, 3, 3)), RegularizerConfig(0.0, 0.0)) == 0

    def test_collapsed_rows(self):
        logits = np.array([[[60.0, 0.0], [60.0, 0.0]]])
        value = transition_regularizer(logits, RegularizerConfig(1.0, 0.0))
        assert value == pytest.approx(math.log(2), abs=1e-6)

    def test_support_violation(self):
        prior = np.array([[1.0, 0.0], [0.5, 0.5]])
        with pytest.raises(InfiniteDivergenceError):
            transition_regularizer(np.zeros((1, 2, 2)), RegularizerConfig(1.0, 0.0, prior))

    @pytest.mark.parametrize("lam,beta", [(1.0, 0.0), (0.0, 0.7), (0.3, 0.2)])
    def test_gradient_matches_fd(self, rng, lam, beta):
        logits = rng.normal(size=(2, 3, 3))
        prior = rows_from_logits(rng.normal(size=(3, 3)))
        cfg = RegularizerConfig(lam, beta, prior)
        fd = central_fd(lambda x: transition_regularizer(x, cfg), logits)
        an = transition_regularizer_grad(logits, cfg)
        assert np.max(np.abs(an - fd)) / np.max(np.abs(fd)) < 1e-4


class TestGradientEstimators:
    def test_constant_scores_zero_grad(self, rng):
        g = exact_expected_score_grad(rng.normal(size=(4, 4)), 2, np.full(4, 3.3), 1.0)
        np.testing.assert_allclose(g, 0, atol=1e-15)

    def test_single_state(self):
        assert np.array_equal(exact_expected_score_grad(np.zeros((1, 1)), 0, [5.0], 1.0), [0.0])

    @settings(max_examples=40)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 8), st.floats(0.3, 3.0))
    def test_exact_matches_fd(self, seed, S, tau):
        rng = np.random.default_rng(seed)
        logits = rng.normal(size=(S, S))
        scores = rng.normal(size=S)
        prev = int(rng.integers(S))

        def J(row):
            full = logits.copy()
            full[prev] = row
            return expected_score(full, prev, scores, tau)

        fd = central_fd(J, logits[prev])
        assert np.max(np.abs(exact_expected_score_grad(logits, prev, scores, tau) - fd)) < 1e-6

    def test_score_function_constant_scores_mean_zero(self, rng):
        logits = rng.normal(size=(4, 4))
        est = np.mean([score_function_grad(logits, 0, np.full(4, 2.0), 1.0, 10, rng=rng) for _ in range(2000)], axis=0)
        np.testing.assert_allclose(est, 0, atol=0.02)

    def test_score_function_large_sample(self):
        rng = np.random.default_rng(3)
        logits, scores = rng.normal(size=(4, 4)), rng.normal(size=4)
        exact = exact_expected_score_grad(logits, 1, scores, 1.0)
        est = score_function_grad(logits, 1, scores, 1.0, 200_000, baseline="mean", rng=rng)
        assert np.linalg.norm(est - exact) / np.linalg.norm(exact) < 0.02

    @pytest.mark.parametrize("baseline", ["none", "mean"])
    def test_unbiased(self, baseline):
        rng = np.random.default_rng(11)
        logits, scores = rng.normal(size=(4, 4)), rng.normal(size=4) + 1.0
        exact = exact_expected_score_grad(logits, 3, scores, 0.8)
        ests = np.array([score_function_grad(logits, 3, scores, 0.8, 1000, baseline, rng) for _ in range(500)])
        se = ests.std(axis=0, ddof=1) / np.sqrt(len(ests))
        assert np.all(np.abs(ests.mean(axis=0) - exact) < 3 * se)

    def test_baseline_reduces_variance(self):
        rng = np.random.default_rng(5)
        logits, scores = rng.normal(size=(4, 4)), rng.normal(size=4) + 2.0
        var = {}
        for b in ("none", "mean"):
            ests = np.array([score_function_grad(logits, 0, scores, 1.0, 100, b, rng) for _ in range(100)])
            var[b] = ests.var(axis=0).sum()
        assert var["mean"] <= var["none"]


class TestRelaxed:
    def test_simplex(self, rng):
        for _ in range(100):
            y = relaxed_categorical_sample(rng.normal(size=6), 0.5, rng)
            assert np.all(y >= 0) and abs(y.sum() - 1) < 1e-9

    def test_low_temperature_concentrates(self, rng):
        logits = rng.normal(size=4)
        hits = [relaxed_categorical_sample(logits, 0.01, rng).max() > 0.99 for _ in range(1000)]
        assert np.mean(hits) > 0.95

    def test_gumbel_max_frequencies(self):
        rng = np.random.default_rng(2)
        logits = np.array([0.5, -1.0, 1.2, 0.0])
        draws = [np.argmax(relaxed_categorical_sample(logits, 1.0, rng)) for _ in range(100_000)]
        freq = np.bincount(draws, minlength=4) / len(draws)
        np.testing.assert_allclose(freq, rows_from_logits(logits), atol=0.01)

    def test_determinism(self):
        a = relaxed_categorical_sample(np.arange(3.0), 0.7, np.random.default_rng(1))
        b = relaxed_categorical_sample(np.arange(3.0), 0.7, np.random.default_rng(1))
        assert np.array_equal(a, b)
