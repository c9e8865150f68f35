import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from scet.embedding_core import (
    ConceptEmbeddingTable,
    TransitionLogits,
    expected_embedding,
    propagate,
    rows_from_logits,
    stationary_distribution,
    validate_table,
)
from scet.errors import NonConvergenceError, ShapeError, ValidationError

finite = st.floats(-30, 30, allow_nan=False)


def random_simplex(rng, n):
    p = rng.random(n) + 1e-3
    return p / p.sum()


def random_stochastic(rng, n):
    return np.stack([random_simplex(rng, n) for _ in range(n)])


class TestRowsFromLogits:
    def test_zero_logits_uniform(self):
        P = rows_from_logits(TransitionLogits(np.zeros((3, 4, 4))))
        assert np.array_equal(P, np.full((3, 4, 4), 0.25))

    def test_ln2_row(self):
        P = rows_from_logits(np.array([[np.log(2), 0.0], [0.0, 0.0]]))
        np.testing.assert_allclose(P[0], [2 / 3, 1 / 3], atol=1e-15)

    def test_saturated_row(self):
        P = rows_from_logits(np.array([[50.0, 0.0], [0.0, 0.0]]))
        assert abs(P[0, 0] - 1) < 1e-9 and P[0, 1] < 1e-9

    def test_non_finite_rejected(self):
        with pytest.raises(ValidationError):
            rows_from_logits(np.array([[np.nan, 0.0], [0.0, 0.0]]))
        with pytest.raises(ValidationError):
            TransitionLogits(np.array([[np.inf, 0.0], [0.0, 0.0]]))

    def test_shared_scope_single_matrix(self):
        with pytest.raises(ShapeError):
            TransitionLogits(np.zeros((2, 3, 3)), scope="shared")
        logits = TransitionLogits(np.ones((1, 3, 3)), scope="shared")
        assert logits.for_token(17).shape == (3, 3)

    @given(arrays(np.float64, st.tuples(st.integers(1, 3), st.sampled_from([1, 2, 4, 8])).map(lambda t: (t[0], t[1], t[1])),
                  elements=finite))
    def test_rows_are_stochastic(self, values):
        P = rows_from_logits(values)
        assert np.all(P >= 0)
        assert np.max(np.abs(P.sum(-1) - 1)) < 1e-9


class TestPropagate:
    def test_identity(self, rng):
        d = random_simplex(rng, 5)
        np.testing.assert_array_equal(propagate(d, np.eye(5)), d)

    def test_uniform_rows(self, rng):
        d = random_simplex(rng, 4)
        np.testing.assert_allclose(propagate(d, np.full((4, 4), 0.25)), np.full(4, 0.25), atol=1e-15)

    def test_hand_product(self):
        np.testing.assert_allclose(propagate([1, 0], [[0.9, 0.1], [0.5, 0.5]]), [0.9, 0.1])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            propagate([0.5, 0.5], np.eye(3))

    @settings(max_examples=200)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 8))
    def test_chapman_kolmogorov_and_simplex(self, seed, n):
        rng = np.random.default_rng(seed)
        d, P = random_simplex(rng, n), random_stochastic(rng, n)
        two = propagate(propagate(d, P), P)
        assert np.max(np.abs(two - d @ (P @ P))) < 1e-12
        assert np.all(two >= 0) and abs(two.sum() - 1) < 1e-9


class TestStationary:
    def test_uniform(self):
        np.testing.assert_allclose(stationary_distribution(np.full((3, 3), 1 / 3)), np.full(3, 1 / 3))

    def test_two_state_matches_linear_solve(self):
        P = np.array([[0.9, 0.1], [0.5, 0.5]])
        # oracle: solve pi (P - I) = 0 with sum(pi) = 1
        A = np.vstack([(P - np.eye(2)).T, np.ones(2)])
        oracle = np.linalg.lstsq(A, np.array([0, 0, 1.0]), rcond=None)[0]
        np.testing.assert_allclose(oracle, [5 / 6, 1 / 6], atol=1e-12)
        pi = stationary_distribution(P, tol=1e-13)
        np.testing.assert_allclose(pi, oracle, atol=1e-12)
        assert np.abs(pi @ P - pi).sum() < 1e-12

    def test_periodic_chain_fails(self):
        with pytest.raises(NonConvergenceError) as info:
            stationary_distribution(np.array([[0.0, 1.0], [1.0, 0.0]]), max_iters=50)
        assert info.value.residual == pytest.approx(2.0)
        assert "residual" in str(info.value)

    def test_reducible_chain_fails(self):
        with pytest.raises(NonConvergenceError):
            stationary_distribution(np.eye(2), max_iters=50)


class TestExpectedEmbedding:
    def setup_method(self):
        self.table = ConceptEmbeddingTable(np.array([[[1.0, 0.0], [0.0, 1.0]], [[2.0, 2.0], [4.0, 0.0]]]))

    def test_one_hot(self):
        assert np.array_equal(expected_embedding(self.table, 1, [0.0, 1.0]), self.table.weights[1, 1])

    def test_uniform_is_mean(self):
        np.testing.assert_allclose(expected_embedding(self.table, 1, [0.5, 0.5]), [3.0, 1.0])

    def test_weighted(self):
        np.testing.assert_allclose(expected_embedding(self.table, 0, [0.25, 0.75]), [0.25, 0.75])

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            expected_embedding(self.table, 2, [0.5, 0.5])

    @given(st.integers(0, 2**32 - 1), st.floats(0, 1))
    def test_linear_in_distribution(self, seed, alpha):
        rng = np.random.default_rng(seed)
        table = ConceptEmbeddingTable(rng.normal(size=(3, 4, 5)))
        p, q = random_simplex(rng, 4), random_simplex(rng, 4)
        mix = alpha * p + (1 - alpha) * q
        mix = mix / mix.sum()
        lhs = expected_embedding(table, 2, mix)
        rhs = alpha * expected_embedding(table, 2, p) + (1 - alpha) * expected_embedding(table, 2, q)
        assert np.max(np.abs(lhs - rhs)) < 1e-12


class TestValidateTable:
    def test_clean(self, rng):
        report = validate_table(ConceptEmbeddingTable(rng.normal(size=(4, 2, 3))))
        assert report.ok and report.issues == [] and report.warnings == []
        assert report.norms.shape == (4, 2)

    def test_nan_located(self, rng):
        w = rng.normal(size=(4, 2, 3))
        w[2, 1, 0] = np.nan
        report = validate_table(ConceptEmbeddingTable(w))
        assert not report.ok
        assert "token=2 state=1 coord=0" in report.issues[0]

    def test_zero_norm_warning(self, rng):
        w = rng.normal(size=(4, 2, 3))
        w[3, 0] = 0
        report = validate_table(w)
        assert report.ok
        assert report.warnings == ["zero-norm state vector at token=3 state=0"]

    def test_bad_shape(self):
        assert not validate_table(np.zeros((3, 4))).ok
