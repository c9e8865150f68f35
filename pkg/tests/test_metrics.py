import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scet.errors import ConfigError, EmptyInputError, ModeError
from scet.metrics import (
    bootstrap_ci,
    cluster_shift,
    cosine_rows,
    edit_distance,
    exact_match_rate,
    principal_components,
    rare_word_recall,
    sentence_length_buckets,
    token_uniqueness,
    transition_histogram,
    trial_variability,
    type_token_ratio,
)


def slow_edit(a, b):
    if not a:
        return len(b)
    if not b:
        return len(a)
    return min(slow_edit(a[1:], b) + 1, slow_edit(a, b[1:]) + 1, slow_edit(a[1:], b[1:]) + (a[0] != b[0]))


class TestCompletion:
    def test_single_correct(self):
        assert exact_match_rate([7], [7]) == 1.0

    def test_empty_rejected(self):
        with pytest.raises(ConfigError):
            exact_match_rate([], [])

    def test_uniform_guess_rate(self):
        rng = np.random.default_rng(0)
        n, V = 20_000, 512
        targets = rng.integers(0, V, n)
        rate = exact_match_rate(np.zeros(n, dtype=int), targets)
        se = np.sqrt((1 / V) * (1 - 1 / V) / n)
        assert abs(rate - 1 / V) < 3 * se


class TestTypeTokenRatio:
    def test_distinct(self):
        assert type_token_ratio([1, 2, 3]) == 1.0

    def test_repeated(self):
        assert type_token_ratio("a a a a") == 0.25

    def test_hand_count(self):
        text = "the cat sat on the mat and the dog sat by the door with a cat and a dog too"
        # 20 tokens; types: the cat sat on mat and dog by door with a too = 12
        assert len(text.split()) == 20
        assert type_token_ratio(text) == 12 / 20

    def test_empty(self):
        with pytest.raises(EmptyInputError):
            type_token_ratio([])

    @given(st.lists(st.integers(0, 9), min_size=1, max_size=30), st.randoms())
    @settings(max_examples=100)
    def test_permutation_invariant(self, seq, r):
        shuffled = seq[:]
        r.shuffle(shuffled)
        assert type_token_ratio(seq) == type_token_ratio(shuffled)


class TestRareRecall:
    def test_all_present(self):
        assert rare_word_recall([1, 2, 3], {1: 2, 3: 5}) == 1.0

    def test_none_present(self):
        assert rare_word_recall([9, 9], {1: 2, 3: 5}) == 0.0

    def test_half(self):
        assert rare_word_recall([1], {1: 1, 2: 1}) == 0.5

    def test_weighting(self):
        assert rare_word_recall([1], {1: 1, 2: 3}) == pytest.approx(1 / (1 + 1 / 3))
        assert rare_word_recall([[5], [1]], {1: 1, 2: 3}, weighting="uniform") == 0.5

    def test_empty_rare_set(self):
        with pytest.raises(ConfigError):
            rare_word_recall([1], {})


class TestUniqueness:
    def test_distinct(self):
        assert token_uniqueness(list(range(100)), 10) == 1.0

    def test_constant(self):
        assert token_uniqueness([4] * 100, 10) == pytest.approx(0.1)

    def test_alternating(self):
        assert token_uniqueness("a b a b", 2) == 1.0

    def test_short_sequence_single_window(self):
        assert token_uniqueness([1, 1, 2], 50) == pytest.approx(2 / 3)

    @given(st.lists(st.integers(0, 5), min_size=1, max_size=40), st.integers(1, 12))
    @settings(max_examples=200)
    def test_matches_direct_windows(self, seq, w):
        if len(seq) <= w:
            expected = len(set(seq)) / len(seq)
        else:
            expected = np.mean([len(set(seq[i:i + w])) / w for i in range(len(seq) - w + 1)])
        assert token_uniqueness(seq, w) == pytest.approx(expected, abs=1e-12)


class TestSentenceBuckets:
    def test_yes(self):
        assert sentence_length_buckets("Yes.") == {"very_short": 1, "short": 0, "medium": 0, "long": 0}

    def test_long(self):
        assert sentence_length_buckets(" ".join(["w"] * 30) + ".")["long"] == 1

    def test_one_each(self):
        text = ("One two three. " + " ".join(["x"] * 8) + "! " + " ".join(["y"] * 20) + "? "
                + " ".join(["z"] * 26) + ".")
        assert list(sentence_length_buckets(text).values()) == [1, 1, 1, 1]

    def test_boundaries(self):
        for n, name in [(5, "very_short"), (6, "short"), (12, "short"), (13, "medium"), (25, "medium"),
                        (26, "long")]:
            assert sentence_length_buckets(" ".join(["a"] * n) + ".")[name] == 1

    def test_no_sentences_warns(self):
        with pytest.warns(UserWarning):
            assert sum(sentence_length_buckets("no terminator here").values()) == 0

    def test_unterminated_tail_ignored(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert sum(sentence_length_buckets("done. and then").values()) == 1


class TestCosine:
    def test_identical(self):
        assert cosine_rows([[1.0, 2.0]], [[1.0, 2.0]])[0] == pytest.approx(1.0)

    def test_orthogonal(self):
        assert cosine_rows([[1.0, 0.0]], [[0.0, 3.0]])[0] == pytest.approx(0.0)

    def test_antipodal(self):
        assert cosine_rows([[1.0, -2.0]], [[-2.0, 4.0]])[0] == pytest.approx(-1.0)

    def test_zero_rows_excluded(self):
        mean, skipped = cosine_rows([[0.0, 0.0], [1.0, 0.0]], [[1.0, 1.0], [1.0, 0.0]])
        assert skipped == 1 and mean == pytest.approx(1.0)

    def test_scale_invariant(self, rng):
        a, b = rng.standard_normal((10, 5)), rng.standard_normal((10, 5))
        scale = rng.uniform(0.1, 10, size=(10, 1))
        assert cosine_rows(a * scale, b)[0] == pytest.approx(cosine_rows(a, b)[0], abs=1e-12)


class TestHistogram:
    def test_uniform_mass_in_quarter_bin(self):
        h = transition_histogram(np.full((7, 4, 4), 0.25), bins=20)
        assert h.counts.sum() == 7 * 16
        assert h.counts[5] == 7 * 16

    def test_near_identity(self):
        P = np.full((3, 3), 1e-4) + np.eye(3) * (1 - 3e-4)
        h = transition_histogram(P, bins=10)
        assert h.counts[0] == 6 and h.counts[-1] == 3

    def test_hand_built(self):
        h = transition_histogram(np.array([[0.9, 0.1], [0.5, 0.5]]), bins=10)
        expected = np.zeros(10, dtype=int)
        expected[[1, 5, 9]] = [1, 2, 1]
        assert np.array_equal(h.counts, expected)
        assert np.allclose(h.edges, np.linspace(0, 1, 11))

    def test_static_model_rejected(self):
        with pytest.raises(ModeError):
            transition_histogram(None)


class TestTrialVariability:
    def test_identical(self):
        assert trial_variability([[1, 2, 3]] * 4) == 0.0

    def test_disjoint(self):
        assert trial_variability([[1, 2, 3], [4, 5, 6]]) == 1.0

    def test_hand(self):
        assert trial_variability(["a b c", "a b d"]) == pytest.approx(1 / 3)

    def test_needs_two(self):
        with pytest.raises(ConfigError):
            trial_variability([[1]])

    @given(st.lists(st.integers(0, 3), max_size=6), st.lists(st.integers(0, 3), max_size=6))
    @settings(max_examples=200)
    def test_edit_distance_oracle(self, a, b):
        assert edit_distance(a, b) == slow_edit(a, b)


class TestClusterShift:
    def test_collinear_flagged(self, rng):
        t = rng.standard_normal(50)
        x = np.outer(t, [1.0, 2.0, -1.0]) + 3.0
        res = cluster_shift(x, k=2)
        assert res.degenerate
        assert res.explained[0] >= 0.999

    def test_rank_two_preserves_distances(self, rng):
        x = rng.standard_normal((40, 2)) @ np.array([[2.0, 0.5], [0.0, 1.0]])
        res = cluster_shift(x, k=3)
        d_in = np.linalg.norm(x[:, None] - x[None], axis=-1)
        d_out = np.linalg.norm(res.coords[:, None] - res.coords[None], axis=-1)
        assert np.max(np.abs(d_in - d_out)) < 1e-9
        assert not res.degenerate

    def test_rank_two_embedded_in_higher_dim(self, rng):
        basis = np.linalg.qr(rng.standard_normal((6, 2)))[0]
        x = rng.standard_normal((30, 2)) @ np.diag([3.0, 1.0]) @ basis.T
        res = cluster_shift(x, k=2)
        d_in = np.linalg.norm(x[:, None] - x[None], axis=-1)
        d_out = np.linalg.norm(res.coords[:, None] - res.coords[None], axis=-1)
        assert np.max(np.abs(d_in - d_out)) < 1e-9

    def test_separated_blobs(self, rng):
        a = rng.standard_normal((60, 5)) * 0.3
        b = rng.standard_normal((60, 5)) * 0.3 + 10.0
        res = cluster_shift(np.vstack([a, b]), k=2)
        assert res.between > 5 * res.within
        assert len(set(res.labels[:60])) == 1 and len(set(res.labels[60:])) == 1

    def test_components_match_eigh(self, rng):
        x = rng.standard_normal((200, 4)) @ np.diag([4.0, 2.0, 1.0, 0.5])
        x -= x.mean(0)
        comps, vals, _ = principal_components(x)
        w, v = np.linalg.eigh(x.T @ x / len(x))
        np.testing.assert_allclose(vals, w[::-1][:2], rtol=1e-8)
        for i in range(2):
            assert abs(abs(comps[i] @ v[:, -1 - i]) - 1) < 1e-8

    def test_too_few_vectors(self):
        with pytest.raises(ConfigError):
            cluster_shift(np.ones((5, 3)), k=2)

    def test_deterministic(self, rng):
        x = rng.standard_normal((50, 4))
        a, b = cluster_shift(x, 3, seed=1), cluster_shift(x, 3, seed=1)
        assert np.array_equal(a.labels, b.labels) and np.array_equal(a.coords, b.coords)


def test_bootstrap_ci_brackets_mean(rng):
    v = rng.random(200)
    lo, hi = bootstrap_ci(v, seed=0)
    assert lo < v.mean() < hi
    assert bootstrap_ci(v, seed=0) == (lo, hi)


def test_fraction_ranges():
    for seq in itertools.islice(itertools.product(range(3), repeat=5), 50):
        assert 0 <= type_token_ratio(seq) <= 1
        assert 0 <= token_uniqueness(seq, 3) <= 1
