"""Generation and representation metrics."""

from __future__ import annotations

import re
import warnings
from collections import Counter
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import ConfigError, EmptyInputError, ModeError, ValidationError

BUCKETS = ("very_short", "short", "medium", "long")
_TERMINATORS = re.compile(r"[.!?]+")


def _tokens(seq) -> list:
    return seq.split() if isinstance(seq, str) else list(seq)


def exact_match_rate(predictions, targets) -> float:
    predictions, targets = np.asarray(predictions), np.asarray(targets)
    if predictions.size == 0:
        raise ConfigError("empty evaluation set")
    if predictions.shape != targets.shape:
        raise ValidationError("predictions and targets differ in shape")
    return float(np.mean(predictions == targets))


def type_token_ratio(seq) -> float:
    seq = _tokens(seq)
    if not seq:
        raise EmptyInputError("type-token ratio of an empty sequence")
    return len(set(seq)) / len(seq)


def rare_word_recall(generated, rare_counts: dict, weighting: str = "inverse") -> float:
    """Weighted share of rare tokens that appear in ``generated``.

    ``generated`` is one token sequence or a list of them; ``rare_counts``
    maps each rare token to its train count.  Weights are ``1/count``
    (``"inverse"``) or 1 (``"uniform"``).
    """
    if not rare_counts:
        raise ConfigError("rare set is empty")
    if weighting not in ("inverse", "uniform"):
        raise ConfigError(f"unknown weighting {weighting!r}")
    seqs = generated if generated and isinstance(generated[0], (list, tuple, np.ndarray)) else [generated]
    present = {t for s in seqs for t in _tokens(s)}
    w = {t: (1.0 / c if weighting == "inverse" else 1.0) for t, c in rare_counts.items()}
    return sum(w[t] for t in w if t in present) / sum(w.values())


def token_uniqueness(seq, window: int = 50) -> float:
    """Mean distinct-token share over sliding windows of ``window`` tokens."""
    if window < 1:
        raise ConfigError("window must be >= 1")
    seq = _tokens(seq)
    if not seq:
        raise EmptyInputError("token uniqueness of an empty sequence")
    if len(seq) <= window:
        return len(set(seq)) / len(seq)
    counts = Counter(seq[:window])
    total = len(counts)
    for i in range(window, len(seq)):
        old, new = seq[i - window], seq[i]
        counts[old] -= 1
        if counts[old] == 0:
            del counts[old]
        counts[new] += 1
        total += len(counts)
    return total / ((len(seq) - window + 1) * window)


def bucket_of(words: int) -> str:
    if words <= 5:
        return "very_short"
    if words <= 12:
        return "short"
    if words <= 25:
        return "medium"
    return "long"


def sentence_length_buckets(text: str) -> dict[str, int]:
    """Word counts of terminated sentences; a trailing unterminated fragment is ignored."""
    counts = dict.fromkeys(BUCKETS, 0)
    pieces = _TERMINATORS.split(text)
    for piece in pieces[:-1]:
        n = len(piece.split())
        if n:
            counts[bucket_of(n)] += 1
    if not any(counts.values()):
        warnings.warn("no sentences found", stacklevel=2)
    return counts


def cosine_rows(a: np.ndarray, b: np.ndarray) -> tuple[float, int]:
    """Mean row-wise cosine of ``a`` and ``b`` and the number of rows skipped for a zero vector."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, np.shape(a)[-1])
    b = np.asarray(b, dtype=np.float64).reshape(-1, np.shape(b)[-1])
    na, nb = np.linalg.norm(a, axis=1), np.linalg.norm(b, axis=1)
    ok = (na > 0) & (nb > 0)
    if not ok.any():
        return float("nan"), int((~ok).sum())
    cos = np.einsum("ij,ij->i", a[ok], b[ok]) / (na[ok] * nb[ok])
    return float(np.mean(np.clip(cos, -1.0, 1.0))), int((~ok).sum())


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray


def transition_histogram(matrices, bins: int = 20) -> Histogram:
    """Equal-width histogram over [0, 1] of every entry of every matrix; bin ``floor(v * bins)``."""
    if bins < 1:
        raise ConfigError("bins must be >= 1")
    if matrices is None:
        raise ModeError("transition histogram needs a model with transition matrices")
    v = np.asarray(matrices, dtype=np.float64).ravel()
    idx = np.clip(np.floor(v * bins).astype(np.int64), 0, bins - 1)
    return Histogram(np.linspace(0.0, 1.0, bins + 1), np.bincount(idx, minlength=bins))


def edit_distance(a, b) -> int:
    a, b = _tokens(a), _tokens(b)
    prev = np.arange(len(b) + 1)
    for i, x in enumerate(a, 1):
        cur = np.empty_like(prev)
        cur[0] = i
        for j, y in enumerate(b, 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y))
        prev = cur
    return int(prev[-1])


def trial_variability(sequences) -> float:
    """Mean pairwise edit distance normalized by the longer sequence."""
    seqs = [_tokens(s) for s in sequences]
    if len(seqs) < 2:
        raise ConfigError("need at least two sequences")
    vals = [edit_distance(a, b) / max(len(a), len(b)) if (a or b) else 0.0 for a, b in combinations(seqs, 2)]
    return float(np.mean(vals))


# -- projection and clustering ----------------------------------------------

@dataclass
class ClusterResult:
    coords: np.ndarray
    components: np.ndarray
    explained: np.ndarray
    labels: np.ndarray
    centroids: np.ndarray
    within: float
    between: float
    degenerate: bool


def principal_components(x: np.ndarray, n: int = 2, tol: float = 1e-12, max_iter: int = 10_000, seed: int = 0):
    """Top ``n`` eigenpairs of the covariance by power iteration with deflation.

    Returns ``(components, eigenvalues, degenerate)``; components with no
    remaining variance are returned as zero rows and flag degeneracy.
    """
    C = x.T @ x / max(len(x), 1)
    total = np.trace(C)
    rng = np.random.default_rng(seed)
    comps, vals = [], []
    for _ in range(n):
        resid = C.copy()
        for v, lam in zip(comps, vals):
            resid -= lam * np.outer(v, v)
        v = rng.standard_normal(C.shape[0])
        for v_prev in comps:
            v -= (v @ v_prev) * v_prev
        if np.linalg.norm(v) == 0 or total <= 0:
            comps.append(np.zeros(C.shape[0]))
            vals.append(0.0)
            continue
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(max_iter):
            w = resid @ v
            for v_prev in comps:
                w -= (w @ v_prev) * v_prev
            norm = np.linalg.norm(w)
            if norm <= 1e-14 * max(total, 1e-300):
                lam = 0.0
                break
            w /= norm
            done = np.linalg.norm(w - v) < tol or np.linalg.norm(w + v) < tol
            v, lam = w, float(w @ resid @ w)
            if done:
                break
        comps.append(v if lam > 0 else np.zeros_like(v))
        vals.append(max(lam, 0.0))
    vals = np.array(vals)
    degenerate = bool(total <= 0 or vals[-1] <= 1e-12 * max(total, 1e-300))
    return np.array(comps), vals, degenerate


def kmeans(x: np.ndarray, k: int, seed: int = 0, max_iter: int = 100):
    """Lloyd iterations from a k-means++ start."""
    n = len(x)
    if k < 1 or n < k:
        raise ConfigError(f"need at least k={k} points, got {n}")
    rng = np.random.default_rng(seed)
    centers = [x[rng.integers(n)]]
    for _ in range(1, k):
        d2 = np.min(((x[:, None, :] - np.array(centers)[None]) ** 2).sum(-1), axis=1)
        if d2.sum() == 0:
            centers.append(x[rng.integers(n)])
        else:
            centers.append(x[rng.choice(n, p=d2 / d2.sum())])
    centers = np.array(centers, dtype=np.float64)
    labels = np.full(n, -1)
    for _ in range(max_iter):
        new = np.argmin(((x[:, None, :] - centers[None]) ** 2).sum(-1), axis=1)
        if np.array_equal(new, labels):
            break
        labels = new
        for j in range(k):
            if np.any(labels == j):
                centers[j] = x[labels == j].mean(0)
    return labels, centers


def cluster_shift(vectors, k: int = 4, seed: int = 0) -> ClusterResult:
    x = np.asarray(vectors, dtype=np.float64).reshape(-1, np.shape(vectors)[-1])
    if len(np.unique(x, axis=0)) < k:
        raise ConfigError(f"need at least {k} distinct vectors")
    xc = x - x.mean(0)
    comps, vals, degenerate = principal_components(xc, 2, seed=seed)
    coords = xc @ comps.T
    total = float(np.trace(xc.T @ xc / len(xc)))
    explained = vals / total if total > 0 else np.zeros_like(vals)
    labels, centroids = kmeans(coords, k, seed=seed)
    within = float(np.mean(np.linalg.norm(coords - centroids[labels], axis=1)))
    between = float(np.mean([np.linalg.norm(a - b) for a, b in combinations(centroids, 2)])) if k > 1 else 0.0
    return ClusterResult(coords, comps, explained, labels, centroids, within, between, degenerate)


def bootstrap_ci(values, n_resamples: int = 1000, level: float = 0.95, seed: int = 0) -> tuple[float, float]:
    """Percentile interval of the mean of ``values``."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return float("nan"), float("nan")
    rng = np.random.default_rng(seed)
    means = v[rng.integers(0, v.size, size=(n_resamples, v.size))].mean(1)
    alpha = (1 - level) / 2
    return float(np.quantile(means, alpha)), float(np.quantile(means, 1 - alpha))
