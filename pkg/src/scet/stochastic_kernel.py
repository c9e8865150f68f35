"""State selection, transition regularization and gradient estimators.

State selection tilts the transition row of the previous state by the
context score of each candidate: ``q(s) ~ P[prev, s] * exp(f_s / tau)``.
In logit space that is ``softmax(theta_prev + f / tau)``, which is what the
gradient estimators below differentiate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np

from .embedding_core import (
    TransitionLogits,
    check_distribution,
    check_transition_matrix,
    row_softmax,
    rows_from_logits,
)
from .errors import DegenerateDistributionError, InfiniteDivergenceError, ValidationError

SamplerMode = Literal["argmax", "categorical", "relaxed"]
ContextScorer = Callable[[np.ndarray, np.ndarray], float]


@dataclass
class SamplerConfig:
    mode: SamplerMode = "categorical"
    temperature: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("argmax", "categorical", "relaxed"):
            raise ValidationError(f"unknown sampler mode {self.mode!r}")
        if not self.temperature > 0:
            raise ValidationError(f"temperature must be positive, got {self.temperature}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must fit in an unsigned 64-bit integer")


@dataclass
class RegularizerConfig:
    lambda_kl: float = 0.01
    beta_entropy: float = 0.01
    prior: np.ndarray | None = None  # S x S; None means uniform rows

    def __post_init__(self):
        if self.lambda_kl < 0 or self.beta_entropy < 0:
            raise ValidationError("regularizer weights must be non-negative")
        if self.prior is not None:
            self.prior = check_transition_matrix(self.prior)

    def prior_for(self, S: int) -> np.ndarray:
        if self.prior is None:
            return np.full((S, S), 1.0 / S)
        if self.prior.shape != (S, S):
            raise ValidationError(f"prior is {self.prior.shape}, expected {(S, S)}")
        return self.prior


def scaled_dot_scorer(state_vector: np.ndarray, context: np.ndarray) -> float:
    """Default context scorer: ``(context . e) / sqrt(d)``."""
    return float(np.dot(state_vector, context) / np.sqrt(len(state_vector)))


def score_states(state_vectors: np.ndarray, context: np.ndarray,
                 scorer: ContextScorer = scaled_dot_scorer) -> np.ndarray:
    return np.array([scorer(e, context) for e in state_vectors], dtype=np.float64)


def tilt(prior, scores, tau: float) -> np.ndarray:
    """Normalize ``prior * exp(scores / tau)`` in log space."""
    prior = np.asarray(prior, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(scores[prior > 0])):
        if np.all(scores[prior > 0] == -np.inf):
            raise DegenerateDistributionError("every state with prior mass has score -inf")
        raise ValidationError("scores must be finite")
    with np.errstate(divide="ignore"):
        logits = np.log(prior) + scores / tau
    top = logits.max()
    if not np.isfinite(top):
        raise DegenerateDistributionError("selection distribution has no mass")
    w = np.exp(logits - top)
    total = w.sum()
    if not total > 0:
        raise DegenerateDistributionError("selection distribution has no mass")
    return w / total


def selection_distribution(prev_state: int, P, scores, tau: float) -> np.ndarray:
    """``q(s) ~ P[prev_state, s] * exp(scores[s] / tau)``."""
    P = check_transition_matrix(P)
    if not 0 <= prev_state < P.shape[0]:
        raise IndexError(f"prev_state {prev_state} outside {P.shape[0]} states")
    if not tau > 0:
        raise ValidationError("tau must be positive")
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (P.shape[0],):
        raise ValidationError(f"expected {P.shape[0]} scores, got shape {scores.shape}")
    return tilt(P[prev_state], scores, tau)


def gumbel(shape, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(shape)
    u = np.clip(u, np.finfo(np.float64).tiny, 1.0)
    return -np.log(-np.log(u))


def relaxed_categorical_sample(logits_row, tau: float, rng: np.random.Generator) -> np.ndarray:
    """Gumbel-softmax draw ``softmax((logits + g) / tau)``."""
    if not tau > 0:
        raise ValidationError("tau must be positive")
    logits_row = np.asarray(logits_row, dtype=np.float64)
    return row_softmax((logits_row + gumbel(logits_row.shape, rng)) / tau)


def select_state(q, config: SamplerConfig, rng: np.random.Generator | None = None) -> int:
    q = check_distribution(q)
    if config.mode == "argmax":
        return int(np.argmax(q))
    if rng is None:
        raise ValidationError(f"{config.mode} selection needs a random stream")
    if config.mode == "categorical":
        cdf = np.cumsum(q)
        idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        return min(idx, int(np.flatnonzero(q > 0)[-1]))
    with np.errstate(divide="ignore"):
        logq = np.log(q)
    return int(np.argmax(relaxed_categorical_sample(logq, config.temperature, rng)))


def entropy(dist) -> float:
    """Shannon entropy in nats, with ``0 log 0 = 0``."""
    p = check_distribution(dist)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def kl_divergence(p, q) -> float:
    p = check_distribution(p)
    q = check_distribution(q)
    if p.shape != q.shape:
        raise ValidationError("distributions differ in length")
    support = p > 0
    if np.any(q[support] == 0):
        raise InfiniteDivergenceError("p puts mass where q has none")
    return float(max((p[support] * np.log(p[support] / q[support])).sum(), 0.0))


def _logits_array(logits) -> np.ndarray:
    return logits.values if isinstance(logits, TransitionLogits) else np.asarray(logits, dtype=np.float64)


def transition_regularizer(logits, config: RegularizerConfig) -> float:
    """``lambda * mean_row KL(P_row || P0_row) - beta * mean_row H(P_row)``."""
    P = rows_from_logits(_logits_array(logits))
    S = P.shape[-1]
    if config.lambda_kl == 0 and config.beta_entropy == 0:
        return 0.0
    rows = P.reshape(-1, S)
    prior = config.prior_for(S)
    prior_rows = np.broadcast_to(prior, P.shape).reshape(-1, S)
    value = 0.0
    if config.lambda_kl:
        value += config.lambda_kl * np.mean([kl_divergence(r, r0) for r, r0 in zip(rows, prior_rows)])
    if config.beta_entropy:
        value -= config.beta_entropy * np.mean([entropy(r) for r in rows])
    return float(value)


def transition_regularizer_grad(logits, config: RegularizerConfig) -> np.ndarray:
    """Closed-form gradient of :func:`transition_regularizer` w.r.t. the logits.

    Per row, with ``P = softmax(theta)`` and ``g = (lambda + beta) log P - lambda log P0``,
    the row term's gradient is ``P * (g - P.g)``; rows enter through a mean.
    """
    values = _logits_array(logits)
    P = rows_from_logits(values)
    S = P.shape[-1]
    n_rows = P.size // S
    prior = np.broadcast_to(config.prior_for(S), P.shape)
    if config.lambda_kl and np.any(prior == 0):
        raise InfiniteDivergenceError("prior has zero entries where softmax rows are positive")
    with np.errstate(divide="ignore"):
        g = (config.lambda_kl + config.beta_entropy) * np.log(P)
        if config.lambda_kl:
            g = g - config.lambda_kl * np.log(prior)
    g = g - (P * g).sum(axis=-1, keepdims=True)
    return P * g / n_rows


def _selection_logits(logits, prev_state: int, scores, tau: float) -> tuple[np.ndarray, np.ndarray]:
    values = _logits_array(logits)
    theta = values[prev_state] if values.ndim == 2 else values
    scores = np.asarray(scores, dtype=np.float64)
    return theta + scores / tau, scores


def exact_expected_score_grad(logits, prev_state: int, scores, tau: float) -> np.ndarray:
    """Exact gradient of ``sum_s q(s; theta) f_s`` w.r.t. the ``prev_state`` logit row.

    Enumerates all ``S`` states: ``sum_s f_s q_s (e_s - q)``.
    """
    z, f = _selection_logits(logits, prev_state, scores, tau)
    if z.shape[0] > 64:
        raise ValidationError("exact enumeration is limited to S <= 64")
    q = row_softmax(z)
    grad = np.zeros_like(q)
    for s in range(q.shape[0]):
        dq = -q[s] * q
        dq[s] += q[s]
        grad += f[s] * dq
    return grad


def score_function_grad(logits, prev_state: int, scores, tau: float, n_samples: int,
                        baseline: Literal["none", "mean"] = "none",
                        rng: np.random.Generator | None = None) -> np.ndarray:
    """Monte Carlo score-function estimate of :func:`exact_expected_score_grad`.

    Averages ``d log q(s)/d theta * (f_s - b)`` over ``n_samples`` draws.  The
    ``mean`` baseline uses the leave-one-out mean of the other samples' scores
    so the estimator stays unbiased.
    """
    if n_samples < 1:
        raise ValidationError("n_samples must be at least 1")
    if rng is None:
        raise ValidationError("score_function_grad needs a random stream")
    z, f = _selection_logits(logits, prev_state, scores, tau)
    q = row_softmax(z)
    cdf = np.cumsum(q)
    draws = np.minimum(np.searchsorted(cdf, rng.random(n_samples) * cdf[-1], side="right"), q.size - 1)
    fs = f[draws]
    if baseline == "mean" and n_samples > 1:
        fs = fs - (fs.sum() - fs) / (n_samples - 1)
    elif baseline not in ("none", "mean"):
        raise ValidationError(f"unknown baseline {baseline!r}")
    # sum_i (e_{s_i} - q) w_i
    total = np.bincount(draws, weights=fs, minlength=q.size) - q * fs.sum()
    return total / n_samples

