"""Discrete latent-state embeddings and their Markov transition kernels.

A token owns ``S`` candidate embedding vectors.  Which one is active evolves
along a Markov chain whose row-stochastic kernel is parameterized by
unconstrained logits pushed through a row-wise softmax, so the simplex
constraints hold by construction.

All arithmetic here is float64 regardless of the storage dtype of the inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import NonConvergenceError, ShapeError, ValidationError

SIMPLEX_TOL = 1e-9

Scope = Literal["per_token", "shared"]


@dataclass
class ConceptEmbeddingTable:
    """``V x S x d`` table of per-token, per-state embedding vectors."""

    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights)
        if self.weights.ndim != 3 or min(self.weights.shape) < 1:
            raise ShapeError(f"embedding table must be V x S x d with positive sizes, got {self.weights.shape}")

    @property
    def vocab_size(self) -> int:
        return self.weights.shape[0]

    @property
    def state_count(self) -> int:
        return self.weights.shape[1]

    @property
    def dim(self) -> int:
        return self.weights.shape[2]


@dataclass
class TransitionLogits:
    """Unconstrained transition parameters, ``V x S x S`` or ``1 x S x S``."""

    values: np.ndarray
    scope: Scope = "per_token"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim == 2:
            self.values = self.values[None]
        if self.values.ndim != 3 or self.values.shape[1] != self.values.shape[2]:
            raise ShapeError(f"transition logits must be N x S x S, got {self.values.shape}")
        if self.scope not in ("per_token", "shared"):
            raise ValidationError(f"unknown scope {self.scope!r}")
        if self.scope == "shared" and self.values.shape[0] != 1:
            raise ShapeError("shared scope holds exactly one S x S matrix")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("transition logits contain non-finite entries")

    @property
    def state_count(self) -> int:
        return self.values.shape[-1]

    def for_token(self, token: int) -> np.ndarray:
        return self.values[0 if self.scope == "shared" else token]


def check_distribution(p, tol: float = SIMPLEX_TOL) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ShapeError(f"state distribution must be a non-empty vector, got shape {p.shape}")
    if not np.all(np.isfinite(p)) or np.any(p < 0) or abs(p.sum() - 1.0) > tol:
        raise ValidationError(f"not a probability vector: {p}")
    return p


def check_transition_matrix(P, tol: float = SIMPLEX_TOL) -> np.ndarray:
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ShapeError(f"transition matrix must be square, got shape {P.shape}")
    if not np.all(np.isfinite(P)) or np.any(P < 0):
        raise ValidationError("transition matrix has negative or non-finite entries")
    if np.max(np.abs(P.sum(axis=1) - 1.0)) > tol:
        raise ValidationError("transition matrix rows do not sum to 1")
    return P


def row_softmax(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    z = np.exp(x - x.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def rows_from_logits(logits) -> np.ndarray:
    """Row-wise softmax of transition logits.

    Accepts a :class:`TransitionLogits` or a raw ``(..., S, S)`` array and
    returns one row-stochastic matrix per scoped token.
    """
    values = logits.values if isinstance(logits, TransitionLogits) else np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValidationError("transition logits contain non-finite entries")
    return row_softmax(values)


def propagate(dist, P) -> np.ndarray:
    """One Markov step: the row vector ``dist`` times ``P``."""
    dist = check_distribution(dist)
    P = check_transition_matrix(P)
    if dist.shape[0] != P.shape[0]:
        raise ShapeError(f"distribution has {dist.shape[0]} states but matrix is {P.shape}")
    return dist @ P


def stationary_distribution(P, tol: float = 1e-12, max_iters: int = 100_000) -> np.ndarray:
    """Power iteration from the uniform distribution.

    Stops once ``||pi P - pi||_1 < tol``.  The point-mass starts are iterated
    alongside and must reach the same limit, so periodic chains (for which
    the uniform start is a trivial fixed point) and reducible chains raise
    :class:`NonConvergenceError` carrying the last residual.
    """
    P = check_transition_matrix(P)
    S = P.shape[0]
    starts = np.vstack([np.full(S, 1.0 / S), np.eye(S)])
    residual = np.inf
    for _ in range(max_iters):
        nxt = starts @ P
        step = float(np.abs(nxt - starts).sum(axis=1).max())
        spread = float(np.abs(nxt - nxt[0]).sum(axis=1).max())
        residual = max(step, spread)
        if residual < tol:
            pi = nxt[0]
            return pi / pi.sum()
        starts = nxt
    raise NonConvergenceError(
        f"power iteration did not converge in {max_iters} iterations (residual {residual:.3e})",
        residual=residual,
    )


def expected_embedding(table: ConceptEmbeddingTable, token: int, dist) -> np.ndarray:
    """Mean state vector of ``token`` under ``dist``."""
    if not 0 <= token < table.vocab_size:
        raise IndexError(f"token {token} outside vocabulary of size {table.vocab_size}")
    dist = check_distribution(dist)
    if dist.shape[0] != table.state_count:
        raise ShapeError(f"distribution has {dist.shape[0]} states, table has {table.state_count}")
    return dist @ np.asarray(table.weights[token], dtype=np.float64)


@dataclass
class TableReport:
    issues: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    norms: np.ndarray | None = None

    @property
    def ok(self) -> bool:
        return not self.issues


def validate_table(table, zero_norm_tol: float = 1e-12) -> TableReport:
    """Report non-finite entries, bad shapes and per-state vector norms."""
    report = TableReport()
    weights = np.asarray(table.weights if isinstance(table, ConceptEmbeddingTable) else table)
    if weights.ndim != 3 or min(weights.shape, default=0) < 1:
        report.issues.append(f"shape {weights.shape} is not V x S x d with positive sizes")
        return report
    for token, state, coord in np.argwhere(~np.isfinite(weights)):
        value = weights[token, state, coord]
        report.issues.append(f"non-finite value {value} at token={token} state={state} coord={coord}")
    with np.errstate(invalid="ignore", over="ignore"):
        norms = np.linalg.norm(weights.astype(np.float64), axis=-1)
    report.norms = norms
    for token, state in np.argwhere(np.isfinite(norms) & (norms <= zero_norm_tol)):
        report.warnings.append(f"zero-norm state vector at token={token} state={state}")
    return report
