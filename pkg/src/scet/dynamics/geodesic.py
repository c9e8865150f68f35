"""Geodesic distances under a position-dependent metric tensor.

Curves are discretized by ``K`` interior points between fixed endpoints.
The optimizer minimizes the discrete path energy ``(K+1) * sum_k l_k^2``
(whose minimizers are the constant-speed length minimizers) using
L-BFGS, then reports the discrete length ``sum_k l_k`` with
``l_k = sqrt(dx_k^T g(mid_k) dx_k)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from ..errors import ValidationError

Metric = Callable[[np.ndarray], np.ndarray]


@dataclass
class GeodesicProblem:
    metric: Metric
    a: np.ndarray
    b: np.ndarray
    interior_points: int = 64

    def __post_init__(self):
        self.a = np.atleast_1d(np.asarray(self.a, dtype=np.float64))
        self.b = np.atleast_1d(np.asarray(self.b, dtype=np.float64))
        if self.a.shape != self.b.shape:
            raise ValidationError("endpoints differ in dimension")
        if self.interior_points < 2:
            raise ValidationError("need at least two interior points")


@dataclass
class GeodesicResult:
    length: float
    converged: bool
    path: np.ndarray
    initial_length: float

    def __float__(self):
        return self.length


def identity_metric(x: np.ndarray) -> np.ndarray:
    return np.broadcast_to(np.eye(x.shape[-1]), x.shape + (x.shape[-1],))


def conformal_metric(u: Callable[[np.ndarray], np.ndarray]) -> Metric:
    """``g(x) = exp(2 u(x)) I``."""

    def metric(x):
        scale = np.exp(2.0 * np.asarray(u(x), dtype=np.float64))
        return scale[..., None, None] * identity_metric(x)

    return metric


def sphere_metric(x: np.ndarray) -> np.ndarray:
    """Induced metric of the unit sphere in (polar, azimuth) coordinates."""
    polar = x[..., 0]
    g = np.zeros(x.shape + (2,))
    g[..., 0, 0] = 1.0
    g[..., 1, 1] = np.sin(polar) ** 2
    return g


def sphere_coordinates(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    v = v / np.linalg.norm(v)
    return np.array([np.arccos(np.clip(v[2], -1, 1)), np.arctan2(v[1], v[0])])


def _check_spd(G: np.ndarray):
    if not np.allclose(G, np.swapaxes(G, -1, -2), atol=1e-12):
        raise ValidationError("metric is not symmetric along the path")
    if np.any(np.linalg.eigvalsh(G) <= 0):
        raise ValidationError("metric is not positive definite along the path")


def path_segments(metric: Metric, path: np.ndarray) -> np.ndarray:
    """Metric length of each segment of a polyline ``path`` (``N x dim``)."""
    delta = np.diff(path, axis=0)
    G = metric(0.5 * (path[1:] + path[:-1]))
    return np.sqrt(np.maximum(np.einsum("ki,kij,kj->k", delta, G, delta), 0.0))


def path_length(metric: Metric, path: np.ndarray) -> float:
    return float(path_segments(metric, path).sum())


def _energy_and_grad(flat, problem: GeodesicProblem, h: float):
    dim = problem.a.size
    path = np.vstack([problem.a, flat.reshape(-1, dim), problem.b])
    delta = np.diff(path, axis=0)
    mid = 0.5 * (path[1:] + path[:-1])
    G = problem.metric(mid)
    Gd = np.einsum("kij,kj->ki", G, delta)
    sq = np.einsum("ki,ki->k", delta, Gd)
    n_seg = delta.shape[0]
    energy = n_seg * sq.sum()

    # d(sq_k)/d(mid_k) through the metric, by central differences per axis
    dmid = np.empty_like(mid)
    for i in range(dim):
        e = np.zeros(dim)
        e[i] = h
        dG = (problem.metric(mid + e) - problem.metric(mid - e)) / (2 * h)
        dmid[:, i] = np.einsum("ki,kij,kj->k", delta, dG, delta)
    d_delta = 2.0 * Gd
    # path[k] enters delta_{k-1} (+), delta_k (-), mid_{k-1} and mid_k (1/2 each)
    grad = np.zeros_like(path)
    grad[1:] += d_delta + 0.5 * dmid
    grad[:-1] += -d_delta + 0.5 * dmid
    return energy, n_seg * grad[1:-1].ravel()


def geodesic_distance(problem: GeodesicProblem, tol: float = 1e-10, max_iter: int = 5000,
                      fd_step: float = 1e-6) -> GeodesicResult:
    """Shortest discrete path length between ``problem.a`` and ``problem.b``.

    Starts from the straight segment.  If the optimizer cannot improve on
    it the straight-line length is returned with ``converged=False``.
    """
    a, b, K = problem.a, problem.b, problem.interior_points
    if np.array_equal(a, b):
        return GeodesicResult(0.0, True, np.vstack([a, b]), 0.0)
    s = np.linspace(0.0, 1.0, K + 2)[:, None]
    init = a + s * (b - a)
    _check_spd(problem.metric(0.5 * (init[1:] + init[:-1])))
    init_len = path_length(problem.metric, init)
    res = minimize(_energy_and_grad, init[1:-1].ravel(), args=(problem, fd_step), jac=True,
                   method="L-BFGS-B", options={"maxiter": max_iter, "ftol": tol * 1e-3, "gtol": tol})
    path = np.vstack([a, res.x.reshape(-1, a.size), b])
    length = path_length(problem.metric, path)
    if not np.isfinite(length) or length > init_len:
        return GeodesicResult(init_len, False, init, init_len)
    return GeodesicResult(length, bool(res.success) or length < init_len, path, init_len)
