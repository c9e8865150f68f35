"""Ito SDE systems and Euler-Maruyama integration (1-D and 2-D)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..errors import DivergenceError, ValidationError

Field = Callable[[np.ndarray, float], np.ndarray]


@dataclass
class SdeSystem:
    """``dX = A(X, t) dt + B(X, t) dW``.

    ``drift`` maps points of shape ``(..., dim)`` to ``(..., dim)``.
    ``diffusion`` returns a scalar (isotropic), a constant ``(dim, dim)``
    matrix, ``(..., dim, dim)`` per point, or ``(..., dim)`` per-point
    diagonals.  A ``(dim, dim)`` result is always read as a constant matrix.
    """

    drift: Field
    diffusion: Field
    dim: int = 1

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValidationError("only 1-D and 2-D systems are supported")

    def drift_at(self, x: np.ndarray, t: float) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.drift(x, t), dtype=np.float64), x.shape)

    def diffusion_matrix(self, x: np.ndarray, t: float) -> np.ndarray:
        """``B`` as an explicit ``(..., dim, dim)`` array."""
        b = np.asarray(self.diffusion(x, t), dtype=np.float64)
        batch = x.shape[:-1]
        eye = np.eye(self.dim)
        if b.ndim == 0:
            return np.broadcast_to(b * eye, batch + (self.dim, self.dim))
        if b.ndim == x.ndim + 1 or b.shape == (self.dim, self.dim):
            return np.broadcast_to(b, batch + (self.dim, self.dim))
        if b.ndim == x.ndim:
            return np.broadcast_to(b[..., :, None] * eye, batch + (self.dim, self.dim))
        raise ValidationError(f"diffusion returned shape {b.shape} for points of shape {x.shape}")

    def diffusion_tensor(self, x: np.ndarray, t: float) -> np.ndarray:
        """``B B^T`` at each point."""
        B = self.diffusion_matrix(x, t)
        return B @ np.swapaxes(B, -1, -2)


def ornstein_uhlenbeck(theta: float = 1.0, sigma: float = 1.0, mean: float = 0.0, dim: int = 1) -> SdeSystem:
    return SdeSystem(lambda x, t: -theta * (x - mean), lambda x, t: sigma, dim)


def brownian(sigma: float = 1.0, dim: int = 1) -> SdeSystem:
    return SdeSystem(lambda x, t: np.zeros_like(x), lambda x, t: sigma, dim)


def frozen(dim: int = 1) -> SdeSystem:
    """No drift, no noise."""
    return SdeSystem(lambda x, t: np.zeros_like(x), lambda x, t: 0.0, dim)


def _as_points(x0, dim: int) -> np.ndarray:
    x = np.array(x0, dtype=np.float64)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.shape[-1] != dim:
        raise ValidationError(f"initial state has trailing size {x.shape[-1]}, system dim is {dim}")
    return x


def euler_maruyama(system: SdeSystem, x0, dt: float, steps: int, rng: np.random.Generator,
                   t0: float = 0.0, record_every: int = 1) -> np.ndarray:
    """Integrate ``system`` from ``x0``.

    ``x0`` is ``(dim,)`` for one path or ``(n_paths, dim)`` for an ensemble.
    Returns states at steps ``0, record_every, 2*record_every, ...`` (and the
    final step), stacked on a new leading axis.  Wiener increments are
    ``Normal(0, dt I)`` draws from ``rng``.
    """
    if not dt > 0:
        raise ValidationError("dt must be positive")
    if steps < 0 or record_every < 1:
        raise ValidationError("steps must be >= 0 and record_every >= 1")
    x = _as_points(x0, system.dim)
    out = [x.copy()]
    sqrt_dt = np.sqrt(dt)
    for k in range(steps):
        t = t0 + k * dt
        B = system.diffusion_matrix(x, t)
        dW = rng.standard_normal(x.shape) * sqrt_dt
        x = x + system.drift_at(x, t) * dt + np.einsum("...ij,...j->...i", B, dW)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"non-finite state at step {k + 1}", step=k + 1)
        if (k + 1) % record_every == 0 or k + 1 == steps:
            out.append(x.copy())
    return np.stack(out)


def forward_euler(drift: Field, x0, dt: float, steps: int, t0: float = 0.0) -> np.ndarray:
    """Deterministic reference integrator for ``dx/dt = A(x, t)``."""
    x = np.array(x0, dtype=np.float64).reshape(-1)
    out = [x.copy()]
    for k in range(steps):
        x = x + np.broadcast_to(drift(x, t0 + k * dt), x.shape) * dt
        out.append(x.copy())
    return np.stack(out)
