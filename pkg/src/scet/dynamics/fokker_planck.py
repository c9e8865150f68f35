"""Explicit finite-volume Fokker-Planck solver on 1-D/2-D grids.

The density is advanced in conservative flux form

    dp/dt = -div(J),   J_a = A_a p - 1/2 sum_b d_b (D_ab p),   D = B B^T

with first-order upwind fluxes for the drift and central differences for
the diffusion.  Reflecting walls set the boundary flux to zero, so total
mass is conserved up to round-off; absorbing walls use zero-density ghost
cells and let mass leave.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np

from ..errors import DivergenceError, InfiniteDivergenceError, StepSizeError, ValidationError
from .sde import SdeSystem, euler_maruyama

log = logging.getLogger(__name__)

STABILITY_FACTOR = 0.5
NEGATIVE_TOL = 1e-12


@dataclass
class DensityGrid:
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    cells: tuple[int, ...]
    density: np.ndarray
    boundary: Literal["reflecting", "absorbing"] = "reflecting"
    time: float = 0.0

    def __post_init__(self):
        self.lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        self.upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        self.cells = tuple(int(v) for v in np.atleast_1d(self.cells))
        if not (len(self.lower) == len(self.upper) == len(self.cells)) or self.ndim not in (1, 2):
            raise ValidationError("grid must be 1-D or 2-D with matching bounds and cell counts")
        if any(u <= lo for lo, u in zip(self.lower, self.upper)) or min(self.cells) < 2:
            raise ValidationError("grid bounds must be increasing with at least two cells per axis")
        if self.boundary not in ("reflecting", "absorbing"):
            raise ValidationError(f"unknown boundary {self.boundary!r}")
        self.density = np.asarray(self.density, dtype=np.float64).reshape(self.cells)

    @property
    def ndim(self) -> int:
        return len(self.cells)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple((u - lo) / n for lo, u, n in zip(self.lower, self.upper, self.cells))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def edges(self, axis: int) -> np.ndarray:
        return np.linspace(self.lower[axis], self.upper[axis], self.cells[axis] + 1)

    def centers(self, axis: int) -> np.ndarray:
        e = self.edges(axis)
        return 0.5 * (e[1:] + e[:-1])

    def points(self) -> np.ndarray:
        """Cell centers as an array of shape ``cells + (ndim,)``."""
        return np.stack(np.meshgrid(*[self.centers(a) for a in range(self.ndim)], indexing="ij"), axis=-1)

    def mass(self) -> float:
        return float(self.density.sum() * self.cell_volume)

    def with_density(self, density, time: float | None = None) -> "DensityGrid":
        return replace(self, density=np.array(density, dtype=np.float64),
                       time=self.time if time is None else time)

    @classmethod
    def empty(cls, lower, upper, cells, boundary="reflecting") -> "DensityGrid":
        return cls(lower, upper, cells, np.zeros(tuple(np.atleast_1d(cells))), boundary)


def point_mass(grid: DensityGrid, x0) -> DensityGrid:
    """Unit mass concentrated in the cell containing ``x0``."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    idx = tuple(cell_index(grid, x0))
    density = np.zeros(grid.cells)
    density[idx] = 1.0 / grid.cell_volume
    return grid.with_density(density)


def cell_index(grid: DensityGrid, x) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    idx = np.floor((x - np.array(grid.lower)) / np.array(grid.spacing)).astype(int)
    if np.any(idx < 0) or np.any(idx >= np.array(grid.cells)):
        raise ValidationError(f"point {x} lies outside the grid")
    return idx


def gaussian_density(grid: DensityGrid, mean, var) -> DensityGrid:
    """Cell-averaged-by-midpoint isotropic Gaussian, renormalized to unit mass."""
    pts = grid.points()
    mean = np.broadcast_to(np.asarray(mean, dtype=np.float64), (grid.ndim,))
    r2 = ((pts - mean) ** 2).sum(-1)
    p = np.exp(-0.5 * r2 / var)
    return grid.with_density(p / (p.sum() * grid.cell_volume))


def _face_points(grid: DensityGrid, axis: int) -> np.ndarray:
    axes = [grid.centers(a) if a != axis else grid.edges(a) for a in range(grid.ndim)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def max_stable_dt(system: SdeSystem, grid: DensityGrid, t: float = 0.0) -> float:
    """Largest explicit step allowed by ``c * min(dx/|A|, dx^2/|BB^T|)``.

    Both limits are divided by the grid dimension so that the per-axis
    contributions of a 2-D update stay within the 1-D budget.
    """
    h = min(grid.spacing)
    a_max = max(float(np.abs(system.drift_at(_face_points(grid, a), t)[..., a]).max())
                for a in range(grid.ndim))
    d_max = float(np.abs(system.diffusion_tensor(grid.points(), t)).max())
    limits = [np.inf]
    if a_max > 0:
        limits.append(h / (grid.ndim * a_max))
    if d_max > 0:
        limits.append(h * h / (grid.ndim * d_max))
    return STABILITY_FACTOR * min(limits)


def _pad(x: np.ndarray, axis: int) -> np.ndarray:
    widths = [(0, 0)] * x.ndim
    widths[axis] = (1, 1)
    return np.pad(x, widths)


def _take(x: np.ndarray, axis: int, sl: slice) -> np.ndarray:
    index = [slice(None)] * x.ndim
    index[axis] = sl
    return x[tuple(index)]


def _tendency(system: SdeSystem, grid: DensityGrid, p: np.ndarray, t: float) -> np.ndarray:
    D = system.diffusion_tensor(grid.points(), t)
    out = np.zeros_like(p)
    for a in range(grid.ndim):
        h = grid.spacing[a]
        A = system.drift_at(_face_points(grid, a), t)[..., a]
        padded = _pad(p, a)
        left, right = _take(padded, a, slice(None, -1)), _take(padded, a, slice(1, None))
        flux = np.maximum(A, 0.0) * left + np.minimum(A, 0.0) * right

        dp = _pad(D[..., a, a] * p, a)
        flux -= 0.5 * (_take(dp, a, slice(1, None)) - _take(dp, a, slice(None, -1))) / h

        for b in range(grid.ndim):
            if b == a:
                continue
            cross = D[..., a, b] * p
            if not np.any(cross):
                continue
            dcross = _pad(np.gradient(cross, grid.spacing[b], axis=b), a)
            flux -= 0.25 * (_take(dcross, a, slice(1, None)) + _take(dcross, a, slice(None, -1)))

        if grid.boundary == "reflecting":
            idx = [slice(None)] * flux.ndim
            idx[a] = [0, -1]
            flux[tuple(idx)] = 0.0
        out -= (_take(flux, a, slice(1, None)) - _take(flux, a, slice(None, -1))) / h
    return out


def fokker_planck_solve(system: SdeSystem, grid: DensityGrid, p0: DensityGrid | np.ndarray | None,
                        dt: float, steps: int, snapshot_every: int | None = None) -> list[DensityGrid]:
    """Advance a density ``steps`` explicit steps of size ``dt``.

    Returns snapshots at steps ``0, snapshot_every, ...`` and the final step
    (every step when ``snapshot_every`` is None).  Raises
    :class:`StepSizeError` when ``dt`` exceeds :func:`max_stable_dt`.
    Negative values no larger than 1e-12 in magnitude are clipped to zero
    and logged; anything more negative is an error.
    """
    if system.dim != grid.ndim:
        raise ValidationError(f"system dim {system.dim} does not match grid dim {grid.ndim}")
    if not dt > 0:
        raise ValidationError("dt must be positive")
    limit = max_stable_dt(system, grid, grid.time)
    if dt > limit:
        raise StepSizeError(f"dt={dt:g} violates the stability bound; use dt <= {limit:g}", required_dt=limit)
    if p0 is None:
        p = grid.density.copy()
    else:
        p = np.array(p0.density if isinstance(p0, DensityGrid) else p0, dtype=np.float64).reshape(grid.cells)
    every = snapshot_every or 1
    t = grid.time
    snaps = [grid.with_density(p, t)]
    clipped = 0
    for k in range(steps):
        p = p + dt * _tendency(system, grid, p, t)
        t = grid.time + (k + 1) * dt
        if not np.all(np.isfinite(p)):
            raise DivergenceError(f"non-finite density at step {k + 1}", step=k + 1)
        low = p.min()
        if low < 0:
            if low < -NEGATIVE_TOL:
                raise DivergenceError(f"density fell to {low:.3e} at step {k + 1}", step=k + 1)
            clipped += int((p < 0).sum())
            p = np.maximum(p, 0.0)
        if (k + 1) % every == 0 or k + 1 == steps:
            snaps.append(grid.with_density(p, t))
    if clipped:
        log.info("clipped %d slightly negative density values", clipped)
    return snaps


def moments_1d(grid: DensityGrid) -> tuple[float, float]:
    x = grid.centers(0)
    w = grid.density * grid.cell_volume
    m = float((w * x).sum() / w.sum())
    return m, float((w * (x - m) ** 2).sum() / w.sum())


def total_variation(a: DensityGrid | np.ndarray, b: DensityGrid | np.ndarray, cell_volume: float | None = None) -> float:
    """``1/2 sum |p - q| dV`` between two densities on the same grid."""
    if isinstance(a, DensityGrid):
        cell_volume = a.cell_volume
        a = a.density
    if isinstance(b, DensityGrid):
        cell_volume = b.cell_volume
        b = b.density
    return 0.5 * float(np.abs(np.asarray(a) - np.asarray(b)).sum() * cell_volume)


def histogram_density(grid: DensityGrid, samples: np.ndarray) -> tuple[np.ndarray, float]:
    """Empirical density of ``samples`` on ``grid`` plus the fraction outside it."""
    samples = np.asarray(samples, dtype=np.float64).reshape(-1, grid.ndim)
    counts, _ = np.histogramdd(samples, bins=[grid.edges(a) for a in range(grid.ndim)])
    n = samples.shape[0]
    return counts / (n * grid.cell_volume), 1.0 - counts.sum() / n


def compare_sde_fp(system: SdeSystem, grid: DensityGrid, x0, dt: float, steps: int, n_paths: int,
                   rng: np.random.Generator, snapshot_every: int | None = None) -> list[float]:
    """Total-variation distance between Euler-Maruyama and Fokker-Planck densities.

    Both start from ``x0`` (a point mass in the FP solve) and share ``dt``.
    Mass of simulated paths that has left the grid counts fully toward the
    distance.
    """
    every = snapshot_every or steps or 1
    snaps = fokker_planck_solve(system, grid, point_mass(grid, x0), dt, steps, every)
    x0 = np.broadcast_to(np.atleast_1d(np.asarray(x0, dtype=np.float64)), (n_paths, system.dim))
    paths = euler_maruyama(system, x0, dt, steps, rng, t0=grid.time, record_every=every)
    out = []
    for snap, pts in zip(snaps, paths):
        hist, outside = histogram_density(grid, pts)
        out.append(total_variation(hist, snap.density, grid.cell_volume) + 0.5 * outside)
    return out


def grid_energy(p: DensityGrid, prior: DensityGrid, lam: float) -> float:
    """Discrete ``sum [1/2 |grad p|^2 + lam p log(p/p0)] dV``.

    Gradients are central differences in the interior and one-sided at the
    walls.
    """
    if p.cells != prior.cells or p.lower != prior.lower or p.upper != prior.upper:
        raise ValidationError("grids are not aligned")
    dens, base = p.density, prior.density
    grads = np.gradient(dens, *p.spacing) if p.ndim > 1 else [np.gradient(dens, p.spacing[0])]
    smooth = 0.5 * sum(g ** 2 for g in grads)
    kl = np.zeros_like(dens)
    if lam:
        support = dens > 0
        if np.any(base[support] <= 0):
            raise InfiniteDivergenceError("prior is zero where the density is positive")
        kl[support] = dens[support] * np.log(dens[support] / base[support])
    return float((smooth + lam * kl).sum() * p.cell_volume)
