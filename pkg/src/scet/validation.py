"""Self-checks run by ``scet validate``.

Each check reports its measured values next to the thresholds it is held
to.  Setting ``SCET_INJECT_FAULT=unnormalized_rows`` replaces row
normalization with a plain ``exp`` so the row-stochasticity check can be
shown to fail.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .dynamics import DensityGrid, compare_sde_fp, fokker_planck_solve, gaussian_density, max_stable_dt, ornstein_uhlenbeck
from .dynamics.fokker_planck import moments_1d, point_mass
from .dynamics.geodesic import (
    GeodesicProblem,
    conformal_metric,
    geodesic_distance,
    identity_metric,
    sphere_coordinates,
    sphere_metric,
)
from .embedding_core import propagate, rows_from_logits
from .errors import ValidationError
from .rng import stream
from .stochastic_kernel import exact_expected_score_grad, score_function_grad, selection_distribution
from .training import grad_check

FAULT_ENV = "SCET_INJECT_FAULT"


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: dict
    thresholds: dict
    seconds: float = 0.0
    notes: list[str] = field(default_factory=list)

    def line(self) -> str:
        parts = [f"{k}={_fmt(v)} (limit {_fmt(self.thresholds[k])})" if k in self.thresholds else f"{k}={_fmt(v)}"
                 for k, v in self.measured.items()]
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: " + ", ".join(parts) + f" [{self.seconds:.1f}s]"


def _fmt(v) -> str:
    return f"{v:.3e}" if isinstance(v, float) else str(v)


def _rows(logits):
    if os.environ.get(FAULT_ENV) == "unnormalized_rows":
        return np.exp(np.asarray(logits, dtype=np.float64))
    return rows_from_logits(logits)


def check_row_stochastic(seed: int = 0, cases: int = 1000) -> CheckResult:
    rng = stream(seed, "validate/rows")
    worst_sum, worst_neg = 0.0, 0.0
    for i in range(cases):
        S = (2, 4, 8)[i % 3]
        logits = rng.normal(0.0, 5.0, size=(int(rng.integers(1, 5)), S, S))
        P = _rows(logits)
        worst_sum = max(worst_sum, float(np.max(np.abs(P.sum(-1) - 1.0))))
        worst_neg = max(worst_neg, float(-min(P.min(), 0.0)))
    measured = {"max_row_sum_error": worst_sum, "max_negative_entry": worst_neg}
    limits = {"max_row_sum_error": 1e-9, "max_negative_entry": 0.0}
    return CheckResult("row_stochasticity", worst_sum <= 1e-9 and worst_neg <= 0.0, measured, limits)


def check_chapman_kolmogorov(seed: int = 0, cases: int = 1000) -> CheckResult:
    rng = stream(seed, "validate/chapman-kolmogorov")
    worst, rejected = 0.0, 0
    for i in range(cases):
        S = (2, 4, 8)[i % 3]
        P = _rows(rng.normal(0.0, 2.0, size=(S, S)))
        p = rng.dirichlet(np.ones(S))
        try:
            two = propagate(propagate(p, P), P)
        except ValidationError:
            rejected += 1
            continue
        worst = max(worst, float(np.max(np.abs(two - p @ (P @ P)))))
    measured = {"max_abs_error": worst, "rejected_matrices": rejected}
    limits = {"max_abs_error": 1e-12, "rejected_matrices": 0}
    return CheckResult("chapman_kolmogorov", worst <= 1e-12 and rejected == 0, measured, limits)


def _expected_score(logits, prev, scores, tau):
    return float(selection_distribution(prev, rows_from_logits(logits), scores, tau) @ scores)


def check_gradient_oracles(seed: int = 0, n_fd: int = 100, n_mc: int = 10, samples: int = 200_000) -> CheckResult:
    rng = stream(seed, "validate/gradients")
    S, tau, h = 4, 1.0, 1e-5
    worst_fd = 0.0
    for _ in range(n_fd):
        logits = rng.normal(size=(S, S))
        scores = rng.normal(size=S)
        prev = int(rng.integers(S))
        exact = exact_expected_score_grad(logits, prev, scores, tau)
        # only the row of the previous state enters q
        fd = np.zeros(S)
        for j in range(S):
            up, down = logits.copy(), logits.copy()
            up[prev, j] += h
            down[prev, j] -= h
            fd[j] = (_expected_score(up, prev, scores, tau) - _expected_score(down, prev, scores, tau)) / (2 * h)
        worst_fd = max(worst_fd, float(np.max(np.abs(exact - fd))))
    worst_mc = 0.0
    for _ in range(n_mc):
        logits = rng.normal(size=(S, S))
        scores = rng.normal(size=S)
        prev = int(rng.integers(S))
        exact = exact_expected_score_grad(logits, prev, scores, tau)
        est = score_function_grad(logits, prev, scores, tau, samples, baseline="mean", rng=rng)
        worst_mc = max(worst_mc, float(np.linalg.norm(est - exact) / np.linalg.norm(exact)))
    measured = {"enumeration_vs_fd_abs": worst_fd, "score_function_rel_l2": worst_mc}
    limits = {"enumeration_vs_fd_abs": 1e-6, "score_function_rel_l2": 0.02}
    return CheckResult("gradient_oracles", worst_fd < 1e-6 and worst_mc <= 0.02, measured, limits)


def check_model_gradients(seed: int = 0) -> CheckResult:
    report = grad_check(seed=seed)
    measured = {"max_relative_error": report["max_relative_error"],
                "transition_logits": report["transition_logits"],
                "regularizer_only": report["regularizer"]}
    limits = {"max_relative_error": 1e-3, "transition_logits": 1e-3, "regularizer_only": 1e-4}
    ok = all(measured[k] < limits[k] for k in limits)
    worst = max(report["groups"], key=report["groups"].get)
    return CheckResult("model_grad_check", ok, measured, limits, notes=[f"worst group: {worst}"])


def check_sde_fp(seed: int = 0, n_paths: int = 50_000, cells: int = 400) -> CheckResult:
    system = ornstein_uhlenbeck(1.0, 1.0)
    grid = DensityGrid.empty(-5.0, 5.0, cells)
    dt = max_stable_dt(system, grid)
    # stationary variance from a long run started off-centre
    steps = int(math.ceil(10.0 / dt))
    final = fokker_planck_solve(system, grid, gaussian_density(grid, 1.5, 0.05), 10.0 / steps, steps,
                                snapshot_every=steps)[-1]
    _, var = moments_1d(final)
    var_err = abs(var - 0.5) / 0.5
    # endpoint distributions at t = 5 from a point mass at x = 1
    steps = int(math.ceil(5.0 / dt))
    tv = compare_sde_fp(system, grid, 1.0, 5.0 / steps, steps, n_paths, stream(seed, "validate/sde"))[-1]
    snaps = fokker_planck_solve(system, grid, point_mass(grid, 1.0), 5.0 / steps, steps, snapshot_every=steps)
    mass_err = max(abs(s.mass() - 1.0) for s in snaps)
    measured = {"stationary_variance_rel_error": var_err, "tv_distance_t5": tv, "reflecting_mass_error": mass_err}
    limits = {"stationary_variance_rel_error": 0.05, "tv_distance_t5": 0.05, "reflecting_mass_error": 1e-6}
    return CheckResult("sde_fokker_planck", all(measured[k] < limits[k] for k in limits), measured, limits)


def check_geodesics() -> CheckResult:
    flat = geodesic_distance(GeodesicProblem(identity_metric, (0.0, 0.0), (3.0, 4.0))).length
    a = sphere_coordinates([1, 0, 0])
    b = sphere_coordinates([0, 1 / math.sqrt(2), 1 / math.sqrt(2)])
    sphere = geodesic_distance(GeodesicProblem(sphere_metric, a, b)).length
    u = 0.7
    conf = geodesic_distance(GeodesicProblem(conformal_metric(lambda x: np.full(x.shape[:-1], u)),
                                             (-1.0, 0.5), (2.0, 2.0))).length
    measured = {"identity_error": abs(flat - 5.0), "great_circle_error": abs(sphere - math.pi / 2),
                "conformal_error": abs(conf - math.exp(u) * math.hypot(3.0, 1.5))}
    limits = {"identity_error": 1e-6, "great_circle_error": 1e-3, "conformal_error": 1e-4}
    return CheckResult("geodesics", all(measured[k] <= limits[k] for k in limits), measured, limits)


CHECKS = {
    "row_stochasticity": check_row_stochastic,
    "chapman_kolmogorov": check_chapman_kolmogorov,
    "gradient_oracles": check_gradient_oracles,
    "model_grad_check": check_model_gradients,
    "sde_fokker_planck": check_sde_fp,
    "geodesics": check_geodesics,
}


def run_checks(names=None, seed: int = 0, report=None) -> list[CheckResult]:
    results = []
    for name in names or CHECKS:
        fn = CHECKS[name]
        t0 = time.perf_counter()
        res = fn() if name == "geodesics" else fn(seed=seed)
        res.seconds = time.perf_counter() - t0
        results.append(res)
        if report:
            report(res)
    return results
