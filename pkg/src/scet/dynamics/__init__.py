from .export import write_density_csv, write_trajectory_csv
from .fokker_planck import (
    DensityGrid,
    compare_sde_fp,
    fokker_planck_solve,
    gaussian_density,
    grid_energy,
    max_stable_dt,
    point_mass,
    total_variation,
)
from .sde import SdeSystem, brownian, euler_maruyama, forward_euler, frozen, ornstein_uhlenbeck

__all__ = [
    "DensityGrid",
    "SdeSystem",
    "brownian",
    "compare_sde_fp",
    "euler_maruyama",
    "fokker_planck_solve",
    "forward_euler",
    "frozen",
    "gaussian_density",
    "grid_energy",
    "max_stable_dt",
    "ornstein_uhlenbeck",
    "point_mass",
    "total_variation",
    "write_density_csv",
    "write_trajectory_csv",
]
