"""Joint wind-farm layout and yaw optimization under a smooth Gaussian wake model.

The multilevel solver (:func:`solve_mlr`) optimizes positions with the
yaws of every wind scenario eliminated by warm-started inner solves; the
joint (:func:`solve_joint`) and consensus ADMM (:func:`admm_solve`)
solvers are the baselines.
"""

from .admm import AdmmConfig, admm_solve
from .gradients import PowerGradient, fd_gradient, power_gradient
from .lbfgsb import BoxProblem, SolverState, Tolerances, hot_start, lbfgsb_minimize
from .mlr import (JointProblem, SolveReport, SolverConfig, optimal_power, outer_objective,
                  solve_joint, solve_mlr)
from .params import (FarmRegion, PhysicalParams, WindRose, annual_energy_gwh, default_params,
                     feasibility_check, make_layout)
from .sampling import farm_region_for, random_feasible_layout, sample_wind_rose
from .wake import effective_windspeeds, expected_power, farm_power, relative_coordinates

__version__ = "0.1.0"

__all__ = [
    "AdmmConfig", "BoxProblem", "FarmRegion", "JointProblem", "PhysicalParams", "PowerGradient",
    "SolveReport", "SolverConfig", "SolverState", "Tolerances", "WindRose", "admm_solve",
    "annual_energy_gwh", "default_params", "effective_windspeeds", "expected_power",
    "farm_power", "farm_region_for", "fd_gradient", "feasibility_check", "hot_start",
    "lbfgsb_minimize", "make_layout", "optimal_power", "outer_objective", "power_gradient",
    "random_feasible_layout", "relative_coordinates", "sample_wind_rose", "solve_joint",
    "solve_mlr",
]
