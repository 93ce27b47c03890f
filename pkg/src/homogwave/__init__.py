"""Numerical homogenization of semilinear stochastic wave equations with oscillating coefficients."""

from .cell_problem import CellSolution, solve_periodic_cell, solve_truncated_cell
from .coefficient_fields import (
                                 DiffusionField,
                                 DriftField,
                                 OscillatingMatrixField,
                                 Profile,
                                 Rate,
                                 besicovitch_seminorm,
                                 mean_value,
)
from .effective_coefficients import (
                                 EffectiveTensor,
                                 assemble_effective_periodic,
                                 assemble_effective_truncated,
                                 average_nonlinearities,
                                 convergence_study,
)
from .errors import (
                                 BlowUpError,
                                 ConfigError,
                                 EvaluationError,
                                 HomogError,
                                 InputError,
                                 PreconditionError,
                                 SolverError,
)
from .homogenization_experiments import (
                                 ComparisonResult,
                                 Scenario,
                                 compare_epsilon_sweep,
                                 corrector_reconstruction,
                                 preset_scenario,
)
from .spde_wave_solver import (
                                 WaveState,
                                 homogenized_system,
                                 oscillatory_system,
                                 run,
                                 step,
)

__version__ = "0.1.0"

__all__ = [
    "BlowUpError", "CellSolution", "ComparisonResult", "ConfigError", "DiffusionField", "DriftField",
    "EffectiveTensor", "EvaluationError", "HomogError", "InputError", "OscillatingMatrixField",
    "PreconditionError", "Profile", "Rate", "Scenario", "SolverError", "WaveState",
    "assemble_effective_periodic", "assemble_effective_truncated", "average_nonlinearities",
    "besicovitch_seminorm", "compare_epsilon_sweep", "convergence_study", "corrector_reconstruction",
    "homogenized_system", "mean_value", "oscillatory_system", "preset_scenario", "run",
    "solve_periodic_cell", "solve_truncated_cell", "step",
]
