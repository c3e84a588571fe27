"""Block-sparse LMS adaptive filtering with closed-form performance theory.

Modules:

* :mod:`bslms.filter` runs the adaptive filter and its group zero attractor.
* :mod:`bslms.mgmodel` draws Markov-Gaussian block-sparse responses.
* :mod:`bslms.theory` predicts steady-state and transient MSD.
* :mod:`bslms.sim` runs Monte Carlo identification experiments.
* :mod:`bslms.cli` is the command-line front end.
"""

from .errors import (
    BSLMSError,
    ConfigError,
    DegenerateTheoryError,
    DimensionError,
    DivergenceError,
    NumericError,
    StepSizeError,
)
from .filter import (
    CoefficientClasses,
    FilterConfig,
    FilterRun,
    FilterState,
    bs_lms_step,
    classify_coefficients,
    group_norms,
    group_zero_attraction,
    mixed_l20_norm,
    mu_max,
    run_filter,
)
from .mgmodel import (
    MGParams,
    border_effect_q,
    ensemble_stats,
    generate_system,
    generate_systems,
    group_occupancy_pmf,
    ising_parameters,
)
from .sim import (
    ExperimentSpec,
    LearningCurve,
    compare_transient,
    noise_variance,
    run_identification,
    sweep_kappa,
    sweep_partition,
)
from .special import incomplete_gamma_lower
from .theory import (
    AveragedTheory,
    TheoryConstants,
    TransientModel,
    ams_msd,
    averaged_theory,
    equalize_step_size,
    kappa_opt,
    p_opt,
    steady_state_msd,
    theory_constants,
    transient_model,
)

__version__ = "0.1.0"

__all__ = [
    "AveragedTheory",
    "BSLMSError",
    "CoefficientClasses",
    "ConfigError",
    "DegenerateTheoryError",
    "DimensionError",
    "DivergenceError",
    "ExperimentSpec",
    "FilterConfig",
    "FilterRun",
    "FilterState",
    "LearningCurve",
    "MGParams",
    "NumericError",
    "StepSizeError",
    "TheoryConstants",
    "TransientModel",
    "ams_msd",
    "averaged_theory",
    "border_effect_q",
    "bs_lms_step",
    "classify_coefficients",
    "compare_transient",
    "ensemble_stats",
    "equalize_step_size",
    "generate_system",
    "generate_systems",
    "group_norms",
    "group_occupancy_pmf",
    "group_zero_attraction",
    "incomplete_gamma_lower",
    "ising_parameters",
    "kappa_opt",
    "mixed_l20_norm",
    "mu_max",
    "noise_variance",
    "p_opt",
    "run_filter",
    "run_identification",
    "steady_state_msd",
    "sweep_kappa",
    "sweep_partition",
    "theory_constants",
    "transient_model",
]
