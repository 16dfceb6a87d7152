"""Parameter-aware echo state networks for chaotic dynamics and data-driven
adjoint sensitivities of long-time-averaged objectives."""

__version__ = "0.1.0"

from .objectives import ObjectiveSpec, SensitivityVector
from .lorenz import (
    IntegrationConfig,
    LorenzParams,
    LorenzState,
    LyapunovEstimate,
    Trajectory,
    lorenz_jacobian,
    lorenz_param_grad,
    lorenz_rhs,
    lyapunov_time,
    rk4_step,
    sample_attractor,
    simulate,
    true_window_sensitivity,
    window_average_objective,
)
from .esn import (
    EsnHyperParams,
    EsnModel,
    RegimeDataset,
    ReservoirMatrices,
    build_reservoir,
    closed_loop,
    esn_step,
    long_term_stats,
    open_loop,
    predictability_horizon,
    readout,
    train,
)
from .adjoint import (
    ReservoirTrajectory,
    adjoint_sweep,
    esn_param_grad,
    esn_step_jacobian,
    finite_diff_sensitivity,
    record_closed_loop,
    tangent_sweep,
)
from .hyperopt import SearchSpace, ValidationReport, search, validation_score
from .ensemble import (
    EnsembleConfig,
    SensitivityEstimate,
    SweepResult,
    compare_estimates,
    ensemble_adjoint,
    polyfit_direct,
    sweep_objective,
)
from .serialization import load_model, save_model

__all__ = [
    "EnsembleConfig",
    "EsnHyperParams",
    "EsnModel",
    "IntegrationConfig",
    "LorenzParams",
    "LorenzState",
    "LyapunovEstimate",
    "ObjectiveSpec",
    "RegimeDataset",
    "ReservoirMatrices",
    "ReservoirTrajectory",
    "SearchSpace",
    "SensitivityEstimate",
    "SensitivityVector",
    "SweepResult",
    "Trajectory",
    "ValidationReport",
    "adjoint_sweep",
    "build_reservoir",
    "closed_loop",
    "compare_estimates",
    "ensemble_adjoint",
    "esn_param_grad",
    "esn_step",
    "esn_step_jacobian",
    "finite_diff_sensitivity",
    "load_model",
    "long_term_stats",
    "lorenz_jacobian",
    "lorenz_param_grad",
    "lorenz_rhs",
    "lyapunov_time",
    "open_loop",
    "polyfit_direct",
    "predictability_horizon",
    "readout",
    "record_closed_loop",
    "rk4_step",
    "sample_attractor",
    "save_model",
    "search",
    "simulate",
    "sweep_objective",
    "tangent_sweep",
    "train",
    "true_window_sensitivity",
    "validation_score",
    "window_average_objective",
]
