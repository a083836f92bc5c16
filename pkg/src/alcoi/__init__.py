"""Active learning for control-oriented system identification.

The package covers the full loop: simulate episodes of a parameterized
nonlinear system, fit the parameters by least squares, estimate how the
control task's cost curves in the parameters, design exploration inputs that
shrink the task-relevant part of the estimation error, and score the
resulting certainty-equivalent controllers against baselines.
"""

from .dynamics import (
    DynamicsError,
    Mixture,
    ParametricFeedback,
    RandomEnergy,
    RecedingHorizon,
    RolloutDivergedError,
    SystemModel,
    Trajectory,
    child_seed,
    finite_diff_param_jacobian,
    rollout,
    rollout_arrays,
    rollout_batch,
)
from .estimation import (
    ConvergenceError,
    EpisodeDataset,
    EstimationError,
    FitResult,
    GramMatrix,
    SolverOptions,
    dataset_from_rollouts,
    empirical_gram,
    fisher_information,
    least_squares_fit,
    mc_covariance,
    prediction_error,
)
from .synthesis import (
    ControlProblem,
    CurvatureEstimate,
    CurvatureWarning,
    SynthesisError,
    SynthesisOptions,
    evaluate_cost,
    excess_cost,
    model_task_hessian,
    synthesize_ce,
)
from .design import (
    DesignObjective,
    DesignResult,
    ExplorationCost,
    build_mixture,
    design_gradient,
    doed_plus,
    doed_schedule,
    exploration_stage_cost,
    receding_horizon_explore,
)
from .pipeline import (
    AlcoiConfig,
    AlcoiReport,
    DegenerateCurvatureError,
    TrueSystemSampler,
    confidence_radius,
    regularizer,
    run_alcoi,
    run_baseline_aopt,
    run_baseline_random,
)
from .benchmarks import (
    Benchmark,
    make_benchmark,
    run_figure2,
    run_figure3,
    run_single,
    run_sweep,
)

__all__ = [
    "AlcoiConfig",
    "AlcoiReport",
    "Benchmark",
    "ControlProblem",
    "ConvergenceError",
    "CurvatureEstimate",
    "CurvatureWarning",
    "DegenerateCurvatureError",
    "DesignObjective",
    "DesignResult",
    "DynamicsError",
    "EpisodeDataset",
    "EstimationError",
    "ExplorationCost",
    "FitResult",
    "GramMatrix",
    "Mixture",
    "ParametricFeedback",
    "RandomEnergy",
    "RecedingHorizon",
    "RolloutDivergedError",
    "SolverOptions",
    "SynthesisError",
    "SynthesisOptions",
    "SystemModel",
    "Trajectory",
    "TrueSystemSampler",
    "build_mixture",
    "child_seed",
    "confidence_radius",
    "dataset_from_rollouts",
    "design_gradient",
    "doed_plus",
    "doed_schedule",
    "empirical_gram",
    "evaluate_cost",
    "excess_cost",
    "exploration_stage_cost",
    "finite_diff_param_jacobian",
    "fisher_information",
    "least_squares_fit",
    "make_benchmark",
    "mc_covariance",
    "model_task_hessian",
    "prediction_error",
    "receding_horizon_explore",
    "regularizer",
    "rollout",
    "rollout_arrays",
    "rollout_batch",
    "run_alcoi",
    "run_baseline_aopt",
    "run_baseline_random",
    "run_figure2",
    "run_figure3",
    "run_single",
    "run_sweep",
    "synthesize_ce",
]

__version__ = "0.1.0"
