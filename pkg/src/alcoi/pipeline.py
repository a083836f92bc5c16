"""The staged active-identification pipeline and its baselines.

The pipeline spends an episode budget in stages: explore with an initial
policy and fit a coarse model; measure the task curvature at that coarse fit;
run the experiment-design loop to synthesize exploration policies aimed at the
directions the task is sensitive to; refit on the richer data; and hand the
refined model to certainty-equivalent synthesis. Baselines reuse the same
machinery with the curvature replaced by the identity (task-agnostic design)
or with purely random excitation.

All stage randomness derives from the run seed through fixed stage keys, so
stages are individually reproducible and methods sharing a seed also share
their evaluation noise.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .dynamics import (
    Mixture,
    Policy,
    RandomEnergy,
    SeedLike,
    SystemModel,
    child_seed,
    rollout_batch,
)
from .estimation import (
    ConvergenceError,
    EpisodeDataset,
    FitResult,
    SolverOptions,
    least_squares_fit,
)
from .synthesis import ControlProblem, SynthesisOptions, excess_cost, model_task_hessian, synthesize_ce
from .design import DesignObjective, DesignResult, build_mixture, doed_plus

STAGE_COARSE, STAGE_CURVATURE, STAGE_DESIGN, STAGE_MIXTURE, STAGE_EVAL = 0, 1, 2, 3, 5


class DegenerateCurvatureError(RuntimeError):
    """The curvature estimate is numerically singular, so the ridge formula is undefined."""


def confidence_radius(
    n_episodes: float,
    *,
    noise_std: float,
    horizon: int,
    state_dim: int,
    param_dim: int,
    delta: float,
    alpha: float = 0.5,
    lf: float = 1.0,
) -> float:
    """Shrinking parameter-ball radius ``R / N^alpha`` used for reporting.

    ``R = (2048 sigma_w^2 / T * (d_x + d_phi * log(L_f T N) + log(1/delta)))^alpha``.
    """
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    if n_episodes <= 0:
        raise ValueError("n_episodes must be positive")
    log_arg = lf * horizon * n_episodes
    if log_arg <= 1.0:
        raise ValueError("lf * horizon * n_episodes must exceed 1")
    inner = (
        2048.0
        * noise_std**2
        / horizon
        * (state_dim + param_dim * np.log(log_arg) + np.log(1.0 / delta))
    )
    return float(inner**alpha / n_episodes**alpha)


def regularizer(
    curvature,
    *,
    mode: str = "fixed",
    fixed_value: float = 1e-3,
    lambda_min_star: float | None = None,
) -> float:
    """Ridge added to the design Gram matrix.

    ``fixed`` mode returns ``fixed_value``. ``formula`` mode returns
    ``lambda_min(H) * lambda_min_star / (16 ||H|| d)`` and raises
    :class:`DegenerateCurvatureError` when ``H`` is numerically singular.
    """
    if mode == "fixed":
        if not fixed_value > 0:
            raise ValueError("fixed ridge must be positive")
        return float(fixed_value)
    if mode != "formula":
        raise ValueError(f"unknown regularizer mode {mode!r}")
    if lambda_min_star is None or lambda_min_star <= 0:
        raise ValueError("formula mode needs a positive lambda_min_star")
    h = np.asarray(curvature, float)
    eigs = np.linalg.eigvalsh(0.5 * (h + h.T))
    lo, hi = float(eigs[0]), float(np.max(np.abs(eigs)))
    if hi <= 0 or lo <= 1e-12 * hi:
        raise DegenerateCurvatureError("curvature matrix is numerically singular")
    return lo * lambda_min_star / (16.0 * hi * h.shape[0])


@dataclass
class AlcoiConfig:
    """Budget split and numerical settings for one pipeline run."""

    n_episodes: int
    exploration_budget: float
    budget_split: str = "half-half"
    delta: float = 0.1
    alpha: float = 0.5
    lf: float = 1.0
    ridge_mode: str = "fixed"
    ridge_value: float = 1e-3
    lambda_min_star: float | None = None
    curvature_n_mc: int = 128
    curvature_fd_step: float = 1e-2
    eval_n_mc: int = 256
    n_shooting: int = 100
    fit_init: np.ndarray | None = None
    fit_options: SolverOptions = field(default_factory=SolverOptions)
    synthesis_options: SynthesisOptions | None = None

    def __post_init__(self):
        if self.n_episodes < 8:
            raise ValueError("n_episodes must be at least 8")
        if not self.exploration_budget > 0:
            raise ValueError("exploration_budget must be positive")
        if self.budget_split not in ("half-half", "quarter-quarter-half"):
            raise ValueError(f"unknown budget_split {self.budget_split!r}")
        if not 0 < self.delta <= 0.25:
            raise ValueError("delta must lie in (0, 1/4]")
        if not 0.25 < self.alpha <= 0.5:
            raise ValueError("alpha must lie in (1/4, 1/2]")
        if self.fit_init is not None:
            self.fit_init = np.atleast_1d(np.asarray(self.fit_init, float))

    def stage_budgets(self) -> tuple[int, int, int]:
        """(initial, design, mixture) episode budgets."""
        n = self.n_episodes
        if self.budget_split == "half-half":
            return n // 2, n // 2, 0
        return n // 4, n // 4, n // 2

    def resolved_fit_init(self, model: SystemModel) -> np.ndarray:
        if self.fit_init is None:
            return np.zeros(model.param_dim)
        return self.fit_init.copy()


@dataclass
class StageRecord:
    name: str
    episodes: int
    wall_ms: float


@dataclass(eq=False)
class AlcoiReport:
    """Everything a run produced, including per-stage accounting."""

    objective_kind: str
    seed: int
    n_episodes: int
    phi_coarse: np.ndarray
    phi_refined: np.ndarray
    confidence_radius: float
    curvature: np.ndarray | None
    ridge: float
    b_phi: float | None
    design_trace: list[float]
    n_design_policies: int
    theta: np.ndarray
    excess_cost: float
    stages: list[StageRecord]
    messages: list[str] = field(default_factory=list)
    datasets: dict[str, EpisodeDataset] = field(default_factory=dict)

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else np.asarray(a).tolist()

        return {
            "objective_kind": self.objective_kind,
            "seed": self.seed,
            "n_episodes": self.n_episodes,
            "phi_coarse": arr(self.phi_coarse),
            "phi_refined": arr(self.phi_refined),
            "confidence_radius": self.confidence_radius,
            "curvature": arr(self.curvature),
            "ridge": self.ridge,
            "b_phi": self.b_phi,
            "design_trace": list(self.design_trace),
            "n_design_policies": self.n_design_policies,
            "theta": arr(self.theta),
            "excess_cost": self.excess_cost,
            "stages": [
                {"name": s.name, "episodes": s.episodes, "wall_ms": s.wall_ms}
                for s in self.stages
            ],
            "messages": list(self.messages),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclass(eq=False)
class TrueSystemSampler:
    """Episode source for the design loop: simulates the (held-out) true system."""

    model: SystemModel
    phi_star: np.ndarray

    def __call__(self, policy: Policy, n_episodes: int, seed: SeedLike):
        return rollout_batch(self.model, policy, self.phi_star, n_episodes, seed)


def _fit_with_fallback(data, model, init, opts, messages: list[str]) -> FitResult:
    try:
        return least_squares_fit(data, model, init, opts)
    except ConvergenceError as err:
        messages.append(f"fit did not meet the gradient tolerance: {err}")
        return err.best


def _operator_norm(matrix: np.ndarray) -> float:
    eigs = np.linalg.eigvalsh(0.5 * (matrix + matrix.T))
    return float(np.max(np.abs(eigs)))


def run_alcoi(
    problem: ControlProblem,
    phi_star,
    initial_policy: Policy,
    cfg: AlcoiConfig,
    seed: int,
    *,
    objective_hessian: np.ndarray | None = None,
    objective_kind: str = "control-oriented",
    coarse_phi_override: np.ndarray | None = None,
    mixture_override: Policy | None = None,
) -> AlcoiReport:
    """Run the full staged pipeline against the system ``phi_star``.

    ``objective_hessian`` substitutes the measured task curvature (the
    task-agnostic baseline passes the identity). The two override arguments
    exist for diagnostics: pinning the coarse estimate or replacing the
    refit-stage policy bypasses the corresponding stage without changing the
    seeding of the others.
    """
    model = problem.model
    phi_star = np.asarray(phi_star, float)
    messages: list[str] = []
    stages: list[StageRecord] = []
    datasets: dict[str, EpisodeDataset] = {}
    sampler = TrueSystemSampler(model, phi_star)
    n_initial, n_design, n_mixture = cfg.stage_budgets()
    if n_initial < 1 or n_design < 1:
        raise ValueError(f"n_episodes={cfg.n_episodes} is too small for split {cfg.budget_split}")

    t0 = time.perf_counter()
    coarse_data = EpisodeDataset(sampler(initial_policy, n_initial, child_seed(seed, STAGE_COARSE)))
    datasets["initial"] = coarse_data
    if coarse_phi_override is not None:
        phi_coarse = np.asarray(coarse_phi_override, float)
        messages.append("coarse estimate overridden")
    else:
        phi_coarse = _fit_with_fallback(
            coarse_data, model, cfg.resolved_fit_init(model), cfg.fit_options, messages
        ).phi
    stages.append(StageRecord("initial", n_initial, (time.perf_counter() - t0) * 1e3))

    radius = confidence_radius(
        cfg.n_episodes,
        noise_std=model.noise_std,
        horizon=model.horizon,
        state_dim=model.state_dim,
        param_dim=model.param_dim,
        delta=cfg.delta,
        alpha=cfg.alpha,
        lf=cfg.lf,
    )

    t0 = time.perf_counter()
    if objective_hessian is not None:
        curvature = np.asarray(objective_hessian, float)
    else:
        curvature = model_task_hessian(
            problem,
            phi_coarse,
            n_mc=cfg.curvature_n_mc,
            fd_step=cfg.curvature_fd_step,
            seed=child_seed(seed, STAGE_CURVATURE),
            opts=cfg.synthesis_options,
        ).matrix
    ridge = regularizer(
        curvature,
        mode=cfg.ridge_mode,
        fixed_value=cfg.ridge_value,
        lambda_min_star=cfg.lambda_min_star,
    )
    curvature_norm = _operator_norm(curvature)
    if curvature_norm <= 1e-12:
        # A numerically zero curvature would zero out the design reward's
        # scale; flooring it keeps the loop well posed (the reward itself is
        # still ~0, so design degenerates gracefully).
        curvature_norm = 1e-12
        messages.append("curvature norm is numerically zero; floored the smoothness bound")
    b_phi = model.horizon * cfg.lf**2 * curvature_norm / ridge**2
    stages.append(StageRecord("curvature", 0, (time.perf_counter() - t0) * 1e3))

    t0 = time.perf_counter()
    objective = DesignObjective(curvature, ridge)
    if n_design >= 8:
        design = doed_plus(
            objective,
            n_design,
            initial_policy,
            phi_coarse,
            model,
            b_phi,
            sampler,
            child_seed(seed, STAGE_DESIGN),
            budget=cfg.exploration_budget,
            n_samples=cfg.n_shooting,
        )
        design_data = design.dataset
        design_policies = design.policies
        design_trace = design.objective_trace
        design_used = design.episodes_used
    else:
        # Too few episodes for the design schedule: spend the stage budget on
        # the initial policy so the split arithmetic still holds.
        eps = sampler(initial_policy, n_design, child_seed(seed, STAGE_DESIGN))
        design_data = EpisodeDataset(eps)
        design_policies = []
        from .estimation import empirical_gram

        design_trace = [objective.value(empirical_gram(design_data, model, phi_coarse).matrix)]
        design_used = n_design
        messages.append("design budget below the schedule minimum; played the initial policy")
    datasets["design"] = design_data
    stages.append(StageRecord("design", design_used, (time.perf_counter() - t0) * 1e3))

    if mixture_override is not None:
        mixture: Policy = mixture_override
    elif design_policies:
        mixture = build_mixture(initial_policy, design_policies)
    else:
        mixture = initial_policy

    t0 = time.perf_counter()
    if n_mixture > 0:
        refit_data = EpisodeDataset(sampler(mixture, n_mixture, child_seed(seed, STAGE_MIXTURE)))
        datasets["mixture"] = refit_data
    else:
        refit_data = coarse_data.merged(design_data)
    # The refit is warm-started at the coarse estimate, which replaces the
    # multi-start search.
    refit_opts = replace(cfg.fit_options, n_starts=1)
    phi_refined = _fit_with_fallback(refit_data, model, phi_coarse, refit_opts, messages).phi
    stages.append(StageRecord("refit", n_mixture, (time.perf_counter() - t0) * 1e3))

    t0 = time.perf_counter()
    theta = synthesize_ce(problem, phi_refined, cfg.synthesis_options)
    excess = excess_cost(
        problem,
        phi_refined,
        phi_star,
        cfg.eval_n_mc,
        child_seed(seed, STAGE_EVAL),
        cfg.synthesis_options,
    )
    stages.append(StageRecord("evaluate", 0, (time.perf_counter() - t0) * 1e3))

    return AlcoiReport(
        objective_kind=objective_kind,
        seed=int(seed),
        n_episodes=cfg.n_episodes,
        phi_coarse=phi_coarse,
        phi_refined=phi_refined,
        confidence_radius=radius,
        curvature=curvature,
        ridge=ridge,
        b_phi=b_phi,
        design_trace=list(design_trace),
        n_design_policies=len(design_policies),
        theta=theta,
        excess_cost=excess,
        stages=stages,
        messages=messages,
        datasets=datasets,
    )


def run_baseline_aopt(
    problem: ControlProblem,
    phi_star,
    initial_policy: Policy,
    cfg: AlcoiConfig,
    seed: int,
) -> AlcoiReport:
    """Task-agnostic variant: the design objective weighs all directions equally."""
    return run_alcoi(
        problem,
        phi_star,
        initial_policy,
        cfg,
        seed,
        objective_hessian=np.eye(problem.model.param_dim),
        objective_kind="A-optimal",
    )


def run_baseline_random(
    problem: ControlProblem,
    phi_star,
    cfg: AlcoiConfig,
    seed: int,
) -> AlcoiReport:
    """Spend the whole budget on energy-normalized random excitation."""
    model = problem.model
    phi_star = np.asarray(phi_star, float)
    messages: list[str] = []
    policy = RandomEnergy(cfg.exploration_budget)
    t0 = time.perf_counter()
    data = EpisodeDataset(
        rollout_batch(model, policy, phi_star, cfg.n_episodes, child_seed(seed, STAGE_COARSE))
    )
    fit = _fit_with_fallback(data, model, cfg.resolved_fit_init(model), cfg.fit_options, messages)
    collect_ms = (time.perf_counter() - t0) * 1e3
    radius = confidence_radius(
        cfg.n_episodes,
        noise_std=model.noise_std,
        horizon=model.horizon,
        state_dim=model.state_dim,
        param_dim=model.param_dim,
        delta=cfg.delta,
        alpha=cfg.alpha,
        lf=cfg.lf,
    )
    t0 = time.perf_counter()
    theta = synthesize_ce(problem, fit.phi, cfg.synthesis_options)
    excess = excess_cost(
        problem,
        fit.phi,
        phi_star,
        cfg.eval_n_mc,
        child_seed(seed, STAGE_EVAL),
        cfg.synthesis_options,
    )
    eval_ms = (time.perf_counter() - t0) * 1e3
    return AlcoiReport(
        objective_kind="random",
        seed=int(seed),
        n_episodes=cfg.n_episodes,
        phi_coarse=fit.phi,
        phi_refined=fit.phi,
        confidence_radius=radius,
        curvature=None,
        ridge=float("nan"),
        b_phi=None,
        design_trace=[],
        n_design_policies=0,
        theta=theta,
        excess_cost=excess,
        stages=[
            StageRecord("collect-and-fit", cfg.n_episodes, collect_ms),
            StageRecord("evaluate", 0, eval_ms),
        ],
        messages=messages,
        datasets={"all": data},
    )
