"""Task-weighted experiment design over exploration policies.

The design state is a Gram matrix ``lam`` summarizing collected excitation.
The objective ``trace(H (lam + ridge I)^-1)`` scores how well that excitation
pins down the directions the task cost actually cares about (``H`` is the task
curvature; ``H = I`` recovers the task-agnostic variant). The loop is a
conditional-gradient scheme: linearize the objective in ``lam``, turn the
linearization into a per-step exploration reward, synthesize a
receding-horizon policy for it, collect episodes, and average the new Gram
into the design state with a decaying weight.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .dynamics import (
    Mixture,
    Policy,
    RecedingHorizon,
    SeedLike,
    SystemModel,
    Trajectory,
    as_seed_sequence,
    child_seed,
    param_jacobian,
)
from .estimation import EpisodeDataset, GramMatrix, empirical_gram


def _as_matrix(gram) -> np.ndarray:
    if isinstance(gram, GramMatrix):
        return gram.matrix
    return np.asarray(gram, float)


@dataclass(eq=False)
class DesignObjective:
    """``value(lam) = trace(hessian @ inv(lam + ridge I))`` with ``ridge > 0``."""

    hessian: np.ndarray
    ridge: float

    def __post_init__(self):
        self.hessian = np.asarray(self.hessian, float)
        if self.hessian.ndim != 2 or self.hessian.shape[0] != self.hessian.shape[1]:
            raise ValueError("hessian must be square")
        if not self.ridge > 0:
            raise ValueError("ridge must be positive")

    @property
    def dim(self) -> int:
        return self.hessian.shape[0]

    def value(self, gram) -> float:
        lam = _as_matrix(gram)
        m = lam + self.ridge * np.eye(self.dim)
        return float(np.trace(np.linalg.solve(m, self.hessian)))


def design_gradient(objective: DesignObjective, gram) -> np.ndarray:
    """Gradient of the design objective in the Gram matrix.

    Closed form ``-(lam + ridge I)^-1 H (lam + ridge I)^-1``, symmetrized
    against roundoff. Negative semidefinite whenever ``H`` is PSD.
    """
    lam = _as_matrix(gram)
    m = lam + objective.ridge * np.eye(objective.dim)
    inner = np.linalg.solve(m, objective.hessian)
    grad = -np.linalg.solve(m, inner.T).T
    return 0.5 * (grad + grad.T)


@dataclass(eq=False)
class ExplorationCost:
    """Per-step design reward ``c(x, u) = trace(Df xi Df^T) / scale``.

    ``xi`` is a design-objective gradient, so the cost is nonpositive and
    minimizing it steers toward informative states.
    """

    model: SystemModel
    phi: np.ndarray
    xi: np.ndarray
    scale: float

    def __post_init__(self):
        self.phi = np.asarray(self.phi, float)
        self.xi = np.asarray(self.xi, float)
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    def __call__(self, x, u) -> np.ndarray:
        jac = param_jacobian(self.model, x, u, self.phi)
        return np.einsum("...ij,jk,...ik->...", jac, self.xi, jac) / self.scale


def exploration_stage_cost(model: SystemModel, phi_hat, xi, b_phi: float) -> ExplorationCost:
    return ExplorationCost(model, phi_hat, xi, float(b_phi))


def receding_horizon_explore(
    model: SystemModel,
    phi_hat,
    stage_cost: Callable[[np.ndarray, np.ndarray], np.ndarray],
    budget: float,
    n_samples: int = 100,
    warm_start: bool = True,
) -> RecedingHorizon:
    """Build the sampling-based replanning policy for a per-step design cost."""
    return RecedingHorizon(
        phi=np.asarray(phi_hat, float),
        stage_cost=stage_cost,
        budget=float(budget),
        n_samples=int(n_samples),
        warm_start=warm_start,
    )


def doed_schedule(n_episodes: int) -> tuple[int, int, tuple[float, ...]]:
    """Episode split for the design loop.

    Returns ``(per_epoch, n_design_epochs, step_sizes)`` where
    ``per_epoch = floor(n^(2/3))``, ``n_design_epochs = floor(n^(1/3)) - 1``,
    and epoch ``k`` (1-based) averages with weight ``1 / (k + 1)``. The floor
    arithmetic is integer-exact.
    """
    if n_episodes < 8:
        raise ValueError("the design loop needs at least 8 episodes")
    per_epoch = _floor_root_power(n_episodes, 2, 3)
    cube = _floor_root_power(n_episodes, 1, 3)
    n_epochs = cube - 1
    gammas = tuple(1.0 / (k + 1) for k in range(1, n_epochs + 1))
    return per_epoch, n_epochs, gammas


def _floor_root_power(n: int, num: int, den: int) -> int:
    """floor(n ** (num/den)) without float-precision surprises."""
    m = int(round(float(n) ** (num / den)))
    target = n**num
    while (m + 1) ** den <= target:
        m += 1
    while m > 0 and m**den > target:
        m -= 1
    return m


@dataclass(eq=False)
class DesignResult:
    policies: list[RecedingHorizon]
    final_gram: GramMatrix
    objective_trace: list[float]
    dataset: EpisodeDataset
    episodes_used: int


def doed_plus(
    objective: DesignObjective,
    n_episodes: int,
    initial_policy: Policy,
    phi_hat,
    model: SystemModel,
    b_phi: float,
    collect: Callable[[Policy, int, SeedLike], list[Trajectory]],
    seed: SeedLike,
    budget: float,
    n_samples: int = 100,
    warm_start: bool = True,
) -> DesignResult:
    """Run the iterative design loop within an episode budget.

    ``collect(policy, n, seed)`` supplies episodes from the system being
    identified; the loop itself never sees the true parameter, so a simulator
    stub works as well as hardware. Epoch 0 plays ``initial_policy``; each
    later epoch synthesizes a receding-horizon policy for the current
    linearized objective and averages its empirical Gram (per-episode mean,
    evaluated at ``phi_hat``) into the design state.
    """
    phi_hat = np.asarray(phi_hat, float)
    per_epoch, n_epochs, gammas = doed_schedule(n_episodes)
    ss = as_seed_sequence(seed)

    episodes = list(collect(initial_policy, per_epoch, child_seed(ss, 0)))
    lam = empirical_gram(EpisodeDataset(episodes), model, phi_hat).matrix
    trace = [objective.value(lam)]
    policies: list[RecedingHorizon] = []
    for k in range(1, n_epochs + 1):
        xi = design_gradient(objective, lam)
        cost = exploration_stage_cost(model, phi_hat, xi, b_phi)
        policy = receding_horizon_explore(model, phi_hat, cost, budget, n_samples, warm_start)
        new_eps = list(collect(policy, per_epoch, child_seed(ss, k)))
        gram_k = empirical_gram(EpisodeDataset(new_eps), model, phi_hat).matrix
        gamma = gammas[k - 1]
        lam = (1.0 - gamma) * lam + gamma * gram_k
        trace.append(objective.value(lam))
        policies.append(policy)
        episodes.extend(new_eps)
    return DesignResult(
        policies=policies,
        final_gram=GramMatrix(lam, "per-episode-mean"),
        objective_trace=trace,
        dataset=EpisodeDataset(episodes),
        episodes_used=per_epoch * (n_epochs + 1),
    )


def build_mixture(initial_policy: Policy, policies: Sequence[Policy]) -> Mixture:
    """Mix the initial policy (weight 1/2) with the designed policies (equal shares)."""
    policies = list(policies)
    if not policies:
        raise ValueError("need at least one designed policy")
    k = len(policies)
    probs = [0.5] + [0.5 / k] * k
    return Mixture(components=[initial_policy] + policies, probs=probs)
