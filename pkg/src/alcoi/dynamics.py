"""Episodic simulation of parameterized nonlinear systems.

A system is a discrete-time map ``x_next = f(x, u, phi) + w`` with additive
isotropic Gaussian process noise ``w ~ N(0, noise_std^2 I)``. Episodes start
from a fixed initial state (zero unless the model overrides it) and run for a
fixed horizon.

Every stochastic operation is a pure function of an integer seed. Episode ``k``
of a batch draws from a stream derived from ``(seed, k)``, so batches are
reproducible, order-independent, and prefix-stable: rerunning with a larger
``n_episodes`` leaves earlier episodes unchanged.

Dynamics callables must broadcast over leading batch dimensions. To keep
batched and one-at-a-time rollouts bitwise identical, implementations should
stick to elementwise operations and last-axis reductions (``np.sum(..., -1)``
rather than BLAS matmul) in both dynamics and feedback laws.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence, Union

import numpy as np


class DynamicsError(RuntimeError):
    """Base class for failures raised while evaluating or simulating a system."""


class RolloutDivergedError(DynamicsError):
    """A simulated state became non-finite."""

    def __init__(self, step: int, episode: int | None = None):
        self.step = step
        self.episode = episode
        where = f"step {step}" if episode is None else f"episode {episode}, step {step}"
        super().__init__(f"rollout produced a non-finite state at {where}")


SeedLike = Union[int, np.random.SeedSequence]


def as_seed_sequence(seed: SeedLike) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(int(seed))


def child_seed(seed: SeedLike, *key: int) -> np.random.SeedSequence:
    """Derive a sub-stream from ``seed`` keyed by integers, without mutating it."""
    ss = as_seed_sequence(seed)
    return np.random.SeedSequence(entropy=ss.entropy, spawn_key=tuple(ss.spawn_key) + key)


@dataclass(eq=False)
class SystemModel:
    """Parameterized dynamics plus the episode protocol constants.

    Arguments
    ---------
    state_dim, input_dim, param_dim:
        Dimensions of states ``x``, inputs ``u``, and parameters ``phi``.
    dynamics_fn:
        ``f(x, u, phi) -> x_next`` (noise-free part). Must broadcast over
        leading batch dimensions of ``x`` and ``u``.
    noise_std:
        Standard deviation of the additive Gaussian process noise.
    horizon:
        Number of inputs per episode; episodes visit ``horizon + 1`` states.
    param_jacobian_fn:
        Optional analytic Jacobian of ``f`` with respect to ``phi``, with
        shape ``(..., state_dim, param_dim)``. Central finite differences are
        used when absent.
    initial_state:
        Episode start state; defaults to the origin.
    """

    state_dim: int
    input_dim: int
    param_dim: int
    dynamics_fn: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    noise_std: float
    horizon: int
    param_jacobian_fn: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray] | None = None
    initial_state: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        if min(self.state_dim, self.input_dim) < 1 or self.param_dim < 0:
            raise ValueError("state_dim and input_dim must be positive, param_dim nonnegative")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")
        if self.initial_state is not None:
            x0 = np.asarray(self.initial_state, float).reshape(self.state_dim)
            self.initial_state = x0

    def initial(self) -> np.ndarray:
        if self.initial_state is None:
            return np.zeros(self.state_dim)
        return self.initial_state.copy()


def finite_diff_param_jacobian(
    model: SystemModel,
    x: np.ndarray,
    u: np.ndarray,
    phi: np.ndarray,
    step: float = 1e-5,
) -> np.ndarray:
    """Central-difference Jacobian of the dynamics with respect to ``phi``.

    The per-coordinate step is ``step * (1 + |phi_i|)``.
    """
    phi = np.asarray(phi, float)
    x = np.asarray(x, float)
    u = np.asarray(u, float)
    base = np.asarray(model.dynamics_fn(x, u, phi), float)
    jac = np.empty(base.shape + (model.param_dim,))
    for i in range(model.param_dim):
        h = step * (1.0 + abs(phi[i]))
        hi = phi.copy()
        lo = phi.copy()
        hi[i] += h
        lo[i] -= h
        fi = np.asarray(model.dynamics_fn(x, u, hi), float)
        fl = np.asarray(model.dynamics_fn(x, u, lo), float)
        jac[..., i] = (fi - fl) / (2.0 * h)
    return jac


def param_jacobian(model: SystemModel, x, u, phi, fd_step: float = 1e-5) -> np.ndarray:
    """Jacobian of the dynamics with respect to ``phi``; analytic when available."""
    if model.param_jacobian_fn is not None:
        return np.asarray(model.param_jacobian_fn(np.asarray(x, float), np.asarray(u, float), np.asarray(phi, float)), float)
    return finite_diff_param_jacobian(model, x, u, phi, step=fd_step)


@dataclass(eq=False)
class Trajectory:
    """One episode: ``states`` has shape (T+1, state_dim), ``inputs`` (T, input_dim)."""

    states: np.ndarray
    inputs: np.ndarray

    def __post_init__(self):
        self.states = np.asarray(self.states, float)
        self.inputs = np.asarray(self.inputs, float)
        if self.states.ndim != 2 or self.inputs.ndim != 2:
            raise ValueError("states and inputs must be 2-D arrays")
        if self.states.shape[0] != self.inputs.shape[0] + 1:
            raise ValueError("states must hold exactly one more row than inputs")

    @property
    def horizon(self) -> int:
        return self.inputs.shape[0]

    def transitions(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return (X, U, X_next) with one row per simulated step."""
        return self.states[:-1], self.inputs, self.states[1:]


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------
#
# A policy builds a per-episode controller ``act(t, x) -> u``. Controllers may
# be stateful within the episode (warm starts, energy accounting). Random
# choices consume the episode's policy stream, which is separate from the
# noise stream so that control-variate comparisons share noise draws.


@dataclass(eq=False)
class ParametricFeedback:
    """Static feedback ``u = feedback_fn(theta, x)``.

    ``feedback_fn`` must broadcast over leading batch dimensions of ``x`` and
    may precompute constants derived from ``theta``.
    """

    theta: np.ndarray
    feedback_fn: Callable[[np.ndarray, np.ndarray], np.ndarray]

    def __post_init__(self):
        self.theta = np.atleast_1d(np.asarray(self.theta, float))

    def make_controller(self, model: SystemModel, rng: np.random.Generator):
        def act(t, x):
            return self.feedback_fn(self.theta, x)

        return act


@dataclass(eq=False)
class RandomEnergy:
    """Open-loop excitation: iid standard-normal inputs rescaled to an exact energy.

    The episode draws ``horizon`` input vectors and rescales them so the total
    energy ``sum_t ||u_t||^2`` equals ``budget`` exactly.
    """

    budget: float

    def sample_inputs(self, model: SystemModel, rng: np.random.Generator) -> np.ndarray:
        u = rng.standard_normal((model.horizon, model.input_dim))
        total = float(np.sum(u * u))
        if total > 0.0 and self.budget >= 0.0:
            u *= np.sqrt(self.budget / total)
        return u

    def make_controller(self, model: SystemModel, rng: np.random.Generator):
        inputs = self.sample_inputs(model, rng)

        def act(t, x):
            return inputs[t]

        return act


@dataclass(eq=False)
class RecedingHorizon:
    """Replanning-by-sampling exploration under a fitted model.

    At each step the controller draws ``n_samples`` candidate input tails,
    rescales each to the remaining energy budget, simulates them noiselessly
    under ``phi``, and plays the first input of the cheapest tail under
    ``stage_cost``. The previous solution's shifted tail is kept as an extra
    warm-start candidate, ordered first so it wins ties; among the fresh
    candidates the lowest index wins. With the budget exhausted the controller
    plays zero inputs.
    """

    phi: np.ndarray
    stage_cost: Callable[[np.ndarray, np.ndarray], np.ndarray]
    budget: float
    n_samples: int = 100
    warm_start: bool = True

    def __post_init__(self):
        self.phi = np.asarray(self.phi, float)
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")

    def make_controller(self, model: SystemModel, rng: np.random.Generator):
        return _ShootingController(self, model, rng)


class _ShootingController:
    def __init__(self, policy: RecedingHorizon, model: SystemModel, rng: np.random.Generator):
        self.policy = policy
        self.model = model
        self.rng = rng
        self.spent = 0.0
        self.prev_tail: np.ndarray | None = None

    def __call__(self, t: int, x: np.ndarray) -> np.ndarray:
        pol, model = self.policy, self.model
        tail = model.horizon - t
        remaining = pol.budget - self.spent
        if remaining <= 1e-12:
            return np.zeros(model.input_dim)
        draws = self.rng.standard_normal((pol.n_samples, tail, model.input_dim))
        energy = np.sum(draws * draws, axis=(1, 2))
        scale = np.sqrt(remaining / np.maximum(energy, 1e-300))
        candidates = draws * scale[:, None, None]
        if pol.warm_start and self.prev_tail is not None and self.prev_tail.shape[0] == tail:
            candidates = np.concatenate([self.prev_tail[None], candidates], axis=0)
        costs = np.zeros(candidates.shape[0])
        states = np.broadcast_to(x, (candidates.shape[0], model.state_dim)).copy()
        for j in range(tail):
            inputs_j = candidates[:, j]
            costs += np.asarray(pol.stage_cost(states, inputs_j), float)
            states = np.asarray(model.dynamics_fn(states, inputs_j, pol.phi), float)
        best = int(np.argmin(costs))
        u = candidates[best, 0].copy()
        self.prev_tail = candidates[best, 1:].copy()
        self.spent += float(np.sum(u * u))
        return u


@dataclass(eq=False)
class Mixture:
    """Play one component per episode, drawn once at episode start."""

    components: Sequence
    probs: Sequence[float]

    def __post_init__(self):
        self.components = tuple(self.components)
        self.probs = tuple(float(p) for p in self.probs)
        if len(self.components) != len(self.probs) or not self.components:
            raise ValueError("components and probs must be nonempty and equally long")
        if min(self.probs) < 0 or abs(sum(self.probs) - 1.0) > 1e-9:
            raise ValueError("probs must be nonnegative and sum to one")

    def make_controller(self, model: SystemModel, rng: np.random.Generator):
        idx = int(rng.choice(len(self.components), p=np.asarray(self.probs)))
        return self.components[idx].make_controller(model, rng)


Policy = Union[ParametricFeedback, RandomEnergy, RecedingHorizon, Mixture]


# ---------------------------------------------------------------------------
# Rollouts
# ---------------------------------------------------------------------------


def _episode_noise(model: SystemModel, episode_seed: np.random.SeedSequence) -> np.ndarray | None:
    if model.noise_std == 0.0:
        return None
    rng = np.random.default_rng(child_seed(episode_seed, 0))
    return rng.standard_normal((model.horizon, model.state_dim)) * model.noise_std


def _policy_rng(episode_seed: np.random.SeedSequence) -> np.random.Generator:
    return np.random.default_rng(child_seed(episode_seed, 1))


def rollout(model: SystemModel, policy: Policy, phi, seed: SeedLike, episode: int = 0) -> Trajectory:
    """Simulate one episode under ``policy`` with true parameter ``phi``.

    ``episode`` selects which sub-stream of ``seed`` to use, so that
    ``rollout(..., seed, episode=k)`` matches episode ``k`` of
    ``rollout_batch(..., seed)``.
    """
    phi = np.asarray(phi, float)
    ep = child_seed(seed, episode)
    noise = _episode_noise(model, ep)
    controller = policy.make_controller(model, _policy_rng(ep))
    T = model.horizon
    states = np.empty((T + 1, model.state_dim))
    inputs = np.empty((T, model.input_dim))
    x = model.initial()
    states[0] = x
    for t in range(T):
        u = np.asarray(controller(t, x), float).reshape(model.input_dim)
        x_next = np.asarray(model.dynamics_fn(x, u, phi), float).reshape(model.state_dim)
        if noise is not None:
            x_next = x_next + noise[t]
        if not np.all(np.isfinite(x_next)):
            raise RolloutDivergedError(step=t, episode=episode)
        inputs[t] = u
        states[t + 1] = x_next
        x = x_next
    return Trajectory(states, inputs)


def rollout_batch(model: SystemModel, policy: Policy, phi, n_episodes: int, seed: SeedLike) -> list[Trajectory]:
    """Simulate ``n_episodes`` independent episodes.

    Episode ``k`` uses the sub-stream ``(seed, k)``. Open-loop and static
    feedback policies take a vectorized path that is bitwise identical to the
    per-episode path.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be positive")
    phi = np.asarray(phi, float)
    if isinstance(policy, (RandomEnergy, ParametricFeedback)):
        states, inputs = _rollout_ensemble(model, policy, phi, n_episodes, seed)
        return [Trajectory(states[k], inputs[k]) for k in range(n_episodes)]
    return [rollout(model, policy, phi, seed, episode=k) for k in range(n_episodes)]


def rollout_arrays(
    model: SystemModel, policy: Policy, phi, n_episodes: int, seed: SeedLike
) -> tuple[np.ndarray, np.ndarray]:
    """Like :func:`rollout_batch` but returns stacked arrays.

    Returns ``(states, inputs)`` of shapes ``(n, horizon + 1, state_dim)`` and
    ``(n, horizon, input_dim)``. Same episode streams as :func:`rollout_batch`.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be positive")
    phi = np.asarray(phi, float)
    if isinstance(policy, (RandomEnergy, ParametricFeedback)):
        return _rollout_ensemble(model, policy, phi, n_episodes, seed)
    episodes = [rollout(model, policy, phi, seed, episode=k) for k in range(n_episodes)]
    return (
        np.stack([ep.states for ep in episodes]),
        np.stack([ep.inputs for ep in episodes]),
    )


def _hashable_entropy(entropy):
    if isinstance(entropy, (list, tuple, np.ndarray)):
        return tuple(int(v) for v in entropy)
    return entropy


@lru_cache(maxsize=8)
def _ensemble_noise_block(entropy, spawn_key, n, horizon, state_dim, noise_std) -> np.ndarray:
    # Stacked per-episode noise, stream-identical to _episode_noise applied to
    # child k of the seed. Cached because cost evaluation reuses one (seed, n)
    # pair across many parameter points; the array must stay read-only.
    block = np.empty((n, horizon, state_dim))
    for k in range(n):
        ss = np.random.SeedSequence(entropy=entropy, spawn_key=spawn_key + (k, 0))
        block[k] = np.random.default_rng(ss).standard_normal((horizon, state_dim))
    block *= noise_std
    block.setflags(write=False)
    return block


def _rollout_ensemble(model: SystemModel, policy, phi, n: int, seed: SeedLike) -> tuple[np.ndarray, np.ndarray]:
    T, dx, du = model.horizon, model.state_dim, model.input_dim
    noise = None
    if model.noise_std > 0.0:
        ss = as_seed_sequence(seed)
        noise = _ensemble_noise_block(
            _hashable_entropy(ss.entropy), tuple(ss.spawn_key), n, T, dx, model.noise_std
        )
    open_loop = isinstance(policy, RandomEnergy)
    planned = np.empty((n, T, du)) if open_loop else None
    if open_loop:
        for k in range(n):
            planned[k] = policy.sample_inputs(model, _policy_rng(child_seed(seed, k)))
    states = np.empty((n, T + 1, dx))
    inputs = np.empty((n, T, du))
    x = np.tile(model.initial(), (n, 1))
    states[:, 0] = x
    for t in range(T):
        if open_loop:
            u = planned[:, t]
        else:
            u = np.asarray(policy.feedback_fn(policy.theta, x), float).reshape(n, du)
        x_next = np.asarray(model.dynamics_fn(x, u, phi), float).reshape(n, dx)
        if noise is not None:
            x_next = x_next + noise[:, t]
        bad = ~np.all(np.isfinite(x_next), axis=1)
        if np.any(bad):
            raise RolloutDivergedError(step=t, episode=int(np.argmax(bad)))
        inputs[:, t] = u
        states[:, t + 1] = x_next
        x = x_next
    return states, inputs
