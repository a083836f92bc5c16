"""Certainty-equivalent controller synthesis and task curvature.

A control problem fixes a cost structure over episodes and a policy class
parameterized by ``theta``. ``synthesize_ce`` returns the cost-minimizing
``theta`` for a given model parameter, either through a Monte Carlo optimizer
or through a problem-supplied closed form. ``model_task_hessian`` measures,
by nested central differences with shared noise draws, how quickly the
task cost degrades when the synthesis model is wrong; its output drives
exploration design.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize

from .dynamics import Policy, SeedLike, SystemModel, rollout_arrays


class SynthesisError(RuntimeError):
    pass


class CurvatureWarning(UserWarning):
    """The curvature stencil looks inconsistent with a smooth local minimum."""


@dataclass(eq=False)
class ControlProblem:
    """An episodic control task over a parameterized system.

    Arguments
    ---------
    model:
        The system the policies act on.
    stage_cost:
        ``c(t, x, u) -> cost`` for steps ``t = 0..horizon-1``; must broadcast
        over leading batch dimensions of ``x`` and ``u``.
    terminal_cost:
        ``c(x) -> cost`` charged on the final state, broadcasting likewise.
    make_policy:
        Maps a parameter vector ``theta`` to a policy.
    theta_dim:
        Dimension of ``theta``.
    synthesis_mode:
        ``"generic-optimizer"`` runs a multi-start numerical minimization of
        the Monte Carlo cost; ``"benchmark-analytic"`` calls
        ``analytic_synthesis`` instead.
    analytic_synthesis:
        Closed-form map from a model parameter to ``theta``; required by the
        analytic mode.
    theta_init:
        Start point for the generic optimizer (defaults to zeros).
    """

    model: SystemModel
    stage_cost: Callable[[int, np.ndarray, np.ndarray], np.ndarray]
    terminal_cost: Callable[[np.ndarray], np.ndarray]
    make_policy: Callable[[np.ndarray], Policy]
    theta_dim: int
    synthesis_mode: str = "generic-optimizer"
    analytic_synthesis: Callable[[np.ndarray], np.ndarray] | None = None
    theta_init: np.ndarray | None = None

    def __post_init__(self):
        if self.synthesis_mode not in ("generic-optimizer", "benchmark-analytic"):
            raise ValueError(f"unknown synthesis_mode {self.synthesis_mode!r}")
        if self.synthesis_mode == "benchmark-analytic" and self.analytic_synthesis is None:
            raise ValueError("benchmark-analytic mode requires analytic_synthesis")


@dataclass
class SynthesisOptions:
    """Settings for the generic Monte Carlo optimizer.

    The cost surface is evaluated with ``n_mc`` episodes under a fixed seed,
    so the optimizer sees a deterministic function of ``theta``.
    """

    n_mc: int = 256
    seed: int = 0
    n_starts: int = 3
    start_scale: float = 0.5
    grad_tol: float = 1e-6
    max_iter: int = 200


def evaluate_cost(problem: ControlProblem, theta, phi, n_mc: int, seed: SeedLike) -> float:
    """Monte Carlo estimate of the expected episode cost of policy ``theta`` under ``phi``.

    The same ``seed`` reproduces the same noise draws regardless of ``theta``
    or ``phi``, so paired comparisons share randomness.
    """
    policy = problem.make_policy(np.asarray(theta, float))
    states, inputs = rollout_arrays(problem.model, policy, np.asarray(phi, float), n_mc, seed)
    total = np.zeros(states.shape[0])
    for t in range(problem.model.horizon):
        total += np.asarray(problem.stage_cost(t, states[:, t], inputs[:, t]), float)
    total += np.asarray(problem.terminal_cost(states[:, -1]), float)
    return float(np.mean(total))


def synthesize_ce(
    problem: ControlProblem,
    phi,
    opts: SynthesisOptions | None = None,
) -> np.ndarray:
    """Certainty-equivalent synthesis: the best ``theta`` for the model ``phi``."""
    phi = np.asarray(phi, float)
    if problem.synthesis_mode == "benchmark-analytic":
        theta = np.asarray(problem.analytic_synthesis(phi), float)
        if theta.shape != (problem.theta_dim,):
            raise SynthesisError(f"analytic synthesis returned shape {theta.shape}")
        return theta
    opts = opts or SynthesisOptions()

    def objective(theta):
        return evaluate_cost(problem, theta, phi, opts.n_mc, opts.seed)

    init = (
        np.zeros(problem.theta_dim)
        if problem.theta_init is None
        else np.asarray(problem.theta_init, float)
    )
    rng = np.random.default_rng(opts.seed)
    best = None
    for s in range(max(1, opts.n_starts)):
        x0 = init if s == 0 else init + opts.start_scale * (1.0 + np.abs(init)) * rng.standard_normal(init.shape)
        res = optimize.minimize(
            objective,
            x0,
            method="BFGS",
            options={"gtol": opts.grad_tol, "maxiter": opts.max_iter},
        )
        if best is None or res.fun < best.fun:
            best = res
    if best is None or not np.all(np.isfinite(best.x)):
        raise SynthesisError("optimizer failed to produce a finite parameter")
    return np.asarray(best.x, float)


def excess_cost(
    problem: ControlProblem,
    phi_hat,
    phi_star,
    n_mc: int,
    seed: SeedLike,
    opts: SynthesisOptions | None = None,
) -> float:
    """Cost of the policy synthesized from ``phi_hat``, evaluated on ``phi_star``,
    minus the cost of the policy synthesized from ``phi_star`` itself.

    Both evaluations share noise draws. The Monte Carlo difference may come out
    slightly negative; it is reported as computed.
    """
    theta_hat = synthesize_ce(problem, phi_hat, opts)
    theta_star = synthesize_ce(problem, phi_star, opts)
    return evaluate_cost(problem, theta_hat, phi_star, n_mc, seed) - evaluate_cost(
        problem, theta_star, phi_star, n_mc, seed
    )


@dataclass(eq=False)
class CurvatureEstimate:
    """Second-difference estimate of the task cost's sensitivity to the model."""

    matrix: np.ndarray
    fd_steps: np.ndarray
    n_mc: int


def model_task_hessian(
    problem: ControlProblem,
    phi_tilde,
    n_mc: int = 256,
    fd_step: float = 1e-2,
    seed: SeedLike = 0,
    opts: SynthesisOptions | None = None,
) -> CurvatureEstimate:
    """Curvature of ``phi -> cost(policy synthesized from phi, evaluated under phi_tilde)``.

    Synthesis is re-run at every stencil point; every cost evaluation shares
    the same noise draws, so the differences are not dominated by Monte Carlo
    scatter. The per-coordinate step is ``fd_step * (1 + |phi_tilde_i|)`` and
    the result is symmetrized.
    """
    phi_tilde = np.atleast_1d(np.asarray(phi_tilde, float))
    d = phi_tilde.shape[0]
    steps = fd_step * (1.0 + np.abs(phi_tilde))
    cache: dict[tuple[int, ...], float] = {}

    def g(offset: tuple[int, ...]) -> float:
        if offset not in cache:
            phi = phi_tilde + steps * np.asarray(offset, float)
            theta = synthesize_ce(problem, phi, opts)
            cache[offset] = evaluate_cost(problem, theta, phi_tilde, n_mc, seed)
        return cache[offset]

    def unit(i, sign):
        e = [0] * d
        e[i] = sign
        return tuple(e)

    center = g(tuple([0] * d))
    H = np.empty((d, d))
    for i in range(d):
        H[i, i] = (g(unit(i, 1)) - 2.0 * center + g(unit(i, -1))) / steps[i] ** 2
    for i in range(d):
        for j in range(i + 1, d):
            pp = np.asarray(unit(i, 1)) + np.asarray(unit(j, 1))
            pm = np.asarray(unit(i, 1)) + np.asarray(unit(j, -1))
            mp = np.asarray(unit(i, -1)) + np.asarray(unit(j, 1))
            mm = np.asarray(unit(i, -1)) + np.asarray(unit(j, -1))
            H[i, j] = H[j, i] = (
                g(tuple(pp)) - g(tuple(pm)) - g(tuple(mp)) + g(tuple(mm))
            ) / (4.0 * steps[i] * steps[j])
    H = 0.5 * (H + H.T)
    _warn_on_inconsistent_stencil(H, cache.values())
    return CurvatureEstimate(H, steps, n_mc)


def _warn_on_inconsistent_stencil(H: np.ndarray, values) -> None:
    # The stencil center is a synthesis optimum, so strongly negative diagonal
    # curvature (or a non-finite cost) means synthesis jumped between local
    # minima somewhere on the stencil rather than varying smoothly.
    vals = np.asarray(list(values), float)
    if not np.all(np.isfinite(vals)):
        warnings.warn("non-finite cost on the curvature stencil", CurvatureWarning)
        return
    diag = np.diag(H)
    scale = float(np.max(np.abs(diag))) if diag.size else 0.0
    if scale > 0 and float(np.min(diag)) < -0.01 * scale:
        warnings.warn(
            "negative diagonal curvature at a synthesis optimum; synthesis may be "
            "switching basins across the stencil",
            CurvatureWarning,
        )
